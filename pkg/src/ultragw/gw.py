"""Gromov-Wasserstein machinery for ultrametric measure spaces.

Contains the coupling distortion functionals (ultrametric and classical),
the exact polynomial-time solvers for the order-infinity distance and the
Gromov-Hausdorff variant via canonical forms of weighted quotients, a
Frank-Wolfe solver with hit-and-run restarts for finite orders, and a
brute-force solver for Sturm's version at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spaces import (TAU_MASS, TAU_METRIC, UmSpace, dedup_sorted, quotient,
                     spectrum, to_dendrogram, validate)
from .transport import (check_coupling, exact_ot, product_coupling,
                        w_ultrametric)


class SizeCapError(ValueError):
    """Raised when a brute-force solver would exceed its size cap."""


@dataclass
class FwConfig:
    restarts: int = 40
    iterations: int = 5000
    step_rule: str = "exact_line_search"  # or "harmonic"
    hitrun_steps: int = 10
    seed: int = 0
    tol_stationarity: float = 1e-10

    def __post_init__(self):
        if self.restarts < 1 or self.iterations < 1:
            raise ValueError("restarts and iterations must be >= 1")
        if self.step_rule not in ("exact_line_search", "harmonic"):
            raise ValueError("unknown step rule %r" % self.step_rule)


@dataclass
class GwResult:
    value: float
    method: str
    coupling: np.ndarray | None = None
    level: float | None = None
    matching: list | None = None
    trace: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# distortion functionals


def _cost_tensor(X, Y, p, ultra=True):
    """4-tensor of pairwise ground costs raised to the p-th power:
    T[i,j,k,l] = cost(u_X[i,k], u_Y[j,l])^p."""
    a = X.u[:, None, :, None]
    b = Y.u[None, :, None, :]
    if ultra:
        c = np.where(np.abs(a - b) <= TAU_METRIC, 0.0, np.maximum(a, b))
    else:
        c = np.abs(a - b)
    if p == np.inf:
        return c
    return c ** p


def _dis(X, Y, plan, p, ultra):
    plan = check_coupling(plan, X.mu, Y.mu)
    if p == np.inf:
        c = _cost_tensor(X, Y, p, ultra=ultra)
        s = (plan > TAU_MASS).ravel()
        flat = c.reshape(X.n * Y.n, X.n * Y.n)
        return float(flat[np.ix_(s, s)].max())
    t = _cost_tensor(X, Y, p, ultra=ultra)
    val = float(np.einsum("ijkl,ij,kl->", t, plan, plan))
    return max(val, 0.0) ** (1.0 / p)


def dis_ult(X, Y, plan, p):
    """p-distortion of a coupling with the ultrametric ground cost
    max(a,b) on distinct distance values; sup over the support at p=inf."""
    return _dis(X, Y, plan, p, ultra=True)


def dis_classical(X, Y, plan, p):
    """Classical p-distortion of a coupling with ground cost |a-b|.
    Note: the classical GW distance carries a leading 1/2 in front of the
    infimum (see dgw_fw); the ultrametric one does not."""
    return _dis(X, Y, plan, p, ultra=False)


# ---------------------------------------------------------------------------
# canonical forms and the exact order-infinity solvers

CANON_QUANT = 1e-9


def canonical_signature(node, with_mass=True, quant=CANON_QUANT):
    """Recursive order-invariant signature of a merge tree.  Two trees get
    equal signatures iff they are isomorphic as rooted trees with matching
    heights (and masses, unless with_mass is False), at resolution `quant`."""
    if isinstance(node, UmSpace):
        node = to_dendrogram(node)
    qh = int(round(node.height / quant))
    qm = int(round(node.mass / quant)) if with_mass else None
    if node.is_leaf:
        return ("leaf", qh, qm)
    kids = tuple(sorted(canonical_signature(c, with_mass, quant)
                        for c in node.children))
    return ("node", qh, qm, kids)


def _pair_blocks(a, b, qa, qb, with_mass):
    """Given signature-equal quotient dendrograms, pair up their leaves
    (i.e. blocks) by walking children in signature order."""
    def leaf_index(ids):
        return {pid: i for i, pid in enumerate(ids)}

    ia, ib = leaf_index(qa.quotient.ids), leaf_index(qb.quotient.ids)

    def walk(x, y):
        if x.is_leaf:
            return [(qa.blocks[ia[x.id]], qb.blocks[ib[y.id]])]
        kx = sorted(x.children, key=lambda c: canonical_signature(c, with_mass))
        ky = sorted(y.children, key=lambda c: canonical_signature(c, with_mass))
        pairs = []
        for cx, cy in zip(kx, ky):
            pairs.extend(walk(cx, cy))
        return pairs

    return walk(a, b)


def _require_ultrametric(space, name):
    if np.any(np.abs(np.diag(space.u)) > TAU_METRIC):
        raise ValueError("%s must be ultrametric (zero diagonal)" % name)
    rep = validate(space, mode="ultrametric")
    if not rep.ok:
        raise ValueError("%s failed ultrametric validation: %r"
                         % (name, rep.violations[:3]))


def _level_sweep(X, Y, with_mass):
    """Shared sweep for the exact order-infinity solvers: walk the merged
    spectrum downward and return the smallest level at which the quotients
    are isomorphic (weighted isomorphism when with_mass is set)."""
    levels = dedup_sorted(sorted(spectrum(X) + spectrum(Y)))
    passing = None
    pair = None
    for idx, t in enumerate(reversed(levels)):
        qx, qy = quotient(X, t), quotient(Y, t)
        dx, dy = to_dendrogram(qx.quotient), to_dendrogram(qy.quotient)
        same = (canonical_signature(dx, with_mass)
                == canonical_signature(dy, with_mass))
        if not same:
            # the top level collapses both spaces to a single point, so the
            # sweep can only fail strictly below it
            assert idx > 0, "quotients at the top level must be isomorphic"
            break
        passing = float(t)
        pair = _pair_blocks(dx, dy, qx, qy, with_mass)
    return passing, pair


def ugw_inf_exact(X, Y):
    """Exact order-infinity ultrametric GW distance: the smallest level t
    at which the weighted quotients of X and Y at t are isomorphic."""
    _require_ultrametric(X, "X")
    _require_ultrametric(Y, "Y")
    level, pair = _level_sweep(X, Y, with_mass=True)
    return GwResult(value=level, method="ugw-inf", level=level, matching=pair)


def ugh_exact(X, Y):
    """Exact ultrametric Gromov-Hausdorff distance: same sweep as
    ugw_inf_exact but with mass-blind quotient isomorphism."""
    _require_ultrametric(X, "X")
    _require_ultrametric(Y, "Y")
    level, _ = _level_sweep(X, Y, with_mass=False)
    return level


# ---------------------------------------------------------------------------
# hit-and-run sampling of the coupling polytope


def hitrun_couplings(mu, nu, count, steps=10, seed=0, rng=None):
    """Approximately uniform couplings of (mu, nu) by hit-and-run: random
    direction in the null space of the marginal constraints, uniform jump
    on the feasible chord, one coupling emitted every `steps` jumps."""
    from scipy.linalg import null_space

    if count < 1:
        raise ValueError("count must be >= 1")
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    m, n = len(mu), len(nu)
    start = product_coupling(mu, nu)
    if m == 1 or n == 1:
        return [start.copy() for _ in range(count)]
    if rng is None:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    a = np.zeros((m + n, m * n))
    for i in range(m):
        a[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        a[m + j, j::n] = 1.0
    ns = null_space(a)  # (m*n, (m-1)(n-1))
    p = start.ravel().copy()
    out = []
    for _ in range(count):
        for _ in range(steps):
            d = ns @ rng.standard_normal(ns.shape[1])
            norm = np.linalg.norm(d)
            if norm < 1e-14:
                continue
            d /= norm
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = -p / d
            lo = ratios[d > 1e-15]
            hi = ratios[d < -1e-15]
            tmin = lo.max() if lo.size else 0.0
            tmax = hi.min() if hi.size else 0.0
            if tmax - tmin < 1e-15:
                continue
            p = p + rng.uniform(tmin, tmax) * d
            np.clip(p, 0.0, None, out=p)
        out.append(p.reshape(m, n).copy())
    return out


# ---------------------------------------------------------------------------
# Frank-Wolfe for finite orders


def ugw_fw(X, Y, p, cfg=None, cost="ultra"):
    """Frank-Wolfe minimization of the p-th power of the coupling
    distortion.  Multistart: the first initial coupling is the product
    coupling, the rest come from the hit-and-run sampler.  Returns the best
    stationary point found; its value is an upper bound on the distance
    (on twice the classical GW distance in classical mode)."""
    if p == np.inf:
        raise ValueError("use ugw_inf_exact for the order-infinity distance")
    if p < 1:
        raise ValueError("order p must be >= 1")
    if cfg is None:
        cfg = FwConfig()
    if cost not in ("ultra", "classical"):
        raise ValueError("cost must be 'ultra' or 'classical'")
    ultra = cost == "ultra"
    t = _cost_tensor(X, Y, p, ultra=ultra)

    def grad(plan):
        return 2.0 * np.tensordot(t, plan, axes=([2, 3], [0, 1]))

    def value(plan):
        return float(np.einsum("ijkl,ij,kl->", t, plan, plan))

    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    best_val = np.inf
    best_plan = None
    trace = []
    for r in range(cfg.restarts):
        if r == 0:
            plan = product_coupling(X.mu, Y.mu)
        else:
            rng = np.random.Generator(np.random.Philox(seeds[r]))
            plan = hitrun_couplings(X.mu, Y.mu, 1, steps=cfg.hitrun_steps,
                                    rng=rng)[0]
        for it in range(cfg.iterations):
            g = grad(plan)
            _, vert = exact_ot(g, X.mu, Y.mu, p_mode="sum")
            d = vert - plan
            gap = -float((g * d).sum())
            if gap <= cfg.tol_stationarity:
                break
            if cfg.step_rule == "harmonic":
                gamma = 2.0 / (it + 2.0)
            else:
                # dis^p along plan + gamma*d is the quadratic
                # a*gamma^2 + b*gamma + const
                td = np.tensordot(t, d, axes=([2, 3], [0, 1]))
                a = float((td * d).sum())
                b = -gap
                if a > 1e-300:
                    gamma = min(1.0, max(0.0, -b / (2.0 * a)))
                else:
                    gamma = 1.0 if a + b < 0 else 0.0
                if gamma == 0.0:
                    break
            plan = plan + gamma * d
        val = value(plan)
        trace.append(max(val, 0.0) ** (1.0 / p))
        if val < best_val:
            best_val = val
            best_plan = plan
    dis = dis_ult(X, Y, best_plan, p) if ultra else dis_classical(X, Y, best_plan, p)
    return GwResult(value=dis, method="ugw-fw" if ultra else "gw-fw",
                    coupling=best_plan, trace=trace)


def dgw_fw(X, Y, p, cfg=None):
    """Classical GW distance upper bound: half the infimized classical
    distortion (the classical definition carries the 1/2; the ultrametric
    one does not)."""
    res = ugw_fw(X, Y, p, cfg=cfg, cost="classical")
    return GwResult(value=0.5 * res.value, method="dgw-fw",
                    coupling=res.coupling, trace=res.trace)


# ---------------------------------------------------------------------------
# brute-force solver for Sturm's ultrametric GW


def _amalgam(X, Y, phi):
    """Common ultrametric space on X | (Y minus the image of phi), where
    phi maps a subset A of X isometrically into Y.  Distances follow the
    amalgamation rules: X and Y keep their own distances, points of A are
    identified with their images, and X\\A-to-Y distances go through the
    cheapest anchor in A."""
    a_idx = [i for i, y in enumerate(phi) if y is not None]
    used = {phi[i] for i in a_idx}
    rest = [j for j in range(Y.n) if j not in used]
    nz = X.n + len(rest)
    u = np.zeros((nz, nz))
    u[:X.n, :X.n] = X.u
    for rj, j in enumerate(rest):
        col = X.n + rj
        for i in range(X.n):
            if phi[i] is not None:
                d = Y.u[phi[i], j]
            else:
                d = min(max(X.u[i, a], Y.u[phi[a], j]) for a in a_idx)
            u[i, col] = u[col, i] = d
        for rk, k in enumerate(rest[rj + 1:], start=rj + 1):
            u[col, X.n + rk] = u[X.n + rk, col] = Y.u[j, rest[rk]]
    alpha = np.zeros(nz)
    alpha[:X.n] = X.mu
    beta = np.zeros(nz)
    for i in a_idx:
        beta[i] = Y.mu[phi[i]]
    for rj, j in enumerate(rest):
        beta[X.n + rj] = Y.mu[j]
    ids = ["x%d" % i for i in range(X.n)] + ["y%d" % j for j in rest]
    space = UmSpace(ids, u, np.full(nz, 1.0 / nz))
    return space, alpha, beta


def usturm_bruteforce(X, Y, p, max_n=7):
    """Sturm's ultrametric GW distance by enumeration of maximal partial
    isometries A -> Y and exact Wasserstein evaluation on the amalgam
    space.  Exponential; refuses inputs beyond max_n points per side."""
    if X.n > max_n or Y.n > max_n:
        raise SizeCapError(
            "usturm_bruteforce is exponential; %d/%d points exceed the cap %d"
            % (X.n, Y.n, max_n))
    _require_ultrametric(X, "X")
    _require_ultrametric(Y, "Y")
    best = [np.inf, None]

    def consistent(phi, i, j):
        for k, yk in enumerate(phi):
            if yk is not None and abs(X.u[i, k] - Y.u[j, yk]) > TAU_METRIC:
                return False
        return True

    def extendable(phi):
        used = {y for y in phi if y is not None}
        for i, yi in enumerate(phi):
            if yi is None:
                for j in range(Y.n):
                    if j not in used and consistent(phi, i, j):
                        return True
        return False

    phi = [None] * X.n

    def dfs(i):
        if i == X.n:
            if all(y is None for y in phi) or extendable(phi):
                return
            space, alpha, beta = _amalgam(X, Y, phi)
            val = w_ultrametric(space, alpha, beta, p)
            if val < best[0]:
                best[0] = val
                best[1] = list(phi)
            return
        dfs(i + 1)  # leave x_i out of A
        used = {y for y in phi if y is not None}
        for j in range(Y.n):
            if j not in used and consistent(phi, i, j):
                phi[i] = j
                dfs(i + 1)
                phi[i] = None

    dfs(0)
    mapping = [(i, y) for i, y in enumerate(best[1]) if y is not None]
    return GwResult(value=float(best[0]), method="usturm", matching=mapping)
