"""Exact Wasserstein distances used throughout the package.

Closed forms:
  * w_ultrametric: Wasserstein distance between two measures on a common
    finite ultrametric space, evaluated as a sum over merge-tree nodes.
  * w_halfline: Wasserstein distance on the half-line with the ultrametric
    ground cost max(a, b) (for a != b).
  * w_quantile: Wasserstein distance on the half-line with ground cost
    |a^q - b^q|^(1/q), valid for q <= p, via quantile integration.

General solver:
  * exact_ot: exact discrete optimal transport, either total-cost ("sum")
    or bottleneck ("max") objective.  Production path uses an LP solver;
    oracle mode re-solves in exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from .spaces import TAU_MASS, TAU_METRIC, dedup_sorted, to_dendrogram


@dataclass(frozen=True)
class ScalarMeasure:
    """Finitely supported probability measure on the nonnegative reals."""

    x: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        m = np.asarray(self.m, dtype=float).ravel()
        if x.shape != m.shape:
            raise ValueError("support and mass lengths differ")
        if np.any(x < -TAU_METRIC):
            raise ValueError("support must be nonnegative")
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        order = np.argsort(x, kind="stable")
        x, m = x[order], m[order]
        # merge atoms closer than the metric tolerance
        xs, ms = [], []
        for xi, mi in zip(x, m):
            if xs and xi - xs[-1] <= TAU_METRIC:
                ms[-1] += mi
            else:
                xs.append(float(xi))
                ms.append(float(mi))
        x = np.array([xi for xi, mi in zip(xs, ms) if mi > 0])
        m = np.array([mi for mi in ms if mi > 0])
        if abs(m.sum() - 1.0) > 1e-9:
            raise ValueError("masses must sum to 1")
        x.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "m", m)


def pushforward(values, weights):
    """ScalarMeasure of the weighted empirical distribution of `values`."""
    return ScalarMeasure(np.asarray(values, dtype=float),
                         np.asarray(weights, dtype=float))


def lam(a, b, q):
    """Ground cost Lambda_q(a,b) = |a^q - b^q|^(1/q); at q=inf it is the
    ultrametric max(a,b) for a != b and 0 for a == b."""
    if q == np.inf:
        return 0.0 if abs(a - b) <= TAU_METRIC else max(a, b)
    if q < 1:
        raise ValueError("exponent q must be >= 1")
    return abs(a ** q - b ** q) ** (1.0 / q)


def _merge_supports(alpha, beta):
    pts = [(float(x), 0, float(m)) for x, m in zip(alpha.x, alpha.m)]
    pts += [(float(x), 1, float(m)) for x, m in zip(beta.x, beta.m)]
    pts.sort()
    xs, a, b = [], [], []
    for x, which, m in pts:
        if not xs or x - xs[-1] > TAU_METRIC:
            xs.append(x)
            a.append(0.0)
            b.append(0.0)
        if which == 0:
            a[-1] += m
        else:
            b[-1] += m
    return np.array(xs), np.array(a), np.array(b)


def w_halfline(alpha, beta, p):
    """Wasserstein distance on the half-line under the ultrametric ground
    cost max(a,b) (a != b), in closed form over the merged support."""
    if p < 1:
        raise ValueError("order p must be >= 1")
    xs, a, b = _merge_supports(alpha, beta)
    diff = a - b
    # masses arrive as floats; differences below the mass tolerance are noise
    diff[np.abs(diff) <= TAU_MASS] = 0.0
    if p == np.inf:
        cum = np.cumsum(diff)
        best = 0.0
        for i in range(len(xs) - 1):
            if abs(cum[i]) > TAU_MASS:
                best = max(best, xs[i + 1])
        for i in range(len(xs)):
            if abs(diff[i]) > TAU_MASS:
                best = max(best, xs[i])
        return float(best)
    xp = xs ** p
    cum = np.cumsum(diff)
    cum[np.abs(cum) <= TAU_MASS] = 0.0
    total = float(np.sum(np.abs(cum[:-1]) * np.abs(np.diff(xp))))
    total += float(np.sum(np.abs(diff) * xp))
    return (0.5 * total) ** (1.0 / p)


def _quantile_segments(alpha, beta):
    """Common refinement of the two quantile functions: yields
    (length, alpha quantile, beta quantile) per segment of [0,1]."""
    ca = np.cumsum(alpha.m)
    cb = np.cumsum(beta.m)
    ts = np.unique(np.concatenate([[0.0], ca, cb, [1.0]]))
    ts = ts[(ts >= 0) & (ts <= 1 + TAU_MASS)]
    segs = []
    for t0, t1 in zip(ts[:-1], ts[1:]):
        if t1 - t0 <= TAU_MASS:
            continue
        tm = 0.5 * (t0 + t1)
        qa = alpha.x[min(np.searchsorted(ca, tm), len(alpha.x) - 1)]
        qb = beta.x[min(np.searchsorted(cb, tm), len(beta.x) - 1)]
        segs.append((t1 - t0, float(qa), float(qb)))
    return segs


def w_quantile(alpha, beta, p, q=1):
    """Wasserstein distance on the half-line with ground cost Lambda_q,
    via the quantile closed form.  Exact only for q <= p < inf; for q > p
    the quantile coupling is no longer optimal, so the call is refused."""
    if not (1 <= q <= p < np.inf):
        raise ValueError(
            "quantile closed form requires 1 <= q <= p < inf; for q > p it "
            "is only an upper bound and is not computed here")
    acc = 0.0
    for length, qa, qb in _quantile_segments(alpha, beta):
        acc += length * lam(qa, qb, q) ** p
    return acc ** (1.0 / p)


def w_line_classical(alpha, beta, p):
    """Classical Wasserstein distance on the real line (ground cost |a-b|),
    including the p=inf sup-of-quantile-gap case."""
    if p == np.inf:
        return max((abs(qa - qb) for _, qa, qb in
                    _quantile_segments(alpha, beta)), default=0.0)
    return w_quantile(alpha, beta, p, 1)


def merge_nodes(space):
    """All blocks of the merge tree except the root, as tuples
    (diam, parent_diam, member indices).  Singletons included."""
    from .spaces import UmSpace

    if len(set(space.ids)) != space.n:
        # positional relabel so leaf ids identify indices uniquely
        space = UmSpace([str(i) for i in range(space.n)], space.u, space.mu)
    root = to_dendrogram(space)
    out = []

    def walk(node, members_out):
        members = []
        for c in node.children:
            sub = []
            walk(c, sub)
            out.append((c.height, node.height, sub))
            members.extend(sub)
        if node.is_leaf:
            members.append(node.id)
        members_out.extend(members)

    top = []
    walk(root, top)
    index = {pid: i for i, pid in enumerate(space.ids)}
    return [(h, ph, [index[pid] for pid in mem]) for h, ph, mem in out]


def w_ultrametric(space, alpha, beta, p):
    """Wasserstein distance between two measures alpha, beta on a common
    finite ultrametric space, via the merge-tree closed form."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if alpha.shape != (space.n,) or beta.shape != (space.n,):
        raise ValueError("mass vectors must match the space size")
    if np.any(np.abs(np.diag(space.u)) > TAU_METRIC):
        raise ValueError("w_ultrametric requires an ultrametric (zero diagonal)")
    if p < 1:
        raise ValueError("order p must be >= 1")
    nodes = merge_nodes(space)
    if p == np.inf:
        best = 0.0
        for h, ph, mem in nodes:
            if abs(alpha[mem].sum() - beta[mem].sum()) > TAU_MASS:
                best = max(best, ph)
        return float(best)
    acc = 0.0
    for h, ph, mem in nodes:
        acc += (ph ** p - h ** p) * abs(alpha[mem].sum() - beta[mem].sum())
    return (0.5 * acc) ** (1.0 / p)


def check_coupling(plan, mu, nu, tol=1e-9):
    plan = np.asarray(plan, dtype=float)
    if plan.shape != (len(mu), len(nu)):
        raise ValueError("coupling shape mismatch")
    if np.any(plan < -tol):
        raise ValueError("coupling has negative entries")
    if (np.max(np.abs(plan.sum(axis=1) - mu)) > tol
            or np.max(np.abs(plan.sum(axis=0) - nu)) > tol):
        raise ValueError("coupling marginals do not match")
    return plan


def product_coupling(mu, nu):
    return np.outer(mu, nu)


# ---------------------------------------------------------------------------
# exact discrete optimal transport


def _ot_linprog(cost, mu, nu, allowed=None):
    m, n = cost.shape
    c = cost.ravel().copy()
    if allowed is not None:
        bounds = [(0.0, None) if ok else (0.0, 0.0) for ok in allowed.ravel()]
        c = np.zeros(m * n)
    else:
        bounds = (0.0, None)
    a_eq = np.zeros((m + n, m * n))
    for i in range(m):
        a_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        a_eq[m + j, j::n] = 1.0
    b_eq = np.concatenate([mu, nu])
    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if not res.success:
        return None
    return res.x.reshape(m, n)


def _transportation_simplex(cost, supply, demand):
    """Exact transportation simplex over Fractions.  Returns (value, flow
    matrix).  Bland-style pivoting (first improving cell, row-major)."""
    m, n = len(supply), len(demand)
    flow = {}
    basis = []
    a = list(supply)
    b = list(demand)
    i = j = 0
    while True:
        q = min(a[i], b[j])
        flow[(i, j)] = q
        basis.append((i, j))
        a[i] -= q
        b[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if a[i] == 0 and i < m - 1:
            i += 1
        else:
            j += 1

    def potentials():
        us = [None] * m
        vs = [None] * n
        us[0] = Fraction(0)
        pending = list(basis)
        while pending:
            rest = []
            for (bi, bj) in pending:
                if us[bi] is not None and vs[bj] is None:
                    vs[bj] = cost[bi][bj] - us[bi]
                elif vs[bj] is not None and us[bi] is None:
                    us[bi] = cost[bi][bj] - vs[bj]
                elif us[bi] is None and vs[bj] is None:
                    rest.append((bi, bj))
            if len(rest) == len(pending):  # disconnected basis: cannot happen
                raise RuntimeError("basis tree is disconnected")
            pending = rest
        return us, vs

    while True:
        us, vs = potentials()
        entering = None
        bset = set(basis)
        for bi in range(m):
            for bj in range(n):
                if (bi, bj) not in bset and cost[bi][bj] - us[bi] - vs[bj] < 0:
                    entering = (bi, bj)
                    break
            if entering:
                break
        if entering is None:
            break
        # unique cycle: path from entering's row node to its column node in
        # the basis tree, found by DFS over basic cells
        adj = {}
        for (bi, bj) in basis:
            adj.setdefault(("r", bi), []).append(("c", bj))
            adj.setdefault(("c", bj), []).append(("r", bi))
        start, goal = ("r", entering[0]), ("c", entering[1])
        prev = {start: None}
        stack = [start]
        while stack:
            node = stack.pop()
            if node == goal:
                break
            for nxt in adj.get(node, []):
                if nxt not in prev:
                    prev[nxt] = node
                    stack.append(nxt)
        path = []
        node = goal
        while node is not None:
            path.append(node)
            node = prev[node]
        path.reverse()  # row(entering) ... col(entering)
        cycle = [entering]
        for k in range(len(path) - 1):
            x, y = path[k], path[k + 1]
            cell = (x[1], y[1]) if x[0] == "r" else (y[1], x[1])
            cycle.append(cell)
        # entering gets +, then alternate along the cycle
        minus = cycle[1::2]
        theta = min(flow[c] for c in minus)
        leaving = min(c for c in minus if flow[c] == theta)
        for k, cell in enumerate(cycle):
            if k % 2 == 0:
                flow[cell] = flow.get(cell, Fraction(0)) + theta
            else:
                flow[cell] -= theta
        basis.remove(leaving)
        del flow[leaving]
        basis.append(entering)

    plan = [[flow.get((bi, bj), Fraction(0)) for bj in range(n)] for bi in range(m)]
    value = sum(cost[bi][bj] * plan[bi][bj] for bi in range(m) for bj in range(n))
    return value, plan


def _ot_rational(cost, mu, nu):
    cost_f = [[Fraction(float(cost[i, j])) for j in range(cost.shape[1])]
              for i in range(cost.shape[0])]
    sup = [Fraction(float(v)) for v in mu]
    dem = [Fraction(float(v)) for v in nu]
    total = sum(sup)
    # balance exactly: fold any float round-off of the totals into the
    # largest atoms so supply and demand agree as rationals
    dtot = sum(dem)
    if dtot != total:
        k = max(range(len(dem)), key=lambda t: dem[t])
        dem[k] += total - dtot
    value, plan = _transportation_simplex(cost_f, sup, dem)
    return float(value), np.array([[float(v) for v in row] for row in plan])


def exact_ot(cost, mu, nu, p_mode="sum", oracle=False):
    """Exact optimal transport between mass vectors mu and nu.

    p_mode "sum" minimizes the total cost <cost, plan>; "max" minimizes the
    bottleneck max cost over the support of the plan (binary search over the
    distinct cost values with an exact feasibility check per level).
    Returns (value, plan).
    """
    cost = np.asarray(cost, dtype=float)
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if abs(mu.sum() - nu.sum()) > 1e-9:
        raise ValueError("marginals have different total mass")
    if p_mode == "sum":
        if oracle:
            if len(mu) > 16 or len(nu) > 16:
                raise ValueError("oracle mode is limited to 16 atoms per side")
            return _ot_rational(cost, mu, nu)
        plan = _ot_linprog(cost, mu, nu)
        if plan is None:  # pragma: no cover - marginals already checked
            raise RuntimeError("LP solver failed on a feasible instance")
        return float((cost * plan).sum()), plan
    if p_mode != "max":
        raise ValueError("p_mode must be 'sum' or 'max'")
    levels = dedup_sorted(np.sort(cost.ravel()))
    lo, hi = 0, len(levels) - 1
    best = None
    # the largest level is always feasible (product coupling)
    while lo < hi:
        mid = (lo + hi) // 2
        plan = _ot_linprog(cost, mu, nu,
                           allowed=cost <= levels[mid] + TAU_METRIC)
        if plan is not None:
            best = (levels[mid], plan)
            hi = mid
        else:
            lo = mid + 1
    if best is None or best[0] > levels[lo]:
        plan = _ot_linprog(cost, mu, nu, allowed=cost <= levels[lo] + TAU_METRIC)
        best = (levels[lo], plan)
    value, plan = best
    # report the actual bottleneck of the returned plan
    support = plan > TAU_MASS
    value = float(cost[support].max()) if support.any() else 0.0
    return value, plan
