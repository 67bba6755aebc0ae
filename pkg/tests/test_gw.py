import itertools

import numpy as np
import pytest
from scipy.stats import kstest

from conftest import delta_hat2, one_point, rand_ultrametric
from ultragw import (FwConfig, SizeCapError, UmSpace, canonical_signature,
                     dgw_fw, diam_p, dis_classical, dis_ult, hitrun_couplings,
                     quotient, snowflake, spectrum, ugh_exact, ugw_fw,
                     ugw_inf_exact, uslb, usturm_bruteforce)
from ultragw.spaces import dedup_sorted

CFG = FwConfig(restarts=3, iterations=200, seed=7)


def _rand_mass(rng, n):
    m = rng.dirichlet(np.ones(n))
    m = (m + 0.05) / (1 + 0.05 * n)
    return m / m.sum()


# ---------------------------------------------------------------------------
# distortion functionals


def test_dis_ult_identity_coupling(rng):
    x = rand_ultrametric(rng, 5)
    plan = np.diag(x.mu)
    for p in (1, 2, np.inf):
        assert dis_ult(x, x, plan, p) == 0.0


def test_dis_ult_two_point_value():
    a1, a2 = 0.3, 0.7
    x = delta_hat2(1.0, (a1, a2))
    y = delta_hat2(2.0, (a1, a2))
    plan = np.diag([a1, a2])
    assert dis_ult(x, y, plan, 1) == pytest.approx(2 * a1 * a2 * 2.0)


def test_dis_ult_one_point(rng):
    x = rand_ultrametric(rng, 6)
    plan = x.mu.reshape(-1, 1)
    for p in (1, 2, np.inf):
        assert dis_ult(x, one_point(), plan, p) == pytest.approx(diam_p(x, p))


def test_dis_ult_rejects_bad_coupling(rng):
    x = rand_ultrametric(rng, 4)
    with pytest.raises(ValueError):
        dis_ult(x, x, np.full((4, 4), 1 / 16), 1)


def test_dis_classical_two_point_with_half():
    a1, a2 = 0.4, 0.6
    x = delta_hat2(1.0, (a1, a2))
    y = delta_hat2(2.5, (a1, a2))
    plan = np.diag([a1, a2])
    assert 0.5 * dis_classical(x, y, plan, 1) == pytest.approx(
        a1 * a2 * abs(1.0 - 2.5))


def test_dis_classical_equals_dis_ult_on_unit_spaces(rng):
    # constant-1 spaces: |a-b| and the ultrametric cost coincide pairwise
    def const1(n):
        u = np.ones((n, n)) - np.eye(n)
        return UmSpace([str(i) for i in range(n)], u, np.full(n, 1 / n))

    x, y = const1(3), const1(4)
    for _ in range(10):
        plan = hitrun_couplings(x.mu, y.mu, 1, steps=4,
                                seed=int(rng.integers(10 ** 6)))[0]
        for p in (1, 2):
            assert dis_classical(x, y, plan, p) == pytest.approx(
                dis_ult(x, y, plan, p), abs=1e-12)


def test_snowflake_at_coupling_level(rng):
    x = rand_ultrametric(rng, 5)
    y = rand_ultrametric(rng, 4)
    for p in (2, 3):
        for _ in range(5):
            plan = hitrun_couplings(x.mu, y.mu, 1, steps=4,
                                    seed=int(rng.integers(10 ** 6)))[0]
            lhs = dis_ult(x, y, plan, p) ** p
            rhs = dis_ult(snowflake(x, p), snowflake(y, p), plan, 1)
            assert lhs == pytest.approx(rhs, abs=1e-9)


# ---------------------------------------------------------------------------
# exact order-infinity solvers


def test_ugw_inf_relabel_invariance(rng):
    x = rand_ultrametric(rng, 6)
    perm = rng.permutation(6)
    y = UmSpace([x.ids[i] + "_r" for i in perm], x.u[np.ix_(perm, perm)],
                x.mu[perm])
    assert ugw_inf_exact(x, y).value == 0.0


def test_ugw_inf_diameter_gap(rng):
    x = rand_ultrametric(rng, 5, scale=0.5)
    y = rand_ultrametric(rng, 6, scale=2.0)
    if diam_p(x, np.inf) >= diam_p(y, np.inf):
        x, y = y, x
    dy = max(diam_p(x, np.inf), diam_p(y, np.inf))
    assert ugw_inf_exact(x, y).value == pytest.approx(dy, abs=1e-12)
    assert ugh_exact(x, y) == pytest.approx(dy, abs=1e-12)


def test_ugw_inf_two_point_family():
    assert ugw_inf_exact(delta_hat2(1.0), delta_hat2(2.0)).value == 2.0


def test_ugh_leq_ugw_inf(rng):
    for _ in range(100):
        x = rand_ultrametric(rng, int(rng.integers(2, 6)))
        y = rand_ultrametric(rng, int(rng.integers(2, 6)))
        assert ugh_exact(x, y) <= ugw_inf_exact(x, y).value + 1e-12


def test_ugw_inf_rejects_dissimilarity():
    bad = UmSpace(["a", "b"], np.array([[0.5, 2.0], [2.0, 0.0]]),
                  np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        ugw_inf_exact(bad, delta_hat2(1.0))


def test_canonical_signature_mass_sensitivity():
    x = delta_hat2(1.0, (0.5, 0.5))
    y = delta_hat2(1.0, (0.25, 0.75))
    assert canonical_signature(x) != canonical_signature(y)
    assert (canonical_signature(x, with_mass=False)
            == canonical_signature(y, with_mass=False))
    assert ugh_exact(x, y) == 0.0
    assert ugw_inf_exact(x, y).value == 1.0


def test_ugw_inf_matching_certificate(rng):
    x = rand_ultrametric(rng, 5)
    y = rand_ultrametric(rng, 5)
    res = ugw_inf_exact(x, y)
    # the certificate pairs the blocks of the two quotients at the level
    qx = quotient(x, res.level)
    assert sorted(a for a, _ in res.matching) == sorted(qx.blocks)


# ---------------------------------------------------------------------------
# hit-and-run


def test_hitrun_degenerate():
    out = hitrun_couplings(np.array([1.0]), np.full(3, 1 / 3), 4, seed=0)
    assert len(out) == 4
    assert all(np.allclose(p, np.full((1, 3), 1 / 3)) for p in out)


def test_hitrun_outputs_are_couplings(rng):
    from ultragw import check_coupling
    for _ in range(100):
        m, n = rng.integers(2, 6, size=2)
        mu, nu = _rand_mass(rng, m), _rand_mass(rng, n)
        for plan in hitrun_couplings(mu, nu, 3, steps=3,
                                     seed=int(rng.integers(10 ** 6))):
            check_coupling(plan, mu, nu)


def test_hitrun_uniform_on_segment():
    # 2x2 uniform marginals: one free parameter, uniform on [0, 1/2]
    mu = np.array([0.5, 0.5])
    samples = hitrun_couplings(mu, mu, 10 ** 5, steps=1, seed=42)
    free = np.array([p[0, 0] for p in samples])
    stat = kstest(free, "uniform", args=(0, 0.5)).statistic
    assert stat < 0.01


# ---------------------------------------------------------------------------
# Frank-Wolfe


def test_fw_two_point():
    res = ugw_fw(delta_hat2(1.0), delta_hat2(2.0), 1, CFG)
    assert res.value == pytest.approx(1.0, abs=1e-6)
    # stationarity invariant: reported value matches its coupling
    assert dis_ult(delta_hat2(1.0), delta_hat2(2.0), res.coupling, 1) \
        == pytest.approx(res.value, abs=1e-10)


def test_fw_one_point(rng):
    x = rand_ultrametric(rng, 6)
    for p in (1, 2):
        res = ugw_fw(x, one_point(), p, CFG)
        assert res.value == diam_p(x, p)


def test_fw_dominates_uslb(rng):
    for _ in range(10):
        x = rand_ultrametric(rng, int(rng.integers(2, 6)))
        y = rand_ultrametric(rng, int(rng.integers(2, 6)))
        res = ugw_fw(x, y, 1, FwConfig(restarts=2, iterations=100, seed=1))
        assert res.value >= uslb(x, y, 1) - 1e-9


def test_fw_harmonic_step(rng):
    x, y = delta_hat2(1.0), delta_hat2(2.0)
    cfg = FwConfig(restarts=3, iterations=400, step_rule="harmonic", seed=3)
    assert ugw_fw(x, y, 1, cfg).value == pytest.approx(1.0, abs=1e-3)


def test_fw_rejects_bad_args(rng):
    x = rand_ultrametric(rng, 3)
    with pytest.raises(ValueError):
        ugw_fw(x, x, np.inf, CFG)
    with pytest.raises(ValueError):
        FwConfig(restarts=0)
    with pytest.raises(ValueError):
        FwConfig(step_rule="newton")


def test_dgw_fw_halves_classical(rng):
    x, y = delta_hat2(1.0), delta_hat2(2.5)
    res = dgw_fw(x, y, 1, CFG)
    assert res.value == pytest.approx(0.25 * 1.5, abs=1e-6)


def test_fw_gradient_matches_finite_differences(rng):
    from ultragw.gw import _cost_tensor
    for _ in range(5):
        x = rand_ultrametric(rng, 4)
        y = rand_ultrametric(rng, 3)
        plan = hitrun_couplings(x.mu, y.mu, 1, steps=5,
                                seed=int(rng.integers(10 ** 6)))[0]
        for p in (1, 2):
            t = _cost_tensor(x, y, p)
            grad = 2 * np.tensordot(t, plan, axes=([2, 3], [0, 1]))

            def val(q):
                return float(np.einsum("ijkl,ij,kl->", t, q, q))

            h = 1e-6
            for i in range(x.n):
                for j in range(y.n):
                    e = np.zeros_like(plan)
                    e[i, j] = h
                    fd = (val(plan + e) - val(plan - e)) / (2 * h)
                    assert abs(fd - grad[i, j]) <= 1e-5 * max(1, abs(grad[i, j]))


# ---------------------------------------------------------------------------
# brute-force Sturm


def test_usturm_two_point_family():
    for n in range(1, 6):
        x = delta_hat2(1.0)
        y = delta_hat2(1.0 + 1.0 / n)
        for p in (1, 2, np.inf):
            expect = 2.0 ** (-1.0 / p) * (1 + 1.0 / n) if p != np.inf \
                else 1 + 1.0 / n
            assert usturm_bruteforce(x, y, p).value == pytest.approx(
                expect, abs=1e-9)


def test_usturm_one_point_family():
    for n in (2, 3, 5):
        mu = np.array([1 / (2 * n), 1 / (2 * n), 1 - 1 / n])
        u = np.ones((3, 3)) - np.eye(3)
        x = UmSpace(list("abc"), u, mu)
        assert usturm_bruteforce(x, one_point(), 1).value == pytest.approx(
            1.0 / n, abs=1e-12)


def test_usturm_inf_equals_ugw_inf(rng):
    for _ in range(10):
        x = rand_ultrametric(rng, int(rng.integers(2, 6)))
        y = rand_ultrametric(rng, int(rng.integers(2, 6)))
        assert usturm_bruteforce(x, y, np.inf).value == pytest.approx(
            ugw_inf_exact(x, y).value, abs=1e-9)


def test_usturm_size_cap(rng):
    x = rand_ultrametric(rng, 8)
    with pytest.raises(SizeCapError):
        usturm_bruteforce(x, x, 1)


def test_sturm_sandwich_two_point_family():
    # exact family values: ugw_p = 2^{-1/p} max(a,b) <= 2^{1/p} * usturm_p
    for n in (1, 2, 3):
        b = 1 + 1.0 / n
        for p in (1, 2):
            ugw = 2 ** (-1 / p) * b
            st = usturm_bruteforce(delta_hat2(1.0), delta_hat2(b), p).value
            assert ugw <= 2 ** (1 / p) * st + 1e-12


# ---------------------------------------------------------------------------
# metric axioms and the brute-force oracle


def test_ugw_inf_max_triangle(rng):
    for _ in range(30):
        x, y, z = (rand_ultrametric(rng, int(rng.integers(2, 5)))
                   for _ in range(3))
        dxy = ugw_inf_exact(x, y).value
        dyz = ugw_inf_exact(y, z).value
        dxz = ugw_inf_exact(x, z).value
        assert dxz <= max(dxy, dyz) + 1e-12
        assert dxy == ugw_inf_exact(y, x).value


def iso_weighted(a, b, tol=1e-9):
    """Brute-force weighted isomorphism test by permutation enumeration."""
    if a.n != b.n:
        return False
    for perm in itertools.permutations(range(a.n)):
        perm = list(perm)
        if np.max(np.abs(a.mu - b.mu[perm])) > tol:
            continue
        if np.max(np.abs(a.u - b.u[np.ix_(perm, perm)])) <= tol:
            return True
    return False


def ugw_inf_oracle(x, y):
    levels = dedup_sorted(sorted(spectrum(x) + spectrum(y)))
    passing = None
    for t in reversed(levels):
        if iso_weighted(quotient(x, t).quotient, quotient(y, t).quotient):
            passing = t
        else:
            break
    return passing


def test_ugw_inf_matches_permutation_oracle(rng):
    for _ in range(20):
        x = rand_ultrametric(rng, int(rng.integers(2, 6)))
        y = rand_ultrametric(rng, int(rng.integers(2, 6)))
        assert ugw_inf_exact(x, y).value == pytest.approx(
            ugw_inf_oracle(x, y), abs=1e-12)
