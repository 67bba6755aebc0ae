import numpy as np
import pytest

from ultragw import (GenSpec, diam_p, gen_ultrametric, perturb, quotient,
                     ugw_inf_exact, validate)


def test_genspec_validation():
    with pytest.raises(ValueError):
        GenSpec(k=0)
    with pytest.raises(ValueError):
        GenSpec(k=1, samples_per_block=10, subsample=11)


def test_gen_minimal():
    space = gen_ultrametric(GenSpec(k=1, samples_per_block=10, subsample=2,
                                    seed=5))
    assert space.n == 2
    assert validate(space, "ultrametric").ok


def test_gen_valid_over_seeds():
    for seed in range(100):
        space = gen_ultrametric(GenSpec(k=2, samples_per_block=20,
                                        subsample=10, seed=seed))
        assert validate(space, "ultrametric").ok


def test_gen_determinism():
    a = gen_ultrametric(GenSpec(k=3, seed=11))
    b = gen_ultrametric(GenSpec(k=3, seed=11))
    assert np.array_equal(a.u, b.u)
    c = gen_ultrametric(GenSpec(k=3, seed=12))
    assert not np.array_equal(a.u, c.u)


def test_gen_diameter_statistics():
    # soft statistical property: most diameters land in [0.5, 0.6]
    hits = total = 0
    for k in range(2, 6):
        for seed in range(25):
            space = gen_ultrametric(GenSpec(k=k, seed=seed))
            d = diam_p(space, np.inf)
            hits += 0.5 <= d <= 0.6
            total += 1
    assert hits / total >= 0.8


def _rand_space(seed, n=8):
    return gen_ultrametric(GenSpec(k=2, samples_per_block=20, subsample=n,
                                   seed=seed))


def test_perturb_identity_at_zero():
    x = _rand_space(3)
    y = perturb(x, 0.0, seed=9)
    assert np.array_equal(x.u, y.u)


def test_perturb_above_diameter():
    x = _rand_space(4)
    t = diam_p(x, np.inf) * 1.5
    y = perturb(x, t, seed=1)
    assert validate(y, "ultrametric").ok
    assert len(quotient(y, t).blocks) == 1
    assert diam_p(y, np.inf) <= t + 1e-12


def test_perturb_preserves_quotient(rng):
    for trial in range(100):
        x = _rand_space(trial, n=7)
        t = float(rng.uniform(0, diam_p(x, np.inf) * 1.2))
        y = perturb(x, t, seed=trial + 1000)
        assert validate(y, "ultrametric").ok
        assert quotient(y, t).blocks == quotient(x, t).blocks
        assert ugw_inf_exact(x, y).value <= t + 1e-9


def test_perturb_preserves_block_topology(rng):
    # the order of within-block distances is unchanged, so each block keeps
    # its merge-tree shape with shifted heights
    for trial in range(20):
        x = _rand_space(trial + 50, n=7)
        t = float(rng.uniform(0.05, diam_p(x, np.inf)))
        y = perturb(x, t, seed=trial)
        for block in quotient(x, t).blocks:
            if len(block) < 2:
                continue
            ix = np.ix_(block, block)
            a = x.u[ix][np.triu_indices(len(block), 1)]
            b = y.u[ix][np.triu_indices(len(block), 1)]
            assert np.array_equal(np.argsort(a, kind="stable"),
                                  np.argsort(b, kind="stable"))
            assert np.all(b >= a - 1e-12)  # levels only move up


def test_perturb_determinism():
    x = _rand_space(7)
    a = perturb(x, 0.4, seed=2)
    b = perturb(x, 0.4, seed=2)
    assert np.array_equal(a.u, b.u)
