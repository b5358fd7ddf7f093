import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metabbo.problems import (
    FAMILIES,
    BudgetExhausted,
    MooInstance,
    build_suite,
    evaluate,
    evaluate_moo,
    make_soo_instance,
)


def identity_instance(family, dim, **kw):
    return make_soo_instance(family, dim, 0, shift=np.zeros(dim), rotation=np.eye(dim), **kw)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("dim", [1, 2, 10])
def test_optimum_value_is_zero_at_shift(family, dim):
    p = make_soo_instance(family, dim, 11)
    assert abs(evaluate(p, [p.x_opt])[0]) <= 1e-12


def test_sphere_eval_at_shift_is_zero():
    p = make_soo_instance("sphere", 10, 7)
    assert evaluate(p, p.shift[None, :])[0] == pytest.approx(0.0, abs=1e-12)


def test_rastrigin_identity_at_ones():
    assert evaluate(identity_instance("rastrigin", 2), [[1.0, 1.0]])[0] == pytest.approx(2.0, abs=1e-12)


def test_ellipsoid_identity_at_ones():
    assert evaluate(identity_instance("ellipsoid", 3), [[1.0, 1.0, 1.0]])[0] == pytest.approx(1001001.0, rel=1e-14)


def test_sphere_identity_3_4():
    assert evaluate(identity_instance("sphere", 2), [[3.0, 4.0]])[0] == pytest.approx(25.0, abs=1e-12)


def test_unknown_family_and_bad_dim():
    with pytest.raises(ValueError):
        make_soo_instance("nope", 3, 0)
    with pytest.raises(ValueError):
        make_soo_instance("sphere", 0, 0)


def test_shift_inside_inner_box_and_rotation_orthogonal():
    for seed in range(20):
        p = make_soo_instance("ackley", 6, seed)
        assert np.all(np.abs(p.shift) <= 4.0)
        assert np.allclose(p.rotation @ p.rotation.T, np.eye(6), atol=1e-12)


def test_same_seed_bit_identical():
    a = make_soo_instance("katsuura", 8, 99, 0.01)
    b = make_soo_instance("katsuura", 8, 99, 0.01)
    assert np.array_equal(a.shift, b.shift) and np.array_equal(a.rotation, b.rotation)
    X = np.random.default_rng(0).uniform(-5, 5, (7, 8))
    assert np.array_equal(a.fresh(3).eval(X), b.fresh(3).eval(X))


def test_budget_exhausted_leaves_counter_unchanged():
    p = make_soo_instance("sphere", 3, 1, max_fes=10)
    p.eval(np.zeros((1, 3)))
    with pytest.raises(BudgetExhausted) as info:
        p.eval(np.zeros((10, 3)))
    assert p.fes_used == 1
    assert info.value.remaining == 9
    p.eval(np.zeros((9, 3)))
    with pytest.raises(BudgetExhausted) as info:
        p.eval(np.zeros((1, 3)))
    assert info.value.remaining == 0


def test_counter_increases_by_n():
    p = make_soo_instance("rosenbrock", 4, 2)
    p.eval(np.zeros((13, 4)))
    assert p.fes_used == 13


def test_out_of_bounds_rows_are_clipped():
    p = identity_instance("sphere", 2)
    assert p.eval([[10.0, -10.0]])[0] == pytest.approx(50.0)


def test_noise_model_and_noiseless_reduction():
    clean = make_soo_instance("sphere", 4, 5)
    zero = make_soo_instance("sphere", 4, 5, 0.0)
    noisy = make_soo_instance("sphere", 4, 5, 0.1).fresh(8)
    X = np.random.default_rng(1).uniform(-5, 5, (50, 4))
    assert np.array_equal(clean.eval(X), zero.eval(X))
    y = clean.noiseless(X)
    # the same two gaussian streams, replayed
    from metabbo.seeding import rng_from

    g = rng_from(noisy.instance_seed, 8, 0x6E6F697365)
    g1, g2 = g.standard_normal(50), g.standard_normal(50)
    assert np.allclose(noisy.eval(X), y * (1 + 0.1 * g1) + 0.1 * g2, rtol=0, atol=1e-12)


def test_sphere_rotation_invariance():
    p = make_soo_instance("sphere", 6, 4)
    rng = np.random.default_rng(3)
    X = rng.uniform(-4, 4, (20, 6))
    # sphere only sees ||x - o||; rotating about the optimum leaves it unchanged
    Q = np.linalg.qr(rng.standard_normal((6, 6)))[0]
    Xr = (X - p.shift) @ Q.T + p.shift
    inside = np.all(np.abs(Xr) <= 5, axis=1)
    assert np.allclose(p.noiseless(X)[inside], p.noiseless(Xr)[inside], atol=1e-9)


def test_zdt_examples():
    z1 = MooInstance("z1", "ZDT1", 30)
    assert np.allclose(evaluate_moo(z1, np.zeros((1, 30))), [[0.0, 1.0]])
    x = np.zeros((1, 30))
    x[0, 0] = 1.0
    assert np.allclose(evaluate_moo(z1, x), [[1.0, 0.0]])
    z2 = MooInstance("z2", "ZDT2", 30)
    assert np.allclose(evaluate_moo(z2, np.zeros((1, 30))), [[0.0, 1.0]])


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["ZDT1", "ZDT2", "ZDT3"]), st.integers(0, 10_000))
def test_zdt_f1_range_and_finite(variant, seed):
    p = MooInstance("z", variant, 30, max_fes=10**6)
    F = p.eval(np.random.default_rng(seed).random((20, 30)))
    assert F.shape == (20, 2)
    assert np.all(np.isfinite(F))
    assert np.all((F[:, 0] >= 0) & (F[:, 0] <= 1))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(FAMILIES), st.integers(1, 12), st.integers(0, 2**31))
def test_values_finite_and_nonnegative(family, dim, seed):
    p = make_soo_instance(family, dim, seed)
    y = p.noiseless(np.random.default_rng(seed).uniform(-5, 5, (10, dim)))
    assert np.all(np.isfinite(y)) and np.all(y >= -1e-12)


def test_default_suite_counts():
    s = build_suite()
    assert len(s.instances) == 24 and len(s.train_ids) == 8 and len(s.test_ids) == 16
    assert s.problem_type == "SOO"
    assert all(p.dim == 10 and p.max_fes == 20000 for p in s.instances)
    assert not set(s.train_ids) & set(s.test_ids)
    assert set(s.train_ids) | set(s.test_ids) == {p.problem_id for p in s.instances}
    assert {p.family for p in s.instances} == set(FAMILIES)


def test_suite_determinism():
    a, b = build_suite({"seed": 3}), build_suite({"seed": 3})
    assert a.train_ids == b.train_ids and a.test_ids == b.test_ids
    for p, q in zip(a.instances, b.instances):
        assert p.problem_id == q.problem_id and np.array_equal(p.shift, q.shift)
    assert build_suite({"seed": 4}).train_ids != a.train_ids


def test_empty_test_split_warns():
    s = build_suite({"train": 24, "test": 0})
    assert s.empty_test and s.test_set() == [] and len(s.train_set()) == 24
    assert s.warnings == ["empty test split"]


def test_split_exceeding_instances_rejected():
    with pytest.raises(ValueError):
        build_suite({"train": 20, "test": 10, "instances": 24})
    with pytest.raises(ValueError):
        build_suite({"bogus": 1})


def test_noisy_and_moo_suites():
    noisy = build_suite({"suite": "soo-noisy-10d"})
    assert noisy.problem_type == "SOO-noisy" and all(p.noise_sigma == 0.01 for p in noisy.instances)
    z = build_suite({"suite": "zdt"})
    assert z.problem_type == "MOO" and [p.variant for p in z.instances] == ["ZDT1", "ZDT2", "ZDT3"]


def test_fresh_clones_are_independent():
    p = make_soo_instance("sphere", 3, 1)
    a, b = p.fresh(1), p.fresh(2)
    a.eval(np.zeros((5, 3)))
    assert a.fes_used == 5 and b.fes_used == 0 and p.fes_used == 0
