import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsecert import (Dictionary, EncodeResult, EncoderConfig, encode,
                        encode_batch, fista, gap_profile, min_gap_over_set)
from sparsecert.errors import (BadPenalty, NoConvergence, OutOfRange,
                               SingularSupport)

from conftest import random_dictionary
from oracles import lasso_cd, lasso_objective


def _check_kkt(d: Dictionary, x, lam: float, z, tol: float = 1e-8) -> None:
    """Verify optimality conditions from scratch, trusting nothing cached."""
    corr = d.atoms.T @ (x - d.atoms @ z)
    on = np.abs(z) > 0
    assert np.all(np.abs(corr[on] - lam * np.sign(z[on])) <= tol)
    assert np.all(np.abs(corr[~on]) <= lam + tol)


def test_identity_dictionary_soft_threshold():
    d = Dictionary(np.eye(2))
    res = encode(d, np.array([0.8, 0.1]), 0.3)
    assert res.code == pytest.approx([0.5, 0.0], abs=1e-12)
    assert res.slack == pytest.approx([0.0, 0.2], abs=1e-12)
    assert gap_profile(res).tau == pytest.approx([0.0, 0.2], abs=1e-12)
    assert list(res.support) == [0]


def test_zero_input_gives_zero_code(small_dict):
    res = encode(small_dict, np.zeros(small_dict.d), 0.25)
    assert np.all(res.code == 0.0)
    assert res.slack == pytest.approx(np.full(small_dict.p, 0.25), abs=0)
    assert res.kkt_residual == 0.0
    assert res.support.size == 0


def test_code_matches_coordinate_descent(small_dict):
    rng = np.random.default_rng(7)
    for lam in (0.1, 0.2, 0.5):
        for _ in range(5):
            x = rng.standard_normal(small_dict.d) * 0.5
            res = encode(small_dict, x, lam)
            z_cd = lasso_cd(small_dict.atoms, x, lam)
            assert np.abs(res.code - z_cd).max() <= 1e-8
            obj = lasso_objective(small_dict.atoms, x, res.code, lam)
            obj_cd = lasso_objective(small_dict.atoms, x, z_cd, lam)
            assert obj <= obj_cd + 1e-12


def test_kkt_conditions_hold(small_dict):
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = rng.standard_normal(small_dict.d)
        res = encode(small_dict, x, 0.15)
        _check_kkt(small_dict, x, 0.15, res.code)
        assert res.kkt_residual <= EncoderConfig().kkt_tolerance


def test_scale_covariance(small_dict):
    x = np.random.default_rng(5).standard_normal(small_dict.d)
    base = encode(small_dict, x, 0.2).code
    for c in (0.3, 2.0, 7.5):
        scaled = encode(small_dict, c * x, c * 0.2).code
        assert np.abs(scaled - c * base).max() <= 1e-9 * max(1.0, c)


def test_bad_penalty():
    d = Dictionary(np.eye(2))
    with pytest.raises(BadPenalty):
        encode(d, np.ones(2), 0.0)
    with pytest.raises(BadPenalty):
        encode(d, np.ones(2), -0.1)


def test_fista_rejects_nonpositive_iters():
    d = Dictionary(np.eye(2))
    with pytest.raises(ValueError):
        fista(d, np.ones(2), 0.3, 0)


def test_no_convergence_when_tolerance_unreachable(small_dict):
    x = np.random.default_rng(1).standard_normal(small_dict.d)
    cfg = EncoderConfig(kkt_tolerance=0.0, max_restarts=1)
    with pytest.raises(NoConvergence):
        encode(small_dict, x, 0.2, cfg)


def test_singular_support_on_duplicate_atoms():
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    d = Dictionary(np.column_stack([e1, e1, e2]))
    with pytest.raises(SingularSupport):
        encode(d, np.array([1.0, 0.2]), 0.1)


def test_gap_profile_shape_and_order(small_dict):
    x = np.random.default_rng(9).standard_normal(small_dict.d)
    res = encode(small_dict, x, 0.3)
    tau = gap_profile(res).tau
    assert tau.shape == (small_dict.p,)
    assert np.all(np.diff(tau) >= 0)
    assert tau[-1] <= 0.3 + 1e-12
    assert tau[0] >= -1e-10


def test_min_gap_singleton(small_dict):
    x = np.random.default_rng(2).standard_normal(small_dict.d)
    res = encode(small_dict, x, 0.2)
    for s in (0, 3, small_dict.p - 1):
        want = float(np.sort(res.slack)[s])
        got = min_gap_over_set(small_dict, x[None, :], 0.2, s)
        assert got == want


def test_min_gap_takes_minimum(small_dict):
    rng = np.random.default_rng(4)
    xs = rng.standard_normal((6, small_dict.d))
    per = [float(np.sort(encode(small_dict, x, 0.2).slack)[5]) for x in xs]
    assert min_gap_over_set(small_dict, xs, 0.2, 5) == min(per)


def test_min_gap_validation(small_dict):
    with pytest.raises(ValueError):
        min_gap_over_set(small_dict, np.empty((0, small_dict.d)), 0.2, 1)
    xs = np.ones((2, small_dict.d))
    with pytest.raises(OutOfRange):
        min_gap_over_set(small_dict, xs, 0.2, small_dict.p)


def test_min_gap_reports_failing_sample_index():
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    d = Dictionary(np.column_stack([e1, e1, e2]))
    xs = np.array([[0.0, 1.0], [1.0, 0.2]])  # only row 1 hits the dup atoms
    with pytest.raises(SingularSupport, match="sample 1"):
        min_gap_over_set(d, xs, 0.1, 0)


def test_encode_batch_thread_count_irrelevant(small_dict):
    xs = np.random.default_rng(6).standard_normal((8, small_dict.d))
    serial = encode_batch(small_dict, xs, 0.2, threads=1)
    parallel = encode_batch(small_dict, xs, 0.2, threads=4)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.code, b.code)
        assert a.kkt_residual == b.kkt_residual


def test_fista_reasonably_converged(small_dict):
    # the raw iterate (before exact refinement) already lands close
    x = np.random.default_rng(8).standard_normal(small_dict.d)
    z = fista(small_dict, x, 0.2, 4000)
    z_cd = lasso_cd(small_dict.atoms, x, 0.2)
    assert np.abs(z - z_cd).max() <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 1.0))
def test_encode_optimal_property(seed, lam):
    rng = np.random.default_rng(seed)
    d = random_dictionary(8, 12, seed=seed + 1)
    x = rng.standard_normal(8)
    res = encode(d, x, lam)
    _check_kkt(d, x, lam, res.code)
    tau = gap_profile(res).tau
    assert np.all(np.diff(tau) >= 0)
    assert tau[-1] <= lam + 1e-12
