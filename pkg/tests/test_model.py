import math
from dataclasses import replace

import numpy as np
import pytest

from sparsecert import (BoundInputs, Dictionary, Hypothesis, certified_accuracy,
                        certified_radius, encode, generalization_bound,
                        min_certified_radius, multiclass_margin, predict)
from sparsecert.errors import DomainError, NonFinite, ZeroWeights

from conftest import random_dictionary


def _binary_identity() -> Hypothesis:
    return Hypothesis(Dictionary(np.eye(2)), np.array([[1.0], [-1.0]]), 0.3)


def _random_hypothesis(d: int, p: int, k: int, seed: int,
                       lam: float = 0.2) -> Hypothesis:
    rng = np.random.default_rng(seed)
    return Hypothesis(random_dictionary(d, p, seed=seed + 1),
                      rng.standard_normal((p, k)), lam)


def test_predict_binary():
    h = _binary_identity()
    label, scores, res = predict(h, np.array([0.8, 0.1]))
    assert label == 1
    assert scores[0] == pytest.approx(0.5, abs=1e-12)
    assert res.code == pytest.approx([0.5, 0.0], abs=1e-12)
    label0, _, _ = predict(h, np.array([0.1, 0.8]))
    assert label0 == 0


def test_predict_multiclass_argmax_tie_lowest_index():
    h = Hypothesis(Dictionary(np.eye(3)), np.eye(3), 0.2)
    label, scores, _ = predict(h, np.array([0.9, 0.9, 0.0]))
    assert scores[0] == pytest.approx(scores[1], abs=1e-12)
    assert label == 0


def test_margin_values():
    h = _binary_identity()
    x = np.array([0.8, 0.1])
    assert multiclass_margin(h, x, 1) == pytest.approx(0.5 / np.sqrt(2.0))
    assert multiclass_margin(h, x, 0) == pytest.approx(-0.5 / np.sqrt(2.0))
    h3 = Hypothesis(Dictionary(np.eye(3)), np.eye(3), 0.2)
    x3 = np.array([0.9, 0.3, 0.0])
    assert multiclass_margin(h3, x3, 0) == pytest.approx(0.6, abs=1e-12)


def test_margin_label_range():
    h = _binary_identity()
    with pytest.raises(ValueError):
        multiclass_margin(h, np.ones(2), 2)
    with pytest.raises(ValueError):
        multiclass_margin(h, np.ones(2), -1)


def test_zero_weights_binary_margin():
    h = Hypothesis(Dictionary(np.eye(2)), np.zeros((2, 1)), 0.3)
    with pytest.raises(ZeroWeights):
        multiclass_margin(h, np.array([0.8, 0.1]), 1)


def test_hypothesis_validation():
    with pytest.raises(ValueError):
        Hypothesis(Dictionary(np.eye(2)), np.ones((3, 1)), 0.3)
    with pytest.raises(ValueError):
        Hypothesis(Dictionary(np.eye(2)), np.ones((2, 1)), 0.0)
    with pytest.raises(NonFinite):
        Hypothesis(Dictionary(np.eye(2)), np.array([[np.nan], [1.0]]), 0.3)
    h = _binary_identity()
    with pytest.raises(ValueError):
        h.weights[0, 0] = 2.0


def test_num_classes_inference():
    assert _binary_identity().num_classes == 2
    h = Hypothesis(Dictionary(np.eye(3)), np.ones((3, 4)), 0.2)
    assert h.num_classes == 4
    assert not h.binary


def test_certificate_zero_when_wrong():
    h = _binary_identity()
    cert = certified_radius(h, np.array([0.8, 0.1]), 0)  # true label is 1
    assert cert.radius == 0.0
    assert cert.best_s == -1
    assert cert.binding_term == "none"
    assert cert.margin < 0


def test_certificate_radius_capped_by_half_lambda():
    for seed in range(6):
        h = _random_hypothesis(8, 12, 3, seed)
        x = np.random.default_rng(100 + seed).standard_normal(8) * 0.4
        label, _, _ = predict(h, x)
        cert = certified_radius(h, x, label)
        assert cert.radius <= h.lam / 2 + 1e-12
        if cert.radius > 0:
            assert 2 <= cert.best_s <= h.dict.p - 1
            assert cert.binding_term in ("gap_limited", "margin_limited")


def test_certificate_invariant_under_weight_rescale():
    h = _random_hypothesis(8, 12, 3, seed=1)
    hs = Hypothesis(h.dict, 10.0 * h.weights, h.lam)
    x = np.random.default_rng(42).standard_normal(8) * 0.4
    label, _, _ = predict(h, x)
    a = certified_radius(h, x, label)
    b = certified_radius(hs, x, label)
    assert a.radius == pytest.approx(b.radius, abs=1e-12)
    assert a.best_s == b.best_s


def test_certificate_sound_on_sphere():
    # flipping inside the certified ball would falsify the certificate
    rng = np.random.default_rng(77)
    for seed in (0, 1):
        h = _random_hypothesis(6, 8, 2, seed, lam=0.25)
        x = rng.standard_normal(6) * 0.4
        label, _, _ = predict(h, x)
        cert = certified_radius(h, x, label)
        if cert.radius == 0:
            continue
        dirs = rng.standard_normal((400, 6))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        for v in dirs:
            flipped, _, _ = predict(h, x + cert.radius * v)
            assert flipped == label


def test_certified_radius_matches_bruteforce_scan():
    # Independent recomputation of the level scan. The margin discount at
    # level s must use the order-(s-1) Babel value, not order s-2; a
    # too-small order inflates the radius past what sphere attacks respect.
    from oracles import babel_bruteforce
    from sparsecert import gap_profile

    rng = np.random.default_rng(99)
    checked = 0
    for seed in range(4):
        h = _random_hypothesis(6, 8, 2, seed, lam=0.25)
        spread = float(np.linalg.norm(h.weights[:, 0] - h.weights[:, 1]))
        for _ in range(3):
            x = rng.standard_normal(6) * 0.4
            label, _, res = predict(h, x)
            margin = multiclass_margin(h, x, label)
            if margin <= 0:
                continue
            margin_norm = margin if h.binary else margin / spread
            taus = gap_profile(res).tau
            best = 0.0
            for s in range(2, h.dict.p):
                eta = babel_bruteforce(h.dict.atoms, s - 1)
                if eta >= 1.0:
                    continue
                best = max(best, min(taus[s] / 2.0,
                                     margin_norm * math.sqrt(1.0 - eta)))
            cert = certified_radius(h, x, label)
            assert cert.radius == pytest.approx(max(best, 0.0), rel=1e-12,
                                                abs=1e-15)
            checked += 1
    assert checked >= 6


def test_min_certified_radius_no_correct_predictions():
    h = _binary_identity()
    xs = np.array([[0.8, 0.1], [0.1, 0.8]])
    wrong = np.array([0, 1])  # both labels inverted
    assert min_certified_radius(h, (xs, wrong)) == 0.0


def test_min_certified_radius_is_minimum():
    h = _random_hypothesis(8, 12, 2, seed=3)
    rng = np.random.default_rng(5)
    xs = rng.standard_normal((10, 8)) * 0.4
    ys = np.array([predict(h, x)[0] for x in xs])
    per = [certified_radius(h, x, int(y)).radius for x, y in zip(xs, ys)]
    assert min_certified_radius(h, (xs, ys)) == pytest.approx(min(per))


def test_certified_accuracy_curve():
    h = _random_hypothesis(8, 12, 2, seed=4)
    rng = np.random.default_rng(6)
    xs = rng.standard_normal((15, 8)) * 0.4
    ys = np.array([predict(h, x)[0] for x in xs])
    ys[::5] = (ys[::5] + 1) % 2  # plant some mistakes
    radii = np.linspace(0.0, h.lam / 2 + 0.05, 8)
    curve = certified_accuracy(h, (xs, ys), radii)
    clean = np.mean([predict(h, x)[0] == y for x, y in zip(xs, ys)])
    assert curve[0] == pytest.approx(clean)
    assert np.all(np.diff(curve) <= 1e-15)
    assert curve[-1] == 0.0  # beyond the lambda/2 cap nothing certifies


# ---------------------------------------------------------------------------
# generalization-gap calculator

# (b, L, B, d, p, m, lam, eta, s, nu, delta, tau) -> (gap, k_lambda, m_min)
# outputs frozen from a 50-digit arbitrary-precision evaluation
PINNED_BOUNDS = [
    ((1.0, 1.0, 1.0, 100, 120, 1000, 0.2, 0.5, 20, 0.1, 0.05, 0.5),
     (11.001409997176278, 391.97560814373264, 435.5284534930363)),
    ((2.0, 1.5, 3.0, 50, 64, 5000, 0.35, 0.2, 10, 0.05, 0.01, 0.4),
     (5.348194274454599, 192.49119674649427, 598.8615009890931)),
    ((1.0, 1.0, 10.0, 784, 128, 10000, 0.2, 0.9, 60, 0.25, 0.001, 0.6),
     (11.862113418397266, 493.9695101796658, 987.9390203593318)),
    ((0.5, 2.0, 1.2, 10, 15, 64, 1.0, 0.0, 3, 0.0, 0.5, 0.3),
     (2.6947787255443214, 64.0, 711.1111111111112)),
    ((3.0, 0.5, 2.0, 30, 40, 100000, 0.05, 0.7, 5, 0.02, 0.1, 0.0),
     (1.3923863859892098, 2043.7536229983039, math.inf)),
]


def _inputs(tup) -> BoundInputs:
    b, lip, wb, d, p, m, lam, eta, s, nu, delta, tau = tup
    return BoundInputs(loss_bound=b, loss_lipschitz=lip, weight_norm_bound=wb,
                       input_dim=d, num_atoms=p, num_samples=m, lam=lam,
                       coherence_bound=eta, sparsity=s, perturbation=nu,
                       confidence=delta, min_gap=tau)


@pytest.mark.parametrize("tup,want", PINNED_BOUNDS)
def test_bound_pinned_values(tup, want):
    rep = generalization_bound(_inputs(tup))
    gap, k, m_min = want
    assert rep.gap_bound == pytest.approx(gap, rel=1e-12)
    assert rep.k_lambda == pytest.approx(k, rel=1e-12)
    if math.isinf(m_min):
        assert math.isinf(rep.m_min)
        assert not rep.applicable
    else:
        assert rep.m_min == pytest.approx(m_min, rel=1e-12)
        assert rep.applicable == (tup[5] > m_min)


def test_k_lambda_exact_at_unit_penalty_zero_noise():
    tup = (1.0, 1.0, 1.0, 10, 15, 100, 1.0, 0.0, 5, 0.0, 0.05, 0.5)
    assert generalization_bound(_inputs(tup)).k_lambda == 64.0


def test_bound_inapplicable_when_gap_small():
    tup = (1.0, 1.0, 1.0, 10, 15, 100, 0.2, 0.0, 5, 0.3, 0.05, 0.5)
    rep = generalization_bound(_inputs(tup))  # tau = 0.5 <= 2 nu = 0.6
    assert math.isinf(rep.m_min)
    assert not rep.applicable


def test_bound_monotone_in_m_and_nu():
    base = list(PINNED_BOUNDS[0][0])
    gaps_m = []
    for m in (500, 1000, 5000, 20000):
        t = list(base)
        t[5] = m
        gaps_m.append(generalization_bound(_inputs(tuple(t))).gap_bound)
    assert all(a > b for a, b in zip(gaps_m, gaps_m[1:]))
    gaps_nu = []
    for nu in (0.0, 0.1, 0.3, 0.6):
        t = list(base)
        t[9] = nu
        gaps_nu.append(generalization_bound(_inputs(tuple(t))).gap_bound)
    assert all(a <= b for a, b in zip(gaps_nu, gaps_nu[1:]))


@pytest.mark.parametrize("field,value", [
    ("num_samples", 0),
    ("confidence", 0.0),
    ("confidence", 1.0),
    ("lam", 0.0),
    ("coherence_bound", 1.0),
    ("coherence_bound", -0.1),
    ("loss_bound", 0.0),
    ("weight_norm_bound", -1.0),
    ("sparsity", -2),
])
def test_bound_domain_errors(field, value):
    good = _inputs(PINNED_BOUNDS[0][0])
    with pytest.raises(DomainError):
        generalization_bound(replace(good, **{field: value}))


def test_bound_domain_error_negative_log_argument():
    # tiny m with large lam makes the covering log argument < 1 and, with a
    # generous delta, the whole covering term negative
    bad = _inputs((1.0, 1.0, 1.0, 2, 2, 1, 500.0, 0.0, 1, 0.0, 0.9999, 0.5))
    with pytest.raises(DomainError):
        generalization_bound(bad)
