import numpy as np
import pytest

from sparsecert import (AttackConfig, Dictionary, Hypothesis, certified_radius,
                        encode, input_gradient, pgd_l2, predict,
                        robust_accuracy, sphere_search)

from conftest import random_dictionary
from oracles import central_difference_grad


def _hyp(d: int, p: int, k: int, seed: int, lam: float = 0.2) -> Hypothesis:
    rng = np.random.default_rng(seed)
    return Hypothesis(random_dictionary(d, p, seed=seed + 1),
                      rng.standard_normal((p, k)), lam)


def _ce_loss(h: Hypothesis, x: np.ndarray, y: int) -> float:
    _, scores, _ = predict(h, x)
    if h.binary:
        signed = 1.0 if y == 1 else -1.0
        return float(np.logaddexp(0.0, -signed * scores[0]))
    shifted = scores - scores.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[y])


def _away_from_kinks(h: Hypothesis, x: np.ndarray, gap: float = 1e-4) -> bool:
    res = encode(h.dict, x, h.lam)
    if res.support.size == 0:
        return False
    off = np.delete(res.slack, res.support)
    if off.size and off.min() < gap:
        return False
    return np.abs(res.code[res.support]).min() >= gap


def test_input_gradient_zero_on_empty_support():
    h = _hyp(6, 8, 1, seed=0, lam=0.5)
    assert np.all(input_gradient(h, np.zeros(6), 1) == 0.0)


def test_input_gradient_identity_dictionary():
    # isolated active coordinate: d loss / dx reduces to the logistic factor
    h = Hypothesis(Dictionary(np.eye(2)), np.array([[1.0], [0.0]]), 0.3)
    x = np.array([0.8, 0.1])
    g = input_gradient(h, x, 1)
    score = 0.5
    want0 = -1.0 / (1.0 + np.exp(score))
    assert g == pytest.approx([want0, 0.0], abs=1e-12)


@pytest.mark.parametrize("k", [1, 3])
def test_input_gradient_matches_finite_differences(k):
    rng = np.random.default_rng(17 + k)
    checked = 0
    for seed in range(40):
        h = _hyp(8, 12, k, seed=seed * 3)
        x = rng.standard_normal(8) * 0.5
        if not _away_from_kinks(h, x):
            continue
        y = rng.integers(0, h.num_classes)
        g = input_gradient(h, x, int(y))
        fd = central_difference_grad(lambda v: _ce_loss(h, v, int(y)), x, 1e-6)
        denom = max(np.linalg.norm(fd), 1e-12)
        assert np.linalg.norm(g - fd) / denom <= 1e-4
        checked += 1
    assert checked >= 8


def test_attack_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(budget=-0.1)
    with pytest.raises(ValueError):
        AttackConfig(budget=0.1, steps=-1)
    with pytest.raises(ValueError):
        AttackConfig(budget=0.1, step_size=0.0)
    with pytest.raises(ValueError):
        AttackConfig(budget=0.1, restarts=0)
    assert AttackConfig(budget=0.4, steps=10).effective_step_size == \
        pytest.approx(0.1)
    assert AttackConfig(budget=0.4, steps=0).effective_step_size == 0.0
    assert AttackConfig(budget=0.4, step_size=0.03).effective_step_size == 0.03


def test_pgd_zero_budget_returns_clean_point():
    h = _hyp(6, 8, 2, seed=5)
    x = np.random.default_rng(9).standard_normal(6) * 0.4
    y, _, _ = predict(h, x)
    adv, success = pgd_l2(h, x, y, AttackConfig(budget=0.0, steps=5))
    assert np.array_equal(adv, x)
    assert not success


def test_pgd_detects_already_wrong_label():
    h = _hyp(6, 8, 2, seed=5)
    x = np.random.default_rng(9).standard_normal(6) * 0.4
    y, _, _ = predict(h, x)
    wrong = (y + 1) % h.num_classes
    _, success = pgd_l2(h, x, wrong, AttackConfig(budget=0.0, steps=0))
    assert success


def test_pgd_respects_budget_and_never_hurts_loss():
    rng = np.random.default_rng(3)
    for seed in range(5):
        h = _hyp(8, 12, 3, seed=seed)
        x = rng.standard_normal(8) * 0.4
        y, _, _ = predict(h, x)
        cfg = AttackConfig(budget=0.3, steps=15, restarts=2, seed=seed)
        adv, _ = pgd_l2(h, x, y, cfg)
        assert np.linalg.norm(adv - x) <= cfg.budget + 1e-9
        assert _ce_loss(h, adv, y) >= _ce_loss(h, x, y) - 1e-12


def test_pgd_deterministic():
    h = _hyp(8, 12, 2, seed=11)
    x = np.random.default_rng(13).standard_normal(8) * 0.4
    y, _, _ = predict(h, x)
    cfg = AttackConfig(budget=0.25, steps=10, seed=4)
    a1, s1 = pgd_l2(h, x, y, cfg, sample_index=7)
    a2, s2 = pgd_l2(h, x, y, cfg, sample_index=7)
    assert np.array_equal(a1, a2) and s1 == s2


def test_pgd_extra_starts_only_help():
    h = _hyp(8, 12, 2, seed=21)
    rng = np.random.default_rng(23)
    x = rng.standard_normal(8) * 0.4
    y, _, _ = predict(h, x)
    cfg = AttackConfig(budget=0.3, steps=10, seed=2)
    plain, _ = pgd_l2(h, x, y, cfg)
    warm = x + 0.05 * rng.standard_normal(8)
    warmed, _ = pgd_l2(h, x, y, cfg, extra_starts=(warm,))
    assert _ce_loss(h, warmed, y) >= _ce_loss(h, plain, y) - 1e-12


def test_pgd_cannot_flip_below_certified_radius():
    rng = np.random.default_rng(31)
    tried = 0
    for seed in range(10):
        h = _hyp(6, 8, 2, seed=seed, lam=0.25)
        x = rng.standard_normal(6) * 0.4
        y, _, _ = predict(h, x)
        cert = certified_radius(h, x, y)
        if cert.radius <= 0:
            continue
        cfg = AttackConfig(budget=cert.radius, steps=25, restarts=3, seed=seed)
        _, success = pgd_l2(h, x, y, cfg)
        assert not success
        tried += 1
    assert tried >= 3


def test_sphere_search_validation_and_soundness():
    h = _hyp(6, 8, 2, seed=2, lam=0.25)
    x = np.random.default_rng(41).standard_normal(6) * 0.4
    y, _, _ = predict(h, x)
    with pytest.raises(ValueError):
        sphere_search(h, x, y, 0.1, 0, seed=0)
    cert = certified_radius(h, x, y)
    if cert.radius > 0:
        _, flipped = sphere_search(h, x, y, cert.radius, 500, seed=0)
        assert not flipped
    # the clean point itself is a candidate, so a wrong label is always found
    wrong = (y + 1) % 2
    _, flipped = sphere_search(h, x, wrong, 0.0, 3, seed=0)
    assert flipped


def test_robust_accuracy_curve():
    h = _hyp(8, 12, 2, seed=6)
    rng = np.random.default_rng(51)
    xs = rng.standard_normal((12, 8)) * 0.4
    ys = np.array([predict(h, row)[0] for row in xs])
    cfg = AttackConfig(budget=0.0, steps=12, restarts=2, seed=3)
    budgets = [0.0, 0.1, 0.3, 0.8]
    curve = robust_accuracy(h, (xs, ys), budgets, cfg)
    assert curve[0] == 1.0  # labels chosen as the model's own predictions
    assert np.all(np.diff(curve) <= 1e-15)
    again = robust_accuracy(h, (xs, ys), budgets, cfg)
    assert np.array_equal(curve, again)


def test_robust_accuracy_budget_order_enforced():
    h = _hyp(6, 8, 2, seed=2)
    xs = np.zeros((1, 6))
    ys = np.array([0])
    with pytest.raises(ValueError):
        robust_accuracy(h, (xs, ys), [0.3, 0.1], AttackConfig(budget=0.0))
