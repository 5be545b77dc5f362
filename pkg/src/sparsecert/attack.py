"""L2-bounded evasion attacks: projected gradient descent and random
sphere search.

Gradients flow through the encoder in closed form: at a verified Lasso
optimum the code on the support S is (D_S^T D_S)^{-1} (D_S^T x - lam*sigma),
so the input gradient is exact while the support stays fixed. Support
changes between steps are handled by re-encoding at each iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .encoder import EncoderConfig, DEFAULT_CONFIG, encode
from .model import Hypothesis


@dataclass(frozen=True)
class AttackConfig:
    """PGD settings. ``step_size=None`` means 2.5 * budget / steps."""

    budget: float
    steps: int = 40
    step_size: float | None = None
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")

    @property
    def effective_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        if self.steps == 0:
            return 0.0
        return 2.5 * self.budget / self.steps


def _loss_label_grad(h: Hypothesis, x: np.ndarray, y: int,
                     cfg: EncoderConfig):
    """Cross-entropy loss, predicted label, and input gradient at x."""
    res = encode(h.dict, x, h.lam, cfg)
    scores = h.weights.T @ res.code
    if h.binary:
        label = 1 if scores[0] > 0 else 0
        signed = 1.0 if y == 1 else -1.0
        loss = float(np.logaddexp(0.0, -signed * scores[0]))
        dscores = np.array([-signed / (1.0 + np.exp(signed * scores[0]))])
    else:
        label = int(np.argmax(scores))
        shifted = scores - scores.max()
        logits = np.exp(shifted)
        probs = logits / logits.sum()
        loss = float(np.log(logits.sum()) - shifted[y])
        dscores = probs.copy()
        dscores[y] -= 1.0

    support = res.support
    if support.size == 0:
        return loss, label, np.zeros(x.shape[0]), res
    grad_code = (h.weights[support, :] @ dscores).ravel()
    gram_s = h.dict.gram[np.ix_(support, support)]
    grad_x = h.dict.atoms[:, support] @ np.linalg.solve(gram_s, grad_code)
    return loss, label, grad_x, res


def input_gradient(h: Hypothesis, x: np.ndarray, y: int,
                   cfg: EncoderConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Gradient of the classification loss w.r.t. the input, holding the
    encoder's support and sign pattern fixed. Zero on empty support."""
    x = np.asarray(x, dtype=np.float64)
    _, _, grad, _ = _loss_label_grad(h, x, y, cfg)
    return grad


def _project(x0: np.ndarray, x: np.ndarray, budget: float) -> np.ndarray:
    delta = x - x0
    nrm = float(np.linalg.norm(delta))
    if nrm <= budget:
        return x
    if budget == 0.0:
        return x0.copy()
    return x0 + delta * (budget / nrm)


def _ball_point(rng: np.random.Generator, x0: np.ndarray,
                budget: float) -> np.ndarray:
    """Uniform draw from the closed budget-ball around x0."""
    direction = rng.standard_normal(x0.shape[0])
    nrm = float(np.linalg.norm(direction))
    if nrm == 0.0:
        return x0.copy()
    radius = budget * rng.random() ** (1.0 / x0.shape[0])
    return x0 + direction * (radius / nrm)


def pgd_l2(h: Hypothesis, x: np.ndarray, y: int, cfg: AttackConfig,
           *, sample_index: int = 0, extra_starts=(),
           encoder_cfg: EncoderConfig = DEFAULT_CONFIG):
    """Projected gradient ascent on the loss inside the budget ball.

    Restart 0 starts at x itself; later restarts start uniformly inside the
    ball. Every iterate (steps + 1 per restart) is scored and the highest
    loss one is returned; success means its prediction differs from ``y``.
    ``extra_starts`` adds warm-start restarts (projected into the ball)
    whose randomness does not perturb the standard restarts.
    """
    x0 = np.asarray(x, dtype=np.float64)
    step = cfg.effective_step_size
    best_loss = -np.inf
    best_x = x0

    starts: list[tuple[np.ndarray, np.random.Generator]] = []
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, sample_index, r])
        start = x0.copy() if r == 0 else _ball_point(rng, x0, cfg.budget)
        starts.append((start, rng))
    for j, warm in enumerate(extra_starts):
        rng = np.random.default_rng([cfg.seed, sample_index, 1000 + j])
        warm = _project(x0, np.asarray(warm, dtype=np.float64), cfg.budget)
        starts.append((warm, rng))

    for cur, rng in starts:
        for _ in range(cfg.steps):
            loss, _, grad, _ = _loss_label_grad(h, cur, y, encoder_cfg)
            if loss > best_loss:
                best_loss, best_x = loss, cur
            gnorm = float(np.linalg.norm(grad))
            if gnorm <= 0.0 or not np.isfinite(gnorm):
                grad = rng.standard_normal(x0.shape[0])
                gnorm = float(np.linalg.norm(grad))
                if gnorm == 0.0:
                    continue
            cur = _project(x0, cur + (step / gnorm) * grad, cfg.budget)
        loss, _, _, _ = _loss_label_grad(h, cur, y, encoder_cfg)
        if loss > best_loss:
            best_loss, best_x = loss, cur

    _, label, _, _ = _loss_label_grad(h, best_x, y, encoder_cfg)
    return best_x, label != int(y)


def sphere_search(h: Hypothesis, x: np.ndarray, y: int, budget: float,
                  trials: int, seed: int,
                  encoder_cfg: EncoderConfig = DEFAULT_CONFIG):
    """Gradient-free certificate check: random points on the budget sphere
    plus a PGD endpoint. Any label flip beats any non-flip; ties resolve to
    the higher loss."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    x0 = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)

    candidates = [x0]
    for _ in range(trials):
        direction = rng.standard_normal(x0.shape[0])
        nrm = float(np.linalg.norm(direction))
        if nrm == 0.0:
            continue
        candidates.append(x0 + direction * (budget / nrm))
    pgd_adv, _ = pgd_l2(h, x0, y, AttackConfig(budget=budget, seed=seed),
                        encoder_cfg=encoder_cfg)
    candidates.append(pgd_adv)

    best_key = (-1, -np.inf)
    best_x = x0
    for cand in candidates:
        loss, label, _, _ = _loss_label_grad(h, cand, y, encoder_cfg)
        key = (1 if label != int(y) else 0, loss)
        if key > best_key:
            best_key, best_x = key, cand
    return best_x, best_key[0] == 1


def robust_accuracy(h: Hypothesis, dataset, budgets, cfg: AttackConfig,
                    encoder_cfg: EncoderConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Per-budget fraction of samples PGD fails to flip.

    Budgets must ascend. A sample flipped at one budget stays flipped at
    every larger one, and the surviving adversarial point warm-starts the
    next budget, so the curve is nonincreasing by construction.
    """
    budgets = np.asarray(budgets, dtype=np.float64)
    if np.any(np.diff(budgets) < 0):
        raise ValueError("budgets must be sorted ascending")
    if hasattr(dataset, "samples"):
        xs = np.asarray(dataset.samples, dtype=np.float64)
        ys = np.asarray(dataset.labels)
    else:
        xs, ys = dataset
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys)

    fails = np.zeros((budgets.size, xs.shape[0]), dtype=bool)
    for i, (row, label) in enumerate(zip(xs, ys)):
        flipped = False
        warm = None
        for j, budget in enumerate(budgets):
            if flipped:
                fails[j, i] = True
                continue
            run_cfg = replace(cfg, budget=float(budget))
            extra = () if warm is None else (warm,)
            adv, success = pgd_l2(h, row, int(label), run_cfg,
                                  sample_index=i, extra_starts=extra,
                                  encoder_cfg=encoder_cfg)
            if success:
                flipped = True
                fails[j, i] = True
            else:
                warm = adv
    return 1.0 - fails.mean(axis=1)
