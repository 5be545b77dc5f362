"""Supervised training of dictionary + classifier through an unrolled
encoder, and unsupervised dictionary pretraining.

The encoder inside training is a fixed number of FISTA iterations, which is
differentiable once the soft-threshold kink is given the subgradient 0.
Gradients are accumulated in reverse through every iteration; the step-size
constant is held fixed within an epoch so the computation graph stays a pure
function of (D, W, batch).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dictionary import Dictionary, mutual_coherence, normalize_columns, \
    spectral_upper_bound
from .encoder import EncoderConfig, encode
from .errors import NonFinite
from .model import Hypothesis


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    ``lambda_schedule = (start, warmup_epochs)`` ramps the encoder penalty
    linearly up to ``lambda_target``; None means start at half the target
    and ramp over the first 40% of epochs. ``dict_lr_scale`` multiplies the
    dictionary learning rate (0 freezes the dictionary). ``num_atoms`` is
    only consulted by pretraining, which must invent its own dictionary.
    ``probe_size``/``probe_s`` control the per-epoch report probe.
    """

    alpha: float = 1e-3
    beta: float = 1e-4
    lambda_target: float = 0.2
    lambda_schedule: tuple[float, int] | None = None
    unroll_T: int = 25
    epochs: int = 35
    batch_size: int = 128
    adam: tuple[float, float, float, float] = (1e-3, 0.9, 0.999, 1e-8)
    seed: int = 0
    dict_lr_scale: float = 1.0
    num_atoms: int | None = None
    probe_size: int = 256
    probe_s: int = 60

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.lambda_target <= 0:
            raise ValueError("lambda_target must be > 0")
        if self.lambda_schedule is not None:
            start, warmup = self.lambda_schedule
            if start <= 0 or warmup < 0:
                raise ValueError("lambda_schedule needs start > 0, warmup >= 0")
        if self.unroll_T < 1:
            raise ValueError("unroll_T must be >= 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.dict_lr_scale < 0:
            raise ValueError("dict_lr_scale must be >= 0")

    def lam_at(self, epoch: int) -> float:
        """Encoder penalty for a given 0-based epoch."""
        if self.lambda_schedule is None:
            start = 0.5 * self.lambda_target
            warmup = math.ceil(0.4 * self.epochs)
        else:
            start, warmup = self.lambda_schedule
        if warmup <= 0 or epoch >= warmup:
            return self.lambda_target
        return start + (self.lambda_target - start) * (epoch / warmup)


@dataclass(frozen=True)
class TrainReport:
    """Per-epoch training curves plus the final model."""

    loss: np.ndarray = field(repr=False)
    clean_accuracy: np.ndarray = field(repr=False)
    mean_gap: np.ndarray = field(repr=False)
    coherence: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    hypothesis: object = None


def _unroll_forward(gram, bmat, lam, lip, unroll_t):
    """FISTA iterates for a batch (columns = samples), with the tape needed
    for reverse-mode accumulation: pre-threshold masks, previous momentum
    iterates, and momentum coefficients."""
    p, nb = bmat.shape
    step = 1.0 / lip
    theta = lam * step
    z = np.zeros((p, nb))
    y = np.zeros((p, nb))
    t = 1.0
    masks = []
    yprevs = []
    coeffs = []
    for _ in range(unroll_t):
        yprevs.append(y)
        u = y - step * (gram @ y - bmat)
        znew = np.sign(u) * np.maximum(np.abs(u) - theta, 0.0)
        masks.append(np.abs(u) > theta)
        tnew = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        c = (t - 1.0) / tnew
        coeffs.append(c)
        y = znew + c * (znew - z)
        z = znew
        t = tnew
    return z, (masks, yprevs, coeffs, step)


def _unroll_backward(atoms, xmat, gram, tape, dz_last):
    """Gradient of the loss w.r.t. the dictionary, given the gradient at the
    final code. Mirrors the forward tape in reverse; the step constant is
    treated as independent of D."""
    masks, yprevs, coeffs, step = tape
    grad_d = np.zeros_like(atoms)
    dz_cur = dz_last.copy()
    dz_prev = np.zeros_like(dz_last)
    dy = np.zeros_like(dz_last)
    for k in range(len(masks) - 1, -1, -1):
        c = coeffs[k]
        dz_cur += (1.0 + c) * dy
        dz_prev -= c * dy
        du = np.where(masks[k], dz_cur, 0.0)
        yk = yprevs[k]
        grad_d -= step * (atoms @ (yk @ du.T + du @ yk.T) - xmat @ du.T)
        dy = du - step * (gram @ du)
        dz_cur = dz_prev
        dz_prev = np.zeros_like(dz_last)
    return grad_d


def _softmax_head(weights, codes, labels):
    """Mean cross-entropy, gradient at the codes, and gradient at W.

    A single weight column means binary labels in {0, 1} scored by sign.
    """
    nb = codes.shape[1]
    scores = weights.T @ codes
    if weights.shape[1] == 1:
        signed = np.where(np.asarray(labels) == 1, 1.0, -1.0)
        margins = signed * scores[0]
        loss = float(np.mean(np.logaddexp(0.0, -margins)))
        dscores = (-signed / (1.0 + np.exp(margins)) / nb)[None, :]
    else:
        shifted = scores - scores.max(axis=0, keepdims=True)
        expo = np.exp(shifted)
        probs = expo / expo.sum(axis=0, keepdims=True)
        idx = np.asarray(labels, dtype=np.intp)
        loss = float(np.mean(np.log(expo.sum(axis=0)) - shifted[idx, np.arange(nb)]))
        dscores = probs / nb
        dscores[idx, np.arange(nb)] -= 1.0 / nb
    dz = weights @ dscores
    grad_w = codes @ dscores.T
    return loss, dz, grad_w


def unrolled_loss_grads(atoms, weights, xs, labels, lam, alpha, beta,
                        unroll_t, lip):
    """Loss and exact gradients of the unrolled training objective.

    Operates on raw matrices (``atoms`` d x p, ``weights`` p x K, ``xs``
    batch rows) so finite-difference checks can perturb the parameters
    directly; ``lip`` is the step constant, held fixed.
    """
    atoms = np.asarray(atoms, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    xmat = np.asarray(xs, dtype=np.float64).T
    if xmat.shape[1] == 0:
        raise ValueError("batch must be nonempty")
    gram = atoms.T @ atoms
    codes, tape = _unroll_forward(gram, atoms.T @ xmat, lam, lip, unroll_t)

    loss, dz, grad_w = _softmax_head(weights, codes, labels)
    grad_d = _unroll_backward(atoms, xmat, gram, tape, dz)

    if alpha != 0.0:
        eye_gap = np.eye(atoms.shape[1]) - gram
        loss += alpha * float(np.sum(eye_gap * eye_gap))
        grad_d += -4.0 * alpha * (atoms @ eye_gap)
    if beta != 0.0:
        loss += beta * float(np.sum(weights * weights))
        grad_w = grad_w + 2.0 * beta * weights

    if not (np.isfinite(loss) and np.all(np.isfinite(grad_d))
            and np.all(np.isfinite(grad_w))):
        raise NonFinite("non-finite loss or gradient in supervised objective")
    return loss, grad_d, grad_w


def reconstruction_loss_grad(atoms, xs, lam, unroll_t, lip):
    """Mean squared reconstruction error through the unrolled encoder and
    its dictionary gradient (both the direct path and the path through the
    code)."""
    atoms = np.asarray(atoms, dtype=np.float64)
    xmat = np.asarray(xs, dtype=np.float64).T
    nb = xmat.shape[1]
    if nb == 0:
        raise ValueError("batch must be nonempty")
    gram = atoms.T @ atoms
    codes, tape = _unroll_forward(gram, atoms.T @ xmat, lam, lip, unroll_t)
    resid = xmat - atoms @ codes
    loss = float(np.sum(resid * resid) / nb)
    grad_d = -(2.0 / nb) * (resid @ codes.T)
    dz = -(2.0 / nb) * (atoms.T @ resid)
    grad_d += _unroll_backward(atoms, xmat, gram, tape, dz)
    if not (np.isfinite(loss) and np.all(np.isfinite(grad_d))):
        raise NonFinite("non-finite loss or gradient in reconstruction objective")
    return loss, grad_d


def supervised_loss(h, batch, alpha: float, beta: float, unroll_t: int):
    """Training objective and gradients at a hypothesis, on one batch."""
    xs, labels = batch
    return unrolled_loss_grads(h.dict.atoms, h.weights, xs, labels, h.lam,
                               alpha, beta, unroll_t, h.dict.lipschitz)


class _Adam:
    """Standard Adam on one parameter array."""

    def __init__(self, shape, lr, b1, b2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, param, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1.0 - self.b1) * grad
        self.v = self.b2 * self.v + (1.0 - self.b2) * grad * grad
        mhat = self.m / (1.0 - self.b1 ** self.t)
        vhat = self.v / (1.0 - self.b2 ** self.t)
        return param - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _as_arrays(data):
    xs = np.asarray(data.samples if hasattr(data, "samples") else data[0],
                    dtype=np.float64)
    ys = np.asarray(data.labels if hasattr(data, "samples") else data[1])
    return xs, ys.astype(np.int64)


def _probe_metrics(atoms, weights, lam, xs, ys, probe_s):
    """Verified-encoder accuracy and mean gap on the probe subset."""
    d = Dictionary(atoms)
    cfg = EncoderConfig()
    correct = 0
    gaps = []
    s_idx = min(probe_s, d.p - 1)
    for row, y in zip(xs, ys):
        res = encode(d, row, lam, cfg)
        scores = weights.T @ res.code
        if weights.shape[1] == 1:
            label = 1 if scores[0] > 0 else 0
        else:
            label = int(np.argmax(scores))
        correct += label == int(y)
        gaps.append(float(np.sort(res.slack)[s_idx]))
    return correct / len(xs), float(np.mean(gaps))


def train_supervised(data, cfg: TrainConfig, init: Dictionary):
    """Minimize the regularized training objective with Adam.

    The dictionary is re-normalized to unit columns after every update, the
    penalty ramps per ``cfg.lam_at``, and shuffling draws from one seeded
    stream, so the whole run is a deterministic function of its arguments.
    Two-class data gets a single-column (sign-decision) classifier.
    """
    xs, ys = _as_arrays(data)
    m = xs.shape[0]
    if m == 0:
        raise ValueError("data must be nonempty")
    num_classes = int(ys.max()) + 1
    k_cols = 1 if num_classes <= 2 else num_classes

    atoms = init.atoms.copy()
    weights = np.zeros((init.p, k_cols))
    lr, b1, b2, eps = cfg.adam
    opt_d = _Adam(atoms.shape, lr * cfg.dict_lr_scale, b1, b2, eps)
    opt_w = _Adam(weights.shape, lr, b1, b2, eps)
    rng = np.random.default_rng(cfg.seed)

    probe = slice(0, min(cfg.probe_size, m))
    curves = {name: [] for name in ("loss", "acc", "gap", "mu", "lam")}

    for epoch in range(cfg.epochs):
        lam = cfg.lam_at(epoch)
        lip = spectral_upper_bound(atoms.T @ atoms)
        order = rng.permutation(m)
        total, seen = 0.0, 0
        for lo in range(0, m, cfg.batch_size):
            sel = order[lo:lo + cfg.batch_size]
            try:
                loss, g_d, g_w = unrolled_loss_grads(
                    atoms, weights, xs[sel], ys[sel], lam,
                    cfg.alpha, cfg.beta, cfg.unroll_T, lip)
            except NonFinite as exc:
                raise NonFinite(
                    f"epoch {epoch}, batch at offset {lo}: {exc}") from exc
            atoms = normalize_columns(opt_d.step(atoms, g_d)).atoms.copy()
            weights = opt_w.step(weights, g_w)
            total += loss * sel.size
            seen += sel.size
        acc, gap = _probe_metrics(atoms, weights, lam, xs[probe], ys[probe],
                                  cfg.probe_s)
        curves["loss"].append(total / seen)
        curves["acc"].append(acc)
        curves["gap"].append(gap)
        curves["mu"].append(mutual_coherence(Dictionary(atoms)))
        curves["lam"].append(lam)

    hyp = Hypothesis(dict=Dictionary(atoms), weights=weights,
                     lam=cfg.lambda_target)
    report = TrainReport(loss=np.array(curves["loss"]),
                         clean_accuracy=np.array(curves["acc"]),
                         mean_gap=np.array(curves["gap"]),
                         coherence=np.array(curves["mu"]),
                         lam=np.array(curves["lam"]),
                         hypothesis=hyp)
    return hyp, report


def pretrain_dictionary(data, cfg: TrainConfig) -> Dictionary:
    """Fit a dictionary to unlabeled data by reconstruction loss alone.

    Starts from a normalized Gaussian matrix drawn from ``cfg.seed``;
    ``cfg.num_atoms`` fixes its width. Same unrolled encoder, penalty ramp,
    Adam, and per-update renormalization as supervised training.
    """
    if hasattr(data, "samples"):
        xs = np.asarray(data.samples, dtype=np.float64)
    else:
        xs = np.asarray(data, dtype=np.float64)
    m, dim = xs.shape
    if m == 0:
        raise ValueError("data must be nonempty")
    if cfg.num_atoms is None:
        raise ValueError("cfg.num_atoms must be set for pretraining")

    rng = np.random.default_rng(cfg.seed)
    atoms = normalize_columns(rng.standard_normal((dim, cfg.num_atoms))).atoms.copy()
    lr, b1, b2, eps = cfg.adam
    opt = _Adam(atoms.shape, lr, b1, b2, eps)

    for epoch in range(cfg.epochs):
        lam = cfg.lam_at(epoch)
        lip = spectral_upper_bound(atoms.T @ atoms)
        order = rng.permutation(m)
        for lo in range(0, m, cfg.batch_size):
            sel = order[lo:lo + cfg.batch_size]
            try:
                _, g_d = reconstruction_loss_grad(atoms, xs[sel], lam,
                                                  cfg.unroll_T, lip)
            except NonFinite as exc:
                raise NonFinite(
                    f"epoch {epoch}, batch at offset {lo}: {exc}") from exc
            atoms = normalize_columns(opt.step(atoms, g_d)).atoms.copy()
    return Dictionary(atoms)
