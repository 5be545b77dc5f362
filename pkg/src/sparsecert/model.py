"""Linear classification on sparse codes, robustness certificates, and the
sample-complexity / generalization-gap calculator.

A hypothesis scores a sample as W^T phi_D(x) where phi_D is the verified
Lasso encoder. Certificates trade the encoder gap against the classification
margin across sparsity levels; both quantities degrade gracefully under
bounded input perturbations, which is what makes the radius sound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .dictionary import Dictionary, rip_upper_bound
from .encoder import EncodeResult, EncoderConfig, DEFAULT_CONFIG, encode
from .errors import DomainError, NonFinite, ZeroWeights

_ZERO_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Hypothesis:
    """Dictionary + linear read-out.

    ``weights`` has one column per class score. A single column selects
    binary mode: the label is 1 when the score is positive, 0 otherwise,
    and margins are normalized by the weight norm.
    """

    dict: Dictionary
    weights: np.ndarray = field(repr=False)
    lam: float
    num_classes: int = 0

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        if w.ndim == 1:
            w = w[:, None]
        if w.ndim != 2 or w.shape[0] != self.dict.p:
            raise ValueError(
                f"weights must be ({self.dict.p}, K), got {w.shape}"
            )
        if not np.all(np.isfinite(w)):
            raise NonFinite("weights contain non-finite entries")
        if self.lam <= 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        k = w.shape[1]
        object.__setattr__(self, "num_classes", 2 if k == 1 else k)

    @property
    def binary(self) -> bool:
        return self.weights.shape[1] == 1

    @cached_property
    def weight_norm(self) -> float:
        """Euclidean norm of the single weight column (binary mode)."""
        return float(np.linalg.norm(self.weights[:, 0]))

    @cached_property
    def weight_spread(self) -> float:
        """Largest pairwise column distance max_{i != j} ||W_i - W_j||_2."""
        w = self.weights
        k = w.shape[1]
        best = 0.0
        for i in range(k):
            diff = w[:, i + 1:] - w[:, i:i + 1]
            if diff.size:
                best = max(best, float(np.linalg.norm(diff, axis=0).max()))
        return best

    @cached_property
    def _scan(self) -> tuple[np.ndarray, np.ndarray]:
        """Sparsity levels s in 2..p-1 with coherence bound < 1, and the
        matching sqrt(1 - bound) factors."""
        d = self.dict
        s_all = np.arange(2, d.p)
        bounds = np.array([rip_upper_bound(d, int(s)) for s in s_all])
        keep = bounds < 1.0
        return s_all[keep], np.sqrt(1.0 - bounds[keep])


@dataclass(frozen=True)
class Certificate:
    """Certified perturbation radius for one sample.

    ``binding_term`` records which side of the min was active at the best
    sparsity level: "gap_limited" (encoder gap), "margin_limited"
    (classification margin), or "none" when the radius is zero.
    """

    radius: float
    best_s: int
    margin: float
    tau_at_best_s: float
    binding_term: str


def _as_xy(dataset) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(dataset, "samples"):
        return np.asarray(dataset.samples, dtype=np.float64), np.asarray(dataset.labels)
    xs, ys = dataset
    return np.asarray(xs, dtype=np.float64), np.asarray(ys)


def predict(h: Hypothesis, x: np.ndarray,
            cfg: EncoderConfig = DEFAULT_CONFIG):
    """Return (label, scores, encode result) for one sample.

    Multiclass label is the argmax score, ties broken by lowest index.
    """
    res = encode(h.dict, x, h.lam, cfg)
    scores = h.weights.T @ res.code
    if h.binary:
        label = 1 if scores[0] > 0 else 0
    else:
        label = int(np.argmax(scores))
    return label, scores, res


def _margin_from_scores(h: Hypothesis, scores: np.ndarray, y: int) -> float:
    if h.binary:
        if h.weight_norm <= _ZERO_WEIGHT_TOL:
            raise ZeroWeights("binary margin undefined for near-zero weights")
        signed = 1.0 if y == 1 else -1.0
        return float(signed * scores[0] / h.weight_norm)
    others = np.delete(scores, y)
    return float(scores[y] - others.max())


def multiclass_margin(h: Hypothesis, x: np.ndarray, y: int,
                      cfg: EncoderConfig = DEFAULT_CONFIG) -> float:
    """Score gap to the best competing class; binary mode returns the
    weight-normalized signed score."""
    if not 0 <= y < h.num_classes:
        raise ValueError(f"label {y} outside [0, {h.num_classes - 1}]")
    _, scores, _ = predict(h, x, cfg)
    return _margin_from_scores(h, scores, y)


_ZERO_CERT = Certificate(radius=0.0, best_s=-1, margin=0.0,
                         tau_at_best_s=0.0, binding_term="none")


def certified_radius(h: Hypothesis, x: np.ndarray, y_pred: int,
                     cfg: EncoderConfig = DEFAULT_CONFIG) -> Certificate:
    """Largest perturbation norm under which the prediction provably holds.

    Scans sparsity levels s = 2..p-1, taking at each the smaller of half the
    encoder gap and the coherence-discounted normalized margin, and returns
    the best level. The radius never exceeds lambda/2 because every gap
    entry is at most lambda.
    """
    _, scores, res = predict(h, x, cfg)
    margin = _margin_from_scores(h, scores, y_pred)
    if margin <= 0:
        return replace(_ZERO_CERT, margin=margin)
    if h.binary:
        margin_norm = margin
    else:
        if h.weight_spread <= _ZERO_WEIGHT_TOL:
            return replace(_ZERO_CERT, margin=margin)
        margin_norm = margin / h.weight_spread

    s_vals, discounts = h._scan
    if s_vals.size == 0:
        return replace(_ZERO_CERT, margin=margin)
    taus = np.sort(res.slack)
    gap_terms = 0.5 * taus[s_vals]
    margin_terms = margin_norm * discounts
    values = np.minimum(gap_terms, margin_terms)
    best = int(np.argmax(values))
    radius = float(values[best])
    if radius <= 0:
        return replace(_ZERO_CERT, margin=margin)
    binding = "gap_limited" if gap_terms[best] <= margin_terms[best] \
        else "margin_limited"
    return Certificate(radius=radius, best_s=int(s_vals[best]), margin=margin,
                       tau_at_best_s=float(taus[s_vals[best]]),
                       binding_term=binding)


def min_certified_radius(h: Hypothesis, dataset,
                         cfg: EncoderConfig = DEFAULT_CONFIG) -> float:
    """Smallest certified radius among correctly-predicted samples."""
    xs, ys = _as_xy(dataset)
    best = math.inf
    seen = False
    for row, y in zip(xs, ys):
        label, scores, res = predict(h, row, cfg)
        if label != int(y):
            continue
        seen = True
        cert = certified_radius(h, row, label, cfg)
        best = min(best, cert.radius)
    return best if seen else 0.0


def certified_accuracy(h: Hypothesis, dataset, radii,
                       cfg: EncoderConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Fraction of samples both correctly predicted and certified at each
    budget. ``radii`` must be sorted ascending; the curve is nonincreasing."""
    xs, ys = _as_xy(dataset)
    radii = np.asarray(radii, dtype=np.float64)
    per_sample = np.full(xs.shape[0], -1.0)
    for i, (row, y) in enumerate(zip(xs, ys)):
        label, _, _ = predict(h, row, cfg)
        if label == int(y):
            per_sample[i] = certified_radius(h, row, label, cfg).radius
    return np.array([(per_sample >= r).mean() for r in radii])


@dataclass(frozen=True)
class BoundInputs:
    """Constants entering the generalization-gap calculator.

    ``loss_bound`` is the uniform bound on the loss, ``weight_norm_bound``
    the spectral-norm bound on the classifier, ``coherence_bound`` an upper
    bound (< 1) on the restricted correlation of the dictionary class at
    sparsity ``sparsity``, ``min_gap`` the minimal encoder gap measured on
    the sample, and ``perturbation`` the input noise level it must exceed
    twice over.
    """

    loss_bound: float
    loss_lipschitz: float
    weight_norm_bound: float
    input_dim: int
    num_atoms: int
    num_samples: int
    lam: float
    coherence_bound: float
    sparsity: int
    perturbation: float
    confidence: float
    min_gap: float


@dataclass(frozen=True)
class BoundReport:
    """Evaluated generalization bound plus the minimal-sample condition."""

    gap_bound: float
    m_min: float
    k_lambda: float
    applicable: bool
    inputs: BoundInputs


def generalization_bound(inputs: BoundInputs) -> BoundReport:
    """Evaluate the high-probability generalization-gap bound.

    gap_bound is a sum of three terms: a covering-number term scaling as
    sqrt(log / m), a split-concentration term, and an encoder-stability
    term scaling as sqrt(s)/m. ``applicable`` flags whether the sample size
    clears the minimal-sample condition m_min; when the measured gap is at
    most twice the perturbation level, m_min is infinite.
    """
    b = inputs.loss_bound
    lip = inputs.loss_lipschitz
    wb = inputs.weight_norm_bound
    d, p, m = inputs.input_dim, inputs.num_atoms, inputs.num_samples
    lam = inputs.lam
    eta = inputs.coherence_bound
    s = inputs.sparsity
    nu = inputs.perturbation
    delta = inputs.confidence
    tau = inputs.min_gap

    if m < 1:
        raise DomainError(f"need num_samples >= 1, got {m}")
    if not 0 < delta < 1:
        raise DomainError(f"need 0 < confidence < 1, got {delta}")
    if lam <= 0:
        raise DomainError(f"need lam > 0, got {lam}")
    if not 0 <= eta < 1:
        raise DomainError(f"need 0 <= coherence_bound < 1, got {eta}")
    if b <= 0:
        raise DomainError(f"need loss_bound > 0, got {b}")
    if wb <= 0:
        raise DomainError(f"need weight_norm_bound > 0, got {wb}")
    if s < 0:
        raise DomainError(f"need sparsity >= 0, got {s}")

    inner = ((d + 1) * p * math.log(3.0 * m / (2.0 * lam * (1.0 - eta)))
             + p * math.log(wb) + math.log(4.0 / delta))
    if inner < 0:
        raise DomainError("covering-number term is negative at these inputs")
    split = (2.0 * math.log(m / 2.0) + 2.0 * math.log(2.0 / delta)) / m
    if split < 0:
        raise DomainError("split-concentration term is negative at these inputs")
    gap = (b / math.sqrt(m) * math.sqrt(inner)
           + b * math.sqrt(split)
           + 12.0 * (1.0 + nu) ** 2 * lip * wb * math.sqrt(s) / m)

    k_lam = (2.0 * (1.0 + (1.0 + nu) / (2.0 * lam))
             + 5.0 * (1.0 + nu) / math.sqrt(lam)) ** 2
    if tau > 2.0 * nu:
        m_min = lam * (1.0 - eta) / (tau - 2.0 * nu) ** 2 * k_lam
    else:
        m_min = math.inf
    return BoundReport(gap_bound=gap, m_min=m_min, k_lambda=k_lam,
                       applicable=bool(m > m_min), inputs=inputs)
