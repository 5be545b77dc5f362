"""Lasso encoder: FISTA solve, exact on-support refinement, KKT verification.

The encoder phi_D(x) minimizes 0.5*||x - Dz||^2 + lambda*||z||_1. FISTA
identifies the support, then the code is recomputed exactly on that support
from the stationarity conditions and verified against the full KKT system.
Slack vectors from verified encodes feed the gap profiles used everywhere
downstream, so an approximate iterate is never accepted silently.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .dictionary import Dictionary
from .errors import BadPenalty, NoConvergence, OutOfRange, SingularSupport

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class EncoderConfig:
    """Inference-time encoder settings."""

    iters: int = 200
    kkt_tolerance: float = 1e-8
    support_threshold: float = 1e-10
    max_restarts: int = 5


DEFAULT_CONFIG = EncoderConfig()


@dataclass(frozen=True)
class EncodeResult:
    """A verified Lasso optimum.

    ``slack[i] = lam - |<D_i, x - Dz>|`` is zero (to tolerance) on the
    support and nonnegative off it; ``kkt_residual`` is the worst violation
    of either condition.
    """

    code: np.ndarray = field(repr=False)
    support: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)
    slack: np.ndarray = field(repr=False)
    kkt_residual: float
    lam: float
    iterations_used: int


@dataclass(frozen=True)
class GapProfile:
    """tau[s] = (s+1)-th smallest slack entry, for s = 0..p-1."""

    tau: np.ndarray = field(repr=False)


@numba.njit(cache=True, nogil=True)
def _fista_kernel(g, b, lam, lip, iters):  # pragma: no cover - jitted
    p = g.shape[0]
    step = 1.0 / lip
    theta = lam * step
    z = np.zeros(p)
    y = np.zeros(p)
    t = 1.0
    for _ in range(iters):
        v = y - step * (g @ y - b)
        znew = np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)
        tnew = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = znew + ((t - 1.0) / tnew) * (znew - z)
        z = znew
        t = tnew
    return z


def fista(d: Dictionary, x: np.ndarray, lam: float, iters: int) -> np.ndarray:
    """Run exactly ``iters`` FISTA steps from z0 = 0 and return the iterate.

    Step size is 1/L with L the (power-iteration) largest eigenvalue of
    D^T D; each step soft-thresholds at lambda/L with standard momentum.
    """
    if lam <= 0:
        raise BadPenalty(f"lambda must be > 0, got {lam}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    b = d.atoms.T @ x
    return _fista_kernel(d.gram, b, float(lam), d.lipschitz, int(iters))


def _refine(d: Dictionary, x: np.ndarray, lam: float, z_fista: np.ndarray,
            cfg: EncoderConfig):
    """Exact solve on the FISTA support; returns None when verification fails."""
    sel = np.abs(z_fista) > cfg.support_threshold
    support = np.flatnonzero(sel)
    if support.size == 0:
        code = np.zeros(d.p)
        residual = x.copy()
        slack = lam - np.abs(d.atoms.T @ residual)
        kkt = max(0.0, float(-slack.min()))
        if kkt > cfg.kkt_tolerance:
            return None
        return code, support, residual, slack, kkt

    sigma = np.sign(z_fista[support])
    atoms_s = d.atoms[:, support]
    gram_s = d.gram[np.ix_(support, support)]
    eig = np.linalg.eigvalsh(gram_s)
    if eig[0] <= 0.0 or eig[-1] / eig[0] > _COND_LIMIT:
        raise SingularSupport(
            f"on-support Gram condition number exceeds {_COND_LIMIT:g} "
            f"(|S|={support.size})"
        )
    z_s = np.linalg.solve(gram_s, atoms_s.T @ x - lam * sigma)
    if np.any(np.sign(z_s) != sigma):
        return None

    code = np.zeros(d.p)
    code[support] = z_s
    residual = x - atoms_s @ z_s
    slack = lam - np.abs(d.atoms.T @ residual)
    off = np.ones(d.p, dtype=bool)
    off[support] = False
    kkt_active = float(np.abs(slack[support]).max())
    kkt_off = max(0.0, float(-slack[off].min())) if off.any() else 0.0
    kkt = max(kkt_active, kkt_off)
    if kkt > cfg.kkt_tolerance:
        return None
    return code, support, residual, slack, kkt


def encode(d: Dictionary, x: np.ndarray, lam: float,
           cfg: EncoderConfig = DEFAULT_CONFIG) -> EncodeResult:
    """Encode one sample to a verified Lasso optimum.

    FISTA proposes a support, the code is recomputed exactly on it, and the
    full KKT system is checked. On sign or slack violations the FISTA
    iteration budget doubles, up to ``cfg.max_restarts`` retries.

    Raises
    ------
    NoConvergence
        If no restart produces a verified optimum.
    SingularSupport
        If the proposed on-support Gram has condition number > 1e12 on every
        restart. A singular proposal at a low budget is retried: early FISTA
        iterates can carry transient coordinates that vanish later.
    """
    if lam <= 0:
        raise BadPenalty(f"lambda must be > 0, got {lam}")
    x = np.asarray(x, dtype=np.float64)
    iters = cfg.iters
    for attempt in range(cfg.max_restarts + 1):
        z_fista = _fista_kernel(d.gram, d.atoms.T @ x, float(lam),
                                d.lipschitz, int(iters))
        try:
            out = _refine(d, x, lam, z_fista, cfg)
        except SingularSupport:
            if attempt == cfg.max_restarts:
                raise
            out = None
        if out is not None:
            code, support, residual, slack, kkt = out
            return EncodeResult(code=code, support=support, residual=residual,
                                slack=slack, kkt_residual=kkt, lam=float(lam),
                                iterations_used=int(iters))
        iters *= 2
    raise NoConvergence(
        f"KKT residual above {cfg.kkt_tolerance:g} after "
        f"{cfg.max_restarts} restarts (last budget {iters // 2} iterations)"
    )


def encode_batch(d: Dictionary, xs: np.ndarray, lam: float,
                 cfg: EncoderConfig = DEFAULT_CONFIG,
                 threads: int = 1) -> list[EncodeResult]:
    """Encode the rows of ``xs``; identical to encoding each row in turn.

    ``threads > 1`` parallelizes across samples (encode is a pure function,
    so results do not depend on scheduling).
    """
    xs = np.asarray(xs, dtype=np.float64)
    if threads > 1 and xs.shape[0] > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda row: encode(d, row, lam, cfg), xs))
    return [encode(d, row, lam, cfg) for row in xs]


def gap_profile(res: EncodeResult) -> GapProfile:
    """Order statistics of the slack vector: tau[s] = (s+1)-th smallest."""
    return GapProfile(tau=np.sort(res.slack))


def min_gap_over_set(d: Dictionary, xs, lam: float, s: int,
                     cfg: EncoderConfig = DEFAULT_CONFIG) -> float:
    """tau_s^* — minimum of tau_s(x) over the rows of ``xs``.

    Encoder errors propagate annotated with the failing sample index.
    """
    samples = np.asarray(getattr(xs, "samples", xs), dtype=np.float64)
    if samples.shape[0] == 0:
        raise ValueError("dataset must be nonempty")
    if not 0 <= s < d.p:
        raise OutOfRange(f"s must be in [0, {d.p - 1}], got {s}")
    best = np.inf
    for i, row in enumerate(samples):
        try:
            res = encode(d, row, lam, cfg)
        except (NoConvergence, SingularSupport) as exc:
            raise type(exc)(f"sample {i}: {exc}") from exc
        best = min(best, float(np.sort(res.slack)[s]))
    return best
