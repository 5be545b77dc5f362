"""Dictionary representation and coherence machinery.

A dictionary is a ``d x p`` real matrix whose columns (atoms) have unit l2
norm. Everything downstream — the encoder, the certificates, the bound
calculator — consumes the coherence summaries computed here: mutual
coherence, the Babel function, and upper bounds on restricted-isometry
constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

from .errors import OutOfRange, TooFewAtoms, TooLarge, ZeroColumn

UNIT_NORM_TOL = 1e-12

# Power-iteration settings for the FISTA step size. The estimate converges
# from below, so the inflation factor keeps 1/L a valid step.
_POWER_ITERS = 30
_POWER_INFLATE = 1.01


@dataclass(frozen=True)
class Dictionary:
    """Immutable unit-column dictionary.

    Construct via :func:`normalize_columns` unless the matrix is already
    column-normalized to within ``1e-12``.
    """

    atoms: np.ndarray = field(repr=False)

    def __post_init__(self):
        atoms = np.ascontiguousarray(np.asarray(self.atoms, dtype=np.float64))
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise ValueError("atoms must be a d x p matrix with d, p >= 1")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        norms = np.linalg.norm(atoms, axis=0)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise ValueError(
                f"column {worst} has norm {norms[worst]!r}; "
                "unit-norm columns required (use normalize_columns)"
            )
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)

    @property
    def d(self) -> int:
        return self.atoms.shape[0]

    @property
    def p(self) -> int:
        return self.atoms.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        """D^T D, shared by the encoder and the coherence computations."""
        g = self.atoms.T @ self.atoms
        g.setflags(write=False)
        return g

    @cached_property
    def lipschitz(self) -> float:
        """Largest eigenvalue of D^T D, estimated by power iteration.

        30 iterations from a fixed random start, then inflated by 1.01 so the
        FISTA step 1/L stays on the safe side of the true value.
        """
        return spectral_upper_bound(self.gram)

    @cached_property
    def _babel_cumsum(self) -> np.ndarray:
        """babel_cumsum[s-1] = mu_(s) for s = 1..p-1 (per-atom sort-and-sum)."""
        g = np.abs(self.gram).copy()
        np.fill_diagonal(g, 0.0)
        # column j: correlations of atom j with the others, sorted descending
        g.sort(axis=0)
        top = g[::-1][: self.p - 1]
        c = np.cumsum(top, axis=0).max(axis=1)
        c.setflags(write=False)
        return c


@dataclass(frozen=True)
class CoherenceProfile:
    """All coherence summaries of one dictionary.

    ``babel[i]`` holds mu_(s) for s = i+1 (s runs over 1..p-1) and
    ``rip_upper[i]`` holds the eta_s upper bound for s = i+1 (s runs over
    1..p), so ``rip_upper[0] = 0`` and ``rip_upper[s-1] =
    min(babel[s-2], (s-1)*mu)`` for s >= 2.
    """

    mu: float
    babel: np.ndarray
    rip_upper: np.ndarray


def spectral_upper_bound(gram: np.ndarray) -> float:
    """Inflated power-iteration estimate of the top eigenvalue of a Gram
    matrix; serves as the FISTA step-size constant 1/L."""
    rng = np.random.default_rng(0)
    v = rng.standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(_POWER_ITERS):
        w = gram @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:  # pragma: no cover - gram is PSD with unit diagonal
            break
        v = w / nw
    rayleigh = float(v @ (gram @ v))
    return rayleigh * _POWER_INFLATE


def normalize_columns(m: np.ndarray) -> Dictionary:
    """Scale every column of ``m`` to unit l2 norm.

    Raises
    ------
    ZeroColumn
        If some column has norm <= 1e-12 (direction undefined).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    norms = np.linalg.norm(m, axis=0)
    bad = np.flatnonzero(norms <= UNIT_NORM_TOL)
    if bad.size:
        raise ZeroColumn(int(bad[0]))
    return Dictionary(m / norms)


def mutual_coherence(d: Dictionary) -> float:
    """Worst absolute correlation between two distinct atoms."""
    if d.p < 2:
        raise TooFewAtoms("mutual coherence needs at least 2 atoms")
    g = np.abs(d.gram).copy()
    np.fill_diagonal(g, 0.0)
    return float(g.max())


def babel(d: Dictionary, s: int) -> float:
    """Babel function mu_(s): worst total correlation of one atom with s others.

    Evaluated per atom by summing the s largest absolute correlations; this
    greedy form equals the max-over-subsets definition exactly.
    """
    if not 1 <= s <= d.p - 1:
        raise OutOfRange(f"babel needs 1 <= s <= p-1, got s={s}, p={d.p}")
    return float(d._babel_cumsum[s - 1])


def rip_upper_bound(d: Dictionary, s: int) -> float:
    """Upper bound on the order-s RIP constant: eta_s <= mu_(s-1) <= (s-1) mu.

    Returns 0 for s = 1 (single atoms are exactly unit-norm). Values >= 1 are
    returned as-is; certificate code treats them as "no certificate at this s".
    """
    if not 1 <= s <= d.p:
        raise OutOfRange(f"rip_upper_bound needs 1 <= s <= p, got s={s}, p={d.p}")
    if s == 1:
        return 0.0
    return float(min(babel(d, s - 1), (s - 1) * mutual_coherence(d)))


def rip_exact_small(d: Dictionary, s: int) -> float:
    """Exact order-s RIP constant by enumerating all size-s Gram submatrices.

    Combinatorial (C(p, s) eigendecompositions), hence guarded to p <= 20;
    used as a test oracle for the Babel upper bounds.
    """
    if d.p > 20:
        raise TooLarge(f"exact RIP enumeration is limited to p <= 20, got p={d.p}")
    if not 1 <= s <= min(d.d, d.p):
        raise OutOfRange(f"rip_exact_small needs 1 <= s <= min(d, p), got s={s}")
    g = d.gram
    worst = 0.0
    for supp in combinations(range(d.p), s):
        idx = np.asarray(supp)
        eig = np.linalg.eigvalsh(g[np.ix_(idx, idx)])
        worst = max(worst, eig[-1] - 1.0, 1.0 - eig[0])
    return float(worst)


def coherence_profile(d: Dictionary) -> CoherenceProfile:
    """Compute mu, the full Babel curve, and the eta_s upper bounds at once."""
    mu = mutual_coherence(d)
    bab = np.array(d._babel_cumsum)
    rip = np.empty(d.p)
    rip[0] = 0.0
    for s in range(2, d.p + 1):
        rip[s - 1] = min(bab[s - 2], (s - 1) * mu)
    return CoherenceProfile(mu=mu, babel=bab, rip_upper=rip)
