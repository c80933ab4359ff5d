"""SPD-aware dense linear algebra: symmetric square roots, spectral norms,
Loewner-order checks and reproducible Cholesky sampling.

All matrices are small and dense (state-space dimensions here are single
digits), so everything goes through symmetric eigendecompositions rather
than iterative methods.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

# Fixed chunk length for sample streams. Chunked draws use one Philox
# stream per chunk so results do not depend on how many samples are
# requested at once or on the number of workers consuming the chunks.
SAMPLE_CHUNK = 65536

# Relative tolerances for construction-time checks.
_SYM_RTOL = 1e-12
_EIG_RTOL = 1e-10


class SpdMatrix:
    """Symmetric positive-semidefinite matrix with validated construction.

    Input is symmetrized (0.5 * (A + A.T)) after checking that the relative
    asymmetry is below 1e-12. Eigenvalues below -1e-10 * lambda_max are
    rejected; slightly negative eigenvalues from estimated covariances are
    tolerated and clamped later by `spd_sqrt`.
    """

    __slots__ = ("mat", "dim")

    def __init__(self, data):
        a = np.asarray(data, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix has non-finite entries")
        scale = float(np.abs(a).max()) if a.size else 0.0
        asym = float(np.abs(a - a.T).max()) if a.size else 0.0
        if scale > 0.0 and asym > _SYM_RTOL * scale:
            raise ValueError(
                f"matrix is not symmetric (relative asymmetry {asym / scale:.3e})"
            )
        sym = 0.5 * (a + a.T)
        w = np.linalg.eigvalsh(sym)
        lam_max = float(w[-1]) if w.size else 0.0
        if w.size and float(w[0]) < -_EIG_RTOL * max(lam_max, 0.0):
            raise ValueError(
                f"matrix is not positive semidefinite (eigenvalues {w})"
            )
        self.mat = sym
        self.dim = sym.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.mat)[0])

    def is_positive_definite(self) -> bool:
        return self.min_eigenvalue() > 0.0

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim})"


@dataclass(frozen=True)
class Gaussian:
    """Gaussian distribution given by a mean vector and an SPD covariance."""

    mean: np.ndarray
    cov: SpdMatrix

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1:
            raise ValueError(f"mean must be a vector, got shape {mean.shape}")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean has non-finite entries")
        if mean.shape[0] != self.cov.dim:
            raise ValueError(
                f"mean length {mean.shape[0]} does not match covariance dim {self.cov.dim}"
            )
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self) -> int:
        return self.cov.dim


def symmetrize(a: np.ndarray) -> np.ndarray:
    """0.5 * (A + A.T); used before SpdMatrix construction on computed products."""
    return 0.5 * (a + a.T)


def spd_sqrt(m: SpdMatrix) -> SpdMatrix:
    """Unique PSD square root computed by symmetric eigendecomposition.

    Negative eigenvalues (round-off in estimated covariances) are clamped
    to zero before taking the root.
    """
    try:
        w, v = np.linalg.eigh(m.mat)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"eigendecomposition failed for {m.dim}x{m.dim} matrix: {exc}"
        ) from exc
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return SpdMatrix(symmetrize(root))


def spectral_norm(a) -> float:
    """Largest singular value.

    Symmetric inputs use their own eigenvalues directly; general matrices
    go through the eigenvalues of A.T @ A.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if a.shape[0] == a.shape[1] and np.array_equal(a, a.T):
        w = np.linalg.eigvalsh(a)
        return float(np.max(np.abs(w)))
    w = np.linalg.eigvalsh(a.T @ a)
    return float(np.sqrt(max(float(w[-1]), 0.0)))


def trace_sqrt_sandwich(l: SpdMatrix, s: SpdMatrix) -> float:
    """trace(sqrt(L S L)) for SPD L and S; the product is symmetrized first."""
    if l.dim != s.dim:
        raise ValueError(f"dimension mismatch: {l.dim} vs {s.dim}")
    prod = l.mat @ s.mat @ l.mat
    return float(np.trace(spd_sqrt(SpdMatrix(symmetrize(prod))).mat))


def loewner_geq(a, b, tol: float = 0.0) -> bool:
    """True iff the smallest eigenvalue of (a - b) is >= -tol."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = symmetrize(a - b)
    return bool(np.linalg.eigvalsh(diff)[0] >= -tol)


def _check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return int(seed)


def standard_normal_chunks(seed: int, count: int, dim: int):
    """Yield (lo, hi, z) blocks of N(0, I_dim) draws, SAMPLE_CHUNK rows each.

    Chunk i uses Philox(key=seed).jumped(i), so any chunk can be regenerated
    independently of the others and the stream is identical for any number
    of consuming workers.
    """
    seed = _check_seed(seed)
    if count < 1:
        raise ValueError("count must be >= 1")
    n_chunks = (count + SAMPLE_CHUNK - 1) // SAMPLE_CHUNK
    for i in range(n_chunks):
        lo = i * SAMPLE_CHUNK
        hi = min(count, lo + SAMPLE_CHUNK)
        rng = Generator(Philox(key=seed).jumped(i))
        yield lo, hi, rng.standard_normal((hi - lo, dim))


def sampling_factor(cov: SpdMatrix) -> np.ndarray:
    """Matrix F with F @ F.T = cov, for sampling.

    Lower Cholesky when the matrix is numerically positive definite;
    otherwise falls back to the symmetric eigendecomposition square root
    (with a warning, so rank deficiency is never silent).
    """
    try:
        return np.linalg.cholesky(cov.mat)
    except np.linalg.LinAlgError:
        warnings.warn(
            "covariance is not positive definite; sampling with its "
            "eigendecomposition square root",
            RuntimeWarning,
            stacklevel=2,
        )
        return spd_sqrt(cov).mat


def chol_sample(g: Gaussian, count: int, seed: int) -> np.ndarray:
    """Draw a (count, dim) sample matrix from g.

    Samples are mean + z @ F.T with F from `sampling_factor` and z from the
    chunked Philox stream, so the output is a pure, bit-reproducible
    function of (g, count, seed).
    """
    factor = sampling_factor(g.cov)
    out = np.empty((count, g.dim))
    for lo, hi, z in standard_normal_chunks(seed, count, g.dim):
        out[lo:hi] = g.mean + z @ factor.T
    return out
