"""Gaussian expectations and the one-step moment-matched filter.

Two quadrature schemes are supported:

* ``MonteCarlo(count, seed)`` — chunked, counter-based sampling. Chunks are
  fixed at 65536 rows with one Philox stream per chunk; partial moments are
  reduced in ascending chunk order, so results are bit-identical for any
  worker count (``CERTIFY_THREADS`` sets the number of workers).
* ``GaussHermite(order)`` — tensor-product Gauss-Hermite rules, exact for
  polynomial integrands of degree <= 2*order - 1 and therefore exact for
  affine models. The grid size order**dim is capped.

Model-level operations (``predict``, ``joint_approx`` and the bound
assembly downstream) integrate over leading blocks of the stacked input
W = (X_p, U, V). Under Monte Carlo they all slice one underlying standard
normal stream for the full W, so every quantity in one experiment shares
one sample set: the prior draws used for the prediction are the same rows
that enter the covariance sandwich, and the moment-matched state reuses
them as its own standard normals.

The filter itself follows the classical Gaussian-filter loop: moment-match
the prediction, moment-match the joint of state and measurement, then
condition with the standard Gaussian formulas.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.random import Generator, Philox
from scipy.linalg import cho_factor, cho_solve

from .expressions import VectorFunction, eval_value_batch
from .linalg import (
    SAMPLE_CHUNK,
    Gaussian,
    SpdMatrix,
    _check_seed,
    sampling_factor,
    symmetrize,
)
from .statespace import NonlinearSSM

GH_MAX_NODES = 2_000_000


@dataclass(frozen=True)
class MonteCarlo:
    count: int
    seed: int

    def __post_init__(self):
        if self.count < 1000:
            raise ValueError("Monte Carlo needs at least 1000 samples")
        _check_seed(self.seed)


@dataclass(frozen=True)
class GaussHermite:
    order: int

    def __post_init__(self):
        if not 1 <= self.order <= 20:
            raise ValueError("Gauss-Hermite order must be in 1..20")


QuadratureScheme = Union[MonteCarlo, GaussHermite]


def worker_count() -> int:
    """Number of chunk workers; CERTIFY_THREADS caps it. Results do not
    depend on the value."""
    avail = os.cpu_count() or 1
    env = os.environ.get("CERTIFY_THREADS")
    if env is not None:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ValueError(f"CERTIFY_THREADS must be an integer, got {env!r}") from exc
        return max(1, min(avail, cap))
    return min(4, avail)


def gh_points(order: int, dim: int):
    """Tensor-product Gauss-Hermite nodes and weights for N(0, I_dim);
    weights sum to one."""
    if order**dim > GH_MAX_NODES:
        raise ValueError(
            f"Gauss-Hermite grid of order {order} in dimension {dim} has "
            f"{order**dim} nodes (cap {GH_MAX_NODES}); use Monte Carlo instead"
        )
    x, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / w.sum()
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1)
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    weights = np.ones(order**dim)
    for g in wgrids:
        weights = weights * g.reshape(-1)
    return pts, weights


class _StandardSource:
    """Blocks of standard normal points z with weights, in a fixed chunk
    layout. `draw_dim` is the width of the underlying Monte Carlo draw;
    callers may use only the leading `use_dim` columns, which keeps
    overlapping integrals on shared coordinates."""

    def __init__(self, scheme: QuadratureScheme, draw_dim: int, use_dim: int | None = None):
        self.scheme = scheme
        self.draw_dim = draw_dim
        self.use_dim = draw_dim if use_dim is None else use_dim
        if isinstance(scheme, MonteCarlo):
            self.total = scheme.count
            self._pts = None
            self._wts = None
        else:
            pts, wts = gh_points(scheme.order, self.use_dim)
            self.total = pts.shape[0]
            self._pts = pts
            self._wts = wts
        self.n_chunks = (self.total + SAMPLE_CHUNK - 1) // SAMPLE_CHUNK

    def block(self, i: int):
        lo = i * SAMPLE_CHUNK
        hi = min(self.total, lo + SAMPLE_CHUNK)
        if isinstance(self.scheme, MonteCarlo):
            rng = Generator(Philox(key=self.scheme.seed).jumped(i))
            z = rng.standard_normal((hi - lo, self.draw_dim))
            return z[:, : self.use_dim], np.full(hi - lo, 1.0 / self.total)
        return self._pts[lo:hi], self._wts[lo:hi]


def accumulate_blocks(source: "_StandardSource", task):
    """Apply `task(z, w) -> tuple[np.ndarray, ...]` to every block and sum
    the partial results in ascending chunk order."""
    workers = worker_count()
    indices = range(source.n_chunks)
    if workers > 1 and source.n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda i: task(*source.block(i)), indices))
    else:
        parts = [task(*source.block(i)) for i in indices]
    totals = list(parts[0])
    for part in parts[1:]:
        for j, arr in enumerate(part):
            totals[j] = totals[j] + arr
    return tuple(totals)


def model_source(scheme: QuadratureScheme, model: NonlinearSSM, use_dim: int) -> _StandardSource:
    """Standard-normal source over the leading `use_dim` coordinates of the
    stacked input space W = (X_p, U, V)."""
    return _StandardSource(scheme, 2 * model.n + model.m, use_dim)


def _bessel(scheme: QuadratureScheme, total: int) -> float:
    # Sample covariance uses the unbiased count-1 normalization; quadrature
    # moments are plain integrals.
    if isinstance(scheme, MonteCarlo):
        return total / (total - 1.0)
    return 1.0


def _mean_cov_from_sums(s_f, s_ff, correction):
    mean = s_f
    cov = correction * (s_ff - np.outer(mean, mean))
    return mean, symmetrize(cov)


def gauss_expect(fn: VectorFunction, input: Gaussian, scheme: QuadratureScheme) -> np.ndarray:
    """E[fn(X)] for X ~ input under the given scheme."""
    if fn.in_dim != input.dim:
        raise ValueError(
            f"function input dimension {fn.in_dim} does not match Gaussian dimension {input.dim}"
        )
    source = _StandardSource(scheme, input.dim)
    factor = sampling_factor(input.cov)

    def task(z, w):
        vals = eval_value_batch(fn, input.mean + z @ factor.T)
        return (w @ vals,)

    (total,) = accumulate_blocks(source, task)
    return total


def project_gaussian(
    fn: VectorFunction,
    input: Gaussian,
    noise_cov: SpdMatrix,
    scheme: QuadratureScheme,
) -> Gaussian:
    """Moment-matched Gaussian of fn(X) + noise: N(E[fn(X)], cov[fn(X)] + noise_cov).

    Mean and covariance come from the same pass over the same points."""
    if fn.in_dim != input.dim:
        raise ValueError("function input dimension does not match the input Gaussian")
    if noise_cov.dim != fn.out_dim:
        raise ValueError("noise covariance dimension does not match the output dimension")
    source = _StandardSource(scheme, input.dim)
    factor = sampling_factor(input.cov)

    def task(z, w):
        vals = eval_value_batch(fn, input.mean + z @ factor.T)
        return w @ vals, np.einsum("k,ki,kj->ij", w, vals, vals)

    s_f, s_ff = accumulate_blocks(source, task)
    mean, cov = _mean_cov_from_sums(s_f, s_ff, _bessel(scheme, source.total))
    return Gaussian(mean, SpdMatrix(cov + noise_cov.mat))


@dataclass(frozen=True)
class JointGaussian:
    """Joint Gaussian of state and measurement blocks with cross-covariance.

    The assembled block covariance must be PSD (within the construction
    clamping tolerance), which holds whenever all blocks are estimated from
    one shared sample."""

    mean_x: np.ndarray
    mean_y: np.ndarray
    p_x: SpdMatrix
    p_y: SpdMatrix
    c_xy: np.ndarray

    def __post_init__(self):
        n, m = self.p_x.dim, self.p_y.dim
        if self.mean_x.shape != (n,) or self.mean_y.shape != (m,):
            raise ValueError("mean blocks do not match covariance dimensions")
        if self.c_xy.shape != (n, m):
            raise ValueError(f"cross-covariance must be {n}x{m}")
        SpdMatrix(self.block_cov())  # rejects an indefinite assembly

    def block_cov(self) -> np.ndarray:
        return np.block([[self.p_x.mat, self.c_xy], [self.c_xy.T, self.p_y.mat]])

    def block_mean(self) -> np.ndarray:
        return np.concatenate([self.mean_x, self.mean_y])


def predict(model: NonlinearSSM, scheme: QuadratureScheme) -> Gaussian:
    """Moment-matched prediction: N(E[f(X_p)], cov[f(X_p)] + sigma_u).

    Integrates over the prior slot of the shared W stream."""
    n = model.n
    source = model_source(scheme, model, n)
    factor = sampling_factor(model.prior.cov)

    def task(z, w):
        vals = eval_value_batch(model.f, model.prior.mean + z @ factor.T)
        return w @ vals, np.einsum("k,ki,kj->ij", w, vals, vals)

    s_f, s_ff = accumulate_blocks(source, task)
    mean, cov = _mean_cov_from_sums(s_f, s_ff, _bessel(scheme, source.total))
    return Gaussian(mean, SpdMatrix(cov + model.sigma_u.mat))


def joint_approx(model: NonlinearSSM, x_tilde: Gaussian, scheme: QuadratureScheme) -> JointGaussian:
    """Moment-matched joint of the predicted state and its measurement.

    The measurement mean/covariance and the cross-covariance all come from
    one shared sample of the moment-matched state."""
    if x_tilde.dim != model.n:
        raise ValueError("prediction dimension does not match the model")
    source = model_source(scheme, model, model.n)
    factor = sampling_factor(x_tilde.cov)

    def task(z, w):
        x = x_tilde.mean + z @ factor.T
        hv = eval_value_batch(model.h, x)
        return (
            w @ hv,
            np.einsum("k,ki,kj->ij", w, hv, hv),
            w @ x,
            np.einsum("k,ki,kj->ij", w, x, hv),
        )

    s_h, s_hh, s_x, s_xh = accumulate_blocks(source, task)
    correction = _bessel(scheme, source.total)
    mean_y, cov_y = _mean_cov_from_sums(s_h, s_hh, correction)
    c_xy = correction * (s_xh - np.outer(s_x, s_h))
    return JointGaussian(
        mean_x=x_tilde.mean,
        mean_y=mean_y,
        p_x=x_tilde.cov,
        p_y=SpdMatrix(cov_y + model.sigma_v.mat),
        c_xy=c_xy,
    )


def update(joint: JointGaussian, y) -> Gaussian:
    """Condition the joint on a measurement with the standard Gaussian
    formulas; the posterior covariance is symmetrized."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != joint.mean_y.shape:
        raise ValueError(f"measurement must have length {joint.mean_y.shape[0]}")
    try:
        factor = cho_factor(joint.p_y.mat)
        gain = cho_solve(factor, joint.c_xy.T).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"measurement covariance is singular: {exc}") from exc
    mean = joint.mean_x + gain @ (y - joint.mean_y)
    cov = joint.p_x.mat - gain @ joint.p_y.mat @ gain.T
    return Gaussian(mean, SpdMatrix(symmetrize(cov)))
