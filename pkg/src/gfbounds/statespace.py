"""Non-linear state-space model with additive Gaussian noise and the
lifted transformations that push the whole prior/noise vector through the
model in a single map.

The model is

    X = f(X_p) + U,   Y = h(X) + V,

with X_p ~ N(prior), U ~ N(0, sigma_u), V ~ N(0, sigma_v) independent.
Writing W = (X_p, U, V), the joint (X, Y) equals a single transformation
of the Gaussian W whose components are built here by AST substitution:
variables 1..n are the prior slot, n+1..2n the process-noise slot and
2n+1..2n+m the measurement-noise slot. Splicing the trees (instead of
nesting evaluation callbacks) means one derivative pass over the lifted
map yields all gradients and Hessians downstream consumers need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .expressions import BinOp, ExprAst, Var, VectorFunction, eval_jacobian_batch, substitute
from .linalg import Gaussian, SpdMatrix


@dataclass(frozen=True)
class NonlinearSSM:
    """Dynamics f: R^n -> R^n, measurement h: R^n -> R^m, noise covariances
    and Gaussian prior; all covariances must be strictly positive definite."""

    f: VectorFunction
    h: VectorFunction
    sigma_u: SpdMatrix
    sigma_v: SpdMatrix
    prior: Gaussian

    def __post_init__(self):
        n = self.f.in_dim
        if self.f.out_dim != n:
            raise ValueError("dynamics must map R^n to R^n")
        if self.h.in_dim != n:
            raise ValueError("measurement input dimension must match the state dimension")
        if self.sigma_u.dim != n:
            raise ValueError("process noise covariance must be n x n")
        if self.sigma_v.dim != self.h.out_dim:
            raise ValueError("measurement noise covariance must be m x m")
        if self.prior.dim != n:
            raise ValueError("prior dimension must match the state dimension")
        for name, cov in (
            ("sigma_u", self.sigma_u),
            ("sigma_v", self.sigma_v),
            ("prior covariance", self.prior.cov),
        ):
            if not cov.is_positive_definite():
                raise ValueError(f"{name} must be strictly positive definite")

    @property
    def n(self) -> int:
        return self.f.in_dim

    @property
    def m(self) -> int:
        return self.h.out_dim


def lifted_input(model: NonlinearSSM) -> Gaussian:
    """Gaussian law of W = (X_p, U, V): stacked mean, block-diagonal
    covariance (prior and noises are independent)."""
    n, m = model.n, model.m
    mean = np.concatenate([model.prior.mean, np.zeros(n + m)])
    cov = block_diag(model.prior.cov.mat, model.sigma_u.mat, model.sigma_v.mat)
    return Gaussian(mean, SpdMatrix(cov))


def composite_map(model: NonlinearSSM) -> VectorFunction:
    """q(x1, x2) = h(f(x1) + x2) as a 2n -> m vector function.

    Built by splicing f's trees plus the noise variable into h's variable
    slots, so q evaluates and differentiates in one pass."""
    n = model.n
    noisy_state = {
        i: BinOp("+", model.f.components[i].root, Var(n + i)) for i in range(n)
    }
    comps = tuple(
        ExprAst(substitute(comp.root, noisy_state), 2 * n)
        for comp in model.h.components
    )
    return VectorFunction(comps)


def lift_transform(model: NonlinearSSM) -> VectorFunction:
    """The joint map (x1, x2, x3) -> (f(x1) + x2, q(x1, x2) + x3) of
    dimension 2n+m -> n+m whose pushforward of W is (X, Y)."""
    n, m = model.n, model.m
    width = 2 * n + m
    q = composite_map(model)
    state_comps = tuple(
        ExprAst(BinOp("+", model.f.components[i].root, Var(n + i)), width)
        for i in range(n)
    )
    meas_comps = tuple(
        ExprAst(BinOp("+", q.components[j].root, Var(2 * n + j)), width)
        for j in range(m)
    )
    return VectorFunction(state_comps + meas_comps)


def augmented_jacobian(model: NonlinearSSM, x1) -> np.ndarray:
    """The (2n, n) stack [J_f(x1).T ; I_n] that chains measurement gradients
    back to the (prior, process-noise) block."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    if x1.shape != (model.n,):
        raise ValueError(f"expected a state vector of length {model.n}")
    _, jac = eval_jacobian_batch(model.f, x1[None, :])
    return np.vstack([jac[0].T, np.eye(model.n)])
