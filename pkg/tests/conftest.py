import numpy as np
import pytest

from gfbounds import Gaussian, NonlinearSSM, SpdMatrix, VectorFunction

F1_EXPR = "x1 + (1+x1)/(2*(1+x1^4))"
F2_EXPR = "x1 + x1/(2*(1+x1^2))"
QUADRATIC_MEASUREMENT = "x1^2/2"


def scalar_model(f_expr, h_expr=QUADRATIC_MEASUREMENT, sigma_u=0.05, sigma_v=0.05,
                 prior_mean=0.2, prior_var=1.0) -> NonlinearSSM:
    return NonlinearSSM(
        f=VectorFunction.parse([f_expr], 1),
        h=VectorFunction.parse([h_expr], 1),
        sigma_u=SpdMatrix([[sigma_u]]),
        sigma_v=SpdMatrix([[sigma_v]]),
        prior=Gaussian([prior_mean], SpdMatrix([[prior_var]])),
    )


@pytest.fixture(scope="session")
def ungm_f1() -> NonlinearSSM:
    return scalar_model(F1_EXPR)


@pytest.fixture(scope="session")
def ungm_f2() -> NonlinearSSM:
    return scalar_model(F2_EXPR)


def random_spd(rng, dim, scale=1.0) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    return scale * (a @ a.T + dim * np.eye(dim))


def random_affine_model(rng, n, m) -> NonlinearSSM:
    """Affine f(x) = A x + b, h(x) = H x + c with random SPD covariances."""
    a = rng.uniform(-1.0, 1.0, (n, n))
    b = rng.uniform(-1.0, 1.0, n)
    hmat = rng.uniform(-1.0, 1.0, (m, n))
    c = rng.uniform(-1.0, 1.0, m)

    def row(coeffs, offset):
        terms = [f"({float(coeffs[j])!r})*x{j + 1}" for j in range(len(coeffs))]
        return " + ".join(terms + [f"({float(offset)!r})"])

    f_exprs = [row(a[i], b[i]) for i in range(n)]
    h_exprs = [row(hmat[i], c[i]) for i in range(m)]
    return NonlinearSSM(
        f=VectorFunction.parse(f_exprs, n),
        h=VectorFunction.parse(h_exprs, n),
        sigma_u=SpdMatrix(random_spd(rng, n, 0.2)),
        sigma_v=SpdMatrix(random_spd(rng, m, 0.2)),
        prior=Gaussian(rng.uniform(-1.0, 1.0, n), SpdMatrix(random_spd(rng, n, 0.5))),
    ), a, b, hmat, c


SMOOTH_MODELS = [
    ("tanh-drift", "x1 + 0.4*tanh(x1)", "x1 + 0.2*x1^2"),
    ("sine-drift", "x1 + 0.3*sin(x1)", "x1^2/2"),
    ("atan-drift", "0.8*x1 + 0.5*atan(x1)", "x1 + 0.1*x1^3"),
    ("rational-drift", "x1 - x1/(4*(1+x1^2))", "0.5*x1^2 + 0.3*x1"),
    ("gauss-bump", "x1 + 0.5*exp(-x1^2/2)", "x1^2/2 + 0.2*x1"),
]


def smooth_model(entry) -> NonlinearSSM:
    _, f_expr, h_expr = entry
    return scalar_model(f_expr, h_expr)


def fd_gradient(func, point, step=1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar callable."""
    point = np.asarray(point, dtype=float)
    grad = np.empty_like(point)
    for i in range(point.size):
        forward = point.copy()
        backward = point.copy()
        forward[i] += step
        backward[i] -= step
        grad[i] = (func(forward) - func(backward)) / (2.0 * step)
    return grad


def fd_hessian(func, point, step=1e-4) -> np.ndarray:
    """Second-order central finite-difference Hessian of a scalar callable."""
    point = np.asarray(point, dtype=float)
    d = point.size
    hess = np.empty((d, d))
    f0 = func(point)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = step
        hess[i, i] = (func(point + ei) - 2.0 * f0 + func(point - ei)) / step**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = step
            hess[i, j] = hess[j, i] = (
                func(point + ei + ej)
                - func(point + ei - ej)
                - func(point - ei + ej)
                + func(point - ei - ej)
            ) / (4.0 * step**2)
    return hess


def assert_close_fd(actual, reference, rtol=1e-5, atol=1e-6):
    """Relative comparison against a finite-difference reference with an
    absolute floor at the FD noise level (entries whose true value is
    below the scheme's round-off floor cannot be compared relatively)."""
    actual = np.asarray(actual, dtype=float)
    reference = np.asarray(reference, dtype=float)
    tol = np.maximum(rtol * np.abs(reference), atol)
    err = np.abs(actual - reference)
    worst = (err - tol).max()
    assert np.all(err <= tol), f"deviation exceeds tolerance by {worst:.3e}"
