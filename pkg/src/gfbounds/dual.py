"""Forward-mode jets over batches of evaluation points.

A jet carries the value together with derivative channels of one scalar
expression component evaluated at k points simultaneously:

    Jet1: val (k,), grad (k, d)
    Jet2: val (k,), grad (k, d), hess (k, d, d)

A derivative channel that is identically zero is stored as None and only
materialized on demand, so constants and affine subtrees cost nothing in
the Hessian channel. Propagation is forward-over-forward; Hessians stay
bitwise symmetric because every rule only ever adds symmetric outer
products (IEEE addition and multiplication are commutative entrywise).
The value channel uses exactly the same operations as plain evaluation,
so the two agree bit for bit.
"""

from __future__ import annotations

import numpy as np


class EvalDomainError(ValueError):
    """Raised when evaluation leaves the domain of a function (log/sqrt of
    a negative number, fractional power of a negative base, non-finite
    results). Aborts the enclosing batch so estimates are never silently
    biased."""


def _as_batch(x, k):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return np.full(k, float(arr))
    return arr


def _madd(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _msub(a, b):
    if b is None:
        return a
    if a is None:
        return -b
    return a - b


def _mneg(a):
    return None if a is None else -a


def _mscale(a, factor):
    return None if a is None else a * factor


def _sym_cross(a, b):
    # a_i b_j + b_i a_j stays bitwise symmetric (commutative IEEE ops)
    if a is None or b is None:
        return None
    return a[:, :, None] * b[:, None, :] + b[:, :, None] * a[:, None, :]


class Jet2:
    __slots__ = ("val", "grad", "hess")

    def __init__(self, val, grad, hess):
        self.val = val
        self.grad = grad
        self.hess = hess

    @classmethod
    def constant(cls, value, k, d):
        return cls(_as_batch(value, k), None, None)

    @classmethod
    def variable(cls, points, index):
        k, d = points.shape
        grad = np.zeros((k, d))
        grad[:, index] = 1.0
        return cls(points[:, index].copy(), grad, None)

    def __neg__(self):
        return Jet2(-self.val, _mneg(self.grad), _mneg(self.hess))

    def __add__(self, other):
        if isinstance(other, Jet2):
            return Jet2(
                self.val + other.val,
                _madd(self.grad, other.grad),
                _madd(self.hess, other.hess),
            )
        return Jet2(self.val + _as_batch(other, self.val.shape[0]), self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet2):
            return Jet2(
                self.val - other.val,
                _msub(self.grad, other.grad),
                _msub(self.hess, other.hess),
            )
        return Jet2(self.val - _as_batch(other, self.val.shape[0]), self.grad, self.hess)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, Jet2):
            grad = _madd(
                _mscale(self.grad, other.val[:, None]),
                _mscale(other.grad, self.val[:, None]),
            )
            hess = _madd(
                _madd(
                    _mscale(self.hess, other.val[:, None, None]),
                    _mscale(other.hess, self.val[:, None, None]),
                ),
                _sym_cross(self.grad, other.grad),
            )
            return Jet2(self.val * other.val, grad, hess)
        c = _as_batch(other, self.val.shape[0])
        return Jet2(
            self.val * c,
            _mscale(self.grad, c[:, None]),
            _mscale(self.hess, c[:, None, None]),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        # direct quotient rule: the value channel must equal plain
        # evaluation bit for bit, so no detour through a reciprocal
        if not isinstance(other, Jet2):
            k = self.val.shape[0]
            other = Jet2(_as_batch(other, k), None, None)
        val = self.val / other.val
        grad_num = _msub(self.grad, _mscale(other.grad, val[:, None]))
        grad = None if grad_num is None else grad_num / other.val[:, None]
        hess_num = _msub(
            _msub(self.hess, _mscale(other.hess, val[:, None, None])),
            _sym_cross(grad, other.grad),
        )
        hess = None if hess_num is None else hess_num / other.val[:, None, None]
        return Jet2(val, grad, hess)

    def __rtruediv__(self, other):
        k = self.val.shape[0]
        return Jet2(_as_batch(other, k), None, None).__truediv__(self)

    def chain(self, f0, f1, f2):
        """Compose with a scalar function given its value and first two
        derivatives evaluated at self.val."""
        outer = None if self.grad is None else self.grad[:, :, None] * self.grad[:, None, :]
        return Jet2(
            f0,
            _mscale(self.grad, f1[:, None]),
            _madd(_mscale(self.hess, f1[:, None, None]), _mscale(outer, f2[:, None, None])),
        )


class Jet1:
    __slots__ = ("val", "grad")

    def __init__(self, val, grad):
        self.val = val
        self.grad = grad

    @classmethod
    def constant(cls, value, k, d):
        return cls(_as_batch(value, k), None)

    @classmethod
    def variable(cls, points, index):
        k, d = points.shape
        grad = np.zeros((k, d))
        grad[:, index] = 1.0
        return cls(points[:, index].copy(), grad)

    def __neg__(self):
        return Jet1(-self.val, _mneg(self.grad))

    def __add__(self, other):
        if isinstance(other, Jet1):
            return Jet1(self.val + other.val, _madd(self.grad, other.grad))
        return Jet1(self.val + _as_batch(other, self.val.shape[0]), self.grad)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet1):
            return Jet1(self.val - other.val, _msub(self.grad, other.grad))
        return Jet1(self.val - _as_batch(other, self.val.shape[0]), self.grad)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, Jet1):
            grad = _madd(
                _mscale(self.grad, other.val[:, None]),
                _mscale(other.grad, self.val[:, None]),
            )
            return Jet1(self.val * other.val, grad)
        c = _as_batch(other, self.val.shape[0])
        return Jet1(self.val * c, _mscale(self.grad, c[:, None]))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet1):
            k = self.val.shape[0]
            other = Jet1(_as_batch(other, k), None)
        val = self.val / other.val
        grad_num = _msub(self.grad, _mscale(other.grad, val[:, None]))
        grad = None if grad_num is None else grad_num / other.val[:, None]
        return Jet1(val, grad)

    def __rtruediv__(self, other):
        k = self.val.shape[0]
        return Jet1(_as_batch(other, k), None).__truediv__(self)

    def chain(self, f0, f1):
        return Jet1(f0, _mscale(self.grad, f1[:, None]))


def _tan_derivatives(v):
    t = np.tan(v)
    sec2 = 1.0 + t * t
    return t, sec2, 2.0 * t * sec2


def _tanh_derivatives(v):
    t = np.tanh(v)
    sech2 = 1.0 - t * t
    return t, sech2, -2.0 * t * sech2


def _atan_derivatives(v):
    den = 1.0 + v * v
    inv = 1.0 / den
    return np.arctan(v), inv, -2.0 * v * inv * inv


def _exp_derivatives(v):
    e = np.exp(v)
    return e, e, e


def _sin_derivatives(v):
    s, c = np.sin(v), np.cos(v)
    return s, c, -s


def _cos_derivatives(v):
    s, c = np.sin(v), np.cos(v)
    return c, -s, -c


def _log_derivatives(v):
    inv = 1.0 / v
    return np.log(v), inv, -inv * inv


def _sqrt_derivatives(v):
    r = np.sqrt(v)
    return r, 0.5 / r, -0.25 / (r * v)


# name -> (derivative triple, value-domain check, derivative-domain check).
# Domain checks return an error message for offending inputs, else None.
UNARY_FUNCTIONS = {
    "sin": (_sin_derivatives, None, None),
    "cos": (_cos_derivatives, None, None),
    "tan": (_tan_derivatives, None, None),
    "exp": (_exp_derivatives, None, None),
    "tanh": (_tanh_derivatives, None, None),
    "atan": (_atan_derivatives, None, None),
    "log": (
        _log_derivatives,
        lambda v: "log of non-positive value" if np.any(v <= 0.0) else None,
        lambda v: "log of non-positive value" if np.any(v <= 0.0) else None,
    ),
    "sqrt": (
        _sqrt_derivatives,
        lambda v: "sqrt of negative value" if np.any(v < 0.0) else None,
        lambda v: "sqrt is not differentiable at or below zero" if np.any(v <= 0.0) else None,
    ),
}


def check_domain(name: str, values: np.ndarray, differentiating: bool) -> None:
    _, value_check, deriv_check = UNARY_FUNCTIONS[name]
    check = deriv_check if differentiating else value_check
    if check is not None:
        msg = check(values)
        if msg is not None:
            raise EvalDomainError(msg)


def pow_constant_value(v: np.ndarray, c: float) -> np.ndarray:
    """v**c for a constant exponent; integer exponents allow negative
    bases. Shared by the value and jet evaluators so both channels agree
    bit for bit."""
    if float(c).is_integer():
        return v ** int(c)
    if np.any(v < 0.0):
        raise EvalDomainError("fractional power of a negative base")
    return v**c


def pow_constant_derivatives(v: np.ndarray, c: float):
    """Value and first two derivatives of v**c for a constant exponent.

    Integer exponents allow negative bases; fractional exponents require a
    strictly positive base."""
    if c == 0.0:
        one = np.ones_like(v)
        zero = np.zeros_like(v)
        return one, zero, zero
    if c == 1.0:
        return v.copy(), np.ones_like(v), np.zeros_like(v)
    if float(c).is_integer():
        ci = int(c)
        if ci < 0 and np.any(v == 0.0):
            raise EvalDomainError("zero raised to a negative power")
        f0 = pow_constant_value(v, c)
        f1 = ci * v ** (ci - 1)
        if ci == 2:
            f2 = np.full_like(v, 2.0)
        else:
            f2 = ci * (ci - 1) * v ** (ci - 2)
        return f0, f1, f2
    if np.any(v < 0.0):
        raise EvalDomainError("fractional power of a negative base")
    if np.any(v == 0.0):
        raise EvalDomainError("fractional power is not differentiable at zero")
    f0 = v**c
    f1 = c * v ** (c - 1.0)
    f2 = c * (c - 1.0) * v ** (c - 2.0)
    return f0, f1, f2
