"""q-scale functions of the implemented spectrally negative families.

For both families ``1 / (phi(theta) - eta)`` is a rational function with two
real poles ``theta_minus <= theta_plus = Phi(eta)`` whenever ``eta >= 0``, so
the scale function is a two-exponential combination.  Writing
``delta = theta_plus - theta_minus`` it is evaluated as::

    W(x) = exp(theta_minus x) * (a * expm1(delta x) / delta + b * exp(delta x))

which stays finite as the two poles merge.  ``(a, b) = (2 / sigma^2, 0)`` for
Brownian drift and ``((theta_minus + rho) / d, 1 / d)`` for Cramér-Lundberg.

Tilted scale functions are never evaluated from their own (possibly complex)
roots: ``W_v^(eta - phi(v))(x)`` is computed as ``exp(-v x) W^(eta)(x)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .levy_model import DomainError, Family, LevyModel, right_inverse_phi, unkilled_exponent

__all__ = [
    "Backend",
    "InversionError",
    "ScaleFunction",
    "exponent_function",
    "invert_laplace_numeric",
    "laplace_residual",
    "oracle_table",
    "scale_w",
    "scale_w_origin",
    "scale_w_prime",
    "scale_w_prime_origin",
    "scale_w_tilted",
    "scale_w_tilted_prime",
    "tilted_kernel",
]


class InversionError(RuntimeError):
    """Numerical Laplace inversion failed its convergence diagnostic."""

    def __init__(self, message, coarse=None, fine=None):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine


class Backend(str, enum.Enum):
    CLOSED_FORM = "closed-form"
    NUMERIC_INVERSION = "numeric-inversion"


@dataclass(frozen=True)
class ScaleFunction:
    """``W^(eta)`` of the unkilled version of ``model``."""

    model: LevyModel
    eta: float
    backend: Backend = Backend.CLOSED_FORM

    def __post_init__(self):
        object.__setattr__(self, "model", self.model.unkilled())
        object.__setattr__(self, "backend", Backend(self.backend))


def _poles(model: LevyModel, eta: float) -> tuple[float, float]:
    """Real roots ``theta_minus <= theta_plus`` of ``phi(theta) = eta``."""
    if model.family is Family.BROWNIAN:
        s2, mu = model.sigma**2, model.mu
        disc = mu * mu + 2.0 * s2 * eta
        if disc < 0:
            raise DomainError(f"eta = {eta} gives complex roots; use the tilt relation")
        s = math.sqrt(disc)
        if mu >= 0:
            plus = (mu + s) / s2
            minus = -2.0 * eta / (mu + s) if mu + s > 0 else 0.0
        else:
            minus = (mu - s) / s2
            plus = -2.0 * eta / (mu - s)
        return minus, plus

    d, lam, rho = model.d, model.jump_rate, model.jump_mean_inv
    b = d * rho - lam - eta
    c = -eta * rho
    disc = b * b - 4.0 * d * c
    if disc < 0:
        raise DomainError(f"eta = {eta} gives complex roots; use the tilt relation")
    sq = math.sqrt(disc)
    if b >= 0:
        t = -0.5 * (b + sq)
        minus = t / d
        plus = c / t if t != 0 else 0.0
    else:
        t = 0.5 * (sq - b)
        plus = t / d
        minus = c / t
    return minus, plus


def _coefficients(model: LevyModel, eta: float):
    minus, plus = _poles(model, eta)
    if model.family is Family.BROWNIAN:
        a, b = 2.0 / model.sigma**2, 0.0
    else:
        a, b = (minus + model.jump_mean_inv) / model.d, 1.0 / model.d
    return minus, plus, a, b


def _expm1_ratio(delta: float, x):
    if delta == 0:
        return x
    return np.expm1(delta * x) / delta


def _closed_form(model: LevyModel, eta: float, x):
    minus, plus, a, b = _coefficients(model, eta)
    delta = plus - minus
    xp = np.maximum(x, 0.0)
    with np.errstate(over="ignore"):
        val = np.exp(minus * xp) * (a * _expm1_ratio(delta, xp) + b * np.exp(delta * xp))
    return np.where(x < 0, 0.0, val)


def _closed_form_prime(model: LevyModel, eta: float, x):
    minus, plus, a, b = _coefficients(model, eta)
    delta = plus - minus
    with np.errstate(over="ignore"):
        return minus * _closed_form(model, eta, x) + np.exp(plus * x) * (a + b * delta)


def _scalar(out):
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


def scale_w(sf: ScaleFunction, x):
    """``W^(eta)(x)``; zero for ``x < 0`` and ``W(0) = W(0+)``."""
    x = np.asarray(x, dtype=float)
    if sf.backend is Backend.CLOSED_FORM:
        return _scalar(_closed_form(sf.model, sf.eta, x))
    fn = exponent_function(sf.model)
    abscissa = right_inverse_phi(sf.model, sf.eta) if sf.eta >= 0 else None

    def one(xi):
        if xi < 0:
            return 0.0
        if xi == 0:
            return scale_w_origin(sf)
        return invert_laplace_numeric(fn, sf.eta, xi, abscissa=abscissa)

    return _scalar(np.vectorize(one, otypes=[float])(x))


def scale_w_prime(sf: ScaleFunction, x):
    """Derivative of ``W^(eta)`` on ``(0, inf)``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("scale_w_prime is defined for x > 0; use scale_w_prime_origin at 0+")
    if sf.backend is not Backend.CLOSED_FORM:
        raise NotImplementedError("derivatives are only available in closed form")
    return _scalar(_closed_form_prime(sf.model, sf.eta, x))


def scale_w_origin(sf: ScaleFunction) -> float:
    """``W^(eta)(0+)``: ``1/d`` for bounded variation, else 0."""
    return 1.0 / sf.model.d if sf.model.bounded_variation else 0.0


def scale_w_prime_origin(sf: ScaleFunction) -> float:
    """Right derivative ``W^(eta)'(0+)``."""
    m = sf.model
    if m.family is Family.BROWNIAN:
        return 2.0 / m.sigma**2
    return (sf.eta + m.jump_rate) / m.d**2


def scale_w_tilted(model: LevyModel, v: float, eta: float, x):
    """``W_v^(eta - phi(v))(x)`` via ``exp(-v x) W^(eta)(x)``."""
    x = np.asarray(x, dtype=float)
    w = _closed_form(model.unkilled(), eta, x)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(x < 0, 0.0, np.exp(-v * np.maximum(x, 0.0)) * w)
    return _scalar(out)


def scale_w_tilted_prime(model: LevyModel, v: float, eta: float, x):
    """``d/dx [exp(-v x) W^(eta)(x)] = exp(-v x) (W^(eta)'(x) - v W^(eta)(x))``."""
    x = np.asarray(x, dtype=float)
    base = model.unkilled()
    w = _closed_form(base, eta, x)
    wp = _closed_form_prime(base, eta, x)
    return _scalar(np.exp(-v * x) * (wp - v * w))


def tilted_kernel(model: LevyModel, v: float, eta: float):
    """Scalar callables ``(w, w_prime)`` for ``x -> exp(-v x) W^(eta)(x)``, ``x >= 0``.

    Poles and coefficients are computed once; used inside quadrature loops.
    """
    minus, plus, a, b = _coefficients(model.unkilled(), eta)
    delta = plus - minus
    lo, hi, gain = minus - v, plus - v, a + b * delta

    def w(x):
        em1 = math.expm1(delta * x) / delta if delta else x
        return math.exp(lo * x) * (a * em1 + b * math.exp(delta * x))

    def w_prime(x):
        return (minus - v) * w(x) + math.exp(hi * x) * gain

    return w, w_prime


def exponent_function(model: LevyModel):
    """Unkilled exponent as plain arithmetic, usable with complex/mpmath input."""
    if model.family is Family.BROWNIAN:
        half_s2, mu = 0.5 * model.sigma**2, model.mu
        return lambda th: half_s2 * th * th - mu * th
    d, lam, rho = model.d, model.jump_rate, model.jump_mean_inv
    return lambda th: d * th - lam * th / (rho + th)


def _talbot(transform, x: float, nodes: int):
    # fixed Talbot contour (Abate-Valko), working precision ~ node count digits
    with mpmath.workdps(nodes):
        x = mpmath.mpf(x)
        r = mpmath.mpf(2 * nodes) / (5 * x)
        total = 0.5 * transform(r) * mpmath.exp(r * x)
        for k in range(1, nodes):
            theta = k * mpmath.pi / nodes
            cot = mpmath.cot(theta)
            s = r * theta * (cot + 1j)
            sig = theta + (theta * cot - 1) * cot
            total += mpmath.re(mpmath.exp(x * s) * transform(s) * (1 + 1j * sig))
        return float(r / nodes * total)


def invert_laplace_numeric(exponent, eta: float, x: float, nodes: int = 64,
                           abscissa: float | None = None, rtol: float = 1e-9) -> float:
    """Invert ``theta -> 1 / (exponent(theta) - eta)`` at ``x > 0``.

    The transform is shifted so that all its singularities lie left of the
    imaginary axis, inverted on a fixed Talbot contour with ``nodes`` and
    ``2 * nodes`` points, and the two results must agree to ``rtol``.

    Parameters
    ----------
    exponent : callable
        Unkilled Laplace exponent; must accept complex mpmath numbers.
    abscissa : float, optional
        Largest real singularity of the transform.  Found by bracketing on
        the positive half-line when omitted.
    """
    if not x > 0:
        raise DomainError(f"x must be > 0, got {x}")
    if abscissa is None:
        g = lambda th: float(exponent(th)) - eta  # noqa: E731
        hi = 1.0
        while g(hi) <= 0:
            hi *= 2.0
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if g(mid) <= 0 else (lo, mid)
        abscissa = hi
    shift = abscissa + 1.0

    def transform(s):
        return 1 / (exponent(s + shift) - eta)

    coarse = _talbot(transform, x, nodes) * math.exp(shift * x)
    fine = _talbot(transform, x, 2 * nodes) * math.exp(shift * x)
    scale = max(abs(fine), 1e-300)
    if abs(coarse - fine) / scale > rtol:
        raise InversionError(
            f"Talbot inversion did not converge at x={x}: {coarse!r} vs {fine!r}",
            coarse=coarse,
            fine=fine,
        )
    return fine


def laplace_residual(sf: ScaleFunction, theta: float) -> tuple[float, float]:
    """Quadrature of ``int_0^inf exp(-theta x) W(x) dx`` and its target.

    The integral is truncated where ``exp(-(theta - Phi(eta)) x)`` drops below
    ``e^-60``.
    """
    from scipy.integrate import quad

    phi_eta = right_inverse_phi(sf.model, sf.eta)
    if theta <= phi_eta:
        raise DomainError(f"theta must exceed Phi(eta) = {phi_eta}")
    upper = 60.0 / (theta - phi_eta)
    val, _ = quad(lambda x: math.exp(-theta * x) * scale_w(sf, x), 0.0, upper,
                  epsabs=0.0, epsrel=1e-12, limit=500)
    target = 1.0 / (unkilled_exponent(sf.model, theta) - sf.eta)
    return val, target


def oracle_table(sf: ScaleFunction, xs) -> list[tuple[float, float, float, float]]:
    """Rows ``(x, closed_form, inverted, abs_err)`` comparing the two backends."""
    numeric = ScaleFunction(sf.model, sf.eta, Backend.NUMERIC_INVERSION)
    rows = []
    for x in xs:
        a = float(scale_w(ScaleFunction(sf.model, sf.eta), x))
        b = float(scale_w(numeric, x))
        rows.append((float(x), a, b, abs(a - b)))
    return rows
