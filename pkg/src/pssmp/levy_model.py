"""Spectrally negative Lévy families used as Lamperti representations.

Two concrete families are implemented, both with closed-form Laplace
exponents:

* ``BROWNIAN``: ``xi_t = sigma W_t - mu t`` (unbounded variation),
  ``psi(theta) = -q + sigma^2 theta^2 / 2 - mu theta``.
* ``CRAMER_LUNDBERG``: unit drift ``d`` minus a compound Poisson process with
  rate ``jump_rate`` and exponential(``jump_mean_inv``) jump sizes (bounded
  variation), ``psi(theta) = -q + d theta - lam theta / (rho + theta)``.

``psi`` always denotes the exponent of the killed process and ``phi = q + psi``
the exponent of the unkilled one.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "ClassReport",
    "Direction",
    "DomainError",
    "Family",
    "GateError",
    "LevyModel",
    "PredictionProblem",
    "check_gate",
    "classify",
    "esscher_tilt",
    "exponent_derivative",
    "laplace_exponent",
    "right_inverse_phi",
    "unkilled_exponent",
]


class DomainError(ValueError):
    """Argument outside the analytic domain of a Laplace exponent."""


class GateError(ValueError):
    """A prediction problem fails its class-membership gate."""


class Family(str, enum.Enum):
    BROWNIAN = "brownian"
    CRAMER_LUNDBERG = "cramer-lundberg"


class Direction(str, enum.Enum):
    MAX = "max"
    MIN = "min"


@dataclass(frozen=True)
class LevyModel:
    """Parameters of a (possibly killed) spectrally negative Lévy process.

    Use the :meth:`brownian` and :meth:`cramer_lundberg` constructors rather
    than filling the fields by hand; unused fields stay at their defaults.
    """

    family: Family
    sigma: float = 0.0
    mu: float = 0.0
    d: float = 0.0
    jump_rate: float = 0.0
    jump_mean_inv: float = 1.0
    q: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.q < 0 or not math.isfinite(self.q):
            raise ValueError(f"killing rate q must be finite and >= 0, got {self.q}")
        if self.family is Family.BROWNIAN:
            if not self.sigma > 0:
                raise ValueError(f"sigma must be > 0 for Brownian drift, got {self.sigma}")
            if not math.isfinite(self.mu):
                raise ValueError("mu must be finite")
        else:
            if not self.d > 0:
                raise ValueError(f"d must be > 0 for Cramer-Lundberg, got {self.d}")
            if self.jump_rate < 0:
                raise ValueError(f"jump_rate must be >= 0, got {self.jump_rate}")
            if not self.jump_mean_inv > 0:
                raise ValueError(f"jump_mean_inv must be > 0, got {self.jump_mean_inv}")

    @classmethod
    def brownian(cls, sigma: float, mu: float, q: float = 0.0) -> LevyModel:
        return cls(Family.BROWNIAN, sigma=float(sigma), mu=float(mu), q=float(q))

    @classmethod
    def cramer_lundberg(
        cls, d: float, jump_rate: float, jump_mean_inv: float, q: float = 0.0
    ) -> LevyModel:
        return cls(
            Family.CRAMER_LUNDBERG,
            d=float(d),
            jump_rate=float(jump_rate),
            jump_mean_inv=float(jump_mean_inv),
            q=float(q),
        )

    @property
    def bounded_variation(self) -> bool:
        return self.family is Family.CRAMER_LUNDBERG

    @property
    def domain_lower(self) -> float:
        """Exponents are analytic on ``theta > domain_lower``."""
        if self.family is Family.BROWNIAN:
            return -math.inf
        return -self.jump_mean_inv

    @property
    def mean(self) -> float:
        """``phi'(0)``, the mean of the unkilled process at time 1."""
        if self.family is Family.BROWNIAN:
            return -self.mu
        return self.d - self.jump_rate / self.jump_mean_inv

    @property
    def stationary_point(self) -> float:
        """Minimiser of the convex exponent ``phi`` on its domain."""
        if self.family is Family.BROWNIAN:
            return self.mu / self.sigma**2
        lam, rho = self.jump_rate, self.jump_mean_inv
        return math.sqrt(lam * rho / self.d) - rho

    def unkilled(self) -> LevyModel:
        return replace(self, q=0.0)

    def with_killing(self, q: float) -> LevyModel:
        return replace(self, q=float(q))


def _check_domain(model: LevyModel, theta):
    lower = model.domain_lower
    if np.any(np.asarray(theta) <= lower):
        raise DomainError(
            f"theta must exceed {lower} for {model.family.value}, got {theta}"
        )


def unkilled_exponent(model: LevyModel, theta):
    """Laplace exponent ``phi(theta) = log E[exp(theta xi_1)]`` without killing."""
    _check_domain(model, theta)
    theta = np.asarray(theta, dtype=float)
    if model.family is Family.BROWNIAN:
        out = 0.5 * model.sigma**2 * theta**2 - model.mu * theta
    else:
        out = model.d * theta - model.jump_rate * theta / (model.jump_mean_inv + theta)
    return out if out.ndim else float(out)


def laplace_exponent(model: LevyModel, theta):
    """Laplace exponent ``psi(theta) = phi(theta) - q`` of the killed process."""
    return unkilled_exponent(model, theta) - model.q


def exponent_derivative(model: LevyModel, theta):
    """``phi'(theta)`` (killing does not contribute)."""
    _check_domain(model, theta)
    theta = np.asarray(theta, dtype=float)
    if model.family is Family.BROWNIAN:
        out = model.sigma**2 * theta - model.mu
    else:
        rho = model.jump_mean_inv
        out = model.d - model.jump_rate * rho / (rho + theta) ** 2
    return out if out.ndim else float(out)


def right_inverse_phi(model: LevyModel, lam: float) -> float:
    """Largest nonnegative root ``Phi(lam)`` of ``phi(theta) = lam``.

    The bracket starts at the last stationary point of ``phi`` (or 0) and its
    upper end doubles until ``phi`` exceeds ``lam``, so the root found is the
    one on the increasing branch.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    lo = max(0.0, model.stationary_point)
    g = lambda th: unkilled_exponent(model, th) - lam  # noqa: E731
    g_lo = g(lo)
    if g_lo >= 0:
        # only possible when lo == 0 and lam == 0: phi is increasing from 0
        return lo
    hi = max(2.0 * lo, 1.0)
    while g(hi) <= 0:
        hi *= 2.0
    root = brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    # one Newton polish on the increasing branch
    slope = exponent_derivative(model, root)
    if slope > 0:
        polished = root - g(root) / slope
        if lo <= polished <= hi and abs(g(polished)) <= abs(g(root)):
            root = polished
    return float(root)


def esscher_tilt(model: LevyModel, v: float) -> LevyModel:
    """Model whose exponent is ``phi(v + theta) - phi(v)``, without killing."""
    _check_domain(model, v)
    if model.family is Family.BROWNIAN:
        return LevyModel.brownian(model.sigma, model.mu - model.sigma**2 * v)
    rho = model.jump_mean_inv
    return LevyModel.cramer_lundberg(
        model.d, model.jump_rate * rho / (rho + v), rho + v
    )


@dataclass(frozen=True)
class PredictionProblem:
    """A prediction problem for a pssMp with self-similarity index ``alpha``.

    For ``Direction.MAX`` the model is the Lamperti representation of ``X``.
    For ``Direction.MIN`` it is the spectrally negative *dual* of the Lamperti
    representation, supplied directly.
    """

    model: LevyModel
    alpha: float
    direction: Direction = Direction.MAX

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")

    @property
    def beta(self) -> float:
        """Tilt parameter of the reduced one-dimensional problem."""
        return self.alpha if self.direction is Direction.MAX else -self.alpha

    @property
    def q(self) -> float:
        return self.model.q


@dataclass(frozen=True)
class ClassReport:
    direction: Direction
    in_class: bool
    in_class1: bool
    admissible: bool
    finite_mean: str  # "finite" | "infinite" | "sufficient" | "undetermined"
    psi_alpha: float
    reason: str

    @property
    def accepted(self) -> bool:
        return self.in_class1 and self.admissible


def _admissible(problem: PredictionProblem) -> bool:
    model, beta = problem.model, problem.beta
    if beta <= model.domain_lower:
        return False
    q = model.q
    return q > unkilled_exponent(model, beta) or (q == 0 and beta < 0)


def classify(problem: PredictionProblem) -> ClassReport:
    """Class membership, admissibility and finiteness of the mean of Theta."""
    model, alpha = problem.model, problem.alpha
    q = model.q
    psi_alpha = float(laplace_exponent(model, alpha))
    reasons: list[str] = []

    monotone = model.family is Family.CRAMER_LUNDBERG and model.jump_rate == 0
    if monotone:
        reasons.append("paths are monotone (jump_rate = 0)")
    drifts_down = model.mean < 0
    if q == 0 and not drifts_down:
        reasons.append(
            f"with q = 0 the model must drift to -infinity (phi'(0) = {model.mean:.6g} >= 0)"
        )
    in_class = not reasons

    if problem.direction is Direction.MAX:
        if psi_alpha >= 0:
            msg = f"psi(alpha) = {psi_alpha:.6g} >= 0 but psi(alpha) < 0 is required"
            if model.family is Family.BROWNIAN and q == 0:
                bound = 2 * model.mu / model.sigma**2
                msg += f" (Brownian drift: alpha < 2*mu/sigma^2 = {bound:.6g})"
            reasons.append(msg)
        finite = "finite" if psi_alpha < 0 else "infinite"
    else:
        if -alpha <= model.domain_lower:
            reasons.append(
                f"dual exponent does not exist at -alpha: need alpha < rho = {model.jump_mean_inv:.6g}"
            )
        elif q > 0:
            psi_neg = float(laplace_exponent(model, -alpha))
            if psi_neg >= 0:
                reasons.append(
                    f"q > 0 requires psi(-alpha) < 0, got {psi_neg:.6g}"
                )
        if q == 0:
            finite = "finite" if psi_alpha < 0 else "infinite"
        else:
            finite = "sufficient" if psi_alpha < 0 else "undetermined"

    in_class1 = not reasons
    admissible = in_class1 and _admissible(problem)
    if in_class1 and not admissible:
        reasons.append("(q, beta) lies outside the admissible set")
    return ClassReport(
        direction=problem.direction,
        in_class=in_class,
        in_class1=in_class1,
        admissible=admissible,
        finite_mean=finite,
        psi_alpha=psi_alpha,
        reason="; ".join(reasons) if reasons else "ok",
    )


def check_gate(problem: PredictionProblem) -> ClassReport:
    """Return the class report, raising :class:`GateError` on rejection."""
    report = classify(problem)
    if not report.accepted:
        raise GateError(report.reason)
    return report
