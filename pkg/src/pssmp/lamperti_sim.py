"""Monte Carlo engine for the prediction problems.

The Lévy process ``xi`` is simulated in its own time; pssMp times only ever
appear through the clock ``I_t = int_0^t exp(alpha xi_s) ds``.  Brownian drift
uses exact Gaussian increments on a grid of step ``dt``, with the running
maximum inside each step drawn from the Brownian-bridge law so that the
reflected process is exact at grid points; Cramér-Lundberg paths are
simulated exactly, event by event.  The clock is integrated with the rule
that is exact for piecewise-linear ``xi`` (trapezoid order on a grid, exact
between Cramér-Lundberg jumps).

Threshold rules are evaluated for a whole grid of ``K`` in one pass over the
same paths (common random numbers).  Two estimators of the objective
``E[|Theta - tau| - Theta]`` are available:

* ``"conditional"`` (default): given the path up to ``tau``, the event that
  the extremum is still to come has probability ``exp(-Phi(q) * overshoot)``,
  and on that event the loss equals ``-tau``.  Paths stop at the trigger.
* ``"path"``: paths run to the horizon and ``Theta`` is read off the path.

Work is split into fixed-size chunks, one ``SeedSequence(seed).spawn`` child
each, and every path gets its own seed from its chunk's child.  Results do
not depend on the number of worker threads (``PSSMP_THREADS``), and runs that
differ only in the horizon share each path's prefix.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .levy_model import (
    Direction,
    Family,
    LevyModel,
    PredictionProblem,
    classify,
    check_gate,
    esscher_tilt,
    right_inverse_phi,
    unkilled_exponent,
)
from .scale_functions import ScaleFunction, scale_w, scale_w_prime

__all__ = [
    "CHUNK_SIZE",
    "LampertiPath",
    "PathConfig",
    "SimulationError",
    "SimulationReport",
    "SweepRow",
    "ThetaLocation",
    "XiPath",
    "default_horizon",
    "lamperti_build",
    "locate_theta",
    "mc_vk",
    "objective_estimate",
    "simulate_xi",
    "sweep_K",
]

CHUNK_SIZE = 4096
MAX_TRUNCATION = 0.01
FLAG_FRACTION = 0.95
_EXP_GUARD = 700.0
VK_TAIL_TOL = 1e-12

# per-path outcome codes
_TRIGGERED, _KILLED, _TRUNCATED, _OVERFLOW = 0, 1, 2, 3


class SimulationError(RuntimeError):
    """A Monte Carlo run exceeded its truncation budget."""


@dataclass(frozen=True)
class PathConfig:
    """Discretisation and sampling settings.

    ``horizon=None`` resolves to :func:`default_horizon` for the model at hand.
    """

    dt: float = 1e-4
    horizon: float | None = None
    n_paths: int = 10_000
    seed: int = 0
    x0: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.horizon is not None and not self.horizon > self.dt:
            raise ValueError(f"horizon must exceed dt, got {self.horizon}")
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if not self.x0 > 0:
            raise ValueError(f"x0 must be > 0, got {self.x0}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def resolved(self, model: LevyModel) -> PathConfig:
        if self.horizon is not None:
            return self
        return replace(self, horizon=default_horizon(model))


def default_horizon(model: LevyModel) -> float:
    """``40 / |psi'(0)|``; the killing rate stands in when it is faster."""
    rate = max(abs(model.mean), model.q)
    if rate <= 0:
        raise ValueError("model has neither drift nor killing; give an explicit horizon")
    return 40.0 / rate


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _ratio(z):
    # expm1(z) / z, continuous at 0
    if abs(z) < 1e-10:
        return 1.0 + 0.5 * z
    return math.expm1(z) / z


@njit(cache=True)
def _ramp(a, length):
    # int_0^length exp(a r) dr
    return length * _ratio(a * length)


@njit(cache=True)
def _bridge_max(a, b, var):
    # exact draw of the maximum of a Brownian bridge from a to b with variance var
    u = 1.0 - np.random.random()
    return 0.5 * (a + b + math.sqrt((b - a) ** 2 - 2.0 * var * math.log(u)))


@njit(nogil=True, cache=True)
def _record(j, ks, y, clock, g_clock, tau, theta_at, y_at, status, p):
    nk = ks.size
    while j < nk and y >= ks[j]:
        tau[p, j] = clock
        theta_at[p, j] = g_clock
        y_at[p, j] = y
        status[p, j] = 0
        j += 1
    return j


@njit(nogil=True, cache=True)
def _finish(p, j, code, clock, g_clock, y, tau, theta_at, y_at, status):
    for jj in range(j, tau.shape[1]):
        tau[p, jj] = clock
        theta_at[p, jj] = g_clock
        y_at[p, jj] = y
        status[p, jj] = code


@njit(nogil=True, cache=True)
def _bm_rule_paths(seeds, drift, sigma, q, beta, ks, dt, n_steps, full_path,
                   tau, theta_at, y_at, status, theta_end, flagged, killed_at):
    n_paths, nk = tau.shape
    flag_from = int(0.95 * n_steps)
    sd = sigma * math.sqrt(dt)
    for p in range(n_paths):
        np.random.seed(seeds[p])
        life = np.random.exponential(1.0 / q) if q > 0.0 else np.inf
        xi = 0.0
        top = 0.0
        clock = 0.0
        g_clock = 0.0
        g_step = 0
        j = _record(0, ks, 0.0, 0.0, 0.0, tau, theta_at, y_at, status, p)
        code = _TRUNCATED
        n = 0
        while n < n_steps:
            if j == nk and not full_path:
                break
            t = n * dt
            if t + dt >= life:
                h = life - t
                new = xi + drift * h + sigma * math.sqrt(h) * np.random.standard_normal()
                code = _KILLED
            else:
                h = dt
                new = xi + drift * dt + sd * np.random.standard_normal()
            if beta * new > _EXP_GUARD:
                code = _OVERFLOW
                break
            clock += h * math.exp(beta * xi) * _ratio(beta * (new - xi))
            peak = _bridge_max(xi, new, sigma * sigma * h)
            xi = new
            n += 1
            if peak >= top:
                top = peak
                g_clock = clock
                g_step = n
            j = _record(j, ks, top - xi, clock, g_clock, tau, theta_at, y_at, status, p)
            if code == _KILLED:
                break
        _finish(p, j, code, clock, g_clock, top - xi, tau, theta_at, y_at, status)
        theta_end[p] = g_clock
        flagged[p] = full_path and code == _TRUNCATED and g_step > flag_from
        killed_at[p] = clock if code == _KILLED else -1.0


@njit(nogil=True, cache=True)
def _cl_rule_paths(seeds, d, lam, rho, q, beta, ks, horizon, full_path,
                   tau, theta_at, y_at, status, theta_end, flagged, killed_at):
    n_paths, nk = tau.shape
    flag_from = FLAG_FRACTION * horizon
    for p in range(n_paths):
        np.random.seed(seeds[p])
        life = np.random.exponential(1.0 / q) if q > 0.0 else np.inf
        t = 0.0
        xi = 0.0
        top = 0.0
        clock = 0.0
        g_clock = 0.0
        g_time = 0.0
        j = _record(0, ks, 0.0, 0.0, 0.0, tau, theta_at, y_at, status, p)
        code = _TRUNCATED
        while True:
            if j == nk and not full_path:
                break
            t_end = t + (np.random.exponential(1.0 / lam) if lam > 0.0 else np.inf)
            stop = -1
            if life <= t_end and life <= horizon:
                t_end = life
                stop = _KILLED
            elif horizon < t_end:
                t_end = horizon
                stop = _TRUNCATED
            seg = t_end - t
            if beta * (xi + d * seg) > _EXP_GUARD:
                code = _OVERFLOW
                break
            clock += seg * math.exp(beta * xi) * _ratio(beta * d * seg)
            xi += d * seg
            t = t_end
            if xi >= top:
                top = xi
                g_clock = clock
                g_time = t
            if stop >= 0:
                code = stop
                break
            xi -= np.random.exponential(1.0 / rho)
            j = _record(j, ks, top - xi, clock, g_clock, tau, theta_at, y_at, status, p)
        _finish(p, j, code, clock, g_clock, top - xi, tau, theta_at, y_at, status)
        theta_end[p] = g_clock
        flagged[p] = full_path and code == _TRUNCATED and g_time > flag_from
        killed_at[p] = clock if code == _KILLED else -1.0


@njit(cache=True)
def _payoff(y, phi, payoff_one):
    return 1.0 if payoff_one else 1.0 - 2.0 * math.exp(-phi * y)


@njit(nogil=True, cache=True)
def _bm_vk_paths(seeds, drift, sigma, disc, phi, y0, k, dt, n_steps, payoff_one,
                 value, status):
    sd = sigma * math.sqrt(dt)
    for p in range(value.size):
        np.random.seed(seeds[p])
        xi = 0.0
        top = y0  # reflection level: max(y0, running max of xi)
        acc = 0.0
        prev = _payoff(y0, phi, payoff_one)
        code = _TRUNCATED
        var = sigma * sigma * dt
        for n in range(n_steps):
            new = xi + drift * dt + sd * np.random.standard_normal()
            peak = _bridge_max(xi, new, var)
            xi = new
            if peak > top:
                top = peak
            y = top - xi
            cur = math.exp(disc * (n + 1) * dt) * _payoff(y, phi, payoff_one)
            acc += 0.5 * dt * (prev + cur)
            prev = cur
            if y >= k:
                code = _TRIGGERED
                break
        value[p] = acc
        status[p] = code


@njit(nogil=True, cache=True)
def _cl_vk_paths(seeds, d, lam, rho, disc, phi, y0, k, horizon, payoff_one,
                 value, status):
    for p in range(value.size):
        np.random.seed(seeds[p])
        t = 0.0
        y = y0
        acc = 0.0
        code = _TRUNCATED
        while True:
            t_end = min(t + np.random.exponential(1.0 / lam), horizon)
            seg = t_end - t
            start = math.exp(disc * t)
            if payoff_one:
                acc += start * _ramp(disc, seg)
            else:
                # y falls linearly at rate d, then sits at 0 (f = -1)
                s = min(seg, y / d)
                acc += start * (_ramp(disc, s)
                                - 2.0 * math.exp(-phi * y) * _ramp(disc + phi * d, s))
                acc -= start * math.exp(disc * s) * _ramp(disc, seg - s)
            y = max(y - d * seg, 0.0)
            t = t_end
            if t >= horizon:
                break
            y += np.random.exponential(1.0 / rho)
            if y >= k:
                code = _TRIGGERED
                break
        value[p] = acc
        status[p] = code


# ---------------------------------------------------------------------------
# chunked execution


def _chunk_seeds(seed: int, n_paths: int) -> list[tuple[np.ndarray, int]]:
    # one seed per path: a path's draws do not depend on how long the paths
    # before it ran, so runs that differ only in horizon share path prefixes
    sizes = [CHUNK_SIZE] * (n_paths // CHUNK_SIZE)
    if n_paths % CHUNK_SIZE:
        sizes.append(n_paths % CHUNK_SIZE)
    children = np.random.SeedSequence(int(seed)).spawn(len(sizes))
    return [(c.generate_state(n, np.uint32), n) for c, n in zip(children, sizes)]


def _workers(n_chunks: int) -> int:
    cap = os.environ.get("PSSMP_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_chunks))


def _run_chunks(job, seed: int, n_paths: int) -> list:
    chunks = _chunk_seeds(seed, n_paths)
    n_workers = _workers(len(chunks))
    if n_workers == 1:
        return [job(s, n) for s, n in chunks]
    with ThreadPoolExecutor(n_workers) as pool:
        return list(pool.map(lambda c: job(*c), chunks))


def _rule_outcomes(model: LevyModel, beta: float, ks: np.ndarray, cfg: PathConfig,
                   full_path: bool) -> dict[str, np.ndarray]:
    nk = ks.size

    def job(seeds, n):
        out = dict(
            tau=np.empty((n, nk)), theta_at=np.empty((n, nk)), y_at=np.empty((n, nk)),
            status=np.empty((n, nk), np.int8), theta_end=np.empty(n),
            flagged=np.empty(n, np.bool_), killed_at=np.empty(n),
        )
        args = (out["tau"], out["theta_at"], out["y_at"], out["status"],
                out["theta_end"], out["flagged"], out["killed_at"])
        if model.family is Family.BROWNIAN:
            n_steps = int(math.ceil(cfg.horizon / cfg.dt))
            _bm_rule_paths(seeds, -model.mu, model.sigma, model.q, beta, ks, cfg.dt,
                           n_steps, full_path, *args)
        else:
            _cl_rule_paths(seeds, model.d, model.jump_rate, model.jump_mean_inv, model.q,
                           beta, ks, cfg.horizon, full_path, *args)
        return out

    parts = _run_chunks(job, cfg.seed, cfg.n_paths)
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class SweepRow:
    K: float
    mean: float
    stderr: float
    n: int
    truncation_rate: float

    def as_record(self) -> dict:
        return {"K": self.K, "mean": self.mean, "stderr": self.stderr, "n": self.n,
                "truncation_rate": self.truncation_rate}


@dataclass(frozen=True)
class SimulationReport:
    """Per-``K`` objective estimates from one common-random-numbers pass.

    ``losses`` holds the per-path losses (``nan`` where a path was
    truncated); it backs :meth:`contrast` and the optional per-path dump.
    """

    rows: tuple[SweepRow, ...]
    tail: str
    config: PathConfig
    theta_mean: float | None
    theta_stderr: float | None
    killed_rate: float
    overflow_count: int
    flag_rate: float
    truncation_bias_bound: float
    ungated: bool = False
    finite_variance: bool = True
    losses: np.ndarray = field(default=None, repr=False, compare=False)
    taus: np.ndarray = field(default=None, repr=False, compare=False)
    thetas: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def label(self) -> str:
        return "ungated, biased" if self.ungated else "gated"

    @property
    def max_truncation_rate(self) -> float:
        return max(r.truncation_rate for r in self.rows)

    def argmin(self) -> int:
        return int(np.argmin([r.mean for r in self.rows]))

    def contrast(self, i: int, j: int) -> tuple[float, float, float]:
        """``mean_i - mean_j`` with its paired (CRN) and unpaired stderr."""
        a, b = self.losses[:, i], self.losses[:, j]
        ok = np.isfinite(a) & np.isfinite(b)
        diff = a[ok] - b[ok]
        paired = float(diff.std(ddof=1) / math.sqrt(diff.size))
        unpaired = math.hypot(self.rows[i].stderr, self.rows[j].stderr)
        return float(diff.mean()), paired, unpaired

    def path_dump(self, column: int = 0) -> list[tuple[int, float, float, float]]:
        """Rows ``(path_id, theta, tau, loss)`` for one ``K`` column."""
        return [(i, float(th), float(t), float(l)) for i, (th, t, l) in enumerate(
            zip(self.thetas[:, column], self.taus[:, column], self.losses[:, column]))]


def _mean_stderr(values: np.ndarray) -> tuple[float, float, int]:
    values = values[np.isfinite(values)]
    n = values.size
    if n < 2:
        return math.nan, math.nan, n
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n)), n


def _ratio_to_log(direction: Direction, K: float) -> float:
    if direction is Direction.MAX:
        if not 0 < K <= 1:
            raise ValueError(f"maximum rules need K in (0, 1], got {K}")
        return -math.log(K)
    if not K >= 1:
        raise ValueError(f"minimum rules need K >= 1, got {K}")
    return math.log(K)


def _loss_has_variance(problem: PredictionProblem, k_max: float, tail: str) -> bool:
    """Whether the per-path loss has a finite second moment.

    Before ``tau_k`` the clock rate ``exp(beta xi)`` is bounded by
    ``exp(beta * running max)``, and the running max at ``tau_k`` (or at
    killing) is exponential with rate ``W'(k) / W(k)`` of ``W^(q)``; so for
    ``beta > 0`` the loss up to ``tau`` has a second moment iff that rate
    exceeds ``2 beta``.  For ``beta < 0`` the rate is bounded by
    ``exp(-beta k)``.  Reading ``Theta`` off the whole path also needs
    ``phi(2 beta) < q``.
    """
    model, beta = problem.model, problem.beta
    if tail == "path":
        two = 2.0 * beta
        if two <= model.domain_lower or not float(unkilled_exponent(model, two)) < model.q:
            return False
    if beta < 0 or k_max <= 0:
        return True
    sf = ScaleFunction(model, model.q)
    return float(scale_w_prime(sf, k_max)) / float(scale_w(sf, k_max)) > 2.0 * beta


def sweep_K(problem: PredictionProblem, K_grid, config: PathConfig,
            tail: str = "conditional", gated: bool = True) -> SimulationReport:
    """Objective ``E[|Theta - tau_K| - Theta]`` for every ``K`` on one set of paths.

    Parameters
    ----------
    tail : {"conditional", "path"}
        How the part of the path after ``tau`` enters; see the module notes.
    gated : bool
        With ``False`` problems outside the finite-mean class are simulated
        anyway and the report is labelled ``"ungated, biased"``.

    Raises
    ------
    SimulationError
        If more than 1% of paths are truncated for some ``K``.
    """
    if tail not in ("conditional", "path"):
        raise ValueError(f"tail must be 'conditional' or 'path', got {tail!r}")
    ungated = False
    if gated:
        check_gate(problem)
    else:
        ungated = not classify(problem).accepted
    model = problem.model
    cfg = config.resolved(model)
    K = np.asarray(K_grid, dtype=float).ravel()
    if K.size == 0:
        raise ValueError("empty K grid")
    ks = np.array([_ratio_to_log(problem.direction, k) for k in K])
    order = np.argsort(ks, kind="stable")
    full_path = tail == "path"
    out = _rule_outcomes(model, problem.beta, ks[order], cfg, full_path)
    back = np.argsort(order, kind="stable")
    scale = cfg.x0**problem.alpha

    status = out["status"][:, back]
    tau = out["tau"][:, back] * scale
    theta_at = out["theta_at"][:, back] * scale
    if full_path:
        theta = np.repeat((out["theta_end"] * scale)[:, None], K.size, axis=1)
        losses = np.abs(theta - tau) - theta
        valid = (status <= _KILLED) & ~out["flagged"][:, None]
    else:
        phi_q = right_inverse_phi(model, model.q)
        p_later = np.where(status == _TRIGGERED, np.exp(-phi_q * out["y_at"][:, back]), 0.0)
        losses = -p_later * tau + (1.0 - p_later) * (tau - 2.0 * theta_at)
        theta = theta_at
        valid = status <= _KILLED
    losses = np.where(valid, losses, np.nan)

    rows = []
    n = cfg.n_paths
    for c in range(K.size):
        mean, se, n_eff = _mean_stderr(losses[:, c])
        rows.append(SweepRow(float(K[c]), mean, se, n_eff, 1.0 - n_eff / n))
    worst = max(r.truncation_rate for r in rows)
    if worst > MAX_TRUNCATION:
        raise SimulationError(
            f"{worst:.2%} of paths truncated (limit {MAX_TRUNCATION:.0%}); "
            "increase the horizon"
        )
    finite = losses[np.isfinite(losses)]
    bias_bound = worst * (float(np.abs(finite).max()) if finite.size else 0.0)

    theta_mean = theta_se = None
    if full_path:
        keep = ~out["flagged"] & (out["status"][:, 0] != _OVERFLOW)
        theta_mean, theta_se, _ = _mean_stderr(out["theta_end"][keep] * scale)
    return SimulationReport(
        rows=tuple(rows),
        tail=tail,
        config=cfg,
        theta_mean=theta_mean,
        theta_stderr=theta_se,
        killed_rate=float(np.mean(out["killed_at"] >= 0)),
        overflow_count=int(np.sum(out["status"][:, 0] == _OVERFLOW)),
        flag_rate=float(np.mean(out["flagged"])),
        truncation_bias_bound=bias_bound,
        ungated=ungated,
        finite_variance=_loss_has_variance(problem, float(ks.max()), tail),
        losses=losses,
        taus=tau,
        thetas=theta,
    )


def objective_estimate(problem: PredictionProblem, K: float, config: PathConfig,
                       tail: str = "conditional") -> tuple[float, float]:
    """Mean and standard error of the objective under the rule with ratio ``K``."""
    row = sweep_K(problem, [K], config, tail=tail).rows[0]
    return row.mean, row.stderr


def _vk_horizon(tilted: LevyModel, disc: float, k: float) -> float:
    # time scales: discount decay, drift to k, diffusive spread to k
    scales = [k * k / tilted.sigma**2] if tilted.family is Family.BROWNIAN else []
    if disc < 0:
        scales.append(1.0 / -disc)
    if tilted.mean != 0:
        scales.append(k / abs(tilted.mean))
    if not scales:
        raise ValueError("no natural time scale; give an explicit horizon")
    return 40.0 * max(scales)


def mc_vk(problem: PredictionProblem, k: float, y: float, config: PathConfig,
          payoff: str = "f") -> tuple[float, float]:
    """Monte Carlo estimate of the one-dimensional value ``V_k(y)``.

    Simulates the model tilted by ``beta``, reflected at its running maximum
    started from ``y``, and integrates ``exp((phi(beta) - q) u) f(Y_u)`` until
    ``Y`` first reaches ``k``.  ``payoff="one"`` replaces ``f`` by 1.
    """
    if payoff not in ("f", "one"):
        raise ValueError(f"payoff must be 'f' or 'one', got {payoff!r}")
    if y < 0 or not k > 0:
        raise ValueError("need y >= 0 and k > 0")
    check_gate(problem)
    if y >= k:
        return 0.0, 0.0
    model, beta = problem.model, problem.beta
    tilted = esscher_tilt(model, beta)
    disc = float(unkilled_exponent(model, beta)) - model.q
    phi = right_inverse_phi(model, model.q)
    cfg = config
    if cfg.horizon is None:
        cfg = replace(cfg, horizon=_vk_horizon(tilted, disc, k))
    one = payoff == "one"

    def job(seeds, n):
        value, status = np.empty(n), np.empty(n, np.int8)
        if tilted.family is Family.BROWNIAN:
            n_steps = int(math.ceil(cfg.horizon / cfg.dt))
            _bm_vk_paths(seeds, -tilted.mu, tilted.sigma, disc, phi, y, k, cfg.dt,
                         n_steps, one, value, status)
        else:
            _cl_vk_paths(seeds, tilted.d, tilted.jump_rate, tilted.jump_mean_inv, disc,
                         phi, y, k, cfg.horizon, one, value, status)
        return value, status

    parts = _run_chunks(job, cfg.seed, cfg.n_paths)
    value = np.concatenate([p[0] for p in parts])
    status = np.concatenate([p[1] for p in parts])
    # with a discount the part of the integral beyond the horizon is at most
    # exp(disc T) / |disc|; such paths are complete for all practical purposes
    tail_mass = math.exp(disc * cfg.horizon) / -disc if disc < 0 else math.inf
    done = (status == _TRIGGERED) | (tail_mass <= VK_TAIL_TOL)
    truncated = float(np.mean(~done))
    if truncated > MAX_TRUNCATION:
        raise SimulationError(
            f"{truncated:.2%} of paths did not reach k before the horizon"
        )
    mean, se, _ = _mean_stderr(np.where(done, value, np.nan))
    return mean * cfg.x0**problem.alpha, se * cfg.x0**problem.alpha


# ---------------------------------------------------------------------------
# explicit paths (small samples, tests, debugging)


@dataclass(frozen=True)
class XiPath:
    """One path of ``xi`` as points ``(t, xi)``, linear in between.

    A jump appears as two points with the same time (left limit, then the
    value after the jump).  ``lifetime`` is the killing time (``inf`` if the
    path is not killed before ``horizon``).
    """

    t: np.ndarray
    xi: np.ndarray
    lifetime: float
    horizon: float

    @property
    def killed(self) -> bool:
        return math.isfinite(self.lifetime)

    def dual(self) -> XiPath:
        return replace(self, xi=-self.xi)


def simulate_xi(model: LevyModel, config: PathConfig, n_paths: int | None = None
                ) -> list[XiPath]:
    """Independent paths of ``model`` on ``[0, min(lifetime, horizon)]``."""
    cfg = config.resolved(model)
    n = cfg.n_paths if n_paths is None else n_paths
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed)))
    lifetimes = rng.exponential(1.0 / model.q, n) if model.q > 0 else np.full(n, np.inf)
    paths = []
    if model.family is Family.BROWNIAN:
        n_steps = int(math.ceil(cfg.horizon / cfg.dt))
        grid = np.arange(n_steps + 1) * cfg.dt
        steps = rng.standard_normal((n, n_steps)) * (model.sigma * math.sqrt(cfg.dt))
        steps -= model.mu * cfg.dt
        values = np.concatenate([np.zeros((n, 1)), np.cumsum(steps, axis=1)], axis=1)
        for i in range(n):
            life = lifetimes[i]
            if life < cfg.horizon:
                m = int(np.searchsorted(grid, life, side="right"))
                h = life - grid[m - 1]
                end = values[i, m - 1] - model.mu * h + model.sigma * math.sqrt(h) * rng.standard_normal()
                t = np.append(grid[:m], life)
                xi = np.append(values[i, :m], end)
                paths.append(XiPath(t, xi, float(life), cfg.horizon))
            else:
                paths.append(XiPath(grid, values[i], math.inf, cfg.horizon))
        return paths

    d, lam, rho = model.d, model.jump_rate, model.jump_mean_inv
    for i in range(n):
        end_time = min(lifetimes[i], cfg.horizon)
        ts, xs = [0.0], [0.0]
        t = x = 0.0
        while True:
            gap = rng.exponential(1.0 / lam) if lam > 0 else math.inf
            if t + gap >= end_time:
                ts.append(end_time)
                xs.append(x + d * (end_time - t))
                break
            t += gap
            x += d * gap
            ts.append(t)
            xs.append(x)
            x -= rng.exponential(1.0 / rho)
            ts.append(t)
            xs.append(x)
        life = float(lifetimes[i]) if lifetimes[i] <= cfg.horizon else math.inf
        paths.append(XiPath(np.array(ts), np.array(xs), life, cfg.horizon))
    return paths


@dataclass(frozen=True)
class LampertiPath:
    """pssMp path ``X_u = x0 exp(xi_t)`` at ``u = x0^alpha I_t``.

    ``zeta_kind`` is ``"killed"``, ``"tail-corrected"`` (``xi`` drifting to
    ``-inf``, tail of the clock added in expectation) or ``"not-reached"``.
    """

    u: np.ndarray
    x: np.ndarray
    clock: np.ndarray
    zeta: float
    zeta_kind: str
    overflowed: bool


def _clock(t: np.ndarray, xi: np.ndarray, alpha: float) -> np.ndarray:
    h = np.diff(t)
    a = alpha * xi[:-1]
    z = alpha * np.diff(xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.abs(z) < 1e-10, 1.0 + 0.5 * z, np.expm1(z) / z)
    return np.concatenate([[0.0], np.cumsum(h * np.exp(a) * ratio)])


def lamperti_build(xi_path: XiPath, alpha: float, x0: float = 1.0,
                   psi_alpha: float | None = None) -> LampertiPath:
    """Lamperti time change of one ``xi`` path.

    Parameters
    ----------
    psi_alpha : float, optional
        ``psi(alpha)`` of the unkilled model.  When negative and the path is
        not killed, the lifetime is estimated as the clock at the horizon plus
        its conditional expected tail ``exp(alpha xi_T) / -psi(alpha)``.
    """
    t, xi = xi_path.t, xi_path.xi
    over = np.nonzero(alpha * xi > _EXP_GUARD)[0]
    overflowed = over.size > 0
    if overflowed:
        t, xi = t[: over[0]], xi[: over[0]]
    clock = _clock(t, xi, alpha)
    scale = x0**alpha
    if overflowed:
        zeta, kind = math.nan, "overflow"
    elif xi_path.killed:
        zeta, kind = scale * clock[-1], "killed"
    elif psi_alpha is not None and psi_alpha < 0:
        zeta = scale * (clock[-1] + math.exp(alpha * xi[-1]) / -psi_alpha)
        kind = "tail-corrected"
    else:
        zeta, kind = math.inf, "not-reached"
    return LampertiPath(scale * clock, x0 * np.exp(xi), clock, zeta, kind, overflowed)


@dataclass(frozen=True)
class ThetaLocation:
    g: float  # xi-time of the extremum
    theta: float  # pssMp time of the extremum
    index: int
    truncated: bool


def locate_theta(xi_path: XiPath, direction: Direction, alpha: float,
                 x0: float = 1.0) -> ThetaLocation:
    """Last time the path attains its maximum (``MAX``) or minimum (``MIN``).

    ``xi_path`` is the Lamperti representation of ``X`` itself, so for the
    minimum problem pass ``path.dual()`` of a simulated dual model.
    """
    xi = xi_path.xi if Direction(direction) is Direction.MAX else -xi_path.xi
    last = xi.size - 1 - int(np.argmax(xi[::-1]))
    clock = _clock(xi_path.t, xi_path.xi, alpha)
    g = float(xi_path.t[last])
    truncated = (not xi_path.killed) and g > FLAG_FRACTION * xi_path.horizon
    return ThetaLocation(g, x0**alpha * float(clock[last]), last, truncated)
