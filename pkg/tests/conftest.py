import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from pssmp.levy_model import Direction, LevyModel, PredictionProblem

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def phi_brownian(sigma, mu, theta):
    """Unkilled exponent written out independently of the package."""
    return 0.5 * sigma**2 * theta**2 - mu * theta


def phi_cramer(d, lam, rho, theta):
    return d * theta - lam * theta / (rho + theta)


def exponent(model: LevyModel, theta: float) -> float:
    if model.bounded_variation:
        return phi_cramer(model.d, model.jump_rate, model.jump_mean_inv, theta)
    return phi_brownian(model.sigma, model.mu, theta)


def largest_root(model: LevyModel, lam: float) -> float:
    """``Phi(lam)`` by plain bisection on a wide bracket (test oracle)."""
    lo, hi = max(0.0, model.stationary_point), 1.0
    while exponent(model, hi) <= lam:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if exponent(model, mid) <= lam:
            lo = mid
        else:
            hi = mid
    return hi


def accepted_independently(problem: PredictionProblem) -> bool:
    """Gate conditions evaluated with the test-side exponent."""
    m, a = problem.model, problem.alpha
    if m.q == 0 and not m.mean < 0:
        return False
    if problem.direction is Direction.MAX:
        return exponent(m, a) - m.q < 0
    if -a <= m.domain_lower:
        return False
    if m.q > 0:
        return exponent(m, -a) - m.q < 0
    return True


def random_problem(rng: np.random.Generator) -> PredictionProblem:
    """Draw an admissible problem from both families and directions."""
    while True:
        q = 0.0 if rng.random() < 0.5 else float(rng.uniform(0.05, 1.5))
        direction = Direction.MAX if rng.random() < 0.5 else Direction.MIN
        if rng.random() < 0.5:
            model = LevyModel.brownian(rng.uniform(0.5, 2.0), rng.uniform(0.2, 2.0), q)
        else:
            d, rho = rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)
            lam = rho * d * rng.uniform(1.2, 3.0) if q == 0 else rng.uniform(0.3, 3.0)
            model = LevyModel.cramer_lundberg(d, lam, rho, q)
        if direction is Direction.MAX:
            alpha = rng.uniform(0.1, 0.9) * largest_root(model, q)
        else:
            alpha = rng.uniform(0.1, 2.5)
        problem = PredictionProblem(model, float(alpha), direction)
        if accepted_independently(problem):
            return problem


@st.composite
def brownian_models(draw, killed=None):
    q = draw(st.sampled_from([0.0]) if killed is False else st.floats(0.0, 2.0))
    if killed:
        q = draw(st.floats(0.05, 2.0))
    return LevyModel.brownian(draw(st.floats(0.3, 3.0)), draw(st.floats(-2.0, 2.0)), q)


@st.composite
def cramer_models(draw):
    return LevyModel.cramer_lundberg(
        draw(st.floats(0.3, 4.0)), draw(st.floats(0.05, 4.0)), draw(st.floats(0.3, 4.0)),
        draw(st.floats(0.0, 2.0)),
    )


any_model = st.one_of(brownian_models(), cramer_models())


@st.composite
def admissible_problems(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_problem(np.random.default_rng(seed))


@pytest.fixture
def bm_max():
    return PredictionProblem(LevyModel.brownian(1.0, 1.0), 1.0, Direction.MAX)


@pytest.fixture
def bessel3():
    return PredictionProblem(LevyModel.brownian(1.0, 0.5), 2.0, Direction.MIN)


@pytest.fixture
def cramer():
    return PredictionProblem(LevyModel.cramer_lundberg(2.0, 1.0, 1.0, q=2.0), 1.0,
                             Direction.MAX)


GOLDEN_K = (3.0 + math.sqrt(5.0)) / 2.0
