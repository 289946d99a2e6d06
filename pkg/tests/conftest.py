from pathlib import Path

import hypothesis
import pytest

from levy_dividend.levy_model import (
    LevyModel,
    PhaseTypeLaw,
    ProblemParams,
    load_model_file,
)
from levy_dividend import solver

hypothesis.settings.register_profile(
    "ci", max_examples=50, deadline=None,
    suppress_health_check=[hypothesis.HealthCheck.too_slow],
)
hypothesis.settings.load_profile("ci")

MODELS = Path(__file__).resolve().parents[1] / "models"

# benchmark problem constants shared by every model file
Q, BETA, DELTA = 0.05, 1.5, 1.0


@pytest.fixture(scope="session")
def case1():
    """Unbounded variation: sigma = 0.2, c = 2, Weibull-like phase-type jumps."""
    return load_model_file(MODELS / "case1.model")


@pytest.fixture(scope="session")
def case2():
    """Bounded variation: sigma = 0, c = 4, same jumps."""
    return load_model_file(MODELS / "case2.model")


@pytest.fixture(scope="session")
def case1_ctx(case1):
    return solver.make_context(*case1)


@pytest.fixture(scope="session")
def case2_ctx(case2):
    return solver.make_context(*case2)


@pytest.fixture(scope="session")
def exp_model():
    """Bounded-variation model with exponential(2) jumps; hand-checkable."""
    return LevyModel(c=4.0, sigma=0.0, kappa=2.0, jumps=PhaseTypeLaw.exponential(2.0))


@pytest.fixture(scope="session")
def exp_sigma_model():
    """Same jumps with a diffusion component; threshold is interior."""
    return LevyModel(c=2.0, sigma=0.2, kappa=2.0, jumps=PhaseTypeLaw.exponential(2.0))


@pytest.fixture(scope="session")
def params():
    return ProblemParams(q=Q, beta=BETA, delta=DELTA)


@pytest.fixture(scope="session")
def exp_ctx(exp_model, params):
    return solver.make_context(exp_model, params)


@pytest.fixture(scope="session")
def exp_sigma_ctx(exp_sigma_model, params):
    return solver.make_context(exp_sigma_model, params)


@pytest.fixture(scope="session")
def drift_ctx(params):
    """Degenerate drift-only fixture: rejected by validate, accepted by the
    scale machinery, where every quantity has a one-line closed form."""
    model = LevyModel(c=2.0)
    return solver.make_context(model, params, check=False)
