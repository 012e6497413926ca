import math

import pytest

import hude
from hude import reactor


@pytest.fixture(scope="session")
def example2():
    # x'' = 2x' + 3x + e^{-t} * noise, x(0) = x'(0) = 0
    return hude.HudeModel.parse(2, "2*x1 + 3*x0", ["exp(-t)"])


@pytest.fixture(scope="session")
def example1():
    # x'' = -x + e^{-t} * noise; its quantile paths cross, so they are not
    # quantiles of anything
    return hude.HudeModel.parse(2, "-x0", ["exp(-t)"])


@pytest.fixture(scope="session")
def zero_init2():
    return hude.InitialState(0.0, [0.0, 0.0])


@pytest.fixture(scope="session")
def reactor_fitted():
    return reactor.build_reactor_hude(reactor.THERMAL_U235).bind(reactor.FITTED_THETA)


def logistic_quantile(alpha: float) -> float:
    """Independent re-derivation of the standard normal inverse uncertainty
    distribution used by closed-form oracles."""
    return math.sqrt(3.0) / math.pi * math.log(alpha / (1.0 - alpha))


def example2_closed_form(t: float, alpha: float) -> float:
    """Exact quantile path of the example2 dynamics."""
    factor = math.sqrt(3.0) / (16.0 * math.pi) * (
        math.exp(3.0 * t) - math.exp(-t) - 4.0 * t * math.exp(-t)
    )
    return factor * math.log(alpha / (1.0 - alpha))


def example1_closed_form(t: float, alpha: float, a: float = 0.0, b: float = 0.0) -> float:
    """Exact quantile path of the example1 dynamics."""
    p = logistic_quantile(alpha)
    return (a - p / 2.0) * math.cos(t) + (b + p / 2.0) * math.sin(t) + (
        p / 2.0
    ) * math.exp(-t)
