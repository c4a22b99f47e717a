import pytest

from opcalc import deriv
from opcalc.expr import parse


@pytest.fixture(scope="session")
def derivation():
    """The bundled hydrogen-atom derivation, run once per session."""
    return deriv.run_script(deriv.bundled("so4.deriv"))


@pytest.fixture(scope="session")
def setup_state():
    return deriv.run_script(deriv.bundled("so4.setup"))


@pytest.fixture(scope="session")
def ctx(setup_state):
    """Context with the six basic commutation rules."""
    return setup_state.ctx


@pytest.fixture
def P():
    return parse


def ctx_at(state, label):
    return state.contexts[str(label)]
