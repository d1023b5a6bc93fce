import numpy as np
import pytest
from hypothesis import settings

from scalebench.corpus import write_synthetic_corpus
from scalebench.models import MambaConfig, TransformerConfig, init_weights

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def tf_config():
    return TransformerConfig.mini()


@pytest.fixture(scope="session")
def mamba_config():
    return MambaConfig.mini()


@pytest.fixture(scope="session")
def tf_weights(tf_config):
    return init_weights(tf_config, seed=42)


@pytest.fixture(scope="session")
def mamba_weights(mamba_config):
    return init_weights(mamba_config, seed=42)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sessions")
    write_synthetic_corpus(d, sessions=4, seed=0)
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one pass/fail line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
