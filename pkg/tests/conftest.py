import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from bridgetwin.loading import RandomLoadSpec
from bridgetwin.model import (
    MaterialSpec,
    SectionSpec,
    cantilever_template,
    simply_supported_beam_template,
)
from bridgetwin.pipeline import TwinContext

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BRIDGE_YAML = str(CONFIGS / "bridge.yaml")
TRAIN_YAML = str(CONFIGS / "train.yaml")
SENSORS_EAST = str(CONFIGS / "sensors_east.csv")
SENSORS_WEST = str(CONFIGS / "sensors_west.csv")

_capture_manager = None


def pytest_configure(config):
    global _capture_manager
    _capture_manager = config.pluginmanager.getplugin("capturemanager")


def emit(line: str) -> None:
    """Print past pytest's fd-level capture, so the line reaches the terminal."""
    if _capture_manager is not None:
        with _capture_manager.global_and_fixture_disabled():
            print(line, flush=True)
    else:
        print(line, flush=True)


@pytest.fixture(scope="session")
def bundled_ctx():
    """The shipped bridge, train and east-girder gauges."""
    return TwinContext.from_files(BRIDGE_YAML, TRAIN_YAML, SENSORS_EAST)


@pytest.fixture(scope="session")
def study_ctx():
    """Same bridge and train with a light ambient load prior.

    Synthetic recovery studies keep the prior strain spread well below the
    mismatch amplitude so the recovered hyperparameters are attributable to
    the sampler, not to prior misfit.
    """
    ctx = TwinContext.from_files(BRIDGE_YAML, TRAIN_YAML, SENSORS_EAST)
    ctx.random_load = RandomLoadSpec(sigma=150.0, length_scale=1.0)
    return ctx


@pytest.fixture()
def steel():
    return MaterialSpec(210e9, 0.3)


@pytest.fixture()
def plain_section():
    # round numbers so closed forms stay readable
    return SectionSpec(bending_stiffness=2.0e6, torsion_stiffness=5.0e5, fiber_distance=0.1)


@pytest.fixture()
def ss_beam(plain_section):
    return simply_supported_beam_template(4.0, 4, plain_section)


@pytest.fixture()
def cantilever(plain_section):
    return cantilever_template(2.0, 2, plain_section)
