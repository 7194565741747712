import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qfatou.dyadic import build_grid  # noqa: E402
from qfatou.scene import FourCornerCantor, Hyperplane, KochCurve, LipschitzGraph  # noqa: E402
from qfatou.whitney import CollarWarning  # noqa: E402


@pytest.fixture(autouse=True)
def _quiet_collar():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CollarWarning)
        yield


@pytest.fixture(scope="session")
def scenes():
    return {"hyperplane": Hyperplane(), "graph-0.05": LipschitzGraph(0.05), "graph-0.5": LipschitzGraph(0.5),
            "cantor": FourCornerCantor(6), "koch": KochCurve(4)}


@pytest.fixture(scope="session")
def hp_grid6():
    return build_grid(Hyperplane(), depth=6)


@pytest.fixture(scope="session")
def graph_grid6():
    return build_grid(LipschitzGraph(0.05), depth=6)
