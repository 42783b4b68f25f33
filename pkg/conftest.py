import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.dynamics import RMASystem  # noqa: E402
from src.interaction_laws import Ensemble, StandardLaw  # noqa: E402
from src.tlg_graph import build_tlg  # noqa: E402

SYSTEMS = ROOT / "configs" / "systems"
S11 = StandardLaw(1.0, 1.0)


def uniform_system(graph, law=S11) -> RMASystem:
    return RMASystem(graph, Ensemble({e: law for e in graph.edges}))


def random_system(graph, rng) -> RMASystem:
    laws = {e: StandardLaw(rng.uniform(0.5, 2.0), rng.uniform(0.25, 4.0)) for e in graph.edge_list}
    return RMASystem(graph, Ensemble(laws))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pair():
    return uniform_system(build_tlg((1, 2), []))


@pytest.fixture
def triangle():
    return uniform_system(build_tlg((1, 2), [(3, (1, 2))]))


@pytest.fixture
def triangle_chain():
    return build_tlg((1, 2), [(3, (1, 2)), (4, (2, 3)), (5, (3, 4))])


@pytest.fixture
def degenerate_triangle():
    g = build_tlg((1, 2), [(3, (1, 2))])
    laws = {(1, 3): StandardLaw(1.0, 1.0), (2, 3): StandardLaw(1.0, 4.0), (1, 2): StandardLaw(1.0, 9.0)}
    return RMASystem(g, Ensemble(laws))
