import os
import sys

sys.path.append(os.path.join(os.path.dirname(__file__), ".."))

import pytest

from voltvar import load_feeder
from voltvar.netmodel import Bus, FeederNetwork, Line, graph_matrices

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data")


def _random_buses(rng, n, c_range=(0.1, 1.0), q_range=(0.05, 0.5)):
    buses = [Bus(id=0)]
    for j in range(1, n + 1):
        buses.append(
            Bus(
                id=j,
                p=-rng.uniform(0.0, 0.3),
                qc=rng.uniform(0.0, 0.15),
                q_min=-rng.uniform(*q_range),
                q_max=rng.uniform(*q_range),
                c=rng.uniform(*c_range),
                mu=1.0,
            )
        )
    return buses


def _random_tree_lines(rng, n, x_range):
    lines = []
    for j in range(1, n + 1):
        parent = int(rng.integers(0, j))
        ends = (parent, j) if rng.random() < 0.5 else (j, parent)
        lines.append(Line(*ends, r=rng.uniform(*x_range), x=rng.uniform(*x_range)))
    return lines


@pytest.fixture
def make_tree():
    """Factory for random radial feeders; lines get a random file orientation."""

    def factory(rng, n, x_range=(0.1, 1.0), **bus_kwargs):
        return FeederNetwork(
            buses=_random_buses(rng, n, **bus_kwargs),
            lines=_random_tree_lines(rng, n, x_range),
        )

    return factory


@pytest.fixture
def make_meshed():
    """Factory for random meshed feeders: a random tree plus 1..n extra ties."""

    def factory(rng, n, x_range=(0.1, 1.0), **bus_kwargs):
        lines = _random_tree_lines(rng, n, x_range)
        used = {frozenset((l.from_bus, l.to_bus)) for l in lines}
        extra = int(rng.integers(1, n + 1))
        for _ in range(50 * extra):
            if extra == 0:
                break
            a, b = (int(v) for v in rng.choice(n + 1, size=2, replace=False))
            if frozenset((a, b)) in used:
                continue
            used.add(frozenset((a, b)))
            lines.append(Line(a, b, r=rng.uniform(*x_range), x=rng.uniform(*x_range)))
            extra -= 1
        return FeederNetwork(buses=_random_buses(rng, n, **bus_kwargs), lines=lines)

    return factory


@pytest.fixture
def two_bus():
    """Single line 0 -> 1 with r = 0.2, x = 0.5 p.u."""
    net = FeederNetwork(
        buses=[Bus(id=0), Bus(id=1, p=-0.1, qc=0.05, q_min=-1.0, q_max=1.0, c=0.2)],
        lines=[Line(0, 1, r=0.2, x=0.5)],
    )
    return net, graph_matrices(net)


@pytest.fixture(scope="session")
def feeder16():
    net = load_feeder(os.path.join(DATA_DIR, "feeder16.json"))
    return net, graph_matrices(net)


@pytest.fixture(scope="session")
def feeder16_meshed():
    net = load_feeder(os.path.join(DATA_DIR, "feeder16_meshed.json"))
    return net, graph_matrices(net)


@pytest.fixture(scope="session", params=["feeder16.json", "feeder16_meshed.json"])
def feeder(request):
    """The bundled 16-bus feeder, radial and with the two ties."""
    net = load_feeder(os.path.join(DATA_DIR, request.param))
    return net, graph_matrices(net)
