from __future__ import annotations

import os
import sys
import time

import pandas as pd
import pytest
from helpers import show_table

sys.path.append(os.path.join(os.path.dirname(__file__), ".."))

from voltvar import load_feeder
from voltvar.control import make_config, run_closed_loop
from voltvar.netmodel import graph_matrices
from voltvar.scenario import DynamicScenario, run_dynamic, synthetic_profile

benchmark_info = {}

# A full day must replay in well under a minute.
DAY_BUDGET_S = 60.0


@pytest.fixture(scope="session", autouse=True)
def report(request):
    yield

    def process_result():
        df = pd.DataFrame(benchmark_info).T
        df = df.sort_values(by="seconds", ascending=True)
        show_table(df, "voltvar runtime")

    request.addfinalizer(process_result)


@pytest.fixture(scope="session", params=["feeder16", "feeder16_meshed"])
def feeder(request):
    net = load_feeder(request.param)
    return request.param, net, graph_matrices(net)


@pytest.mark.parametrize("plant", ["linear", "ac"])
@pytest.mark.parametrize(
    "scheme, options",
    [
        ("scaled", {"epsilon": 0.3}),
        ("droop", {"c": 0.5}),
        ("delayed", {"c": 0.5, "alpha": 0.3}),
    ],
)
def test_static(feeder, scheme, options, plant):
    name, net, gm = feeder
    cfg = make_config(scheme, gm, net=net, **options)
    start = time.perf_counter()
    result = run_closed_loop(net, gm, cfg, plant=plant, max_iter=500)
    cost = time.perf_counter() - start
    benchmark_info[f"{name} static {scheme}/{plant}"] = {
        "seconds": cost,
        "iterations": result.iterations,
        "final_mismatch": result.final_mismatch,
    }


@pytest.mark.parametrize("scheme", [None, "scaled", "delayed"])
def test_full_day(feeder, scheme):
    name, net, gm = feeder
    scen = DynamicScenario.for_network(net, synthetic_profile())
    cfg = None
    if scheme == "scaled":
        cfg = make_config("scaled", gm, net=net)
    elif scheme == "delayed":
        cfg = make_config("delayed", gm, alpha=0.3, net=net)
    start = time.perf_counter()
    result = run_dynamic(net, scen, cfg, plant="ac", gm=gm)
    cost = time.perf_counter() - start
    benchmark_info[f"{name} day {scheme or 'none'}"] = {
        "seconds": cost,
        "iterations": len(result.trace),
        "final_mismatch": float(result.summary["mismatch_norm"].mean()),
    }
    assert cost < DAY_BUDGET_S
