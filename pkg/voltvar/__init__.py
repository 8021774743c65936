# Copyright (c) 2024 The voltvar Authors. All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


from __future__ import annotations

from pathlib import Path
from typing import Union

from loguru import logger

from .centralopt import Objective, QpProblem, kkt_residual, problem_from_network, solve
from .control import (
    ControlConfig,
    ControlState,
    Scheme,
    TraceRecord,
    make_config,
    run_closed_loop,
    step,
)
from .exceptions import InputError, VoltVarError
from .netmodel import (
    FeederNetwork,
    GraphMatrices,
    baseline_voltage,
    build_incidence,
    compute_sensitivities,
    graph_matrices,
    load_network,
)
from .pflow import solve_acpf, solve_lindistflow
from .scenario import DynamicScenario, run_dynamic, run_static, synthetic_profile
from .stability import StabilityReport, analyze, scaled_epsilon_bound

__version__ = "0.1.0"

__all__ = [
    "load_feeder",
    "FeederNetwork",
    "GraphMatrices",
    "build_incidence",
    "compute_sensitivities",
    "graph_matrices",
    "baseline_voltage",
    "load_network",
    "solve_lindistflow",
    "solve_acpf",
    "Scheme",
    "ControlConfig",
    "ControlState",
    "TraceRecord",
    "make_config",
    "step",
    "run_closed_loop",
    "StabilityReport",
    "analyze",
    "scaled_epsilon_bound",
    "Objective",
    "QpProblem",
    "problem_from_network",
    "solve",
    "kkt_residual",
    "DynamicScenario",
    "run_static",
    "run_dynamic",
    "synthetic_profile",
    "VoltVarError",
]

logger.disable("voltvar")

_DATA_DIRS = (
    Path(__file__).resolve().parent / "data",
    Path(__file__).resolve().parent.parent / "data",
)


def load_feeder(name_or_path: Union[str, Path]) -> FeederNetwork:
    """
    Loads a network file, or a bundled feeder by name ("feeder16", "feeder16_meshed",
    "feeder2").
    """
    path = Path(name_or_path)
    if not path.suffix:
        for data_dir in _DATA_DIRS:
            candidate = data_dir / f"{path.name}.json"
            if candidate.is_file():
                path = candidate
                break
        else:
            raise InputError(f"Unsupported feeder {name_or_path}.")
    return load_network(path)
