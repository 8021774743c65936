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

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_UNSTABLE = 3
EXIT_NOT_CONVERGED = 4


class VoltVarError(Exception):
    exit_code = EXIT_INPUT_ERROR


class InputError(VoltVarError):
    """Unreadable or malformed input files and arguments."""


class ParameterError(InputError):
    """A physical parameter violates its invariant (x <= 0, q_min > q_max, ...)."""


class TopologyError(InputError):
    """Disconnected feeder graph or singular network matrix."""


class ConfigurationError(InputError):
    """Controller configuration that cannot be resolved."""


class ContractViolation(VoltVarError):
    """A caller broke a precondition: infeasible iterate, asymmetric matrix, bad dims."""


class NonConvergenceError(VoltVarError):
    exit_code = EXIT_NOT_CONVERGED

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class DivergenceError(VoltVarError):
    exit_code = EXIT_NOT_CONVERGED

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
