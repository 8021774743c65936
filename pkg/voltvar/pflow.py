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

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
from loguru import logger

from .exceptions import ConfigurationError, DivergenceError, TopologyError
from .netmodel import FeederNetwork, GraphMatrices, _check_len, baseline_voltage

AC_TOLERANCE = 1e-8
AC_MAX_ITER = 100


def solve_lindistflow(gm: GraphMatrices, p, q, v0: float = 1.0, qc=None) -> np.ndarray:
    """
    Evaluates the linear model V = X q + V̄(p, qc, v0).

    `q` is the controlled VAR injection. Without `qc` it is taken as the net
    reactive injection of every bus.
    """
    q = _check_len("q", q, gm.n)
    if qc is None:
        qc = np.zeros(gm.n)
    return gm.X @ q + baseline_voltage(gm, p, qc, v0)


@dataclass(frozen=True)
class AcSolution:
    v_mag: np.ndarray
    v_ang: np.ndarray
    converged: bool
    iterations: int
    max_mismatch: float

    @property
    def v(self) -> np.ndarray:
        """Complex bus voltages, slack included."""
        return self.v_mag * np.exp(1j * self.v_ang)


class _ZBus:
    """Factorized slack-reduced admittance matrix of one network."""

    def __init__(self, net: FeederNetwork):
        net.validate()
        n_bus = len(net.buses)
        Y = np.zeros((n_bus, n_bus), dtype=complex)
        for line in net.lines:
            y = 1.0 / complex(line.r, line.x)
            i, k = line.from_bus, line.to_bus
            Y[i, i] += y
            Y[k, k] += y
            Y[i, k] -= y
            Y[k, i] -= y
        self.n = n_bus - 1
        self.y_red = Y[1:, 1:]
        self.y_slack = Y[1:, 0]
        self.lu = sla.lu_factor(self.y_red, check_finite=False)
        pivots = np.abs(np.diag(self.lu[0]))
        if np.any(pivots < 1e-12 * max(pivots.max(), 1.0)):
            raise TopologyError("Reduced admittance matrix is singular.")

    def solve(self, s: np.ndarray, v0: float, tol: float, max_iter: int) -> AcSolution:
        coupling = self.y_slack * v0
        v = np.full(self.n, complex(v0))
        mismatch = np.inf
        iterations = 0
        converged = False
        for iterations in range(1, max_iter + 1):
            v = sla.lu_solve(self.lu, np.conj(s / v) - coupling, check_finite=False)
            if not np.all(np.isfinite(v)) or np.any(np.abs(v) < 1e-6):
                mismatch = np.inf
                break
            injected = v * np.conj(self.y_red @ v + coupling)
            mismatch = float(np.max(np.abs(injected - s)))
            if mismatch <= tol:
                converged = True
                break
        v_all = np.concatenate([[complex(v0)], v])
        return AcSolution(
            v_mag=np.abs(v_all),
            v_ang=np.angle(v_all),
            converged=converged,
            iterations=iterations,
            max_mismatch=mismatch,
        )


def solve_acpf(
    net: FeederNetwork,
    p,
    q,
    v0: Optional[float] = None,
    tol: float = AC_TOLERANCE,
    max_iter: int = AC_MAX_ITER,
) -> AcSolution:
    """
    Full AC power flow by the implicit Z-bus fixed point
    V <- Y_red^{-1} (conj(S / V) - Y_slack v0), from a flat start.

    Args:
        p, q: Net real and reactive injections of buses 1..N (p.u., loads negative).
        v0: Slack voltage; defaults to `net.v0`.

    Returns:
        AcSolution. A run that exhausts `max_iter` comes back with converged=False.
    """
    zbus = _ZBus(net)
    s = _check_len("p", p, net.n) + 1j * _check_len("q", q, net.n)
    return zbus.solve(s, net.v0 if v0 is None else v0, tol, max_iter)


class BasePlant(ABC):
    """Maps bus injections to measured voltage magnitudes of buses 1..N."""

    name = ""

    def __init__(self, net: FeederNetwork, gm: GraphMatrices):
        self.net = net
        self.gm = gm
        self.v0 = net.v0

    @abstractmethod
    def measure(self, p: np.ndarray, qc: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Voltages under load (p, qc) and VAR injection q."""


class LinearPlant(BasePlant):
    name = "linear"

    def measure(self, p, qc, q):
        return solve_lindistflow(self.gm, p, q, self.v0, qc=qc)


class AcPlant(BasePlant):
    name = "ac"

    def __init__(self, net, gm, tol: float = 1e-10, max_iter: int = AC_MAX_ITER):
        super().__init__(net, gm)
        self.tol = tol
        self.max_iter = max_iter
        self._zbus = _ZBus(net)
        self.last_solution: Optional[AcSolution] = None

    def measure(self, p, qc, q):
        p = _check_len("p", p, self.net.n)
        s = p + 1j * (_check_len("q", q, self.net.n) - _check_len("qc", qc, self.net.n))
        sol = self._zbus.solve(s, self.v0, self.tol, self.max_iter)
        self.last_solution = sol
        if not sol.converged:
            logger.bind(voltvar=True).warning(
                f"AC power flow diverged after {sol.iterations} iterations "
                f"(mismatch {sol.max_mismatch:.3E})."
            )
            raise DivergenceError("AC power flow did not converge.")
        return sol.v_mag[1:]


def make_plant(kind: str, net: FeederNetwork, gm: GraphMatrices, **kwargs) -> BasePlant:
    kind = str(kind).lower()
    if kind == "linear":
        return LinearPlant(net, gm)
    elif kind == "ac":
        return AcPlant(net, gm, **kwargs)
    else:
        raise ConfigurationError(f"Unsupported plant {kind}.")
