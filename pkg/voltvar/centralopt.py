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

"""
Centralized box-constrained VAR problems under the linear model V = X q + V̄.

With v_tilde = mu - V̄ the voltage error is X q - v_tilde, and

    weighted:    1/2 ||X q - v_tilde||_B^2           + 1/2 q'C q
    unweighted:  1/2 ||X q - v_tilde||^2
    benchmark:   lambda_bar/2 ||X q - v_tilde||^2    + 1/2 q'C q

where B = X^-1 and lambda_bar is the mean eigenvalue of B. The unweighted problem
carries no VAR penalty; `c` is ignored for it. The weighted gradient
(X q - v_tilde) + C q is what the local controllers measure.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla
from loguru import logger

from .decorators import measure_time
from .exceptions import ConfigurationError, ContractViolation, NonConvergenceError
from .netmodel import FeederNetwork, GraphMatrices, baseline_voltage

FEASIBILITY_SLACK = 1e-12
# Hessians better conditioned than this are solved by plain projected gradient.
PLAIN_GRADIENT_MAX_CONDITION = 1e3


class Objective(str, Enum):
    UNWEIGHTED = "unweighted"
    WEIGHTED = "weighted"
    BENCHMARK = "benchmark"


@dataclass(frozen=True)
class QpProblem:
    objective: Objective
    X: np.ndarray
    v_tilde: np.ndarray
    c: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    lambda_bar: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        n = X.shape[0]
        object.__setattr__(self, "X", X)
        for name in ("v_tilde", "c", "q_min", "q_max"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            object.__setattr__(self, name, v)
        if np.any(self.q_min > self.q_max):
            raise ContractViolation("Empty box: q_min exceeds q_max.")
        if np.any(self.c < 0):
            raise ContractViolation("Penalty c must be nonnegative.")
        if self.objective is Objective.BENCHMARK and self.lambda_bar is None:
            B = sla.cho_solve(sla.cho_factor(X), np.eye(n))
            object.__setattr__(self, "lambda_bar", float(np.trace(B) / n))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def weight(self) -> float:
        return self.lambda_bar if self.objective is Objective.BENCHMARK else 1.0

    @property
    def penalty(self) -> np.ndarray:
        """Diagonal of the VAR penalty that enters the objective."""
        if self.objective is Objective.UNWEIGHTED:
            return np.zeros(self.n)
        return self.c

    def hessian(self) -> np.ndarray:
        if self.objective is Objective.WEIGHTED:
            H = self.X + np.diag(self.penalty)
        else:
            H = self.weight * (self.X.T @ self.X) + np.diag(self.penalty)
        return (H + H.T) / 2.0

    def gradient(self, q: np.ndarray) -> np.ndarray:
        err = self.X @ q - self.v_tilde
        if self.objective is Objective.WEIGHTED:
            return err + self.penalty * q
        return self.weight * (self.X.T @ err) + self.penalty * q

    def value(self, q: np.ndarray) -> float:
        err = self.X @ q - self.v_tilde
        penalty = 0.5 * float(q @ (self.penalty * q))
        if self.objective is Objective.WEIGHTED:
            weighted = err @ sla.cho_solve(sla.cho_factor(self.X), err)
            return 0.5 * float(weighted) + penalty
        return 0.5 * self.weight * float(err @ err) + penalty

    def voltage_mismatch(self, q: np.ndarray) -> float:
        """||V - mu|| under the linear model."""
        return float(np.linalg.norm(self.X @ q - self.v_tilde))

    def project(self, q: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(q, self.q_min), self.q_max)


def problem_from_network(
    net: FeederNetwork,
    gm: GraphMatrices,
    objective: Union[Objective, str] = Objective.WEIGHTED,
    c=None,
    mu=None,
    p=None,
    qc=None,
    q_min=None,
    q_max=None,
) -> QpProblem:
    """QpProblem for the feeder's loading; omitted arguments come from `net`."""
    p = net.p if p is None else p
    qc = net.qc if qc is None else qc
    mu = net.mu if mu is None else mu
    v_bar = baseline_voltage(gm, p, qc, net.v0)
    return QpProblem(
        objective=objective,
        X=gm.X,
        v_tilde=np.asarray(mu, dtype=float) - v_bar,
        c=net.c if c is None else c,
        q_min=net.q_min if q_min is None else q_min,
        q_max=net.q_max if q_max is None else q_max,
        lambda_bar=float(np.trace(gm.B) / gm.n),
    )


def kkt_residual(prob: QpProblem, q, step: float = 1.0) -> float:
    """||q - P[q - step * grad(q)]||_inf; zero exactly at the optimum."""
    q = np.asarray(q, dtype=float)
    if np.any(q < prob.q_min - FEASIBILITY_SLACK) or np.any(q > prob.q_max + FEASIBILITY_SLACK):
        raise ContractViolation("kkt_residual needs a feasible q.")
    return float(np.max(np.abs(q - prob.project(q - step * prob.gradient(q)))))


@measure_time()
def solve(
    prob: QpProblem,
    tol: float = 1e-10,
    max_iter: int = 500_000,
    q0=None,
    method: str = "auto",
) -> np.ndarray:
    """
    Projected gradient with step 1/lambda_max(Hessian), run until the fixed-point
    residual at that step is below `tol`.

    Args:
        method: "projected" (constant step), "accelerated" (Nesterov momentum with
            adaptive restart, same step and stopping rule) or "auto", which picks
            "projected" for well-conditioned Hessians.

    Raises:
        NonConvergenceError: `max_iter` exhausted; `residual` holds the last residual.
    """
    H = prob.hessian()
    eig = sla.eigvalsh(H)
    L = float(eig[-1])
    if method == "auto":
        cond = L / max(float(eig[0]), np.finfo(float).tiny)
        method = "projected" if cond <= PLAIN_GRADIENT_MAX_CONDITION else "accelerated"
    if method not in ("projected", "accelerated"):
        raise ConfigurationError(f"Unsupported QP method {method}.")
    s = 1.0 / L

    q = prob.project(np.zeros(prob.n) if q0 is None else np.asarray(q0, dtype=float))
    y = q.copy()
    t = 1.0
    residual = np.inf
    for k in range(1, max_iter + 1):
        if method == "projected":
            q_next = prob.project(q - s * prob.gradient(q))
            residual = float(np.max(np.abs(q_next - q)))
            q = q_next
            if residual <= tol:
                break
            continue

        q_next = prob.project(y - s * prob.gradient(y))
        if float((y - q_next) @ (q_next - q)) > 0.0:
            t, y = 1.0, q_next.copy()
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = q_next + ((t - 1.0) / t_next) * (q_next - q)
            t = t_next
        q = q_next
        residual = kkt_residual(prob, q, step=s)
        if residual <= tol:
            break
    else:
        raise NonConvergenceError(
            f"{prob.objective.value} QP did not reach tol {tol:g} in {max_iter} iterations.",
            residual=residual,
        )
    logger.bind(voltvar=True).debug(
        f"{prob.objective.value} QP ({method}) solved in {k} iterations, residual {residual:.3E}."
    )
    return q


def degradation_report(
    net: FeederNetwork, gm: GraphMatrices, c=None, tol: float = 1e-10
) -> dict:
    """
    Optimal ||V - mu|| of the weighted problem against the unweighted and benchmark
    problems, the benchmark both with the configured penalty and with C = 0.
    """
    base = problem_from_network(net, gm, Objective.WEIGHTED, c=c)
    variants = {
        "weighted": base,
        "unweighted": replace(base, objective=Objective.UNWEIGHTED),
        "benchmark": replace(base, objective=Objective.BENCHMARK),
        "benchmark_c0": replace(base, objective=Objective.BENCHMARK, c=np.zeros(base.n)),
    }
    report = {}
    for name, prob in variants.items():
        q = solve(prob, tol=tol)
        report[name] = {
            "objective": prob.value(q),
            "mismatch_norm": prob.voltage_mismatch(q),
            "q": q,
        }
    report["lambda_bar"] = base.lambda_bar
    return report
