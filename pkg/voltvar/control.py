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
Local gradient-projection VAR control.

Every bus j runs

    q_j(t+1) = (1 - a) q_j(t) + a * P_j[(1 - d_j c_j) q_j(t) - d_j (V_j(t) - mu_j)]

with its own measured voltage only. Droop, scaled and delayed control are choices of
(d, a); see `make_config`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Union

import numpy as np
from loguru import logger

from .decorators import measure_time
from .exceptions import ConfigurationError, ContractViolation, DivergenceError
from .helper import History, two_cluster_split
from .netmodel import FeederNetwork, GraphMatrices
from .pflow import BasePlant, make_plant

STATIC_TOLERANCE = 1e-8
FEASIBILITY_SLACK = 1e-12
OSCILLATION_WINDOW = 20
OSCILLATION_SPREAD = 1e-6
OSCILLATION_SEPARATION = 1e-4
DELAYED_ALPHA = 0.3


class Scheme(str, Enum):
    GENERIC = "generic"
    DROOP = "droop"
    SCALED = "scaled"
    DELAYED = "delayed"


class StepRule(str, Enum):
    INVERSE_PENALTY = "inverse_penalty"  # D = C^-1
    HESSIAN_DIAGONAL = "hessian_diagonal"  # D = eps [diag(X + C)]^-1
    FIXED = "fixed"


@dataclass(frozen=True)
class ConstantAlpha:
    """Relaxation schedule a(t) = value for every t."""

    value: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.value <= 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1], got {self.value}.")

    def __call__(self, t: int) -> float:
        return self.value

    @property
    def supremum(self) -> float:
        return self.value


def _vector(name: str, value, n: int) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 2:
        a = np.diag(a).copy()
    if a.ndim == 0:
        a = np.full(n, float(a))
    if a.shape != (n,):
        raise ContractViolation(f"{name} must have {n} entries, got shape {a.shape}.")
    return a


@dataclass(frozen=True)
class ControlConfig:
    """
    Resolved controller: per-bus penalty `c`, stepsize `d`, target `mu`, VAR box
    and relaxation schedule. `C` and `D` expose the diagonal matrices.
    """

    scheme: Scheme
    c: np.ndarray
    d: np.ndarray
    mu: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    x_diag: np.ndarray
    alpha: ConstantAlpha = field(default_factory=ConstantAlpha)
    rule: StepRule = StepRule.FIXED
    epsilon: Optional[float] = None

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def C(self) -> np.ndarray:
        return np.diag(self.c)

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.d)

    @property
    def keep(self) -> np.ndarray:
        """Weight of q(t) inside the projection, 1 - d c."""
        if self.rule is StepRule.INVERSE_PENALTY:
            return np.zeros(self.n)
        return 1.0 - self.d * self.c

    def retune(self, **changes) -> "ControlConfig":
        """
        New config with some of c, mu, q_min, q_max, epsilon, alpha replaced.

        The stepsize is re-derived from the rule, so a droop config keeps D = C^-1.
        """
        unknown = set(changes) - {"c", "mu", "q_min", "q_max", "epsilon", "alpha", "d"}
        if unknown:
            raise ConfigurationError(f"Cannot retune {sorted(unknown)}.")
        n = self.n
        c = _vector("c", changes.get("c", self.c), n)
        epsilon = changes.get("epsilon", self.epsilon)
        alpha = changes.get("alpha", self.alpha)
        if not isinstance(alpha, ConstantAlpha):
            alpha = ConstantAlpha(float(alpha))
        d = changes.get("d")
        rule = self.rule
        if d is not None:
            rule = StepRule.FIXED
        elif rule is StepRule.INVERSE_PENALTY:
            d = _inverse_penalty(c)
        elif rule is StepRule.HESSIAN_DIAGONAL:
            d = _hessian_diagonal(epsilon, self.x_diag, c)
        else:
            d = self.d
        cfg = replace(
            self,
            c=c,
            d=_vector("d", d, n),
            mu=_vector("mu", changes.get("mu", self.mu), n),
            q_min=_vector("q_min", changes.get("q_min", self.q_min), n),
            q_max=_vector("q_max", changes.get("q_max", self.q_max), n),
            alpha=alpha,
            rule=rule,
            epsilon=epsilon,
        )
        cfg.validate()
        return cfg

    def validate(self):
        if np.any(self.c < 0):
            raise ConfigurationError("Penalty c must be nonnegative.")
        if not np.all(self.d > 0) or not np.all(np.isfinite(self.d)):
            raise ConfigurationError("Stepsize D must be positive and finite.")
        if np.any(self.q_min > self.q_max):
            raise ConfigurationError("q_min exceeds q_max on some bus.")
        if np.any(self.mu <= 0):
            raise ConfigurationError("mu must be positive.")
        if self.scheme in (Scheme.DROOP, Scheme.SCALED) and self.alpha.value != 1.0:
            raise ConfigurationError(f"{self.scheme.value} control runs with alpha = 1.")
        if self.scheme is Scheme.DELAYED and self.alpha.value >= 1.0:
            raise ConfigurationError(
                "delayed control needs alpha < 1; use droop or scaled for alpha = 1."
            )


def _inverse_penalty(c: np.ndarray) -> np.ndarray:
    if np.any(c <= 0):
        raise ConfigurationError("D = C^-1 needs c_j > 0 on every bus.")
    return 1.0 / c


def _hessian_diagonal(epsilon, x_diag: np.ndarray, c: np.ndarray) -> np.ndarray:
    if epsilon is None or not epsilon > 0:
        raise ConfigurationError(f"Scaled stepsize needs epsilon > 0, got {epsilon}.")
    return epsilon / (x_diag + c)


def make_config(
    scheme: Union[Scheme, str],
    gm: GraphMatrices,
    c=None,
    mu=None,
    q_min=None,
    q_max=None,
    epsilon: Optional[float] = None,
    alpha: Optional[float] = None,
    d=None,
    net: Optional[FeederNetwork] = None,
) -> ControlConfig:
    """
    Resolves a scheme into a concrete ControlConfig.

    Args:
        scheme: "droop" (D = C^-1, alpha 1), "scaled" (D = eps [diag(X+C)]^-1, alpha 1),
            "delayed" (droop or scaled stepsize with alpha < 1, default 0.3; scaled when
            `epsilon` is given) or "generic" (explicit `d`, or `epsilon` for the scaled rule).
        c, mu, q_min, q_max: Scalars or per-bus vectors; missing values come from `net`.
    """
    try:
        scheme = Scheme(scheme)
    except ValueError:
        raise ConfigurationError(f"Unsupported scheme {scheme}.") from None
    if not gm.has_sensitivities:
        raise ContractViolation("make_config needs GraphMatrices with X computed.")
    n = gm.n

    def pick(value, attr, default):
        if value is not None:
            return _vector(attr, value, n)
        if net is not None:
            return getattr(net, attr)
        return np.full(n, default)

    c = pick(c, "c", 0.0)
    q_min = pick(q_min, "q_min", -np.inf)
    q_max = pick(q_max, "q_max", np.inf)
    mu = pick(mu, "mu", 1.0)
    x_diag = np.diag(gm.X).copy()

    if scheme is Scheme.DROOP:
        rule, alpha = StepRule.INVERSE_PENALTY, 1.0
    elif scheme is Scheme.SCALED:
        rule, alpha = StepRule.HESSIAN_DIAGONAL, 1.0
        epsilon = 0.3 if epsilon is None else epsilon
    elif d is not None:
        rule = StepRule.FIXED
    elif epsilon is not None:
        rule = StepRule.HESSIAN_DIAGONAL
    elif scheme is Scheme.DELAYED:
        rule = StepRule.INVERSE_PENALTY
    else:
        raise ConfigurationError("Generic control needs an explicit d or an epsilon.")

    if alpha is None:
        alpha = DELAYED_ALPHA if scheme is Scheme.DELAYED else 1.0

    if rule is StepRule.INVERSE_PENALTY:
        if np.any(c <= 0):
            raise ConfigurationError(
                f"{scheme.value} control with D = C^-1 needs c_j > 0 on every bus."
            )
        d = _inverse_penalty(c)
    elif rule is StepRule.HESSIAN_DIAGONAL:
        d = _hessian_diagonal(epsilon, x_diag, c)

    cfg = ControlConfig(
        scheme=scheme,
        c=c,
        d=_vector("d", d, n),
        mu=mu,
        q_min=q_min,
        q_max=q_max,
        x_diag=x_diag,
        alpha=ConstantAlpha(float(alpha)),
        rule=rule,
        epsilon=epsilon,
    )
    cfg.validate()
    return cfg


@dataclass(frozen=True)
class ControlState:
    t: int
    q: np.ndarray
    v: Optional[np.ndarray] = None


@dataclass(frozen=True)
class TraceRecord:
    t: int
    mismatch_norm: float
    q: np.ndarray
    v: np.ndarray
    limits_hit: int
    minute: Optional[int] = None


def gradient(v, q, c, mu) -> np.ndarray:
    """Local gradient V - mu + C q; entry j only reads bus j."""
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    q = _vector("q", q, n)
    return v - _vector("mu", mu, n) + _vector("c", c, n) * q


def project(x, q_min, q_max) -> np.ndarray:
    return np.minimum(np.maximum(np.asarray(x, dtype=float), q_min), q_max)


def is_feasible(q: np.ndarray, q_min: np.ndarray, q_max: np.ndarray) -> bool:
    return bool(
        np.all(q >= q_min - FEASIBILITY_SLACK) and np.all(q <= q_max + FEASIBILITY_SLACK)
    )


def step(state: ControlState, cfg: ControlConfig, v_measured) -> ControlState:
    q = _vector("q", state.q, cfg.n)
    v = _vector("v", v_measured, cfg.n)
    if not is_feasible(q, cfg.q_min, cfg.q_max):
        raise ContractViolation(f"Incoming setpoint at t={state.t} violates the VAR box.")
    if cfg.rule is StepRule.INVERSE_PENALTY:
        target = -cfg.d * (v - cfg.mu)
    else:
        target = cfg.keep * q - cfg.d * (v - cfg.mu)
    update = project(target, cfg.q_min, cfg.q_max)
    a = cfg.alpha(state.t)
    if a != 1.0:
        update = (1.0 - a) * q + a * update
    return ControlState(t=state.t + 1, q=update, v=v)


def mismatch(v: np.ndarray, mu: np.ndarray) -> float:
    return float(np.linalg.norm(v - mu))


def limits_hit(q: np.ndarray, q_min: np.ndarray, q_max: np.ndarray) -> int:
    at_bound = np.isclose(q, q_min, rtol=0, atol=FEASIBILITY_SLACK) | np.isclose(
        q, q_max, rtol=0, atol=FEASIBILITY_SLACK
    )
    return int(np.count_nonzero(at_bound))


def detect_oscillation(
    samples,
    window: int = OSCILLATION_WINDOW,
    spread: float = OSCILLATION_SPREAD,
    separation: float = OSCILLATION_SEPARATION,
) -> bool:
    """
    True when the last `window` samples sit on two accumulation points: two clusters
    each narrower than `spread`, at least `separation` apart.
    """
    values = np.asarray(samples, dtype=float)[-window:]
    if values.size < window:
        return False
    split = two_cluster_split(values)
    if split is None:
        return False
    low, high, gap = split
    return bool(
        gap > separation
        and np.ptp(low) < spread
        and np.ptp(high) < spread
    )


@dataclass
class LoopResult:
    state: ControlState
    trace: List[TraceRecord]
    converged: bool
    oscillating: bool = False

    @property
    def iterations(self) -> int:
        return self.state.t

    @property
    def final_mismatch(self) -> float:
        return self.trace[-1].mismatch_norm


@measure_time()
def run_closed_loop(
    net: FeederNetwork,
    gm: GraphMatrices,
    cfg: ControlConfig,
    plant: Union[str, BasePlant] = "linear",
    max_iter: int = 200,
    tol: float = STATIC_TOLERANCE,
    q0=None,
    p=None,
    qc=None,
) -> LoopResult:
    """
    Alternates plant solve, voltage measurement and `step` until
    ||q(t+1) - q(t)||_inf <= tol or `max_iter` steps.

    The trace holds one record per iterate, t = 0 included, each with the voltages
    measured at that iterate. A non-converged run is flagged `oscillating` when the
    trailing mismatch samples settle on two points.

    Raises:
        DivergenceError: The AC plant failed; the partial trace is attached.
    """
    log = logger.bind(voltvar=True)
    if isinstance(plant, str):
        plant = make_plant(plant, net, gm)
    p = net.p if p is None else _vector("p", p, cfg.n)
    qc = net.qc if qc is None else _vector("qc", qc, cfg.n)
    q = project(np.zeros(cfg.n) if q0 is None else _vector("q0", q0, cfg.n), cfg.q_min, cfg.q_max)

    trace: List[TraceRecord] = []
    history = History(OSCILLATION_WINDOW)

    def measure(q_now: np.ndarray) -> np.ndarray:
        try:
            return plant.measure(p, qc, q_now)
        except DivergenceError as e:
            e.trace = list(trace)
            raise

    def record(t: int, q_now: np.ndarray, v_now: np.ndarray):
        err = mismatch(v_now, cfg.mu)
        trace.append(
            TraceRecord(
                t=t,
                mismatch_norm=err,
                q=q_now,
                v=v_now,
                limits_hit=limits_hit(q_now, cfg.q_min, cfg.q_max),
            )
        )
        history.put(err)

    log.info(
        f"Closed loop: scheme={cfg.scheme.value}, plant={plant.name}, n={cfg.n}, "
        f"alpha={cfg.alpha.value}, max_iter={max_iter}."
    )
    state = ControlState(t=0, q=q, v=measure(q))
    record(0, state.q, state.v)
    converged = False
    for _ in range(max_iter):
        nxt = step(state, cfg, state.v)
        dq = float(np.max(np.abs(nxt.q - state.q)))
        state = ControlState(t=nxt.t, q=nxt.q, v=measure(nxt.q))
        record(state.t, state.q, state.v)
        if dq <= tol:
            converged = True
            break

    oscillating = not converged and detect_oscillation(history.values())
    result = LoopResult(state=state, trace=trace, converged=converged, oscillating=oscillating)
    if converged:
        log.info(f"Converged at t={state.t}, mismatch {result.final_mismatch:.6f}.")
    elif oscillating:
        low, high, _ = two_cluster_split(history.values())
        log.warning(
            f"No convergence in {max_iter} steps: mismatch oscillates between "
            f"{low.mean():.6f} and {high.mean():.6f}."
        )
    else:
        log.warning(f"No convergence in {max_iter} steps (mismatch {result.final_mismatch:.6f}).")
    return result
