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

from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger

from .control import (
    ControlConfig,
    ControlState,
    LoopResult,
    Scheme,
    StepRule,
    TraceRecord,
    limits_hit,
    mismatch,
    project,
    run_closed_loop,
    step,
)
from .decorators import measure_time
from .exceptions import ConfigurationError, DivergenceError, InputError
from .manager import ScenarioManager
from .netmodel import FeederNetwork, GraphMatrices, graph_matrices
from .pack import write_frame_csv
from .pflow import BasePlant, make_plant
from .stability import analyze

PROFILE_COLUMNS = ["minute", "load_kw_per_home", "pv_kw_per_home"]
MINUTES_PER_DAY = 1440
EVENING = (18 * 60, 22 * 60)
HEADROOM_FLOOR = 1e-9

_log = logger.bind(voltvar=True)


@dataclass(frozen=True)
class DailyProfile:
    minutes: np.ndarray
    load_kw: np.ndarray
    pv_kw: np.ndarray

    def __post_init__(self):
        minutes = np.asarray(self.minutes, dtype=int)
        load = np.asarray(self.load_kw, dtype=float)
        pv = np.asarray(self.pv_kw, dtype=float)
        if not (minutes.shape == load.shape == pv.shape) or minutes.ndim != 1:
            raise InputError("Profile columns must have equal length.")
        if minutes.size == 0:
            raise InputError("Profile is empty.")
        if np.any(np.diff(minutes) != 1):
            raise InputError("Profile minutes must increase in steps of exactly 1.")
        if np.any(pv < 0):
            raise InputError("pv_kw_per_home must be nonnegative.")
        if not np.all(np.isfinite(load)) or not np.all(np.isfinite(pv)):
            raise InputError("Profile holds non-finite values.")
        object.__setattr__(self, "minutes", minutes)
        object.__setattr__(self, "load_kw", load)
        object.__setattr__(self, "pv_kw", pv)

    def __len__(self):
        return self.minutes.shape[0]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "minute": self.minutes,
                "load_kw_per_home": self.load_kw,
                "pv_kw_per_home": self.pv_kw,
            }
        )

    @classmethod
    def zeros(cls, n_minutes: int = MINUTES_PER_DAY) -> "DailyProfile":
        return cls(np.arange(n_minutes), np.zeros(n_minutes), np.zeros(n_minutes))


def synthetic_profile(
    pv_peak_kw: float = 3.0,
    cloud_dips=((785, 800), (940, 950)),
    cloud_factor: float = 0.35,
    spike=(1050, 1065),
    spike_kw: float = 1.5,
) -> DailyProfile:
    """
    Synthetic summer day for one home at minute resolution.

    Load has a 2 kW base, a small morning bump and an evening peak near 19:30 about
    2.5 times the base. PV follows a sine arch between 06:00 and 20:00 with its peak
    at 13:00. Two cloud dips cut PV to `cloud_factor` and an appliance start adds
    `spike_kw` late in the afternoon. Values are rounded to 4 decimals.
    """
    minutes = np.arange(MINUTES_PER_DAY)
    h = minutes / 60.0
    load = (
        2.0
        + 1.0 * np.exp(-(((h - 7.5) / 1.0) ** 2))
        + 3.0 * np.exp(-(((h - 19.5) / 1.6) ** 2))
        + 0.4 * np.exp(-(((h - 23.5) / 1.0) ** 2))
    )
    if spike is not None:
        load[spike[0] : spike[1]] += spike_kw
    arch = np.where((h > 6) & (h < 20), np.sin(np.pi * (h - 6) / 14), 0.0)
    pv = pv_peak_kw * np.maximum(arch, 0.0) ** 1.5
    for start, stop in cloud_dips or ():
        pv[start:stop] *= cloud_factor
    return DailyProfile(minutes, np.round(load, 4), np.round(pv, 4))


def load_profile(path: Union[str, Path]) -> DailyProfile:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InputError(f"{path}: {e}") from e
    missing = [c for c in PROFILE_COLUMNS if c not in frame.columns]
    if missing:
        raise InputError(f"{path}: missing column(s) {missing}.")
    try:
        frame = frame[PROFILE_COLUMNS].astype(float)
    except ValueError as e:
        raise InputError(f"{path}: {e}") from e
    return DailyProfile(
        frame["minute"].to_numpy().astype(int),
        frame["load_kw_per_home"].to_numpy(),
        frame["pv_kw_per_home"].to_numpy(),
    )


def save_profile(profile: DailyProfile, path: Union[str, Path]):
    frame = profile.to_frame()
    frame["load_kw_per_home"] = frame["load_kw_per_home"].map(lambda x: f"{x:.4f}")
    frame["pv_kw_per_home"] = frame["pv_kw_per_home"].map(lambda x: f"{x:.4f}")
    write_frame_csv(frame, path)


@dataclass(frozen=True)
class DynamicScenario:
    """
    A daily profile applied to every bus.

    Each bus hosts `homes_per_bus[j]` homes drawing `load_kw` (with reactive part
    `load_q_ratio * load_kw`) and generating `pv_kw` through an inverter rated
    `inverter_rating_factor * pv_peak_kw` kVA.
    """

    profile: DailyProfile
    homes_per_bus: np.ndarray
    s_base_mva: float = 1.0
    pv_peak_kw: float = 3.0
    inverter_rating_factor: float = 1.05
    control_period_s: float = 5.0
    profile_period_s: float = 60.0
    load_q_ratio: float = 0.5
    droop_window: float = 0.05

    def __post_init__(self):
        homes = np.asarray(self.homes_per_bus, dtype=float)
        object.__setattr__(self, "homes_per_bus", homes)
        if np.any(homes < 0):
            raise ConfigurationError("homes_per_bus must be nonnegative.")
        if self.control_period_s <= 0 or self.profile_period_s <= 0:
            raise ConfigurationError("Control and profile periods must be positive.")
        ratio = self.profile_period_s / self.control_period_s
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigurationError(
                f"control_period_s {self.control_period_s} does not divide "
                f"profile_period_s {self.profile_period_s}."
            )
        if self.s_base_mva <= 0:
            raise ConfigurationError("s_base_mva must be positive.")

    @classmethod
    def for_network(
        cls, net: FeederNetwork, profile: DailyProfile, homes: int = 18, **kwargs
    ) -> "DynamicScenario":
        return cls(
            profile=profile,
            homes_per_bus=np.full(net.n, homes),
            s_base_mva=net.s_base_mva,
            **kwargs,
        )

    @property
    def rating_kva(self) -> float:
        return self.inverter_rating_factor * self.pv_peak_kw

    @property
    def ticks_per_minute(self) -> int:
        return int(round(self.profile_period_s / self.control_period_s))

    def _to_pu(self, kw_per_home) -> np.ndarray:
        return self.homes_per_bus * kw_per_home / 1000.0 / self.s_base_mva

    def injections_at(self, minute: int):
        """(p, qc) per bus in p.u. for profile row `minute`."""
        load = self.profile.load_kw[minute]
        pv = self.profile.pv_kw[minute]
        return self._to_pu(pv - load), self._to_pu(self.load_q_ratio * load)


def var_limits_at(scen: DynamicScenario, minute: int):
    """Symmetric VAR box from the inverter headroom sqrt(S^2 - pv^2), in p.u."""
    pv = scen.profile.pv_kw[minute]
    headroom = np.sqrt(max(scen.rating_kva**2 - pv**2, 0.0))
    q_bar = scen._to_pu(headroom)
    return -q_bar, q_bar


def run_static(
    net: FeederNetwork,
    gm: GraphMatrices,
    cfg: ControlConfig,
    plant: Union[str, BasePlant] = "ac",
    max_iter: int = 200,
    tol: float = 1e-8,
) -> LoopResult:
    result = run_closed_loop(net, gm, cfg, plant=plant, max_iter=max_iter, tol=tol)
    _log.info(
        f"Static {cfg.scheme.value}: converged={result.converged}, "
        f"oscillating={result.oscillating}, iterations={result.iterations}."
    )
    return result


@dataclass
class DynamicResult:
    trace: List[TraceRecord]
    summary: pd.DataFrame
    v_min: np.ndarray
    v_max: np.ndarray
    scheme: str = "none"
    plant: str = "ac"

    def evening(self) -> pd.DataFrame:
        m = self.summary["minute"]
        return self.summary[(m >= EVENING[0]) & (m < EVENING[1])]

    def to_summary_dict(self) -> dict:
        under = self.summary[self.summary["v_min"] < 0.95]
        buses = np.flatnonzero(self.v_min < 0.95) + 1
        return {
            "scheme": self.scheme,
            "plant": self.plant,
            "minutes": int(len(self.summary)),
            "ticks": len(self.trace),
            "mean_mismatch": float(self.summary["mismatch_norm"].mean()),
            "evening_mean_mismatch": float(self.evening()["mismatch_norm"].mean()),
            "min_voltage": float(self.v_min.min()),
            "max_voltage": float(self.v_max.max()),
            "undervoltage_minutes": int(len(under)),
            "undervoltage_buses": buses.tolist(),
            "daily_min_voltage": {
                str(j + 1): float(v) for j, v in enumerate(self.v_min)
            },
            "daily_max_voltage": {
                str(j + 1): float(v) for j, v in enumerate(self.v_max)
            },
        }


def _minute_config(
    cfg: ControlConfig, scen: DynamicScenario, q_min: np.ndarray, q_max: np.ndarray
) -> ControlConfig:
    if cfg.rule is StepRule.INVERSE_PENALTY:
        # droop slope spans the voltage window over the instantaneous headroom
        c = scen.droop_window / np.maximum(q_max, HEADROOM_FLOOR)
        return cfg.retune(c=c, q_min=q_min, q_max=q_max)
    return cfg.retune(q_min=q_min, q_max=q_max)


@measure_time(level="INFO")
def run_dynamic(
    net: FeederNetwork,
    scen: DynamicScenario,
    cfg: Optional[ControlConfig] = None,
    plant: Union[str, BasePlant] = "ac",
    gm: Optional[GraphMatrices] = None,
) -> DynamicResult:
    """
    Replays the profile: per minute it refreshes loads and VAR limits, then runs
    `ticks_per_minute` control ticks of measure / record / step. `q` carries over
    across minutes, re-projected into the new limits.

    Passing `cfg=None` runs the no-VAR baseline with q = 0 throughout.

    Raises:
        DivergenceError: AC plant failure; the ticks recorded so far are attached.
    """
    gm = gm or graph_matrices(net)
    if isinstance(plant, str):
        plant = make_plant(plant, net, gm)
    n = net.n
    ticks = scen.ticks_per_minute
    mu = cfg.mu if cfg is not None else net.mu
    q = np.zeros(n)
    t = 0
    trace: List[TraceRecord] = []
    rows = []
    v_min = np.full(n, np.inf)
    v_max = np.full(n, -np.inf)
    _log.info(
        f"Dynamic run: scheme={cfg.scheme.value if cfg else 'none'}, plant={plant.name}, "
        f"{len(scen.profile)} minutes x {ticks} ticks."
    )

    for i, minute in enumerate(scen.profile.minutes):
        p, qc = scen.injections_at(i)
        q_min, q_max = var_limits_at(scen, i)
        minute_cfg = _minute_config(cfg, scen, q_min, q_max) if cfg is not None else None
        if minute_cfg is not None:
            q = project(q, minute_cfg.q_min, minute_cfg.q_max)
        errors = []
        v = None
        for _ in range(ticks):
            if v is None or minute_cfg is not None:
                try:
                    v = plant.measure(p, qc, q)
                except DivergenceError as e:
                    e.trace = list(trace)
                    raise
            err = mismatch(v, mu)
            errors.append(err)
            trace.append(
                TraceRecord(
                    t=t,
                    minute=int(minute),
                    mismatch_norm=err,
                    q=q,
                    v=v,
                    limits_hit=limits_hit(q, q_min, q_max),
                )
            )
            np.minimum(v_min, v, out=v_min)
            np.maximum(v_max, v, out=v_max)
            if minute_cfg is not None:
                q = step(ControlState(t=t, q=q), minute_cfg, v).q
            t += 1
        last = trace[-1]
        rows.append(
            {
                "minute": int(minute),
                "mismatch_norm": last.mismatch_norm,
                "mean_mismatch": float(np.mean(errors)),
                "limits_hit": last.limits_hit,
                "v_min": float(last.v.min()),
                "v_max": float(last.v.max()),
            }
        )

    result = DynamicResult(
        trace=trace,
        summary=pd.DataFrame(rows),
        v_min=v_min,
        v_max=v_max,
        scheme=cfg.scheme.value if cfg is not None else "none",
        plant=plant.name,
    )
    _log.info(
        f"Dynamic run finished: mean mismatch {result.summary['mismatch_norm'].mean():.5f}, "
        f"min voltage {v_min.min():.4f}."
    )
    return result


@dataclass(frozen=True)
class SweepPoint:
    parameter: str
    value: float
    converged: bool
    oscillating: bool
    iterations: int
    final_mismatch: float
    lambda_max_H: float
    stable: bool


def _sweep_one(net, gm, cfg, parameter, value, plant, max_iter, tol) -> SweepPoint:
    tuned = cfg.retune(**{parameter: value})
    report = analyze(tuned, gm)
    result = run_closed_loop(net, gm, tuned, plant=plant, max_iter=max_iter, tol=tol)
    return SweepPoint(
        parameter=parameter,
        value=float(value),
        converged=result.converged,
        oscillating=result.oscillating,
        iterations=result.iterations,
        final_mismatch=result.final_mismatch,
        lambda_max_H=report.lambda_max_H,
        stable=report.stable,
    )


def sweep(
    net: FeederNetwork,
    gm: GraphMatrices,
    cfg: ControlConfig,
    parameter: str,
    values: Sequence[float],
    plant: str = "linear",
    max_iter: int = 3000,
    tol: float = 1e-8,
    workers: int = 4,
) -> List[SweepPoint]:
    """
    Closed-loop runs over a range of `epsilon` (scaled stepsize) or `alpha`
    (relaxation) values, run concurrently. Results keep the order of `values`.
    """
    if parameter == "epsilon" and cfg.rule is not StepRule.HESSIAN_DIAGONAL:
        raise ConfigurationError("An epsilon sweep needs the scaled stepsize rule.")
    # alpha sweeps may include 1.0, which only the generic scheme accepts.
    if parameter == "alpha":
        cfg = replace(cfg, scheme=Scheme.GENERIC)
    if parameter not in ("epsilon", "alpha"):
        raise ConfigurationError(f"Unsupported sweep parameter {parameter}.")

    manager = ScenarioManager(max_workers=workers)
    for value in values:
        manager.submit(
            f"{parameter}={value}",
            _sweep_one,
            net,
            gm,
            cfg,
            parameter,
            value,
            plant,
            max_iter,
            tol,
        )
    return manager.run()
