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

import os
import platform
import sys
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path
from typing import Literal, Optional, Tuple, Union

import fire
import msgspec
import pandas as pd
from rich.console import Console

from .centralopt import degradation_report
from .control import make_config
from .exceptions import (
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_UNSTABLE,
    DivergenceError,
    InputError,
    VoltVarError,
)
from .log import enable_logging
from .netmodel import FeederNetwork, graph_matrices, load_network
from .pack import dumps, write_frame_csv, write_json, write_trace_csv
from .scenario import (
    DynamicScenario,
    load_profile,
    run_dynamic,
    run_static,
    save_profile,
    sweep,
    synthetic_profile,
)
from .stability import analyze, conditioning_report

_stderr = Console(stderr=True)

DEFAULT_PROFILE = "data/profile_synthetic.csv"


class RunManifest(msgspec.Struct, forbid_unknown_fields=True):
    network_path: str
    profile_path: Optional[str] = None
    scheme: Literal["droop", "scaled", "delayed", "generic", "none"] = "scaled"
    c: Optional[float] = None
    epsilon: Optional[float] = None
    alpha: Optional[float] = None
    plant: Literal["linear", "ac"] = "ac"
    output_dir: str = "."
    full: bool = False
    benchmark_variant: Literal["c", "zero"] = "c"
    max_iter: int = 200
    homes: int = 18

    def validate(self) -> Tuple[FeederNetwork, Optional[object]]:
        """Loads the referenced files; any parse failure raises InputError."""
        if self.max_iter < 1:
            raise InputError(f"max_iter must be >= 1, got {self.max_iter}.")
        net = load_network(self.network_path)
        profile = load_profile(self.profile_path) if self.profile_path else None
        return net, profile


def _manifest(**fields) -> RunManifest:
    fields = {k: v for k, v in fields.items() if v is not None}
    try:
        return msgspec.convert(fields, RunManifest)
    except msgspec.ValidationError as e:
        raise InputError(f"Invalid argument: {e}") from e


def _emit(obj):
    sys.stdout.write(dumps(obj).decode() + "\n")
    sys.stdout.flush()


@contextmanager
def _exit_codes():
    try:
        yield
    except VoltVarError as e:
        _stderr.print(f"[bold red]{type(e).__name__}[/bold red]: {e}", highlight=False)
        raise SystemExit(e.exit_code) from e


def _config(manifest: RunManifest, net: FeederNetwork, gm):
    if manifest.scheme == "none":
        return None
    alpha = manifest.alpha
    if alpha is None:
        alpha = 0.3 if manifest.scheme == "delayed" else 1.0
    return make_config(
        manifest.scheme,
        gm,
        c=manifest.c,
        epsilon=manifest.epsilon,
        alpha=alpha,
        net=net,
    )


class Cli:
    """Local volt/VAR control toolkit."""

    def __init__(self, log: Optional[str] = None):
        level = log or os.environ.get("VOLTVAR_LOG_LEVEL")
        if platform.system() == "Windows":
            os.environ["TZ"] = ""
        if level:
            enable_logging(str(level))

    @staticmethod
    def matrices(network: str, c: Optional[float] = None):
        """
        Prints dimensions and spectral data of X and B as JSON.

        Args:
            network: Network JSON file.
            c: Optional droop penalty; adds the droop stability margin to the report.
        """
        with _exit_codes():
            manifest = _manifest(network_path=network, c=c)
            net, _ = manifest.validate()
            gm = graph_matrices(net)
            report = {"name": net.name, "s_base_mva": net.s_base_mva}
            report.update(conditioning_report(gm, c=manifest.c))
            _emit(report)
        raise SystemExit(EXIT_OK)

    @staticmethod
    def stability_report(
        network: str,
        scheme: str = "scaled",
        c: Optional[float] = None,
        epsilon: Optional[float] = None,
        alpha: Optional[float] = None,
    ):
        """Certifies a controller; exits 0 when stable and 3 when not."""
        with _exit_codes():
            manifest = _manifest(
                network_path=network, scheme=scheme, c=c, epsilon=epsilon, alpha=alpha
            )
            if manifest.scheme == "none":
                raise InputError("stability_report needs a control scheme.")
            net, _ = manifest.validate()
            gm = graph_matrices(net)
            cfg = _config(manifest, net, gm)
            report = analyze(cfg, gm)
            _emit({**report.to_dict(), "epsilon": cfg.epsilon})
        raise SystemExit(EXIT_OK if report.stable else EXIT_UNSTABLE)

    @staticmethod
    def solve_centralized(
        network: str,
        c: Optional[float] = None,
        benchmark_variant: str = "c",
        output: Optional[str] = None,
    ):
        """
        Solves the weighted, unweighted and benchmark problems and prints q*, the
        objective and ||V - mu|| of each.

        Args:
            benchmark_variant: "c" keeps the configured penalty in the benchmark,
                "zero" uses C = 0. Both variants are always listed.
        """
        with _exit_codes():
            manifest = _manifest(
                network_path=network, c=c, benchmark_variant=benchmark_variant
            )
            net, _ = manifest.validate()
            gm = graph_matrices(net)
            report = degradation_report(net, gm, c=manifest.c)
            suffix = "" if manifest.benchmark_variant == "c" else "_c0"
            result = {
                "weighted": report["weighted"],
                "unweighted": report["unweighted"],
                "benchmark": report["benchmark" + suffix],
                "benchmark_variant": manifest.benchmark_variant,
                "variants": {k: v for k, v in report.items() if isinstance(v, dict)},
                "lambda_bar": report["lambda_bar"],
            }
            if output:
                write_json(output, result)
            _emit(result)
        raise SystemExit(EXIT_OK)

    @staticmethod
    def run_static(
        network: str,
        scheme: str = "scaled",
        c: Optional[float] = None,
        epsilon: Optional[float] = None,
        alpha: Optional[float] = None,
        plant: str = "ac",
        max_iter: int = 200,
        output_dir: str = ".",
        full: bool = False,
    ):
        """Static closed loop; writes static_<scheme>_<plant>.csv and prints a summary."""
        with _exit_codes():
            manifest = _manifest(
                network_path=network,
                scheme=scheme,
                c=c,
                epsilon=epsilon,
                alpha=alpha,
                plant=plant,
                max_iter=max_iter,
                output_dir=output_dir,
                full=full,
            )
            if manifest.scheme == "none":
                raise InputError("run_static needs a control scheme.")
            net, _ = manifest.validate()
            gm = graph_matrices(net)
            cfg = _config(manifest, net, gm)
            path = Path(manifest.output_dir) / f"static_{cfg.scheme.value}_{manifest.plant}.csv"
            try:
                result = run_static(net, gm, cfg, plant=manifest.plant, max_iter=manifest.max_iter)
            except DivergenceError as e:
                write_trace_csv(e.trace, path, full=manifest.full)
                raise
            write_trace_csv(result.trace, path, full=manifest.full)
            _emit(
                {
                    "scheme": cfg.scheme.value,
                    "plant": manifest.plant,
                    "converged": result.converged,
                    "oscillating": result.oscillating,
                    "iterations": result.iterations,
                    "final_mismatch": result.final_mismatch,
                    "q": result.state.q,
                    "trace": str(path),
                }
            )
        raise SystemExit(EXIT_OK if result.converged else EXIT_NOT_CONVERGED)

    @staticmethod
    def run_dynamic(
        network: str,
        profile: str = DEFAULT_PROFILE,
        scheme: str = "scaled",
        c: Optional[float] = None,
        epsilon: Optional[float] = None,
        alpha: Optional[float] = None,
        plant: str = "ac",
        homes: int = 18,
        output_dir: str = ".",
        full: bool = False,
    ):
        """
        Replays a daily profile. `--scheme none` is the no-VAR baseline.

        Writes dynamic_<scheme>_trace.csv (one row per control tick),
        dynamic_<scheme>_minutes.csv and dynamic_<scheme>_summary.json.
        """
        with _exit_codes():
            manifest = _manifest(
                network_path=network,
                profile_path=profile,
                scheme=scheme,
                c=c,
                epsilon=epsilon,
                alpha=alpha,
                plant=plant,
                homes=homes,
                output_dir=output_dir,
                full=full,
            )
            net, daily = manifest.validate()
            gm = graph_matrices(net)
            cfg = _config(manifest, net, gm)
            scen = DynamicScenario.for_network(net, daily, homes=manifest.homes)
            out = Path(manifest.output_dir)
            stem = f"dynamic_{manifest.scheme}"
            try:
                result = run_dynamic(net, scen, cfg, plant=manifest.plant, gm=gm)
            except DivergenceError as e:
                write_trace_csv(e.trace, out / f"{stem}_trace.csv", full=manifest.full)
                raise
            write_trace_csv(result.trace, out / f"{stem}_trace.csv", full=manifest.full)
            write_frame_csv(result.summary, out / f"{stem}_minutes.csv")
            summary = result.to_summary_dict()
            write_json(out / f"{stem}_summary.json", summary)
            _emit(summary)
        raise SystemExit(EXIT_OK)

    @staticmethod
    def make_profile(output: str = DEFAULT_PROFILE):
        """Writes the synthetic daily load/PV profile."""
        with _exit_codes():
            save_profile(synthetic_profile(), output)
            _emit({"profile": output, "minutes": 1440})
        raise SystemExit(EXIT_OK)

    @staticmethod
    def sweep(
        network: str,
        parameter: str = "epsilon",
        values: Union[str, tuple, list] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6),
        epsilon: Optional[float] = None,
        c: Optional[float] = None,
        plant: str = "linear",
        max_iter: int = 3000,
        workers: int = 4,
        output: Optional[str] = None,
    ):
        """
        Closed-loop runs over eps (scaled) or alpha (delayed, scaled stepsize with
        `epsilon`, default 0.3) values.
        """
        with _exit_codes():
            if isinstance(values, str):
                try:
                    values = [float(v) for v in values.split(",") if v.strip()]
                except ValueError as e:
                    raise InputError(f"Invalid sweep values: {e}") from e
            values = [float(v) for v in values]
            if parameter == "alpha":
                scheme = "delayed"
                epsilon = 0.3 if epsilon is None else epsilon
            elif parameter == "epsilon":
                scheme = "scaled"
            else:
                raise InputError(f"Unsupported sweep parameter {parameter}.")
            manifest = _manifest(
                network_path=network,
                scheme=scheme,
                c=c,
                epsilon=epsilon,
                plant=plant,
                max_iter=max_iter,
            )
            net, _ = manifest.validate()
            gm = graph_matrices(net)
            cfg = make_config(scheme, gm, c=manifest.c, epsilon=manifest.epsilon, net=net)
            points = sweep(
                net,
                gm,
                cfg,
                parameter,
                values,
                plant=manifest.plant,
                max_iter=manifest.max_iter,
                workers=workers,
            )
            if output:
                write_frame_csv(pd.DataFrame([asdict(p) for p in points]), output)
            _emit(points)
        raise SystemExit(EXIT_OK)


def main(argv=None) -> int:
    """Runs the CLI and returns the exit code (0 ok, 2 input, 3 unstable, 4 not converged)."""
    try:
        fire.Fire(Cli, command=argv)
    except SystemExit as e:
        if e.code is None:
            return EXIT_OK
        return e.code if isinstance(e.code, int) else 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
