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
Feeder graph model and the graph-derived LinDistFlow matrices.

All quantities held by `FeederNetwork` are per unit. Files carry physical units
(kW, kvar, Ohm) and are converted by `load_network`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import msgspec
import networkx as nx
import numpy as np
import scipy.linalg as sla

from .exceptions import ContractViolation, ParameterError, TopologyError
from .pack import read_json


def z_base(v_base_kv: float, s_base_mva: float) -> float:
    """Base impedance in ohms: Z_base = V²/S."""
    return v_base_kv**2 / s_base_mva


def ohm_to_pu(z_ohm: float, v_base_kv: float, s_base_mva: float) -> float:
    return z_ohm / z_base(v_base_kv, s_base_mva)


def power_to_pu(kw_or_kvar: float, s_base_mva: float) -> float:
    return kw_or_kvar / 1000.0 / s_base_mva


@dataclass(frozen=True)
class Bus:
    id: int
    p: float = 0.0
    qc: float = 0.0
    q_min: float = 0.0
    q_max: float = 0.0
    c: float = 0.0
    mu: float = 1.0


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float


@dataclass(frozen=True)
class FeederNetwork:
    """
    Buses (index 0 is the slack / PCC), lines and the slack voltage, all in p.u.

    `s_base_mva` and `v_base_kv` are kept so that results can be mapped back to
    physical units.
    """

    buses: Tuple[Bus, ...]
    lines: Tuple[Line, ...]
    v0: float = 1.0
    s_base_mva: float = 1.0
    v_base_kv: float = 12.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))

    @property
    def n(self) -> int:
        return len(self.buses) - 1

    @property
    def is_meshed(self) -> bool:
        return len(self.lines) > self.n

    def _column(self, attr: str) -> np.ndarray:
        return np.array([getattr(b, attr) for b in self.buses[1:]], dtype=float)

    @property
    def p(self) -> np.ndarray:
        return self._column("p")

    @property
    def qc(self) -> np.ndarray:
        return self._column("qc")

    @property
    def q_min(self) -> np.ndarray:
        return self._column("q_min")

    @property
    def q_max(self) -> np.ndarray:
        return self._column("q_max")

    @property
    def c(self) -> np.ndarray:
        return self._column("c")

    @property
    def mu(self) -> np.ndarray:
        return self._column("mu")

    def graph(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(range(len(self.buses)))
        for k, line in enumerate(self.lines):
            g.add_edge(line.from_bus, line.to_bus, key=k, r=line.r, x=line.x)
        return g

    def validate(self):
        """Raises ParameterError / TopologyError when an invariant does not hold."""
        if self.n < 1:
            raise TopologyError("A feeder needs the slack bus and at least one more bus.")
        ids = [b.id for b in self.buses]
        if ids != list(range(len(self.buses))):
            raise ParameterError(f"Bus ids must be 0..{self.n} in order, got {ids}.")
        if self.v0 <= 0:
            raise ParameterError(f"v0 must be positive, got {self.v0}.")
        for b in self.buses[1:]:
            if b.q_min > b.q_max:
                raise ParameterError(f"Bus {b.id}: q_min {b.q_min} > q_max {b.q_max}.")
            if b.c < 0:
                raise ParameterError(f"Bus {b.id}: penalty c must be >= 0, got {b.c}.")
            if b.mu <= 0:
                raise ParameterError(f"Bus {b.id}: mu must be positive, got {b.mu}.")
        for k, line in enumerate(self.lines):
            ends = (line.from_bus, line.to_bus)
            if line.from_bus == line.to_bus:
                raise ParameterError(f"Line {k} connects bus {line.from_bus} to itself.")
            if not all(0 <= e <= self.n for e in ends):
                raise ParameterError(f"Line {k} references unknown bus in {ends}.")
            if line.r < 0:
                raise ParameterError(f"Line {k} {ends}: resistance must be >= 0.")
            if not line.x > 0:
                raise ParameterError(f"Line {k} {ends}: reactance must be > 0, got {line.x}.")
        if len(self.lines) < self.n or not nx.is_connected(self.graph()):
            raise TopologyError("Feeder graph is not connected.")


class BusRecord(msgspec.Struct, forbid_unknown_fields=True):
    id: int
    p_kw: float = 0.0
    q_load_kvar: float = 0.0
    q_min_kvar: float = 0.0
    q_max_kvar: float = 0.0
    c: float = 0.0
    mu: float = 1.0


class LineRecord(msgspec.Struct, forbid_unknown_fields=True):
    from_: int = msgspec.field(name="from")
    to: int = msgspec.field()
    r_ohm: float = msgspec.field()
    x_ohm: float = msgspec.field()


class NetworkFile(msgspec.Struct, forbid_unknown_fields=True):
    buses: List[BusRecord]
    lines: List[LineRecord]
    s_base_mva: float = 1.0
    v_base_kv: float = 12.0
    v0_pu: float = 1.0
    name: str = ""


def network_from_file(doc: NetworkFile) -> FeederNetwork:
    """Converts a decoded network document to per unit and validates it."""
    if doc.s_base_mva <= 0 or doc.v_base_kv <= 0:
        raise ParameterError("s_base_mva and v_base_kv must be positive.")
    s, kv = doc.s_base_mva, doc.v_base_kv
    buses = [
        Bus(
            id=b.id,
            p=power_to_pu(b.p_kw, s),
            qc=power_to_pu(b.q_load_kvar, s),
            q_min=power_to_pu(b.q_min_kvar, s),
            q_max=power_to_pu(b.q_max_kvar, s),
            c=b.c,
            mu=b.mu,
        )
        for b in sorted(doc.buses, key=lambda b: b.id)
    ]
    lines = [
        Line(l.from_, l.to, ohm_to_pu(l.r_ohm, kv, s), ohm_to_pu(l.x_ohm, kv, s))
        for l in doc.lines
    ]
    net = FeederNetwork(
        buses=buses, lines=lines, v0=doc.v0_pu, s_base_mva=s, v_base_kv=kv, name=doc.name
    )
    net.validate()
    return net


def load_network(path: Union[str, Path]) -> FeederNetwork:
    return network_from_file(read_json(path, NetworkFile))


def _frozen(a: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if a is not None:
        a = np.array(a, dtype=float)
        a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GraphMatrices:
    """
    Incidence split and LinDistFlow sensitivities of one feeder.

    `slack` is the per-unit-v0 constant term of the linear model: V = Rp + Xq + v0*slack.
    For trees it equals -M^{-T} m0, the all-ones vector.
    """

    M0: np.ndarray
    m0: np.ndarray
    M: np.ndarray
    dr: np.ndarray
    dx: np.ndarray
    is_tree: bool
    R: Optional[np.ndarray] = None
    X: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    slack: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("M0", "m0", "M", "dr", "dx", "R", "X", "B", "slack"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def Dr(self) -> np.ndarray:
        return np.diag(self.dr)

    @property
    def Dx(self) -> np.ndarray:
        return np.diag(self.dx)

    @property
    def has_sensitivities(self) -> bool:
        return self.X is not None


def _orientation(net: FeederNetwork) -> List[Tuple[int, int]]:
    """(head, tail) per line; head gets +1 in the incidence matrix."""
    if net.is_meshed:
        return [(l.from_bus, l.to_bus) for l in net.lines]
    depth = nx.single_source_shortest_path_length(net.graph(), 0)
    pairs = []
    for l in net.lines:
        if depth[l.from_bus] <= depth[l.to_bus]:
            pairs.append((l.from_bus, l.to_bus))
        else:
            pairs.append((l.to_bus, l.from_bus))
    return pairs


def build_incidence(net: FeederNetwork) -> GraphMatrices:
    """
    Builds the (N+1)xL incidence matrix and the line parameter diagonals.

    Radial lines are oriented away from the feeder head; meshed lines keep the
    file orientation (from -> +1, to -> -1). B does not depend on the orientation.
    """
    net.validate()
    n_bus, n_line = len(net.buses), len(net.lines)
    M0 = np.zeros((n_bus, n_line))
    for k, (head, tail) in enumerate(_orientation(net)):
        M0[head, k] = 1.0
        M0[tail, k] = -1.0
    return GraphMatrices(
        M0=M0,
        m0=M0[0],
        M=M0[1:],
        dr=np.array([l.r for l in net.lines]),
        dx=np.array([l.x for l in net.lines]),
        is_tree=not net.is_meshed,
    )


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2.0


def weighted_laplacian(M: np.ndarray, w: np.ndarray) -> np.ndarray:
    """M diag(w) M^T, the slack-reduced Laplacian for line weights `w`."""
    return _symmetrize((M * w) @ M.T)


def compute_sensitivities(gm: GraphMatrices, method: str = "auto") -> GraphMatrices:
    """
    Fills R, X, B and the slack term.

    Args:
        method: "tree" uses X = M^{-T} Dx M^{-1} (radial only), "laplacian" inverts the
            reduced Laplacians by Cholesky, "auto" picks "tree" for radial feeders.
    """
    if method == "auto":
        method = "tree" if gm.is_tree else "laplacian"
    if method not in ("tree", "laplacian"):
        raise ValueError(f"Unsupported sensitivity method {method}.")
    if method == "tree" and not gm.is_tree:
        raise ContractViolation("The tree formula needs a square incidence matrix M.")

    n = gm.n
    eye = np.eye(n)
    B = weighted_laplacian(gm.M, 1.0 / gm.dx)
    try:
        b_factor = sla.cho_factor(B)
    except sla.LinAlgError as e:
        raise TopologyError("Reduced Laplacian is singular; feeder is disconnected.") from e

    if method == "tree":
        lu = sla.lu_factor(gm.M)
        m_inv = sla.lu_solve(lu, eye)
        X = m_inv.T @ (gm.dx[:, None] * m_inv)
        R = m_inv.T @ (gm.dr[:, None] * m_inv)
        slack = -sla.lu_solve(lu, gm.m0, trans=1)
    else:
        if np.any(gm.dr <= 0):
            raise ParameterError("Meshed feeders need r > 0 on every line.")
        X = sla.cho_solve(b_factor, eye)
        R = sla.cho_solve(sla.cho_factor(weighted_laplacian(gm.M, 1.0 / gm.dr)), eye)
        slack = sla.cho_solve(b_factor, -(gm.M @ (gm.m0 / gm.dx)))

    return replace(gm, R=_symmetrize(R), X=_symmetrize(X), B=B, slack=slack)


def graph_matrices(net: FeederNetwork, method: str = "auto") -> GraphMatrices:
    return compute_sensitivities(build_incidence(net), method=method)


def _check_len(name: str, v: np.ndarray, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ContractViolation(f"{name} must have shape ({n},), got {v.shape}.")
    return v


def baseline_voltage(gm: GraphMatrices, p, qc, v0: float = 1.0) -> np.ndarray:
    """V̄ = R p - X qc + v0 * slack: the profile without any VAR support."""
    if not gm.has_sensitivities:
        raise ContractViolation("compute_sensitivities must run before baseline_voltage.")
    p = _check_len("p", p, gm.n)
    qc = _check_len("qc", qc, gm.n)
    return gm.R @ p - gm.X @ qc + v0 * gm.slack


def with_loads(net: FeederNetwork, p: Sequence[float], qc: Sequence[float]) -> FeederNetwork:
    """Copy of `net` with bus injections replaced (per unit, buses 1..N)."""
    buses = [net.buses[0]] + [
        replace(b, p=float(pj), qc=float(qj)) for b, pj, qj in zip(net.buses[1:], p, qc)
    ]
    return replace(net, buses=buses)
