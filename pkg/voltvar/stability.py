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
Eigenvalue certificates for the linearized closed loop.

With H = D^{1/2} (X + C) D^{1/2}, a constant-alpha loop contracts in the
D^{-1/2}-scaled norm when alpha * lambda_max(H) < 2.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .control import ControlConfig, Scheme
from .exceptions import ConfigurationError, ContractViolation
from .netmodel import GraphMatrices

SYMMETRY_TOLERANCE = 1e-9
MARGINAL_BAND = 1e-9


def _diag_vector(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.diag(a).copy() if a.ndim == 2 else np.atleast_1d(a)


def h_matrix(D, X, C) -> np.ndarray:
    d = _diag_vector(D)
    c = _diag_vector(C)
    X = np.asarray(X, dtype=float)
    if np.any(d <= 0):
        raise ContractViolation("Stepsize D must have positive diagonal entries.")
    if np.any(c < 0):
        raise ContractViolation("Penalty C must be nonnegative.")
    root = np.sqrt(d)
    H = root[:, None] * (X + np.diag(c)) * root[None, :]
    return (H + H.T) / 2.0


def _check_symmetric(A: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ContractViolation(f"Expected a square matrix, got {A.shape}.")
    asym = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if asym > SYMMETRY_TOLERANCE:
        raise ContractViolation(f"Matrix is not symmetric (max |A - A^T| = {asym:.3E}).")
    return A


def eigvals_sym(A) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix."""
    return sla.eigvalsh(_check_symmetric(A))


def lambda_max_sym(A) -> float:
    return float(eigvals_sym(A)[-1])


def scaled_epsilon_bound(X, C) -> float:
    """Strict upper bound on eps for D = eps [diag(X + C)]^-1."""
    X = np.asarray(X, dtype=float)
    c = np.broadcast_to(_diag_vector(C), (X.shape[0],))
    d_h = 1.0 / (np.diag(X) + c)
    return 2.0 / lambda_max_sym(h_matrix(d_h, X, c))


def droop_margin(X, c) -> float:
    """lambda_min(C - X); positive exactly when droop with penalty c is stable."""
    c = _diag_vector(c)
    if np.any(c <= 0):
        raise ConfigurationError("Droop needs c_j > 0 on every bus.")
    return float(eigvals_sym(np.diag(c) - np.asarray(X, dtype=float))[0])


@dataclass(frozen=True)
class StabilityReport:
    scheme: str
    lambda_max_H: float
    stable: bool
    epsilon_bound: float
    alpha_bound: float
    alpha_sup: float
    droop_pd_ok: Optional[bool] = None

    def to_dict(self) -> dict:
        return asdict(self)


def analyze(cfg: ControlConfig, gm: GraphMatrices) -> StabilityReport:
    if cfg.scheme is Scheme.DROOP and np.any(cfg.c <= 0):
        raise ConfigurationError("Droop control is undefined with c_j = 0.")
    lam = lambda_max_sym(h_matrix(cfg.d, gm.X, cfg.c))
    alpha_sup = cfg.alpha.supremum
    stable = lam * alpha_sup < 2.0 - MARGINAL_BAND
    return StabilityReport(
        scheme=cfg.scheme.value,
        lambda_max_H=lam,
        stable=bool(stable),
        epsilon_bound=scaled_epsilon_bound(gm.X, cfg.c),
        alpha_bound=2.0 / lam,
        alpha_sup=alpha_sup,
        droop_pd_ok=bool(droop_margin(gm.X, cfg.c) > 0) if np.all(cfg.c > 0) else None,
    )


def conditioning_report(gm: GraphMatrices, c=None) -> dict:
    """Spectral summary of X and B, plus the droop margin when `c` is given."""
    ev_x = eigvals_sym(gm.X)
    ev_b = eigvals_sym(gm.B)
    report = {
        "n": gm.n,
        "lines": int(gm.M.shape[1]),
        "is_tree": gm.is_tree,
        "lambda_min_X": float(ev_x[0]),
        "lambda_max_X": float(ev_x[-1]),
        "cond_X": float(ev_x[-1] / ev_x[0]),
        "lambda_min_B": float(ev_b[0]),
        "lambda_max_B": float(ev_b[-1]),
        "cond_B": float(ev_b[-1] / ev_b[0]),
        "lambda_bar_B": float(np.trace(gm.B) / gm.n),
    }
    if c is not None:
        report["droop_margin"] = droop_margin(gm.X, np.broadcast_to(c, (gm.n,)))
    return report
