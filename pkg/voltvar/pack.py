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
import re
import tempfile
from pathlib import Path
from typing import Iterable, Type, TypeVar, Union

import msgspec
import numpy as np
import orjson
import pandas as pd

from .exceptions import InputError

T = TypeVar("T")

_byte_pattern = re.compile(r"\(byte (\d+)\)")

JSON_OPTIONS = orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_INDENT_2 | orjson.OPT_NON_STR_KEYS


def _default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Type is not JSON serializable: {type(obj).__name__}")


def dumps(obj) -> bytes:
    return orjson.dumps(obj, default=_default, option=JSON_OPTIONS)


def _line_context(data: bytes, offset: int) -> str:
    head = data[:offset]
    line = head.count(b"\n") + 1
    column = offset - (head.rfind(b"\n") + 1) + 1
    text = data.splitlines()[line - 1] if data.splitlines() else b""
    return f"line {line}, column {column}: {text.decode(errors='replace').strip()}"


def decode_json(data: Union[bytes, str], type: Type[T], source: str = "<input>") -> T:
    """
    Decodes `data` into `type`, turning msgspec errors into InputError.

    Schema errors carry msgspec's key path (e.g. `$.lines[2].x_ohm`); syntax errors
    carry the line and column of the offending byte.
    """
    if isinstance(data, str):
        data = data.encode()
    try:
        return msgspec.json.decode(data, type=type)
    except msgspec.ValidationError as e:
        raise InputError(f"{source}: {e}") from e
    except msgspec.DecodeError as e:
        match = _byte_pattern.search(str(e))
        where = _line_context(data, int(match.group(1))) if match else ""
        raise InputError(f"{source}: {e} {where}".rstrip()) from e


def read_json(path: Union[str, Path], type: Type[T]) -> T:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"File not found: {path}")
    return decode_json(path.read_bytes(), type, source=str(path))


def atomic_write(path: Union[str, Path], data: Union[bytes, str]):
    """Writes through a temp file in the target directory, then renames over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_json(path: Union[str, Path], obj):
    atomic_write(path, dumps(obj))


def trace_frame(records: Iterable, full: bool = False) -> pd.DataFrame:
    """
    Columnar view of trace records.

    Columns: tick, minute, mismatch_norm, limits_hit and, with `full`, one `q_<bus>`
    and one `v_<bus>` column per controlled bus (buses numbered from 1).
    """
    records = list(records)
    frame = pd.DataFrame(
        {
            "tick": [r.t for r in records],
            "minute": [r.minute for r in records],
            "mismatch_norm": [r.mismatch_norm for r in records],
            "limits_hit": [r.limits_hit for r in records],
        }
    )
    if full and records:
        q = np.vstack([r.q for r in records])
        v = np.vstack([r.v for r in records])
        n = q.shape[1]
        wide = pd.DataFrame(
            np.hstack([q, v]),
            columns=[f"q_{j}" for j in range(1, n + 1)]
            + [f"v_{j}" for j in range(1, n + 1)],
        )
        frame = pd.concat([frame, wide], axis=1)
    return frame


def write_trace_csv(records: Iterable, path: Union[str, Path], full: bool = False):
    atomic_write(path, trace_frame(records, full=full).to_csv(index=False))


def write_frame_csv(frame: pd.DataFrame, path: Union[str, Path]):
    atomic_write(path, frame.to_csv(index=False))
