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

from collections import deque

import numpy as np


class History:
    """Keeps the last `maxsize` samples; the oldest one is dropped on overflow."""

    def __init__(self, maxsize: int):
        self.q = deque(maxlen=maxsize)

    def put(self, item: float):
        self.q.append(float(item))

    def values(self) -> np.ndarray:
        return np.fromiter(self.q, dtype=float, count=len(self.q))

    def __len__(self):
        return len(self.q)


def two_cluster_split(samples: np.ndarray):
    """
    Splits 1-D samples at their widest gap.

    Returns:
        (low, high, gap): the two groups and the distance between them, or None when
        fewer than two distinct samples exist.
    """
    if samples.size < 2:
        return None
    ordered = np.sort(samples)
    gaps = np.diff(ordered)
    k = int(np.argmax(gaps))
    if gaps[k] <= 0.0:
        return None
    return ordered[: k + 1], ordered[k + 1 :], float(gaps[k])
