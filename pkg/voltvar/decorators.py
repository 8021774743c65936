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

import time
from functools import wraps

from loguru import logger

ENABLED_MEASURE_TIME_DECORATOR = True


def measure_time(level="DEBUG", prec=3):
    def decorate(func):
        """Log the runtime of the decorated function."""

        @wraps(func)
        def wrapper(*args, **kwargs):
            if not ENABLED_MEASURE_TIME_DECORATOR:
                return func(*args, **kwargs)
            start = time.perf_counter()
            value = func(*args, **kwargs)
            cost_time = time.perf_counter() - start
            logger.bind(voltvar=True).log(
                level, f"Finished {func.__name__} in {cost_time:.{int(prec)}E} secs."
            )
            return value

        return wrapper

    return decorate
