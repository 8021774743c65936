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

import queue
import threading
import time
import traceback
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from loguru import logger


@dataclass
class ScenarioJob:
    name: str
    fn: Callable
    args: tuple = ()
    kwargs: Dict[str, Any] = field(default_factory=dict)
    result: Any = None
    error: Optional[BaseException] = None
    elapsed: float = 0.0


class ScenarioManager:
    """
    Runs independent scenario jobs on worker threads.

    Jobs must not share mutable state: each one builds its own plant and writes its
    own output. Results come back in submission order.
    """

    def __init__(self, max_workers: int = 4):
        if max_workers < 1:
            raise ValueError(f"max_workers must be >= 1, got {max_workers}.")
        self.max_workers = max_workers
        self.jobs: List[ScenarioJob] = []
        self._logger = logger.bind(voltvar=True)

    def submit(self, name: str, fn: Callable, *args, **kwargs) -> ScenarioJob:
        job = ScenarioJob(name=name, fn=fn, args=args, kwargs=kwargs)
        self.jobs.append(job)
        return job

    def _worker(self, pending: "queue.Queue[ScenarioJob]"):
        while True:
            try:
                job = pending.get_nowait()
            except queue.Empty:
                return
            start = time.perf_counter()
            try:
                job.result = job.fn(*job.args, **job.kwargs)
            except Exception as e:
                job.error = e
                self._logger.error(f"Job {job.name} failed: {e}")
                self._logger.debug(traceback.format_exc())
            finally:
                job.elapsed = time.perf_counter() - start
                pending.task_done()
            self._logger.debug(f"Job {job.name} finished in {job.elapsed:.3E} secs.")

    def run(self, raise_on_error: bool = True) -> List[Any]:
        """
        Runs every submitted job and returns their results.

        Args:
            raise_on_error: Re-raise the first failure (in submission order) once all
                jobs are done. Otherwise failed jobs yield None.
        """
        pending: "queue.Queue[ScenarioJob]" = queue.Queue()
        for job in self.jobs:
            pending.put(job)
        threads = [
            threading.Thread(target=self._worker, args=(pending,), daemon=True)
            for _ in range(min(self.max_workers, len(self.jobs)))
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

        if raise_on_error:
            for job in self.jobs:
                if job.error is not None:
                    raise job.error
        return [job.result for job in self.jobs]
