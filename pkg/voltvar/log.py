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

import os
import sys
import time
from datetime import datetime

import pytz
from loguru import logger

_log_ids = []


def _apply_tz():
    tz = os.environ.get("TZ", "").strip()
    if not tz or not hasattr(time, "tzset"):
        return

    def get_utc_offset(timezone_str):
        timezone = pytz.timezone(timezone_str)
        offset_seconds = timezone.utcoffset(datetime.now()).total_seconds()
        offset_hours = offset_seconds // 3600
        return f"UTC{-int(offset_hours):+d}"

    try:
        os.environ["TZ"] = get_utc_offset(tz)
    except pytz.UnknownTimeZoneError:
        pass
    time.tzset()


def setting_log(level=None, save_file=False, stdout=True):
    """
    Builds the loguru handler configs for voltvar records.

    Records go to stderr so that JSON written to stdout by the CLI stays parseable.
    """
    if level is None:
        level = "INFO"
        save_file = False

    _apply_tz()

    def only_voltvar(record):
        return "voltvar" in record["extra"]

    config_handlers = []
    if stdout:
        config_handlers += [
            {
                "sink": sys.stderr,
                "level": level,
                "filter": only_voltvar,
            },
        ]
    if save_file:
        config_handlers += [
            {
                "sink": "./Log/voltvar.log",
                "enqueue": True,
                "rotation": "100 MB",
                "level": level,
                "filter": only_voltvar,
            }
        ]
    return config_handlers


def enable_logging(level="INFO", save_file=False):
    """Routes voltvar records to stderr (and optionally ./Log) at `level`."""
    global _log_ids
    for log_id in _log_ids:
        try:
            logger.remove(log_id)
        except ValueError:
            pass
    try:
        logger.remove(0)
    except ValueError:
        pass
    _log_ids = [
        logger.add(**conf)
        for conf in setting_log(level=level.upper(), save_file=save_file)
    ]
    logger.enable("voltvar")


def disable_logging():
    logger.disable("voltvar")
