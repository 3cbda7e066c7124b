# -*- coding: utf-8 -*-
"""CompSim module for configuring and formatting the custom logger.
"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import os
from logging import getLogger, getLevelName, Logger, Formatter, StreamHandler, INFO
from typing import Optional, Union

LOG_LEVEL_ENV_VAR = "COMPSIM_LOG_LEVEL"


def _resolve_level(level: Union[int, str, None]) -> int:
    if level is None:
        level = os.environ.get(LOG_LEVEL_ENV_VAR, INFO)
    if isinstance(level, str):
        resolved = getLevelName(level.strip().upper())
        return resolved if isinstance(resolved, int) else INFO
    return level


def get_logger(name: str, level: Optional[Union[int, str]] = None) -> Logger:
    """Get custom CompSim logger object.

    Args:
        name (str): The module name for the logger.
        level (int | str, optional): The log level for the logger. Defaults to the value of the COMPSIM_LOG_LEVEL
            environment variable, or INFO when it is not set.

    Returns:
        Logger: A Python Logger object with custom configuration and formatting.

    """
    level = _resolve_level(level)

    logger = getLogger(name)
    if len(logger.handlers) > 0:
        logger.handlers = []
    if level:
        logger.setLevel(level)

    sh = StreamHandler()
    if level:
        sh.setLevel(level)

    formatter = Formatter(
        fmt="%(asctime)s.%(msecs)03d - %(levelname)s - %(filename)s - %(name)s:%(lineno)d - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    )
    sh.setFormatter(formatter)

    logger.addHandler(sh)
    logger.propagate = False

    return logger


def set_package_log_level(level: Union[int, str, None]) -> int:
    """Apply a log level to every logger already created for the compsim package.

    Module loggers are created at import time, before a .env file may have been loaded, so entry points call this
    once the environment is known.

    Args:
        level (int | str | None): Log level name or number (None re-reads COMPSIM_LOG_LEVEL).

    Returns:
        int: The numeric level that was applied.

    """
    resolved = _resolve_level(level)
    for logger_name in list(getLogger().manager.loggerDict.keys()):
        if logger_name == "compsim" or logger_name.startswith("compsim."):
            package_logger = getLogger(logger_name)
            package_logger.setLevel(resolved)
            for handler in package_logger.handlers:
                handler.setLevel(resolved)
    return resolved
