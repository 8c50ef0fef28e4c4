# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import functools
import logging

import numpy as np

from .. import hooks
from ..core.exceptions import WageGapError

logger = logging.getLogger(__name__)


def endpoint(func):
    """
    Turn engine exceptions into result dicts.

    The wrapped handler returns ``{"success": True, ...}``; any
    WageGapError becomes ``{"success": False, "error": message,
    "exit_code": code}``.
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            result = func(*args, **kwargs) or {}
            result.setdefault("success", True)
            result.setdefault("exit_code", hooks.exit_codes["success"])
            return result
        except WageGapError as e:
            logger.exception("Error in %s: %s", func.__name__, e.message)
            return {"success": False, "error": e.message, "exit_code": e.exit_code}
        except (np.linalg.LinAlgError, FloatingPointError) as e:
            logger.exception("Numerical failure in %s", func.__name__)
            return {"success": False, "error": str(e), "exit_code": hooks.exit_codes["numerical"]}

    return wrapper
