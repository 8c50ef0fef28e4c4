# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

class WageGapError(Exception):
    """Base exception class for wagegap errors."""
    exit_code = 1

    def __init__(self, message):
        self.message = message
        super().__init__(self.message)


class ConfigError(WageGapError):
    """Exception raised for invalid configuration or command-line values."""
    exit_code = 2


class SpecValidationError(ConfigError):
    """Exception raised when a MarketSpec violates one of its invariants."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DataError(WageGapError):
    """Exception raised when input data cannot support the requested stage."""
    exit_code = 3


class ClusteringError(DataError):
    """Exception raised when firms cannot be classed."""
    pass


class EstimationError(DataError):
    """Exception raised when a model cannot be estimated on the given sample."""
    pass


class DisconnectedGraphError(DataError):
    """Exception raised when an estimation graph splits into several components."""

    def __init__(self, message, components=None):
        self.components = components or []
        super().__init__(message)


class NumericalError(WageGapError):
    """Exception raised when a numerical routine fails or breaks an invariant."""
    exit_code = 4
