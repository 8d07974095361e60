#!/usr/bin/env python3

"""
Error hierarchy for semisupervised performance evaluation.
Every error carries a machine-readable error_class used by the CLI.
"""

from typing import Any, Dict, List, Optional


class SPEError(Exception):
    """Base class for all evaluation errors"""
    error_class = "spe_error"

    def to_dict(self) -> Dict[str, Any]:
        return {"error_class": self.error_class, "message": str(self)}


class DomainError(SPEError, ValueError):
    error_class = "domain_error"


class ParameterDomainError(DomainError):
    error_class = "parameter_domain_error"


class ContractViolationError(SPEError, ValueError):
    error_class = "contract_violation"


class FitError(SPEError):
    """Maximum-likelihood fit could not be carried out"""
    error_class = "fit_error"

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class EstimationError(SPEError):
    """MAP estimation failed for every start (or every family pair)"""
    error_class = "estimation_error"

    def __init__(self, message: str, diagnostics: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class ProposalError(SPEError):
    error_class = "proposal_error"

    def __init__(self, message: str, dimension: Optional[int] = None):
        super().__init__(message)
        self.dimension = dimension

    def to_dict(self) -> Dict[str, Any]:
        return {**super().to_dict(), "dimension": self.dimension}


class InferenceError(SPEError):
    error_class = "inference_error"

    def __init__(self, message: str, item: Optional[int] = None):
        super().__init__(message)
        self.item = item

    def to_dict(self) -> Dict[str, Any]:
        return {**super().to_dict(), "item": self.item}


class CurveError(SPEError):
    error_class = "curve_error"


class MetricError(SPEError):
    error_class = "metric_error"


class ParseError(SPEError, ValueError):
    error_class = "parse_error"

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

    def to_dict(self) -> Dict[str, Any]:
        return {**super().to_dict(), "line": self.line}


class ValidationError(SPEError, ValueError):
    error_class = "validation_error"


class NormalizationError(SPEError, ValueError):
    error_class = "normalization_error"


class ConfigError(SPEError, ValueError):
    error_class = "config_error"


class ReportError(SPEError):
    error_class = "report_error"
