"""Tamper detection on PCB power-delivery networks from |S11| signatures.

Simulate signatures of genuine and tampered boards, classify them with a
random forest, and explain the classifier with exact tree SHAP values.
"""
from .exceptions import CheckFailure, ConfigError, DataError, DomainError, SingularityError, WaldoError
from .forest import RandomForestClassifier
from .preprocessing import Standardizer

__version__ = "0.1.0"

__all__ = [
    "CheckFailure", "ConfigError", "DataError", "DomainError", "RandomForestClassifier",
    "SingularityError", "Standardizer", "WaldoError", "__version__",
]
