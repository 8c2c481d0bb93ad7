"""trajaudit_adapter: capture rollouts during training and run audits on them."""

from .runner import (AuditCliError, AuditCliNotFoundError, VerdictParseError,
                     collect_verdicts, run_audit)
from .writer import RolloutShapeError, RolloutWriter

__all__ = [
    "AuditCliError",
    "AuditCliNotFoundError",
    "RolloutShapeError",
    "RolloutWriter",
    "VerdictParseError",
    "collect_verdicts",
    "run_audit",
]

__version__ = "0.1.0"
