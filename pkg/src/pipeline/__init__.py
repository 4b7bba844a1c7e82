from .commands import (
    COMMANDS,
    CommandResult,
    cmd_errors,
    cmd_optimize,
    cmd_pmf,
    cmd_prepare,
    cmd_spectrum,
    cmd_trace,
)

__all__ = [
    "COMMANDS",
    "CommandResult",
    "cmd_errors",
    "cmd_optimize",
    "cmd_pmf",
    "cmd_prepare",
    "cmd_spectrum",
    "cmd_trace",
]
