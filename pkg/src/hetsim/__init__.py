"""Multi-band heterogeneous network simulator and scheduling library."""

from .engine import RunLog, Scenario, run, run_seed, step
from .model import Decision, NetworkConfig, SlotMetrics, UserState, validate_decision
from .schedulers import ALGORITHMS, make_scheduler

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "Decision",
    "NetworkConfig",
    "RunLog",
    "Scenario",
    "SlotMetrics",
    "UserState",
    "make_scheduler",
    "run",
    "run_seed",
    "step",
    "validate_decision",
    "__version__",
]
