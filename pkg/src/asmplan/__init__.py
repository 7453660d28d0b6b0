"""Assembly sequence planning as an MDP.

Exact enumeration oracle plus tabular and deep reinforcement learning
agents for finding time-optimal assembly sequences under precedence
constraints, tool changes, and user preferences.
"""

from asmplan.model import (
    AssemblySpec,
    IllegalActionError,
    SpecValidationError,
    builtin_airplane_spec,
    legal_tasks,
    load_spec,
    task_duration,
)

__version__ = "0.1.0"

__all__ = [
    "AssemblySpec",
    "IllegalActionError",
    "SpecValidationError",
    "builtin_airplane_spec",
    "legal_tasks",
    "load_spec",
    "task_duration",
    "__version__",
]
