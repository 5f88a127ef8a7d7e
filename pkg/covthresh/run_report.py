from dataclasses import dataclass, asdict, field
from typing import Dict, Any, List
import json
import math


def _json_safe(value):
    # argparse hands back tuples and paths, solvers can hand back inf
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set)):
        return [_json_safe(v) for v in value]
    return value


@dataclass
class RunReport:
    """What one CLI command consumed, produced, and measured."""
    command: str
    inputs: Dict[str, Any]
    outputs: List[str] = field(default_factory=list)  # every file the command wrote
    metrics: Dict[str, Any] = field(default_factory=dict)

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def to_dict(self) -> Dict[str, Any]:
        """Convert the report to a dictionary; non-finite numbers become None."""
        return _json_safe(asdict(self))

    def to_json(self) -> str:
        """Convert the report to a strict JSON string."""
        return json.dumps(self.to_dict(), indent=2, default=str, allow_nan=False)
