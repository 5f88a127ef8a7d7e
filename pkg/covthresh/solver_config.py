from dataclasses import dataclass, asdict
from typing import Dict, Any

from covthresh import config
from covthresh.exceptions import InputError


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and iteration caps shared by every graphical lasso solve."""
    kkt_tol: float = config.KKT_TOL
    conv_tol: float = config.CONV_TOL
    max_outer: int = config.MAX_OUTER
    max_inner: int = config.MAX_INNER
    support_tol: float = config.SUPPORT_TOL
    # the off-diagonal-only penalty is not supported
    penalize_diagonal: bool = True

    def __post_init__(self):
        for name in ('kkt_tol', 'conv_tol', 'support_tol'):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ('max_outer', 'max_inner'):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be at least 1, got {getattr(self, name)}")
        if not self.penalize_diagonal:
            raise InputError("only the diagonal-penalized criterion is supported")

    @property
    def inner_tol(self) -> float:
        """Row subproblem tolerance used inside the outer sweeps."""
        return 0.1 * min(self.conv_tol, self.kkt_tol)

    def to_dict(self) -> Dict[str, Any]:
        """Convert the config to a dictionary."""
        return asdict(self)

    def __iter__(self):
        """Make the dataclass iterable for dict() conversion."""
        yield from self.to_dict().items()
