"""Shared iterate and trace records used by the solvers and the CLI."""

from dataclasses import dataclass, field
from typing import Optional

from .assembly import FieldCoeffs

__all__ = ["IterateX", "TraceRow", "RunTrace"]


@dataclass
class IterateX:
    """Product-space iterate (lambda, u) tagged with its mesh level."""

    lam: float
    u: FieldCoeffs
    level: int


@dataclass
class TraceRow:
    level: int
    n_dofs: int
    lam: float
    resi: Optional[float] = None
    theta: Optional[float] = None
    wall_time_ms: float = 0.0
    err_lambda: Optional[float] = None
    err_h1: Optional[float] = None
    scf_iterations: Optional[int] = None


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)

    def add(self, row):
        self.rows.append(row)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)
