"""Problem instances: a quadratic test problem with exact oracles, constrained
logistic regression with disparate-impact constraints, and a 7-bar truss."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from ..core import AffineConstraint
from ..oracle import StochasticObjective
from ..projections import FeasibleSet


@dataclass
class Problem:
    """Everything the solver needs: objective oracle, feasible set and constraint."""

    name: str
    objective: StochasticObjective
    feasible_set: FeasibleSet
    constraint: AffineConstraint
    info: Dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.constraint.n

    @property
    def m(self) -> int:
        return self.constraint.m

    def initial_point(self) -> np.ndarray:
        return self.feasible_set.project(np.zeros(self.n))


from .qp import ExactQP, QPObjective, random_qp, random_box_qp  # noqa: E402
from .logistic import LogisticObjective, LogisticProblem, build_logistic, synthetic_dataset  # noqa: E402
from .truss import TrussObjective, TrussProblem, build_truss  # noqa: E402

__all__ = [
    "Problem", "ExactQP", "QPObjective", "random_qp", "random_box_qp",
    "LogisticObjective", "LogisticProblem", "build_logistic", "synthetic_dataset",
    "TrussObjective", "TrussProblem", "build_truss",
]
