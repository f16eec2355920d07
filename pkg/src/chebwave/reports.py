from __future__ import annotations

from dataclasses import dataclass, field

from .io import dumps


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of one numerical check: ``passed`` means ``measured <= bound``
    within the tolerance recorded in ``context``."""
    name: str
    measured: float
    bound: float
    passed: bool
    context: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "measured": self.measured, "bound": self.bound,
                "pass": bool(self.passed), "context": self.context}


def upper_bound_report(name: str, measured: float, bound: float, tol: float = 0.0, **context) -> VerifyReport:
    return VerifyReport(name, float(measured), float(bound), bool(measured <= bound + tol),
                        dict(context, tol=tol))


def reports_to_json(reports) -> str:
    return dumps([r.to_json() for r in reports])
