from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class Interval:
    """A bracket ``[lower, upper]`` on a real quantity.

    ``lower_certified``/``upper_certified`` say whether each endpoint is a
    proven bound or only a numerical estimate. ``slack`` itemizes the terms
    that were added to reach a certified upper end (net covering radii,
    optimizer tolerance, float slack), so callers can audit them.
    """

    lower: float
    upper: float
    lower_certified: bool = True
    upper_certified: bool = True
    slack: dict[str, float] = field(default_factory=dict)
    notes: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"interval lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, atol: float = 0.0) -> bool:
        return self.lower - atol <= value <= self.upper + atol

    def hull_max(self, other: Interval) -> Interval:
        """Interval for ``max(x, y)`` with ``x`` in self and ``y`` in other."""
        slack = dict(self.slack)
        for key, val in other.slack.items():
            slack[key] = max(slack.get(key, 0.0), val)
        return Interval(
            max(self.lower, other.lower),
            max(self.upper, other.upper),
            self.lower_certified and other.lower_certified,
            self.upper_certified and other.upper_certified,
            slack,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "lower_certified": self.lower_certified,
            "upper_certified": self.upper_certified,
            "slack": dict(self.slack),
            "notes": {k: _jsonable(v) for k, v in self.notes.items()},
        }

    @classmethod
    def exact(cls, value: float, **notes: Any) -> Interval:
        return cls(value, value, True, True, {}, dict(notes))


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    try:
        return float(value)
    except (TypeError, ValueError):
        return repr(value)
