"""Date-indexed named scalar series, shared by the news and market layers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date

from .errors import InputError


@dataclass(frozen=True)
class IndexSeries:
    """A named series of (date, value) points; value ``None`` marks a missing day.

    Dates are strictly increasing. Present values must be finite.
    """

    name: str
    points: tuple[tuple[date, float | None], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        prev = None
        for d, v in self.points:
            if prev is not None and d <= prev:
                raise InputError(
                    f"series {self.name!r}: dates not strictly increasing at {d}"
                )
            if v is not None and not math.isfinite(v):
                raise InputError(f"series {self.name!r}: non-finite value at {d}")
            prev = d

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dates(self) -> list[date]:
        return [d for d, _ in self.points]

    def as_dict(self) -> dict[date, float]:
        """Present (non-missing) points as a date -> value map."""
        return {d: v for d, v in self.points if v is not None}

    def rename(self, name: str) -> "IndexSeries":
        return IndexSeries(name, self.points)
