"""Class vocabulary and per-class instance statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .errors import InvalidConfigError, InvalidInputError

BACKGROUND_NAME = "background"


@dataclass(frozen=True)
class ClassTable:
    """Ordered class vocabulary; index 0 is always the background class."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise InvalidInputError("class table must not be empty")
        if len(set(self.names)) != len(self.names):
            raise InvalidInputError("class names must be unique")
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def with_background(
        cls, foreground: tuple[str, ...] | list[str], background: str = BACKGROUND_NAME
    ) -> "ClassTable":
        return cls((background, *foreground))

    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def background(self) -> str:
        return self.names[0]

    @property
    def foreground(self) -> tuple[str, ...]:
        return self.names[1:]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InvalidConfigError(f"unknown class {name!r}") from None

    def is_foreground(self, name: str) -> bool:
        return self.index(name) > 0


@dataclass(frozen=True)
class ClassStats:
    """Instance counts and per-image frequencies for the foreground classes.

    ``counts[name]`` is the total number of instances of that class over
    ``image_count`` images; the per-image frequency is ``counts / image_count``.
    Background carries no statistics.
    """

    classes: ClassTable
    image_count: int
    counts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.image_count < 1:
            raise InvalidInputError("image_count must be >= 1")
        for name in self.counts:
            if not self.classes.is_foreground(name):
                raise InvalidInputError(f"stats may only cover foreground classes, got {name!r}")
        missing = [n for n in self.classes.foreground if n not in self.counts]
        if missing:
            raise InvalidInputError(f"stats missing classes: {missing}")
        for name, n in self.counts.items():
            if n < 0:
                raise InvalidInputError(f"count for {name!r} must be >= 0")
        object.__setattr__(self, "counts", dict(self.counts))

    @classmethod
    def from_frequencies(
        cls, classes: ClassTable, frequencies: Mapping[str, float], image_count: int
    ) -> "ClassStats":
        """Build stats from per-image frequencies; counts are rounded to integers."""
        counts = {name: round(f * image_count) for name, f in frequencies.items()}
        return cls(classes=classes, image_count=image_count, counts=counts)

    def count(self, name: str) -> int:
        return self.counts[name]

    def frequency(self, name: str) -> float:
        return self.counts[name] / self.image_count

    @property
    def frequencies(self) -> dict[str, float]:
        return {name: self.frequency(name) for name in self.classes.foreground}

    def most_frequent(self) -> str:
        """Foreground class with the largest count (ties by table order)."""
        return max(self.classes.foreground, key=lambda n: (self.counts[n], -self.classes.index(n)))
