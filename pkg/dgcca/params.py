"""Nuisance parameters of the decomposition: ranks, stages, pair sets and signs."""

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Any

from dgcca.errors import ConfigError

Pair = tuple[int, int]


def all_pairs(k: int) -> list[Pair]:
    """Every (j, k) with j < k over K views."""
    return list(combinations(range(k), 2))


def _pairs(values: Iterable[Iterable[int]]) -> tuple[Pair, ...]:
    out = []
    for pair in values:
        j, k = (int(v) for v in pair)
        out.append((min(j, k), max(j, k)))
    return tuple(sorted(set(out)))


class Provenance(str, Enum):
    """Where a parameter set came from."""

    USER = "user"
    SELECTED = "selected"


STAGES = ("ranks", "L", "I0", "r_star", "delta", "sign")


@dataclass(frozen=True)
class NuisanceParams:
    """Parameters the estimator needs beyond the data.

    Stage indices are 0-based; pair sets and signs are keyed by stage.
    """

    ranks: tuple[int, ...]
    L: int
    I0: tuple[int, ...]
    r_star: tuple[int, ...]
    delta_pos: dict[int, tuple[Pair, ...]] = field(default_factory=dict)
    delta_zero: dict[int, tuple[Pair, ...]] = field(default_factory=dict)
    alpha_signs: dict[int, int] = field(default_factory=dict)
    alpha_level: float | None = None
    provenance: Provenance = Provenance.USER

    def __post_init__(self) -> None:
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        object.__setattr__(self, "I0", tuple(sorted(int(l) for l in self.I0)))
        object.__setattr__(self, "r_star", tuple(int(r) for r in self.r_star))
        object.__setattr__(self, "delta_pos", {int(l): _pairs(p) for l, p in self.delta_pos.items()})
        object.__setattr__(self, "delta_zero", {int(l): _pairs(p) for l, p in self.delta_zero.items()})
        object.__setattr__(self, "alpha_signs", {int(l): int(s) for l, s in self.alpha_signs.items()})
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        self.validate()

    @property
    def k(self) -> int:
        return len(self.ranks)

    def validate(self) -> None:
        """Check the structural constraints between the parameters.

        Raises:
            ConfigError: when any constraint fails.
        """
        if any(r < 0 for r in self.ranks):
            raise ConfigError(f"negative rank in {list(self.ranks)}")
        if self.L < 0:
            raise ConfigError(f"L must be nonnegative, got {self.L}")
        if any(not 0 <= l < self.L for l in self.I0):
            raise ConfigError(f"I0 {list(self.I0)} must lie within stages 0..{self.L - 1}")
        if self.r_star and len(self.r_star) != self.k:
            raise ConfigError(f"{len(self.r_star)} r_star values for {self.k} views")
        if any(not 0 <= r <= len(self.I0) for r in self.r_star):
            raise ConfigError(f"r_star {list(self.r_star)} must lie in [0, |I0| = {len(self.I0)}]")
        valid_pairs = set(all_pairs(self.k))
        for l in self.I0:
            pos = set(self.delta_pos.get(l, ()))
            zero = set(self.delta_zero.get(l, ()))
            if pos & zero:
                raise ConfigError(f"stage {l}: pairs {sorted(pos & zero)} are in both delta sets")
            if not pos | zero:
                raise ConfigError(f"stage {l}: no candidate pairs")
            if not (pos | zero) <= valid_pairs:
                raise ConfigError(f"stage {l}: pairs {sorted((pos | zero) - valid_pairs)} are not view pairs")
            if self.alpha_signs.get(l) not in (-1, 1):
                raise ConfigError(f"stage {l}: alpha sign must be +1 or -1")

    def to_dict(self) -> dict[str, Any]:
        """Serialize to dictionary (JSON keys are strings)."""
        return {
            "ranks": list(self.ranks),
            "L": self.L,
            "I0": list(self.I0),
            "r_star": list(self.r_star),
            "delta_pos": {str(l): [list(p) for p in pairs] for l, pairs in sorted(self.delta_pos.items())},
            "delta_zero": {str(l): [list(p) for p in pairs] for l, pairs in sorted(self.delta_zero.items())},
            "alpha_signs": {str(l): s for l, s in sorted(self.alpha_signs.items())},
            "alpha_level": self.alpha_level,
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "NuisanceParams":
        """Deserialize from dictionary."""
        try:
            return cls(
                ranks=tuple(data["ranks"]),
                L=int(data["L"]),
                I0=tuple(data["I0"]),
                r_star=tuple(data["r_star"]),
                delta_pos={int(l): p for l, p in data.get("delta_pos", {}).items()},
                delta_zero={int(l): p for l, p in data.get("delta_zero", {}).items()},
                alpha_signs={int(l): s for l, s in data.get("alpha_signs", {}).items()},
                alpha_level=data.get("alpha_level"),
                provenance=data.get("provenance", Provenance.USER),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid nuisance parameters: {e}") from e

    def matches(self, truth: "NuisanceParams") -> dict[str, bool]:
        """Per-parameter agreement with a reference set, plus an overall flag.

        Pair sets and signs are compared only on the shared I0 stages; they
        count as wrong whenever I0 differs.
        """
        same_i0 = self.I0 == truth.I0
        checks = {
            "ranks": self.ranks == truth.ranks,
            "L": self.L == truth.L,
            "I0": same_i0,
            "r_star": same_i0 and self.r_star == truth.r_star,
            "delta": same_i0 and all(
                set(self.delta_pos.get(l, ())) == set(truth.delta_pos.get(l, ()))
                and set(self.delta_zero.get(l, ())) == set(truth.delta_zero.get(l, ()))
                for l in truth.I0
            ),
            "sign": same_i0 and all(self.alpha_signs.get(l) == truth.alpha_signs.get(l) for l in truth.I0),
        }
        checks["all"] = all(checks.values())
        return checks
