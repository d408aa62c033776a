"""Binary GIC profiles and the set algebra used to compare them."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .errors import IncompatibleProfiles, LookupFailure, UndefinedOverlap
from .taxonomy import Taxonomy


@dataclass(frozen=True)
class InterestProfile:
    """One presence/absence slot per taxonomy root, in root order."""

    bits: tuple[int, ...]
    taxonomy_id: str
    roots: tuple[str, ...] = field(repr=False, compare=False)

    def __post_init__(self):
        if len(self.bits) != len(self.roots):
            raise ValueError(f"profile has {len(self.bits)} slots, taxonomy has {len(self.roots)} roots")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("profile slots must be 0 or 1")

    @classmethod
    def empty(cls, taxonomy: Taxonomy) -> "InterestProfile":
        return cls((0,) * len(taxonomy.roots), taxonomy.taxonomy_id, taxonomy.roots)

    @classmethod
    def from_gics(cls, gics: Iterable[str], taxonomy: Taxonomy) -> "InterestProfile":
        bits = [0] * len(taxonomy.roots)
        for g in gics:
            bits[taxonomy.root_index(g)] = 1
        return cls(tuple(bits), taxonomy.taxonomy_id, taxonomy.roots)

    @property
    def gics(self) -> frozenset[str]:
        return frozenset(r for r, b in zip(self.roots, self.bits) if b)

    def ordered_gics(self) -> list[str]:
        return [r for r, b in zip(self.roots, self.bits) if b]

    def __len__(self) -> int:
        return sum(self.bits)

    def to_dict(self) -> dict:
        return {"taxonomy_id": self.taxonomy_id, "gics": self.ordered_gics()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict, taxonomy: Taxonomy) -> "InterestProfile":
        tid = data.get("taxonomy_id")
        if tid is not None and tid != taxonomy.taxonomy_id:
            raise IncompatibleProfiles(f"profile for taxonomy {tid!r}, expected {taxonomy.taxonomy_id!r}")
        return cls.from_gics(data.get("gics", []), taxonomy)


@dataclass(frozen=True)
class ProfileDiff:
    new: frozenset[str]
    lost: frozenset[str]
    kept: frozenset[str]


def breadth(p: InterestProfile) -> int:
    return sum(p.bits)


def from_interest_list(interests: Iterable[str], taxonomy: Taxonomy) -> InterestProfile:
    """Collapse leaf (or any-level) interests to their root categories."""
    return InterestProfile.from_gics((taxonomy.root_of(i) for i in interests), taxonomy)


def _check(a: InterestProfile, b: InterestProfile):
    if a.taxonomy_id != b.taxonomy_id:
        raise IncompatibleProfiles(f"taxonomies differ: {a.taxonomy_id!r} vs {b.taxonomy_id!r}")


def diff(before: InterestProfile, after: InterestProfile) -> ProfileDiff:
    _check(before, after)
    b, a = before.gics, after.gics
    return ProfileDiff(new=a - b, lost=b - a, kept=a & b)


OVERLAP_METRICS = ("jaccard", "dice", "recall")


def overlap(a: InterestProfile, b: InterestProfile, metric: str = "jaccard") -> float:
    """Similarity of two GIC sets.

    ``jaccard`` is |A∩B|/|A∪B|; ``dice`` is 2|A∩B|/(|A|+|B|); ``recall`` is
    the share of ``a`` that survives in ``b``.
    """
    _check(a, b)
    sa, sb = a.gics, b.gics
    inter = len(sa & sb)
    if metric == "jaccard":
        union = len(sa | sb)
        if union == 0:
            raise UndefinedOverlap("overlap of two empty profiles is undefined")
        return inter / union
    if metric == "dice":
        total = len(sa) + len(sb)
        if total == 0:
            raise UndefinedOverlap("overlap of two empty profiles is undefined")
        return 2 * inter / total
    if metric == "recall":
        if not sa:
            raise UndefinedOverlap("recall against an empty reference profile is undefined")
        return inter / len(sa)
    raise LookupFailure(f"unknown overlap metric {metric!r}; choose from {OVERLAP_METRICS}")
