"""Interest category tree.

The file format is a flat, tab-separated list of ``id<TAB>name<TAB>parent_id``
records.  Roots have an empty parent.  Lines starting with ``#`` and blank
lines are ignored.  Nesting is derived on load.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

from .errors import FormatError, LookupFailure, StructureError

DEFAULT = "default"
MAX_DEPTH = 6


@dataclass(frozen=True)
class InterestNode:
    id: str
    name: str
    parent: str | None
    depth: int


class Taxonomy:
    """Immutable interest tree.

    ``roots`` keeps file order, which fixes the slot order of every profile
    built against this taxonomy.
    """

    def __init__(self, nodes: dict[str, InterestNode], roots: list[str], taxonomy_id: str):
        self._nodes = dict(nodes)
        self.roots: tuple[str, ...] = tuple(roots)
        self.taxonomy_id = taxonomy_id
        self._root_index = {r: i for i, r in enumerate(self.roots)}
        self._root_of = {}
        for node_id in self._nodes:
            cur = self._nodes[node_id]
            while cur.parent is not None:
                cur = self._nodes[cur.parent]
            self._root_of[node_id] = cur.id

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def nodes(self) -> frozenset[InterestNode]:
        return frozenset(self._nodes.values())

    def node(self, node_id: str) -> InterestNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise LookupFailure(f"unknown interest id {node_id!r}") from None

    def root_of(self, node_id: str) -> str:
        try:
            return self._root_of[node_id]
        except KeyError:
            raise LookupFailure(f"unknown interest id {node_id!r}") from None

    def root_index(self, root_id: str) -> int:
        try:
            return self._root_index[root_id]
        except KeyError:
            raise LookupFailure(f"{root_id!r} is not a root of taxonomy {self.taxonomy_id}") from None

    @cached_property
    def _descendants(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {r: [] for r in self.roots}
        for node_id, node in self._nodes.items():
            if node.parent is not None:
                out[self._root_of[node_id]].append(node_id)
        return {r: tuple(v) for r, v in out.items()}

    def descendants(self, root_id: str) -> tuple[str, ...]:
        """Non-root nodes under ``root_id``, in file order."""
        self.root_index(root_id)
        return self._descendants[root_id]

    def max_depth(self) -> int:
        return max(n.depth for n in self._nodes.values())


def root_of(taxonomy: Taxonomy, node_id: str) -> str:
    return taxonomy.root_of(node_id)


def _parse(lines, origin: str) -> tuple[list[tuple[str, str, str | None]], str]:
    records = []
    digest = hashlib.sha256()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        digest.update(line.encode("utf-8") + b"\n")
        fields = line.split("\t")
        if len(fields) != 3:
            raise FormatError(f"{origin}:{lineno}: expected 3 tab-separated fields, got {len(fields)}: {line!r}")
        node_id, name, parent = (f.strip() for f in fields)
        if not node_id:
            raise FormatError(f"{origin}:{lineno}: empty id")
        records.append((node_id, name or node_id, parent or None))
    return records, digest.hexdigest()[:16]


def _build(records, taxonomy_id: str) -> Taxonomy:
    parents: dict[str, str | None] = {}
    names: dict[str, str] = {}
    roots: list[str] = []
    for node_id, name, parent in records:
        if node_id in parents:
            raise StructureError(f"duplicate interest id {node_id!r}")
        if parent == node_id:
            raise StructureError(f"interest {node_id!r} lists itself as parent")
        parents[node_id] = parent
        names[node_id] = name
        if parent is None:
            roots.append(node_id)
    if not roots:
        raise StructureError("taxonomy has no root")

    depth: dict[str, int] = {r: 0 for r in roots}
    for node_id in parents:
        chain = []
        cur = node_id
        while cur not in depth:
            chain.append(cur)
            parent = parents[cur]
            if parent not in parents:
                raise StructureError(f"interest {cur!r} has unknown parent {parent!r}")
            if parent in chain:
                raise StructureError(f"cycle through interest {cur!r}")
            cur = parent
        for offset, item in enumerate(reversed(chain), start=1):
            depth[item] = depth[cur] + offset

    nodes = {i: InterestNode(i, names[i], parents[i], depth[i]) for i in parents}
    return Taxonomy(nodes, roots, taxonomy_id)


def data_dir() -> Path:
    override = os.environ.get("OBF_DATA_DIR")
    if override:
        return Path(override)
    return Path(str(resources.files("obfkit") / "data"))


def load_taxonomy(source: str | os.PathLike = DEFAULT, include_locations: bool = False) -> Taxonomy:
    """Load and validate a taxonomy file, or the bundled default."""
    if str(source) == DEFAULT:
        paths = [data_dir() / "taxonomy_default.tsv"]
        if include_locations:
            paths.append(data_dir() / "world_locations.tsv")
    else:
        paths = [Path(source)]
    records = []
    digests = []
    for path in paths:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise FormatError(f"cannot read taxonomy {path}: {exc}") from exc
        recs, digest = _parse(text.splitlines(), str(path))
        records.extend(recs)
        digests.append(digest)
    taxonomy_id = "default" if str(source) == DEFAULT else Path(source).stem
    if include_locations:
        taxonomy_id += "+locations"
    return _build(records, f"{taxonomy_id}:{'-'.join(digests)}")


def taxonomy_from_roots(roots: list[str], taxonomy_id: str = "custom") -> Taxonomy:
    """Flat taxonomy with only root categories, handy for small models."""
    return _build([(r, r, None) for r in roots], taxonomy_id)
