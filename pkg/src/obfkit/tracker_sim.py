"""Seeded stochastic stand-in for an ad tracker's interest profiler.

A session is a list of URLs.  Each visit to a domain the tracker knows is
observed with probability ``coverage``; every ground-truth edge of an
observed domain then fires with its own probability ``theta``.  After the
visits, with probability ``broadening_rate`` the tracker adds between one
and ``extra_interest_max`` random GICs.  The profile is the union of
everything that fired.  ``leaf_spread`` only affects the reported leaf
interests: a fired edge may also record a sibling leaf under the same GIC.

Randomness is counter based: a visit's draws depend only on the session
seed, the epoch, the domain, and how many times that domain was already
visited in the session.  Reordering a session therefore changes nothing
but which URL string carried a draw.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import rng
from .domains import registrable_domain
from .errors import FormatError, LookupFailure
from .profile import InterestProfile
from .taxonomy import Taxonomy

_TAG_COVER = 0x5C0E
_TAG_BROADEN = 0xB20A
_TAG_COUNT = 0xC0C0
_TAG_PICK = 0x91C4
_TAG_LEAF = 0x1EAF
_TAG_DRIFT = 0xD21F
_TAG_PROBE = 0x920B
_TAG_SPREAD = 0x5B2D


@dataclass(frozen=True)
class Edge:
    gic: str
    theta: float
    leaf: str | None = None


@dataclass(frozen=True)
class TrackerConfig:
    ground_truth: Mapping[str, tuple[Edge, ...]]
    coverage: float = 0.75
    broadening_rate: float = 0.0
    extra_interest_max: int = 2
    drift_rate: float = 0.0
    seed: int = 0
    # chance that a fired edge also records a sibling leaf of the same GIC (GIC bits unaffected)
    leaf_spread: float = 0.0
    leaf_pools: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def validate(self, taxonomy: Taxonomy) -> None:
        for name in ("coverage", "broadening_rate", "drift_rate", "leaf_spread"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.extra_interest_max < 0:
            raise ValueError("extra_interest_max must be >= 0")
        if not self.ground_truth:
            raise ValueError("ground truth is empty")
        roots = set(taxonomy.roots)
        for domain, edges in self.ground_truth.items():
            for e in edges:
                if e.gic not in roots:
                    raise LookupFailure(f"domain {domain!r} references unknown GIC {e.gic!r}")
                if not 0.0 <= e.theta <= 1.0:
                    raise ValueError(f"domain {domain!r}: theta {e.theta} outside [0, 1]")
                if e.leaf is not None and taxonomy.root_of(e.leaf) != e.gic:
                    raise ValueError(f"domain {domain!r}: leaf {e.leaf!r} is not under {e.gic!r}")

    def noiseless(self) -> "TrackerConfig":
        """Same edges with every knob set to deterministic behaviour."""
        gt = {d: tuple(replace(e, theta=1.0) for e in edges) for d, edges in self.ground_truth.items()}
        return replace(self, ground_truth=gt, coverage=1.0, broadening_rate=0.0, drift_rate=0.0,
                       leaf_spread=0.0)

    def to_dict(self) -> dict:
        return {
            "coverage": self.coverage,
            "broadening_rate": self.broadening_rate,
            "extra_interest_max": self.extra_interest_max,
            "drift_rate": self.drift_rate,
            "seed": self.seed,
            "leaf_spread": self.leaf_spread,
            "leaf_pools": {g: list(v) for g, v in self.leaf_pools.items()},
            "ground_truth": {
                d: [{"gic": e.gic, "theta": e.theta, **({"leaf": e.leaf} if e.leaf else {})} for e in edges]
                for d, edges in sorted(self.ground_truth.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrackerConfig":
        try:
            gt = {d: tuple(Edge(e["gic"], float(e["theta"]), e.get("leaf")) for e in edges)
                  for d, edges in data["ground_truth"].items()}
            return cls(
                ground_truth=gt,
                coverage=float(data.get("coverage", 0.75)),
                broadening_rate=float(data.get("broadening_rate", 0.0)),
                extra_interest_max=int(data.get("extra_interest_max", 2)),
                drift_rate=float(data.get("drift_rate", 0.0)),
                seed=int(data.get("seed", 0)),
                leaf_spread=float(data.get("leaf_spread", 0.0)),
                leaf_pools={g: tuple(v) for g, v in data.get("leaf_pools", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad tracker config: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TrackerConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read tracker config {path}: {exc}") from exc
        return cls.from_dict(data)


@dataclass(frozen=True)
class SessionResult:
    profile: InterestProfile
    leaves: frozenset[str]
    observed_visits: int


class TrackerSimulator:
    """Immutable simulator state for one epoch."""

    def __init__(self, config: TrackerConfig, taxonomy: Taxonomy, epoch: int = 0):
        config.validate(taxonomy)
        self.config = config
        self.taxonomy = taxonomy
        self.epoch = epoch
        self.roots = taxonomy.roots
        n_roots = len(self.roots)

        self.domains = tuple(sorted(config.ground_truth))
        self.index = {d: i for i, d in enumerate(self.domains)}
        self.dhash = np.array([rng.stable_hash(d) for d in self.domains], dtype=np.uint64)
        width = max((len(v) for v in config.ground_truth.values()), default=0)
        width = max(width, 1)
        n = len(self.domains)
        self.edge_gic = np.full((n, width), -1, dtype=np.int64)
        self.edge_theta = np.zeros((n, width))
        self.edge_leaf = np.full((n, width), -1, dtype=np.int64)

        pools = []
        for r in self.roots:
            pool = tuple(config.leaf_pools.get(r) or taxonomy.descendants(r) or (r,))
            pools.append(pool)
        self._pools = pools
        self._leaf_names: list[str] = []
        self._leaf_idx: dict[str, int] = {}
        for i, d in enumerate(self.domains):
            for e, edge in enumerate(config.ground_truth[d]):
                self.edge_gic[i, e] = taxonomy.root_index(edge.gic)
                self.edge_theta[i, e] = edge.theta
                self.edge_leaf[i, e] = self._leaf_id(edge.leaf or edge.gic)
        # leaf ids for broadening picks, per root
        self._pool_ids = [np.array([self._leaf_id(x) for x in p], dtype=np.int64) for p in pools]
        self._n_roots = n_roots

    def _leaf_id(self, name: str) -> int:
        idx = self._leaf_idx.get(name)
        if idx is None:
            idx = len(self._leaf_names)
            self._leaf_idx[name] = idx
            self._leaf_names.append(name)
        return idx

    # sessions

    def _session_key(self, session_seed) -> np.ndarray:
        return rng.combine(np.asarray(session_seed, dtype=np.uint64), self.epoch, 0x5E55)

    def _visits(self, urls: Iterable[str]) -> tuple[np.ndarray, np.ndarray]:
        seen: dict[int, int] = defaultdict(int)
        dom, ordinal = [], []
        for url in urls:
            i = self.index.get(registrable_domain(url))
            if i is None:
                continue
            dom.append(i)
            ordinal.append(seen[i])
            seen[i] += 1
        return np.array(dom, dtype=np.int64), np.array(ordinal, dtype=np.uint64)

    def _fire(self, keys: np.ndarray, dom: np.ndarray, ordinal: np.ndarray):
        """Coverage and edge draws for visits; ``keys`` is per-visit session key."""
        vkey = rng.combine(keys, self.dhash[dom], ordinal)
        observed = rng.unit(vkey ^ np.uint64(_TAG_COVER)) < self.config.coverage
        slots = np.arange(1, self.edge_gic.shape[1] + 1, dtype=np.uint64)
        u = rng.unit(rng.combine(vkey[:, None], slots[None, :]))
        gic = self.edge_gic[dom]
        fired = observed[:, None] & (gic >= 0) & (u < self.edge_theta[dom])
        return observed, fired, vkey

    def _spread(self, vkey: np.ndarray, dom: np.ndarray, fired: np.ndarray) -> list[int]:
        v, e = np.nonzero(fired)
        k = rng.combine(vkey[v], _TAG_SPREAD, e.astype(np.uint64))
        take = rng.unit(k) < self.config.leaf_spread
        out = []
        for key, g in zip(k[take], self.edge_gic[dom[v[take]], e[take]]):
            pool = self._pool_ids[g]
            out.append(int(pool[int(rng.unit(rng.combine(key, 1)) * len(pool))]))
        return out

    def _broaden(self, key) -> list[tuple[int, int]]:
        cfg = self.config
        if cfg.broadening_rate <= 0 or cfg.extra_interest_max <= 0:
            return []
        if rng.unit(rng.combine(key, _TAG_BROADEN)) >= cfg.broadening_rate:
            return []
        count = 1 + int(rng.unit(rng.combine(key, _TAG_COUNT)) * cfg.extra_interest_max)
        count = min(count, self._n_roots)
        order = np.argsort(rng.unit(rng.combine(key, _TAG_PICK, np.arange(self._n_roots, dtype=np.uint64))),
                           kind="stable")
        picks = []
        for g in order[:count]:
            pool = self._pool_ids[g]
            j = int(rng.unit(rng.combine(key, _TAG_LEAF, int(g))) * len(pool))
            picks.append((int(g), int(pool[j])))
        return picks

    def run_session_detail(self, urls: Sequence[str], session_seed: int) -> SessionResult:
        key = self._session_key(session_seed)
        dom, ordinal = self._visits(urls)
        bits = np.zeros(self._n_roots, dtype=np.int64)
        leaves: set[int] = set()
        n_obs = 0
        if len(dom):
            observed, fired, vkey = self._fire(np.full(len(dom), key, dtype=np.uint64), dom, ordinal)
            n_obs = int(observed.sum())
            bits[np.unique(self.edge_gic[dom][fired])] = 1
            leaves.update(np.unique(self.edge_leaf[dom][fired]).tolist())
            if self.config.leaf_spread > 0:
                leaves.update(self._spread(vkey, dom, fired))
        if n_obs:
            for g, leaf in self._broaden(key):
                bits[g] = 1
                leaves.add(leaf)
        profile = InterestProfile(tuple(int(b) for b in bits), self.taxonomy.taxonomy_id, self.roots)
        return SessionResult(profile, frozenset(self._leaf_names[i] for i in leaves), n_obs)

    def run_session(self, urls: Sequence[str], session_seed: int) -> InterestProfile:
        return self.run_session_detail(urls, session_seed).profile

    # probing

    def probe_seeds(self, session_seed: int, repeats: int) -> np.ndarray:
        """Session seeds used for the repeats of a probe."""
        r = np.arange(repeats, dtype=np.uint64)
        return rng.combine(np.uint64(session_seed), _TAG_PROBE, r) >> np.uint64(1)

    def probe_domain(self, domain: str, repeats: int, session_seed: int) -> dict[str, float]:
        """Per-GIC assignment frequency over ``repeats`` single-visit sessions.

        Repeat ``r`` is exactly ``run_session([domain], probe_seeds(seed, repeats)[r])``.
        """
        freq = self.probe_frequencies([domain], repeats, [session_seed])[0]
        return {g: float(f) for g, f in zip(self.roots, freq)}

    def probe_frequencies(self, domains: Sequence[str], repeats: int,
                          session_seeds: Sequence[int]) -> np.ndarray:
        """Vectorised ``probe_domain``, one seed per domain: (len(domains), n_roots)."""
        if repeats < 1:
            raise ValueError("repeats must be >= 1")
        out = np.zeros((len(domains), self._n_roots))
        zeros = np.zeros(repeats, dtype=np.uint64)
        rows = np.arange(repeats)
        for row, (d, seed) in enumerate(zip(domains, session_seeds)):
            i = self.index.get(registrable_domain(d))
            if i is None:
                continue
            keys = self._session_key(self.probe_seeds(seed, repeats))
            observed, fired, _ = self._fire(keys, np.full(repeats, i, dtype=np.int64), zeros)
            hit = self._broaden_many(keys) & observed[:, None]
            for e in range(fired.shape[1]):
                g = self.edge_gic[i, e]
                if g >= 0:
                    hit[rows[fired[:, e]], g] = True
            out[row] = hit.mean(axis=0)
        return out

    def _broaden_many(self, keys: np.ndarray) -> np.ndarray:
        """GICs broadening adds for each session key, assuming something was observed."""
        cfg = self.config
        table = np.zeros((len(keys), self._n_roots), dtype=bool)
        if cfg.broadening_rate <= 0 or cfg.extra_interest_max <= 0:
            return table
        on = rng.unit(rng.combine(keys, _TAG_BROADEN)) < cfg.broadening_rate
        count = 1 + (rng.unit(rng.combine(keys, _TAG_COUNT)) * cfg.extra_interest_max).astype(np.int64)
        count = np.minimum(count, self._n_roots)
        picks = rng.unit(rng.combine(keys[:, None], _TAG_PICK,
                                     np.arange(self._n_roots, dtype=np.uint64)[None, :]))
        rank = np.argsort(np.argsort(picks, axis=1, kind="stable"), axis=1, kind="stable")
        table[:] = (rank < count[:, None]) & on[:, None]
        return table

    # drift

    def advance_epoch(self, steps: int = 1) -> "TrackerSimulator":
        sim = self
        for _ in range(steps):
            sim = sim._advance_once()
        return sim

    def _advance_once(self) -> "TrackerSimulator":
        cfg = self.config
        nxt = self.epoch + 1
        if cfg.drift_rate <= 0:
            return TrackerSimulator(cfg, self.taxonomy, nxt)
        width = self.edge_gic.shape[1]
        keys = rng.combine(cfg.seed, _TAG_DRIFT, nxt, self.dhash[:, None],
                           np.arange(width, dtype=np.uint64)[None, :])
        hit = (rng.unit(keys) < cfg.drift_rate) & (self.edge_gic >= 0)
        gt = dict(cfg.ground_truth)
        for i in np.flatnonzero(hit.any(axis=1)):
            d = self.domains[i]
            edges = list(cfg.ground_truth[d])
            for e in np.flatnonzero(hit[i]):
                key = keys[i, e]
                g = int(rng.unit(rng.combine(key, 1)) * self._n_roots)
                pool = self._pools[g]
                leaf = pool[int(rng.unit(rng.combine(key, 2)) * len(pool))]
                root = self.roots[g]
                edges[e] = Edge(root, edges[e].theta, None if leaf == root else leaf)
            gt[d] = tuple(edges)
        return TrackerSimulator(replace(cfg, ground_truth=gt), self.taxonomy, nxt)


def run_session(sim: TrackerSimulator, urls: Sequence[str], session_seed: int) -> InterestProfile:
    return sim.run_session(urls, session_seed)


def probe_domain(sim: TrackerSimulator, domain: str, repeats: int, session_seed: int) -> dict[str, float]:
    return sim.probe_domain(domain, repeats, session_seed)


def advance_epoch(sim: TrackerSimulator) -> TrackerSimulator:
    return sim.advance_epoch()
