"""Dummy generation strategies and the interleaving of dummies into a history.

* random: uniform picks from a URL catalog.
* static: domains that, visited alone, were seen to trigger an anti-profile GIC.
* weighted: domains drawn by the learned P(domain | GIC), so indirect
  associations count too.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .domains import registrable_domain
from .errors import CapacityError, FormatError, StrategyError
from .rng import derive_seed

if TYPE_CHECKING:
    from .association import AssociationModel
    from .tracker_sim import TrackerSimulator

log = logging.getLogger(__name__)

STRATEGIES = ("random", "static", "weighted")
DEFAULT_START = 80
_URL = re.compile(r"^https?://[^\s/?#]+\.[^\s/?#]+(?:[/?#]\S*)?$", re.IGNORECASE)


@dataclass(frozen=True)
class UrlCatalog:
    entries: list[tuple[str, str | None]]
    source: str = "catalog"

    def __post_init__(self):
        if not self.entries:
            raise ValueError("URL catalog is empty")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def urls(self) -> list[str]:
        return [u for u, _ in self.entries]

    def domains(self) -> list[str]:
        """Distinct registrable domains, in first-seen order."""
        seen = {}
        for u, _ in self.entries:
            seen.setdefault(registrable_domain(u), None)
        return list(seen)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for url, topic in self.entries:
                fh.write(f"{url}\t{topic or ''}\n")


def _valid_url(url: str) -> bool:
    if not _URL.match(url):
        return False
    try:
        registrable_domain(url)
    except ValueError:
        return False
    return True


def load_catalog(path: str | Path) -> UrlCatalog:
    """Read ``url<TAB>topic`` lines; the topic column may be empty or absent."""
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            url, _, topic = line.partition("\t")
            url = url.strip()
            if not _valid_url(url):
                raise FormatError(f"{path}:{lineno}: not a URL: {url!r}")
            if url in seen:
                continue
            seen.add(url)
            entries.append((url, topic.strip() or None))
    if not entries:
        raise FormatError(f"{path}: catalog has no entries")
    return UrlCatalog(entries, source=str(path))


_ODP_PAGE = re.compile(r'<ExternalPage\s+about="([^"]+)"')
_ODP_TOPIC = re.compile(r"<topic>([^<]*)</topic>")


def load_odp_rdf(path: str | Path, limit: int | None = None) -> UrlCatalog:
    """Stream an Open Directory ``content.rdf.u8`` style dump.

    Only ``ExternalPage`` URLs and their ``topic`` are kept.  The dump is not
    always well-formed XML, so it is scanned line by line.
    """
    entries = []
    current = None
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line in fh:
            m = _ODP_PAGE.search(line)
            if m:
                if current is not None:
                    entries.append((current, None))
                current = m.group(1)
                if not _valid_url(current):
                    current = None
                continue
            t = _ODP_TOPIC.search(line)
            if t and current is not None:
                entries.append((current, t.group(1)))
                current = None
                if limit and len(entries) >= limit:
                    break
    if current is not None and not (limit and len(entries) >= limit):
        entries.append((current, None))
    if not entries:
        raise FormatError(f"{path}: no ExternalPage entries found")
    return UrlCatalog(entries, source=str(path))


@dataclass
class DirectRelationMap:
    buckets: dict[str, list[str]]
    repeats: int
    threshold: float
    frequencies: dict[str, dict[str, float]] = field(default_factory=dict, repr=False)
    _warned: set = field(default_factory=set, repr=False, compare=False)

    def bucket(self, gic: str) -> list[str]:
        return self.buckets.get(gic, [])


@dataclass(frozen=True)
class DummyPlan:
    strategy: str
    urls: tuple[str, ...]
    target_gics: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "target_gics": list(self.target_gics), "urls": list(self.urls)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "DummyPlan":
        try:
            strategy = data["strategy"]
            if strategy not in STRATEGIES:
                raise ValueError(f"unknown strategy {strategy!r}")
            return cls(strategy, tuple(data["urls"]), tuple(data.get("target_gics", ())))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad dummy plan: {exc}") from exc


def _url(domain: str) -> str:
    return f"http://{domain}/"


def random_dgs(catalog: UrlCatalog, n: int, seed: int) -> DummyPlan:
    urls = list(dict.fromkeys(catalog.urls))
    if n > len(urls):
        raise CapacityError(f"asked for {n} URLs from a catalog of {len(urls)}")
    picks = np.random.default_rng(seed).choice(len(urls), size=n, replace=False)
    return DummyPlan("random", tuple(urls[i] for i in picks))


def build_direct_map(sim: "TrackerSimulator", candidate_domains: Sequence[str], repeats: int = 100,
                     threshold: float = 0.5, seed: int = 0) -> DirectRelationMap:
    """Probe every candidate alone and keep (GIC, domain) pairs seen often enough."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if not candidate_domains:
        raise ValueError("no candidate domains to probe")
    domains = list(dict.fromkeys(registrable_domain(d) for d in candidate_domains))
    seeds = [derive_seed(seed, "probe", d) for d in domains]
    freq = sim.probe_frequencies(domains, repeats, seeds)
    buckets: dict[str, list[tuple[float, str]]] = {g: [] for g in sim.roots}
    observed: dict[str, dict[str, float]] = {}
    for d, row in zip(domains, freq):
        hits = {sim.roots[j]: float(f) for j, f in enumerate(row) if f > 0}
        if hits:
            observed[d] = hits
        for g, f in hits.items():
            if f >= threshold:
                buckets[g].append((f, d))
    ordered = {g: [d for _, d in sorted(v, key=lambda t: (-t[0], t[1]))] for g, v in buckets.items()}
    return DirectRelationMap(ordered, repeats, threshold, observed)


def static_dgs(relation_map: DirectRelationMap, anti: Sequence[str], per_gic: int, seed: int) -> DummyPlan:
    if per_gic < 1:
        raise ValueError("per_gic must be >= 1")
    if not anti:
        raise ValueError("anti-profile is empty")
    g = np.random.default_rng(seed)
    urls = []
    for gic in anti:
        bucket = relation_map.bucket(gic)
        if not bucket:
            raise StrategyError(f"no directly related domain for GIC {gic!r}")
        if len(bucket) < per_gic:
            if (gic, per_gic) not in relation_map._warned:
                relation_map._warned.add((gic, per_gic))
                log.warning("bucket for %r has %d domains, reusing some for %d picks",
                            gic, len(bucket), per_gic)
            picks = g.choice(len(bucket), size=per_gic, replace=True)
        else:
            picks = g.choice(len(bucket), size=per_gic, replace=False)
        urls.extend(_url(bucket[i]) for i in picks)
    return DummyPlan("static", tuple(urls), tuple(anti))


def weighted_dgs(model: "AssociationModel", anti: Sequence[str], per_gic: int, seed: int) -> DummyPlan:
    if per_gic < 1:
        raise ValueError("per_gic must be >= 1")
    if not anti:
        raise ValueError("anti-profile is empty")
    vocab = len(model.domains)
    if vocab == 0:
        raise ValueError("model has an empty vocabulary")
    g = np.random.default_rng(seed)
    taken = np.zeros(vocab, dtype=bool)
    urls = []
    for gic in anti:
        j = model.gic_index(gic)
        w = model.probs[:, j].copy()
        if not model.counts[:, j].any():
            log.warning("GIC %r never co-occurred with any domain; sampling uniformly", gic)
            w = np.ones(vocab)
        w[taken] = 0.0
        available = int((w > 0).sum())
        if available < per_gic:
            raise StrategyError(f"only {available} unused domains left for GIC {gic!r}")
        picks = g.choice(vocab, size=per_gic, replace=False, p=w / w.sum())
        taken[picks] = True
        urls.extend(_url(model.domains[i]) for i in picks)
    return DummyPlan("weighted", tuple(urls), tuple(anti))


def interleave(history: Sequence[str], plan: DummyPlan | Iterable[str], start_index: int = DEFAULT_START,
               dummy_first: bool = False) -> list[str]:
    """Alternate real and dummy URLs from ``start_index``; leftovers go at the end."""
    dummies = list(plan.urls if isinstance(plan, DummyPlan) else plan)
    history = list(history)
    if not 0 <= start_index <= len(history):
        raise ValueError(f"start_index {start_index} outside [0, {len(history)}]")
    out = history[:start_index]
    real = history[start_index:]
    i = j = 0
    while i < len(real) and j < len(dummies):
        if dummy_first:
            out.append(dummies[j])
            out.append(real[i])
        else:
            out.append(real[i])
            out.append(dummies[j])
        i += 1
        j += 1
    out.extend(real[i:])
    out.extend(dummies[j:])
    return out
