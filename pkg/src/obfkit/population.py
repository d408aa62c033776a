"""Synthetic user populations and the tracker ground truth that goes with them.

Users get a latent interest set, a browsing list drawn from popular hub
sites plus topical domains of their interests, and the tracker learns
noisy domain -> GIC edges.  Latent interest rates are then fitted in a few
rounds so that the GIC occurrence rates the *tracker* reports (not the
latent ones) land on the requested marginals.
"""
from __future__ import annotations

import logging
import re
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dgs import UrlCatalog
from .domains import registrable_domain
from .errors import GenerationError, LookupFailure
from .rng import derive_seed
from .taxonomy import Taxonomy
from .tracker_sim import Edge, TrackerConfig, TrackerSimulator

log = logging.getLogger(__name__)

# share of users with at least one interest under each root, in root order
TARGET_RATES = {
    "Arts & Entertainment": 0.80,
    "News": 0.67,
    "Games": 0.54,
    "Law & Government": 0.47,
    "Finance": 0.45,
    "Computers & Electronics": 0.43,
    "Internet & Telecom": 0.43,
    "Sports": 0.42,
    "Business & Industrial": 0.40,
    "People & Society": 0.32,
    "Science": 0.26,
    "Shopping": 0.24,
    "Travel": 0.22,
    "Autos & Vehicles": 0.22,
    "Food & Drink": 0.21,
    "Beauty & Fitness": 0.20,
    "Jobs & Education": 0.20,
    "Reference": 0.18,
    "Online Communities": 0.18,
    "Pets & Animals": 0.16,
    "Books & Literature": 0.12,
    "Home & Garden": 0.12,
    "Hobbies & Leisure": 0.06,
    "Real Estate": 0.02,
}


@dataclass
class HubSpec:
    host: str
    include_prob: float
    link_weight: float
    edges: list[tuple[str, float]] = field(default_factory=list)


NEWS_EDGES = [("News", 0.10), ("Law & Government", 0.06), ("Business & Industrial", 0.03)]

DEFAULT_HUBS = [
    HubSpec("imgur.com", 0.45, 6.0, [("Arts & Entertainment", 0.03), ("Online Communities", 0.02)]),
    HubSpec("youtube.com", 0.55, 5.0, [("Arts & Entertainment", 0.10), ("Games", 0.03)]),
    HubSpec("theguardian.com", 0.30, 3.0, NEWS_EDGES),
    HubSpec("nytimes.com", 0.28, 3.0, NEWS_EDGES),
    HubSpec("reuters.com", 0.25, 2.5, NEWS_EDGES + [("Finance", 0.04)]),
    HubSpec("bbc.co.uk", 0.25, 2.5, NEWS_EDGES),
    HubSpec("washingtonpost.com", 0.24, 2.5, NEWS_EDGES),
    HubSpec("huffingtonpost.com", 0.24, 2.3, NEWS_EDGES + [("People & Society", 0.03)]),
    HubSpec("en.wikipedia.org", 0.30, 1.5, [("Reference", 0.04), ("Science", 0.03)]),
    HubSpec("news.yahoo.com", 0.20, 1.8, [("News", 0.08), ("Finance", 0.04)]),
    HubSpec("flickr.com", 0.18, 2.0, [("Arts & Entertainment", 0.03), ("Hobbies & Leisure", 0.01)]),
    HubSpec("reddit.com", 0.30, 1.2, [("Online Communities", 0.05), ("Internet & Telecom", 0.03)]),
]


@dataclass
class PopulationSpec:
    """Marginals, population shape, and tracker noise knobs."""

    gic_rates: dict[str, float] = field(default_factory=lambda: dict(TARGET_RATES))
    url_mean: float = 96.0
    url_sd: float = 13.72
    url_min: int = 60
    url_max: int = 100
    domain_mean: float = 44.0
    domain_sd: float = 14.85
    domain_min: int = 20
    # topical domains per root: pool_min + pool_scale * rate
    pool_min: int = 244
    pool_scale: float = 600.0
    zipf_exponent: float = 1.3
    interest_concentration: float = 2.0
    # per-user lognormal activity multiplier on interest probabilities (0 = none)
    interest_dispersion: float = 0.06
    # users devote more of their browsing to rarer interests: share weight ~ rate ** -boost
    rare_interest_boost: float = 0.29
    link_sigma: float = 0.81
    # per-root primary emission probability: theta_low + span * (rate / max rate) ** theta_power
    theta_low: float = 0.4
    theta_high: float = 1.0
    theta_power: float = 1.0
    theta_jitter: float = 0.3
    # emission falls off with a domain's popularity rank inside its root: (rank + 1) ** -decay
    theta_rank_decay: float = 0.8
    secondary_prob: float = 0.1
    secondary_theta: float = 0.0415
    coverage: float = 0.75
    broadening_rate: float = 0.2
    extra_interest_max: int = 2
    drift_rate: float = 0.0152
    leaf_pool_size: int = 12
    leaf_spread: float = 0.43
    catalog_per_gic: int = 60
    catalog_untracked: int = 982
    calibration_rounds: int = 3
    noiseless: bool = False
    hubs: list[HubSpec] = field(default_factory=lambda: [HubSpec(**asdict(h)) for h in DEFAULT_HUBS])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PopulationSpec":
        data = dict(data)
        hubs = data.pop("hubs", None)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise GenerationError(f"unknown population settings: {sorted(unknown)}")
        spec = cls(**data)
        if hubs is not None:
            spec.hubs = [HubSpec(h["host"], h["include_prob"], h["link_weight"],
                                 [tuple(e) for e in h.get("edges", [])]) for h in hubs]
        return spec


@dataclass
class SyntheticUser:
    user_id: str
    urls: list[str]
    interests: frozenset[str]


@dataclass
class Population:
    users: list[SyntheticUser]
    config: TrackerConfig
    catalog: UrlCatalog
    latent_rates: dict[str, float]

    def url_lists(self) -> list[tuple[str, list[str]]]:
        return [(u.user_id, u.urls) for u in self.users]

    def __iter__(self):
        # (url lists, tracker config), the pair callers usually want
        yield self.url_lists()
        yield self.config


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


def _validate(taxonomy: Taxonomy, spec: PopulationSpec) -> np.ndarray:
    rates = np.zeros(len(taxonomy.roots))
    for g, r in spec.gic_rates.items():
        try:
            j = taxonomy.root_index(g)
        except LookupFailure as exc:
            raise GenerationError(str(exc)) from None
        if not 0.0 <= r <= 1.0 or not np.isfinite(r):
            raise GenerationError(f"marginal for {g!r} is not a probability: {r}")
        rates[j] = r
    if rates.sum() <= 0:
        raise GenerationError("all marginals are zero; no user could have an interest")
    if spec.url_min > spec.url_max or spec.domain_min > spec.url_max:
        raise GenerationError("URL/domain count bounds are inconsistent")
    for h in spec.hubs:
        for g, theta in h.edges:
            if g not in taxonomy.roots:
                raise GenerationError(f"hub {h.host!r} references unknown GIC {g!r}")
            if not 0.0 <= theta <= 1.0:
                raise GenerationError(f"hub {h.host!r}: theta {theta} is not a probability")
    return rates


class _World:
    """Domain vocabulary, edges, and catalog: everything not user specific."""

    def __init__(self, taxonomy: Taxonomy, spec: PopulationSpec, rates: np.ndarray, seed: int):
        g = np.random.default_rng(derive_seed(seed, "world"))
        roots = taxonomy.roots
        n_roots = len(roots)
        self.pools: list[list[str]] = []
        self.pool_weights: list[np.ndarray] = []
        gt: dict[str, tuple[Edge, ...]] = {}
        leaf_pools: dict[str, tuple[str, ...]] = {}
        for j, root in enumerate(roots):
            desc = taxonomy.descendants(root)
            leaf_pools[root] = tuple(desc[: spec.leaf_pool_size]) if desc else (root,)

        sec_weights = rates / rates.sum()
        top = rates.max()
        for j, root in enumerate(roots):
            size = int(spec.pool_min + round(spec.pool_scale * rates[j]))
            names = [f"{_slug(root)}-{k:04d}.com" for k in range(size)]
            self.pools.append(names)
            w = 1.0 / (np.arange(1, size + 1) ** spec.zipf_exponent)
            self.pool_weights.append(w / w.sum())
            mu = spec.theta_low + (spec.theta_high - spec.theta_low) * (rates[j] / top) ** spec.theta_power
            jitter = np.exp(spec.theta_jitter * g.standard_normal(size) - spec.theta_jitter ** 2 / 2)
            jitter *= np.arange(1, size + 1) ** -spec.theta_rank_decay
            sec_hit = g.random(size) < spec.secondary_prob
            sec_gic = g.choice(n_roots, size=size, p=sec_weights)
            pool = leaf_pools[root]
            leaf_pick = g.integers(0, len(pool), size)
            sec_leaf = g.random(size)
            for k, name in enumerate(names):
                leaf = pool[leaf_pick[k]]
                leaf = None if leaf == root else leaf
                if spec.noiseless:
                    gt[name] = (Edge(root, 1.0, leaf),)
                    continue
                edges = [Edge(root, float(np.clip(mu * jitter[k], 0.005, 1.0)), leaf)]
                if sec_hit[k] and sec_gic[k] != j:
                    r2 = roots[sec_gic[k]]
                    p2 = leaf_pools[r2]
                    l2 = p2[int(sec_leaf[k] * len(p2))]
                    edges.append(Edge(r2, spec.secondary_theta, None if l2 == r2 else l2))
                gt[name] = tuple(edges)

        self.hub_domains = []
        for h in spec.hubs:
            d = registrable_domain(h.host)
            self.hub_domains.append(d)
            if spec.noiseless or not h.edges:
                gt.setdefault(d, ())
                continue
            edges = []
            for e, (root, theta) in enumerate(h.edges):
                pool = leaf_pools[root]
                leaf = pool[derive_seed(seed, "hubleaf", h.host, e) % len(pool)]
                edges.append(Edge(root, float(theta), None if leaf == root else leaf))
            gt[d] = tuple(edges)
        # domains without edges stay out of the ground truth: the tracker never observes them
        self.ground_truth = {d: e for d, e in gt.items() if e}
        self.leaf_pools = leaf_pools

        entries = []
        for j, root in enumerate(roots):
            pool = self.pools[j]
            take = min(spec.catalog_per_gic, len(pool))
            for name in g.choice(pool, size=take, replace=False):
                entries.append((f"http://www.{name}/", root))
        labels = g.integers(0, n_roots, spec.catalog_untracked)
        for k in range(spec.catalog_untracked):
            entries.append((f"http://www.dir-listing-{k:05d}.org/", roots[labels[k]]))
        self.catalog = UrlCatalog(entries, source="synthetic-directory")


def _user(i: int, interests: np.ndarray, world: _World, spec: PopulationSpec,
          roots: Sequence[str], seed: int, rates: np.ndarray) -> SyntheticUser:
    g = np.random.default_rng(derive_seed(seed, "user", i))
    n_urls = int(np.clip(round(g.normal(spec.url_mean, spec.url_sd)), spec.url_min, spec.url_max))
    n_dom = int(np.clip(round(g.normal(spec.domain_mean, spec.domain_sd)), spec.domain_min, n_urls))
    hub_u = g.random(len(spec.hubs))
    link_u = g.standard_normal(n_urls)
    order_seed = int(g.integers(1 << 62))

    hubs = [k for k, h in enumerate(spec.hubs) if hub_u[k] < h.include_prob]
    chosen = np.flatnonzero(interests)
    n_topical = max(n_dom - len(hubs), len(chosen))
    while hubs and len(hubs) + n_topical > n_urls:
        hubs.pop()
    n_topical = min(n_topical, n_urls - len(hubs))

    domains: list[str] = []
    weights: list[float] = []
    if len(chosen):
        focus = np.maximum(rates[chosen], 1e-3) ** -spec.rare_interest_boost
        share = g.dirichlet(spec.interest_concentration * focus / focus.mean())
        counts = 1 + g.multinomial(max(n_topical - len(chosen), 0), share)
        for j, c in zip(chosen, counts):
            pool = world.pools[j]
            c = min(int(c), len(pool))
            keys = np.log(world.pool_weights[j]) - np.log(-np.log(g.random(len(pool))))
            for k in np.argsort(-keys)[:c]:
                domains.append(pool[k])
    hosts = [f"www.{d}" for d in domains] + [spec.hubs[k].host for k in hubs]
    weights = list(np.exp(spec.link_sigma * link_u[: len(domains)]))
    weights += [spec.hubs[k].link_weight for k in hubs]

    n_links = np.ones(len(hosts), dtype=int)
    extra = n_urls - len(hosts)
    if extra > 0 and hosts:
        w = np.asarray(weights)
        n_links += g.multinomial(extra, w / w.sum())
    urls = []
    for host, n in zip(hosts, n_links):
        stem = host.split(".")[-2] if "." in host else host
        for k in range(int(n)):
            urls.append(f"https://{host}/{stem}/u{i:04d}-{k}")
    perm = np.random.default_rng(order_seed).permutation(len(urls))
    urls = [urls[p] for p in perm]
    return SyntheticUser(f"u{i:04d}", urls, frozenset(roots[j] for j in chosen))


def generate_population(taxonomy: Taxonomy, n_users: int, spec: PopulationSpec | None = None,
                        seed: int = 0) -> Population:
    if n_users < 1:
        raise GenerationError("n_users must be >= 1")
    spec = spec or PopulationSpec()
    target = _validate(taxonomy, spec)
    roots = taxonomy.roots
    world = _World(taxonomy, spec, target, seed)
    if spec.noiseless:
        config = TrackerConfig(world.ground_truth, coverage=1.0, broadening_rate=0.0,
                               extra_interest_max=spec.extra_interest_max, drift_rate=0.0,
                               seed=derive_seed(seed, "tracker"), leaf_pools=world.leaf_pools)
    else:
        config = TrackerConfig(world.ground_truth, coverage=spec.coverage,
                               broadening_rate=spec.broadening_rate,
                               extra_interest_max=spec.extra_interest_max,
                               drift_rate=spec.drift_rate, seed=derive_seed(seed, "tracker"),
                               leaf_spread=spec.leaf_spread, leaf_pools=world.leaf_pools)
    sim = TrackerSimulator(config, taxonomy)

    g = np.random.default_rng(derive_seed(seed, "interests"))
    u = g.random((n_users, len(roots)))
    s = spec.interest_dispersion
    activity = np.exp(s * g.standard_normal(n_users) - s * s / 2)
    q = target.copy()
    members = _memberships(u, _scaled(q, activity), target)
    users = [_user(i, members[i], world, spec, roots, seed, target) for i in range(n_users)]

    rounds = 0 if spec.noiseless else spec.calibration_rounds
    for _ in range(rounds):
        bits = np.array([sim.run_session(usr.urls, derive_seed(seed, "calibrate", usr.user_id)).bits
                         for usr in users], dtype=float)
        q = _refit(q, target, members, bits)
        new = _memberships(u, _scaled(q, activity), target)
        changed = np.flatnonzero((new != members).any(axis=1))
        members = new
        for i in changed:
            users[i] = _user(int(i), members[i], world, spec, roots, seed, target)
    return Population(users, config, world.catalog, {r: float(v) for r, v in zip(roots, q)})


def _scaled(q: np.ndarray, activity: np.ndarray) -> np.ndarray:
    """Per-user, per-root probabilities min(1, base * activity) whose column means equal ``q``."""
    lo = np.zeros_like(q)
    hi = np.full_like(q, 1.0 / max(activity.min(), 1e-9))
    for _ in range(50):
        mid = (lo + hi) / 2
        mean = np.minimum(1.0, np.outer(activity, mid)).mean(axis=0)
        low = mean < q
        lo = np.where(low, mid, lo)
        hi = np.where(low, hi, mid)
    return np.minimum(1.0, np.outer(activity, (lo + hi) / 2))


def _memberships(u: np.ndarray, q: np.ndarray, target: np.ndarray) -> np.ndarray:
    m = u < q
    empty = ~m.any(axis=1)
    if empty.any():
        # everybody has at least one interest; pick the one the user was closest to
        with np.errstate(divide="ignore"):
            ratio = np.where(target > 0, u[empty] / np.maximum(q[empty], 1e-12), np.inf)
        m[np.flatnonzero(empty), np.argmin(ratio, axis=1)] = True
    return m


def _refit(q: np.ndarray, target: np.ndarray, members: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Solve rate = q * hit + (1 - q) * background for q, per root."""
    out = q.copy()
    for j in range(len(q)):
        inside = members[:, j]
        hit = bits[inside, j].mean() if inside.any() else 1.0
        background = bits[~inside, j].mean() if (~inside).any() else 0.0
        if hit - background > 1e-6:
            out[j] = (target[j] - background) / (hit - background)
    return np.clip(out, 0.0, 1.0)
