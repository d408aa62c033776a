"""Baseline / recrawl / DGS experiment over a population.

Per user: a baseline session at epoch 0 gives the original profile; the
tracker then drifts for ``epochs`` epochs; every arm re-runs the user's
history (augmented with dummies for the DGS arms) and is compared to the
original.  Anti-profiles come from an association model learned on the
baseline observations only.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import association
from .association import Observation, domains_of
from .dgs import (DEFAULT_START, DirectRelationMap, UrlCatalog, build_direct_map, interleave,
                  load_catalog, random_dgs, static_dgs, weighted_dgs)
from .domains import registrable_domain
from .errors import FormatError, NoEvidence, ObfError, StrategyError
from .population import PopulationSpec, generate_population
from .profile import InterestProfile, breadth, diff, overlap
from .rng import derive_seed
from .taxonomy import Taxonomy, load_taxonomy
from .tracker_sim import TrackerConfig, TrackerSimulator

log = logging.getLogger(__name__)

MIN_URLS = 60
MIN_EXTERNAL = 60
MIN_DOMAINS = 20
MAX_URLS = 100
INTERNAL_HOSTS = ("reddit.com", "redd.it")

ARM_KINDS = ("recrawl", "random", "static", "weighted")


def filter_population(users: Sequence[tuple[str, Sequence[str]]],
                      internal=INTERNAL_HOSTS) -> list[tuple[str, list[str]]]:
    """Keep active, outward-linking, diverse users; cap each at 100 URLs."""
    kept = []
    for user_id, urls in users:
        urls = list(urls)[:MAX_URLS]
        if len(urls) < MIN_URLS:
            continue
        doms = [registrable_domain(u) for u in urls]
        external = sum(1 for d in doms if d not in internal)
        if external < MIN_EXTERNAL or len(set(doms)) < MIN_DOMAINS:
            continue
        kept.append((user_id, urls))
    return kept


@dataclass
class ArmSpec:
    label: str
    kind: str
    dummies: int = 0
    anti_size: int = 5

    @property
    def per_gic(self) -> int:
        return max(1, self.dummies // self.anti_size) if self.kind in ("static", "weighted") else 0


DEFAULT_ARMS = [
    ArmSpec("recrawl", "recrawl"),
    ArmSpec("random+25", "random", 25),
    ArmSpec("static+25", "static", 25, 5),
    ArmSpec("weighted+25", "weighted", 25, 5),
    ArmSpec("static+50", "static", 50, 10),
]


@dataclass
class ExperimentConfig:
    master_seed: int = 42
    n_users: int = 506
    population: dict = field(default_factory=dict)
    observations: str | None = None
    tracker: str | None = None
    catalog: str | None = None
    taxonomy: str = "default"
    arms: list[ArmSpec] = field(default_factory=lambda: [ArmSpec(**asdict(a)) for a in DEFAULT_ARMS])
    epochs: int = 1
    epsilon: float = association.DEFAULT_EPSILON
    start_index: int = DEFAULT_START
    probe_repeats: int = 200
    probe_threshold: float = 0.05
    overlap_metric: str = "jaccard"
    filter_users: bool | None = None

    def __post_init__(self):
        for arm in self.arms:
            if arm.kind not in ARM_KINDS:
                raise ValueError(f"arm {arm.label!r}: unknown kind {arm.kind!r}")
            if arm.kind != "recrawl" and arm.dummies <= 0:
                raise ValueError(f"arm {arm.label!r}: dummy count must be positive")
            if arm.kind in ("static", "weighted") and not 1 <= arm.anti_size <= 24:
                raise ValueError(f"arm {arm.label!r}: anti-profile size out of range")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        arms = data.pop("arms", None)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise FormatError(f"unknown experiment settings: {sorted(unknown)}")
        if arms is not None:
            data["arms"] = [ArmSpec(**a) for a in arms]
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise FormatError(f"cannot read experiment config {path}: {exc}") from exc

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


@dataclass
class UserRecord:
    user_id: str
    arm: str
    breadth: int
    new: int | None = None
    lost: int | None = None
    overlap: float | None = None
    status: str = "ok"


@dataclass
class ArmRow:
    arm: str
    mean_gic: float
    sd_gic: float
    mean_new: float | None
    sd_new: float | None
    mean_lost: float | None
    sd_lost: float | None
    n: int
    failed: int = 0
    mean_overlap: float | None = None


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=float)
    sd = float(arr.std(ddof=1)) if len(arr) > 1 else math.nan
    return float(arr.mean()), sd


def aggregate(records: Sequence[UserRecord], arm_order: Sequence[str]) -> list[ArmRow]:
    rows = []
    for arm in arm_order:
        recs = [r for r in records if r.arm == arm]
        ok = [r for r in recs if r.status == "ok"]
        mg, sg = _mean_sd([r.breadth for r in ok])
        if arm == "orig":
            mn = sn = ml = sl = None
            mo = None
        else:
            mn, sn = _mean_sd([r.new for r in ok])
            ml, sl = _mean_sd([r.lost for r in ok])
            ov = [r.overlap for r in ok if r.overlap is not None and not math.isnan(r.overlap)]
            mo = float(np.mean(ov)) if ov else None
        rows.append(ArmRow(arm, mg, sg, mn, sn, ml, sl, len(ok), len(recs) - len(ok), mo))
    return rows


@dataclass
class ExperimentReport:
    rows: list[ArmRow]
    records: list[UserRecord]
    config_digest: str = ""
    notes: dict = field(default_factory=dict)

    def row(self, arm: str) -> ArmRow:
        for r in self.rows:
            if r.arm == arm:
                return r
        raise KeyError(arm)

    @property
    def arms(self) -> list[str]:
        return [r.arm for r in self.rows]

    def check_consistency(self, tol: float = 1e-9) -> bool:
        again = aggregate(self.records, self.arms)
        for a, b in zip(self.rows, again):
            for name in ("mean_gic", "sd_gic", "mean_new", "sd_new", "mean_lost", "sd_lost", "mean_overlap"):
                x, y = getattr(a, name), getattr(b, name)
                if x is None or y is None:
                    if x is not y:
                        return False
                elif not (math.isnan(x) and math.isnan(y)) and abs(x - y) > tol:
                    return False
            if (a.n, a.failed) != (b.n, b.failed):
                return False
        return True

    def aborted_arms(self) -> list[str]:
        return [r.arm for r in self.rows if r.n == 0 and r.failed > 0]

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "rows": [asdict(r) for r in self.rows],
            "records": [asdict(r) for r in self.records],
            "notes": self.notes,
        }


# experiment context shared by workers

@dataclass
class _Context:
    config: ExperimentConfig
    base_sim: TrackerSimulator
    test_sim: TrackerSimulator
    model: association.AssociationModel | None
    catalog: UrlCatalog | None
    direct: DirectRelationMap | None

    def seed(self, *parts) -> int:
        return derive_seed(self.config.master_seed, *parts)


_CTX: _Context | None = None


def _init_worker(ctx: _Context):
    global _CTX
    _CTX = ctx


def _evaluate_user(args) -> list[UserRecord]:
    user_id, urls, base_bits = args
    ctx = _CTX
    cfg = ctx.config
    tax = ctx.base_sim.taxonomy
    base = InterestProfile(base_bits, tax.taxonomy_id, tax.roots)
    out = []
    doms = domains_of(urls)
    for arm in cfg.arms:
        try:
            hist = list(urls)
            if arm.kind == "random":
                plan = random_dgs(ctx.catalog, arm.dummies, ctx.seed(user_id, arm.label, "plan"))
            elif arm.kind in ("static", "weighted"):
                anti = association.anti_profile(ctx.model, doms, arm.anti_size)
                seed = ctx.seed(user_id, arm.label, "plan")
                if arm.kind == "static":
                    plan = static_dgs(ctx.direct, anti, arm.per_gic, seed)
                else:
                    plan = weighted_dgs(ctx.model, anti, arm.per_gic, seed)
            else:
                plan = None
            if plan is not None:
                hist = interleave(hist, plan, min(cfg.start_index, len(hist)))
            # same session seed as the baseline: real visits share their draws across arms
            test = ctx.test_sim.run_session(hist, ctx.seed(user_id, "baseline", "session"))
        except (StrategyError, NoEvidence) as exc:
            out.append(UserRecord(user_id, arm.label, 0, status=f"failed: {exc}"))
            continue
        d = diff(base, test)
        try:
            ov = overlap(base, test, cfg.overlap_metric)
        except ObfError:
            ov = math.nan
        out.append(UserRecord(user_id, arm.label, breadth(test), len(d.new), len(d.lost), ov))
    return out


@dataclass
class PreparedPopulation:
    users: list[tuple[str, list[str]]]
    config: TrackerConfig
    catalog: UrlCatalog | None
    taxonomy: Taxonomy


def prepare_population(cfg: ExperimentConfig, taxonomy: Taxonomy | None = None) -> PreparedPopulation:
    taxonomy = taxonomy or load_taxonomy(cfg.taxonomy)
    if cfg.observations:
        users = [(o["user_id"], o["urls"]) for o in read_observations_raw(cfg.observations)]
        if not cfg.tracker:
            raise FormatError("an observation file needs a tracker config to replay against")
        tracker = TrackerConfig.load(cfg.tracker)
        catalog = load_catalog(cfg.catalog) if cfg.catalog else None
        do_filter = True if cfg.filter_users is None else cfg.filter_users
    else:
        spec = PopulationSpec.from_dict(cfg.population)
        pop = generate_population(taxonomy, cfg.n_users, spec, derive_seed(cfg.master_seed, "population"))
        users = pop.url_lists()
        tracker = pop.config
        catalog = load_catalog(cfg.catalog) if cfg.catalog else pop.catalog
        do_filter = bool(cfg.filter_users)
    if do_filter:
        users = filter_population(users)
    return PreparedPopulation(users, tracker, catalog, taxonomy)


def baseline_profiles(prep: PreparedPopulation, master_seed: int) -> tuple[TrackerSimulator, list[InterestProfile]]:
    sim = TrackerSimulator(prep.config, prep.taxonomy)
    profiles = [sim.run_session(urls, derive_seed(master_seed, uid, "baseline", "session"))
                for uid, urls in prep.users]
    return sim, profiles


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, taxonomy: Taxonomy | None = None,
                   prepared: PreparedPopulation | None = None) -> ExperimentReport:
    prep = prepared or prepare_population(cfg, taxonomy)
    if not prep.users:
        raise ObfError("population is empty after filtering")
    base_sim, base_profiles = baseline_profiles(prep, cfg.master_seed)
    test_sim = base_sim.advance_epoch(cfg.epochs)

    kinds = {a.kind for a in cfg.arms}
    model = None
    if kinds & {"static", "weighted"}:
        obs = [Observation.from_urls(uid, urls, p) for (uid, urls), p in zip(prep.users, base_profiles)
               if breadth(p) > 0]
        model = association.learn(obs, cfg.epsilon)
    if "random" in kinds and prep.catalog is None:
        raise FormatError("random arms need a URL catalog")
    direct = None
    if "static" in kinds:
        if prep.catalog is None:
            raise FormatError("static arms need candidate domains from a URL catalog")
        direct = build_direct_map(test_sim, prep.catalog.domains(), cfg.probe_repeats,
                                  cfg.probe_threshold, derive_seed(cfg.master_seed, "probe"))

    ctx = _Context(cfg, base_sim, test_sim, model, prep.catalog, direct)
    records = [UserRecord(uid, "orig", breadth(p)) for (uid, _), p in zip(prep.users, base_profiles)]
    work = [(uid, urls, p.bits) for (uid, urls), p in zip(prep.users, base_profiles)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(ctx,)) as pool:
            per_user = list(pool.map(_evaluate_user, work, chunksize=max(1, len(work) // (jobs * 4))))
    else:
        _init_worker(ctx)
        per_user = [_evaluate_user(w) for w in work]
    for recs in per_user:
        records.extend(recs)

    arm_order = ["orig"] + [a.label for a in cfg.arms]
    notes = {
        "n_users": len(prep.users),
        "empty_baseline_profiles": sum(1 for p in base_profiles if breadth(p) == 0),
    }
    if direct is not None:
        notes["direct_map_bucket_sizes"] = {g: len(v) for g, v in direct.buckets.items()}
    return ExperimentReport(aggregate(records, arm_order), records, cfg.digest(), notes)


# rendering

CSV_HEADER = ["arm", "mean_gic", "sd_gic", "mean_new", "sd_new", "mean_lost", "sd_lost", "n"]


def _fmt(x: float | None) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.6f}"


def _cell(mean: float | None, sd: float | None) -> str:
    if mean is None:
        return "/"
    sd_txt = "nan" if sd is None or math.isnan(sd) else f"{sd:.2f}"
    return f"{mean:.2f} ({sd_txt})"


def summarize(report: ExperimentReport, fmt: str = "table") -> str:
    if not report.rows:
        raise ValueError("empty report")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in report.rows:
            w.writerow([r.arm, _fmt(r.mean_gic), _fmt(r.sd_gic), _fmt(r.mean_new), _fmt(r.sd_new),
                        _fmt(r.mean_lost), _fmt(r.sd_lost), r.n])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=1, sort_keys=True, allow_nan=True) + "\n"
    if fmt == "table":
        lines = [f"{'':<14}{'GIC':>14}{'new':>14}{'lost':>14}{'n':>6}"]
        for r in report.rows:
            lines.append(f"{r.arm:<14}{_cell(r.mean_gic, r.sd_gic):>14}{_cell(r.mean_new, r.sd_new):>14}"
                         f"{_cell(r.mean_lost, r.sd_lost):>14}{r.n:>6}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


# observation files

def read_observations_raw(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj.get("urls"), list) or "user_id" not in obj:
                    raise ValueError("need user_id and a urls list")
            except (json.JSONDecodeError, ValueError, AttributeError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            out.append(obj)
    return out


def read_observations(path: str | Path, taxonomy: Taxonomy) -> list[Observation]:
    obs = []
    for lineno, raw in enumerate(read_observations_raw(path), start=1):
        try:
            profile = InterestProfile.from_gics(raw.get("gics", []), taxonomy)
            obs.append(Observation.from_urls(str(raw["user_id"]), raw["urls"], profile))
        except (ObfError, ValueError) as exc:
            raise FormatError(f"{path}: user {raw.get('user_id')!r}: {exc}") from exc
    return obs


def write_observations(path: str | Path, users: Sequence[tuple[str, Sequence[str]]],
                       profiles: Sequence[InterestProfile] | None = None) -> None:
    """One JSON line per user; ``gics`` is empty when no profiles are given."""
    if profiles is not None and len(profiles) != len(users):
        raise ValueError("need one profile per user")
    with open(path, "w", encoding="utf-8") as fh:
        for i, (uid, urls) in enumerate(users):
            gics = profiles[i].ordered_gics() if profiles is not None else []
            fh.write(json.dumps({"user_id": uid, "urls": list(urls), "gics": gics}) + "\n")
