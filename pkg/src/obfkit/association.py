"""Domain/GIC association model.

``learn`` counts how often each domain co-occurs with each GIC across
observed users and turns the counts into smoothed conditionals
P(domain | GIC).  ``reconstruct`` scores every GIC for a new domain list by
summing log-conditionals (a naive-Bayes product without a prior), and
``anti_profile`` reads the same ranking from the bottom.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domains import registrable_domain
from .errors import FormatError, IncompatibleProfiles, InsufficientData, LookupFailure, NoEvidence
from .profile import InterestProfile
from .taxonomy import Taxonomy

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1.0
# scores closer than this are tied and fall back to GIC order
TIE_DECIMALS = 9


@dataclass(frozen=True)
class Observation:
    user_id: str
    domains: frozenset[str]
    profile: InterestProfile

    def __post_init__(self):
        if not self.domains:
            raise ValueError(f"observation {self.user_id!r} has no domains")

    @classmethod
    def from_urls(cls, user_id: str, urls: Iterable[str], profile: InterestProfile) -> "Observation":
        return cls(user_id, domains_of(urls), profile)


def domains_of(urls: Iterable[str]) -> frozenset[str]:
    return frozenset(registrable_domain(u) for u in urls)


class AssociationModel:
    """Co-occurrence counts plus the smoothing needed to read them as P(d|j)."""

    def __init__(self, domains: Sequence[str], counts: np.ndarray, gic_counts: np.ndarray,
                 epsilon: float, roots: Sequence[str], taxonomy_id: str):
        self.domains = tuple(domains)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.gic_counts = np.asarray(gic_counts, dtype=np.int64)
        self.epsilon = float(epsilon)
        self.roots = tuple(roots)
        self.taxonomy_id = taxonomy_id
        self.index = {d: i for i, d in enumerate(self.domains)}
        self._gic_index = {g: i for i, g in enumerate(self.roots)}
        v = len(self.domains)
        self._denom = self.gic_counts + self.epsilon * v
        self._probs: np.ndarray | None = None
        self._logp: np.ndarray | None = None

    @property
    def domain_vocab(self) -> frozenset[str]:
        return frozenset(self.domains)

    @property
    def probs(self) -> np.ndarray:
        """(vocab, GIC) matrix of P(d|j)."""
        if self._probs is None:
            with np.errstate(divide="ignore", invalid="ignore"):
                self._probs = (self.counts + self.epsilon) / self._denom
        return self._probs

    @property
    def log_probs(self) -> np.ndarray:
        if self._logp is None:
            self._logp = np.log(self.probs)
        return self._logp

    def gic_index(self, gic: str) -> int:
        try:
            return self._gic_index[gic]
        except KeyError:
            raise LookupFailure(f"unknown GIC {gic!r}") from None

    def floor(self, gic: str) -> float:
        j = self.gic_index(gic)
        return self.epsilon / self._denom[j]

    def probability(self, domain: str, gic: str) -> float:
        j = self.gic_index(gic)
        i = self.index.get(domain)
        if i is None:
            return self.epsilon / self._denom[j]
        return float(self.probs[i, j])

    def column(self, gic: str) -> np.ndarray:
        return self.probs[:, self.gic_index(gic)]

    def known(self, domains: Iterable[str]) -> list[int]:
        return sorted({self.index[d] for d in domains if d in self.index})


@dataclass(frozen=True)
class ReconstructionResult:
    scores: dict[str, float]
    ranked: list[str]
    top_k_profile: InterestProfile


def learn(observations: Sequence[Observation], epsilon: float = DEFAULT_EPSILON,
          taxonomy: Taxonomy | None = None) -> AssociationModel:
    if not observations:
        raise InsufficientData("insufficient data: cannot learn an association model from zero observations")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    first = observations[0].profile
    roots, tid = first.roots, first.taxonomy_id
    if taxonomy is not None and taxonomy.taxonomy_id != tid:
        raise IncompatibleProfiles("observations do not match the given taxonomy")
    vocab = sorted({d for o in observations for d in o.domains})
    index = {d: i for i, d in enumerate(vocab)}
    counts = np.zeros((len(vocab), len(roots)), dtype=np.int64)
    for obs in observations:
        if obs.profile.taxonomy_id != tid:
            raise IncompatibleProfiles(f"observation {obs.user_id!r} uses another taxonomy")
        bits = np.asarray(obs.profile.bits, dtype=bool)
        if not bits.any():
            raise InsufficientData(f"observation {obs.user_id!r} has an empty profile")
        rows = [index[d] for d in obs.domains]
        counts[np.ix_(rows, np.flatnonzero(bits))] += 1
    gic_counts = counts.sum(axis=0)
    return AssociationModel(vocab, counts, gic_counts, epsilon, roots, tid)


def _ranking(scores: np.ndarray) -> np.ndarray:
    # descending score, then ascending GIC index
    q = np.round(scores, TIE_DECIMALS)
    return np.lexsort((np.arange(len(q)), -q))


def _scores(model: AssociationModel, domains: Iterable[str]) -> np.ndarray:
    rows = model.known(domains)
    if not rows:
        raise NoEvidence("none of the domains is in the model vocabulary")
    return model.log_probs[rows].sum(axis=0)


def reconstruct(model: AssociationModel, domains: Iterable[str], k: int = 8) -> ReconstructionResult:
    n = len(model.roots)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}]")
    s = _scores(model, domains)
    order = _ranking(s)
    ranked = [model.roots[i] for i in order]
    bits = np.zeros(n, dtype=int)
    bits[order[:k]] = 1
    profile = InterestProfile(tuple(int(b) for b in bits), model.taxonomy_id, model.roots)
    return ReconstructionResult({g: float(v) for g, v in zip(model.roots, s)}, ranked, profile)


def anti_profile(model: AssociationModel, domains: Iterable[str], m: int = 5) -> list[str]:
    """The ``m`` least likely GICs, least likely first."""
    n = len(model.roots)
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}]")
    order = _ranking(_scores(model, domains))
    return [model.roots[i] for i in order[::-1][:m]]


@dataclass
class CVReport:
    folds: int
    k: int
    mean_correct: float
    per_fold: list[float]
    per_user: dict[str, int] = field(repr=False)
    no_evidence: int = 0

    def to_dict(self) -> dict:
        return {
            "folds": self.folds,
            "k": self.k,
            "mean_correct": self.mean_correct,
            "per_fold": self.per_fold,
            "no_evidence": self.no_evidence,
            "per_user": self.per_user,
        }


def fold_assignment(n: int, folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def cross_validate(observations: Sequence[Observation], folds: int = 10, k: int = 8,
                   epsilon: float = DEFAULT_EPSILON, seed: int = 0, jobs: int = 1) -> CVReport:
    """k-fold CV of top-k reconstruction against the observed GIC sets.

    Held-out users whose domains are all unseen fall back to ranking GICs
    by training-set frequency; they are counted in ``no_evidence``.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if len(observations) < folds:
        raise InsufficientData(f"{len(observations)} observations cannot fill {folds} folds")
    parts = fold_assignment(len(observations), folds, seed)

    def run_fold(test_idx: np.ndarray):
        test = set(test_idx.tolist())
        train = [o for i, o in enumerate(observations) if i not in test]
        model = learn(train, epsilon)
        popular = _ranking(model.gic_counts.astype(float))[:k]
        out = {}
        missing = 0
        for i in test_idx:
            obs = observations[i]
            try:
                top = set(reconstruct(model, obs.domains, k).top_k_profile.gics)
            except NoEvidence:
                missing += 1
                top = {model.roots[j] for j in popular}
            out[obs.user_id] = len(top & obs.profile.gics)
        return out, missing

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_fold, parts))
    else:
        results = [run_fold(p) for p in parts]

    per_user: dict[str, int] = {}
    per_fold = []
    missing = 0
    for out, miss in results:
        per_user.update(out)
        per_fold.append(float(np.mean(list(out.values()))))
        missing += miss
    mean = float(np.mean(list(per_user.values())))
    return CVReport(folds, k, mean, per_fold, per_user, missing)


# persistence

def save_model(model: AssociationModel, csv_path: str | Path) -> Path:
    """Write the CSV of stored probabilities and its JSON sidecar."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["domain", "gic_id", "probability"])
        rows, cols = np.nonzero(model.counts)
        for i, j in zip(rows, cols):
            w.writerow([model.domains[i], model.roots[j], repr(float(model.probs[i, j]))])
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps({
        "epsilon": model.epsilon,
        "gic_counts": {g: int(c) for g, c in zip(model.roots, model.gic_counts)},
        "vocab_size": len(model.domains),
        "taxonomy_id": model.taxonomy_id,
    }, indent=2) + "\n", encoding="utf-8")
    return csv_path


def load_model(csv_path: str | Path) -> AssociationModel:
    csv_path = Path(csv_path)
    try:
        meta = json.loads(csv_path.with_suffix(".json").read_text(encoding="utf-8"))
        roots = list(meta["gic_counts"])
        gic_counts = np.array([meta["gic_counts"][g] for g in roots], dtype=np.int64)
        eps = float(meta["epsilon"])
        vocab_size = int(meta["vocab_size"])
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"bad model sidecar for {csv_path}: {exc}") from exc
    gidx = {g: j for j, g in enumerate(roots)}
    entries = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["domain", "gic_id", "probability"]:
            raise FormatError(f"{csv_path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                d, g, p = row
                entries.append((d, gidx[g], float(p)))
            except (ValueError, KeyError) as exc:
                raise FormatError(f"{csv_path}:{lineno}: {exc}") from exc
    domains = sorted({d for d, _, _ in entries})
    if len(domains) != vocab_size:
        raise FormatError(f"{csv_path}: sidecar says {vocab_size} domains, CSV has {len(domains)}")
    index = {d: i for i, d in enumerate(domains)}
    counts = np.zeros((len(domains), len(roots)), dtype=np.int64)
    denom = gic_counts + eps * vocab_size
    for d, j, p in entries:
        counts[index[d], j] = int(round(p * denom[j] - eps))
    return AssociationModel(domains, counts, gic_counts, eps, roots, meta["taxonomy_id"])
