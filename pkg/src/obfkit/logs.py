"""Statistics over recorded browsing-session request logs.

The core format is JSONL, one request per line::

    {"user_id": "u1", "page_url": "https://www.nytimes.com/a",
     "request_url": "https://stats.g.doubleclick.net/x.js",
     "cookies": ["IDE"], "referrer": "https://www.nytimes.com/a"}

``page_url`` is the first-party navigation the request belongs to.  HAR
captures can be turned into this shape with :func:`har_to_records`.
"""
from __future__ import annotations

import gzip
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .domains import display_host, registrable_domain
from .errors import FormatError, LookupFailure
from .taxonomy import data_dir

log = logging.getLogger(__name__)

BUILTIN_LISTS = ("google-dedicated", "google-all")


@dataclass(frozen=True)
class RequestRecord:
    user_id: str
    page_url: str
    request_url: str
    cookies_set: tuple[str, ...] = ()
    referrer: str | None = None
    page_domain: str = field(default="", compare=False)
    request_domain: str = field(default="", compare=False)

    def __post_init__(self):
        # derived fields are always recomputed; whatever a caller passed is ignored
        object.__setattr__(self, "page_domain", registrable_domain(self.page_url))
        object.__setattr__(self, "request_domain", registrable_domain(self.request_url))

    @property
    def is_third_party(self) -> bool:
        return self.page_domain != self.request_domain

    def to_dict(self) -> dict:
        return {"user_id": self.user_id, "page_url": self.page_url, "request_url": self.request_url,
                "cookies": list(self.cookies_set), "referrer": self.referrer}


@dataclass(frozen=True)
class TrackerDomainList:
    label: str
    domains: frozenset[str]

    def __post_init__(self):
        if not self.domains:
            raise ValueError(f"tracker list {self.label!r} is empty")
        bad = [d for d in self.domains if d != d.lower() or registrable_domain(d) != d]
        if bad:
            raise ValueError(f"tracker list {self.label!r} has non-registrable entries: {sorted(bad)}")

    def __contains__(self, domain: str) -> bool:
        return domain in self.domains

    def __len__(self) -> int:
        return len(self.domains)


def load_tracker_list(source: str | Path) -> TrackerDomainList:
    """A bundled list by name (``google-dedicated``, ``google-all``) or a newline-delimited file."""
    if str(source) in BUILTIN_LISTS:
        path = data_dir() / "trackers" / f"{source}.txt"
        label = str(source)
    else:
        path = Path(source)
        label = path.stem
    if not path.exists():
        raise LookupFailure(f"no tracker list at {path}")
    domains = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            d = line.lower()
            if registrable_domain(d) != d:
                raise FormatError(f"{path}:{lineno}: {line!r} is not a registrable domain")
            domains.add(d)
    if not domains:
        raise FormatError(f"{path}: tracker list is empty")
    return TrackerDomainList(label, frozenset(domains))


def _open_text(path: Path) -> IO[str]:
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def _parse(obj) -> RequestRecord:
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    for key in ("user_id", "page_url", "request_url"):
        if not isinstance(obj.get(key), str) or not obj[key].strip():
            raise ValueError(f"missing or empty {key!r}")
    cookies = obj.get("cookies") or []
    if not isinstance(cookies, list) or not all(isinstance(c, str) for c in cookies):
        raise ValueError("'cookies' must be a list of names")
    ref = obj.get("referrer")
    if ref is not None and not isinstance(ref, str):
        raise ValueError("'referrer' must be a string or null")
    return RequestRecord(obj["user_id"], obj["page_url"].strip(), obj["request_url"].strip(),
                         tuple(cookies), ref or None)


def ingest(log_path: str | Path, lenient: bool = False) -> list[RequestRecord]:
    """Parse a JSONL request log (optionally gzipped).

    A malformed line raises :class:`FormatError` naming the line; with
    ``lenient`` it is logged and skipped instead.
    """
    path = Path(log_path)
    if not path.exists():
        raise FormatError(f"no such log file: {path}")
    records = []
    skipped = 0
    with _open_text(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                records.append(_parse(json.loads(raw)))
            except (ValueError, TypeError) as exc:  # JSONDecodeError is a ValueError
                msg = f"{path}:{lineno}: {exc}"
                if not lenient:
                    raise FormatError(msg) from None
                skipped += 1
                log.warning("skipping %s", msg)
    if skipped:
        log.warning("%s: skipped %d malformed line(s)", path, skipped)
    return records


def write_records(records: Iterable[RequestRecord], path: str | Path) -> None:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wt", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def _require(records: Sequence[RequestRecord]) -> None:
    if not records:
        raise ValueError("no request records")


@dataclass(frozen=True)
class RatioReport:
    per_user: dict[str, float]
    mean: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "per_user": dict(sorted(self.per_user.items()))}


def tracker_coverage(records: Sequence[RequestRecord], tracker_list: TrackerDomainList) -> RatioReport:
    """Per user, the share of distinct pages during which a listed domain was contacted."""
    _require(records)
    pages: dict[str, set[str]] = defaultdict(set)
    hit: dict[str, set[str]] = defaultdict(set)
    for r in records:
        pages[r.user_id].add(r.page_url)
        if r.request_domain in tracker_list:
            hit[r.user_id].add(r.page_url)
    per_user = {u: len(hit[u]) / len(p) for u, p in pages.items()}
    return RatioReport(per_user, float(np.mean(list(per_user.values()))))


@dataclass(frozen=True)
class ThirdPartyReport:
    ratio: float
    per_user: dict[str, float]

    def to_dict(self) -> dict:
        return {"ratio": self.ratio, "per_user": dict(sorted(self.per_user.items()))}


def third_party_ratio(records: Sequence[RequestRecord]) -> ThirdPartyReport:
    """Share of all requests served from a domain other than the page's own."""
    _require(records)
    total: Counter = Counter()
    third: Counter = Counter()
    for r in records:
        total[r.user_id] += 1
        third[r.user_id] += r.is_third_party
    per_user = {u: third[u] / n for u, n in total.items()}
    return ThirdPartyReport(sum(third.values()) / sum(total.values()), per_user)


@dataclass(frozen=True)
class CookieStats:
    per_user: dict[str, int]
    median: float
    q1: float
    q3: float

    def to_dict(self) -> dict:
        return {"median": self.median, "q1": self.q1, "q3": self.q3,
                "per_user": dict(sorted(self.per_user.items()))}


def cookie_stats(records: Sequence[RequestRecord]) -> CookieStats:
    """Distinct (request domain, cookie name) pairs issued to each user."""
    _require(records)
    pairs: dict[str, set[tuple[str, str]]] = defaultdict(set)
    for r in records:
        bucket = pairs[r.user_id]  # users without cookies still count, as 0
        for name in r.cookies_set:
            bucket.add((r.request_domain, name))
    per_user = {u: len(p) for u, p in pairs.items()}
    counts = np.array(list(per_user.values()), dtype=float)
    q1, med, q3 = np.percentile(counts, [25, 50, 75])
    return CookieStats(per_user, float(med), float(q1), float(q3))


@dataclass(frozen=True)
class TopDomain:
    rank: int
    domain: str
    links: int
    alexa_rank: int | None = None


def load_rank_mapping(path: str | Path) -> dict[str, int]:
    """``host<TAB or comma>rank`` lines; a non-numeric first row is taken as a header."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.replace("\t", ",").split(",")]
            if len(parts) < 2:
                raise FormatError(f"{path}:{lineno}: expected host and rank")
            try:
                out[display_host(parts[0])] = int(parts[1])
            except ValueError:
                if lineno == 1:
                    continue
                raise FormatError(f"{path}:{lineno}: rank {parts[1]!r} is not an integer") from None
    return out


def top_domains(records: Sequence[RequestRecord], k: int = 12,
                alexa: dict[str, int] | None = None) -> list[TopDomain]:
    """Rank page hosts by the number of distinct links (user, page) that land on them."""
    _require(records)
    if k < 1:
        raise ValueError("k must be >= 1")
    links = {(r.user_id, r.page_url) for r in records}
    counts = Counter(display_host(page) for _, page in links)
    ranked = sorted(counts.items(), key=lambda t: (-t[1], t[0]))[:k]
    alexa = alexa or {}
    return [TopDomain(i + 1, host, n, alexa.get(host)) for i, (host, n) in enumerate(ranked)]


def _har_cookie_names(items) -> list[str]:
    return [c["name"] for c in items or [] if isinstance(c, dict) and c.get("name")]


def har_to_records(har_path: str | Path, user_id: str) -> list[RequestRecord]:
    """Convert a HAR capture into request records.

    Each entry is attributed to its ``pageref``.  The page URL is the page
    title when that looks like a URL, otherwise the first request logged for
    the page.  Cookie names come from the response's ``cookies`` (falling back
    to ``Set-Cookie`` headers).
    """
    path = Path(har_path)
    try:
        with _open_text(path) as fh:
            data = json.load(fh)
        entries = data["log"]["entries"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a HAR file ({exc})") from None
    pages = {}
    for p in data["log"].get("pages", []) or []:
        title = str(p.get("title", ""))
        if "://" in title:
            pages[p.get("id")] = title
    out = []
    for n, e in enumerate(entries):
        try:
            req = e["request"]
            url = req["url"]
        except (KeyError, TypeError):
            raise FormatError(f"{path}: entry {n} has no request URL") from None
        ref = e.get("pageref")
        page = pages.setdefault(ref, url) if ref is not None else url
        headers = {h.get("name", "").lower(): h.get("value") for h in req.get("headers", [])}
        resp = e.get("response") or {}
        names = _har_cookie_names(resp.get("cookies"))
        if not names:
            for h in resp.get("headers", []) or []:
                if h.get("name", "").lower() == "set-cookie" and "=" in h.get("value", ""):
                    names.extend(line.split("=", 1)[0].strip() for line in h["value"].splitlines())
        try:
            out.append(RequestRecord(user_id, page, url, tuple(names), headers.get("referer")))
        except ValueError as exc:
            raise FormatError(f"{path}: entry {n}: {exc}") from None
    return out
