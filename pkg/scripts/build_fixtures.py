"""Regenerate the request-log fixtures under src/obfkit/data/fixtures.

requests.jsonl.gz
    Five users whose sessions are built so that dedicated-tracker coverage is
    exactly 0.75, full-list coverage 0.83, one request in five is third
    party, and the median user collects 641 distinct cookies.
top_links.jsonl.gz
    One navigation per link, with the link counts of the top-linked-sites
    table plus a tail of smaller hosts.
alexa_2014.tsv
    Rank mapping for the top-linked hosts.
catalog_sample.tsv
    A small directory-style URL catalog.

Run: python3 scripts/build_fixtures.py
"""
from __future__ import annotations

import gzip
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "obfkit" / "data" / "fixtures"

# users -> (pages, distinct cookies)
USERS = [("alice", 100, 520), ("bob", 200, 600), ("carol", 100, 641), ("dave", 300, 700), ("erin", 100, 812)]
SITES = ["www.bbc.co.uk", "www.example-news.com", "blog.example.org", "www.shop.example.net", "forum.example.io"]
SAME_SITE = {"www.bbc.co.uk": "static.bbc.co.uk"}

TOP_LINKED = [
    ("imgur.com", 3173, 49), ("www.youtube.com", 2725, 3), ("www.theguardian.com", 1033, 134),
    ("www.nytimes.com", 854, 115), ("www.reuters.com", 686, 297), ("www.bbc.co.uk", 659, 62),
    ("www.washingtonpost.com", 587, 289), ("www.huffingtonpost.com", 554, 68),
    ("en.wikipedia.org", 480, 6), ("news.yahoo.com", 376, 4), ("www.flickr.com", 372, 107),
    ("www.reddit.com", 372, 50),
]


def _dump(path: Path, rows) -> None:
    # mtime=0 keeps the gzip bytes reproducible
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
        for row in rows:
            gz.write((json.dumps(row, sort_keys=True) + "\n").encode())


def request_log():
    rows = []
    for user, n_pages, n_cookies in USERS:
        third = []
        for p in range(n_pages):
            share = p / n_pages
            if share < 0.75:
                third.append("https://www.google-analytics.com/analytics.js")
            elif share < 0.83:
                third.append("https://www.youtube.com/embed/clip")
            else:
                third.append("https://connect.facebook.net/sdk.js")
        user_rows = []
        for p in range(n_pages):
            site = SITES[p % len(SITES)]
            page = f"https://{site}/{user}/page-{p:03d}"
            own = SAME_SITE.get(site, site)
            reqs = [page, f"https://{own}/style.css", f"https://{own}/app.js", f"http://{site}:8080/img.png",
                    third[p]]
            for r in reqs:
                user_rows.append({"user_id": user, "page_url": page, "request_url": r,
                                  "cookies": [], "referrer": page if r != page else None})
        for c in range(n_cookies):
            user_rows[c % len(user_rows)]["cookies"].append(f"ck{c:04d}")
        rows.extend(user_rows)
    _dump(OUT / "requests.jsonl.gz", rows)


def top_links_log():
    hosts = [(h, n) for h, n, _ in TOP_LINKED]
    hosts += [(f"www.tail-site-{k:02d}.com", 300 - 7 * k) for k in range(40)]
    rows = []
    for h, n in hosts:
        for i in range(n):
            url = f"https://{h}/link/{i:05d}"
            rows.append({"user_id": f"u{i % 506:04d}", "page_url": url, "request_url": url,
                         "cookies": [], "referrer": None})
    random.Random(7).shuffle(rows)
    _dump(OUT / "top_links.jsonl.gz", rows)
    with open(OUT / "alexa_2014.tsv", "w", encoding="utf-8") as fh:
        fh.write("host\trank\n")
        for h, _, rank in TOP_LINKED:
            fh.write(f"{h.removeprefix('www.')}\t{rank}\n")


def catalog():
    topics = {
        "Arts": ["film-archive", "jazz-notes", "gallery-walk"], "Business": ["ledger-daily", "supply-link"],
        "Computers": ["kernel-hub", "pixel-forge", "byte-bench"], "Games": ["dice-tower", "speedrun-log"],
        "Health": ["pulse-clinic", "trail-runner"], "Home": ["garden-plot", "tool-shed"],
        "News": ["wire-report", "city-bulletin"], "Recreation": ["camp-trails", "fish-report"],
        "Reference": ["word-origins", "atlas-maps"], "Science": ["star-charts", "lab-notes"],
        "Shopping": ["deal-finder", "gift-aisle"], "Society": ["family-circle", "civic-forum"],
        "Sports": ["box-score", "goal-line"],
    }
    with open(OUT / "catalog_sample.tsv", "w", encoding="utf-8") as fh:
        fh.write("# url<TAB>directory topic\n")
        for topic, names in topics.items():
            for name in names:
                fh.write(f"http://www.{name}.com/\tTop/{topic}\n")
                fh.write(f"http://www.{name}.com/about\tTop/{topic}\n")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    request_log()
    top_links_log()
    catalog()
