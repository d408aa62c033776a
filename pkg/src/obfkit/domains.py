"""URL to host / registrable-domain normalization.

Registrable domains come from the public suffix list snapshot bundled with
``tldextract``; no list is ever fetched over the network.
"""
from __future__ import annotations

import re
from functools import lru_cache
from urllib.parse import urlsplit

import tldextract

_extract = tldextract.TLDExtract(suffix_list_urls=(), cache_dir=None)

# plain "scheme://host[:port]/..." with no userinfo or IPv6 literal
_SIMPLE = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*://([A-Za-z0-9.-]+)(?::\d*)?(?:[/?#]|$)")


def host_of(url: str) -> str:
    """Lowercased hostname of ``url`` with port and credentials stripped.

    Bare hosts (``"bbc.co.uk"``) are accepted as well as full URLs.
    """
    text = url.strip()
    m = _SIMPLE.match(text)
    if m:
        return m.group(1).rstrip(".").lower()
    if "//" not in text:
        text = "//" + text
    host = urlsplit(text).hostname or ""
    return host.rstrip(".").lower()


@lru_cache(maxsize=200_000)
def _registrable(host: str) -> str:
    ext = _extract(host)
    if ext.domain and ext.suffix:
        return f"{ext.domain}.{ext.suffix}"
    # IPs, localhost, or a bare public suffix: keep the host itself
    return host


@lru_cache(maxsize=1_000_000)
def registrable_domain(url: str) -> str:
    host = host_of(url)
    if not host:
        raise ValueError(f"no host in {url!r}")
    return _registrable(host)


def display_host(url: str) -> str:
    """Host without a leading ``www.``, the granularity of top-site tables."""
    host = host_of(url)
    return host[4:] if host.startswith("www.") else host


def is_third_party(page_url: str, request_url: str) -> bool:
    return registrable_domain(page_url) != registrable_domain(request_url)
