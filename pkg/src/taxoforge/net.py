"""Blocking HTTP GET with an explicit redirect and retry policy.

requests is used only as the transport; redirects are followed by hand so
hop and retry counts can be bounded exactly.
"""

import json
import logging
import threading
import time
from urllib.parse import urljoin

import requests

from taxoforge.config import HttpPolicy
from taxoforge.errors import DecodeError, HttpError, NetworkError, Timeout, TooManyRedirects

log = logging.getLogger(__name__)

USER_AGENT = "taxoforge/1.0"
REDIRECT_CODES = (301, 302, 303, 307, 308)

_local = threading.local()


def _session() -> requests.Session:
    s = getattr(_local, "session", None)
    if s is None:
        s = requests.Session()
        s.headers.update({"User-Agent": USER_AGENT, "Accept-Encoding": "gzip, deflate"})
        _local.session = s
    return s


def _fetch_hop(url, policy: HttpPolicy, session):
    """One hop: returns the response, retrying 5xx/timeouts at most
    retries_5xx times."""
    timeout = policy.timeout_ms / 1000 if policy.timeout_ms else None
    for attempt in range(policy.retries_5xx + 1):
        last_attempt = attempt == policy.retries_5xx
        try:
            resp = session.get(url, allow_redirects=False, timeout=timeout)
        except requests.Timeout:
            if last_attempt:
                raise Timeout(f"timed out fetching {url}") from None
        except requests.RequestException as exc:
            if last_attempt:
                raise NetworkError(f"{url}: {exc}") from None
        else:
            if resp.status_code < 500:
                return resp
            if last_attempt:
                raise HttpError(resp.status_code, url)
        delay = policy.backoff_base_ms * (2 ** attempt) / 1000
        log.debug("retry %d for %s in %.3fs", attempt + 1, url, delay)
        if delay:
            time.sleep(delay)
    raise AssertionError("unreachable")


def download(url: str, policy: HttpPolicy = HttpPolicy(), session=None) -> bytes:
    session = session or _session()
    hops = 0
    while True:
        resp = _fetch_hop(url, policy, session)
        status = resp.status_code
        if status in REDIRECT_CODES:
            location = resp.headers.get("Location")
            if not location:
                raise HttpError(status, url)
            if hops >= policy.max_redirects:
                raise TooManyRedirects(f"more than {policy.max_redirects} redirects from {url}")
            hops += 1
            url = urljoin(url, location)
            continue
        if 200 <= status < 300:
            return resp.content
        raise HttpError(status, url)


def get_json(url: str, policy: HttpPolicy = HttpPolicy(), session=None):
    body = download(url, policy, session)
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"malformed JSON from {url}: {exc}") from None
