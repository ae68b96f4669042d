"""Word relatedness from ConceptNet and the Google N-gram Viewer.

Relatedness values are fetched per word pair, aggregated over the
object-word x state-word cross product (max or mean), and normalized into
two conditional probability matrices:

    object_given_state  -- shape (N_objects, N_states), columns sum to 1
    state_given_object  -- shape (N_states, N_objects), columns sum to 1

Every fetched value lands in a JSON cache keyed "source|w1|w2"; a cache hit
never touches the network, so a committed cache file doubles as an offline
fixture. The HTTP client is deliberately polite: sequential requests,
>= 200 ms spacing per host, 3 retries with exponential backoff.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlsplit

import numpy as np
import requests

from .catalog import ClassCatalog, LabelEntry

SOURCES = ("conceptnet", "ngram")
AGGREGATIONS = ("max", "mean")

CONCEPTNET_URL = "http://api.conceptnet.io/relatedness"
NGRAM_URL = "https://books.google.com/ngrams/json"
NGRAM_YEAR_START = 1970
NGRAM_YEAR_END = 2008
NGRAM_CORPUS = "en-2019"

DEFAULT_EPSILON = 1e-6


class KnowledgeError(Exception):
    """Base class for knowledge-layer failures."""


class FetchError(KnowledgeError):
    """Network unavailable (or offline) and the pair is not cached."""


class SourceError(KnowledgeError):
    """The API answered with a non-success HTTP status."""


class ResponseParseError(KnowledgeError):
    """The API answered 200 but the body is not in the expected shape."""


class MatrixMismatchError(KnowledgeError):
    """Persisted matrix belongs to a different catalog."""


@dataclass(frozen=True)
class RelatednessRecord:
    object_word: str
    state_word: str
    source: str
    value: float

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        if not np.isfinite(self.value) or self.value < 0:
            raise ValueError(f"relatedness value must be finite and >= 0, got {self.value}")


class RelatednessCache:
    """JSON-file map from 'source|w1|w2' to relatedness value."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._values: dict[str, float] = {}

    @staticmethod
    def key(source: str, w1: str, w2: str) -> str:
        return f"{source}|{w1}|{w2}"

    @classmethod
    def load(cls, path: str | Path) -> "RelatednessCache":
        cache = cls(path)
        p = Path(path)
        if p.exists():
            data = json.loads(p.read_text(encoding="utf-8"))
            if not isinstance(data, dict):
                raise KnowledgeError(f"{p}: cache must be a JSON object")
            cache._values = {str(k): float(v) for k, v in data.items()}
        return cache

    def get(self, source: str, w1: str, w2: str) -> float | None:
        return self._values.get(self.key(source, w1, w2))

    def put(self, source: str, w1: str, w2: str, value: float) -> None:
        self._values[self.key(source, w1, w2)] = float(value)

    def save(self, path: str | Path | None = None) -> None:
        target = Path(path) if path is not None else self.path
        if target is None:
            raise ValueError("cache has no path to save to")
        payload = json.dumps(self._values, indent=2, sort_keys=True)
        target.write_text(payload + "\n", encoding="utf-8")

    def __len__(self) -> int:
        return len(self._values)

    def missing_pairs(self, catalog: ClassCatalog, source: str) -> list[tuple[str, str]]:
        """Word pairs from the catalog cross product absent from the cache."""
        missing = []
        for obj in catalog.objects:
            for state in catalog.states:
                for ow in obj.words:
                    for sw in state.words:
                        if self.get(source, ow, sw) is None:
                            missing.append((ow, sw))
        return missing


def _concept_term(word: str) -> str:
    # Multi-word phrases become underscore-joined concept terms.
    return "_".join(word.strip().lower().split())


class _HostThrottle:
    """Minimum spacing between requests to the same host."""

    def __init__(self, min_interval: float):
        self.min_interval = min_interval
        self._last: dict[str, float] = {}

    def wait(self, url: str) -> None:
        host = urlsplit(url).netloc
        last = self._last.get(host)
        if last is not None:
            remaining = self.min_interval - (time.monotonic() - last)
            if remaining > 0:
                time.sleep(remaining)
        self._last[host] = time.monotonic()


@dataclass
class RawRelatednessMatrix:
    """Aggregated relatedness grid, rows = objects, cols = states."""

    source: str
    agg: str
    values: np.ndarray
    catalog_fingerprint: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.agg not in AGGREGATIONS:
            raise ValueError(f"agg must be one of {AGGREGATIONS}, got {self.agg!r}")
        if self.values.ndim != 2:
            raise ValueError("raw matrix must be 2-D")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("raw matrix entries must be finite and >= 0")


DIRECTIONS = ("object_given_state", "state_given_object")


@dataclass
class ConditionalMatrix:
    """Column-stochastic conditional probabilities.

    Columns index the conditioning axis: for object_given_state, column j
    holds P(object_i | state_j) over all objects; for state_given_object,
    column j holds P(state_i | object_j).
    """

    direction: str
    values: np.ndarray
    epsilon: float
    catalog_fingerprint: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if self.values.ndim != 2:
            raise ValueError("conditional matrix must be 2-D")
        if np.any(self.values < 0) or np.any(self.values > 1 + 1e-12):
            raise ValueError("conditional probabilities must lie in [0, 1]")
        sums = self.values.sum(axis=0)
        if not np.allclose(sums, 1.0, atol=1e-9, rtol=0):
            worst = float(np.max(np.abs(sums - 1.0)))
            raise ValueError(f"columns must sum to 1 (worst deviation {worst:.3e})")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


class KnowledgeClient:
    """Fetches, caches, and aggregates relatedness values.

    Pass offline=True to forbid network access entirely; cache misses then
    raise FetchError instead of opening a connection.
    """

    def __init__(
        self,
        cache: RelatednessCache,
        session=None,
        offline: bool = False,
        min_interval: float = 0.2,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 10.0,
    ):
        self.cache = cache
        self._session = session
        self.offline = offline
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._throttle = _HostThrottle(min_interval)

    @property
    def session(self):
        if self._session is None:
            self._session = requests.Session()
        return self._session

    def _get_json(self, url: str, params: dict):
        """GET with retry/backoff. Returns parsed JSON, or None on 404."""
        last_exc = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            self._throttle.wait(url)
            try:
                resp = self.session.get(url, params=params, timeout=self.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code == 404:
                return None
            if 500 <= resp.status_code < 600:
                last_exc = SourceError(f"{url}: HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise SourceError(f"{url}: HTTP {resp.status_code}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ResponseParseError(f"{url}: body is not JSON ({exc})") from None
        raise FetchError(f"{url}: giving up after {self.retries + 1} attempts ({last_exc})")

    def _fetch_conceptnet(self, w1: str, w2: str) -> float:
        params = {"node1": f"/c/en/{_concept_term(w1)}", "node2": f"/c/en/{_concept_term(w2)}"}
        data = self._get_json(CONCEPTNET_URL, params)
        if data is None:
            return 0.0  # missing pair: no relatedness evidence
        if not isinstance(data, dict) or not isinstance(data.get("value"), (int, float)):
            raise ResponseParseError(f"conceptnet response for ({w1}, {w2}) has no numeric 'value'")
        # API range is [-1, 1]; negative relatedness carries no probability
        # mass, and self-relatedness is capped at 1.
        return float(min(max(data["value"], 0.0), 1.0))

    def _fetch_ngram_order(self, phrase: str) -> float:
        params = {
            "content": phrase,
            "year_start": NGRAM_YEAR_START,
            "year_end": NGRAM_YEAR_END,
            "corpus": NGRAM_CORPUS,
            "smoothing": 0,
        }
        data = self._get_json(NGRAM_URL, params)
        if data is None or data == []:
            return 0.0
        if not isinstance(data, list):
            raise ResponseParseError(f"ngram response for {phrase!r} is not a list")
        series = data[0].get("timeseries") if isinstance(data[0], dict) else None
        if not isinstance(series, list) or not series:
            raise ResponseParseError(f"ngram response for {phrase!r} has no timeseries")
        return float(np.mean([float(v) for v in series]))

    def _fetch_ngram(self, w1: str, w2: str) -> float:
        # Both word orders are queried; co-occurrence in either order counts.
        forward = self._fetch_ngram_order(f"{w1} {w2}")
        reverse = self._fetch_ngram_order(f"{w2} {w1}")
        return max(forward, reverse)

    def fetch_pair(self, w1: str, w2: str, source: str) -> RelatednessRecord:
        """Relatedness of (object word, state word); cache hit short-circuits."""
        if source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {source!r}")
        cached = self.cache.get(source, w1, w2)
        if cached is not None:
            return RelatednessRecord(w1, w2, source, cached)
        if self.offline:
            raise FetchError(f"offline: no cached value for {source}|{w1}|{w2}")
        if source == "conceptnet":
            value = self._fetch_conceptnet(w1, w2)
        else:
            value = self._fetch_ngram(w1, w2)
        self.cache.put(source, w1, w2, value)
        return RelatednessRecord(w1, w2, source, value)

    def aggregate_pair(self, object_entry: LabelEntry, state_entry: LabelEntry, source: str, agg: str) -> float:
        """Max or mean relatedness over the word-set cross product."""
        if agg not in AGGREGATIONS:
            raise ValueError(f"agg must be one of {AGGREGATIONS}, got {agg!r}")
        values = []
        for ow in object_entry.words:
            for sw in state_entry.words:
                try:
                    values.append(self.fetch_pair(ow, sw, source).value)
                except KnowledgeError as exc:
                    raise type(exc)(f"pair ({ow!r}, {sw!r}): {exc}") from None
        return max(values) if agg == "max" else float(np.mean(values))

    def build_raw_matrix(self, catalog: ClassCatalog, source: str, agg: str) -> RawRelatednessMatrix:
        values = np.zeros((catalog.n_objects, catalog.n_states))
        for i, obj in enumerate(catalog.objects):
            for j, state in enumerate(catalog.states):
                try:
                    values[i, j] = self.aggregate_pair(obj, state, source, agg)
                except KnowledgeError as exc:
                    raise type(exc)(f"cell ({obj.name}, {state.name}): {exc}") from None
        return RawRelatednessMatrix(source, agg, values, catalog.fingerprint())


def normalize(raw: RawRelatednessMatrix, epsilon: float = DEFAULT_EPSILON) -> tuple[ConditionalMatrix, ConditionalMatrix]:
    """Additive-epsilon smoothing, then per-column / per-row normalization.

    Returns (object_given_state, state_given_object). The first divides each
    state column by its sum so objects compete per state; the second divides
    each object row by its sum so states compete per object.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    smoothed = raw.values + epsilon
    col_sums = smoothed.sum(axis=0)
    row_sums = smoothed.sum(axis=1)
    if np.any(col_sums == 0) or np.any(row_sums == 0):
        raise ValueError("zero row/column sum; use epsilon > 0 to smooth unknown pairs")
    object_given_state = ConditionalMatrix(
        direction="object_given_state",
        values=smoothed / col_sums,
        epsilon=epsilon,
        catalog_fingerprint=raw.catalog_fingerprint,
    )
    state_given_object = ConditionalMatrix(
        direction="state_given_object",
        values=(smoothed / row_sums[:, None]).T,
        epsilon=epsilon,
        catalog_fingerprint=raw.catalog_fingerprint,
    )
    return object_given_state, state_given_object


def save_matrices(
    path: str | Path,
    object_given_state: ConditionalMatrix,
    state_given_object: ConditionalMatrix,
    source: str | None = None,
    agg: str | None = None,
) -> None:
    if object_given_state.catalog_fingerprint != state_given_object.catalog_fingerprint:
        raise MatrixMismatchError("matrices belong to different catalogs")
    payload = {
        "catalog_fingerprint": object_given_state.catalog_fingerprint,
        "source": source,
        "agg": agg,
        "epsilon": object_given_state.epsilon,
        "object_given_state": object_given_state.values.tolist(),
        "state_given_object": state_given_object.values.tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_matrices(
    path: str | Path,
    expected_fingerprint: str | None = None,
) -> tuple[ConditionalMatrix, ConditionalMatrix]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    fingerprint = data["catalog_fingerprint"]
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise MatrixMismatchError(
            f"{path}: matrices were built for catalog {fingerprint}, expected {expected_fingerprint}"
        )
    epsilon = float(data["epsilon"])
    ogs = ConditionalMatrix("object_given_state", np.array(data["object_given_state"]), epsilon, fingerprint)
    sgo = ConditionalMatrix("state_given_object", np.array(data["state_given_object"]), epsilon, fingerprint)
    if ogs.values.shape != sgo.values.shape[::-1]:
        raise MatrixMismatchError(f"{path}: matrix shapes disagree")
    return ogs, sgo
