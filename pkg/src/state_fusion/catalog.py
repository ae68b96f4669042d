"""Object and state label spaces with per-label query word sets.

The catalog fixes the canonical index order for everything downstream:
position in the file is position in every confidence vector, marginal
vector, and conditional matrix. Catalogs are immutable after load and safe
to share across threads.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path


class CatalogError(Exception):
    """Malformed catalog file or entry."""


class UnknownLabelError(CatalogError):
    """Label name not present in the catalog."""


KINDS = ("object", "state")


@dataclass(frozen=True)
class LabelEntry:
    """One label plus the lowercase words used for knowledge queries.

    Names and words are normalized to lowercase (knowledge APIs are
    lowercase-keyed). The label's own name is implicitly prepended to the
    word set when omitted.
    """

    name: str
    words: tuple[str, ...] = ()

    def __post_init__(self):
        name = self.name.strip().lower()
        if not name:
            raise CatalogError("label name is empty")
        words = [w.strip().lower() for w in self.words]
        if any(not w for w in words):
            raise CatalogError(f"label {name!r}: empty word after trimming")
        if len(set(words)) != len(words):
            dupes = sorted({w for w in words if words.count(w) > 1})
            raise CatalogError(f"label {name!r}: duplicate words {dupes}")
        if name not in words:
            words.insert(0, name)
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "words", tuple(words))


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered object and state label lists; file order is canonical order."""

    objects: tuple[LabelEntry, ...]
    states: tuple[LabelEntry, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        objects = tuple(self.objects)
        states = tuple(self.states)
        if not objects or not states:
            raise CatalogError("catalog needs at least one object and one state")
        index = {}
        for kind, entries in (("object", objects), ("state", states)):
            seen = {}
            for i, entry in enumerate(entries):
                if entry.name in seen:
                    raise CatalogError(
                        f"duplicate {kind} label {entry.name!r} "
                        f"({kind}s[{seen[entry.name]}] and {kind}s[{i}])"
                    )
                seen[entry.name] = i
            index[kind] = seen
        object.__setattr__(self, "objects", objects)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "_index", index)

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def entries(self, kind: str) -> tuple[LabelEntry, ...]:
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
        return self.objects if kind == "object" else self.states

    def names(self, kind: str) -> list[str]:
        return [e.name for e in self.entries(kind)]

    def index_of(self, kind: str, name: str) -> int:
        """Canonical index of a label; lookup is case-insensitive."""
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
        try:
            return self._index[kind][name.strip().lower()]
        except KeyError:
            raise UnknownLabelError(f"unknown {kind} label {name!r}") from None

    def fingerprint(self) -> str:
        """Short hash of the label order, embedded in every derived file."""
        canon = "objects=" + ",".join(self.names("object"))
        canon += ";states=" + ",".join(self.names("state"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _parse_entries(raw, kind: str) -> list[LabelEntry]:
    if not isinstance(raw, list):
        raise CatalogError(f"{kind}s must be a list")
    entries = []
    for i, item in enumerate(raw):
        where = f"{kind}s[{i}]"
        if not isinstance(item, dict) or "name" not in item:
            raise CatalogError(f"{where}: expected an object with a 'name' field")
        words = item.get("words", [])
        if not isinstance(words, list) or not all(isinstance(w, str) for w in words):
            raise CatalogError(f"{where} (label {item['name']!r}): 'words' must be a list of strings")
        try:
            entries.append(LabelEntry(name=str(item["name"]), words=tuple(words)))
        except CatalogError as exc:
            raise CatalogError(f"{where}: {exc}") from None
    return entries


def load_catalog(path: str | Path) -> ClassCatalog:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CatalogError(f"catalog file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict) or "objects" not in data or "states" not in data:
        raise CatalogError(f"{path}: catalog must have 'objects' and 'states' lists")
    return ClassCatalog(
        objects=tuple(_parse_entries(data["objects"], "object")),
        states=tuple(_parse_entries(data["states"], "state")),
    )


def save_catalog(catalog: ClassCatalog, path: str | Path) -> None:
    payload = {
        "objects": [{"name": e.name, "words": list(e.words)} for e in catalog.objects],
        "states": [{"name": e.name, "words": list(e.words)} for e in catalog.states],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def default_catalog_path() -> Path:
    return Path(str(resources.files("state_fusion").joinpath("data/default_catalog.json")))


def load_default_catalog() -> ClassCatalog:
    """The shipped 15-object / 9-state catalog.

    Only the potato and creamy word sets are verbatim from the source
    material; the rest are editor-curated stand-ins (see README).
    """
    return load_catalog(default_catalog_path())
