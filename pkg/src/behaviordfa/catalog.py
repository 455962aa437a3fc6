"""Behavior alphabet and per-behavior risk weights.

A catalog maps small integer behavior identifiers to human-readable names
and positive integer weights. The weight expresses how much risk a single
occurrence of that behavior carries; weights are configured by hand, never
learned. Catalogs are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Union

from .errors import CatalogError, UnknownBehaviorError

BehaviorId = int


@dataclass(frozen=True)
class BehaviorSpec:
    """One catalog entry: identifier, display name, risk weight."""

    id: int
    name: str
    weight: int


# Stock behavior set. Ids 1, 3, 5, 7 and 11 are the conventional identifiers
# for these behaviors; 2, 4 and 6 are this package's own assignments for the
# behaviors that have no conventional number. Deployments whose capture
# pipeline numbers behaviors differently, or tracks more of them, should
# supply their own catalog file.
DEFAULT_ENTRIES: tuple[BehaviorSpec, ...] = (
    BehaviorSpec(1, "Find DOM Element(s)", 2),
    BehaviorSpec(2, "Add DOM Element(s)", 1),
    BehaviorSpec(3, "Update DOM Element", 3),
    BehaviorSpec(4, "Inject Code Dynamically", 4),
    BehaviorSpec(5, "Set Callback", 3),
    BehaviorSpec(6, "Access Input", 4),
    BehaviorSpec(7, "Add Event Handler", 3),
    BehaviorSpec(11, "Send Data", 5),
)

_ENTRY_KEYS = {"id", "name", "weight"}


def _check_spec(spec: BehaviorSpec) -> None:
    if isinstance(spec.id, bool) or not isinstance(spec.id, int) or spec.id < 0:
        raise CatalogError(f"behavior id must be a non-negative integer, got {spec.id!r}")
    if not isinstance(spec.name, str) or not spec.name:
        raise CatalogError(f"behavior {spec.id}: name must be a non-empty string")
    if isinstance(spec.weight, bool) or not isinstance(spec.weight, int) or spec.weight < 1:
        raise CatalogError(f"behavior {spec.id} ({spec.name!r}): non-positive weight {spec.weight!r}")


class BehaviorCatalog:
    """Immutable registry of behaviors, indexable by id and by name."""

    def __init__(self, entries: Iterable[BehaviorSpec]):
        by_id: dict[int, BehaviorSpec] = {}
        by_name: dict[str, BehaviorSpec] = {}
        for spec in entries:
            _check_spec(spec)
            if spec.id in by_id:
                raise CatalogError(f"duplicate behavior id {spec.id}")
            if spec.name in by_name:
                raise CatalogError(f"duplicate behavior name {spec.name!r}")
            by_id[spec.id] = spec
            by_name[spec.name] = spec
        self._by_id = by_id
        self._by_name = by_name
        self._fingerprint: str | None = None

    def __contains__(self, behavior_id: int) -> bool:
        return behavior_id in self._by_id

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self) -> Iterator[BehaviorSpec]:
        return iter(self.entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BehaviorCatalog):
            return NotImplemented
        return self._by_id == other._by_id

    def __repr__(self) -> str:
        return f"BehaviorCatalog({len(self._by_id)} behaviors)"

    @property
    def entries(self) -> tuple[BehaviorSpec, ...]:
        """All entries, sorted by id."""
        return tuple(self._by_id[i] for i in sorted(self._by_id))

    def weight_of(self, behavior_id: int) -> int:
        """Risk weight of a behavior; raises UnknownBehaviorError if absent."""
        spec = self._by_id.get(behavior_id)
        if spec is None:
            raise UnknownBehaviorError(behavior_id)
        return spec.weight

    def name_of(self, behavior_id: int) -> str:
        spec = self._by_id.get(behavior_id)
        if spec is None:
            raise UnknownBehaviorError(behavior_id)
        return spec.name

    def id_of(self, name: str) -> int:
        spec = self._by_name.get(name)
        if spec is None:
            raise CatalogError(f"no behavior named {name!r}")
        return spec.id

    def fingerprint(self) -> str:
        """SHA-256 over the canonical entry list; identifies the weight table."""
        if self._fingerprint is None:
            canon = json.dumps(
                [{"id": s.id, "name": s.name, "weight": s.weight} for s in self.entries],
                separators=(",", ":"),
                ensure_ascii=True,
            )
            self._fingerprint = hashlib.sha256(canon.encode("utf-8")).hexdigest()
        return self._fingerprint

    def to_json(self) -> bytes:
        """Catalog file content; load_catalog() reads this back identically."""
        doc = [{"id": s.id, "name": s.name, "weight": s.weight} for s in self.entries]
        return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def default_catalog() -> BehaviorCatalog:
    """The stock catalog shipped with the package."""
    return BehaviorCatalog(DEFAULT_ENTRIES)


def load_catalog(source: Union[bytes, str, IO[bytes], IO[str]]) -> BehaviorCatalog:
    """Load and validate a catalog file.

    The file must be a UTF-8 JSON array of ``{"id", "name", "weight"}``
    objects; extra keys are rejected. Errors name the offending entry.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, (bytes, bytearray)):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CatalogError(f"catalog file is not valid UTF-8: {exc}") from exc
    try:
        doc = json.loads(source)
    except ValueError as exc:
        raise CatalogError(f"catalog file is not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise CatalogError("catalog file must be a top-level JSON array")
    specs: list[BehaviorSpec] = []
    seen_ids: set[int] = set()
    seen_names: set[str] = set()
    for position, raw in enumerate(doc, start=1):
        where = f"entry {position}"
        if not isinstance(raw, dict):
            raise CatalogError(f"{where}: not a JSON object")
        extra = set(raw) - _ENTRY_KEYS
        if extra:
            raise CatalogError(f"{where}: unknown keys {sorted(extra)}")
        missing = _ENTRY_KEYS - set(raw)
        if missing:
            raise CatalogError(f"{where}: missing keys {sorted(missing)}")
        spec = BehaviorSpec(raw["id"], raw["name"], raw["weight"])
        try:
            _check_spec(spec)
        except CatalogError as exc:
            raise CatalogError(f"{where}: {exc}") from None
        if spec.id in seen_ids:
            raise CatalogError(f"{where}: duplicate behavior id {spec.id}")
        if spec.name in seen_names:
            raise CatalogError(f"{where}: duplicate behavior name {spec.name!r}")
        seen_ids.add(spec.id)
        seen_names.add(spec.name)
        specs.append(spec)
    return BehaviorCatalog(specs)
