"""Weighted deterministic automaton over behavior sequences.

The automaton is a trie of known-malicious behavior sequences with one
twist: consecutive repeats of a behavior are collapsed into a single
forward transition plus a self-loop on its target state, so repetition
count never multiplies states. Two sequences that start with the same
runs share a common prefix path, which keeps the transition function
deterministic. The last state of every inserted sequence is final.

Every transition carries the risk weight of its behavior, frozen from the
catalog at build time; the catalog's fingerprint is recorded so a model
can never be silently combined with a different weight table.

Models are immutable values: add_pattern() returns a new model that is
bit-for-bit what a full rebuild with the extended pattern list would
produce, including state numbering.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import IO, Iterable, Union

from .catalog import BehaviorCatalog
from .errors import (
    CatalogMismatchError,
    InternalInvariantError,
    ModelFormatError,
    PatternError,
    UnknownBehaviorError,
)
from .ingest import BehaviorTrace, compress_runs

MODEL_VERSION = 1

_MODEL_KEYS = {"version", "catalog_fingerprint", "pattern_count", "states", "finals", "transitions"}
_TRANSITION_KEYS = {"from", "on", "to", "weight"}
_FINGERPRINT_RE = re.compile(r"^[0-9a-f]{64}$")


@dataclass(frozen=True)
class Transition:
    """One labeled, weighted edge of the automaton."""

    source: int
    behavior: int
    target: int
    weight: int

    @property
    def is_self_loop(self) -> bool:
        return self.source == self.target


@dataclass(frozen=True)
class BehaviorDfa:
    """States 0..state_count-1, deterministic transitions, final-state set.

    State 0 is always the initial state. Transitions are kept sorted by
    (source, behavior) so equality, serialization and DOT export are
    reproducible.
    """

    state_count: int
    transitions: tuple[Transition, ...]
    finals: frozenset[int]
    catalog_fingerprint: str
    pattern_count: int
    _by_key: dict = field(init=False, repr=False, compare=False, default=None)
    _out: dict = field(init=False, repr=False, compare=False, default=None)
    _parent: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        ordered = tuple(sorted(self.transitions, key=lambda t: (t.source, t.behavior)))
        object.__setattr__(self, "transitions", ordered)
        object.__setattr__(self, "finals", frozenset(self.finals))
        by_key: dict[tuple[int, int], Transition] = {}
        out: dict[int, list[Transition]] = {}
        for t in ordered:
            by_key[(t.source, t.behavior)] = t
            out.setdefault(t.source, []).append(t)
        # Breadth-first parent edges from the initial state, self-loops
        # skipped: in a trie every state has exactly one incoming edge, so
        # this recovers the unique initial-to-state path.
        parent: dict[int, Transition] = {}
        frontier = [0]
        seen = {0}
        while frontier:
            nxt = []
            for s in frontier:
                for t in out.get(s, ()):
                    if t.is_self_loop or t.target in seen:
                        continue
                    seen.add(t.target)
                    parent[t.target] = t
                    nxt.append(t.target)
            frontier = nxt
        object.__setattr__(self, "_by_key", by_key)
        object.__setattr__(self, "_out", out)
        object.__setattr__(self, "_parent", parent)

    @property
    def initial(self) -> int:
        return 0

    def step(self, state: int, behavior: int) -> Transition | None:
        """The unique transition out of `state` on `behavior`, if defined."""
        return self._by_key.get((state, behavior))

    def out_edges(self, state: int) -> tuple[Transition, ...]:
        return tuple(self._out.get(state, ()))

    def path_from_initial(self, state: int) -> tuple[Transition, ...]:
        """The unique non-self-loop path from the initial state to `state`."""
        path: list[Transition] = []
        current = state
        while current != 0:
            t = self._parent.get(current)
            if t is None:
                raise InternalInvariantError(
                    f"state {current} is not reachable from the initial state"
                )
            path.append(t)
            current = t.source
        path.reverse()
        return tuple(path)


def build_dfa(patterns: Iterable[BehaviorTrace], catalog: BehaviorCatalog) -> BehaviorDfa:
    """Build the automaton from known-malicious sequences.

    Patterns must be non-empty and hold exactly one behavior per step.
    State numbering is deterministic: 0 is initial, then states in order
    of first creation while inserting patterns in input order.
    """
    pats = list(patterns)
    if not pats:
        raise PatternError("no patterns to build from")
    transitions: dict[tuple[int, int], Transition] = {}
    finals: set[int] = set()
    count = 1
    for pattern in pats:
        count = _insert_pattern(transitions, finals, count, pattern, catalog)
    return BehaviorDfa(
        state_count=count,
        transitions=tuple(transitions.values()),
        finals=frozenset(finals),
        catalog_fingerprint=catalog.fingerprint(),
        pattern_count=len(pats),
    )


def add_pattern(dfa: BehaviorDfa, pattern: BehaviorTrace, catalog: BehaviorCatalog) -> BehaviorDfa:
    """Insert one more pattern, returning a new model.

    The result is exactly what rebuilding from the original patterns plus
    this one would produce, state numbering included. The catalog must be
    the one the model was built with.
    """
    supplied = catalog.fingerprint()
    if supplied != dfa.catalog_fingerprint:
        raise CatalogMismatchError(
            f"model was built with catalog {dfa.catalog_fingerprint[:12]}..., "
            f"supplied catalog is {supplied[:12]}...; re-run with the original catalog "
            "or rebuild the model"
        )
    transitions = {(t.source, t.behavior): t for t in dfa.transitions}
    finals = set(dfa.finals)
    count = _insert_pattern(transitions, finals, dfa.state_count, pattern, catalog)
    return BehaviorDfa(
        state_count=count,
        transitions=tuple(transitions.values()),
        finals=frozenset(finals),
        catalog_fingerprint=dfa.catalog_fingerprint,
        pattern_count=dfa.pattern_count + 1,
    )


def _flatten_pattern(pattern: BehaviorTrace) -> list[int]:
    flat: list[int] = []
    for index, step in enumerate(pattern.steps):
        if len(step.behaviors) != 1:
            raise PatternError(
                f"pattern {pattern.trace_id!r}: step {index} holds "
                f"{len(step.behaviors)} behaviors; patterns must use single-behavior steps"
            )
        flat.append(step.behaviors[0])
    if not flat:
        raise PatternError(f"pattern {pattern.trace_id!r} is empty")
    return flat


def _insert_pattern(transitions, finals, count, pattern, catalog):
    state = 0
    for behavior, length in compress_runs(_flatten_pattern(pattern)):
        try:
            weight = catalog.weight_of(behavior)
        except UnknownBehaviorError:
            raise UnknownBehaviorError(behavior, context=f"pattern {pattern.trace_id!r}") from None
        key = (state, behavior)
        existing = transitions.get(key)
        if existing is None:
            nxt = count
            count += 1
            transitions[key] = Transition(state, behavior, nxt, weight)
        else:
            nxt = existing.target
            if nxt == state:
                # Run-compressed input can never follow a self-loop forward.
                raise InternalInvariantError(
                    f"adjacent runs share behavior {behavior} at state {state}"
                )
        if length > 1:
            loop_key = (nxt, behavior)
            if loop_key not in transitions:
                transitions[loop_key] = Transition(nxt, behavior, nxt, weight)
        state = nxt
    finals.add(state)
    return count


@dataclass(frozen=True)
class ValidationIssue:
    """One structural defect found by validate()."""

    kind: str
    detail: str


def validate(dfa: BehaviorDfa) -> list[ValidationIssue]:
    """Check all structural invariants; returns every violation found.

    An empty list means the model is sound: deterministic, densely
    numbered, every final reachable, and every state on some
    initial-to-final path.
    """
    issues: list[ValidationIssue] = []
    n = dfa.state_count
    if n < 1:
        issues.append(ValidationIssue("no-states", "model has no states (initial state missing)"))
        return issues

    seen_keys: set[tuple[int, int]] = set()
    usable: list[Transition] = []
    for t in dfa.transitions:
        key = (t.source, t.behavior)
        if key in seen_keys:
            issues.append(
                ValidationIssue(
                    "determinism", f"two transitions from state {t.source} on behavior {t.behavior}"
                )
            )
        seen_keys.add(key)
        if not (0 <= t.source < n and 0 <= t.target < n):
            issues.append(
                ValidationIssue(
                    "state-bounds",
                    f"transition {t.source}->{t.target} references a state outside 0..{n - 1}",
                )
            )
            continue
        if t.weight < 1:
            issues.append(
                ValidationIssue(
                    "bad-weight",
                    f"transition {t.source}->{t.target} on {t.behavior} has weight {t.weight}",
                )
            )
        usable.append(t)

    finals_in_range: list[int] = []
    for f in sorted(dfa.finals):
        if not (0 <= f < n):
            issues.append(ValidationIssue("state-bounds", f"final state {f} outside 0..{n - 1}"))
        else:
            finals_in_range.append(f)
    if not finals_in_range:
        issues.append(ValidationIssue("no-finals", "model has no final states"))

    forward: dict[int, set[int]] = {}
    reverse: dict[int, set[int]] = {}
    for t in usable:
        if not t.is_self_loop:
            forward.setdefault(t.source, set()).add(t.target)
            reverse.setdefault(t.target, set()).add(t.source)

    reachable = _closure({0}, forward)
    coreachable = _closure(set(finals_in_range), reverse)

    for f in finals_in_range:
        if f not in reachable:
            issues.append(
                ValidationIssue(
                    "unreachable-final", f"final state {f} is not reachable from the initial state"
                )
            )
    for s in range(n):
        if s not in reachable:
            issues.append(
                ValidationIssue(
                    "unreachable-state", f"state {s} is not reachable from the initial state"
                )
            )
        if s not in coreachable:
            issues.append(
                ValidationIssue("no-final-ahead", f"no final state is reachable from state {s}")
            )
    return issues


def _closure(start: set[int], edges: dict[int, set[int]]) -> set[int]:
    seen = set(start)
    frontier = list(start)
    while frontier:
        state = frontier.pop()
        for nxt in edges.get(state, ()):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


def serialize(dfa: BehaviorDfa) -> bytes:
    """Stable JSON encoding of a model; re-serializing round-trips byte-identically."""
    doc = {
        "version": MODEL_VERSION,
        "catalog_fingerprint": dfa.catalog_fingerprint,
        "pattern_count": dfa.pattern_count,
        "states": dfa.state_count,
        "finals": sorted(dfa.finals),
        "transitions": [
            {"from": t.source, "on": t.behavior, "to": t.target, "weight": t.weight}
            for t in dfa.transitions
        ],
    }
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def deserialize(source: Union[bytes, str, IO[bytes], IO[str]]) -> BehaviorDfa:
    """Load a serialized model, verifying format and structural invariants."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, (bytes, bytearray)):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelFormatError(f"model file is not valid UTF-8: {exc}") from exc
    try:
        doc = json.loads(source)
    except ValueError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model file must be a JSON object")

    version = doc.get("version")
    if version != MODEL_VERSION:
        raise ModelFormatError(
            f"unsupported model version {version!r} (this build reads version {MODEL_VERSION})"
        )
    extra = set(doc) - _MODEL_KEYS
    if extra:
        raise ModelFormatError(f"unexpected model keys {sorted(extra)}")
    missing = _MODEL_KEYS - set(doc)
    if missing:
        raise ModelFormatError(f"missing model keys {sorted(missing)}")

    fingerprint = doc["catalog_fingerprint"]
    if not isinstance(fingerprint, str) or not _FINGERPRINT_RE.match(fingerprint):
        raise ModelFormatError("catalog fingerprint is corrupt (expected 64 hex digits)")
    states = _require_int(doc["states"], "states")
    if states < 1:
        raise ModelFormatError(f"state count must be positive, got {states}")
    pattern_count = _require_int(doc["pattern_count"], "pattern_count")
    if pattern_count < 0:
        raise ModelFormatError(f"pattern count must be non-negative, got {pattern_count}")

    raw_finals = doc["finals"]
    if not isinstance(raw_finals, list):
        raise ModelFormatError("'finals' must be an array")
    finals = frozenset(_require_int(f, "final state") for f in raw_finals)

    raw_transitions = doc["transitions"]
    if not isinstance(raw_transitions, list):
        raise ModelFormatError("'transitions' must be an array")
    transitions: list[Transition] = []
    for position, raw in enumerate(raw_transitions):
        if not isinstance(raw, dict) or set(raw) != _TRANSITION_KEYS:
            raise ModelFormatError(
                f"transition {position}: expected keys {sorted(_TRANSITION_KEYS)}"
            )
        transitions.append(
            Transition(
                source=_require_int(raw["from"], "from"),
                behavior=_require_int(raw["on"], "on"),
                target=_require_int(raw["to"], "to"),
                weight=_require_int(raw["weight"], "weight"),
            )
        )

    dfa = BehaviorDfa(
        state_count=states,
        transitions=tuple(transitions),
        finals=finals,
        catalog_fingerprint=fingerprint,
        pattern_count=pattern_count,
    )
    issues = validate(dfa)
    if issues:
        listing = "; ".join(f"{i.kind}: {i.detail}" for i in issues)
        raise ModelFormatError(f"model violates structural invariants: {listing}")
    return dfa


def _require_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ModelFormatError(f"{what} must be an integer, got {value!r}")
    return value


def export_dot(dfa: BehaviorDfa, catalog: BehaviorCatalog) -> str:
    """Render the model as a Graphviz digraph.

    Finals are double-circled, the initial state gets an entry arrow, and
    edges are labeled "name (id, w=weight)". Output is byte-stable: nodes
    in state order, edges sorted by (source, behavior).
    """
    lines = [
        "digraph behavior_dfa {",
        "  rankdir=LR;",
        '  __start [shape=point, label=""];',
    ]
    for s in range(dfa.state_count):
        shape = "doublecircle" if s in dfa.finals else "circle"
        lines.append(f"  q{s} [shape={shape}];")
    lines.append("  __start -> q0;")
    for t in dfa.transitions:
        name = catalog.name_of(t.behavior) if t.behavior in catalog else f"behavior {t.behavior}"
        label = _dot_escape(f"{name} ({t.behavior}, w={t.weight})")
        lines.append(f'  q{t.source} -> q{t.target} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')
