"""Parameter spaces, pipeline instances and root-cause expressions.

Instances are plain tuples of values aligned with ``ParameterSpace.parameters``.
Every triple denotes a set of domain values; internally those sets are held as
integer bitmasks over domain positions (``cube`` = one bitmask per parameter).
"""
from __future__ import annotations

import enum
import itertools
import json
import math
import re
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import UniverseTooLarge

Value = Union[int, float, str]
Instance = tuple
Cube = tuple  # tuple[int, ...] of per-parameter bitmasks

OPS = ("=", "!=", "<=", "<", ">", ">=")
_OP_ALIASES = {"≠": "!=", "≤": "<=", "≥": ">=", "==": "=", "<>": "!="}
_ORDER_OPS = frozenset({"<=", "<", ">", ">="})
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")
_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$|^[+-]?(inf|nan)$")


class Kind(str, enum.Enum):
    ORDINAL = "ordinal"
    CATEGORICAL = "categorical"


class Evaluation(str, enum.Enum):
    SUCCEED = "succeed"
    FAIL = "fail"

    @classmethod
    def parse(cls, raw) -> "Evaluation":
        if isinstance(raw, Evaluation):
            return raw
        if isinstance(raw, (bool, np.bool_)):
            return cls.FAIL if raw else cls.SUCCEED
        text = str(raw).strip().lower()
        if text in ("succeed", "success", "pass", "ok", "good", "0"):
            return cls.SUCCEED
        if text in ("fail", "failure", "bad", "1"):
            return cls.FAIL
        raise ValueError(f"not an evaluation: {raw!r}")


class Origin(str, enum.Enum):
    GIVEN = "given"
    GENERATED = "generated"


def normalize_op(op: str) -> str:
    op = _OP_ALIASES.get(op, op)
    if op not in OPS:
        raise ValueError(f"unknown comparator {op!r}")
    return op


def format_value(value: Value) -> str:
    if isinstance(value, bool):
        raise TypeError("booleans are not valid parameter values")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    text = str(value)
    if (
        not text
        or text != text.strip()
        or "\n" in text
        or " AND " in text
        or " OR " in text
        or text.startswith('"')
        or text.endswith("(sampled)")
        or _NUMBER.match(text)
    ):
        return json.dumps(text)
    return text


def parse_value(text: str) -> Value:
    """Parse canonical value text without reference to any domain."""
    text = text.strip()
    if text.startswith('"'):
        return json.loads(text)
    if _NUMBER.match(text):
        if re.match(r"^[+-]?\d+$", text):
            return int(text)
        return float(text)
    return text


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def bits(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


@dataclass(frozen=True)
class Parameter:
    name: str
    kind: Kind
    domain: tuple

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "domain", tuple(self.domain))
        if not _IDENT.match(self.name):
            raise ValueError(f"invalid parameter name {self.name!r}")
        if not self.domain:
            raise ValueError(f"parameter {self.name!r} has an empty domain")
        for v in self.domain:
            if isinstance(v, bool) or not isinstance(v, (int, float, str)):
                raise TypeError(f"parameter {self.name!r}: unsupported value {v!r}")
            if isinstance(v, float) and math.isnan(v):
                raise ValueError(f"parameter {self.name!r}: NaN in domain")
        ranks = {}
        for i, v in enumerate(self.domain):
            if v in ranks:
                raise ValueError(f"parameter {self.name!r}: duplicate value {v!r}")
            ranks[v] = i
        if self.kind is Kind.ORDINAL:
            numeric = [isinstance(v, (int, float)) for v in self.domain]
            if any(numeric) and not all(numeric):
                raise TypeError(f"ordinal parameter {self.name!r} mixes numbers and text")
            if all(numeric) and any(a >= b for a, b in zip(self.domain, self.domain[1:])):
                raise ValueError(f"ordinal parameter {self.name!r}: domain must be increasing")
        texts = {}
        for v in self.domain:
            t = format_value(v)
            if t in texts:
                raise ValueError(f"parameter {self.name!r}: ambiguous value text {t!r}")
            texts[t] = v
        object.__setattr__(self, "_ranks", ranks)
        object.__setattr__(self, "_texts", texts)

    @property
    def size(self) -> int:
        return len(self.domain)

    @property
    def full(self) -> int:
        return (1 << len(self.domain)) - 1

    def rank(self, value: Value) -> int:
        try:
            return self._ranks[value]
        except (KeyError, TypeError):
            raise ValueError(f"{value!r} is not in the domain of {self.name!r}") from None

    def canonical(self, value: Value) -> Value:
        return self.domain[self.rank(value)]

    def parse(self, text: str) -> Value:
        text = text.strip()
        if text in self._texts:
            return self._texts[text]
        try:
            return self.canonical(parse_value(text))
        except ValueError:
            raise ValueError(f"{text!r} is not in the domain of {self.name!r}") from None

    def value_set(self, op: str, value: Value) -> int:
        """Bitmask of domain positions whose value satisfies ``x <op> value``."""
        op = normalize_op(op)
        if op in _ORDER_OPS and self.kind is not Kind.ORDINAL:
            raise TypeError(f"comparator {op!r} applied to categorical parameter {self.name!r}")
        r = self.rank(value)
        full = self.full
        if op == "=":
            return 1 << r
        if op == "!=":
            return full ^ (1 << r)
        if op == "<=":
            return (1 << (r + 1)) - 1
        if op == "<":
            return (1 << r) - 1
        if op == ">":
            return full ^ ((1 << (r + 1)) - 1)
        return full ^ ((1 << r) - 1)


@dataclass(frozen=True)
class Triple:
    param: str
    op: str
    value: Value

    def __post_init__(self):
        object.__setattr__(self, "op", normalize_op(self.op))

    def __str__(self) -> str:
        return f"{self.param} {self.op} {format_value(self.value)}"


@dataclass(frozen=True, eq=False)
class Conjunction:
    """A set of triples read as their logical AND; the empty conjunction is TRUE.

    Equality and hashing ignore triple order.
    """

    triples: tuple = ()

    def __post_init__(self):
        seen = []
        for t in self.triples:
            if not isinstance(t, Triple):
                t = Triple(*t)
            if t not in seen:
                seen.append(t)
        keys = [(t.param, t.op) for t in seen]
        if len(set(keys)) != len(keys):
            raise ValueError(f"more than one triple per (parameter, comparator) in {seen}")
        object.__setattr__(self, "triples", tuple(seen))
        object.__setattr__(self, "_key", frozenset(seen))

    def __eq__(self, other):
        return isinstance(other, Conjunction) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.triples)

    def __len__(self) -> int:
        return len(self.triples)

    def __le__(self, other: "Conjunction") -> bool:
        return self._key <= other._key

    def __lt__(self, other: "Conjunction") -> bool:
        return self._key < other._key

    def __or__(self, other: "Conjunction") -> "Conjunction":
        return Conjunction(self.triples + tuple(t for t in other.triples if t not in self._key))

    @property
    def params(self) -> tuple:
        return tuple(dict.fromkeys(t.param for t in self.triples))

    def __str__(self) -> str:
        return " AND ".join(str(t) for t in self.triples) if self.triples else "TRUE"

    def __repr__(self) -> str:
        return f"Conjunction({str(self)!r})"


@dataclass(frozen=True, eq=False)
class CauseDNF:
    """Disjunction of conjunctions; duplicates are dropped, order is kept."""

    conjuncts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "conjuncts", tuple(dict.fromkeys(self.conjuncts)))
        object.__setattr__(self, "_key", frozenset(self.conjuncts))

    def __eq__(self, other):
        return isinstance(other, CauseDNF) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __iter__(self) -> Iterator[Conjunction]:
        return iter(self.conjuncts)

    def __len__(self) -> int:
        return len(self.conjuncts)

    def __bool__(self) -> bool:
        return bool(self.conjuncts)

    @property
    def literal_count(self) -> int:
        return sum(len(c) for c in self.conjuncts)

    def __str__(self) -> str:
        return "\n".join(("OR " if i else "") + str(c) for i, c in enumerate(self.conjuncts))

    def __repr__(self) -> str:
        return f"CauseDNF({[str(c) for c in self.conjuncts]!r})"


@dataclass(frozen=True)
class ProvenanceRecord:
    instance: Instance
    evaluation: Evaluation
    origin: Origin = Origin.GIVEN
    generator: str = "seed"
    seq: int = 0


class ParameterSpace:
    def __init__(self, parameters: Iterable[Parameter]):
        self.parameters = tuple(parameters)
        if not self.parameters:
            raise ValueError("a parameter space needs at least one parameter")
        self.names = tuple(p.name for p in self.parameters)
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate parameter names in {self.names}")
        self._index = {n: i for i, n in enumerate(self.names)}

    @classmethod
    def from_config(cls, entries: Iterable[Mapping]) -> "ParameterSpace":
        return cls(Parameter(e["name"], e.get("kind", "categorical"), e["domain"]) for e in entries)

    def to_config(self) -> list:
        return [{"name": p.name, "kind": p.kind.value, "domain": list(p.domain)} for p in self.parameters]

    def __len__(self) -> int:
        return len(self.parameters)

    def __eq__(self, other):
        return isinstance(other, ParameterSpace) and self.parameters == other.parameters

    def __hash__(self):
        return hash(self.parameters)

    def __repr__(self) -> str:
        return f"ParameterSpace({list(self.names)})"

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ValueError(f"unknown parameter {name!r}") from None

    def __getitem__(self, name: str) -> Parameter:
        return self.parameters[self.index(name)]

    @property
    def dims(self) -> tuple:
        return tuple(p.size for p in self.parameters)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    @property
    def full_cube(self) -> Cube:
        return tuple(p.full for p in self.parameters)

    def instance(self, values) -> Instance:
        """Validate ``values`` (mapping or sequence) and return the canonical tuple."""
        if isinstance(values, Mapping):
            missing = [n for n in self.names if n not in values]
            extra = [k for k in values if k not in self._index]
            if missing or extra:
                raise ValueError(f"instance does not match space: missing={missing} extra={extra}")
            values = [values[n] for n in self.names]
        values = tuple(values)
        if len(values) != len(self.parameters):
            raise ValueError(f"expected {len(self.parameters)} values, got {len(values)}")
        return tuple(p.canonical(v) for p, v in zip(self.parameters, values))

    def as_dict(self, instance: Instance) -> dict:
        return dict(zip(self.names, instance))

    def encode(self, instance: Instance) -> tuple:
        return tuple(p.rank(v) for p, v in zip(self.parameters, instance))

    def decode(self, ranks: Sequence[int]) -> Instance:
        return tuple(p.domain[r] for p, r in zip(self.parameters, ranks))

    def universe(self) -> Iterator[Instance]:
        return itertools.product(*(p.domain for p in self.parameters))

    def format_instance(self, instance: Instance) -> str:
        return ", ".join(f"{n}={format_value(v)}" for n, v in zip(self.names, instance))

    # -- triples and cubes -------------------------------------------------

    def triple(self, param: str, op: str, value) -> Triple:
        p = self[param]
        if isinstance(value, str) and (p.kind is Kind.ORDINAL or value not in p._ranks):
            try:
                value = p.parse(value)
            except ValueError:
                pass
        value = p.canonical(value)
        op = normalize_op(op)
        if op in _ORDER_OPS and p.kind is not Kind.ORDINAL:
            raise TypeError(f"comparator {op!r} applied to categorical parameter {param!r}")
        return Triple(param, op, value)

    def conjunction(self, triples: Iterable) -> Conjunction:
        """Validated conjunction with triples sorted in declaration order."""
        checked = [self.triple(*(t.param, t.op, t.value) if isinstance(t, Triple) else t) for t in triples]
        checked.sort(key=lambda t: (self.index(t.param), _OP_RANK[t.op]))
        return Conjunction(tuple(checked))

    def dnf(self, conjuncts: Iterable) -> CauseDNF:
        return CauseDNF(tuple(self.conjunction(c) for c in conjuncts))

    def cube(self, conj: Conjunction) -> Cube:
        masks = list(self.full_cube)
        for t in conj:
            i = self.index(t.param)
            masks[i] &= self.parameters[i].value_set(t.op, t.value)
        return tuple(masks)

    def instance_cube(self, instance: Instance) -> Cube:
        return tuple(1 << r for r in self.encode(instance))

    def render(self, cube: Cube) -> Conjunction:
        """Canonical, literal-minimal conjunction for an expressible cube."""
        triples = []
        for p, mask in zip(self.parameters, cube):
            triples.extend(render_set(p, mask))
        return Conjunction(tuple(triples))

    # -- parsing -----------------------------------------------------------

    def parse_triple(self, text: str) -> Triple:
        return parse_triple(text, self)

    def parse_conjunction(self, text: str) -> Conjunction:
        return self.conjunction(parse_conjunction(text, self))

    def parse_dnf(self, text: str) -> CauseDNF:
        return parse_dnf(text, self)


_OP_RANK = {">": 0, ">=": 1, "<=": 2, "<": 3, "=": 4, "!=": 5}


# -- satisfaction semantics ---------------------------------------------------


def satisfies(space: ParameterSpace, instance: Instance, conj: Conjunction) -> bool:
    for t in conj:
        i = space.index(t.param)
        p = space.parameters[i]
        if not (p.value_set(t.op, t.value) >> p.rank(instance[i])) & 1:
            return False
    return True


def cube_contains(cube: Cube, ranks: Sequence[int]) -> bool:
    return all((m >> r) & 1 for m, r in zip(cube, ranks))


def cube_subset(a: Cube, b: Cube) -> bool:
    return all(x & ~y == 0 for x, y in zip(a, b))


def cube_empty(cube: Cube) -> bool:
    return any(m == 0 for m in cube)


def cube_size(cube: Cube) -> int:
    return math.prod(popcount(m) for m in cube)


def cube_intersection(a: Cube, b: Cube) -> Cube:
    return tuple(x & y for x, y in zip(a, b))


def disjoint(a: Instance, b: Instance) -> bool:
    return len(a) == len(b) and all(x != y for x, y in zip(a, b))


def hamming(a: Instance, b: Instance) -> int:
    return sum(x != y for x, y in zip(a, b))


def universe_mask(space: ParameterSpace, cubes: Iterable[Cube], cap: int | None = None) -> np.ndarray:
    """Boolean array over the universe, true where any cube holds."""
    if cap is not None and space.size > cap:
        raise UniverseTooLarge(f"universe of {space.size} assignments exceeds cap {cap}")
    out = np.zeros(space.dims, dtype=bool)
    for cube in cubes:
        out |= cube_array(space, cube)
    return out


def cube_array(space: ParameterSpace, cube: Cube) -> np.ndarray:
    axes = [np.array([(m >> r) & 1 for r in range(d)], dtype=bool) for m, d in zip(cube, space.dims)]
    out = np.ones(space.dims, dtype=bool)
    for i, axis in enumerate(axes):
        shape = [1] * len(axes)
        shape[i] = len(axis)
        out &= axis.reshape(shape)
    return out


def uncovered_point(cubes: Sequence[Cube], region: Cube) -> tuple | None:
    """Rank tuple inside ``region`` that no cube covers, or None if covered.

    Exact search by splitting on domain values; the number of cubes is small in
    practice so this stays cheap even on astronomically large universes.
    """
    live = [c for c in (cube_intersection(c, region) for c in cubes) if not cube_empty(c)]
    if cube_empty(region):
        return None
    if not live:
        return tuple(bits(m)[0] for m in region)
    for c in live:
        if cube_subset(region, c):
            return None
    # split on the first parameter where some live cube is narrower than the region
    for i, m in enumerate(region):
        if any(c[i] != m for c in live):
            break
    for r in bits(region[i]):
        sub = region[:i] + (1 << r,) + region[i + 1:]
        hit = uncovered_point(live, sub)
        if hit is not None:
            return hit
    return None


# -- expressible value sets ---------------------------------------------------


class NotExpressible(ValueError):
    pass


def render_set(p: Parameter, mask: int) -> tuple:
    """Literal-minimal triples describing ``mask`` over ``p``'s domain."""
    full = p.full
    if mask == 0:
        raise NotExpressible(f"empty value set for {p.name!r}")
    mask &= full
    if mask == full:
        return ()
    dom = p.domain
    if popcount(mask) == 1:
        return (Triple(p.name, "=", dom[bits(mask)[0]]),)
    if p.kind is Kind.CATEGORICAL:
        if popcount(mask) == p.size - 1:
            return (Triple(p.name, "!=", dom[bits(full ^ mask)[0]]),)
        raise NotExpressible(f"{p.name!r}: {[dom[r] for r in bits(mask)]} needs a disjunction")
    ranks = bits(mask)
    lo, hi = ranks[0], ranks[-1]
    interval = ((1 << (hi + 1)) - 1) ^ ((1 << lo) - 1)
    missing = interval & ~mask
    if popcount(missing) > 1:
        raise NotExpressible(f"{p.name!r}: {[dom[r] for r in ranks]} needs a disjunction")
    out = []
    if missing and interval == full:
        return (Triple(p.name, "!=", dom[bits(missing)[0]]),)
    if lo > 0:
        out.append(Triple(p.name, ">", dom[lo - 1]))
    if hi < p.size - 1:
        out.append(Triple(p.name, "<=", dom[hi]))
    if missing:
        out.append(Triple(p.name, "!=", dom[bits(missing)[0]]))
    return tuple(out)


def is_expressible(p: Parameter, mask: int, vocabulary: str = "full") -> bool:
    if vocabulary == "equality":
        return mask == p.full or popcount(mask) == 1
    try:
        render_set(p, mask)
    except NotExpressible:
        return False
    return True


def expressible_sets(p: Parameter, vocabulary: str = "full") -> list:
    """Every non-full, non-empty value set a conjunction can pin ``p`` to.

    Returns ``(mask, literal_cost)`` pairs ordered by cost then mask.
    """
    d, full = p.size, p.full
    masks = {1 << r for r in range(d)}
    if vocabulary == "full":
        if p.kind is Kind.CATEGORICAL:
            masks |= {full ^ (1 << r) for r in range(d)}
        else:
            for i in range(d):
                for j in range(i, d):
                    interval = ((1 << (j + 1)) - 1) ^ ((1 << i) - 1)
                    masks.add(interval)
                    for k in range(i + 1, j):
                        masks.add(interval ^ (1 << k))
    elif vocabulary != "equality":
        raise ValueError(f"unknown vocabulary {vocabulary!r}")
    masks.discard(full)
    masks.discard(0)
    return sorted(((m, len(render_set(p, m))) for m in masks), key=lambda mc: (mc[1], mc[0]))


def max_expressible_subsets(p: Parameter, mask: int, vocabulary: str = "full") -> list:
    """Maximal expressible value sets contained in ``mask``."""
    full = p.full
    if mask == full:
        return [full]
    if mask == 0:
        return []
    if vocabulary == "equality":
        return [1 << r for r in bits(mask)]
    if p.kind is Kind.CATEGORICAL:
        if popcount(mask) == p.size - 1:
            return [mask]
        return [1 << r for r in bits(mask)]
    # ordinal: maximal runs, merged pairwise across single-value gaps
    runs = []
    for r in bits(mask):
        if runs and runs[-1][1] == r - 1:
            runs[-1][1] = r
        else:
            runs.append([r, r])

    def span(a, b):
        return ((1 << (b + 1)) - 1) ^ ((1 << a) - 1)

    out = []
    for i, (a, b) in enumerate(runs):
        left = i > 0 and runs[i - 1][1] == a - 2
        right = i + 1 < len(runs) and runs[i + 1][0] == b + 2
        if right:
            c, e = runs[i + 1]
            out.append(span(a, b) | span(c, e))
        if not left and not right:
            out.append(span(a, b))
    return out


# -- text parsing -------------------------------------------------------------

_TRIPLE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_.\-]*)\s*(!=|<=|>=|==|<>|=|<|>|≠|≤|≥)\s*(.+?)\s*$")


def parse_triple(text: str, space: ParameterSpace | None = None) -> Triple:
    m = _TRIPLE.match(text)
    if not m:
        raise ValueError(f"cannot parse triple {text!r}")
    name, op, raw = m.groups()
    if space is None:
        return Triple(name, op, parse_value(raw))
    return space.triple(name, op, space[name].parse(raw))


_QUOTED = re.compile(r'"(?:[^"\\]|\\.)*"')


def _split(text: str, sep: str) -> list:
    """``re.split`` that ignores separators inside JSON-quoted strings."""
    spans = [m.span() for m in _QUOTED.finditer(text)]
    parts, start = [], 0
    for m in re.finditer(sep, text):
        if any(a <= m.start() < b for a, b in spans):
            continue
        parts.append(text[start:m.start()])
        start = m.end()
    parts.append(text[start:])
    return parts


def parse_conjunction(text: str, space: ParameterSpace | None = None) -> Conjunction:
    text = text.strip()
    if text.endswith("(sampled)"):
        text = text[: -len("(sampled)")].strip()
    if text.upper() in ("TRUE", ""):
        return Conjunction(())
    triples = [parse_triple(part, space) for part in _split(text, r"\s+AND\s+|\s*∧\s*")]
    return space.conjunction(triples) if space is not None else Conjunction(tuple(triples))


def parse_dnf(text: str, space: ParameterSpace | None = None) -> CauseDNF:
    conjuncts = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.upper().startswith("OR "):
            line = line[3:]
        for part in _split(line, r"\s+OR\s+|\s*∨\s*"):
            if part.strip():
                conjuncts.append(parse_conjunction(part, space))
    return CauseDNF(tuple(conjuncts))


def sampled_flags(text: str) -> list:
    """Per-conjunct ``(sampled)`` markers of an explanation text, in order."""
    flags = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            flags.append(line.endswith("(sampled)"))
    return flags
