"""Debugging decision trees: complete trees whose pure-fail paths become suspects.

Suspects are confirmed or refuted by executing instances drawn from the
suspect's filter (every assignment satisfying the path).  A refutation adds a
succeeding instance to the history and the tree is rebuilt from scratch.
"""
from __future__ import annotations

import enum
import itertools
import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .engine import ExecutionEngine
from .exceptions import BudgetExhausted, NoFailingInstance
from .minimize import minimize
from .model import (
    CauseDNF,
    Conjunction,
    Cube,
    Evaluation,
    Instance,
    Kind,
    ParameterSpace,
    Triple,
    bits,
    cube_contains,
    cube_size,
    cube_subset,
    max_expressible_subsets,
    uncovered_point,
)

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 30
# instances per evaluate_batch call; fixed so the set of executed instances
# does not depend on the worker count
DEFAULT_BATCH = 8


class Label(str, enum.Enum):
    PURE_SUCCEED = "pure_succeed"
    PURE_FAIL = "pure_fail"
    MIXED = "mixed"


class Status(str, enum.Enum):
    UNTESTED = "untested"
    REFUTED = "refuted"
    DEFINITIVE = "definitive"


class Goal(str, enum.Enum):
    FIND_ONE = "one"
    FIND_ALL = "all"


@dataclass
class Leaf:
    label: Label
    instances: list
    region: Cube
    path: tuple = ()


@dataclass
class Inner:
    split: Triple
    true_branch: object
    false_branch: object
    region: Cube
    path: tuple = ()


@dataclass
class Suspect:
    conjunction: Conjunction
    prototype: dict
    cube: Cube
    support: int = 0
    status: Status = Status.UNTESTED
    sampled: bool = False
    executions: int = 0

    @classmethod
    def of(cls, space: ParameterSpace, conj: Conjunction) -> "Suspect":
        conj = space.conjunction(conj)
        cube = space.cube(conj)
        return cls(conj, prototype(space, conj, cube), cube)


@dataclass
class DdtReport:
    causes: CauseDNF
    executions_used: int = 0
    rebuilds: int = 0
    budget_exhausted: bool = False
    sampled: frozenset = frozenset()
    suspects_tested: int = 0
    definitive: list = field(default_factory=list)

    def is_sampled(self, conj: Conjunction) -> bool:
        return conj in self.sampled


# -- tree induction -----------------------------------------------------------


def _gini_score(counts) -> Fraction:
    """Sum over children of (fail^2 + succeed^2) / n; larger means purer."""
    return sum((Fraction(f * f + s * s, f + s) for f, s in counts if f + s), Fraction(0))


def build_tree(records, space: ParameterSpace):
    """Complete (unpruned) tree over the distinct instances of ``records``.

    Splits maximise Gini impurity reduction; ties go to the earlier parameter,
    then the smaller threshold or earlier domain value.  Ordinal splits are
    ``<= t`` with ``t`` the domain value at the midpoint between consecutive
    observed ranks, so the branch covers unobserved values on both sides evenly.
    """
    table = {}
    for rec in records:
        table.setdefault(rec.instance, rec.evaluation)
    instances = list(table)
    if not instances:
        raise ValueError("cannot build a tree without records")
    X = np.array([space.encode(i) for i in instances], dtype=np.int64).reshape(len(instances), len(space))
    y = np.array([table[i] is Evaluation.FAIL for i in instances], dtype=bool)
    return _grow(space, instances, X, y, np.arange(len(instances)), space.full_cube, ())


def _grow(space, instances, X, y, idx, region, path):
    fails = int(y[idx].sum())
    members = [instances[i] for i in idx]
    if fails == len(idx):
        return Leaf(Label.PURE_FAIL, members, region, path)
    if fails == 0:
        return Leaf(Label.PURE_SUCCEED, members, region, path)
    best = None
    for j, p in enumerate(space.parameters):
        col = X[idx, j]
        observed = np.unique(col)
        if len(observed) < 2:
            continue
        yy = y[idx]
        if p.kind is Kind.ORDINAL:
            candidates = []
            for a, b in zip(observed[:-1], observed[1:]):
                t = (int(a) + int(b)) // 2
                candidates.append((t, col <= t))
        else:
            candidates = [(int(v), col == v) for v in observed]
        for t, mask in candidates:
            f_in = int(yy[mask].sum())
            n_in = int(mask.sum())
            f_out = fails - f_in
            n_out = len(idx) - n_in
            score = _gini_score([(f_in, n_in - f_in), (f_out, n_out - f_out)])
            if best is None or score > best[0]:
                best = (score, j, t, mask)
    if best is None:
        return Leaf(Label.MIXED, members, region, path)
    _, j, t, mask = best
    p = space.parameters[j]
    if p.kind is Kind.ORDINAL:
        split = Triple(p.name, "<=", p.domain[t])
        yes, no = (1 << (t + 1)) - 1, p.full ^ ((1 << (t + 1)) - 1)
        no_triple = Triple(p.name, ">", p.domain[t])
    else:
        split = Triple(p.name, "=", p.domain[t])
        yes, no = 1 << t, p.full ^ (1 << t)
        no_triple = Triple(p.name, "!=", p.domain[t])
    r_yes = region[:j] + (region[j] & yes,) + region[j + 1:]
    r_no = region[:j] + (region[j] & no,) + region[j + 1:]
    return Inner(
        split,
        _grow(space, instances, X, y, idx[mask], r_yes, path + (split,)),
        _grow(space, instances, X, y, idx[~mask], r_no, path + (no_triple,)),
        region,
        path,
    )


def leaves(tree):
    stack = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Leaf):
            yield node
        else:
            stack.append(node.false_branch)
            stack.append(node.true_branch)


def route(tree, space: ParameterSpace, instance: Instance) -> Leaf:
    ranks = space.encode(instance)
    node = tree
    while isinstance(node, Inner):
        node = node.true_branch if cube_contains(node.true_branch.region, ranks) else node.false_branch
    return node


# -- suspects -----------------------------------------------------------------


def prototype(space: ParameterSpace, conj: Conjunction, cube: Cube) -> dict:
    """A satisfying value for each constrained parameter.

    ``=`` keeps its value; with an upper bound the largest allowed value is
    used, with only a lower bound the smallest, otherwise the first allowed.
    """
    ops: dict = {}
    for t in conj:
        ops.setdefault(t.param, set()).add(t.op)
    out = {}
    for name, present in ops.items():
        i = space.index(name)
        allowed = bits(cube[i])
        if not allowed:
            continue
        if "=" in present or "!=" in present and not present & {"<", "<=", ">", ">="}:
            r = allowed[0]
        elif present & {"<", "<="}:
            r = allowed[-1]
        else:
            r = allowed[0]
        out[name] = space.parameters[i].domain[r]
    return out


def extract_suspects(tree, space: ParameterSpace) -> list:
    """One suspect per pure-fail leaf, shortest conjunction first.

    A leaf whose region cannot be written as a single conjunction (repeated
    ``!=`` splits on a categorical parameter) yields one suspect per maximal
    expressible piece.
    """
    out = []
    for order, leaf in enumerate(leaves(tree)):
        if leaf.label is not Label.PURE_FAIL:
            continue
        pieces = itertools.product(*(max_expressible_subsets(p, m) for p, m in zip(space.parameters, leaf.region)))
        for cube in pieces:
            members = [i for i in leaf.instances if cube_contains(cube, space.encode(i))]
            conj = space.render(cube)
            out.append((len(conj), -len(members), order, Suspect(conj, prototype(space, conj, cube), cube, len(members))))
    out.sort(key=lambda item: item[:3])
    return [item[3] for item in out]


def _filter_instances(space: ParameterSpace, suspect: Suspect, samples, rng: random.Random):
    """Instances to test, prototype-anchored ones first.

    Returns ``(instances, exhaustive)``.
    """
    total = cube_size(suspect.cube)
    axes = [bits(m) for m in suspect.cube]
    proto_ranks = {space.index(n): space[n].rank(v) for n, v in suspect.prototype.items()}
    anchored = [[proto_ranks[i]] if i in proto_ranks else a for i, a in enumerate(axes)]
    if samples is None or total <= samples:
        first = list(itertools.product(*anchored))
        seen = set(first)
        rest = (r for r in itertools.product(*axes) if r not in seen)
        return (space.decode(r) for r in itertools.chain(first, rest)), True
    radices = [len(a) for a in axes]

    def unrank(n, ax):
        out = []
        for a in reversed(ax):
            n, r = divmod(n, len(a))
            out.append(a[r])
        return tuple(reversed(out))

    anchored_total = int(np.prod([len(a) for a in anchored]))
    half = min(anchored_total, max(1, samples // 2))
    picks = [unrank(n, anchored) for n in rng.sample(range(anchored_total), half)]
    seen = set(picks)
    pool = rng.sample(range(total), min(total, samples * 2 + len(seen)))
    for n in pool:
        if len(picks) >= samples:
            break
        r = unrank(n, axes)
        if r not in seen:
            seen.add(r)
            picks.append(r)
    del radices
    return (space.decode(r) for r in picks), False


def test_suspect(engine: ExecutionEngine, space: ParameterSpace, suspect: Suspect,
                 samples: int | None = DEFAULT_SAMPLES, rng: random.Random | None = None,
                 batch_size: int | None = None) -> Status:
    """Execute filtered instances until one succeeds or the filter is used up.

    ``samples=None`` tests the whole filter.  Sets ``suspect.status``,
    ``suspect.sampled`` and ``suspect.executions``; budget exhaustion leaves
    the suspect UNTESTED.
    """
    rng = rng or random.Random(0)
    batch_size = batch_size or DEFAULT_BATCH
    before = engine.executed
    for rec in engine.records():
        if rec.evaluation is Evaluation.SUCCEED and cube_contains(suspect.cube, space.encode(rec.instance)):
            suspect.status = Status.REFUTED
            return suspect.status
    candidates, exhaustive = _filter_instances(space, suspect, samples, rng)
    status = Status.DEFINITIVE
    while True:
        chunk = []
        for inst in candidates:
            if engine.known(inst) is Evaluation.FAIL:
                continue
            chunk.append(inst)
            if len(chunk) >= batch_size:
                break
        if not chunk:
            break
        results = engine.evaluate_batch(chunk, "ddt")
        if any(r is Evaluation.SUCCEED for r in results):
            status = Status.REFUTED
            break
        errors = [r for r in results if isinstance(r, Exception)]
        if errors:
            if all(isinstance(e, BudgetExhausted) for e in errors):
                status = Status.UNTESTED
                break
            raise errors[0]
    suspect.executions += engine.executed - before
    suspect.status = status
    suspect.sampled = status is Status.DEFINITIVE and not exhaustive
    return status


# -- search loop --------------------------------------------------------------


def _explore(engine: ExecutionEngine, space: ParameterSpace, proven: list, samples, rng: random.Random,
             batch_size: int):
    """Look for failures outside the proven causes.

    Returns ``(found_failure, budget_hit)``.  With ``samples=None`` every
    untested assignment outside the proven cubes is visited in universe order.
    """
    cubes = [s.cube for s in proven]
    if uncovered_point(cubes, space.full_cube) is None:
        return False, False

    def fresh(ranks):
        if any(cube_contains(c, ranks) for c in cubes):
            return False
        return engine.known(space.decode(ranks)) is None

    if samples is None:
        stream = (r for r in itertools.product(*(range(d) for d in space.dims)) if fresh(r))
    else:
        picks = []
        seen = set()
        for _ in range(samples * 20):
            if len(picks) >= samples:
                break
            r = tuple(rng.randrange(d) for d in space.dims)
            if r not in seen and fresh(r):
                seen.add(r)
                picks.append(r)
        stream = iter(picks)
    while True:
        chunk = [space.decode(r) for r in itertools.islice(stream, batch_size)]
        if not chunk:
            return False, False
        results = engine.evaluate_batch(chunk, "ddt-explore")
        if any(r is Evaluation.FAIL for r in results):
            return True, False
        errors = [r for r in results if isinstance(r, Exception)]
        if errors:
            if all(isinstance(e, BudgetExhausted) for e in errors):
                return False, True
            raise errors[0]


def ddt_search(engine: ExecutionEngine, space: ParameterSpace, goal: Goal | str = Goal.FIND_ONE,
               samples: int | None = DEFAULT_SAMPLES, seed: int = 0, batch_size: int | None = None,
               explore: bool = True, max_rebuilds: int | None = None) -> DdtReport:
    """Build, suspect, test, rebuild until the goal is met or the budget runs out.

    FIND_ALL stops once every suspect of the current tree is definitive and an
    exploration round outside the proven causes turns up no new failure.
    Definitive suspects are merged by the minimiser; FIND_ALL reports every
    prime implicant of the proven region.
    """
    goal = Goal(goal)
    rng = random.Random(seed)
    batch_size = batch_size or DEFAULT_BATCH
    if not any(r.evaluation is Evaluation.FAIL for r in engine.records()):
        raise NoFailingInstance("history contains no failing instance")
    before = engine.executed
    proven: list = []
    proven_keys: set = set()
    report = DdtReport(CauseDNF())
    done = False
    while not done:
        if max_rebuilds is not None and report.rebuilds > max_rebuilds:
            break
        tree = build_tree(engine.records(), space)
        refuted = False
        for suspect in extract_suspects(tree, space):
            if suspect.cube in proven_keys or any(cube_subset(suspect.cube, s.cube) for s in proven):
                continue
            status = test_suspect(engine, space, suspect, samples, rng, batch_size)
            report.suspects_tested += 1
            if status is Status.REFUTED:
                refuted = True
                break
            if status is Status.UNTESTED:
                report.budget_exhausted = True
                done = True
                break
            proven.append(suspect)
            proven_keys.add(suspect.cube)
            if goal is Goal.FIND_ONE:
                done = True
                break
        if done:
            break
        if refuted:
            report.rebuilds += 1
            continue
        if goal is Goal.FIND_ALL and explore:
            found, budget_hit = _explore(engine, space, proven, samples, rng, batch_size)
            if budget_hit:
                report.budget_exhausted = True
                break
            if found:
                report.rebuilds += 1
                continue
        break
    report.executions_used = engine.executed - before
    report.definitive = proven
    report.causes, report.sampled = _summarise(space, proven, goal)
    return report


def _summarise(space: ParameterSpace, proven: list, goal: Goal):
    if not proven:
        return CauseDNF(), frozenset()
    dnf = CauseDNF(tuple(s.conjunction for s in proven))
    causes = minimize(dnf, space, complete=goal is Goal.FIND_ALL)
    exact = [s.cube for s in proven if not s.sampled]
    sampled = frozenset(c for c in causes if uncovered_point(exact, space.cube(c)) is not None)
    return causes, sampled
