"""Stacked Shortcut: one failing instance against several disjoint good ones."""
from __future__ import annotations

import random
from collections.abc import Sequence
from dataclasses import dataclass, field

from .engine import ExecutionEngine
from .exceptions import BudgetExhausted, NoFailingInstance, NoSucceedingInstance
from .model import Conjunction, Evaluation, Instance, ParameterSpace, disjoint, hamming
from .shortcut import ShortcutInterrupted, sanity_violation, shortcut

DEFAULT_K = 4


@dataclass
class StackedReport:
    asserted: Conjunction
    per_run: list = field(default_factory=list)
    k_requested: int = DEFAULT_K
    k_found: int = 0
    mutually_disjoint: bool = False
    base_fail: Instance | None = None
    goods: list = field(default_factory=list)
    synthesis_executions: int = 0
    union_rejected: bool = False
    errors: list = field(default_factory=list)

    @property
    def executions_used(self) -> int:
        return sum(r.executions_used for r in self.per_run)

    @property
    def new_executions(self) -> int:
        return self.synthesis_executions + sum(r.new_executions for r in self.per_run)


def _mutually_disjoint(instances: Sequence[Instance]) -> bool:
    return all(disjoint(a, b) for i, a in enumerate(instances) for b in instances[i + 1:])


def find_disjoint_good_set(engine: ExecutionEngine, space: ParameterSpace, cp_f: Instance, k: int = DEFAULT_K,
                           seed: int = 0, max_candidates: int | None = None):
    """Choose up to ``k`` succeeding instances disjoint from ``cp_f``.

    Known goods are taken first, greedily maximising the minimum hamming
    distance to the goods already chosen (ties: earliest record).  Missing goods
    are synthesised from values unused by ``cp_f`` and the chosen goods and
    evaluated through the engine.  Returns ``(goods, mutually_disjoint)``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    cp_f = space.instance(cp_f)
    history = [r for r in sorted(engine.records(), key=lambda r: r.seq)
               if r.evaluation is Evaluation.SUCCEED and disjoint(r.instance, cp_f)]
    chosen: list = []
    pool = [r.instance for r in history]
    while pool and len(chosen) < k:
        best = max(pool, key=lambda g: (min((hamming(g, c) for c in chosen), default=len(space)),
                                        -pool.index(g)))
        chosen.append(best)
        pool.remove(best)

    rng = random.Random(seed)
    tried: set = set(r.instance for r in engine.records())
    budget = max_candidates if max_candidates is not None else 10 * k
    attempts = 0
    while len(chosen) < k and attempts < budget:
        candidate = _synthesise(space, cp_f, chosen, rng)
        attempts += 1
        if candidate is None:
            break
        if candidate in tried:
            if len(tried) >= space.size:
                break
            continue
        tried.add(candidate)
        try:
            outcome = engine.evaluate(candidate, "stacked-synthesis")
        except BudgetExhausted:
            break
        if outcome is Evaluation.SUCCEED:
            chosen.append(candidate)

    if not chosen:
        goods = [r for r in engine.records() if r.evaluation is Evaluation.SUCCEED]
        if not goods:
            raise NoSucceedingInstance("no succeeding instance known or synthesisable")
        # heuristic fallback: the closest thing to a disjoint good instance
        best = max(goods, key=lambda r: (hamming(r.instance, cp_f), -r.seq))
        chosen.append(best.instance)
    return chosen, _mutually_disjoint(chosen)


def _synthesise(space: ParameterSpace, cp_f: Instance, chosen: Sequence[Instance], rng: random.Random):
    values = []
    for i, p in enumerate(space.parameters):
        used = {cp_f[i]} | {g[i] for g in chosen}
        fresh = [v for v in p.domain if v not in used]
        if not fresh:
            fresh = [v for v in p.domain if v != cp_f[i]]
        if not fresh:
            return None
        values.append(rng.choice(fresh))
    return tuple(values)


def first_failing(engine: ExecutionEngine) -> Instance:
    for rec in sorted(engine.records(), key=lambda r: r.seq):
        if rec.evaluation is Evaluation.FAIL:
            return rec.instance
    raise NoFailingInstance("history contains no failing instance")


def stacked_shortcut(engine: ExecutionEngine, space: ParameterSpace, cp_f: Instance | None = None,
                     k: int = DEFAULT_K, order: Sequence[str] | None = None, seed: int = 0,
                     goods: Sequence[Instance] | None = None) -> StackedReport:
    cp_f = first_failing(engine) if cp_f is None else space.instance(cp_f)
    before = engine.executed
    if goods is None:
        goods, mutual = find_disjoint_good_set(engine, space, cp_f, k, seed=seed)
    else:
        goods = [space.instance(g) for g in goods]
        mutual = _mutually_disjoint(goods)
    report = StackedReport(Conjunction(), k_requested=k, k_found=len(goods),
                           mutually_disjoint=mutual, base_fail=cp_f, goods=list(goods),
                           synthesis_executions=engine.executed - before)
    union = Conjunction()
    for g in goods:
        try:
            run = shortcut(engine, space, cp_f, g, order, generator="stacked")
        except ShortcutInterrupted as exc:
            report.errors.append(exc)
            report.per_run.append(exc.report)
            continue
        except ValueError as exc:
            report.errors.append(exc)
            continue
        report.per_run.append(run)
        union = union | run.asserted
    union = space.conjunction(union)
    if union and sanity_violation(engine, union) is not None:
        report.union_rejected = True
    elif union:
        report.asserted = union
    return report
