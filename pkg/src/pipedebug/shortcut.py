"""Shortcut: walk a failing instance toward a succeeding one, one parameter at a time."""
from __future__ import annotations

import random
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .engine import ExecutionEngine
from .exceptions import BudgetExhausted, DebugError, NoFailingInstance, NoSucceedingInstance
from .model import (
    Conjunction,
    Evaluation,
    Instance,
    ParameterSpace,
    ProvenanceRecord,
    Triple,
    hamming,
    satisfies,
)


@dataclass
class ShortcutReport:
    """Outcome of one Shortcut walk.

    ``asserted`` is empty when the sanity scan rejected ``proposed``.
    ``steps`` lists every substituted instance the walk evaluated, with its
    outcome; ``executions_used`` counts those steps and ``new_executions`` the
    subset that were cache misses.  Re-verifying base instances missing from
    the history is counted separately in ``verification_executions``.
    """

    asserted: Conjunction
    base_fail: Instance
    base_good: Instance
    pair_is_disjoint: bool
    executions_used: int = 0
    new_executions: int = 0
    verification_executions: int = 0
    sanity_rejected: bool = False
    proposed: Conjunction = field(default_factory=Conjunction)
    steps: list = field(default_factory=list)
    final: Instance | None = None


class ShortcutInterrupted(DebugError):
    """The budget ran out mid-walk; ``report`` holds the walk so far."""

    def __init__(self, report: ShortcutReport):
        super().__init__("budget exhausted during shortcut walk")
        self.report = report


def find_disjoint_pair(history: Iterable[ProvenanceRecord], space: ParameterSpace):
    """Pick the (fail, succeed) pair that differs on the most parameters.

    Ties go to the earliest failing record, then the earliest succeeding one.
    Returns ``(cp_f, cp_g, pair_is_disjoint)``.
    """
    records = sorted(history, key=lambda r: r.seq)
    fails = [r for r in records if r.evaluation is Evaluation.FAIL]
    goods = [r for r in records if r.evaluation is Evaluation.SUCCEED]
    if not fails:
        raise NoFailingInstance("history contains no failing instance")
    if not goods:
        raise NoSucceedingInstance("history contains no succeeding instance")
    best = None
    for f in fails:
        for g in goods:
            d = hamming(f.instance, g.instance)
            if best is None or d > best[0]:
                best = (d, f.instance, g.instance)
        if best[0] == len(space):
            break
    d, cp_f, cp_g = best
    return cp_f, cp_g, d == len(space)


def parameter_order(space: ParameterSpace, order: Sequence[str] | None = None, seed: int | None = None) -> list:
    names = list(order) if order is not None else list(space.names)
    if sorted(names) != sorted(space.names):
        raise ValueError(f"parameter order {names} is not a permutation of {list(space.names)}")
    if seed is not None:
        random.Random(seed).shuffle(names)
    return names


def sanity_violation(engine: ExecutionEngine, conj: Conjunction) -> Instance | None:
    """A known succeeding instance satisfying ``conj``, if any."""
    for rec in engine.records():
        if rec.evaluation is Evaluation.SUCCEED and satisfies(engine.space, rec.instance, conj):
            return rec.instance
    return None


def shortcut(engine: ExecutionEngine, space: ParameterSpace, cp_f: Instance, cp_g: Instance,
             order: Sequence[str] | None = None, generator: str = "shortcut") -> ShortcutReport:
    cp_f = space.instance(cp_f)
    cp_g = space.instance(cp_g)
    before = engine.executed
    if engine.evaluate(cp_f, generator) is not Evaluation.FAIL:
        raise ValueError(f"base instance {space.format_instance(cp_f)} does not fail")
    if engine.evaluate(cp_g, generator) is not Evaluation.SUCCEED:
        raise ValueError(f"good instance {space.format_instance(cp_g)} does not succeed")
    report = ShortcutReport(Conjunction(), cp_f, cp_g, hamming(cp_f, cp_g) == len(space),
                            verification_executions=engine.executed - before)
    before = engine.executed
    current = list(cp_f)
    for name in parameter_order(space, order):
        i = space.index(name)
        if cp_f[i] == cp_g[i]:
            continue
        trial = list(current)
        trial[i] = cp_g[i]
        trial = tuple(trial)
        try:
            outcome = engine.evaluate(trial, generator)
        except BudgetExhausted:
            report.final = tuple(current)
            report.new_executions = engine.executed - before
            raise ShortcutInterrupted(report) from None
        report.steps.append((name, trial, outcome))
        report.executions_used += 1
        if outcome is Evaluation.FAIL:
            current = list(trial)
    report.final = tuple(current)
    report.new_executions = engine.executed - before
    report.proposed = space.conjunction(
        Triple(n, "=", v) for n, v, f, g in zip(space.names, current, cp_f, cp_g) if v == f != g)
    if sanity_violation(engine, report.proposed) is not None:
        report.sanity_rejected = True
    else:
        report.asserted = report.proposed
    return report
