"""Synthetic pipelines with planted faults, a brute-force cause oracle, and scoring."""
from __future__ import annotations

import csv
import enum
import logging
import random
import time
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .engine import ExecutionEngine, OracleBackend
from .exceptions import BudgetExhausted, DebugError, UniverseTooLarge
from .minimize import expressible_primes
from .model import (
    CauseDNF,
    Conjunction,
    Cube,
    Evaluation,
    Kind,
    Origin,
    Parameter,
    ParameterSpace,
    ProvenanceRecord,
    Triple,
    bits,
    cube_array,
    cube_contains,
    disjoint,
    expressible_sets,
    uncovered_point,
    universe_mask,
)

logger = logging.getLogger(__name__)

DEFAULT_COMPARATORS = ("=", "<=", ">", "!=")
CATEGORICAL_COMPARATORS = ("=", "!=")
DEFAULT_CAP = 10**6
DEFAULT_LITERAL_BOUND = 4
# cells of the (F-set x ... x F-set) table the dense enumerator may allocate
DENSE_LIMIT = 4 * 10**6


class Scenario(str, enum.Enum):
    SINGLE = "single"
    CONJUNCTION = "conjunction"
    DISJUNCTION = "disjunction"


class Mode(str, enum.Enum):
    FIND_ONE = "one"
    FIND_ALL = "all"


@dataclass(frozen=True)
class SyntheticPipeline:
    space: ParameterSpace
    planted: CauseDNF
    seed: int

    def backend(self, delay: float = 0.0) -> OracleBackend:
        return OracleBackend(self.space, self.planted, delay=delay)

    def cubes(self) -> list:
        return [self.space.cube(c) for c in self.planted]


@dataclass
class GroundTruth:
    minimal_causes: list
    cubes: list
    exhaustive: bool = True

    def __len__(self) -> int:
        return len(self.cubes)


# -- generation ---------------------------------------------------------------


def _make_space(rng: random.Random, n_params: int, domain_range) -> ParameterSpace:
    params = []
    for i in range(1, n_params + 1):
        size = rng.randint(*domain_range)
        if rng.random() < 0.5:
            kind = Kind.ORDINAL
            domain = tuple(range(1, size + 1)) if rng.random() < 0.5 else tuple(float(v) for v in range(1, size + 1))
        else:
            kind = Kind.CATEGORICAL
            domain = tuple(f"p{i}{j}" for j in range(1, size + 1))
        params.append(Parameter(f"p{i}", kind, domain))
    return ParameterSpace(params)


def _sample_triple(rng: random.Random, p: Parameter, comparators) -> Triple:
    allowed = comparators if p.kind is Kind.ORDINAL else tuple(c for c in comparators if c in CATEGORICAL_COMPARATORS)
    if not allowed:
        allowed = CATEGORICAL_COMPARATORS
    while True:
        value = rng.choice(p.domain)
        op = rng.choice(allowed)
        if p.value_set(op, value):
            return Triple(p.name, op, value)


def _sample_conjunct(rng: random.Random, space: ParameterSpace, comparators, size_range) -> Conjunction:
    names = list(space.names)
    lo, hi = size_range
    hi = min(hi if hi is not None else len(names), len(names))
    while True:
        chosen = [n for n in names if rng.random() < 0.5]
        if lo <= len(chosen) <= hi:
            break
    return space.conjunction(_sample_triple(rng, space[n], comparators) for n in chosen)


def generate(seed: int, param_count_range=(3, 15), domain_size_range=(5, 30), extra_conjunct_prob: float = 0.5,
             scenario: Scenario | str | None = None, comparators: Sequence[str] = DEFAULT_COMPARATORS,
             max_conjuncts: int | None = None, max_universe: int | None = None,
             max_retries: int = 100) -> SyntheticPipeline:
    """Random space plus planted DNF fault.

    The conjunct's parameter subset is uniform over non-empty subsets; the
    scenario restricts it (``single``: one triple, ``conjunction``: one
    conjunct of two or more triples, ``disjunction``: two or more conjuncts).
    Pipelines whose universe is all-fail, or larger than ``max_universe``, are
    regenerated from a derived seed.
    """
    if not 0 <= extra_conjunct_prob < 1:
        raise ValueError("extra_conjunct_prob must be in [0, 1)")
    scenario = Scenario(scenario) if scenario is not None else None
    for attempt in range(max_retries):
        rng = random.Random(seed if attempt == 0 else f"{seed}:{attempt}")
        n = rng.randint(*param_count_range)
        space = _make_space(rng, n, domain_size_range)
        if max_universe is not None and space.size > max_universe:
            continue
        size_range = (1, None)
        if scenario is Scenario.SINGLE:
            size_range = (1, 1)
        elif scenario is Scenario.CONJUNCTION:
            size_range = (2, None)
        conjuncts = [_sample_conjunct(rng, space, comparators, size_range)]
        if scenario is Scenario.DISJUNCTION:
            conjuncts.append(_sample_conjunct(rng, space, comparators, size_range))
        if scenario in (None, Scenario.DISJUNCTION):
            while rng.random() < extra_conjunct_prob and (max_conjuncts is None or len(conjuncts) < max_conjuncts):
                conjuncts.append(_sample_conjunct(rng, space, comparators, size_range))
        if max_conjuncts is not None:
            conjuncts = conjuncts[:max_conjuncts]
        planted = CauseDNF(tuple(conjuncts))
        if uncovered_point([space.cube(c) for c in planted], space.full_cube) is None:
            continue
        return SyntheticPipeline(space, planted, seed)
    raise DebugError(f"no non-degenerate pipeline after {max_retries} attempts from seed {seed}")


def worked_example() -> SyntheticPipeline:
    """Three parameters of four values with a two-conjunct planted fault."""
    space = ParameterSpace([
        Parameter("p1", Kind.ORDINAL, (1.0, 2.0, 3.0, 4.0)),
        Parameter("p2", Kind.ORDINAL, (1, 2, 3, 4)),
        Parameter("p3", Kind.CATEGORICAL, ("p31", "p32", "p33", "p34")),
    ])
    planted = space.dnf([
        [("p1", "=", 4.0)],
        [("p2", "<", 3), ("p3", "!=", "p34")],
    ])
    return SyntheticPipeline(space, planted, 0)


# -- ground truth -------------------------------------------------------------


def _candidate_sets(p: Parameter, vocabulary: str):
    """``(mask, cost)`` pairs including the unconstrained full set (cost 0)."""
    return [(p.full, 0)] + expressible_sets(p, vocabulary)


def enumerate_minimal_causes(pipeline: SyntheticPipeline, literal_bound: int | None = DEFAULT_LITERAL_BOUND,
                             cap: int = DEFAULT_CAP, vocabulary: str = "full",
                             fallback: bool = True) -> GroundTruth:
    """All maximal expressible conjunctions whose every instance fails.

    Every product of expressible value sets is checked against the universe;
    definitive ones not strictly contained in another definitive one are kept.
    ``literal_bound`` (raised to the planted maximum) limits the reported
    conjunctions.  When the product table is too large and ``fallback`` is
    set, the primes are computed by consensus instead and ``exhaustive`` is
    False on the result.
    """
    space = pipeline.space
    if space.size > cap:
        if not fallback:
            raise UniverseTooLarge(f"universe of {space.size} assignments exceeds cap {cap}")
        return _consensus_truth(pipeline, vocabulary)
    if literal_bound is not None:
        planted_max = max((len(c) for c in pipeline.planted), default=0)
        literal_bound = max(literal_bound, planted_max)
    sets = [_candidate_sets(p, vocabulary) for p in space.parameters]
    cells = int(np.prod([len(s) for s in sets], dtype=np.float64))
    if cells > DENSE_LIMIT:
        if not fallback:
            raise UniverseTooLarge(f"{cells} candidate conjunctions exceed the dense limit")
        return _consensus_truth(pipeline, vocabulary)
    fail = universe_mask(space, pipeline.cubes())
    # successes per product: contract the success tensor one axis at a time
    counts = (~fail).astype(np.int64)
    for j, (p, cand) in enumerate(zip(space.parameters, sets)):
        member = np.array([[(m >> r) & 1 for r in range(p.size)] for m, _ in cand], dtype=np.int64)
        counts = np.tensordot(member, counts, axes=([1], [j]))
        counts = np.moveaxis(counts, 0, j)
    definitive = counts == 0
    # non-maximal iff one coordinate can be widened to a larger expressible set
    nonmax = np.zeros_like(definitive)
    for j, cand in enumerate(sets):
        sup = np.array([[a != b and a & b == a for b, _ in cand] for a, _ in cand], dtype=np.int64)
        moved = np.moveaxis(definitive.astype(np.int64), j, -1)
        widened = np.moveaxis(moved @ sup.T > 0, -1, j)
        nonmax |= widened
    found = np.argwhere(definitive & ~nonmax)
    cubes = []
    for idx in found:
        cost = sum(sets[j][k][1] for j, k in enumerate(idx))
        if literal_bound is not None and cost > literal_bound:
            continue
        cubes.append(tuple(sets[j][k][0] for j, k in enumerate(idx)))
    return _truth_from_cubes(space, cubes, exhaustive=True)


def _consensus_truth(pipeline: SyntheticPipeline, vocabulary: str) -> GroundTruth:
    cubes = expressible_primes(pipeline.space, pipeline.cubes(), vocabulary)
    return _truth_from_cubes(pipeline.space, cubes, exhaustive=False)


def _truth_from_cubes(space: ParameterSpace, cubes: Iterable[Cube], exhaustive: bool) -> GroundTruth:
    cubes = sorted(set(cubes), key=lambda c: (len(space.render(c)), str(space.render(c))))
    return GroundTruth([space.render(c) for c in cubes], cubes, exhaustive)


def is_definitive(space: ParameterSpace, fail: np.ndarray, cube: Cube) -> bool:
    return not (cube_array(space, cube) & ~fail).any()


# -- scoring ------------------------------------------------------------------


@dataclass
class ScoreCard:
    precision: Fraction
    recall: Fraction
    f_measure: Fraction
    mode: Mode
    executions_used: int = 0
    hits: int = 0
    false_positives: int = 0
    pipelines: int = 0
    matched: int = 0
    asserted_count: int = 0
    truth_count: int = 0

    def as_row(self) -> dict:
        return {
            "mode": self.mode.value,
            "precision": float(self.precision),
            "recall": float(self.recall),
            "f_measure": float(self.f_measure),
            "executions_used": self.executions_used,
        }


def _f(p: Fraction, r: Fraction) -> Fraction:
    return Fraction(0) if p + r == 0 else 2 * p * r / (p + r)


def _ratio(a: int, b: int) -> Fraction:
    return Fraction(a, b) if b else Fraction(0)


def _asserted_cubes(space: ParameterSpace, asserted) -> set:
    return {space.cube(c) for c in asserted}


def score(asserted: Sequence, truths: Sequence[GroundTruth], mode: Mode | str, spaces: Sequence[ParameterSpace],
          executions: Sequence[int] | None = None) -> ScoreCard:
    """Precision, recall and F-measure over a set of pipelines.

    Conjunctions match by satisfaction set.  FindOne counts a pipeline as a
    hit when any asserted conjunction is a true minimal cause; its precision
    denominator adds every asserted conjunction that is not one.  Empty
    denominators score 0.
    """
    mode = Mode(mode)
    if not truths:
        raise ValueError("score needs at least one pipeline")
    if not len(asserted) == len(truths) == len(spaces):
        raise ValueError("asserted, truths and spaces must align")
    hits = fps = inter = n_asserted = n_truth = 0
    for a, t, space in zip(asserted, truths, spaces):
        got = _asserted_cubes(space, a)
        truth = set(t.cubes)
        common = len(got & truth)
        hits += common > 0
        fps += len(got - truth)
        inter += common
        n_asserted += len(got)
        n_truth += len(truth)
    if mode is Mode.FIND_ONE:
        precision = _ratio(hits, hits + fps)
        recall = _ratio(hits, len(truths))
    else:
        precision = _ratio(inter, n_asserted)
        recall = _ratio(inter, n_truth)
    return ScoreCard(precision, recall, _f(precision, recall), mode, sum(executions or ()), hits, fps, len(truths),
                     inter, n_asserted, n_truth)


# -- seeded histories ---------------------------------------------------------


def _point_in(rng: random.Random, cube: Cube) -> tuple:
    return tuple(rng.choice(bits(m)) for m in cube)


def initial_history(pipeline: SyntheticPipeline, seed: int = 0, extra: int = 0,
                    disjoint_tries: int = 200) -> list:
    """A failing instance, a disjoint succeeding one when found, plus random instances."""
    rng = random.Random(seed)
    space = pipeline.space
    cubes = pipeline.cubes()
    fails = lambda ranks: any(cube_contains(c, ranks) for c in cubes)  # noqa: E731
    f_ranks = _point_in(rng, rng.choice(cubes))
    chosen = [f_ranks]
    for _ in range(disjoint_tries):
        g = tuple(rng.choice([r for r in range(d) if r != fr] or [fr]) for d, fr in zip(space.dims, f_ranks))
        if not fails(g):
            chosen.append(g)
            break
    for _ in range(extra):
        chosen.append(tuple(rng.randrange(d) for d in space.dims))
    records, seen = [], set()
    for ranks in chosen:
        if ranks in seen:
            continue
        seen.add(ranks)
        ev = Evaluation.FAIL if fails(ranks) else Evaluation.SUCCEED
        records.append(ProvenanceRecord(space.decode(ranks), ev, Origin.GIVEN, "seed", len(records)))
    return records


def has_disjoint_pair(records: Sequence[ProvenanceRecord]) -> bool:
    fails = [r.instance for r in records if r.evaluation is Evaluation.FAIL]
    goods = [r.instance for r in records if r.evaluation is Evaluation.SUCCEED]
    return any(disjoint(f, g) for f in fails for g in goods)


# -- benchmark driver ---------------------------------------------------------

ALGORITHMS = ("shortcut", "stacked", "ddt")


@dataclass
class BenchRow:
    pipeline: int
    seed: int
    algorithm: str
    budget_group: str
    budget: int | None
    asserted: CauseDNF
    executions_used: int
    truth_size: int
    card: ScoreCard
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)


def run_algorithm(name: str, pipeline: SyntheticPipeline, history: Sequence[ProvenanceRecord], mode: Mode | str,
                  budget: int | None = None, workers: int = 1, k: int = 4, samples: int | None = 30,
                  seed: int = 0) -> tuple:
    """Run one debugger on a fresh engine; returns ``(asserted DNF, new executions)``."""
    from .ddt import ddt_search
    from .shortcut import ShortcutInterrupted, find_disjoint_pair, shortcut
    from .stacked import stacked_shortcut

    mode = Mode(mode)
    space = pipeline.space
    with ExecutionEngine(space, pipeline.backend(), budget=budget, workers=workers) as engine:
        engine.seed_history(history)
        asserted = CauseDNF()
        try:
            if name == "shortcut":
                cp_f, cp_g, _ = find_disjoint_pair(engine.records(), space)
                rep = shortcut(engine, space, cp_f, cp_g)
                asserted = CauseDNF((rep.asserted,)) if rep.asserted else CauseDNF()
            elif name == "stacked":
                rep = stacked_shortcut(engine, space, k=k, seed=seed)
                asserted = CauseDNF((rep.asserted,)) if rep.asserted else CauseDNF()
            elif name == "ddt":
                rep = ddt_search(engine, space, goal=mode.value, samples=samples, seed=seed)
                asserted = rep.causes
            else:
                raise ValueError(f"unknown algorithm {name!r}")
        except (ShortcutInterrupted, BudgetExhausted):
            pass
        except DebugError as exc:
            logger.debug("pipeline %s: %s", pipeline.seed, exc)
        return asserted, engine.executed


def run_benchmark(scenario: Scenario | str, pipelines: int, seed: int = 0, algorithms: Sequence[str] = ALGORITHMS,
                  mode: Mode | str = Mode.FIND_ONE, budget_groups: Sequence[str] | None = None,
                  param_count_range=(3, 6), domain_size_range=(5, 8), history_extra: int = 5,
                  samples: int | None = 30, k: int = 4, workers: int = 1, literal_bound: int | None = None,
                  progress=None) -> list:
    """Score each algorithm on ``pipelines`` generated pipelines.

    For every budget group ``g`` the budget is the number of new executions
    algorithm ``g`` needed (unbounded) on that pipeline, and every algorithm
    then runs under that budget.  Without budget groups each algorithm runs
    unbounded in its own group.
    """
    mode = Mode(mode)
    rows = []
    for i in range(pipelines):
        pseed = seed * 100003 + i
        pipe = generate(pseed, param_count_range, domain_size_range, scenario=scenario)
        truth = enumerate_minimal_causes(pipe, literal_bound=literal_bound)
        history = initial_history(pipe, seed=pseed, extra=history_extra)
        groups = list(budget_groups) if budget_groups else [None]
        for group in groups:
            budget = None
            if group is not None:
                _, budget = run_algorithm(group, pipe, history, mode, None, workers, k, samples, pseed)
            for algo in algorithms:
                start = time.perf_counter()
                asserted, used = run_algorithm(algo, pipe, history, mode, budget, workers, k, samples, pseed)
                card = score([asserted], [truth], mode, [pipe.space], [used])
                rows.append(BenchRow(i, pseed, algo, group or algo, budget, asserted, used, len(truth), card,
                                     time.perf_counter() - start))
        if progress:
            progress(i + 1, pipelines)
    return rows


def aggregate(rows: Sequence[BenchRow], mode: Mode | str) -> dict:
    """Pooled score per (budget group, algorithm) using the set-level formulas."""
    mode = Mode(mode)
    out = {}
    keys = sorted({(r.budget_group, r.algorithm) for r in rows})
    for key in keys:
        sel = [r for r in rows if (r.budget_group, r.algorithm) == key]
        out[key] = _pooled(sel, mode)
    return out


def _pooled(rows: Sequence[BenchRow], mode: Mode) -> ScoreCard:
    cards = [r.card for r in rows]
    hits = sum(c.hits for c in cards)
    fps = sum(c.false_positives for c in cards)
    inter = sum(c.matched for c in cards)
    n_asserted = sum(c.asserted_count for c in cards)
    n_truth = sum(c.truth_count for c in cards)
    if mode is Mode.FIND_ONE:
        precision = _ratio(hits, hits + fps)
        recall = _ratio(hits, len(rows))
    else:
        precision = _ratio(inter, n_asserted)
        recall = _ratio(inter, n_truth)
    return ScoreCard(precision, recall, _f(precision, recall), mode, sum(r.executions_used for r in rows),
                     hits, fps, len(rows), inter, n_asserted, n_truth)


SCORE_COLUMNS = ["pipeline", "seed", "algorithm", "budget_group", "budget", "executions_used", "truth_size",
                 "asserted", "precision", "recall", "f_measure", "seconds"]


def write_scores(path, rows: Sequence[BenchRow], mode: Mode | str) -> None:
    """Per-pipeline rows followed by one aggregate row per (group, algorithm)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCORE_COLUMNS)
        for r in rows:
            w.writerow([r.pipeline, r.seed, r.algorithm, r.budget_group, "" if r.budget is None else r.budget,
                        r.executions_used, r.truth_size, " | ".join(str(c) for c in r.asserted),
                        _fmt(r.card.precision), _fmt(r.card.recall), _fmt(r.card.f_measure), f"{r.seconds:.4f}"])
        for (group, algo), card in aggregate(rows, mode).items():
            w.writerow(["aggregate", "", algo, group, "", card.executions_used, "", "",
                        _fmt(card.precision), _fmt(card.recall), _fmt(card.f_measure), ""])


def write_long(path, rows: Sequence[BenchRow], mode: Mode | str, scenario: str) -> None:
    """Long format: one (scenario, mode, budget group, algorithm, metric, value) per line."""
    mode = Mode(mode)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "mode", "budget_group", "algorithm", "metric", "value"])
        for (group, algo), card in aggregate(rows, mode).items():
            for metric in ("precision", "recall", "f_measure"):
                w.writerow([scenario, mode.value, group, algo, metric, _fmt(getattr(card, metric))])


def _fmt(x: Fraction) -> str:
    return f"{float(x):.6f}"

