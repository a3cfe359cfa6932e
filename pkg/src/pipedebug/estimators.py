"""scikit-learn style wrappers: fit on a run history, predict failure for instances.

Labels follow the classifier convention ``1 = fail``, ``0 = succeed``.
"""
from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .ddt import Label, build_tree, extract_suspects, route, ddt_search
from .engine import ExecutionEngine, ReplayBackend
from .exceptions import ConfigError, DebugError
from .model import CauseDNF, Evaluation, Origin, ParameterSpace, ProvenanceRecord, cube_contains
from .shortcut import find_disjoint_pair, shortcut
from .stacked import stacked_shortcut


def check_space(space) -> ParameterSpace:
    """Accept a ParameterSpace or its config list (``[{name, kind, domain}, ...]``)."""
    if isinstance(space, ParameterSpace):
        return space
    if isinstance(space, Sequence) and not isinstance(space, (str, bytes)):
        return ParameterSpace.from_config(space)
    raise ConfigError(f"expected a ParameterSpace or parameter list, got {type(space).__name__}")


def _label(v) -> Evaluation:
    if isinstance(v, Evaluation):
        return v
    if isinstance(v, (bool, np.bool_)):
        return Evaluation.FAIL if v else Evaluation.SUCCEED
    if isinstance(v, (int, np.integer)):
        if v not in (0, 1):
            raise ValueError(f"outcome labels must be 0/1, got {v}")
        return Evaluation.FAIL if v else Evaluation.SUCCEED
    return Evaluation.parse(v)


def check_instances(X, space: ParameterSpace) -> list:
    """Rows as value tuples in space order; mappings are reordered by name."""
    if isinstance(X, np.ndarray) and X.ndim != 2:
        raise ValueError(f"expected a 2-d array of instances, got shape {X.shape}")
    rows = []
    for row in X:
        if isinstance(row, Mapping):
            rows.append(space.instance(row))
        else:
            row = list(row.tolist() if isinstance(row, np.ndarray) else row)
            if len(row) != len(space):
                raise ValueError(f"instance has {len(row)} values, space has {len(space)} parameters")
            rows.append(space.instance(row))
    return rows


def check_history(X, y, space: ParameterSpace) -> list:
    """Validated ``ProvenanceRecord`` list (origin GIVEN) from rows and outcomes."""
    rows = check_instances(X, space)
    labels = list(y)
    if len(labels) != len(rows):
        raise ValueError(f"X has {len(rows)} rows but y has {len(labels)} outcomes")
    return [ProvenanceRecord(r, _label(v), Origin.GIVEN, "seed", i) for i, (r, v) in enumerate(zip(rows, labels))]


def _wrap_backend(backend: Callable | None, history: list):
    if backend is None:
        return ReplayBackend(history)

    def call(instance):
        return _label(backend(instance))

    return call


class RootCauseDebugger(ClassifierMixin, BaseEstimator):
    """Root-cause search as an estimator.

    ``backend`` is called with a value tuple and returns an outcome (bool
    ``True`` for fail, an Evaluation, or ``"fail"``/``"succeed"``).  Without a
    backend the history is replayed, and a search that needs an unrecorded
    run raises ReplayMiss.
    After ``fit``, ``causes_`` holds the explanation and ``predict`` flags
    instances satisfying any of its conjunctions.
    """

    def __init__(self, space=None, backend=None, algorithm: str = "ddt", goal: str = "one",
                 budget: int | None = None, workers: int = 1, k: int = 4, samples: int | None = 30,
                 random_state: int = 0):
        self.space = space
        self.backend = backend
        self.algorithm = algorithm
        self.goal = goal
        self.budget = budget
        self.workers = workers
        self.k = k
        self.samples = samples
        self.random_state = random_state

    def fit(self, X, y):
        space = check_space(self.space)
        history = check_history(X, y, space)
        if self.algorithm not in ("shortcut", "stacked", "ddt"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.goal == "all" and self.algorithm != "ddt":
            raise ValueError("goal 'all' requires the ddt algorithm")
        engine = ExecutionEngine(space, _wrap_backend(self.backend, history), budget=self.budget,
                                 workers=self.workers)
        engine.seed_history(history)
        try:
            if self.algorithm == "shortcut":
                cp_f, cp_g, _ = find_disjoint_pair(engine.records(), space)
                report = shortcut(engine, space, cp_f, cp_g)
                causes = CauseDNF((report.asserted,)) if report.asserted else CauseDNF()
            elif self.algorithm == "stacked":
                report = stacked_shortcut(engine, space, k=self.k, seed=self.random_state)
                causes = CauseDNF((report.asserted,)) if report.asserted else CauseDNF()
            else:
                report = ddt_search(engine, space, goal=self.goal, samples=self.samples, seed=self.random_state)
                causes = report.causes
        finally:
            engine.close()
        self.space_ = space
        self.engine_ = engine
        self.report_ = report
        self.causes_ = causes
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = len(space)
        return self

    def predict(self, X):
        check_is_fitted(self, "causes_")
        cubes = [self.space_.cube(c) for c in self.causes_]
        out = []
        for inst in check_instances(X, self.space_):
            ranks = self.space_.encode(inst)
            out.append(int(any(cube_contains(c, ranks) for c in cubes)))
        return np.array(out, dtype=int)


class DebuggingTreeClassifier(ClassifierMixin, BaseEstimator):
    """The complete, unpruned debugging tree as a plain classifier.

    Mixed leaves (impossible for consistent histories) predict fail.
    """

    def __init__(self, space=None):
        self.space = space

    def fit(self, X, y):
        space = check_space(self.space)
        history = check_history(X, y, space)
        seen: dict = {}
        for rec in history:
            if seen.setdefault(rec.instance, rec.evaluation) is not rec.evaluation:
                raise DebugError(f"conflicting outcomes for {space.format_instance(rec.instance)}")
        if not history:
            raise ValueError("cannot fit on an empty history")
        self.space_ = space
        self.tree_ = build_tree(history, space)
        self.suspects_ = extract_suspects(self.tree_, space)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = len(space)
        return self

    def predict(self, X):
        check_is_fitted(self, "tree_")
        return np.array([int(route(self.tree_, self.space_, inst).label is not Label.PURE_SUCCEED)
                         for inst in check_instances(X, self.space_)], dtype=int)
