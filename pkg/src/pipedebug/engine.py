"""Black-box evaluation of pipeline instances.

The engine owns the cache (instance -> evaluation), the provenance log and the
execution budget.  Only cache misses count as executions.
"""
from __future__ import annotations

import csv
import json
import logging
import operator
import re
import shlex
import subprocess
import threading
import time
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .exceptions import (
    BackendFailure,
    BudgetExhausted,
    ConfigError,
    InconsistentHistory,
    ReplayMiss,
)
from .model import (
    CauseDNF,
    Evaluation,
    Instance,
    Origin,
    ParameterSpace,
    ProvenanceRecord,
    cube_contains,
    format_value,
)

logger = logging.getLogger(__name__)

_COMPARE = {
    "=": operator.eq,
    "!=": operator.ne,
    "<=": operator.le,
    "<": operator.lt,
    ">": operator.gt,
    ">=": operator.ge,
}
_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_.\-]*)\}")


# -- success rules ------------------------------------------------------------


@dataclass(frozen=True)
class ExitCodeRule:
    def __call__(self, returncode: int, stdout: str) -> Evaluation:
        return Evaluation.SUCCEED if returncode == 0 else Evaluation.FAIL


@dataclass(frozen=True)
class ThresholdRule:
    """Succeed iff the number extracted from stdout satisfies ``value <op> bound``.

    ``pattern`` is a regex; its first group (or whole match) must parse as a float.
    The last match in the output wins.
    """

    pattern: str
    op: str
    bound: float

    def __post_init__(self):
        if self.op not in _COMPARE:
            raise ConfigError(f"unknown comparator {self.op!r} in success rule")
        re.compile(self.pattern)

    def __call__(self, returncode: int, stdout: str) -> Evaluation:
        matches = list(re.finditer(self.pattern, stdout))
        if not matches:
            raise BackendFailure(f"success rule pattern {self.pattern!r} not found in output")
        m = matches[-1]
        raw = m.group(1) if m.groups() else m.group(0)
        try:
            value = float(raw)
        except ValueError:
            raise BackendFailure(f"could not parse {raw!r} as a number") from None
        return Evaluation.SUCCEED if _COMPARE[self.op](value, self.bound) else Evaluation.FAIL


def success_rule_from_config(cfg: Mapping | None):
    if not cfg or cfg.get("type", "exit_code") in ("exit_code", "exit-code-zero", "exit_code_zero"):
        return ExitCodeRule()
    if cfg["type"] == "threshold":
        return ThresholdRule(cfg["pattern"], cfg.get("comparator", ">="), float(cfg["bound"]))
    raise ConfigError(f"unknown success rule {cfg['type']!r}")


# -- backends -----------------------------------------------------------------


class CommandBackend:
    """Runs an argument vector with ``{param}`` placeholders substituted.

    No shell is involved.  A timeout is a BackendFailure unless
    ``timeout_is_fail`` is set.
    """

    def __init__(self, space: ParameterSpace, command, success_rule=None, timeout: float = 0,
                 timeout_is_fail: bool = False, cwd: str | None = None):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = list(command)
        if not self.command:
            raise ConfigError("empty command")
        for arg in self.command:
            for name in _PLACEHOLDER.findall(arg):
                if name not in space.names:
                    raise ConfigError(f"command references undeclared parameter {name!r}")
        self.space = space
        self.success_rule = success_rule or ExitCodeRule()
        self.timeout = timeout
        self.timeout_is_fail = timeout_is_fail
        self.cwd = cwd

    def argv(self, instance: Instance) -> list:
        values = {n: format_value(v) for n, v in zip(self.space.names, instance)}
        return [_PLACEHOLDER.sub(lambda m: values[m.group(1)], arg) for arg in self.command]

    def __call__(self, instance: Instance) -> Evaluation:
        argv = self.argv(instance)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, cwd=self.cwd,
                                  timeout=self.timeout or None)
        except subprocess.TimeoutExpired:
            if self.timeout_is_fail:
                return Evaluation.FAIL
            raise BackendFailure(f"command timed out after {self.timeout}s: {argv}") from None
        except OSError as exc:
            raise BackendFailure(f"could not run {argv}: {exc}") from exc
        return self.success_rule(proc.returncode, proc.stdout)


class OracleBackend:
    """Evaluates FAIL iff the instance satisfies a conjunct of ``truth``.

    ``delay`` (seconds) simulates pipeline run time.  ``predicate`` overrides
    the DNF when given: it receives the value tuple and returns True for FAIL.
    """

    def __init__(self, space: ParameterSpace, truth: CauseDNF | None = None,
                 predicate: Callable[[Instance], bool] | None = None, delay: float = 0.0):
        if truth is None and predicate is None:
            raise ConfigError("oracle backend needs a ground-truth DNF or predicate")
        self.space = space
        self.truth = truth
        self.predicate = predicate
        self.delay = delay
        self._cubes = [space.cube(c) for c in truth] if truth is not None else []

    def fails(self, instance: Instance) -> bool:
        if self.predicate is not None:
            return bool(self.predicate(instance))
        ranks = self.space.encode(instance)
        return any(cube_contains(c, ranks) for c in self._cubes)

    def __call__(self, instance: Instance) -> Evaluation:
        if self.delay:
            time.sleep(self.delay)
        return Evaluation.FAIL if self.fails(instance) else Evaluation.SUCCEED


class ReplayBackend:
    """Answers only from a fixed table of past runs; anything else is a ReplayMiss."""

    def __init__(self, table: Mapping[Instance, Evaluation] | Iterable[ProvenanceRecord]):
        if not isinstance(table, Mapping):
            table = {r.instance: r.evaluation for r in table}
        self.table = dict(table)

    def __call__(self, instance: Instance) -> Evaluation:
        try:
            return self.table[instance]
        except KeyError:
            raise ReplayMiss(f"no recorded run for {instance}") from None


# -- engine -------------------------------------------------------------------


class ExecutionEngine:
    """Cached, budgeted, thread-safe evaluator.

    ``budget`` caps the number of cache misses.  Budget slots are reserved in
    submission order, so batches never overshoot it.
    """

    def __init__(self, space: ParameterSpace, backend: Callable[[Instance], Evaluation],
                 budget: int | None = None, workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        if budget is not None and budget < 0:
            raise ValueError("budget must be >= 0")
        self.space = space
        self.backend = backend
        self.budget = budget
        self.workers = workers
        self.cache: dict = {}
        self.provenance: list = []
        self.executed = 0
        self._reserved = 0
        self._inflight: dict = {}
        self._lock = threading.RLock()
        self._pool: ThreadPoolExecutor | None = None
        self.generator = "engine"

    # -- bookkeeping --

    @property
    def remaining(self) -> int | None:
        if self.budget is None:
            return None
        with self._lock:
            return self.budget - self._reserved

    def known(self, instance: Instance) -> Evaluation | None:
        return self.cache.get(instance)

    def records(self) -> list:
        with self._lock:
            return list(self.provenance)

    def _append(self, instance, evaluation, origin, generator) -> ProvenanceRecord:
        rec = ProvenanceRecord(instance, evaluation, origin, generator, len(self.provenance))
        self.provenance.append(rec)
        return rec

    def seed_history(self, records: Iterable) -> None:
        """Load prior runs as GIVEN provenance; costs nothing against the budget."""
        staged = {}
        for rec in records:
            if not isinstance(rec, ProvenanceRecord):
                instance, evaluation = rec
                rec = ProvenanceRecord(instance, evaluation)
            instance = self.space.instance(rec.instance)
            evaluation = Evaluation.parse(rec.evaluation)
            prior = staged.get(instance, self.cache.get(instance))
            if prior is not None and prior is not evaluation:
                raise InconsistentHistory(
                    f"{self.space.format_instance(instance)} recorded as both {prior.value} and {evaluation.value}")
            staged[instance] = evaluation
        with self._lock:
            for instance, evaluation in staged.items():
                if instance not in self.cache:
                    self.cache[instance] = evaluation
                    self._append(instance, evaluation, Origin.GIVEN, "seed")

    # -- evaluation --

    def _reserve(self, instance):
        """Return ('hit', ev) | ('wait', future) | ('run', future) under the lock."""
        ev = self.cache.get(instance)
        if ev is not None:
            return "hit", ev
        fut = self._inflight.get(instance)
        if fut is not None:
            return "wait", fut
        if self.budget is not None and self._reserved >= self.budget:
            raise BudgetExhausted(f"budget of {self.budget} executions exhausted")
        self._reserved += 1
        fut = Future()
        self._inflight[instance] = fut
        return "run", fut

    def _run(self, instance, fut: Future, generator: str, log: bool = True):
        try:
            evaluation = Evaluation.parse(self.backend(instance))
        except BaseException as exc:
            with self._lock:
                self._reserved -= 1
                del self._inflight[instance]
            fut.set_exception(exc if isinstance(exc, Exception) else BackendFailure(repr(exc)))
            return
        with self._lock:
            self.cache[instance] = evaluation
            self.executed += 1
            if log:
                self._append(instance, evaluation, Origin.GENERATED, generator)
            del self._inflight[instance]
        fut.set_result(evaluation)

    def evaluate(self, instance: Instance, generator: str | None = None) -> Evaluation:
        instance = self.space.instance(instance)
        with self._lock:
            state, payload = self._reserve(instance)
        if state == "hit":
            return payload
        if state == "run":
            self._run(instance, payload, generator or self.generator)
        return payload.result()

    def evaluate_batch(self, instances: Sequence[Instance], generator: str | None = None) -> list:
        """Evaluate in input order semantics; errors are returned positionally.

        Each entry of the result is an Evaluation or the exception raised for
        that position (BudgetExhausted, BackendFailure, ...).
        """
        generator = generator or self.generator
        results: list = [None] * len(instances)
        pending = []
        to_run = []
        with self._lock:
            for pos, raw in enumerate(instances):
                try:
                    instance = self.space.instance(raw)
                    state, payload = self._reserve(instance)
                except Exception as exc:
                    results[pos] = exc
                    continue
                if state == "hit":
                    results[pos] = payload
                else:
                    pending.append((pos, payload))
                    if state == "run":
                        to_run.append((instance, payload))
        if to_run:
            if self.workers == 1 or len(to_run) == 1:
                for instance, fut in to_run:
                    self._run(instance, fut, generator)
            else:
                pool = self._executor()
                for instance, fut in to_run:
                    pool.submit(self._run, instance, fut, generator, False)
        for pos, fut in pending:
            try:
                results[pos] = fut.result()
            except Exception as exc:
                results[pos] = exc
        if to_run and not (self.workers == 1 or len(to_run) == 1):
            # provenance follows submission order, not completion order
            with self._lock:
                for instance, fut in to_run:
                    if fut.exception() is None:
                        self._append(instance, fut.result(), Origin.GENERATED, generator)
        return results

    def _executor(self) -> ThreadPoolExecutor:
        with self._lock:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="pipedebug")
            return self._pool

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- provenance CSV -----------------------------------------------------------

META_COLUMNS = ("evaluation", "origin", "generator", "seq")


def write_provenance(path, space: ParameterSpace, records: Iterable[ProvenanceRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(space.names) + list(META_COLUMNS))
        for rec in records:
            writer.writerow([format_value(v) for v in rec.instance]
                            + [rec.evaluation.value, rec.origin.value, rec.generator, rec.seq])


def read_provenance(path, space: ParameterSpace) -> list:
    """Read a provenance CSV; meta columns other than ``evaluation`` are optional."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [n for n in space.names if n not in header]
        if missing or "evaluation" not in header:
            raise ConfigError(f"{path}: provenance header lacks {missing or ['evaluation']}")
        for row in reader:
            instance = tuple(space[n].parse(row[n]) for n in space.names)
            records.append(ProvenanceRecord(
                instance,
                Evaluation.parse(row["evaluation"]),
                Origin(row.get("origin") or "given"),
                row.get("generator") or "seed",
                int(row["seq"]) if row.get("seq") not in (None, "") else len(records),
            ))
    return records


# -- config -------------------------------------------------------------------


@dataclass
class PipelineConfig:
    space: ParameterSpace
    backend_kind: str
    raw: dict
    path: Path | None = None

    @property
    def workers(self) -> int:
        return int(self.raw.get("workers", 1))

    @property
    def budget(self) -> int | None:
        b = self.raw.get("budget")
        return None if b is None else int(b)

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    def make_backend(self, timeout: float | None = None, timeout_is_fail: bool | None = None):
        kind = self.backend_kind
        if kind == "command":
            if "command" not in self.raw:
                raise ConfigError("command backend requires a 'command' entry")
            return CommandBackend(
                self.space,
                self.raw["command"],
                success_rule_from_config(self.raw.get("success_rule")),
                timeout=self.raw.get("timeout", 0) if timeout is None else timeout,
                timeout_is_fail=bool(self.raw.get("timeout_is_fail", False)) if timeout_is_fail is None
                else timeout_is_fail,
                cwd=str(self.path.parent) if self.path else None,
            )
        if kind == "oracle":
            truth = self.raw.get("oracle")
            if truth is None:
                raise ConfigError("oracle backend requires an 'oracle' DNF")
            if isinstance(truth, list):
                truth = "\n".join(truth)
            return OracleBackend(self.space, self.space.parse_dnf(truth), delay=float(self.raw.get("delay", 0)))
        if kind == "replay":
            src = self.raw.get("replay")
            if src is None:
                raise ConfigError("replay backend requires a 'replay' provenance CSV")
            src = Path(src)
            if self.path is not None and not src.is_absolute():
                src = self.path.parent / src
            return ReplayBackend(read_provenance(src, self.space))
        raise ConfigError(f"unknown backend {kind!r}")


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(raw, path)


def config_from_dict(raw: Mapping, path=None) -> PipelineConfig:
    if "parameters" not in raw:
        raise ConfigError("config lacks 'parameters'")
    try:
        space = ParameterSpace.from_config(raw["parameters"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameter declaration: {exc}") from None
    kind = raw.get("backend", "command")
    if kind not in ("command", "oracle", "replay"):
        raise ConfigError(f"unknown backend {kind!r}")
    return PipelineConfig(space, kind, dict(raw), Path(path) if path else None)
