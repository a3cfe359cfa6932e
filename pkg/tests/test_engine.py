import json
import sys
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipedebug.engine import (
    CommandBackend,
    ExecutionEngine,
    ExitCodeRule,
    OracleBackend,
    ReplayBackend,
    ThresholdRule,
    config_from_dict,
    load_config,
    read_provenance,
    success_rule_from_config,
    write_provenance,
)
from pipedebug.exceptions import BackendFailure, BudgetExhausted, ConfigError, InconsistentHistory, ReplayMiss
from pipedebug.model import Evaluation, Kind, Origin, Parameter, ParameterSpace

from strategies import instances, spaces


def _oracle_engine(space, text, **kw):
    return ExecutionEngine(space, OracleBackend(space, space.parse_dnf(text)), **kw)


def test_oracle_walk_rows(space):
    eng = _oracle_engine(space, "LibraryVersion = 2.0")
    assert eng.evaluate(("Digits", "Decision Tree", 2.0)) is Evaluation.FAIL
    assert eng.evaluate(("Digits", "Decision Tree", 1.0)) is Evaluation.SUCCEED
    assert eng.executed == 2


def test_cache_hit_costs_nothing(space):
    eng = _oracle_engine(space, "LibraryVersion = 2.0")
    first = eng.evaluate(("Iris", "Decision Tree", 2.0))
    assert eng.evaluate(("Iris", "Decision Tree", 2.0)) is first
    assert eng.executed == 1 and len(eng.records()) == 1


def test_seed_history_rows(space, seed_runs):
    eng = _oracle_engine(space, "LibraryVersion = 2.0")
    eng.seed_history(seed_runs)
    assert len(eng.cache) == 3 and eng.executed == 0
    assert all(r.origin is Origin.GIVEN for r in eng.records())
    eng.seed_history([])
    assert len(eng.cache) == 3


def test_seed_history_conflict(space):
    inst = space.instance(("Iris", "Decision Tree", 1.0))
    eng = _oracle_engine(space, "LibraryVersion = 2.0")
    with pytest.raises(InconsistentHistory):
        eng.seed_history([(inst, Evaluation.SUCCEED), (inst, Evaluation.FAIL)])
    assert eng.cache == {}


def test_budget_enforced(space):
    eng = _oracle_engine(space, "LibraryVersion = 2.0", budget=1)
    eng.evaluate(("Iris", "Decision Tree", 1.0))
    with pytest.raises(BudgetExhausted):
        eng.evaluate(("Iris", "Decision Tree", 2.0))
    # cached instances stay available
    assert eng.evaluate(("Iris", "Decision Tree", 1.0)) is Evaluation.SUCCEED


def test_batch_positional_budget_errors(space):
    eng = _oracle_engine(space, "LibraryVersion = 2.0", budget=2, workers=3)
    batch = [("Iris", "Decision Tree", 1.0), ("Wine", "Decision Tree", 1.0), ("Digits", "Decision Tree", 1.0)]
    out = eng.evaluate_batch(batch)
    assert out[:2] == [Evaluation.SUCCEED, Evaluation.SUCCEED]
    assert isinstance(out[2], BudgetExhausted)
    assert eng.executed == 2
    eng.close()


def test_batch_dedup_and_order():
    s = ParameterSpace([Parameter("A", Kind.ORDINAL, (0, 1)), Parameter("B", Kind.ORDINAL, (0, 1))])
    eng = _oracle_engine(s, "A = 1", workers=4)
    out = eng.evaluate_batch([(1, 0), (0, 0), (1, 0)])
    assert out == [Evaluation.FAIL, Evaluation.SUCCEED, Evaluation.FAIL]
    assert eng.executed == 2
    eng.close()


def test_batch_five_distinct(space):
    eng = _oracle_engine(space, "LibraryVersion = 2.0", workers=5)
    insts = list(space.universe())[:5]
    eng.evaluate_batch(insts)
    assert eng.executed == 5
    eng.close()


def test_parallel_provenance_in_submission_order(space):
    eng = _oracle_engine(space, "LibraryVersion = 2.0", workers=4)
    insts = list(space.universe())
    eng.evaluate_batch(insts)
    assert [r.instance for r in eng.records()] == insts
    assert [r.seq for r in eng.records()] == list(range(len(insts)))
    eng.close()


def test_concurrent_evaluate_counts_each_instance_once(space):
    calls = []
    lock = threading.Lock()

    def backend(inst):
        with lock:
            calls.append(inst)
        return Evaluation.SUCCEED

    eng = ExecutionEngine(space, backend, workers=4)
    inst = space.instance(("Iris", "Decision Tree", 1.0))
    threads = [threading.Thread(target=eng.evaluate, args=(inst,)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert calls == [inst] and eng.executed == 1


def test_backend_exception_is_positional(space):
    def backend(inst):
        if inst[0] == "Wine":
            raise BackendFailure("boom")
        return Evaluation.SUCCEED

    eng = ExecutionEngine(space, backend, workers=2)
    out = eng.evaluate_batch([("Wine", "Decision Tree", 1.0), ("Iris", "Decision Tree", 1.0)])
    assert isinstance(out[0], BackendFailure) and out[1] is Evaluation.SUCCEED
    assert eng.executed == 1
    eng.close()


def test_replay_miss(space, seed_runs):
    eng = ExecutionEngine(space, ReplayBackend(seed_runs))
    assert eng.evaluate(seed_runs[0].instance) is Evaluation.SUCCEED
    with pytest.raises(ReplayMiss):
        eng.evaluate(("Wine", "Decision Tree", 2.0))
    assert isinstance(ReplayMiss("x"), BackendFailure)


def test_command_backend_exit_code(tmp_path, space):
    script = tmp_path / "pipe.py"
    script.write_text("import sys\nsys.exit(1 if sys.argv[1] == '2.0' else 0)\n")
    backend = CommandBackend(space, [sys.executable, str(script), "{LibraryVersion}"])
    assert backend(space.instance(("Iris", "Decision Tree", 2.0))) is Evaluation.FAIL
    assert backend(space.instance(("Iris", "Decision Tree", 1.0))) is Evaluation.SUCCEED


def test_command_backend_threshold_rule(tmp_path, space):
    script = tmp_path / "score.py"
    script.write_text("import sys\nprint('score', 0.2 if sys.argv[1] == 'Gradient Boosting' else 0.9)\n")
    rule = success_rule_from_config({"type": "threshold", "pattern": r"score (\S+)", "comparator": ">=",
                                     "bound": 0.6})
    backend = CommandBackend(space, [sys.executable, str(script), "{Estimator}"], rule)
    assert backend(space.instance(("Iris", "Gradient Boosting", 1.0))) is Evaluation.FAIL
    assert backend(space.instance(("Iris", "Decision Tree", 1.0))) is Evaluation.SUCCEED


def test_threshold_rule_missing_number():
    rule = ThresholdRule(r"score (\S+)", ">=", 0.6)
    with pytest.raises(BackendFailure):
        rule(0, "nothing here")
    assert rule(0, "score 0.1\nscore 0.7") is Evaluation.SUCCEED
    assert ExitCodeRule()(3, "") is Evaluation.FAIL


def test_command_placeholder_validation(space):
    with pytest.raises(ConfigError):
        CommandBackend(space, ["echo", "{Nope}"])


def test_command_timeout(tmp_path, space):
    script = tmp_path / "slow.py"
    script.write_text("import time\ntime.sleep(5)\n")
    inst = space.instance(("Iris", "Decision Tree", 1.0))
    with pytest.raises(BackendFailure):
        CommandBackend(space, [sys.executable, str(script)], timeout=0.2)(inst)
    assert CommandBackend(space, [sys.executable, str(script)], timeout=0.2, timeout_is_fail=True)(inst) \
        is Evaluation.FAIL


def test_missing_executable(space):
    with pytest.raises(BackendFailure):
        CommandBackend(space, ["/nonexistent/binary"])(space.instance(("Iris", "Decision Tree", 1.0)))


def test_provenance_csv_round_trip(tmp_path, space, lib_engine):
    lib_engine.evaluate(("Wine", "Decision Tree", 2.0), "shortcut")
    path = tmp_path / "prov.csv"
    write_provenance(path, space, lib_engine.records())
    header = path.read_text().splitlines()[0]
    assert header == "Dataset,Estimator,LibraryVersion,evaluation,origin,generator,seq"
    assert read_provenance(path, space) == lib_engine.records()


def test_config_loading(tmp_path):
    cfg = {"parameters": [{"name": "A", "kind": "ordinal", "domain": [1, 2, 3]}],
           "backend": "oracle", "oracle": ["A > 2"], "workers": 2, "budget": 7, "seed": 3}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    loaded = load_config(path)
    assert (loaded.workers, loaded.budget, loaded.seed) == (2, 7, 3)
    assert loaded.make_backend()((3,)) is Evaluation.FAIL
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        config_from_dict({"parameters": cfg["parameters"], "backend": "ftp"})
    with pytest.raises(ConfigError):
        config_from_dict({"backend": "oracle"})


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_parallel_matches_sequential(data):
    s = data.draw(spaces())
    batch = data.draw(st.lists(instances(s), max_size=12))
    first = s.parameters[0]
    truth = s.dnf([[(first.name, "=", first.domain[0])]])
    seq = ExecutionEngine(s, OracleBackend(s, truth))
    par = ExecutionEngine(s, OracleBackend(s, truth), workers=4)
    a = [seq.evaluate(i) for i in batch]
    b = par.evaluate_batch(batch)
    par.close()
    assert a == b
    assert sorted(map(repr, seq.cache.items())) == sorted(map(repr, par.cache.items()))
    assert seq.executed == par.executed == len(set(batch))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_determinism_and_cost_accounting(data):
    s = data.draw(spaces())
    batch = data.draw(st.lists(instances(s), max_size=15))
    eng = ExecutionEngine(s, OracleBackend(s, predicate=lambda inst: hash(inst) % 3 == 0))
    first = [eng.evaluate(i) for i in batch]
    assert [eng.evaluate(i) for i in batch] == first
    assert eng.executed == len(set(batch))
