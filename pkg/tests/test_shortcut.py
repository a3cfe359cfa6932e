
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from pipedebug.engine import ExecutionEngine, OracleBackend
from pipedebug.exceptions import NoFailingInstance, NoSucceedingInstance
from pipedebug.model import Evaluation, Kind, Origin, Parameter, ParameterSpace, ProvenanceRecord, hamming
from pipedebug.shortcut import ShortcutInterrupted, find_disjoint_pair, parameter_order, shortcut

import oracle
from conftest import as_oracle_dnf, as_oracle_params


def _examples_space():
    return ParameterSpace([
        Parameter("p1", Kind.CATEGORICAL, ("v1", "v1'", "v1''")),
        Parameter("p2", Kind.CATEGORICAL, ("v2", "v2'", "v2''")),
        Parameter("p3", Kind.CATEGORICAL, ("v3", "v3'")),
    ])


def _run(space, truth, cp_f, cp_g, order=None):
    eng = ExecutionEngine(space, OracleBackend(space, space.parse_dnf(truth)))
    return shortcut(eng, space, cp_f, cp_g, order), eng


def test_find_disjoint_pair_seed_runs(space, seed_runs):
    cp_f, cp_g, dis = find_disjoint_pair(seed_runs, space)
    assert cp_f == ("Iris", "Gradient Boosting", 2.0)
    assert cp_g == ("Digits", "Decision Tree", 1.0)
    assert dis


def test_find_disjoint_pair_errors(space, seed_runs):
    with pytest.raises(NoSucceedingInstance):
        find_disjoint_pair([seed_runs[2]], space)
    with pytest.raises(NoFailingInstance):
        find_disjoint_pair(seed_runs[:2], space)


def test_find_disjoint_pair_non_disjoint(space):
    rows = [(("Iris", "Gradient Boosting", 2.0), "fail"), (("Iris", "Decision Tree", 1.0), "succeed"),
            (("Digits", "Gradient Boosting", 1.0), "succeed"), (("Wine", "Logistic Regression", 2.0), "succeed")]
    recs = [ProvenanceRecord(space.instance(i), Evaluation.parse(e), Origin.GIVEN, "seed", n)
            for n, (i, e) in enumerate(rows)]
    cp_f, cp_g, dis = find_disjoint_pair(recs, space)
    # brute force: maximum hamming over fail/succeed pairs, earliest wins ties
    best = max((hamming(f.instance, g.instance), -g.seq) for f in recs for g in recs
               if f.evaluation is Evaluation.FAIL and g.evaluation is Evaluation.SUCCEED)
    assert hamming(cp_f, cp_g) == best[0] == 2 and not dis
    assert cp_g == recs[-best[1]].instance


def test_seed_runs_walk(lib_engine, space, seed_runs):
    cp_f, cp_g, _ = find_disjoint_pair(seed_runs, space)
    rep = shortcut(lib_engine, space, cp_f, cp_g, ["Dataset", "Estimator", "LibraryVersion"])
    assert [(t, o) for _, t, o in rep.steps] == [
        (("Digits", "Gradient Boosting", 2.0), Evaluation.FAIL),
        (("Digits", "Decision Tree", 2.0), Evaluation.FAIL),
        (("Digits", "Decision Tree", 1.0), Evaluation.SUCCEED),
    ]
    assert rep.asserted == space.parse_conjunction("LibraryVersion = 2.0")
    assert rep.executions_used == 3
    # the last step re-runs CP_g, which is already known
    assert rep.new_executions == lib_engine.executed == 2
    assert not rep.sanity_rejected


def test_overlapping_causes_truncate():
    s = _examples_space()
    truth = "p1 = v1 AND p2 = v2\nOR p1 = v1' AND p3 = v3"
    rep, _ = _run(s, truth, ("v1", "v2", "v3"), ("v1'", "v2'", "v3'"))
    assert rep.asserted == s.parse_conjunction("p3 = v3")


def test_sufficiently_different_causes():
    s = _examples_space()
    truth = "p1 = v1 AND p2 = v2\nOR p1 = v1' AND p2 = v2'' AND p3 = v3"
    rep, _ = _run(s, truth, ("v1", "v2", "v3"), ("v1'", "v2'", "v3'"))
    assert rep.asserted == s.parse_conjunction("p1 = v1 AND p2 = v2")


def test_sanity_scan_passes(space):
    # a known success satisfies the proposal, so nothing is asserted
    eng = ExecutionEngine(space, OracleBackend(space, space.parse_dnf("Dataset = Iris AND LibraryVersion = 2.0")))
    eng.seed_history([(space.instance(("Iris", "Decision Tree", 1.0)), Evaluation.SUCCEED)])
    rep = shortcut(eng, space, ("Iris", "Gradient Boosting", 2.0), ("Digits", "Decision Tree", 1.0),
                   ["LibraryVersion", "Dataset", "Estimator"])
    # walk: LibraryVersion->1.0 succeeds, Dataset->Digits succeeds, Estimator swap fails
    assert rep.proposed == space.parse_conjunction("Dataset = Iris AND LibraryVersion = 2.0")
    assert not rep.sanity_rejected
    eng.seed_history([(space.instance(("Iris", "Logistic Regression", 2.0)), Evaluation.FAIL)])
    rep2 = shortcut(eng, space, ("Iris", "Gradient Boosting", 2.0), ("Digits", "Decision Tree", 1.0),
                    ["LibraryVersion", "Dataset", "Estimator"])
    assert rep2.asserted == rep.asserted


def test_sanity_scan_empties_truncated_assertion():
    s = _examples_space()
    eng = ExecutionEngine(s, OracleBackend(s, s.parse_dnf("p1 = v1 AND p2 = v2\nOR p1 = v1' AND p3 = v3")))
    # a known success satisfying the truncated {p3 = v3}
    eng.seed_history([(("v1''", "v2'", "v3"), Evaluation.SUCCEED)])
    rep = shortcut(eng, s, ("v1", "v2", "v3"), ("v1'", "v2'", "v3'"))
    assert rep.proposed == s.parse_conjunction("p3 = v3")
    assert rep.sanity_rejected and not rep.asserted


def test_shared_values_never_asserted(space):
    eng = ExecutionEngine(space, OracleBackend(space, space.parse_dnf("LibraryVersion = 2.0")))
    rep = shortcut(eng, space, ("Iris", "Gradient Boosting", 2.0), ("Iris", "Decision Tree", 1.0))
    assert not rep.pair_is_disjoint
    assert all(t.param != "Dataset" for t in rep.asserted)
    assert [name for name, _, _ in rep.steps] == ["Estimator", "LibraryVersion"]


def test_base_instances_verified(space):
    eng = ExecutionEngine(space, OracleBackend(space, space.parse_dnf("LibraryVersion = 2.0")))
    with pytest.raises(ValueError):
        shortcut(eng, space, ("Iris", "Gradient Boosting", 1.0), ("Digits", "Decision Tree", 1.0))
    with pytest.raises(ValueError):
        shortcut(eng, space, ("Iris", "Gradient Boosting", 2.0), ("Digits", "Decision Tree", 2.0))


def test_budget_interrupt_carries_report(space, seed_runs):
    eng = ExecutionEngine(space, OracleBackend(space, space.parse_dnf("LibraryVersion = 2.0")), budget=1)
    eng.seed_history(seed_runs)
    with pytest.raises(ShortcutInterrupted) as info:
        shortcut(eng, space, ("Iris", "Gradient Boosting", 2.0), ("Digits", "Decision Tree", 1.0))
    assert len(info.value.report.steps) == 1


def test_parameter_order():
    s = _examples_space()
    assert parameter_order(s) == ["p1", "p2", "p3"]
    assert sorted(parameter_order(s, seed=4)) == ["p1", "p2", "p3"]
    assert parameter_order(s, seed=4) == parameter_order(s, seed=4)
    with pytest.raises(ValueError):
        parameter_order(s, ["p1", "p2"])


@st.composite
def equality_setups(draw):
    """Small categorical space, random equality DNF, and a disjoint (fail, succeed) pair."""
    n = draw(st.integers(2, 4))
    sizes = [draw(st.integers(2, 4)) for _ in range(n)]
    space = ParameterSpace([Parameter(f"p{i}", Kind.CATEGORICAL, tuple(f"v{i}{j}" for j in range(d)))
                            for i, d in enumerate(sizes)])
    conjs = []
    for _ in range(draw(st.integers(1, 3))):
        names = draw(st.lists(st.sampled_from(space.names), min_size=1, max_size=n, unique=True))
        conjs.append([(nm, "=", draw(st.sampled_from(space[nm].domain))) for nm in names])
    truth = space.dnf(conjs)
    params, odnf = as_oracle_params(space), as_oracle_dnf(truth)
    fails = [tuple(a.values()) for a in oracle.universe(params) if oracle.fails(a, odnf)]
    goods = [tuple(a.values()) for a in oracle.universe(params) if not oracle.fails(a, odnf)]
    pairs = [(f, g) for f in fails for g in goods if all(x != y for x, y in zip(f, g))]
    assume(pairs)
    cp_f, cp_g = draw(st.sampled_from(pairs))
    return space, truth, cp_f, cp_g


def _causes_as_triples(space, truth):
    params = as_oracle_params(space)
    out = []
    for prod in oracle.maximal_causes(params, as_oracle_dnf(truth), "equality"):
        out.append(frozenset((name, next(iter(vs))) for (name, _, dom), vs in zip(params, prod) if len(vs) < len(dom)))
    return out


@settings(max_examples=150, deadline=None)
@given(equality_setups(), st.randoms(use_true_random=False))
def test_never_superset_and_union_property(setup, rnd):
    space, truth, cp_f, cp_g = setup
    order = list(space.names)
    rnd.shuffle(order)
    rep, _ = _run(space, str(truth), cp_f, cp_g, order)
    asserted = frozenset((t.param, t.value) for t in rep.proposed)
    causes = _causes_as_triples(space, truth)
    # no assertion is a strict superset of a minimal cause
    assert not any(c < asserted for c in causes)
    # linear cost
    assert rep.executions_used <= len(space) and rep.new_executions <= len(space)
    # truncation only with the union property
    if any(asserted < c for c in causes):
        f_pairs = set(zip(space.names, cp_f))
        g_pairs = set(zip(space.names, cp_g))
        assert any(c <= f_pairs | g_pairs and not c <= f_pairs for c in causes)
    # asserted triples are equalities drawn from CP_f
    assert all(t.op == "=" and cp_f[space.index(t.param)] == t.value for t in rep.asserted)


@settings(max_examples=100, deadline=None)
@given(equality_setups())
def test_singleton_causes_asserted_exactly(setup):
    space, truth, cp_f, cp_g = setup
    causes = _causes_as_triples(space, truth)
    assume(all(len(c) == 1 for c in causes))
    rep, _ = _run(space, str(truth), cp_f, cp_g)
    assert frozenset((t.param, t.value) for t in rep.asserted) in causes
