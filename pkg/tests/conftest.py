import pytest

from pipedebug.engine import ExecutionEngine, OracleBackend
from pipedebug.model import Evaluation, Kind, Origin, Parameter, ParameterSpace, ProvenanceRecord

SEED_RUNS = [
    ("Iris", "Logistic Regression", 1.0, "succeed"),
    ("Digits", "Decision Tree", 1.0, "succeed"),
    ("Iris", "Gradient Boosting", 2.0, "fail"),
]


def library_space() -> ParameterSpace:
    return ParameterSpace([
        Parameter("Dataset", Kind.CATEGORICAL, ("Iris", "Digits", "Wine")),
        Parameter("Estimator", Kind.CATEGORICAL, ("Logistic Regression", "Decision Tree", "Gradient Boosting")),
        Parameter("LibraryVersion", Kind.ORDINAL, (1.0, 2.0)),
    ])


def seed_run_records(space):
    return [ProvenanceRecord(space.instance(r[:3]), Evaluation.parse(r[3]), Origin.GIVEN, "seed", i)
            for i, r in enumerate(SEED_RUNS)]


def as_oracle_params(space):
    return [(p.name, p.kind.value, list(p.domain)) for p in space.parameters]


def as_oracle_dnf(dnf):
    return [[(t.param, t.op, t.value) for t in conj] for conj in dnf]


@pytest.fixture
def space():
    return library_space()


@pytest.fixture
def seed_runs(space):
    return seed_run_records(space)


@pytest.fixture
def lib_engine(space, seed_runs):
    engine = ExecutionEngine(space, OracleBackend(space, space.parse_dnf("LibraryVersion = 2.0")))
    engine.seed_history(seed_runs)
    yield engine
    engine.close()
