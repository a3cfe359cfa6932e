"""Hypothesis strategies for small parameter spaces and expressions."""
from hypothesis import strategies as st

from pipedebug.model import Kind, Parameter, ParameterSpace, Triple


@st.composite
def spaces(draw, max_params=3, max_values=4, min_values=2):
    n = draw(st.integers(1, max_params))
    params = []
    for i in range(n):
        size = draw(st.integers(min_values, max_values))
        if draw(st.booleans()):
            params.append(Parameter(f"p{i}", Kind.ORDINAL, tuple(range(1, size + 1))))
        else:
            params.append(Parameter(f"p{i}", Kind.CATEGORICAL, tuple(f"v{i}{j}" for j in range(size))))
    return ParameterSpace(params)


def instances(space):
    return st.tuples(*(st.sampled_from(p.domain) for p in space.parameters))


@st.composite
def triples(draw, space):
    p = draw(st.sampled_from(space.parameters))
    ops = ["=", "!=", "<", "<=", ">", ">="] if p.kind is Kind.ORDINAL else ["=", "!="]
    return Triple(p.name, draw(st.sampled_from(ops)), draw(st.sampled_from(p.domain)))


@st.composite
def conjunctions(draw, space, max_size=3, min_size=0):
    picked = draw(st.lists(triples(space), min_size=min_size, max_size=max_size))
    seen, unique = set(), []
    for t in picked:
        if (t.param, t.op) not in seen:
            seen.add((t.param, t.op))
            unique.append(t)
    return space.conjunction(unique)


@st.composite
def dnfs(draw, space, max_conjuncts=4):
    conjs = draw(st.lists(conjunctions(space, min_size=1), min_size=1, max_size=max_conjuncts))
    return space.dnf(conjs)
