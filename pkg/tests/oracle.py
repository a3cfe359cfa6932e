"""Independent brute-force oracles.

Plain Python over explicit value sets; shares no code with the package's
bitmask and numpy paths, so agreement is evidence rather than tautology.
"""
import itertools
import operator

OPS = {"=": operator.eq, "!=": operator.ne, "<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}


def holds(assignment: dict, triples) -> bool:
    return all(OPS[op](assignment[p], v) for p, op, v in triples)


def universe(params):
    """``params``: list of (name, kind, domain)."""
    names = [n for n, _, _ in params]
    for values in itertools.product(*(d for _, _, d in params)):
        yield dict(zip(names, values))


def fails(assignment, dnf) -> bool:
    return any(holds(assignment, conj) for conj in dnf)


def sat_set(params, dnf) -> frozenset:
    return frozenset(tuple(a.values()) for a in universe(params) if fails(a, dnf))


def expressible(kind, domain, subset) -> bool:
    """Can one conjunction of triples pin a parameter to exactly ``subset``?"""
    subset = set(subset)
    if not subset:
        return False
    if len(subset) in (1, len(domain)):
        return True
    if kind == "categorical":
        return len(subset) == len(domain) - 1
    idx = sorted(domain.index(v) for v in subset)
    span = set(range(idx[0], idx[-1] + 1))
    return len(span - set(idx)) <= 1


def value_sets(kind, domain, vocabulary="full"):
    out = []
    for r in range(1, len(domain) + 1):
        for combo in itertools.combinations(domain, r):
            if vocabulary == "equality" and r not in (1, len(domain)):
                continue
            if expressible(kind, domain, combo):
                out.append(frozenset(combo))
    return out


def maximal_causes(params, dnf, vocabulary="full") -> set:
    """Maximal products of expressible value sets lying inside the fail set.

    Returns a set of tuples of frozensets (one per parameter).
    """
    fail = sat_set(params, dnf)
    cands = [value_sets(k, d, vocabulary) for _, k, d in params]
    definitive = [prod for prod in itertools.product(*cands)
                  if all(pt in fail for pt in itertools.product(*prod))]
    return {p for p in definitive
            if not any(q != p and all(a <= b for a, b in zip(p, q)) for q in definitive)}


def conj_sets(params, triples) -> tuple:
    """Per-parameter value sets satisfying ``triples``."""
    out = []
    for name, _, dom in params:
        out.append(frozenset(v for v in dom if holds({name: v}, [t for t in triples if t[0] == name])))
    return tuple(out)
