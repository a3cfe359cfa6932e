"""Multi-valued Quine-McCluskey style minimisation of cause DNFs.

Each parameter is one multi-valued variable.  Prime implicants over arbitrary
value sets are found by iterated consensus; each is then cut down to the value
sets a single conjunction of triples can express, and the maximal ones are kept.
The cover is chosen on the minterm table: essential primes first, then the
fewest-literal prime covering something still uncovered.
"""
from __future__ import annotations

import itertools
from collections.abc import Iterable, Sequence

import numpy as np

from .exceptions import UniverseTooLarge
from .model import (
    CauseDNF,
    Conjunction,
    Cube,
    ParameterSpace,
    cube_array,
    cube_empty,
    cube_subset,
    max_expressible_subsets,
    universe_mask,
)

DEFAULT_CAP = 10**6


def _absorb(cubes: Iterable[Cube]) -> list:
    """Drop empty cubes and cubes contained in another; keeps first-seen order."""
    out: list = []
    for c in sorted(set(c for c in cubes if not cube_empty(c)), key=_cube_weight, reverse=True):
        if not any(cube_subset(c, o) for o in out):
            out.append(c)
    return out


def _cube_weight(c: Cube):
    return (sum(bin(m).count("1") for m in c), c)


def consensus_primes(cubes: Iterable[Cube]) -> list:
    """All prime implicants (arbitrary value sets) of the union of ``cubes``."""
    current = _absorb(cubes)
    changed = True
    while changed:
        changed = False
        for a, b in itertools.combinations(list(current), 2):
            if a not in current or b not in current:
                continue
            for j in range(len(a)):
                if a[j] | b[j] == a[j] or a[j] | b[j] == b[j]:
                    continue
                c = tuple((x | y) if i == j else (x & y) for i, (x, y) in enumerate(zip(a, b)))
                if cube_empty(c) or any(cube_subset(c, o) for o in current):
                    continue
                current = [o for o in current if not cube_subset(o, c)] + [c]
                changed = True
    return sorted(current)


def expressible_primes(space: ParameterSpace, cubes: Iterable[Cube], vocabulary: str = "full") -> list:
    """Maximal cubes expressible as one conjunction and contained in the union."""
    candidates = set()
    for prime in consensus_primes(cubes):
        per_param = [max_expressible_subsets(p, m, vocabulary) for p, m in zip(space.parameters, prime)]
        candidates.update(itertools.product(*per_param))
    return _absorb(candidates)


def _key(space: ParameterSpace, cube: Cube):
    conj = space.render(cube)
    return (len(conj), str(conj))


def minimize(dnf: CauseDNF, space: ParameterSpace, cap: int = DEFAULT_CAP, complete: bool = False,
             vocabulary: str = "full") -> CauseDNF:
    """Equivalent, non-redundant DNF over the declared universe.

    ``complete=True`` returns every prime implicant instead of a cover (all
    minimal causes of the region).  Without it, the cover is used only when it
    has no more literals than the syntactically simplified input, so the
    result never grows.  Universes above ``cap`` get syntactic
    simplification only.
    """
    cubes = [space.cube(c) for c in dnf]
    if complete:
        primes = expressible_primes(space, cubes, vocabulary)
        return CauseDNF(tuple(space.render(p) for p in sorted(primes, key=lambda c: _key(space, c))))
    simple = simplify(dnf, space)
    if space.size > cap:
        return simple
    covered = _cover(space, cubes, vocabulary)
    result = CauseDNF(tuple(space.render(c) for c in covered))
    if result.literal_count <= simple.literal_count:
        return result
    return simple


def simplify(dnf: CauseDNF, space: ParameterSpace) -> CauseDNF:
    """Canonical triples per conjunct, unsatisfiable and subsumed conjuncts dropped."""
    kept = _absorb(space.cube(c) for c in dnf)
    order = {space.cube(c): i for i, c in reversed(list(enumerate(dnf)))}
    kept.sort(key=lambda c: order[c])
    return CauseDNF(tuple(space.render(c) for c in kept))


def _cover(space: ParameterSpace, cubes: Sequence[Cube], vocabulary: str) -> list:
    primes = sorted(expressible_primes(space, cubes, vocabulary), key=lambda c: _key(space, c))
    if not primes:
        return []
    on = universe_mask(space, cubes).ravel()
    table = np.stack([cube_array(space, p).ravel() for p in primes])[:, on]
    hits = table.sum(axis=0)
    chosen = []
    for i in range(len(primes)):
        if np.any(table[i] & (hits == 1)):
            chosen.append(i)
    covered = table[chosen].any(axis=0) if chosen else np.zeros(table.shape[1], dtype=bool)
    while not covered.all():
        # primes are pre-sorted by (literals, text)
        for i in range(len(primes)):
            if i not in chosen and np.any(table[i] & ~covered):
                chosen.append(i)
                covered |= table[i]
                break
    # drop primes made redundant by later picks
    for i in sorted(chosen, key=lambda i: _key(space, primes[i]), reverse=True):
        rest = [j for j in chosen if j != i]
        if rest and table[rest].any(axis=0).all():
            chosen = rest
    return [primes[i] for i in sorted(chosen, key=lambda i: _key(space, primes[i]))]


def equivalent(a: CauseDNF, b: CauseDNF, space: ParameterSpace, cap: int = DEFAULT_CAP) -> bool:
    """True iff both DNFs hold on exactly the same assignments of the universe."""
    if space.size > cap:
        raise UniverseTooLarge(f"universe of {space.size} assignments exceeds cap {cap}")
    ma = universe_mask(space, (space.cube(c) for c in a))
    mb = universe_mask(space, (space.cube(c) for c in b))
    return bool(np.array_equal(ma, mb))


def conjunction_cube(space: ParameterSpace, conj: Conjunction) -> Cube:
    return space.cube(conj)
