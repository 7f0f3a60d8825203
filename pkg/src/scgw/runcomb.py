"""Exact enumeration of permutation run structures.

A run of a permutation is a maximal monotone segment; collecting the lengths
of all runs gives a partition (of n-1 for a word on n letters, of n for a
circular word).  Three families of generating polynomials count permutations
by run structure:

* ``atomic_poly(n)``   -- permutations of [n+1] fixing both extremes,
* ``circular_poly(n)`` -- circular permutations of [n],
* ``linear_poly(n)``   -- all permutations of [n+1].

All arithmetic is exact: coefficients are Python integers (they exceed 64
bits well before n = 30) and evaluations accept ``fractions.Fraction``.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache


@dataclass(frozen=True)
class Partition:
    """A multiset of positive integers stored as a sorted descending tuple."""

    parts: tuple

    def __init__(self, parts=()):
        cleaned = tuple(sorted((int(p) for p in parts), reverse=True))
        if any(p <= 0 for p in cleaned):
            raise ValueError("partition parts must be positive integers")
        object.__setattr__(self, "parts", cleaned)

    @property
    def weight(self) -> int:
        return sum(self.parts)

    def __len__(self) -> int:
        return len(self.parts)

    def multiplicity(self, i: int) -> int:
        return self.parts.count(i)

    def symmetry_order(self) -> int:
        """ord p: product of factorials of the part multiplicities."""
        out = 1
        for mult in Counter(self.parts).values():
            out *= math.factorial(mult)
        return out

    def multinomial(self) -> int:
        """binom(weight; p_1, p_2, ...)."""
        out = math.factorial(self.weight)
        for p in self.parts:
            out //= math.factorial(p)
        return out

    def __iter__(self):
        return iter(self.parts)

    def __repr__(self):
        return f"Partition{self.parts}"


class RunPolynomial:
    """Sparse multivariate polynomial in x_1, x_2, ... with integer
    coefficients, monomials keyed by partitions (part i <-> a factor x_i).

    The same container carries the univariate valley polynomials: a power
    kappa^j is stored as the partition (1,)*j.
    """

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        data = {}
        if terms:
            for key, coeff in (terms.items() if isinstance(terms, dict) else terms):
                part = key if isinstance(key, Partition) else Partition(key)
                coeff = int(coeff)
                if coeff:
                    data[part] = data.get(part, 0) + coeff
        self.terms = {p: c for p, c in data.items() if c}

    # -- constructors -------------------------------------------------------
    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def one(cls):
        return cls({Partition(): 1})

    @classmethod
    def monomial(cls, parts, coeff=1):
        return cls({Partition(parts): coeff})

    # -- ring operations ----------------------------------------------------
    def __add__(self, other):
        out = dict(self.terms)
        for p, c in other.terms.items():
            out[p] = out.get(p, 0) + c
        return RunPolynomial(out)

    def __sub__(self, other):
        out = dict(self.terms)
        for p, c in other.terms.items():
            out[p] = out.get(p, 0) - c
        return RunPolynomial(out)

    def __mul__(self, other):
        if isinstance(other, int):
            return RunPolynomial({p: c * other for p, c in self.terms.items()})
        out = {}
        for p1, c1 in self.terms.items():
            for p2, c2 in other.terms.items():
                merged = Partition(p1.parts + p2.parts)
                out[merged] = out.get(merged, 0) + c1 * c2
        return RunPolynomial(out)

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, RunPolynomial) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __bool__(self):
        return bool(self.terms)

    def coefficient(self, parts) -> int:
        return self.terms.get(parts if isinstance(parts, Partition) else Partition(parts), 0)

    def coefficient_sum(self) -> int:
        return sum(self.terms.values())

    def degree_part(self, degree: int) -> "RunPolynomial":
        """Sub-polynomial of monomials with exactly ``degree`` factors."""
        return RunPolynomial({p: c for p, c in self.terms.items() if len(p) == degree})

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda item: (len(item[0]), item[0].parts))

    def __repr__(self):
        if not self.terms:
            return "RunPolynomial(0)"
        bits = []
        for part, coeff in self.sorted_terms():
            mono = "*".join(f"x{i}^{m}" if m > 1 else f"x{i}"
                            for i, m in sorted(Counter(part.parts).items())) or "1"
            bits.append(f"{coeff}*{mono}")
        return "RunPolynomial(" + " + ".join(bits) + ")"


def apply_D(poly: RunPolynomial) -> RunPolynomial:
    """One extension step for run structures.

    D = D0 + D+ with D0 = sum_i x_{i+1} d/dx_i (a run grows by one) and
    D+ = sum over ordered pairs (i, j), i,j >= 1, of x_1 x_i x_j d/dx_{i+j}
    (a run of length i+j splits into runs of lengths 1, i, j).  Linear, exact.
    """
    out = {}

    def add(parts, coeff):
        key = Partition(parts)
        out[key] = out.get(key, 0) + coeff

    for part, coeff in poly.terms.items():
        counts = Counter(part.parts)
        for i, mult in counts.items():
            base = list(part.parts)
            base.remove(i)
            # D0: replace one run of length i by one of length i+1
            add(base + [i + 1], coeff * mult)
            # D+: split a run of length i >= 2 over ordered pairs (a, b)
            for a in range(1, i):
                add(base + [1, a, i - a], coeff * mult)
    return RunPolynomial(out)


@lru_cache(maxsize=None)
def atomic_poly(n: int) -> RunPolynomial:
    """A_n: coefficient of partition p counts rising (equivalently falling)
    atomic permutations of [n+1] with run structure p.  A_1 = x_1,
    A_n = D A_{n-1}."""
    if n < 1:
        raise ValueError("atomic_poly requires n >= 1")
    if n == 1:
        return RunPolynomial.monomial([1])
    return apply_D(atomic_poly(n - 1))


@lru_cache(maxsize=None)
def circular_poly(n: int) -> RunPolynomial:
    """C_n: coefficient of p counts circular permutations of [n] with run
    structure p.  C_2 = x_1^2, C_n = D C_{n-1}."""
    if n < 2:
        raise ValueError("circular_poly requires n >= 2")
    if n == 2:
        return RunPolynomial.monomial([1, 1])
    return apply_D(circular_poly(n - 1))


def circular_poly_from_atomics(n: int) -> RunPolynomial:
    """Independent route to C_n: C_n = sum_m binom(n-2, m-1) A_m A_{n-m}."""
    if n < 2:
        raise ValueError("requires n >= 2")
    total = RunPolynomial.zero()
    for m in range(1, n):
        total = total + math.comb(n - 2, m - 1) * (atomic_poly(m) * atomic_poly(n - m))
    return total


@lru_cache(maxsize=None)
def linear_poly(n: int) -> RunPolynomial:
    """L_n: coefficient of p counts permutations of [n+1] with run structure
    p, via L_n = 2 sum_m binom(n-1, m-1) A_m L_{n-m}, L_0 = 1."""
    if n < 0:
        raise ValueError("linear_poly requires n >= 0")
    if n == 0:
        return RunPolynomial.one()
    total = RunPolynomial.zero()
    for m in range(1, n + 1):
        total = total + (2 * math.comb(n - 1, m - 1)) * (atomic_poly(m) * linear_poly(n - m))
    return total


def atomic_third_degree(n: int) -> RunPolynomial:
    """Closed form for the three-run part of A_n (n >= 3):

        sum_{i+j+k=n} sum_{q=1}^{k} (n-q-1)/(n-q-j)
            * multinomial(n-q-2; i-1, j-1, k-q) * x_i x_j x_k.

    Each term is rational but the total coefficient of every monomial is an
    integer; evaluated exactly with Fraction and checked for integrality.
    """
    if n < 3:
        raise ValueError("atomic_third_degree requires n >= 3")
    acc: dict[Partition, Fraction] = {}
    for i in range(1, n - 1):
        for j in range(1, n - i):
            k = n - i - j
            if k < 1:
                continue
            for q in range(1, k + 1):
                denom = n - q - j
                if denom == 0:
                    continue
                multi = (math.factorial(n - q - 2)
                         // (math.factorial(i - 1) * math.factorial(j - 1)
                             * math.factorial(k - q)))
                weight = Fraction(n - q - 1, denom) * multi
                key = Partition((i, j, k))
                acc[key] = acc.get(key, Fraction(0)) + weight
    terms = {}
    for part, value in acc.items():
        if value.denominator != 1:
            raise ArithmeticError(f"non-integer coefficient {value} at {part}")
        if value:
            terms[part] = int(value)
    return RunPolynomial(terms)


def valley_poly(n: int) -> RunPolynomial:
    """K_n(kappa): coefficient of kappa^k counts permutations of [n] with k
    valleys; kappa^k is stored as the partition (1,)*k.

    K_0 = K_1 = 1 and K_n = 2 kappa (1 - kappa) K'_{n-1}
    + (2 + (n-2) kappa) K_{n-1} for n >= 2 (formal derivative in kappa).
    """
    if n < 0:
        raise ValueError("valley_poly requires n >= 0")
    coeffs = {0: 1}  # kappa-power -> coefficient
    for step in range(2, n + 1):
        new: dict[int, int] = {}

        def add(j, c):
            if c:
                new[j] = new.get(j, 0) + c

        for j, c in coeffs.items():
            # 2 kappa (1 - kappa) * j kappa^{j-1}
            if j:
                add(j, 2 * j * c)
                add(j + 1, -2 * j * c)
            # (2 + (step-2) kappa) kappa^j
            add(j, 2 * c)
            add(j + 1, (step - 2) * c)
        coeffs = {j: c for j, c in new.items() if c}
    return RunPolynomial({(1,) * j: c for j, c in coeffs.items()})


def valley_poly_from_circular(n: int) -> RunPolynomial:
    """Independent route: K_n(kappa) = kappa^{-1} C_{n+1}(sqrt k, ..., sqrt k).

    A monomial of C_{n+1} with 2(k+1) factors lands on kappa^k; exact because
    circular run structures always have an even number of parts.
    """
    if n < 1:
        raise ValueError("requires n >= 1")
    out: dict[int, int] = {}
    for part, coeff in circular_poly(n + 1).terms.items():
        if len(part) % 2:
            raise ArithmeticError("odd run count in a circular polynomial")
        j = len(part) // 2 - 1
        out[j] = out.get(j, 0) + coeff
    return RunPolynomial({(1,) * j: c for j, c in out.items() if c})


_KINDS = ("atomic", "circular", "linear")


def run_count(p, kind: str) -> int:
    """Number of permutations with run structure ``p`` of the given kind.

    Weight conventions: partition of n counts atoms of length n+1, circular
    permutations of [n] (n >= 2), or linear permutations of [n+1].
    """
    part = p if isinstance(p, Partition) else Partition(p)
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}")
    n = part.weight
    if kind == "atomic":
        if n < 1:
            raise ValueError("atomic partitions have weight >= 1")
        return atomic_poly(n).coefficient(part)
    if kind == "circular":
        if n < 2:
            raise ValueError("circular partitions have weight >= 2")
        return circular_poly(n).coefficient(part)
    return linear_poly(n).coefficient(part)


@dataclass(frozen=True)
class PermutationWord:
    """A sequence of distinct integers, read linearly or circularly.

    Circular words are canonicalised to start at their minimal entry.
    """

    entries: tuple
    circular: bool = False

    def __init__(self, entries, circular=False):
        seq = tuple(int(e) for e in entries)
        if len(set(seq)) != len(seq):
            raise ValueError("entries must be distinct")
        if not seq:
            raise ValueError("empty word")
        if circular:
            pivot = seq.index(min(seq))
            seq = seq[pivot:] + seq[:pivot]
        object.__setattr__(self, "entries", seq)
        object.__setattr__(self, "circular", circular)

    def __len__(self):
        return len(self.entries)


def _monotone_lengths(seq) -> tuple:
    """Sorted descending maximal monotone segment lengths of a sequence."""
    if len(seq) < 2:
        return ()
    lengths = []
    run_len = 1
    direction = seq[1] > seq[0]
    for i in range(1, len(seq) - 1):
        step_up = seq[i + 1] > seq[i]
        if step_up == direction:
            run_len += 1
        else:
            lengths.append(run_len)
            run_len = 1
            direction = step_up
    lengths.append(run_len)
    lengths.sort(reverse=True)
    return tuple(lengths)


def run_structure(word: PermutationWord) -> Partition:
    """Multiset of maximal monotone segment lengths.

    For circular words the segment search wraps (sigma(n+1) := sigma(1)); the
    result is a partition of n (circular) or n-1 (linear).
    """
    seq = word.entries
    if word.circular:
        if len(seq) < 2:
            raise ValueError("circular words need at least 2 entries")
        seq = seq + (seq[0],)
    return Partition(_monotone_lengths(seq))


def eval_poly(poly: RunPolynomial, assignment):
    """Exact substitution x_i -> assignment[i] (int or Fraction values).

    ``assignment`` may be a mapping or a callable on the index; every index
    appearing in ``poly`` must be covered.
    """
    getter = assignment.__getitem__ if hasattr(assignment, "__getitem__") else assignment
    total = 0
    for part, coeff in poly.terms.items():
        term = coeff
        for i, mult in Counter(part.parts).items():
            try:
                value = getter(i)
            except (KeyError, IndexError) as exc:
                raise ValueError(f"assignment misses index {i}") from exc
            term *= value ** mult
        total += term
    return total


def cumulant_weights(n: int) -> list:
    """The exact run weights y_1..y_n of the averaged-observable moment
    problem:

        y_r = 2^r sum_{r_{r-1}=0}^{2} sum_{r_{r-2}=0}^{2+r_{r-1}} ...
              sum_{r_1=0}^{2+r_2} prod_k (1 + r_k),

    with the empty product equal to 1 (so y_1 = 2).  Evaluated by dynamic
    programming over the nested bounds; starts 2, 24, 568, 20256, 966592.
    """
    if n < 1:
        raise ValueError("n >= 1 required")

    @lru_cache(maxsize=None)
    def partial(depth: int, bound: int) -> int:
        # sum over r_depth..r_1 of prod (1 + r_k) with r_depth <= bound
        if depth == 0:
            return 1
        return sum((1 + r) * partial(depth - 1, 2 + r) for r in range(bound + 1))

    return [2 ** r * partial(r - 1, 2) for r in range(1, n + 1)]


def conjectured_series_coefficients(n: int):
    """Reference coefficients of the conjectured generating functions at the
    cumulant weights: a_n from 2/(1-12 l), c_n from 4/(1-12 l)^2 and l_n from
    (1-12 l)^{-1/3}, all as exact integers of the exponential series."""
    a = 2 * 12 ** n * math.factorial(n)
    c = 4 * 12 ** n * math.factorial(n + 1)
    ell = 4 ** n
    for j in range(n):
        ell *= 3 * j + 1
    return a, c, ell


def cumulant_conjecture_report(n_max: int) -> dict:
    """Compare A_{k+1}(y), C_{k+2}(y), L_k(y) with the conjectured closed
    forms for k <= n_max.  Reports match/mismatch; never raises on mismatch
    (the identities are conjectural)."""
    y = cumulant_weights(n_max + 2)
    assign = {i + 1: y[i] for i in range(len(y))}
    report = {"max_order": n_max, "atomic": [], "circular": [], "linear": [],
              "all_match": True}
    for k in range(0, n_max + 1):
        a_ref, c_ref, l_ref = conjectured_series_coefficients(k)
        a_val = eval_poly(atomic_poly(k + 1), assign)
        c_val = eval_poly(circular_poly(k + 2), assign)
        l_val = eval_poly(linear_poly(k), assign)
        report["atomic"].append((k, a_val, a_ref, a_val == a_ref))
        report["circular"].append((k, c_val, c_ref, c_val == c_ref))
        report["linear"].append((k, l_val, l_ref, l_val == l_ref))
        if not (a_val == a_ref and c_val == c_ref and l_val == l_ref):
            report["all_match"] = False
    return report


# ---------------------------------------------------------------------------
# Wick pairing graphs for the squared-field moment hierarchy
# ---------------------------------------------------------------------------

def wick_moment_graphs(n: int):
    """Directed pairing graphs for the n-th moment of a squared Gaussian
    field.

    Vertices 1..n carry two field slots each; arrows run from smaller to
    larger labels and lambda[i][j] in {0,1,2} counts arrows i -> j.  Every
    vertex has total degree two and no slot pairs with its own vertex.
    Returns a list of (matrix, weight) with matrix the upper-triangular
    lambda as a tuple of tuples and weight the number of slot-level Wick
    pairings realising it, 2^n / prod lambda_ij!.

    Capped at n = 6: the pairing count grows factorially.
    """
    if not 2 <= n <= 6:
        raise ValueError("wick_moment_graphs supports 2 <= n <= 6")
    results = []
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def recurse(idx, degrees, matrix):
        if idx == len(pairs):
            if all(d == 2 for d in degrees):
                weight = 2 ** n
                for row in matrix:
                    for lam in row:
                        weight //= math.factorial(lam)
                frozen = tuple(tuple(row) for row in matrix)
                results.append((frozen, weight))
            return
        i, j = pairs[idx]
        cap = min(2 - degrees[i], 2 - degrees[j])
        for lam in range(cap + 1):
            degrees[i] += lam
            degrees[j] += lam
            matrix[i][j] = lam
            recurse(idx + 1, degrees, matrix)
            degrees[i] -= lam
            degrees[j] -= lam
            matrix[i][j] = 0

    recurse(0, [0] * n, [[0] * n for _ in range(n)])
    results.sort()
    return results


def wick_pairings_brute(n: int):
    """Oracle: enumerate perfect matchings of the 2n field slots with no
    same-vertex pair and bin them by the (i < j)-directed multiplicity
    matrix.  Exponential; intended for n <= 6 in tests."""
    slots = [(v, s) for v in range(n) for s in range(2)]
    counts: Counter = Counter()

    def match(remaining, matrix):
        if not remaining:
            counts[tuple(tuple(row) for row in matrix)] += 1
            return
        first = remaining[0]
        for k in range(1, len(remaining)):
            other = remaining[k]
            if other[0] == first[0]:
                continue
            i, j = sorted((first[0], other[0]))
            matrix[i][j] += 1
            match(remaining[1:k] + remaining[k + 1:], matrix)
            matrix[i][j] -= 1

    match(slots, [[0] * n for _ in range(n)])
    return sorted(counts.items())


# ---------------------------------------------------------------------------
# Exhaustive run-structure oracles
# ---------------------------------------------------------------------------

def enumerate_run_structures(n: int, kind: str) -> Counter:
    """Count run structures by brute force over all permutations.

    atomic: rising atoms of [n+1] (partitions of n); circular: circular
    permutations of [n] (partitions of n); linear: all of S_{n+1}
    (partitions of n).  Deterministic iteration order; meant for n <= 9.
    """
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}")
    raw: Counter = Counter()
    if kind == "atomic":
        if n < 1:
            raise ValueError("n >= 1")
        if n == 1:
            return Counter({Partition((1,)): 1})
        for middle in itertools.permutations(range(2, n + 1)):
            raw[_monotone_lengths((1,) + middle + (n + 1,))] += 1
    elif kind == "circular":
        if n < 2:
            raise ValueError("n >= 2")
        for rest in itertools.permutations(range(2, n + 1)):
            raw[_monotone_lengths((1,) + rest + (1,))] += 1
    else:
        for perm in itertools.permutations(range(1, n + 2)):
            raw[_monotone_lengths(perm)] += 1
    return Counter({Partition(parts): count for parts, count in raw.items()})
