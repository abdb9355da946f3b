"""Elementary symmetric functions and the scalar inequalities built on them.

Everything here is polymorphic over the scalar type: ints and Fractions stay
exact, floats behave as usual.  Vectors are any sequence; lengths are capped
at 16 (the downstream use never exceeds that and the subset enumeration in
sigma() is exponential).
"""

from __future__ import annotations

import math
from itertools import combinations

_MAX_LEN = 16


class MultiIndex:
    """Immutable vector of nonnegative integer exponents."""

    __slots__ = ("entries",)

    def __init__(self, entries):
        ent = []
        for e in entries:
            ie = int(e)
            if ie != e:
                raise ValueError(f"multi-index entry {e!r} is not an integer")
            if ie < 0:
                raise ValueError(f"multi-index entry {ie} is negative")
            ent.append(ie)
        object.__setattr__(self, "entries", tuple(ent))

    def __setattr__(self, name, value):
        raise AttributeError("MultiIndex is immutable")

    @property
    def norm(self):
        """Sum of the entries."""
        return sum(self.entries)

    @property
    def max_entry(self):
        return max(self.entries) if self.entries else 0

    def factorial(self):
        """Product of the entrywise factorials."""
        out = 1
        for e in self.entries:
            out *= math.factorial(e)
        return out

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __eq__(self, other):
        if isinstance(other, MultiIndex):
            return self.entries == other.entries
        if isinstance(other, tuple):
            return self.entries == other
        return NotImplemented

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        return f"MultiIndex{self.entries}"


def as_multi_index(gamma):
    return gamma if isinstance(gamma, MultiIndex) else MultiIndex(gamma)


def multinomial(k, gamma):
    """k! / (gamma_1! ... gamma_n!) for a multi-index with |gamma| = k."""
    gamma = as_multi_index(gamma)
    if k != gamma.norm:
        raise ValueError(f"multinomial needs |gamma| = k, got |gamma|={gamma.norm}, k={k}")
    return math.factorial(k) // gamma.factorial()


def _check_vector(x, allow_empty=False):
    n = len(x)
    if n == 0 and not allow_empty:
        raise ValueError("empty vector")
    if n > _MAX_LEN:
        raise ValueError(f"vector length {n} exceeds supported maximum {_MAX_LEN}")
    return n


def sigma(k, x):
    """k-th elementary symmetric function of the entries of x.

    Direct subset enumeration: the sum of products over all k-element
    subsets.  sigma(0, x) = 1 (also for the empty vector), and
    sigma(k, x) = 0 for k > len(x).
    """
    n = _check_vector(x, allow_empty=True)
    if k < 0:
        raise ValueError(f"negative order k={k}")
    if k == 0:
        return 1
    if k > n:
        return 0
    return sum(math.prod(c) for c in combinations(x, k))


def sigma_all(x):
    """All of sigma_0 .. sigma_n in one pass.

    Expands prod_i (t + x_i) one factor at a time, so it is an independent
    route from the subset enumeration in sigma().
    """
    _check_vector(x)
    out = [1]
    for xi in x:
        nxt = [1]
        for k in range(1, len(out) + 1):
            prev = out[k] if k < len(out) else 0
            nxt.append(prev + xi * out[k - 1])
        out = nxt
    return out


def _deleted(x, i):
    return tuple(x[j] for j in range(len(x)) if j != i)


def identity_sum_sides(k, x):
    """Both sides of  sum_i sigma_k(x with entry i removed) = (n-k) sigma_k(x).

    Returns (lhs, rhs); they are equal for every 0 <= k <= n.
    """
    n = _check_vector(x)
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside 0..{n}")
    lhs = sum(sigma(k, _deleted(x, i)) for i in range(n))
    rhs = (n - k) * sigma(k, x)
    return lhs, rhs


def sums_inequality_sides(x):
    """Both sides of  3 (sum x_i^2)(sum x_i) <= (sum x_i)^3 + 2 sum x_i^3.

    Requires strictly positive entries.  Equality holds exactly when at most
    two entries are present (the deficit is a sum over products of three
    distinct entries).
    """
    _check_vector(x)
    for xi in x:
        if not xi > 0:
            raise ValueError(f"entries must be positive, got {xi!r}")
    s1 = sum(x)
    s2 = sum(xi * xi for xi in x)
    s3 = sum(xi * xi * xi for xi in x)
    return 3 * s2 * s1, s1 ** 3 + 2 * s3


def gamma_inequality_sides(k, gamma):
    """Both sides of  (k+1) sigma_{k+1}(gamma) <= (sigma_1(gamma) - k) sigma_k(gamma).

    gamma is a multi-index (nonnegative integer entries); k >= 0.  Values are
    exact integers.
    """
    gamma = as_multi_index(gamma)
    if k < 0:
        raise ValueError(f"negative order k={k}")
    ent = gamma.entries
    _check_vector(ent)
    lhs = (k + 1) * sigma(k + 1, ent)
    rhs = (sigma(1, ent) - k) * sigma(k, ent)
    return lhs, rhs


def gamma_norm_inequality_sides(k, gamma):
    """Both sides of  2(k-1) sigma_{k+1}(gamma) <= (n-k)(k-2) sigma_k(gamma).

    Valid for multi-indices with |gamma| = n = len(gamma) and k >= 3; this is
    the comparison that makes the determinant expansion weights decrease.
    """
    gamma = as_multi_index(gamma)
    n = len(gamma)
    _check_vector(gamma.entries)
    if gamma.norm != n:
        raise ValueError(f"needs |gamma| = len(gamma) = {n}, got |gamma| = {gamma.norm}")
    if k < 3:
        raise ValueError(f"needs k >= 3, got {k}")
    ent = gamma.entries
    lhs = 2 * (k - 1) * sigma(k + 1, ent)
    rhs = (n - k) * (k - 2) * sigma(k, ent)
    return lhs, rhs
