"""Exact finite-alphabet probability calculus.

Joint pmfs are dense numpy arrays with one axis per named variable, stored
row-major in the order the variables were declared. All information measures
are in bits.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import entr

PMF_TOL = 1e-9
MI_CLAMP_TOL = 1e-12
_LN2 = np.log(2.0)


class ProbabilityError(ValueError):
    """Base class for invalid distributions and bad variable references."""


class NegativeProbabilityError(ProbabilityError):
    pass


class NormalizationError(ProbabilityError):
    pass


class ShapeMismatchError(ProbabilityError):
    pass


class UnknownVariableError(ProbabilityError):
    pass


class OverlappingSubsetsError(ProbabilityError):
    pass


class DanglingParentError(ProbabilityError):
    pass


class DuplicateVariableError(ProbabilityError):
    pass


class InformationConsistencyError(ProbabilityError):
    """A mutual information came out clearly negative: a bug, not roundoff."""


@dataclass(frozen=True)
class Variable:
    name: str
    cardinality: int

    def __post_init__(self):
        if int(self.cardinality) != self.cardinality or self.cardinality < 1:
            raise ProbabilityError(
                f"Variable {self.name!r} needs a positive integer cardinality, got {self.cardinality}")


def _check_unique(variables: Sequence[Variable]) -> None:
    names = [v.name for v in variables]
    if len(set(names)) != len(names):
        raise DuplicateVariableError(f"Variable names must be unique, got {names}")


def _freeze(array: np.ndarray) -> np.ndarray:
    # 0-d arrays stay 0-d
    array = np.array(array, dtype=np.float64, order='C')
    array.flags.writeable = False
    return array


def _validated(probs, shape: tuple[int, ...], what: str) -> np.ndarray:
    """Checks length, finiteness and sign; reshapes to the declared shape."""
    array = np.asarray(probs, dtype=np.float64)
    expected = int(np.prod(shape, dtype=np.int64))
    if array.size != expected:
        raise ShapeMismatchError(f"{what}: expected {expected} entries, got {array.size}")
    array = array.reshape(shape)
    if np.any(~np.isfinite(array)):
        raise ProbabilityError(f"{what}: entries must be finite")
    if np.any(array < 0):
        raise NegativeProbabilityError(f"{what}: negative entry {array.min()}")
    return array


@dataclass(frozen=True, eq=False)
class Dist:
    """Joint pmf over an ordered tuple of variables."""

    vars: tuple[Variable, ...]
    probs: np.ndarray

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.vars)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self.vars)

    @property
    def flat(self) -> np.ndarray:
        return self.probs.reshape(-1)

    def var(self, name: str) -> Variable:
        for v in self.vars:
            if v.name == name:
                return v
        raise UnknownVariableError(f"Unknown variable {name!r}; have {list(self.names)}")

    def axes(self, names: Iterable[str]) -> list[int]:
        index = {n: i for i, n in enumerate(self.names)}
        axes = []
        for n in names:
            if n not in index:
                raise UnknownVariableError(f"Unknown variable {n!r}; have {list(self.names)}")
            axes.append(index[n])
        return axes


def dist_new(variables: Sequence[Variable], probs) -> Dist:
    variables = tuple(variables)
    _check_unique(variables)
    shape = tuple(v.cardinality for v in variables)
    array = _validated(probs, shape, "Dist")
    total = array.sum()
    if abs(total - 1.0) > PMF_TOL:
        raise NormalizationError(f"Dist: entries sum to {total}, not 1")
    return Dist(variables, _freeze(array / total))


def _from_array(variables: tuple[Variable, ...], array: np.ndarray) -> Dist:
    # internal results are normalized up to roundoff; rescale exactly
    return Dist(variables, _freeze(array / array.sum()))


@dataclass(frozen=True, eq=False)
class Factor:
    """Conditional pmf p(children | parents); array axes are parents then children."""

    child_vars: tuple[Variable, ...]
    parent_vars: tuple[Variable, ...]
    probs: np.ndarray

    @property
    def child_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.child_vars)

    @property
    def parent_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.parent_vars)

    @property
    def rows(self) -> np.ndarray:
        """One simplex row per parent assignment (parents flattened, children flattened)."""
        n_parent = int(np.prod([v.cardinality for v in self.parent_vars], dtype=np.int64))
        return self.probs.reshape(n_parent, -1)


def factor_new(child_vars: Sequence[Variable], parent_vars: Sequence[Variable], probs,
               name: str = "Factor") -> Factor:
    child_vars, parent_vars = tuple(child_vars), tuple(parent_vars)
    if not child_vars:
        raise ProbabilityError(f"{name}: a factor needs at least one child variable")
    _check_unique(child_vars + parent_vars)
    shape = tuple(v.cardinality for v in parent_vars + child_vars)
    array = _validated(probs, shape, name)
    n_parent = int(np.prod([v.cardinality for v in parent_vars], dtype=np.int64))
    rows = array.reshape(n_parent, -1)
    sums = rows.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > PMF_TOL)
    if bad.size:
        raise NormalizationError(f"{name}: row {int(bad[0])} sums to {sums[bad[0]]}, not 1")
    rows = rows / sums[:, None]
    return Factor(child_vars, parent_vars, _freeze(rows.reshape(shape)))


def deterministic_factor(child_vars: Sequence[Variable], parent_vars: Sequence[Variable],
                         fn: Callable[..., int | tuple[int, ...]]) -> Factor:
    """Builds p(children|parents) = 1{children = fn(*parents)}."""
    child_vars, parent_vars = tuple(child_vars), tuple(parent_vars)
    shape = tuple(v.cardinality for v in parent_vars + child_vars)
    array = np.zeros(shape)
    for parents in np.ndindex(*[v.cardinality for v in parent_vars]):
        out = fn(*parents)
        out = out if isinstance(out, tuple) else (out,)
        array[parents + tuple(out)] = 1.0
    return factor_new(child_vars, parent_vars, array)


def uniform_dist(variables: Sequence[Variable]) -> Dist:
    shape = tuple(v.cardinality for v in variables)
    return dist_new(variables, np.full(shape, 1.0 / np.prod(shape)))


def point_mass(variables: Sequence[Variable], outcome: Sequence[int]) -> Dist:
    array = np.zeros(tuple(v.cardinality for v in variables))
    array[tuple(outcome)] = 1.0
    return dist_new(variables, array)


def apply_factor(d: Dist, factor: Factor) -> Dist:
    """Extends the joint d by factor: p(vars of d) * p(children | parents)."""
    index = {n: i for i, n in enumerate(d.names)}
    for p in factor.parent_vars:
        if p.name not in index:
            raise DanglingParentError(
                f"Parent {p.name!r} of {list(factor.child_names)} is not defined by an earlier factor")
        if d.var(p.name).cardinality != p.cardinality:
            raise ShapeMismatchError(f"Parent {p.name!r} cardinality disagrees with the joint")
    for c in factor.child_vars:
        if c.name in index:
            raise DuplicateVariableError(f"Variable {c.name!r} is a child twice")
    k = len(d.vars)
    parent_axes = [index[p.name] for p in factor.parent_vars]
    child_axes = list(range(k, k + len(factor.child_vars)))
    joint = np.einsum(d.probs, list(range(k)), factor.probs, parent_axes + child_axes,
                      list(range(k + len(factor.child_vars))))
    return _from_array(d.vars + factor.child_vars, joint)


EMPTY = Dist((), _freeze(np.ones(())))


def chain_product(factors: Sequence[Factor]) -> Dist:
    joint = EMPTY
    for factor in factors:
        joint = apply_factor(joint, factor)
    return joint


def marginalize(d: Dist, keep: Sequence[str]) -> Dist:
    keep = list(keep)
    if len(set(keep)) != len(keep):
        raise DuplicateVariableError(f"Repeated names in {keep}")
    keep_axes = d.axes(keep)
    drop = tuple(i for i in range(len(d.vars)) if i not in keep_axes)
    summed = d.probs.sum(axis=drop) if drop else d.probs
    # remaining axes are in d's order; permute to the requested order
    remaining = [i for i in range(len(d.vars)) if i in keep_axes]
    order = [remaining.index(a) for a in keep_axes]
    summed = np.transpose(summed, order) if order else summed
    return _from_array(tuple(d.vars[a] for a in keep_axes), np.asarray(summed, dtype=np.float64))


def entropy_of_array(p: np.ndarray) -> float:
    return float(entr(p).sum() / _LN2)


def entropy(d: Dist, subset: Sequence[str]) -> float:
    if not subset:
        return 0.0
    return entropy_of_array(marginalize(d, subset).probs)


def binary_entropy(p: float) -> float:
    return entropy_of_array(np.array([p, 1.0 - p]))


def cond_mutual_info(d: Dist, a: Sequence[str], b: Sequence[str], c: Sequence[str] = ()) -> float:
    """I(A;B|C) in bits, via H(A,C) + H(B,C) - H(A,B,C) - H(C)."""
    a, b, c = list(a), list(b), list(c)
    d.axes(a + b + c)
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise OverlappingSubsetsError(f"Subsets must be disjoint: {a}, {b}, {c}")
    if not a or not b:
        return 0.0
    value = entropy(d, a + c) + entropy(d, b + c) - entropy(d, a + b + c) - entropy(d, c)
    if value < -MI_CLAMP_TOL:
        raise InformationConsistencyError(f"I({a};{b}|{c}) = {value} < 0")
    return max(value, 0.0)


def total_variation(d1: Dist, d2: Dist) -> float:
    if d1.names != d2.names or d1.shape != d2.shape:
        raise ShapeMismatchError(
            f"Cannot compare {list(zip(d1.names, d1.shape))} with {list(zip(d2.names, d2.shape))}")
    return float(0.5 * np.abs(d1.probs - d2.probs).sum())


def product_of_marginals(d: Dist, names: Sequence[str]) -> tuple[Dist, Dist]:
    """Returns (p(names), prod_i p(name_i)) on the same variable list."""
    joint = marginalize(d, names)
    product = np.ones(())
    for name in names:
        product = np.multiply.outer(product, marginalize(d, [name]).probs)
    return joint, _from_array(joint.vars, product)


def as_factor(d: Dist) -> Factor:
    """The unconditioned factor p(vars of d)."""
    return Factor(d.vars, (), d.probs)
