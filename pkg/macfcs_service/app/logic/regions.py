"""Rate-region evaluation for the MACFCS.

Three families of constraints are evaluated on a factorized joint:
Slepian-Wolf source coding, decode-forward at the sources, and
compress-forward to the destination. The per-error-event systems from the
coding proofs are produced too, and an exact Fourier-Motzkin eliminator
connects the raw compress-forward system to its stated form.

Every margin is supply minus demand, in bits.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
from pydantic import ValidationError
from scipy.optimize import linprog
from scipy.special import rel_entr

from ..models import SystemDocument
from .macfcs_model import CF_ORDER, DF_ORDER, Channel, SourceStats
from .prob_core import Dist, cond_mutual_info, product_of_marginals, total_variation

logger = logging.getLogger('MACFCS_Solver.regions')

TOL_FEAS = 1e-9
TOL_ZERO = 1e-12
TOL_INDEP = 1e-6
_COEFF_EPS = 1e-12
_LN2 = math.log(2.0)

CF_RATE_VARS = ('R1', 'R2', 'Rt1', 'Rt2', 'Rp1', 'Rp2')
SW_RATE_VARS = ('R1', 'R2')


class RegionError(ValueError):
    pass


class MissingVariableError(RegionError):
    pass


class UnknownRateVariableError(RegionError):
    pass


# --- Linear inequality systems ---

@dataclass(frozen=True, eq=False)
class LinIneq:
    """sum(coeffs[v] * v) < rhs if strict, else <= rhs."""
    coeffs: Mapping[str, float]
    rhs: float
    strict: bool
    label: str

    @classmethod
    def from_sense(cls, coeffs: Mapping[str, float], sense: str, rhs: float, label: str) -> 'LinIneq':
        if sense in ('<', '<='):
            return cls(dict(coeffs), float(rhs), sense == '<', label)
        if sense in ('>', '>='):
            return cls({k: -v for k, v in coeffs.items()}, -float(rhs), sense == '>', label)
        raise RegionError(f"Inequality {label!r}: unknown sense {sense!r}")

    @property
    def is_constant(self) -> bool:
        return not self.coeffs

    def slack(self, values: Mapping[str, float]) -> float:
        return self.rhs - sum(c * values.get(v, 0.0) for v, c in self.coeffs.items())

    def holds(self, values: Mapping[str, float], tol: float = TOL_FEAS) -> bool:
        s = self.slack(values)
        return s > tol if self.strict else s >= -tol

    def __str__(self) -> str:
        lhs = ' + '.join(f"{c:g}*{v}" for v, c in self.coeffs.items()) or '0'
        return f"[{self.label}] {lhs} {'<' if self.strict else '<='} {self.rhs:.10g}"


@dataclass(frozen=True, eq=False)
class RateConstraintSystem:
    vars: tuple[str, ...]
    ineqs: tuple[LinIneq, ...]
    nonneg: bool = True

    def __post_init__(self):
        labels = [q.label for q in self.ineqs]
        if len(set(labels)) != len(labels):
            dupes = sorted({l for l in labels if labels.count(l) > 1})
            raise RegionError(f"Inequality labels must be unique, repeated: {dupes}")
        known = set(self.vars)
        for q in self.ineqs:
            unknown = set(q.coeffs) - known
            if unknown:
                raise UnknownRateVariableError(
                    f"Inequality {q.label!r} uses undeclared variables {sorted(unknown)}")

    def holds(self, values: Mapping[str, float], tol: float = TOL_FEAS) -> bool:
        if self.nonneg and any(values.get(v, 0.0) < -tol for v in self.vars):
            return False
        return all(q.holds(values, tol) for q in self.ineqs)

    def ineq(self, label: str) -> LinIneq:
        for q in self.ineqs:
            if q.label == label:
                return q
        raise RegionError(f"No inequality labeled {label!r}")


@dataclass(frozen=True)
class SystemVerdict:
    feasible: bool
    witness: Optional[dict[str, float]]
    residual: tuple[LinIneq, ...] = ()

    def to_document(self) -> dict[str, Any]:
        return {
            'feasible': self.feasible,
            'witness': self.witness,
            'residual': [_ineq_to_document(q) for q in self.residual],
        }


def _ineq_to_document(q: LinIneq) -> dict[str, Any]:
    return {'label': q.label, 'coeffs': dict(q.coeffs), 'sense': '<' if q.strict else '<=', 'rhs': q.rhs}


def system_to_document(sys: RateConstraintSystem) -> dict[str, Any]:
    return {'vars': list(sys.vars), 'nonneg': sys.nonneg,
            'inequalities': [_ineq_to_document(q) for q in sys.ineqs]}


def system_from_document(document: Mapping[str, Any] | str | bytes) -> RateConstraintSystem:
    try:
        if isinstance(document, (str, bytes)):
            doc = SystemDocument.model_validate_json(document)
        else:
            doc = SystemDocument.model_validate(dict(document))
    except ValidationError as e:
        first = e.errors()[0]
        where = '.'.join(str(p) for p in first.get('loc', ())) or '<root>'
        raise RegionError(f"system document: {where}: {first.get('msg')}") from e
    if len(set(doc.vars)) != len(doc.vars):
        raise RegionError(f"system document: repeated variable names in {doc.vars}")
    ineqs = tuple(LinIneq.from_sense(q.coeffs, q.sense, q.rhs, q.label) for q in doc.inequalities)
    return RateConstraintSystem(tuple(doc.vars), ineqs, doc.nonneg)


# --- Fourier-Motzkin elimination ---

def _constant_holds(q: LinIneq, tol_feas: float) -> bool:
    return q.rhs > tol_feas if q.strict else q.rhs >= -tol_feas


def _combine(upper: LinIneq, lower: LinIneq, var: str) -> LinIneq:
    cu, cl = upper.coeffs[var], -lower.coeffs[var]
    coeffs: dict[str, float] = {}
    for v in set(upper.coeffs) | set(lower.coeffs):
        if v == var:
            continue
        c = upper.coeffs.get(v, 0.0) / cu + lower.coeffs.get(v, 0.0) / cl
        if abs(c) > _COEFF_EPS:
            coeffs[v] = c
    return LinIneq(coeffs, upper.rhs / cu + lower.rhs / cl, upper.strict or lower.strict,
                   f"({upper.label}|{lower.label})")


def _dedupe(ineqs: Iterable[LinIneq]) -> list[LinIneq]:
    best: dict[tuple, LinIneq] = {}
    order: list[tuple] = []
    for q in ineqs:
        key = tuple(sorted(q.coeffs.items()))
        kept = best.get(key)
        if kept is None:
            best[key] = q
            order.append(key)
        elif q.rhs < kept.rhs or (q.rhs == kept.rhs and q.strict and not kept.strict):
            best[key] = q
    return [best[k] for k in order]


def _split(sys: RateConstraintSystem, var: str) -> tuple[list[LinIneq], list[LinIneq], list[LinIneq]]:
    uppers, lowers, rest = [], [], []
    for q in sys.ineqs:
        c = q.coeffs.get(var, 0.0)
        if c > 0:
            uppers.append(q)
        elif c < 0:
            lowers.append(q)
        else:
            rest.append(q)
    if sys.nonneg:
        lowers.append(LinIneq({var: -1.0}, 0.0, False, f"{var}>=0"))
    return uppers, lowers, rest


def fm_eliminate(sys: RateConstraintSystem, var: str, tol_feas: float = TOL_FEAS) -> RateConstraintSystem:
    """Projects the system onto the remaining variables.

    Constant inequalities that hold are dropped; violated ones are kept so
    the projection stays infeasible.
    """
    if var not in sys.vars:
        raise UnknownRateVariableError(f"Cannot eliminate {var!r}; system variables are {list(sys.vars)}")
    uppers, lowers, rest = _split(sys, var)
    derived = [_combine(u, l, var) for u in uppers for l in lowers]
    logger.debug(f"Eliminating {var}: {len(uppers)} upper x {len(lowers)} lower bounds, {len(rest)} untouched")

    kept = []
    for q in _dedupe(rest + derived):
        if q.is_constant and _constant_holds(q, tol_feas):
            continue
        kept.append(q)
    return RateConstraintSystem(tuple(v for v in sys.vars if v != var), tuple(kept), sys.nonneg)


def _interval(sys: RateConstraintSystem, var: str, assigned: Mapping[str, float]) -> tuple[Optional[float], Optional[float]]:
    uppers, lowers, _ = _split(sys, var)
    lo = hi = None
    for q in lowers:
        c = -q.coeffs[var]
        bound = -(q.rhs - sum(k * assigned[v] for v, k in q.coeffs.items() if v != var)) / c
        lo = bound if lo is None else max(lo, bound)
    for q in uppers:
        c = q.coeffs[var]
        bound = (q.rhs - sum(k * assigned[v] for v, k in q.coeffs.items() if v != var)) / c
        hi = bound if hi is None else min(hi, bound)
    return lo, hi


def system_feasible(sys: RateConstraintSystem, tol_feas: float = TOL_FEAS) -> SystemVerdict:
    """Eliminates every variable in declaration order, then back-substitutes a witness."""
    stages = [sys]
    for var in sys.vars:
        stages.append(fm_eliminate(stages[-1], var, tol_feas))
    residual = tuple(q for q in stages[-1].ineqs if not _constant_holds(q, tol_feas))
    if residual:
        return SystemVerdict(False, None, residual)

    witness: dict[str, float] = {}
    for k in range(len(sys.vars) - 1, -1, -1):
        var = sys.vars[k]
        lo, hi = _interval(stages[k], var, witness)
        if lo is not None and hi is not None:
            value = 0.5 * (lo + hi)
        elif lo is not None:
            value = lo + 1.0
        elif hi is not None:
            value = hi - 1.0
        else:
            value = 0.0
        witness[var] = value
    return SystemVerdict(True, {v: witness[v] for v in sys.vars})


def lp_feasibility_slack(sys: RateConstraintSystem, cap: float = 1.0) -> float:
    """Largest common slack t of the strict inequalities, capped at `cap`.

    Non-strict inequalities get no slack. Returns -inf when even t = -cap is
    infeasible; the system is strictly feasible iff the result is > 0.
    """
    names = list(sys.vars)
    col = {v: i for i, v in enumerate(names)}
    n = len(names)
    a_ub = np.zeros((len(sys.ineqs), n + 1))
    b_ub = np.zeros(len(sys.ineqs))
    for r, q in enumerate(sys.ineqs):
        for v, c in q.coeffs.items():
            a_ub[r, col[v]] = c
        a_ub[r, n] = 1.0 if q.strict else 0.0
        b_ub[r] = q.rhs
    var_bound = (0, None) if sys.nonneg else (None, None)
    c = np.zeros(n + 1)
    c[n] = -1.0
    res = linprog(c, A_ub=a_ub if len(sys.ineqs) else None, b_ub=b_ub if len(sys.ineqs) else None,
                  bounds=[var_bound] * n + [(-cap, cap)], method='highs')
    if not res.success:
        return -math.inf
    return float(res.x[n])


# --- Reports ---

@dataclass(frozen=True)
class ConstraintResult:
    label: str
    lhs: float
    rhs: float
    margin: float
    satisfied: bool
    vacuous: bool
    branches: tuple[float, ...] = ()

    def to_document(self) -> dict[str, Any]:
        doc = {'label': self.label, 'lhs': self.lhs, 'rhs': self.rhs, 'margin': self.margin,
               'satisfied': self.satisfied, 'vacuous': self.vacuous}
        if self.branches:
            doc['branches'] = list(self.branches)
        return doc


@dataclass(frozen=True)
class IndependenceCheck:
    tv: float
    tol: float
    passed: bool


@dataclass(frozen=True)
class FeasibilityReport:
    strategy: str
    constraints: tuple[ConstraintResult, ...]
    independence: Optional[IndependenceCheck] = None
    feasible: bool = field(init=False)
    min_margin: float = field(init=False)

    def __post_init__(self):
        feasible = all(c.satisfied for c in self.constraints)
        if self.independence is not None:
            feasible = feasible and self.independence.passed
        margins = [c.margin for c in self.constraints if not c.vacuous]
        object.__setattr__(self, 'feasible', feasible)
        object.__setattr__(self, 'min_margin', min(margins) if margins else math.inf)

    def constraint(self, label: str) -> ConstraintResult:
        for c in self.constraints:
            if c.label == label:
                return c
        raise RegionError(f"Report has no constraint {label!r}")

    def to_document(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            'strategy': self.strategy,
            'feasible': self.feasible,
            'min_margin': self.min_margin if math.isfinite(self.min_margin) else None,
            'constraints': [c.to_document() for c in self.constraints],
        }
        if self.independence is not None:
            doc['independence'] = {'tv': self.independence.tv, 'tol': self.independence.tol,
                                   'passed': self.independence.passed}
        return doc


def _constraint(label: str, demand: float, supply: Sequence[float] | float,
                tol_feas: float, tol_zero: float) -> ConstraintResult:
    branches = tuple(supply) if isinstance(supply, (list, tuple)) else ()
    rhs = min(branches) if branches else float(supply)
    margin = rhs - demand
    vacuous = demand <= tol_zero
    return ConstraintResult(label, demand, rhs, margin, vacuous or margin > tol_feas, vacuous, branches)


def _require(joint: Dist, names: Sequence[str]) -> None:
    missing = [n for n in names if n not in joint.names]
    if missing:
        raise MissingVariableError(f"Joint lacks variables {missing}; has {list(joint.names)}")


def slepian_wolf_region(st: SourceStats) -> RateConstraintSystem:
    """R1 >= H(S1|S2), R2 >= H(S2|S1), R1 + R2 >= H(S1,S2)."""
    return RateConstraintSystem(SW_RATE_VARS, (
        LinIneq.from_sense({'R1': 1.0}, '>=', st.h_s1_given_s2, '5a'),
        LinIneq.from_sense({'R2': 1.0}, '>=', st.h_s2_given_s1, '5b'),
        LinIneq.from_sense({'R1': 1.0, 'R2': 1.0}, '>=', st.h_joint, '5c'),
    ))


def df_information_terms(joint: Dist) -> dict[str, float]:
    """Every mutual-information term the decode-forward constraints use."""
    _require(joint, DF_ORDER)
    W = ['W0', 'W1', 'W2']
    mi = lambda a, b, c: cond_mutual_info(joint, a, b, c)
    return {
        'x2_y1': mi(['X2'], ['Y1'], W + ['X1']),
        'x1_y2': mi(['X1'], ['Y2'], W + ['X2']),
        'w0_y3': mi(['W0'], ['Y3'], ['W1', 'W2']),
        'w1_y3': mi(['W1'], ['Y3'], ['W0', 'W2']),
        'w2_y3': mi(['W2'], ['Y3'], ['W0', 'W1']),
        'w01_y3': mi(['W0', 'W1'], ['Y3'], ['W2']),
        'w02_y3': mi(['W0', 'W2'], ['Y3'], ['W1']),
        'w12_y3': mi(['W1', 'W2'], ['Y3'], ['W0']),
        'x1_y3': mi(['X1'], ['Y3'], W + ['X2']),
        'x2_y3': mi(['X2'], ['Y3'], W + ['X1']),
        'x12_y3_w': mi(['X1', 'X2'], ['Y3'], W),
        'x12_y3': mi(['X1', 'X2'], ['Y3'], []),
    }


def df_constraints(joint: Dist, st: SourceStats, tol_feas: float = TOL_FEAS,
                   tol_zero: float = TOL_ZERO) -> FeasibilityReport:
    t = df_information_terms(joint)
    c = lambda label, demand, supply: _constraint(label, demand, supply, tol_feas, tol_zero)
    return FeasibilityReport('df', (
        c('1a', st.h_s1_given_s2, [t['x1_y2'], t['w1_y3'] + t['x1_y3']]),
        c('1b', st.h_s2_given_s1, [t['x2_y1'], t['w2_y3'] + t['x2_y3']]),
        c('1c', st.i_s1_s2, t['w0_y3']),
        c('1d', st.h_s1, t['w01_y3'] + t['x1_y3']),
        c('1e', st.h_s2, t['w02_y3'] + t['x2_y3']),
        c('1f', st.h_s1_given_s2 + st.h_s2_given_s1, t['w12_y3'] + t['x12_y3_w']),
        c('1g', st.h_joint, t['x12_y3']),
    ))


def df_raw_constraints(joint: Dist, st: SourceStats, tol_feas: float = TOL_FEAS,
                       tol_zero: float = TOL_ZERO) -> FeasibilityReport:
    """One constraint per decoding error event: the feedback decoders, then the destination."""
    t = df_information_terms(joint)
    c = lambda label, demand, supply: _constraint(label, demand, supply, tol_feas, tol_zero)
    return FeasibilityReport('df-raw', (
        c('2', st.h_s2_given_s1, t['x2_y1']),
        c('3', st.h_s1_given_s2, t['x1_y2']),
        c('4a', st.i_s1_s2, t['w0_y3']),
        c('4b', st.h_s1_given_s2, t['w1_y3'] + t['x1_y3']),
        c('4c', st.h_s2_given_s1, t['w2_y3'] + t['x2_y3']),
        c('4d', st.h_s1, t['w01_y3'] + t['x1_y3']),
        c('4e', st.h_s2, t['w02_y3'] + t['x2_y3']),
        c('4f', st.h_s1_given_s2 + st.h_s2_given_s1, t['w12_y3'] + t['x12_y3_w']),
        c('4g', st.h_joint, t['x12_y3']),
    ))


def cf_information_terms(joint: Dist) -> dict[str, float]:
    _require(joint, CF_ORDER)
    U = ['U1', 'U2']
    mi = lambda a, b, c: cond_mutual_info(joint, a, b, c)
    return {
        # quantization cost
        'a1': mi(['YT1'], ['Y1'], ['X1']),
        'a2': mi(['YT2'], ['Y2'], ['X2']),
        # side information at the destination
        'b1': mi(['YT1'], ['Y3'], ['YT2'] + U),
        'b2': mi(['YT2'], ['Y3'], ['YT1'] + U),
        'b12': mi(['YT1', 'YT2'], ['Y3'], U),
        # bin-index channel
        'c1': mi(['U1'], ['Y3'], ['U2']),
        'c2': mi(['U2'], ['Y3'], ['U1']),
        'c12': mi(U, ['Y3'], []),
        # message channel
        'd1': mi(['X1'], ['YT2', 'Y3'], ['U1', 'X2']),
        'd2': mi(['X2'], ['YT1', 'Y3'], ['U2', 'X1']),
        'd12': mi(['X1', 'X2'], ['YT1', 'YT2', 'Y3'], U),
    }


def quantizer_independence(joint: Dist, tol_indep: float = TOL_INDEP) -> IndependenceCheck:
    _require(joint, ('YT1', 'YT2'))
    pair, product = product_of_marginals(joint, ['YT1', 'YT2'])
    tv = total_variation(pair, product)
    return IndependenceCheck(tv, tol_indep, tv <= tol_indep)


def cf_constraints(joint: Dist, st: SourceStats, tol_indep: float = TOL_INDEP,
                   tol_feas: float = TOL_FEAS, tol_zero: float = TOL_ZERO) -> FeasibilityReport:
    t = cf_information_terms(joint)
    c = lambda label, demand, supply: _constraint(label, demand, supply, tol_feas, tol_zero)
    return FeasibilityReport('cf', (
        c('6a', st.h_s1_given_s2, t['d1']),
        c('6b', st.h_s2_given_s1, t['d2']),
        c('6c', st.h_joint, t['d12']),
        c('7a', t['a1'] - t['b1'], t['c1']),
        c('7b', t['a2'] - t['b2'], t['c2']),
        c('7c', t['a1'] + t['a2'] - t['b12'], t['c12']),
    ), quantizer_independence(joint, tol_indep))


def cf_sum_rate_gap(joint: Dist, st: SourceStats) -> float:
    """d1 + d2 - H(S1,S2).

    Eliminating R1, R2 from 5c, 12a and 12b leaves H(S1,S2) < d1 + d2, which
    6a-6c do not contain. A stated-feasible report with a gap <= 0 has an
    empty cf_raw_system.
    """
    t = cf_information_terms(joint)
    return t['d1'] + t['d2'] - st.h_joint


def cf_raw_system(joint: Dist, st: SourceStats) -> RateConstraintSystem:
    """The per-step coding constraints over (R1, R2, Rt1, Rt2, Rp1, Rp2).

    Rt is the quantization index rate, Rp the bin index rate.
    """
    t = cf_information_terms(joint)
    q = LinIneq.from_sense
    return RateConstraintSystem(CF_RATE_VARS, (
        q({'R1': 1}, '>=', st.h_s1_given_s2, '5a'),
        q({'R2': 1}, '>=', st.h_s2_given_s1, '5b'),
        q({'R1': 1, 'R2': 1}, '>=', st.h_joint, '5c'),
        q({'Rt1': 1}, '>', t['a1'], '8'),
        q({'Rt2': 1}, '>', t['a2'], '9'),
        q({'Rp1': 1}, '<', t['c1'], '10a'),
        q({'Rp2': 1}, '<', t['c2'], '10b'),
        q({'Rp1': 1, 'Rp2': 1}, '<', t['c12'], '10c'),
        q({'Rt1': 1, 'Rp1': -1}, '<', t['b1'], '11a'),
        q({'Rt2': 1, 'Rp2': -1}, '<', t['b2'], '11b'),
        q({'Rt1': 1, 'Rt2': 1, 'Rp1': -1, 'Rp2': -1}, '<', t['b12'], '11c'),
        q({'R1': 1}, '<', t['d1'], '12a'),
        q({'R2': 1}, '<', t['d2'], '12b'),
        q({'R1': 1, 'R2': 1}, '<', t['d12'], '12c'),
    ))


# --- Sum capacity ---

@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    upper_bound: float
    input_pmf: np.ndarray
    iterations: int
    converged: bool


def _divergences(W: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q = p @ W
    return rel_entr(W, q[None, :]).sum(axis=1), q


def blahut_arimoto(W: np.ndarray, tol: float = 1e-7, max_iter: int = 10000,
                   init: Optional[np.ndarray] = None) -> CapacityResult:
    """Capacity of the single-user channel W[x, y] in bits.

    Iterates p(x) <- p(x) exp(D(W(.|x) || q)) until the gap between the
    upper bound max_x D and the lower bound I(p) drops below tol.
    """
    W = np.asarray(W, dtype=float)
    m = W.shape[0]
    p = np.full(m, 1.0 / m) if init is None else np.asarray(init, dtype=float) / np.sum(init)
    lower = upper = 0.0
    for it in range(1, max_iter + 1):
        d, _ = _divergences(W, p)
        lower = float(p @ d) / _LN2
        upper = float(d.max()) / _LN2
        if upper - lower < tol:
            return CapacityResult(lower, upper, p, it, True)
        p = p * np.exp(d - d.max())
        p /= p.sum()
    return CapacityResult(lower, upper, p, max_iter, False)


def mac_sum_capacity(ch: Channel, tol: float = 1e-7, restarts: int = 8, max_iter: int = 10000,
                     seed: int = 0) -> float:
    """max over joint p(x1, x2) of I(X1,X2;Y3), treating (X1, X2) as one input."""
    W = ch.output_law('Y3').reshape(ch.x1_card * ch.x2_card, ch.y3_card)
    rng = np.random.default_rng(seed)
    best: Optional[CapacityResult] = None
    for r in range(restarts):
        init = None if r == 0 else rng.dirichlet(np.ones(W.shape[0]))
        result = blahut_arimoto(W, tol, max_iter, init)
        if best is None or result.capacity > best.capacity:
            best = result
    if not best.converged:
        logger.warning(f"Sum-capacity iteration did not converge: best {best.capacity:.10g}, "
                       f"upper bound {best.upper_bound:.10g}")
    return best.capacity
