"""Search over auxiliary distributions for a certificate of transmissibility.

Candidates are dicts of named arrays whose rows are points of a probability
simplex. Each restart draws its own stream from (seed, restart index), so the
result does not depend on how restarts are spread over workers.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Union

import numpy as np
from joblib import Parallel, delayed

from .macfcs_model import (CFInput, Channel, DFInput, SourceStats, build_cf_joint, build_df_joint,
                           cf_input_from_arrays, cf_input_to_document, df_input_from_arrays,
                           df_input_to_document)
from .regions import (TOL_FEAS, TOL_INDEP, TOL_ZERO, FeasibilityReport, cf_constraints,
                      df_constraints)

logger = logging.getLogger('MACFCS_Solver.optimizer')

Candidate = dict[str, np.ndarray]
DF_CARDS = ('W0', 'W1', 'W2')
CF_CARDS = ('U1', 'U2', 'YT1', 'YT2')


class SearchConfigError(ValueError):
    pass


@dataclass
class SearchConfig:
    cards: dict[str, int] = field(default_factory=dict)
    restarts: int = 16
    refine_iters: int = 10
    seed: int = 0
    tol_feas: float = TOL_FEAS
    tol_zero: float = TOL_ZERO
    tol_indep: float = TOL_INDEP
    indep_penalty: float = 10.0
    workers: int = 1
    delta_start: float = 0.1
    delta_min: float = 1e-4
    dirichlet_alpha: float = 1.0

    def __post_init__(self):
        if self.restarts < 1:
            raise SearchConfigError(f"restarts must be >= 1, got {self.restarts}")
        if self.refine_iters < 0:
            raise SearchConfigError(f"refine_iters must be >= 0, got {self.refine_iters}")
        if not 0 <= self.seed < 2 ** 64:
            raise SearchConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        for name, card in self.cards.items():
            if int(card) != card or card < 1:
                raise SearchConfigError(f"cardinality of {name} must be a positive integer, got {card}")


def default_cards(ch: Channel, strategy: str) -> dict[str, int]:
    if strategy == 'df':
        return {'W0': 2, 'W1': 2, 'W2': 2}
    if strategy == 'cf':
        return {'U1': 2, 'U2': 2, 'YT1': ch.y1_card + 1, 'YT2': ch.y2_card + 1}
    raise SearchConfigError(f"Unknown strategy {strategy!r}; expected 'df' or 'cf'")


def _needed_cards(cfg: SearchConfig, names: tuple[str, ...]) -> dict[str, int]:
    missing = [n for n in names if n not in cfg.cards]
    if missing:
        raise SearchConfigError(f"Search configuration lacks cardinalities for {missing}")
    return {n: int(cfg.cards[n]) for n in names}


# --- Candidate layout ---

def _layout(ch: Channel, strategy: str, cards: Mapping[str, int]) -> dict[str, tuple[int, int]]:
    """(rows, row length) of every named simplex-row array."""
    if strategy == 'df':
        w = cards['W0'] * cards['W1'] * cards['W2']
        return {'p_w0': (1, cards['W0']), 'p_w1': (1, cards['W1']), 'p_w2': (1, cards['W2']),
                'f_x1': (w, ch.x1_card), 'f_x2': (w, ch.x2_card)}
    return {'p_u1': (1, cards['U1']), 'p_u2': (1, cards['U2']),
            'f_x1': (cards['U1'], ch.x1_card), 'f_x2': (cards['U2'], ch.x2_card),
            'f_yt1': (ch.y1_card * ch.x1_card, cards['YT1']),
            'f_yt2': (ch.y2_card * ch.x2_card, cards['YT2'])}


def uniform_candidate(layout: Mapping[str, tuple[int, int]]) -> Candidate:
    return {k: np.full(shape, 1.0 / shape[1]) for k, shape in layout.items()}


def random_candidate(layout: Mapping[str, tuple[int, int]], rng: np.random.Generator,
                     alpha: float = 1.0) -> Candidate:
    return {k: rng.dirichlet(np.full(shape[1], alpha), size=shape[0]) for k, shape in layout.items()}


def candidate_to_input(ch: Channel, strategy: str, cards: Mapping[str, int],
                       cand: Candidate) -> Union[DFInput, CFInput]:
    if strategy == 'df':
        w_shape = (cards['W0'], cards['W1'], cards['W2'])
        return df_input_from_arrays(
            ch, cand['p_w0'][0], cand['p_w1'][0], cand['p_w2'][0],
            cand['f_x1'].reshape(w_shape + (ch.x1_card,)), cand['f_x2'].reshape(w_shape + (ch.x2_card,)))
    return cf_input_from_arrays(
        ch, cand['p_u1'][0], cand['p_u2'][0], cand['f_x1'], cand['f_x2'],
        cand['f_yt1'].reshape(ch.y1_card, ch.x1_card, cards['YT1']),
        cand['f_yt2'].reshape(ch.y2_card, ch.x2_card, cards['YT2']))


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto {p >= 0, sum p = 1}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    w = np.maximum(v - theta, 0.0)
    return w / w.sum()


# --- Evaluation ---

class Evaluator:
    """Objective of a candidate: worst non-vacuous margin, less the CF independence penalty."""

    def __init__(self, ch: Channel, st: SourceStats, strategy: str, cfg: SearchConfig):
        self.ch = ch
        self.st = st
        self.strategy = strategy
        self.cfg = cfg
        self.cards = _needed_cards(cfg, DF_CARDS if strategy == 'df' else CF_CARDS)
        self.layout = _layout(ch, strategy, self.cards)
        self.calls = 0

    def report(self, cand: Candidate) -> FeasibilityReport:
        inp = candidate_to_input(self.ch, self.strategy, self.cards, cand)
        if self.strategy == 'df':
            return df_constraints(build_df_joint(self.ch, inp), self.st,
                                  self.cfg.tol_feas, self.cfg.tol_zero)
        return cf_constraints(build_cf_joint(self.ch, inp), self.st, self.cfg.tol_indep,
                              self.cfg.tol_feas, self.cfg.tol_zero)

    def objective_of(self, report: FeasibilityReport) -> float:
        value = report.min_margin
        if report.independence is not None:
            value -= self.cfg.indep_penalty * report.independence.tv
        return value

    def __call__(self, cand: Candidate) -> float:
        self.calls += 1
        return self.objective_of(self.report(cand))


def refine(candidate: Candidate, evaluator: Callable[[Candidate], float], refine_iters: int = 10,
           delta_start: float = 0.1, delta_min: float = 1e-4) -> Candidate:
    """Coordinate ascent over simplex rows with a halving step.

    Each entry is nudged by +/-delta, the row re-projected onto the simplex,
    and the move kept only if the objective strictly improves.
    """
    current = {k: np.array(v, dtype=float) for k, v in candidate.items()}
    best = evaluator(current)
    delta = delta_start
    for _ in range(refine_iters):
        improved = False
        for key in list(current):
            n_rows, width = current[key].shape
            if width < 2:
                continue
            for r in range(n_rows):
                for j in range(width):
                    for sign in (1.0, -1.0):
                        trial_row = current[key][r].copy()
                        trial_row[j] += sign * delta
                        trial_row = project_to_simplex(trial_row)
                        if np.array_equal(trial_row, current[key][r]):
                            continue
                        trial = dict(current)
                        trial[key] = current[key].copy()
                        trial[key][r] = trial_row
                        value = evaluator(trial)
                        if value > best:
                            best = value
                            current = trial
                            improved = True
        if not improved:
            delta /= 2.0
            if delta < delta_min:
                break
    return current


# --- Search ---

@dataclass
class SearchResult:
    strategy: str
    best_input: Union[DFInput, CFInput]
    report: FeasibilityReport
    objective: float
    evaluations: int
    restart: int
    cards: dict[str, int]

    @property
    def feasible(self) -> bool:
        return self.report.feasible

    def to_document(self) -> dict[str, Any]:
        candidate = (df_input_to_document(self.best_input) if self.strategy == 'df'
                     else cf_input_to_document(self.best_input))
        return {
            'strategy': self.strategy,
            'feasible': self.feasible,
            'objective': self.objective if math.isfinite(self.objective) else None,
            'evaluations': self.evaluations,
            'restart': self.restart,
            'cards': dict(self.cards),
            'candidate': candidate,
            'report': self.report.to_document(),
        }


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(restart,)))


def _run_restart(ch: Channel, st: SourceStats, strategy: str, cfg: SearchConfig,
                 restart: int) -> tuple[int, Candidate, float, int]:
    evaluator = Evaluator(ch, st, strategy, cfg)
    if restart == 0:
        start = uniform_candidate(evaluator.layout)
    else:
        start = random_candidate(evaluator.layout, restart_rng(cfg.seed, restart), cfg.dirichlet_alpha)
    cand = refine(start, evaluator, cfg.refine_iters, cfg.delta_start, cfg.delta_min)
    value = evaluator(cand)
    return restart, cand, value, evaluator.calls


def _search(ch: Channel, st: SourceStats, strategy: str, cfg: SearchConfig) -> SearchResult:
    evaluator = Evaluator(ch, st, strategy, cfg)
    logger.info(f"Searching {strategy} candidates: cards {evaluator.cards}, {cfg.restarts} restarts, "
                f"seed {cfg.seed}, {cfg.workers} worker(s)")
    runs = Parallel(n_jobs=cfg.workers)(
        delayed(_run_restart)(ch, st, strategy, cfg, r) for r in range(cfg.restarts))

    best: Optional[tuple[int, Candidate, float, int]] = None
    evaluations = 0
    for run in runs:
        evaluations += run[3]
        if best is None or run[2] > best[2]:
            best = run
        logger.info(f"Restart {run[0]}: objective {run[2]:.6g}, best so far {best[2]:.6g}")

    restart, cand, objective, _ = best
    report = evaluator.report(cand)
    return SearchResult(strategy, candidate_to_input(ch, strategy, evaluator.cards, cand), report,
                        objective, evaluations, restart, evaluator.cards)


def search_df(ch: Channel, st: SourceStats, cfg: SearchConfig) -> SearchResult:
    return _search(ch, st, 'df', cfg)


def search_cf(ch: Channel, st: SourceStats, cfg: SearchConfig) -> SearchResult:
    return _search(ch, st, 'cf', cfg)
