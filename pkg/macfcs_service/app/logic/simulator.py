"""Desk-scale Monte-Carlo runs of the coding schemes.

Three schemes are simulated: Slepian-Wolf random binning, random coding over
the multiple access channel, and the block-Markov decode-forward scheme.
Every decoder is exhaustive maximum likelihood; a tie for the best score
counts as an error.

Random streams come from PCG64 seeded by
SeedSequence(seed, spawn_key=(crc32(tag), trial, ...)), so trials can be
sharded across workers without changing any outcome.
"""
from __future__ import annotations

import logging
import zlib
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from .macfcs_model import Channel, DFInput, SourcePair, common_part_labels, source_stats
from .regions import TOL_ZERO
from .tables import trend_table

logger = logging.getLogger('MACFCS_Solver.simulator')

TIE_TOL = 1e-9
MAX_CODEBOOK_BITS = 24
MAX_DECODER_PAIRS = 2 ** 22
DF_EVENTS = ('node1-decode-k', 'node2-decode-j', 'dest-4a', 'dest-4b', 'dest-4c',
             'dest-4d', 'dest-4e', 'dest-4f', 'dest-4g')
# (i wrong, j wrong, k wrong) -> destination error event
_DEST_EVENT = {
    (True, False, False): 'dest-4a',
    (False, True, False): 'dest-4b',
    (False, False, True): 'dest-4c',
    (True, True, False): 'dest-4d',
    (True, False, True): 'dest-4e',
    (False, True, True): 'dest-4f',
    (True, True, True): 'dest-4g',
}


class SimulationError(ValueError):
    pass


class CodebookOverflowError(SimulationError):
    pass


@dataclass
class SimConfig:
    n: int
    trials: int = 1000
    seed: int = 0
    rates: dict[str, float] = field(default_factory=dict)
    blocks: int = 4
    epsilon: float = 0.05
    workers: int = 1
    distinct_codewords: bool = False
    max_codebook_bits: float = MAX_CODEBOOK_BITS
    max_decoder_pairs: int = MAX_DECODER_PAIRS
    progress: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise SimulationError(f"Blocklength n must be >= 1, got {self.n}")
        if self.trials < 1:
            raise SimulationError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.seed < 2 ** 64:
            raise SimulationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        for name, rate in self.rates.items():
            if rate < 0:
                raise SimulationError(f"Rate {name} must be nonnegative, got {rate}")

    def rate(self, name: str) -> float:
        if name not in self.rates:
            raise SimulationError(f"Configuration lacks rate {name}; have {sorted(self.rates)}")
        return float(self.rates[name])


@dataclass
class SimOutcome:
    errors: int
    trials: int
    breakdown: dict[str, int] = field(default_factory=dict)

    @property
    def error_rate(self) -> float:
        return self.errors / self.trials if self.trials else 0.0

    def merge(self, other: 'SimOutcome') -> 'SimOutcome':
        counts = Counter(self.breakdown)
        counts.update(other.breakdown)
        return SimOutcome(self.errors + other.errors, self.trials + other.trials, dict(counts))


# --- Shared machinery ---

def stream(seed: int, tag: str, *keys: int) -> np.random.Generator:
    key = (zlib.crc32(tag.encode('utf-8')),) + tuple(int(k) for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def codebook_size(n: int, rate: float, max_bits: float = MAX_CODEBOOK_BITS) -> int:
    bits = n * rate
    if bits > max_bits:
        raise CodebookOverflowError(f"Codebook of 2^{bits:.3g} entries exceeds the 2^{max_bits:g} guard")
    return max(1, int(round(2.0 ** bits)))


def _cdf(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = 1.0
    return cdf


def _draw(rng: np.random.Generator, cdf_rows: np.ndarray, count: Optional[int] = None) -> np.ndarray:
    """Inverse-CDF draws; cdf_rows is (n, k) and the result (count, n), or (n,) if count is None."""
    u = rng.random(cdf_rows.shape[0] if count is None else (count, cdf_rows.shape[0]))
    return (u[..., None] >= cdf_rows).sum(axis=-1)


def _safe_log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore'):
        return np.log(p)


def _seq_index(digits: np.ndarray, card: int) -> int:
    n = digits.shape[-1]
    return int(digits @ (card ** np.arange(n - 1, -1, -1, dtype=np.int64)))


def _digits(indices: np.ndarray, card: int, n: int) -> np.ndarray:
    powers = card ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (indices[:, None] // powers[None, :]) % card


def _argmax_unique(scores: np.ndarray) -> tuple[int, bool]:
    """Flat index of the best score and whether it is unique within TIE_TOL."""
    best = int(np.argmax(scores))
    top = scores.flat[best]
    unique = np.count_nonzero(scores >= top - TIE_TOL) == 1 if np.isfinite(top) else scores.size == 1
    return best, unique


def _distinct_codebook(rng: np.random.Generator, cdf_rows: np.ndarray, size: int, card: int) -> np.ndarray:
    n = cdf_rows.shape[0]
    if size > card ** n:
        raise SimulationError(f"Cannot draw {size} distinct codewords of length {n} over {card} symbols")
    book = _draw(rng, cdf_rows, size)
    while True:
        _, first = np.unique(book, axis=0, return_index=True)
        dupes = np.setdiff1d(np.arange(size), first)
        if dupes.size == 0:
            return book
        book[dupes] = _draw(rng, cdf_rows, dupes.size)


class _Scheme:
    name = 'scheme'

    def run_trial(self, trial: int) -> tuple[bool, set[str]]:
        raise NotImplementedError


def _run_shard(scheme: _Scheme, start: int, stop: int, progress: bool) -> SimOutcome:
    errors = 0
    counts: Counter = Counter()
    for trial in tqdm(range(start, stop), desc=scheme.name, disable=not progress):
        failed, labels = scheme.run_trial(trial)
        errors += int(failed)
        counts.update(labels)
    return SimOutcome(errors, stop - start, dict(counts))


def _simulate(scheme: _Scheme, cfg: SimConfig) -> SimOutcome:
    shards = max(1, min(cfg.workers, cfg.trials))
    bounds = np.linspace(0, cfg.trials, shards + 1).astype(int)
    parts = Parallel(n_jobs=cfg.workers)(
        delayed(_run_shard)(scheme, int(a), int(b), cfg.progress and shards == 1)
        for a, b in zip(bounds[:-1], bounds[1:]))
    outcome = SimOutcome(0, 0)
    for part in parts:
        outcome = outcome.merge(part)
    logger.info(f"{scheme.name} n={cfg.n}: {outcome.errors}/{outcome.trials} errors")
    return outcome


# --- Slepian-Wolf random binning ---

class _BinningScheme(_Scheme):
    name = 'sw'

    def __init__(self, src: SourcePair, cfg: SimConfig):
        self.cfg = cfg
        self.cards = (src.s1_card, src.s2_card)
        self.counts = []
        self.bins = []
        self.identity = []
        for label, card in (('R1', src.s1_card), ('R2', src.s2_card)):
            count = card ** cfg.n
            if cfg.n * np.log2(card) > cfg.max_codebook_bits:
                raise CodebookOverflowError(
                    f"{card}^{cfg.n} source sequences exceed the 2^{cfg.max_codebook_bits:g} guard")
            bins = codebook_size(cfg.n, cfg.rate(label), cfg.max_codebook_bits)
            identity = bins > count
            if identity:
                logger.warning(f"{label}: {bins} bins exceed the {count} source sequences; "
                               f"every sequence gets its own bin")
            self.counts.append(count)
            self.bins.append(bins)
            self.identity.append(identity)
        expected = np.prod([1.0 if ident else max(1.0, c / b)
                            for c, b, ident in zip(self.counts, self.bins, self.identity)])
        if expected > cfg.max_decoder_pairs:
            raise CodebookOverflowError(
                f"About {expected:.3g} candidate pairs per bin exceed the {cfg.max_decoder_pairs} guard")
        self.cdf = _cdf(src.joint.flat)
        self.log_joint = _safe_log(src.joint.probs)

    def run_trial(self, trial: int) -> tuple[bool, set[str]]:
        n, (c1, c2) = self.cfg.n, self.cards
        rng = stream(self.cfg.seed, 'sw-source', trial)
        pairs = _draw(rng, np.broadcast_to(self.cdf, (n, self.cdf.size)))
        s1, s2 = pairs // c2, pairs % c2
        truth = (_seq_index(s1, c1), _seq_index(s2, c2))

        bin_rng = stream(self.cfg.seed, 'sw-bins', trial)
        members = []
        for which, (card, count, bins, ident) in enumerate(
                zip(self.cards, self.counts, self.bins, self.identity)):
            if ident:
                members.append(np.array([truth[which]]))
                continue
            table = bin_rng.integers(bins, size=count)
            members.append(np.flatnonzero(table == table[truth[which]]))

        d1 = _digits(members[0], c1, n)
        d2 = _digits(members[1], c2, n)
        scores = self.log_joint[d1[:, None, :], d2[None, :, :]].sum(axis=-1)
        best, unique = _argmax_unique(scores)
        a, b = np.unravel_index(best, scores.shape)
        decoded = (int(members[0][a]), int(members[1][b]))
        if not unique:
            return True, {'sw-tie'}
        if decoded != truth:
            return True, {'sw-wrong-pair'}
        return False, set()


def simulate_sw(src: SourcePair, cfg: SimConfig) -> SimOutcome:
    """Random binning at rates (R1, R2) with joint ML decoding at a noiseless destination."""
    return _simulate(_BinningScheme(src, cfg), cfg)


# --- Multiple access random coding ---

class _MacScheme(_Scheme):
    name = 'mac'

    def __init__(self, ch: Channel, cfg: SimConfig, p_x1: np.ndarray, p_x2: np.ndarray):
        self.cfg = cfg
        self.ch = ch
        self.sizes = (codebook_size(cfg.n, cfg.rate('R1'), cfg.max_codebook_bits),
                      codebook_size(cfg.n, cfg.rate('R2'), cfg.max_codebook_bits))
        if self.sizes[0] * self.sizes[1] > cfg.max_decoder_pairs:
            raise CodebookOverflowError(
                f"{self.sizes[0]} x {self.sizes[1]} message pairs exceed the {cfg.max_decoder_pairs} guard")
        self.cdf_x1 = np.broadcast_to(_cdf(p_x1), (cfg.n, p_x1.size))
        self.cdf_x2 = np.broadcast_to(_cdf(p_x2), (cfg.n, p_x2.size))
        w3 = ch.output_law('Y3')
        self.cdf_y3 = _cdf(w3)
        self.log_w3 = _safe_log(w3)

    def _codebook(self, rng: np.random.Generator, cdf_rows: np.ndarray, size: int, card: int) -> np.ndarray:
        if self.cfg.distinct_codewords:
            return _distinct_codebook(rng, cdf_rows, size, card)
        return _draw(rng, cdf_rows, size)

    def run_trial(self, trial: int) -> tuple[bool, set[str]]:
        book_rng = stream(self.cfg.seed, 'mac-codebook', trial)
        c1 = self._codebook(book_rng, self.cdf_x1, self.sizes[0], self.ch.x1_card)
        c2 = self._codebook(book_rng, self.cdf_x2, self.sizes[1], self.ch.x2_card)

        rng = stream(self.cfg.seed, 'mac-channel', trial)
        m1, m2 = int(rng.integers(self.sizes[0])), int(rng.integers(self.sizes[1]))
        x1, x2 = c1[m1], c2[m2]
        y3 = _draw(rng, self.cdf_y3[x1, x2])

        scores = self.log_w3[c1[:, None, :], c2[None, :, :], y3[None, None, :]].sum(axis=-1)
        best, unique = _argmax_unique(scores)
        if not unique:
            return True, {'mac-tie'}
        if np.unravel_index(best, scores.shape) != (m1, m2):
            return True, {'mac-wrong-pair'}
        return False, set()


def simulate_mac(ch: Channel, cfg: SimConfig, p_x1: Optional[Sequence[float]] = None,
                 p_x2: Optional[Sequence[float]] = None) -> SimOutcome:
    """Random codebooks from p(x1), p(x2); ML decoding of the message pair from y3 alone."""
    p_x1 = np.full(ch.x1_card, 1.0 / ch.x1_card) if p_x1 is None else np.asarray(p_x1, dtype=float)
    p_x2 = np.full(ch.x2_card, 1.0 / ch.x2_card) if p_x2 is None else np.asarray(p_x2, dtype=float)
    if p_x1.shape != (ch.x1_card,) or p_x2.shape != (ch.x2_card,):
        raise SimulationError("Input distributions must match the channel input alphabets")
    return _simulate(_MacScheme(ch, cfg, p_x1, p_x2), cfg)


# --- Block-Markov decode-forward ---

def df_codebook_rates(src: SourcePair, epsilon: float, tol_zero: float = TOL_ZERO) -> dict[str, float]:
    """Default exponents R0 (common), R1, R2: statistic + epsilon, or 0 for a zero statistic."""
    st = source_stats(src)
    rate = lambda stat: 0.0 if stat <= tol_zero else stat + epsilon
    return {'R0': rate(st.i_s1_s2), 'R1': rate(st.h_s1_given_s2), 'R2': rate(st.h_s2_given_s1)}


class _DecodeForwardScheme(_Scheme):
    name = 'df'

    def __init__(self, ch: Channel, src: SourcePair, inp: DFInput, cfg: SimConfig):
        if cfg.blocks < 3:
            raise SimulationError(f"Block-Markov simulation needs at least 3 blocks, got {cfg.blocks}")
        if (inp.f_x1.child_vars[0].cardinality, inp.f_x2.child_vars[0].cardinality) != (ch.x1_card, ch.x2_card):
            raise SimulationError("Candidate input alphabets disagree with the channel")
        self.cfg, self.ch, self.src = cfg, ch, src
        n = cfg.n
        rates = df_codebook_rates(src, cfg.epsilon)
        rates.update({k: v for k, v in cfg.rates.items() if k in rates})
        self.rates = rates
        self.sizes = tuple(codebook_size(n, rates[k], cfg.max_codebook_bits) for k in ('R0', 'R1', 'R2'))
        if int(np.prod(self.sizes)) > cfg.max_decoder_pairs:
            raise CodebookOverflowError(
                f"{' x '.join(map(str, self.sizes))} index triples exceed the {cfg.max_decoder_pairs} guard")

        self.labels1, self.labels2, self.common_count = common_part_labels(src)
        for card in (src.s1_card, src.s2_card, self.common_count):
            if n * np.log2(max(card, 1)) > cfg.max_codebook_bits:
                raise CodebookOverflowError(f"{card}^{n} source sequences exceed the hashing guard")

        self.cdf_src = np.broadcast_to(_cdf(src.joint.flat), (n, src.joint.flat.size))
        self.cdf_w = [np.broadcast_to(_cdf(p.flat), (n, p.flat.size)) for p in (inp.p_w0, inp.p_w1, inp.p_w2)]
        self.cdf_x1 = _cdf(inp.f_x1.probs)
        self.cdf_x2 = _cdf(inp.f_x2.probs)

        law = ch.law.probs
        self.cdf_law = _cdf(law.reshape(ch.x1_card, ch.x2_card, -1))
        self.y_shape = (ch.y1_card, ch.y2_card, ch.y3_card)
        self.log_w1 = _safe_log(ch.output_law('Y1'))
        self.log_w2 = _safe_log(ch.output_law('Y2'))
        w3 = ch.output_law('Y3')
        self.log_w3 = _safe_log(w3)
        # p(y3 | w0, w1, w2) averaged over p(x1|w) p(x2|w)
        self.log_v = _safe_log(np.einsum('abcx,abcz,xzy->abcy', inp.f_x1.probs, inp.f_x2.probs, w3))

    def _x_book(self, trial: int, which: int, h: tuple[int, int, int], w_books: list[np.ndarray]) -> np.ndarray:
        rng = stream(self.cfg.seed, f'df-x{which}', trial, *h)
        cdf = self.cdf_x1 if which == 1 else self.cdf_x2
        rows = cdf[w_books[0][h[0]], w_books[1][h[1]], w_books[2][h[2]]]
        return _draw(rng, rows, self.sizes[which])

    def run_trial(self, trial: int) -> tuple[bool, set[str]]:
        cfg, n = self.cfg, self.cfg.n
        s1c, s2c = self.src.s1_card, self.src.s2_card

        book_rng = stream(cfg.seed, 'df-w', trial)
        w_books = [_draw(book_rng, cdf, size) for cdf, size in zip(self.cdf_w, self.sizes)]
        bin_rng = stream(cfg.seed, 'df-bins', trial)
        tables = [bin_rng.integers(self.sizes[0], size=self.common_count ** n),
                  bin_rng.integers(self.sizes[1], size=s1c ** n),
                  bin_rng.integers(self.sizes[2], size=s2c ** n)]

        x_cache: dict[tuple[int, tuple[int, int, int]], np.ndarray] = {}

        def x_book(which: int, h: tuple[int, int, int]) -> np.ndarray:
            if (which, h) not in x_cache:
                x_cache[(which, h)] = self._x_book(trial, which, h, w_books)
            return x_cache[(which, h)]

        # --- transmission ---
        indices, y3_blocks, dest_h = [], [], []
        labels: set[str] = set()
        h1 = h2 = (0, 0, 0)
        for t in range(cfg.blocks):
            rng = stream(cfg.seed, 'df-block', trial, t)
            pairs = _draw(rng, self.cdf_src)
            s1, s2 = pairs // s2c, pairs % s2c
            common = self.labels1[s1]
            i = int(tables[0][_seq_index(common, self.common_count)])
            j = int(tables[1][_seq_index(s1, s1c)])
            k = int(tables[2][_seq_index(s2, s2c)])
            indices.append((i, j, k))

            x1 = x_book(1, h1)[j]
            x2 = x_book(2, h2)[k]
            y = _draw(rng, self.cdf_law[x1, x2])
            y1, y2, y3 = np.unravel_index(y, self.y_shape)
            y3_blocks.append(y3)

            if t == cfg.blocks - 1:
                break
            # node 1 decodes k against its own h', node 2 decodes j against its own
            cands = x_book(2, h1)
            k_hat, unique = _argmax_unique(self.log_w1[x1[None, :], cands, y1[None, :]].sum(axis=-1))
            if not unique or k_hat != k:
                labels.add('node1-decode-k')
            cands = x_book(1, h2)
            j_hat, unique = _argmax_unique(self.log_w2[cands, x2[None, :], y2[None, :]].sum(axis=-1))
            if not unique or j_hat != j:
                labels.add('node2-decode-j')
            h1 = (i, j, k_hat)
            h2 = (i, j_hat, k)

        # --- destination: block t is decoded from blocks t and t+1 ---
        failed = False
        h_dest = (0, 0, 0)
        w0, w1, w2 = w_books
        for t in range(cfg.blocks - 1):
            xb1, xb2 = x_book(1, h_dest), x_book(2, h_dest)
            y_now, y_next = y3_blocks[t], y3_blocks[t + 1]
            first = self.log_w3[xb1[:, None, :], xb2[None, :, :], y_now[None, None, :]].sum(axis=-1)
            second = self.log_v[w0[:, None, None, :], w1[None, :, None, :], w2[None, None, :, :],
                                y_next[None, None, None, :]].sum(axis=-1)
            scores = first[None, :, :] + second
            best, unique = _argmax_unique(scores)
            decoded = tuple(int(v) for v in np.unravel_index(best, scores.shape))
            truth = indices[t]
            if not unique and decoded == truth:
                # classify by a competing candidate that ties with the truth
                top = scores.flat[best]
                rivals = np.argwhere(scores >= top - TIE_TOL) if np.isfinite(top) else np.argwhere(scores == top)
                decoded = next((tuple(int(v) for v in r) for r in rivals if tuple(r) != truth), decoded)
            if decoded != truth or not unique:
                failed = True
                labels.add(_DEST_EVENT.get(tuple(a != b for a, b in zip(decoded, truth)), 'dest-4g'))
            h_dest = decoded
        return failed, labels


def simulate_df(ch: Channel, src: SourcePair, inp: DFInput, cfg: SimConfig) -> SimOutcome:
    scheme = _DecodeForwardScheme(ch, src, inp, cfg)
    logger.info(f"Decode-forward codebooks at n={cfg.n}: sizes (i, j, k) = {scheme.sizes}, "
                f"exponents {scheme.rates}")
    return _simulate(scheme, cfg)


# --- Trends ---

def trend_report(op: Callable[[SimConfig], SimOutcome], cfg_list: Sequence[SimConfig]) -> pd.DataFrame:
    """Runs op once per configuration; configurations may differ only in n."""
    if cfg_list:
        base = replace(cfg_list[0], n=1)
        for cfg in cfg_list[1:]:
            if replace(cfg, n=1) != base:
                raise SimulationError("Trend configurations must differ only in blocklength n")
    rows = []
    for cfg in cfg_list:
        outcome = op(cfg)
        rows.append({'n': cfg.n, 'trials': outcome.trials, 'errors': outcome.errors,
                     'error_rate': outcome.error_rate, 'breakdown': outcome.breakdown})
    return trend_table(rows)
