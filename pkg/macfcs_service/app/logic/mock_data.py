"""Seeded random instances and fixed counterexamples for property checks and oracle comparisons."""
import numpy as np

from .macfcs_model import (CFInput, Channel, DFInput, SourcePair, bsc_law, cf_input_from_arrays,
                           dsbs_source, make_channel, make_source, product_channel, sample_df_input)
from .prob_core import Dist, Variable, dist_new
from .regions import LinIneq, RateConstraintSystem


def _rows(rng: np.random.Generator, shape: tuple, alpha: float = 1.0) -> np.ndarray:
    flat = rng.dirichlet(np.full(shape[-1], alpha), size=int(np.prod(shape[:-1], dtype=np.int64)))
    return flat.reshape(shape)


def generate_dist(rng: np.random.Generator, cards: dict[str, int], alpha: float = 1.0) -> Dist:
    """A random joint over the named variables."""
    variables = [Variable(name, card) for name, card in cards.items()]
    size = int(np.prod(list(cards.values()), dtype=np.int64))
    return dist_new(variables, rng.dirichlet(np.full(size, alpha)))


def generate_channel(rng: np.random.Generator, max_card: int = 3, alpha: float = 1.0) -> Channel:
    """Arbitrary (not product) channel law with every alphabet in 1..max_card, inputs at least binary."""
    x1, x2 = rng.integers(2, max_card + 1, size=2)
    y1, y2, y3 = rng.integers(1, max_card + 1, size=3)
    law = _rows(rng, (x1, x2, y1 * y2 * y3), alpha)
    return make_channel(int(x1), int(x2), int(y1), int(y2), int(y3), law)


def generate_source(rng: np.random.Generator, max_card: int = 3, alpha: float = 0.5) -> SourcePair:
    s1, s2 = rng.integers(2, max_card + 1, size=2)
    return make_source(int(s1), int(s2), rng.dirichlet(np.full(s1 * s2, alpha)))


def generate_df_input(ch: Channel, rng: np.random.Generator, max_card: int = 3) -> DFInput:
    w0, w1, w2 = (int(c) for c in rng.integers(1, max_card + 1, size=3))
    return sample_df_input(ch, w0, w1, w2, rng)


def generate_separable_instance(rng: np.random.Generator, u_card: int = 2,
                                yt_card: int = 2) -> tuple[Channel, SourcePair, CFInput]:
    """Binary-input product channel with Y1 fed by X2 only, Y2 by X1 only.

    Each quantizer reads its own Y alone, so the two quantizer outputs are
    independent for every choice of the other factors.
    """
    y1_given_x2 = _rows(rng, (2, 2))
    y2_given_x1 = _rows(rng, (2, 2))
    y1_law = np.broadcast_to(y1_given_x2[None, :, :], (2, 2, 2))
    y2_law = np.broadcast_to(y2_given_x1[:, None, :], (2, 2, 2))
    y3_law = _rows(rng, (2, 2, 3))
    ch = product_channel(y1_law, y2_law, y3_law)

    g1 = _rows(rng, (2, yt_card))
    g2 = _rows(rng, (2, yt_card))
    inp = cf_input_from_arrays(
        ch, rng.dirichlet(np.ones(u_card)), rng.dirichlet(np.ones(u_card)),
        _rows(rng, (u_card, 2)), _rows(rng, (u_card, 2)),
        np.broadcast_to(g1[:, None, :], (2, 2, yt_card)),
        np.broadcast_to(g2[:, None, :], (2, 2, yt_card)))
    return ch, generate_source(rng, max_card=2, alpha=0.3), inp


def sum_rate_gap_instance(leak: float = 0.26, input_flip: float = 0.3, pipe_noise: float = 0.2,
                          source_flip: float = 0.03) -> tuple[Channel, SourcePair, CFInput]:
    """Compress-forward instance whose stated conditions hold while H(S1,S2) >= d1 + d2.

    Y1 and Y2 are fair coins independent of the inputs, Y3 is two parallel
    BSC(pipe_noise) pipes and each X is its U through BSC(input_flip). Each
    quantizer outputs 3*x + z, where z is its Y with probability leak and the
    erasure symbol 2 otherwise.
    """
    noise = np.full((2, 2, 2), 0.5)
    flip = bsc_law(pipe_noise)
    ch = product_channel(noise, noise, np.einsum('ai,bj->abij', flip, flip).reshape(2, 2, 4))
    quantizer = np.zeros((2, 2, 6))
    for y in range(2):
        for x in range(2):
            quantizer[y, x, 3 * x + y] = leak
            quantizer[y, x, 3 * x + 2] = 1.0 - leak
    half = [0.5, 0.5]
    inp = cf_input_from_arrays(ch, half, half, bsc_law(input_flip), bsc_law(input_flip), quantizer, quantizer)
    return ch, dsbs_source(source_flip), inp



def generate_system(rng: np.random.Generator, names: tuple[str, ...], count: int,
                    strict_share: float = 0.5, rhs_range: tuple[float, float] = (-1.0, 3.0)) -> RateConstraintSystem:
    """Inequalities with coefficients in {-1, 0, 1} and uniform right-hand sides."""
    ineqs = []
    while len(ineqs) < count:
        coeffs = rng.integers(-1, 2, size=len(names))
        if not coeffs.any():
            continue
        ineqs.append(LinIneq({v: float(c) for v, c in zip(names, coeffs) if c},
                             float(rng.uniform(*rhs_range)), bool(rng.random() < strict_share),
                             f"g{len(ineqs)}"))
    return RateConstraintSystem(names, tuple(ineqs))
