"""The three-node MACFCS instance: channel, correlated source pair, and the
factorized joints that the two achievability strategies are evaluated on."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ValidationError
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..models import (CFCandidateDocument, ChannelDocument, DFCandidateDocument,
                      SourceDocument)
from .prob_core import (Dist, Factor, ProbabilityError, Variable, as_factor,
                        chain_product, dist_new, entropy, factor_new)

logger = logging.getLogger('MACFCS_Solver.model')

DF_ORDER = ('W0', 'W1', 'W2', 'X1', 'X2', 'Y1', 'Y2', 'Y3')
CF_ORDER = ('U1', 'U2', 'X1', 'X2', 'Y1', 'Y2', 'Y3', 'YT1', 'YT2')

DocumentInput = Union[str, bytes, Mapping[str, Any]]
_Doc = TypeVar('_Doc', bound=BaseModel)


class ModelError(ValueError):
    """Invalid channel, source or candidate."""


class DocumentError(ModelError):
    pass


class CardinalityMismatchError(ModelError):
    pass


# --- Instance types ---

@dataclass(frozen=True, eq=False)
class Channel:
    x1_card: int
    x2_card: int
    y1_card: int
    y2_card: int
    y3_card: int
    law: Factor

    def __post_init__(self):
        if self.law.parent_names != ('X1', 'X2') or self.law.child_names != ('Y1', 'Y2', 'Y3'):
            raise ModelError("Channel law must be p(Y1,Y2,Y3|X1,X2)")
        expected = (self.x1_card, self.x2_card, self.y1_card, self.y2_card, self.y3_card)
        if self.law.probs.shape != expected:
            raise CardinalityMismatchError(
                f"Channel law has shape {self.law.probs.shape}, cardinalities say {expected}")

    @property
    def x1(self) -> Variable:
        return Variable('X1', self.x1_card)

    @property
    def x2(self) -> Variable:
        return Variable('X2', self.x2_card)

    def output_law(self, name: str) -> np.ndarray:
        """p(y|x1,x2) of one output, shape (x1, x2, y)."""
        axis = {'Y1': 2, 'Y2': 3, 'Y3': 4}[name]
        drop = tuple(a for a in (2, 3, 4) if a != axis)
        return self.law.probs.sum(axis=drop)


@dataclass(frozen=True, eq=False)
class SourcePair:
    s1_card: int
    s2_card: int
    joint: Dist

    def __post_init__(self):
        if self.joint.names != ('S1', 'S2') or self.joint.shape != (self.s1_card, self.s2_card):
            raise ModelError("Source joint must be p(S1,S2) with the declared cardinalities")


@dataclass(frozen=True)
class SourceStats:
    h_s1: float
    h_s2: float
    h_s1_given_s2: float
    h_s2_given_s1: float
    h_joint: float
    i_s1_s2: float

    def to_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class DFInput:
    """p(w0)p(w1)p(w2)p(x1|w0,w1,w2)p(x2|w0,w1,w2)."""
    w0_card: int
    w1_card: int
    w2_card: int
    p_w0: Dist
    p_w1: Dist
    p_w2: Dist
    f_x1: Factor
    f_x2: Factor

    def __post_init__(self):
        cards = {'W0': self.w0_card, 'W1': self.w1_card, 'W2': self.w2_card}
        for name, dist in (('W0', self.p_w0), ('W1', self.p_w1), ('W2', self.p_w2)):
            if dist.names != (name,) or dist.shape != (cards[name],):
                raise CardinalityMismatchError(f"p_{name.lower()}: expected a pmf over {name}:{cards[name]}")
        parents = tuple(Variable(n, c) for n, c in cards.items())
        for label, factor, child in (('f_x1', self.f_x1, 'X1'), ('f_x2', self.f_x2, 'X2')):
            if factor.parent_vars != parents or factor.child_names != (child,):
                raise CardinalityMismatchError(f"{label}: expected p({child}|W0,W1,W2) with cards {cards}")


@dataclass(frozen=True, eq=False)
class CFInput:
    """p(u1)p(x1|u1)p(u2)p(x2|u2)p(yt1|y1,x1)p(yt2|y2,x2)."""
    u1_card: int
    u2_card: int
    yt1_card: int
    yt2_card: int
    p_u1: Dist
    p_u2: Dist
    f_x1: Factor
    f_x2: Factor
    f_yt1: Factor
    f_yt2: Factor

    def __post_init__(self):
        for label, dist, name, card in (('p_u1', self.p_u1, 'U1', self.u1_card),
                                        ('p_u2', self.p_u2, 'U2', self.u2_card)):
            if dist.names != (name,) or dist.shape != (card,):
                raise CardinalityMismatchError(f"{label}: expected a pmf over {name}:{card}")
        checks = (('f_x1', self.f_x1, ('U1',), ('X1',)),
                  ('f_x2', self.f_x2, ('U2',), ('X2',)),
                  ('f_yt1', self.f_yt1, ('Y1', 'X1'), ('YT1',)),
                  ('f_yt2', self.f_yt2, ('Y2', 'X2'), ('YT2',)))
        for label, factor, parents, children in checks:
            if factor.parent_names != parents or factor.child_names != children:
                raise CardinalityMismatchError(f"{label}: expected p({children[0]}|{','.join(parents)})")
        if self.f_x1.parent_vars[0].cardinality != self.u1_card:
            raise CardinalityMismatchError("f_x1: U1 cardinality disagrees with u1_card")
        if self.f_x2.parent_vars[0].cardinality != self.u2_card:
            raise CardinalityMismatchError("f_x2: U2 cardinality disagrees with u2_card")
        if self.f_yt1.child_vars[0].cardinality != self.yt1_card:
            raise CardinalityMismatchError("f_yt1: YT1 cardinality disagrees with yt1_card")
        if self.f_yt2.child_vars[0].cardinality != self.yt2_card:
            raise CardinalityMismatchError("f_yt2: YT2 cardinality disagrees with yt2_card")


# --- Construction from arrays ---

def make_channel(x1_card: int, x2_card: int, y1_card: int, y2_card: int, y3_card: int,
                 probs) -> Channel:
    law = factor_new(
        (Variable('Y1', y1_card), Variable('Y2', y2_card), Variable('Y3', y3_card)),
        (Variable('X1', x1_card), Variable('X2', x2_card)),
        probs, name="channel law")
    return Channel(x1_card, x2_card, y1_card, y2_card, y3_card, law)


def make_source(s1_card: int, s2_card: int, probs) -> SourcePair:
    joint = dist_new((Variable('S1', s1_card), Variable('S2', s2_card)), probs)
    return SourcePair(s1_card, s2_card, joint)


def product_channel(y1_law: np.ndarray, y2_law: np.ndarray, y3_law: np.ndarray) -> Channel:
    """Channel whose outputs are conditionally independent given (x1, x2).

    Each law is shaped (x1, x2, y) with rows summing to one.
    """
    y1_law, y2_law, y3_law = (np.asarray(a, dtype=float) for a in (y1_law, y2_law, y3_law))
    if not (y1_law.shape[:2] == y2_law.shape[:2] == y3_law.shape[:2]):
        raise CardinalityMismatchError("Per-output laws disagree on the input alphabets")
    x1_card, x2_card = y1_law.shape[:2]
    law = np.einsum('abi,abj,abk->abijk', y1_law, y2_law, y3_law)
    return make_channel(x1_card, x2_card, y1_law.shape[2], y2_law.shape[2], y3_law.shape[2], law)


def bsc_law(p: float) -> np.ndarray:
    return np.array([[1.0 - p, p], [p, 1.0 - p]])


def _pipes_law(noise: float) -> np.ndarray:
    # y3 = 2*(x1 xor z1) + (x2 xor z2)
    flip = bsc_law(noise)
    return np.einsum('ai,bj->abij', flip, flip).reshape(2, 2, 4)


def cross_link_channel(y3_noise: float = 0.0, silent_destination: bool = False) -> Channel:
    """Binary inputs; Y1 = X2 and Y2 = X1 noiselessly; Y3 = two parallel BSC pipes."""
    y1 = np.zeros((2, 2, 2))
    y2 = np.zeros((2, 2, 2))
    for a in range(2):
        for b in range(2):
            y1[a, b, b] = 1.0
            y2[a, b, a] = 1.0
    y3 = np.ones((2, 2, 1)) if silent_destination else _pipes_law(y3_noise)
    return product_channel(y1, y2, y3)


def parallel_bsc_channel(p: float) -> Channel:
    """Classical MAC: no feedback outputs, Y3 = two parallel BSC(p) pipes."""
    return product_channel(np.ones((2, 2, 1)), np.ones((2, 2, 1)), _pipes_law(p))


def constant_channel(x1_card: int = 2, x2_card: int = 2) -> Channel:
    ones = np.ones((x1_card, x2_card, 1))
    return product_channel(ones, ones, ones)


def compose_y3(ch: Channel, garble: np.ndarray) -> Channel:
    """Post-composes Y3 with the stochastic map garble[y3, y3']."""
    garble = np.asarray(garble, dtype=float)
    if garble.shape[0] != ch.y3_card:
        raise CardinalityMismatchError(f"garble expects {garble.shape[0]} Y3 symbols, channel has {ch.y3_card}")
    law = np.einsum('abijk,kl->abijl', ch.law.probs, garble)
    return make_channel(ch.x1_card, ch.x2_card, ch.y1_card, ch.y2_card, garble.shape[1], law)


def make_common_part_source(d: int, e: int, f: int) -> SourcePair:
    """S1 = (D, E), S2 = (D, F) with D, E, F independent and uniform."""
    if min(d, e, f) < 1:
        raise ModelError(f"Common-part sizes must be positive, got d={d}, e={e}, f={f}")
    joint = np.zeros((d * e, d * f))
    for di in range(d):
        joint[di * e:(di + 1) * e, di * f:(di + 1) * f] = 1.0 / (d * e * f)
    return make_source(d * e, d * f, joint)


def dsbs_source(p: float) -> SourcePair:
    return make_source(2, 2, [[(1 - p) / 2, p / 2], [p / 2, (1 - p) / 2]])


def independent_bits_source(p1: float, p2: float) -> SourcePair:
    """Independent Bernoulli(p1), Bernoulli(p2) bits."""
    return make_source(2, 2, np.outer([1 - p1, p1], [1 - p2, p2]))


def common_part_labels(src: SourcePair) -> tuple[np.ndarray, np.ndarray, int]:
    """Common-part label of every s1 and every s2 symbol.

    Labels are the connected components of the bipartite support graph of
    p(s1, s2); with positive probability both sources see the same label.
    """
    rows, cols = np.nonzero(src.joint.probs > 0)
    n = src.s1_card + src.s2_card
    graph = coo_matrix((np.ones(rows.size), (rows, cols + src.s1_card)), shape=(n, n))
    count, labels = connected_components(graph, directed=False)
    return labels[:src.s1_card], labels[src.s1_card:], int(count)


def source_stats(s: SourcePair) -> SourceStats:
    h_s1 = entropy(s.joint, ['S1'])
    h_s2 = entropy(s.joint, ['S2'])
    h_joint = entropy(s.joint, ['S1', 'S2'])
    return SourceStats(
        h_s1=h_s1,
        h_s2=h_s2,
        h_s1_given_s2=max(h_joint - h_s2, 0.0),
        h_s2_given_s1=max(h_joint - h_s1, 0.0),
        h_joint=h_joint,
        i_s1_s2=max(h_s1 + h_s2 - h_joint, 0.0),
    )


# --- Candidate construction ---

def _w_vars(w0_card: int, w1_card: int, w2_card: int) -> tuple[Variable, Variable, Variable]:
    return Variable('W0', w0_card), Variable('W1', w1_card), Variable('W2', w2_card)


def df_input_from_arrays(ch: Channel, p_w0, p_w1, p_w2, f_x1, f_x2) -> DFInput:
    """Arrays: p_wi shaped (wi,), f_x shaped (w0, w1, w2, x) or flat."""
    p_w0, p_w1, p_w2 = (np.asarray(p, dtype=float).reshape(-1) for p in (p_w0, p_w1, p_w2))
    w = _w_vars(p_w0.size, p_w1.size, p_w2.size)
    return DFInput(
        w0_card=w[0].cardinality, w1_card=w[1].cardinality, w2_card=w[2].cardinality,
        p_w0=dist_new((w[0],), p_w0), p_w1=dist_new((w[1],), p_w1), p_w2=dist_new((w[2],), p_w2),
        f_x1=factor_new((ch.x1,), w, f_x1, name="f_x1"),
        f_x2=factor_new((ch.x2,), w, f_x2, name="f_x2"),
    )


def cf_input_from_arrays(ch: Channel, p_u1, p_u2, f_x1, f_x2, f_yt1, f_yt2,
                         yt1_card: Optional[int] = None, yt2_card: Optional[int] = None) -> CFInput:
    """Arrays: f_x1 (u1, x1), f_x2 (u2, x2), f_yt1 (y1, x1, yt1), f_yt2 (y2, x2, yt2)."""
    p_u1, p_u2 = (np.asarray(p, dtype=float).reshape(-1) for p in (p_u1, p_u2))
    f_yt1, f_yt2 = np.asarray(f_yt1, dtype=float), np.asarray(f_yt2, dtype=float)
    if yt1_card is None:
        yt1_card = f_yt1.shape[-1]
    if yt2_card is None:
        yt2_card = f_yt2.shape[-1]
    u1, u2 = Variable('U1', p_u1.size), Variable('U2', p_u2.size)
    y1, y2 = Variable('Y1', ch.y1_card), Variable('Y2', ch.y2_card)
    yt1, yt2 = Variable('YT1', yt1_card), Variable('YT2', yt2_card)
    return CFInput(
        u1_card=u1.cardinality, u2_card=u2.cardinality, yt1_card=yt1_card, yt2_card=yt2_card,
        p_u1=dist_new((u1,), p_u1), p_u2=dist_new((u2,), p_u2),
        f_x1=factor_new((ch.x1,), (u1,), f_x1, name="f_x1"),
        f_x2=factor_new((ch.x2,), (u2,), f_x2, name="f_x2"),
        f_yt1=factor_new((yt1,), (y1, ch.x1), f_yt1, name="f_yt1"),
        f_yt2=factor_new((yt2,), (y2, ch.x2), f_yt2, name="f_yt2"),
    )


def _dirichlet(rng: np.random.Generator, shape: tuple[int, ...], alpha: float) -> np.ndarray:
    rows = rng.dirichlet(np.full(shape[-1], alpha), size=int(np.prod(shape[:-1], dtype=np.int64)))
    return rows.reshape(shape)


def uniform_df_input(ch: Channel, w0_card: int = 1, w1_card: int = 1, w2_card: int = 1) -> DFInput:
    w_shape = (w0_card, w1_card, w2_card)
    return df_input_from_arrays(
        ch, np.full(w0_card, 1.0 / w0_card), np.full(w1_card, 1.0 / w1_card), np.full(w2_card, 1.0 / w2_card),
        np.full(w_shape + (ch.x1_card,), 1.0 / ch.x1_card), np.full(w_shape + (ch.x2_card,), 1.0 / ch.x2_card))


def sample_df_input(ch: Channel, w0_card: int, w1_card: int, w2_card: int,
                    rng: np.random.Generator, alpha: float = 1.0) -> DFInput:
    w_shape = (w0_card, w1_card, w2_card)
    return df_input_from_arrays(
        ch, _dirichlet(rng, (w0_card,), alpha), _dirichlet(rng, (w1_card,), alpha),
        _dirichlet(rng, (w2_card,), alpha),
        _dirichlet(rng, w_shape + (ch.x1_card,), alpha), _dirichlet(rng, w_shape + (ch.x2_card,), alpha))


def uniform_cf_input(ch: Channel, u1_card: int = 1, u2_card: int = 1,
                     yt1_card: int = 1, yt2_card: int = 1) -> CFInput:
    return cf_input_from_arrays(
        ch, np.full(u1_card, 1.0 / u1_card), np.full(u2_card, 1.0 / u2_card),
        np.full((u1_card, ch.x1_card), 1.0 / ch.x1_card), np.full((u2_card, ch.x2_card), 1.0 / ch.x2_card),
        np.full((ch.y1_card, ch.x1_card, yt1_card), 1.0 / yt1_card),
        np.full((ch.y2_card, ch.x2_card, yt2_card), 1.0 / yt2_card))


def sample_cf_input(ch: Channel, u1_card: int, u2_card: int, yt1_card: int, yt2_card: int,
                    rng: np.random.Generator, alpha: float = 1.0) -> CFInput:
    return cf_input_from_arrays(
        ch, _dirichlet(rng, (u1_card,), alpha), _dirichlet(rng, (u2_card,), alpha),
        _dirichlet(rng, (u1_card, ch.x1_card), alpha), _dirichlet(rng, (u2_card, ch.x2_card), alpha),
        _dirichlet(rng, (ch.y1_card, ch.x1_card, yt1_card), alpha),
        _dirichlet(rng, (ch.y2_card, ch.x2_card, yt2_card), alpha))


# --- Joints ---

def build_df_joint(ch: Channel, inp: DFInput) -> Dist:
    """Joint over (W0, W1, W2, X1, X2, Y1, Y2, Y3)."""
    for label, factor, card in (('f_x1', inp.f_x1, ch.x1_card), ('f_x2', inp.f_x2, ch.x2_card)):
        if factor.child_vars[0].cardinality != card:
            raise CardinalityMismatchError(
                f"{label}: {factor.child_names[0]} has {factor.child_vars[0].cardinality} symbols, channel has {card}")
    return chain_product([as_factor(inp.p_w0), as_factor(inp.p_w1), as_factor(inp.p_w2),
                          inp.f_x1, inp.f_x2, ch.law])


def build_cf_joint(ch: Channel, inp: CFInput) -> Dist:
    """Joint over (U1, U2, X1, X2, Y1, Y2, Y3, YT1, YT2)."""
    expected = (('f_x1', inp.f_x1.child_vars[0], ch.x1_card), ('f_x2', inp.f_x2.child_vars[0], ch.x2_card),
                ('f_yt1', inp.f_yt1.parent_vars[0], ch.y1_card), ('f_yt1', inp.f_yt1.parent_vars[1], ch.x1_card),
                ('f_yt2', inp.f_yt2.parent_vars[0], ch.y2_card), ('f_yt2', inp.f_yt2.parent_vars[1], ch.x2_card))
    for label, var, card in expected:
        if var.cardinality != card:
            raise CardinalityMismatchError(
                f"{label}: {var.name} has {var.cardinality} symbols, channel has {card}")
    return chain_product([as_factor(inp.p_u1), as_factor(inp.p_u2), inp.f_x1, inp.f_x2, ch.law,
                          inp.f_yt1, inp.f_yt2])


# --- Documents ---

def _parse(model: Type[_Doc], document: DocumentInput, what: str) -> _Doc:
    try:
        if isinstance(document, (str, bytes)):
            doc = model.model_validate_json(document)
        else:
            doc = model.model_validate(dict(document))
    except ValidationError as e:
        first = e.errors()[0]
        where = '.'.join(str(p) for p in first.get('loc', ())) or '<root>'
        raise DocumentError(f"{what} document: {where}: {first.get('msg')}") from e
    if doc.model_extra:
        logger.warning(f"Ignoring unknown {what} fields: {sorted(doc.model_extra)}")
    return doc


def _expect_length(label: str, values: list[float], expected: int) -> np.ndarray:
    if len(values) != expected:
        raise CardinalityMismatchError(f"{label}: expected {expected} entries, got {len(values)}")
    return np.asarray(values, dtype=float)


def load_channel(document: DocumentInput) -> Channel:
    doc = _parse(ChannelDocument, document, "channel")
    cards = (doc.x1_card, doc.x2_card, doc.y1_card, doc.y2_card, doc.y3_card)
    probs = _expect_length("channel probs", doc.probs, int(np.prod(cards)))
    try:
        return make_channel(*cards, probs)
    except ProbabilityError as e:
        raise DocumentError(f"channel document: {e}") from e


def load_source(document: DocumentInput) -> SourcePair:
    doc = _parse(SourceDocument, document, "source")
    probs = _expect_length("source probs", doc.probs, doc.s1_card * doc.s2_card)
    try:
        return make_source(doc.s1_card, doc.s2_card, probs)
    except ProbabilityError as e:
        raise DocumentError(f"source document: {e}") from e


def channel_to_document(ch: Channel) -> dict[str, Any]:
    return {'x1_card': ch.x1_card, 'x2_card': ch.x2_card, 'y1_card': ch.y1_card,
            'y2_card': ch.y2_card, 'y3_card': ch.y3_card, 'probs': ch.law.probs.reshape(-1).tolist()}


def source_to_document(src: SourcePair) -> dict[str, Any]:
    return {'s1_card': src.s1_card, 's2_card': src.s2_card, 'probs': src.joint.flat.tolist()}


def load_df_input(document: DocumentInput, ch: Channel) -> DFInput:
    doc = _parse(DFCandidateDocument, document, "df candidate")
    w_count = doc.w0_card * doc.w1_card * doc.w2_card
    arrays = dict(
        p_w0=_expect_length("p_w0", doc.p_w0, doc.w0_card),
        p_w1=_expect_length("p_w1", doc.p_w1, doc.w1_card),
        p_w2=_expect_length("p_w2", doc.p_w2, doc.w2_card),
        f_x1=_expect_length("f_x1", doc.f_x1, w_count * ch.x1_card),
        f_x2=_expect_length("f_x2", doc.f_x2, w_count * ch.x2_card),
    )
    return df_input_from_arrays(ch, **arrays)


def load_cf_input(document: DocumentInput, ch: Channel) -> CFInput:
    doc = _parse(CFCandidateDocument, document, "cf candidate")
    arrays = dict(
        p_u1=_expect_length("p_u1", doc.p_u1, doc.u1_card),
        p_u2=_expect_length("p_u2", doc.p_u2, doc.u2_card),
        f_x1=_expect_length("f_x1", doc.f_x1, doc.u1_card * ch.x1_card),
        f_x2=_expect_length("f_x2", doc.f_x2, doc.u2_card * ch.x2_card),
        f_yt1=_expect_length("f_yt1", doc.f_yt1, ch.y1_card * ch.x1_card * doc.yt1_card),
        f_yt2=_expect_length("f_yt2", doc.f_yt2, ch.y2_card * ch.x2_card * doc.yt2_card),
    )
    return cf_input_from_arrays(ch, yt1_card=doc.yt1_card, yt2_card=doc.yt2_card, **arrays)


def df_input_to_document(inp: DFInput) -> dict[str, Any]:
    return {
        'strategy': 'df',
        'w0_card': inp.w0_card, 'w1_card': inp.w1_card, 'w2_card': inp.w2_card,
        'p_w0': inp.p_w0.flat.tolist(), 'p_w1': inp.p_w1.flat.tolist(), 'p_w2': inp.p_w2.flat.tolist(),
        'f_x1': inp.f_x1.probs.reshape(-1).tolist(), 'f_x2': inp.f_x2.probs.reshape(-1).tolist(),
    }


def cf_input_to_document(inp: CFInput) -> dict[str, Any]:
    return {
        'strategy': 'cf',
        'u1_card': inp.u1_card, 'u2_card': inp.u2_card, 'yt1_card': inp.yt1_card, 'yt2_card': inp.yt2_card,
        'p_u1': inp.p_u1.flat.tolist(), 'p_u2': inp.p_u2.flat.tolist(),
        'f_x1': inp.f_x1.probs.reshape(-1).tolist(), 'f_x2': inp.f_x2.probs.reshape(-1).tolist(),
        'f_yt1': inp.f_yt1.probs.reshape(-1).tolist(), 'f_yt2': inp.f_yt2.probs.reshape(-1).tolist(),
    }


def read_document(path: str) -> dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DocumentError(f"{path}: not valid JSON ({e})") from e
