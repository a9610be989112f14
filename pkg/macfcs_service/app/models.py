from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveInt


class _Document(BaseModel):
    # unknown fields are kept so the loaders can warn about them
    model_config = ConfigDict(extra='allow')


class ChannelDocument(_Document):
    """p*(y1,y2,y3|x1,x2), probs flattened row-major in (x1, x2, y1, y2, y3) order."""
    x1_card: PositiveInt
    x2_card: PositiveInt
    y1_card: PositiveInt
    y2_card: PositiveInt
    y3_card: PositiveInt
    probs: list[float]


class SourceDocument(_Document):
    """p(s1,s2), probs flattened row-major in (s1, s2) order."""
    s1_card: PositiveInt
    s2_card: PositiveInt
    probs: list[float]


class DFCandidateDocument(_Document):
    """Decode-forward auxiliaries; f_x1/f_x2 flattened in (w0, w1, w2, x) order."""
    strategy: Literal['df'] = 'df'
    w0_card: PositiveInt
    w1_card: PositiveInt
    w2_card: PositiveInt
    p_w0: list[float]
    p_w1: list[float]
    p_w2: list[float]
    f_x1: list[float]
    f_x2: list[float]


class CFCandidateDocument(_Document):
    """Compress-forward auxiliaries.

    f_x1 in (u1, x1) order, f_x2 in (u2, x2) order, f_yt1 in (y1, x1, yt1)
    order and f_yt2 in (y2, x2, yt2) order.
    """
    strategy: Literal['cf'] = 'cf'
    u1_card: PositiveInt
    u2_card: PositiveInt
    yt1_card: PositiveInt
    yt2_card: PositiveInt
    p_u1: list[float]
    p_u2: list[float]
    f_x1: list[float]
    f_x2: list[float]
    f_yt1: list[float]
    f_yt2: list[float]


class InequalityDocument(BaseModel):
    label: str
    coeffs: dict[str, float] = Field(default_factory=dict)
    sense: Literal['<', '<=', '>', '>='] = '<='
    rhs: float


class SystemDocument(_Document):
    vars: list[str]
    nonneg: bool = True
    inequalities: list[InequalityDocument]


class ConstraintEntry(BaseModel):
    label: str
    lhs: float
    rhs: float
    margin: float
    satisfied: bool
    vacuous: bool
    branches: Optional[list[float]] = None


class IndependenceEntry(BaseModel):
    tv: float
    tol: float
    passed: bool


class FeasibilityReportResponse(BaseModel):
    strategy: str
    feasible: bool
    min_margin: Optional[float]
    constraints: list[ConstraintEntry]
    independence: Optional[IndependenceEntry] = None


class SourceStatsResponse(BaseModel):
    h_s1: float
    h_s2: float
    h_s1_given_s2: float
    h_s2_given_s1: float
    h_joint: float
    i_s1_s2: float


class CheckRequest(BaseModel):
    channel: ChannelDocument
    source: SourceDocument
    candidate: Union[DFCandidateDocument, CFCandidateDocument] = Field(discriminator='strategy')
    tol_indep: Optional[float] = None


class SystemVerdictResponse(BaseModel):
    feasible: bool
    witness: Optional[dict[str, float]]
    residual: list[InequalityDocument]
