"""Prolongations of parallelisms and groupoid sections, integrability tests, and the
correspondence ``gbar`` between second-order parallelisms and groupoid sections."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NotInvertibleByGbar, SingularFieldError
from .fields import component_names, read_grid_csv, write_grid_csv
from .jets import BodyChart, Jet2, compose2, invert2, max_abs_diff2
from .numerics import DEFAULT_FD_STEP, ToleranceConfig, fd_derivative

DEFAULT_TOL = 1e-6
DEFAULT_TRIPLES = 20
GRID_PER_AXIS = 5

MatrixSection = Callable[[np.ndarray, np.ndarray], np.ndarray]
"""First-order groupoid section ``(x, y) -> n x n`` matrix (the Jet1 ``x -> y``)."""


def _as_point(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


def _check_invertible(M, location, what):
    if abs(np.linalg.det(M)) <= 1e-12:
        raise SingularFieldError(location, f"singular {what}")


class Parallelism2:
    """Second-order parallelism ``x -> (P(x), Q(x), R(x))`` over the chart."""

    def __init__(self, n: int, value: Callable, box=None):
        self.n = n
        self._value = value
        self.box = box

    @classmethod
    def from_fields(cls, P: Callable, Q: Callable, R: Optional[Callable] = None, n: Optional[int] = None, box=None):
        if n is None:
            n = np.atleast_2d(P(np.zeros(1) if box is None else np.array([b[0] for b in box]))).shape[0]
        zero = np.zeros((n, n, n))
        R = R or (lambda x: zero)

        def value(x):
            return (
                np.asarray(P(x), float).reshape(n, n),
                np.asarray(Q(x), float).reshape(n, n),
                np.asarray(R(x), float).reshape(n, n, n),
            )

        return cls(n, value, box)

    def __call__(self, x):
        P, Q, R = self._value(_as_point(x))
        _check_invertible(P, _as_point(x).tolist(), "P")
        _check_invertible(Q, _as_point(x).tolist(), "Q")
        return P, Q, R

    def P(self, x):
        return self(x)[0]

    def Q(self, x):
        return self(x)[1]

    def R(self, x):
        return self(x)[2]

    def frame(self, x) -> Jet2:
        """The frame at ``x`` as the jet ``<0 -> x; P, Q, R>``."""
        x = _as_point(x)
        P, Q, R = self(x)
        return Jet2(np.zeros(self.n), x, P, Q, R)

    def to_csv(self, path, points) -> None:
        n = self.n
        header = component_names("x", (n,)) + component_names("P", (n, n)) + component_names("Q", (n, n)) + component_names("R", (n, n, n))
        rows = []
        for x in points:
            P, Q, R = self(x)
            rows.append(np.concatenate([x, P.ravel(), Q.ravel(), R.ravel()]))
        write_grid_csv(path, header, rows)

    @classmethod
    def from_csv(cls, path, n: int) -> "Parallelism2":
        P, Q, R = read_grid_csv(path, n, [(n, n), (n, n), (n, n, n)])
        return cls.from_fields(P, Q, R, n=n, box=P.box)


class GroupoidSection2:
    """Section ``(x, y) -> Jet2<x -> y>``; optionally remembers generating P/Q sections."""

    def __init__(self, n: int, value: Callable, generators: Optional[tuple] = None):
        self.n = n
        self._value = value
        self.generators = generators

    def __call__(self, x, y) -> Jet2:
        return self._value(_as_point(x), _as_point(y))

    @classmethod
    def from_fields(cls, P: MatrixSection, Q: MatrixSection, R: Optional[Callable] = None, n: int = 1):
        def value(x, y):
            Rv = np.zeros((n, n, n)) if R is None else R(x, y)
            return Jet2(x, y, P(x, y), Q(x, y), Rv)

        return cls(n, value)

    def p_section(self) -> MatrixSection:
        return lambda x, y: self(x, y).P

    def q_section(self) -> MatrixSection:
        return lambda x, y: self(x, y).Q


def canonical_section(n: int) -> GroupoidSection2:
    """``(x, y) -> <x -> y; I, I, 0>``."""
    eye = np.eye(n)
    return GroupoidSection2(n, lambda x, y: Jet2(x, y, eye, eye), generators=(lambda x, y: eye, lambda x, y: eye))


# --- parallelisms ---------------------------------------------------------------------


def prolong_parallelism(P: Callable, Q: Callable, n: Optional[int] = None, h: float = DEFAULT_FD_STEP, box=None) -> Parallelism2:
    """``P^1(Q)``: ``R^i_{j,k} = sum_l Q^l_k dP^i_j/dx^l``."""

    def value(x):
        Pv = np.asarray(P(x), float)
        m = Pv.shape[0] if Pv.ndim else 1
        Pv = Pv.reshape(m, m)
        Qv = np.asarray(Q(x), float).reshape(m, m)
        _check_invertible(Pv, x.tolist(), "P")
        _check_invertible(Qv, x.tolist(), "Q")
        dP = fd_derivative(lambda z: np.asarray(P(z), float).reshape(m, m), x, h, box)
        return Pv, Qv, np.einsum("ijl,lk->ijk", dP, Qv)

    if n is None:
        probe = np.zeros(1) if box is None else np.array([(lo + hi) / 2 for lo, hi in box])
        n = np.atleast_2d(np.asarray(P(probe), float)).shape[0]
    return Parallelism2(n, value, box)


def prolongation_residual(S: Parallelism2, x, h: float = DEFAULT_FD_STEP) -> float:
    x = _as_point(x)
    _, Q, R = S(x)
    dP = fd_derivative(S.P, x, h, S.box)
    return float(np.max(np.abs(R - np.einsum("ijl,lk->ijk", dP, Q))))


# --- groupoid sections ----------------------------------------------------------------


def _partials(section: MatrixSection, x, y, h, box):
    n = x.size
    dx = fd_derivative(lambda z: np.asarray(section(z, y), float).reshape(n, n), x, h, box)
    dy = fd_derivative(lambda z: np.asarray(section(x, z), float).reshape(n, n), y, h, box)
    return dx, dy


def _section_R(Pc: MatrixSection, Qv, x, y, h, box):
    dx, dy = _partials(Pc, x, y, h, box)
    return dx + np.einsum("jil,lk->jik", dy, Qv)


def prolong_section(Pc: MatrixSection, Qc: MatrixSection, n: int, h: float = DEFAULT_FD_STEP, box=None) -> GroupoidSection2:
    """``P^1(Q)(x, y)`` with ``R = dP/dx^k + sum_l Q^l_k dP/dy^l``."""

    def value(x, y):
        Pv = np.asarray(Pc(x, y), float).reshape(n, n)
        Qv = np.asarray(Qc(x, y), float).reshape(n, n)
        _check_invertible(Pv, (x.tolist(), y.tolist()), "P")
        _check_invertible(Qv, (x.tolist(), y.tolist()), "Q")
        return Jet2(x, y, Pv, Qv, _section_R(Pc, Qv, x, y, h, box))

    return GroupoidSection2(n, value, generators=(Pc, Qc))


def section_prolongation_residual(S: GroupoidSection2, x, y, h: float = DEFAULT_FD_STEP, box=None) -> float:
    x, y = _as_point(x), _as_point(y)
    g = S(x, y)
    R = _section_R(S.p_section(), g.Q, x, y, h, box)
    return float(np.max(np.abs(g.R - R)))


@dataclass
class SectionVerdict:
    is_morphism: bool
    morphism_residual: float
    closedness_residual: float
    integrable: bool

    def to_dict(self):
        return asdict(self)


def sample_triples(chart: BodyChart, count: int, rng: np.random.Generator):
    return [tuple(rng.uniform(chart.lo, chart.hi) for _ in range(3)) for _ in range(count)]


def morphism_residual(section: Callable, triples) -> float:
    """max over triples of |S(y,z) S(x,y) - S(x,z)| for a matrix-valued section."""
    worst = 0.0
    for x, y, z in triples:
        gap = np.asarray(section(y, z)) @ np.asarray(section(x, y)) - np.asarray(section(x, z))
        worst = max(worst, float(np.max(np.abs(gap))))
    return worst


def closedness_residual(field: Callable, x, h: float = DEFAULT_FD_STEP, box=None) -> float:
    """max |dB^j_i/dx^k - dB^j_k/dx^i|: zero iff ``B`` is locally a Jacobian matrix."""
    x = _as_point(x)
    n = x.size
    dB = fd_derivative(lambda z: np.asarray(field(z), float).reshape(n, n), x, h, box)
    return float(np.max(np.abs(dB - dB.transpose(0, 2, 1))))


def integrability_test_section(
    Qc: MatrixSection,
    chart: BodyChart,
    z0=None,
    cfg: ToleranceConfig = ToleranceConfig(),
    tol: float = DEFAULT_TOL,
    n_triples: int = DEFAULT_TRIPLES,
    per_axis: int = GRID_PER_AXIS,
) -> SectionVerdict:
    """Test whether a first-order section is integrable on the (contractible) chart.

    Integrable sections are exactly ``Q(x, y) = D phi(y)^-1 D phi(x)`` for a chart ``phi``;
    that holds iff ``Q`` is a groupoid morphism and ``x -> Q(x, z0)`` is a Jacobian field.
    """
    z0 = chart.center if z0 is None else _as_point(z0)
    triples = sample_triples(chart, n_triples, cfg.rng(0x5EC7))
    m_res = morphism_residual(Qc, triples)
    c_res = max(closedness_residual(lambda z: Qc(z, z0), x, cfg.fd_step, chart.box) for x in chart.grid(per_axis))
    return SectionVerdict(m_res <= tol, m_res, c_res, bool(m_res <= tol and c_res <= tol))


@dataclass
class ParallelismVerdict:
    prolongation_residual: float
    p_minus_q: float
    q_verdict: SectionVerdict
    is_prolongation: bool
    p_equals_q: bool
    q_integrable: bool
    integrable_prolongation: bool
    integrable: bool

    def to_dict(self):
        return asdict(self)


def first_order_gbar(field: Callable) -> MatrixSection:
    """``G P(x, y) = P(y) P(x)^-1``."""
    return lambda x, y: np.asarray(field(y)) @ np.linalg.inv(np.asarray(field(x)))


def integrability_test_parallelism2(
    S: Parallelism2,
    chart: BodyChart,
    cfg: ToleranceConfig = ToleranceConfig(),
    tol: float = DEFAULT_TOL,
    per_axis: int = GRID_PER_AXIS,
) -> ParallelismVerdict:
    pts = chart.grid(per_axis)
    pr = max(prolongation_residual(S, x, cfg.fd_step) for x in pts)
    pq = max(float(np.max(np.abs(S.P(x) - S.Q(x)))) for x in pts)
    qv = integrability_test_section(first_order_gbar(S.Q), chart, cfg=cfg, tol=tol, per_axis=per_axis)
    is_pro, peq, qint = pr <= tol, pq <= tol, qv.integrable
    return ParallelismVerdict(pr, pq, qv, is_pro, peq, qint, is_pro and qint, is_pro and peq and qint)


@dataclass
class Section2Verdict:
    prolongation_residual: float
    p_minus_q: float
    q_verdict: SectionVerdict
    holonomic_residual: float
    is_prolongation: bool
    p_equals_q: bool
    q_integrable: bool
    holonomic_values: bool
    integrable_prolongation: bool
    integrable: bool

    def to_dict(self):
        return asdict(self)


def integrability_test_section2(
    S: GroupoidSection2,
    chart: BodyChart,
    cfg: ToleranceConfig = ToleranceConfig(),
    tol: float = DEFAULT_TOL,
    n_pairs: int = DEFAULT_TRIPLES,
) -> Section2Verdict:
    """Flags for a second-order groupoid section on sampled pairs.

    Integrable iff prolongation, ``P = Q`` and ``Q`` integrable.
    """
    rng = cfg.rng(0x5EC2)
    pairs = [(rng.uniform(chart.lo, chart.hi), rng.uniform(chart.lo, chart.hi)) for _ in range(n_pairs)]
    pr = max(section_prolongation_residual(S, x, y, cfg.fd_step, chart.box) for x, y in pairs)
    jets = [S(x, y) for x, y in pairs]
    pq = max(float(np.max(np.abs(g.P - g.Q))) for g in jets)
    hol = max(max(float(np.max(np.abs(g.P - g.Q))), float(np.max(np.abs(g.R - g.R.transpose(0, 2, 1))))) for g in jets)
    qv = integrability_test_section(S.q_section(), chart, cfg=cfg, tol=tol)
    is_pro, peq, qint = pr <= tol, pq <= tol, qv.integrable
    return Section2Verdict(pr, pq, qv, hol, is_pro, peq, qint, hol <= tol, is_pro and qint, is_pro and peq and qint)


# --- gbar -------------------------------------------------------------------------------


def gbar(Pbar: Parallelism2) -> GroupoidSection2:
    """``(x, y) -> Pbar(y) . Pbar(x)^-1``."""

    def value(x, y):
        return compose2(Pbar.frame(y), invert2(Pbar.frame(x)))

    return GroupoidSection2(Pbar.n, value)


def section_morphism_residual(S: GroupoidSection2, triples) -> float:
    return max((max_abs_diff2(compose2(S(y, z), S(x, y)), S(x, z)) for x, y, z in triples), default=0.0)


def invert_gbar(
    S: GroupoidSection2,
    z0,
    crystal: Jet2,
    chart: BodyChart,
    cfg: ToleranceConfig = ToleranceConfig(),
    tol: float = DEFAULT_TOL,
    n_triples: int = DEFAULT_TRIPLES,
) -> Parallelism2:
    """Parallelism ``x -> S(z0, x) . crystal`` with ``crystal = <0 -> z0>``."""
    z0 = _as_point(z0)
    if np.max(np.abs(crystal.y - z0)) > 1e-9 or np.max(np.abs(crystal.x)) > 1e-9:
        raise ValueError("crystal must be a jet <0 -> z0>")
    res = section_morphism_residual(S, sample_triples(chart, n_triples, cfg.rng(0x6BA2)))
    if res > tol:
        raise NotInvertibleByGbar(f"section is not a groupoid morphism (residual {res:.3g}); not invertible by gbar")

    def value(x):
        g = compose2(S(z0, x), crystal)
        return g.P, g.Q, g.R

    return Parallelism2(S.n, value, chart.box)
