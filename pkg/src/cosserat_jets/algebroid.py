"""Sections of the first- and second-order algebroids and what they induce: derivations,
brackets, exponentials, Christoffel symbols, curvature and second-order covariant
derivatives on the frame bundle.

Conventions
-----------
* A :class:`Section1` value at ``x`` is ``(v, M)``; as a derivation ``D(d_i) = sum_j M[j, i] d_j``
  with base field ``v``.
* A :class:`LinearSection2` has components ``vP[j, i, l]``, ``vQ[j, i, l]``,
  ``vR[j, i, k, l]`` -- the value on the coordinate field ``d_l``.
* Christoffel symbols: ``nabla_{d_j} d_i = sum_k G[k, i, j] d_k``.
* Curvature array: ``curv[l, k, i, j]`` is the ``d_l`` coefficient of ``R(d_i, d_j) d_k`` with
  ``R(X, Y) = nabla_[X,Y] - nabla_X nabla_Y + nabla_Y nabla_X``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InsufficientData, NotLinearSection
from .fields import component_names, write_grid_csv
from .jets import BodyChart, Jet1, Jet2
from .numerics import DEFAULT_FD2_STEP, DEFAULT_FD_STEP, ToleranceConfig, fd_derivative, integrate_flow

DEFAULT_STEPS = 100
LINEARITY_TOL = 1e-8


def _pt(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


class Section1:
    """Section ``x -> (v(x), M(x))`` of the first-order algebroid."""

    def __init__(self, n: int, value: Callable):
        self.n = n
        self._value = value

    @classmethod
    def from_fields(cls, v: Optional[Callable], M: Optional[Callable], n: int) -> "Section1":
        zero_v, zero_M = np.zeros(n), np.zeros((n, n))

        def value(x):
            vv = zero_v if v is None else np.asarray(v(x), float).reshape(n)
            MM = zero_M if M is None else np.asarray(M(x), float).reshape(n, n)
            return vv, MM

        return cls(n, value)

    @classmethod
    def constant(cls, v, M) -> "Section1":
        v, M = np.asarray(v, float), np.asarray(M, float)
        return cls(v.size, lambda x: (v, M))

    def __call__(self, x):
        return self._value(_pt(x))

    def v(self, x):
        return self(x)[0]

    def M(self, x):
        return self(x)[1]

    def to_csv(self, path, points) -> None:
        n = self.n
        header = component_names("x", (n,)) + component_names("v", (n,)) + component_names("M", (n, n))
        write_grid_csv(path, header, [np.concatenate([p, *(a.ravel() for a in self(p))]) for p in points])


def anchor(section) -> Callable:
    """Base vector field of a Section1 / Section2."""
    return lambda x: section(x)[0]


@dataclass
class Derivation:
    """Derivation of vector fields determined by a Section1."""

    section: Section1
    h: float = DEFAULT_FD_STEP
    box: Optional[Sequence] = None

    def base_field(self, x):
        return self.section.v(x)

    def matrix(self, x):
        return self.section.M(x)

    def __call__(self, X: Callable, x) -> np.ndarray:
        """``D(X)(x) = v(X)(x) + M(x) X(x)``."""
        x = _pt(x)
        v, M = self.section(x)
        dX = fd_derivative(X, x, self.h, self.box)
        return dX @ v + M @ np.asarray(X(x), float)


def section_to_derivation(section: Section1, h: float = DEFAULT_FD_STEP, box=None) -> Derivation:
    return Derivation(section, h, box)


def _lie_bracket_fields(v1: Callable, v2: Callable, x, h, box):
    return fd_derivative(v2, x, h, box) @ v1(x) - fd_derivative(v1, x, h, box) @ v2(x)


def bracket(s1: Section1, s2: Section1, h: float = DEFAULT_FD_STEP, box=None) -> Section1:
    """Commutator ``D1 D2 - D2 D1`` of the associated derivations."""

    def value(x):
        v1, M1 = s1(x)
        v2, M2 = s2(x)
        base = _lie_bracket_fields(s1.v, s2.v, x, h, box)
        dM1 = fd_derivative(s1.M, x, h, box)
        dM2 = fd_derivative(s2.M, x, h, box)
        # grouped so that swapping the arguments negates the result exactly
        mat = (dM2 @ v1 - dM1 @ v2) + (M1 @ M2 - M2 @ M1)
        return base, mat

    return Section1(s1.n, value)


def exponential(section: Section1, t: float, x, steps: int = DEFAULT_STEPS, chart: Optional[BodyChart] = None) -> Jet1:
    """``Exp_t``: the jet ``psi_t(x) -> x`` with ``dPhi/dt = Phi M(psi_t(x))``, ``Phi_0 = I``."""
    x = _pt(x)
    n = x.size
    if t == 0:
        return Jet1(x, x, np.eye(n))

    def rhs(tau, s):
        z, Phi = s[:n], s[n:].reshape(n, n)
        v, M = section(z)
        return np.concatenate([v, (Phi @ M).ravel()])

    inside = None if chart is None else (lambda s: chart.contains(s[:n]))
    s = integrate_flow(rhs, np.concatenate([x, np.eye(n).ravel()]), t, steps, inside)
    return Jet1(s[:n], x, s[n:].reshape(n, n))


# --- linear sections and connections ----------------------------------------------------


class LinearSection1:
    """Linear section of the anchor: a vector field ``X`` goes to a Section1.

    Built either from components ``M_l(x)`` (value on ``d_l`` is ``(e_l, M_l)``) or from an
    arbitrary map ``apply`` whose linearity is checked when needed.
    """

    def __init__(self, n: int, apply: Callable[[Callable], Section1], generator: Optional[Callable] = None):
        self.n = n
        self._apply = apply
        self.generator = generator

    @classmethod
    def from_components(cls, comps: Callable, n: int, generator=None) -> "LinearSection1":
        """``comps(x)`` returns ``C[j, i, l]``, the matrix of the value on ``d_l``."""

        def apply(X):
            def value(x):
                Xv = np.asarray(X(x), float)
                return Xv, np.asarray(comps(x), float) @ Xv

            return Section1(n, value)

        return cls(n, apply, generator)

    def __call__(self, X: Callable) -> Section1:
        return self._apply(X)

    def on_coordinate(self, j: int) -> Section1:
        e = np.zeros(self.n)
        e[j] = 1.0
        return self._apply(lambda x: e)

    def components(self, x) -> np.ndarray:
        return np.stack([self.on_coordinate(j).M(x) for j in range(self.n)], axis=-1)


def coordinate_field(n: int, j: int) -> Callable:
    e = np.zeros(n)
    e[j] = 1.0
    return lambda x: e


def algebroid_of_section(section: Callable, n: int, h: float = DEFAULT_FD_STEP, box=None) -> LinearSection1:
    """Linear section induced by a first-order groupoid section: ``d P(x, y)/dx^l`` at ``y = x``."""

    def comps(x):
        return fd_derivative(lambda z: np.asarray(section(z, x), float).reshape(n, n), x, h, box)

    return LinearSection1.from_components(comps, n, generator=section)


def linearity_defect(L: LinearSection1, points, rng: np.random.Generator) -> float:
    """max |L(fX + Y) - f L(X) - L(Y)| over sampled points and affine test data."""
    n = L.n
    worst = 0.0
    for _ in range(3):
        c, a, b = rng.normal(size=n), rng.normal(size=(n, n)), rng.normal(size=(n, n))
        f = lambda x, c=c: 1.0 + c @ x
        X = lambda x, a=a: a @ x + 1.0
        Y = lambda x, b=b: b @ x - 0.5
        lhs = L(lambda x: f(x) * X(x) + Y(x))
        sx, sy = L(X), L(Y)
        for x in points:
            l_v, l_M = lhs(x)
            x_v, x_M = sx(x)
            y_v, y_M = sy(x)
            worst = max(worst, float(np.max(np.abs(l_v - f(x) * x_v - y_v))), float(np.max(np.abs(l_M - f(x) * x_M - y_M))))
    return worst


class ChristoffelField:
    def __init__(self, n: int, gamma: Callable):
        self.n = n
        self._gamma = gamma

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self._gamma(_pt(x)), float).reshape(self.n, self.n, self.n)

    def covariant_derivative(self, X: Callable, Y: Callable, x, h: float = DEFAULT_FD_STEP, box=None) -> np.ndarray:
        """``nabla_X Y`` at ``x``."""
        x = _pt(x)
        Xv, Yv = np.asarray(X(x), float), np.asarray(Y(x), float)
        return fd_derivative(Y, x, h, box) @ Xv + np.einsum("kij,i,j->k", self(x), Yv, Xv)


def christoffels(L: LinearSection1, chart: Optional[BodyChart] = None, cfg: ToleranceConfig = ToleranceConfig(), tol: float = LINEARITY_TOL) -> ChristoffelField:
    """``G[k, i, j]`` = matrix part of ``L(d_j)`` at ``(k, i)``."""
    if chart is not None:
        defect = linearity_defect(L, chart.grid(2), cfg.rng(0x11EA))
        if defect > tol:
            raise NotLinearSection(f"section map is not linear over functions (defect {defect:.3g})")
    return ChristoffelField(L.n, L.components)


def curvature(G: ChristoffelField, x, h: float = DEFAULT_FD2_STEP, box=None) -> np.ndarray:
    """``curv[l, k, i, j]``: coefficient of ``d_l`` in ``R(d_i, d_j) d_k``."""
    x = _pt(x)
    g = G(x)
    dG = fd_derivative(G, x, h, box)  # dG[l, k, j, i] = d_i G[l, k, j]
    # nabla_i nabla_j d_k = (d_i G[l,k,j] + G[m,k,j] G[l,m,i]) d_l
    nn_ij = np.einsum("lkji->lkij", dG) + np.einsum("mkj,lmi->lkij", g, g)
    return -nn_ij + nn_ij.transpose(0, 1, 3, 2)


def export_curvature_csv(path, G: ChristoffelField, points, h: float = DEFAULT_FD2_STEP, box=None) -> None:
    n = G.n
    header = component_names("x", (n,)) + component_names("R", (n, n, n, n))
    write_grid_csv(path, header, [np.concatenate([p, curvature(G, p, h, box).ravel()]) for p in points])


def morphism_defect(L: LinearSection1, x, h: float = DEFAULT_FD_STEP, box=None) -> float:
    """max over coordinate pairs of |[L d_i, L d_j] - L [d_i, d_j]| (the latter is 0)."""
    worst = 0.0
    for i in range(L.n):
        for j in range(i + 1, L.n):
            v, M = bracket(L.on_coordinate(i), L.on_coordinate(j), h, box)(x)
            worst = max(worst, float(np.max(np.abs(v))), float(np.max(np.abs(M))))
    return worst


# --- second order -----------------------------------------------------------------------


class Section2:
    """Section ``x -> (v, vP, vQ, vR)`` of the second-order algebroid."""

    def __init__(self, n: int, value: Callable):
        self.n = n
        self._value = value

    def __call__(self, x):
        return self._value(_pt(x))


class LinearSection2:
    """Linear section with components ``x -> (vP[j,i,l], vQ[j,i,l], vR[j,i,k,l])``."""

    def __init__(self, n: int, components: Callable, generators: Optional[tuple] = None):
        self.n = n
        self._components = components
        self.generators = generators

    def components(self, x):
        vP, vQ, vR = self._components(_pt(x))
        n = self.n
        return (np.asarray(vP, float).reshape(n, n, n), np.asarray(vQ, float).reshape(n, n, n), np.asarray(vR, float).reshape(n, n, n, n))

    def __call__(self, X: Callable) -> Section2:
        def value(x):
            Xv = np.asarray(X(x), float)
            vP, vQ, vR = self.components(x)
            return Xv, vP @ Xv, vQ @ Xv, vR @ Xv

        return Section2(self.n, value)

    @classmethod
    def zero(cls, n: int) -> "LinearSection2":
        return cls(n, lambda x: (np.zeros((n, n, n)), np.zeros((n, n, n)), np.zeros((n, n, n, n))))


def project_p(L: LinearSection2) -> LinearSection1:
    return LinearSection1.from_components(lambda x: L.components(x)[0], L.n)


def project_q(L: LinearSection2) -> LinearSection1:
    return LinearSection1.from_components(lambda x: L.components(x)[1], L.n)


def algebroid_prolong(AP: LinearSection1, AQ: LinearSection1, h: float = DEFAULT_FD2_STEP, box=None) -> LinearSection2:
    """Second-order prolongation of two linear sections, from their generating sections."""
    Pc, Qc = AP.generator, AQ.generator
    if Pc is None or Qc is None:
        raise InsufficientData("algebroid_prolong needs the generating groupoid sections")
    n = AP.n

    def P_at(a, b):
        return np.asarray(Pc(a, b), float).reshape(n, n)

    def Q_at(a, b):
        return np.asarray(Qc(a, b), float).reshape(n, n)

    def comps(x):
        dPx = lambda z, y: fd_derivative(lambda w: P_at(w, y), z, h, box)  # [j,i,k]
        dPy = lambda z, y: fd_derivative(lambda w: P_at(z, w), y, h, box)  # [j,i,m]
        vP = dPx(x, x)
        vQ = fd_derivative(lambda w: Q_at(w, x), x, h, box)  # [m,k,l]
        d2Pxx = fd_derivative(lambda w: dPx(w, x), x, h, box)  # [j,i,k,l]
        d2Pxy = fd_derivative(lambda w: dPy(w, x), x, h, box)  # [j,i,m,l]
        Q = Q_at(x, x)
        vR = d2Pxx + np.einsum("mkl,jim->jikl", vQ, dPy(x, x)) + np.einsum("mk,jiml->jikl", Q, d2Pxy)
        return vP, vQ, vR

    return LinearSection2(n, comps, generators=(Pc, Qc))


def algebroid_integrability_residual(L: LinearSection2, points, h: float = DEFAULT_FD2_STEP, box=None) -> float:
    """Deviation from the integrable template: ``vQ = 0`` and
    ``vR[j,i,k,l] = d^2P/dx^l dx^k + d^2P/dx^l dy^k``, i.e. the derivative of ``vP`` along the diagonal."""
    worst = 0.0
    for x in points:
        _, vQ, vR = L.components(x)
        template = np.einsum("jilk->jikl", fd_derivative(lambda z: L.components(z)[0], x, h, box))
        worst = max(worst, float(np.max(np.abs(vQ))), float(np.max(np.abs(vR - template))))
    return worst


def project_nabla1(L: LinearSection2) -> ChristoffelField:
    """``G[k, i, j] = vQ[k, i, j]``."""
    return ChristoffelField(L.n, lambda x: L.components(x)[1])


# --- second-order covariant derivative on the frame bundle ------------------------------

FrameField = Callable[[np.ndarray, np.ndarray], tuple]
"""Vector field on the frame bundle: ``(x, Z) -> (base n-vector, fibre n x n)``."""


class SecondOrderCovDer:
    """``nabla_X`` acting on frame-bundle vector fields.

    On coordinate fields, at ``(x, Z)``:
      (i)  ``nabla_{d_j} d_i = sum_k vQ[k,i,j] d_k + sum_{k,l} (vR[:,:,i,j] Z)[k,l] d/dx^k_l``
      (ii) ``nabla_{d_k} d/dx^i_j = sum_l vP[l,i,k] d/dx^l_j``
    and extended by the Leibniz rule along ``V = (X, (vP X) Z)``. At ``Z = I`` rule (i) is
    exactly the coordinate formula; the ``Z`` factor makes it commute with right translations.
    """

    def __init__(self, L: LinearSection2, X: Callable, h: float = DEFAULT_FD_STEP):
        self.L = L
        self.X = X
        self.h = h

    def coefficients(self, x):
        """(rule (i) base ``[k,i,j]``, rule (i) fibre ``[k,l,i,j]``, rule (ii) ``[l,i,k]``) at ``Z = I``."""
        vP, vQ, vR = self.L.components(x)
        return vQ, vR, vP

    def base_field(self, x, Z):
        x = _pt(x)
        Xv = np.asarray(self.X(x), float)
        vP = self.L.components(x)[0]
        return Xv, (vP @ Xv) @ Z

    def __call__(self, Y: FrameField, x, Z) -> tuple:
        x, Z = _pt(x), np.asarray(Z, float)
        n = x.size
        Xv = np.asarray(self.X(x), float)
        vP, vQ, vR = self.L.components(x)
        Vb, Vf = self.base_field(x, Z)
        h = self.h

        def Yflat(s):
            yb, yf = Y(s[:n], s[n:].reshape(n, n))
            return np.concatenate([np.asarray(yb, float), np.asarray(yf, float).ravel()])

        s0 = np.concatenate([x, Z.ravel()])
        dY = fd_derivative(Yflat, s0, h) @ np.concatenate([Vb, Vf.ravel()])
        yb, yf = Y(x, Z)
        yb, yf = np.asarray(yb, float), np.asarray(yf, float)
        base = dY[:n] + np.einsum("kij,i,j->k", vQ, yb, Xv)
        fib = dY[n:].reshape(n, n)
        fib = fib + np.einsum("kmij,ml,i,j->kl", vR, Z, yb, Xv)
        fib = fib + np.einsum("lik,ij,k->lj", vP, yf, Xv)
        return base, fib


def second_order_covder(L: LinearSection2, X: Callable, h: float = DEFAULT_FD_STEP) -> SecondOrderCovDer:
    return SecondOrderCovDer(L, X, h)


@dataclass
class CovDerFlags:
    function_linear: bool
    leibniz: bool
    base_projection: bool
    right_invariant: bool
    residuals: dict

    def to_dict(self):
        return asdict(self)


def _random_frame_field(rng, n):
    A = rng.normal(size=(n, n)) * 0.5
    B = rng.normal(size=(n, n, n)) * 0.5
    C = rng.normal(size=(n, n, n)) * 0.5
    return lambda x, Z: (A @ x + np.einsum("kij,ij->k", B, Z), np.einsum("kli,i->kl", C, x) + Z @ Z.T)


def covder_property_flags(L: LinearSection2, points, cfg: ToleranceConfig = ToleranceConfig(), tol: float = 1e-6) -> CovDerFlags:
    """Sample the four structural properties of the induced covariant derivative."""
    n = L.n
    rng = cfg.rng(0xC0DE)
    a = rng.normal(size=(n, n))
    X = lambda x: a @ x + 1.0
    c = rng.normal(size=n)
    f = lambda x: 1.0 + 0.3 * np.sin(c @ x)
    d = rng.normal(size=(n, n))
    F = lambda x, Z: np.cos(d.ravel() @ Z.ravel()) + x.sum()
    Y = _random_frame_field(rng, n)
    g = np.eye(n) + 0.3 * rng.normal(size=(n, n))
    g_inv = np.linalg.inv(g)

    nab = SecondOrderCovDer(L, X, cfg.fd_step)
    nab_f = SecondOrderCovDer(L, lambda x: f(x) * X(x), cfg.fd_step)
    FY = lambda x, Z: tuple(F(x, Z) * np.asarray(c_, float) for c_ in Y(x, Z))
    RgY = lambda x, Z: (Y(x, Z @ g_inv)[0], Y(x, Z @ g_inv)[1] @ g)

    r = dict(function_linear=0.0, leibniz=0.0, base_projection=0.0, right_invariant=0.0)
    for x in points:
        x = _pt(x)
        Z = np.eye(n) + 0.2 * rng.normal(size=(n, n))
        base, fib = nab(Y, x, Z)
        fb, ff = nab_f(Y, x, Z)
        r["function_linear"] = max(r["function_linear"], float(np.max(np.abs(np.concatenate([fb - f(x) * base, (ff - f(x) * fib).ravel()])))))
        lb, lf = nab(FY, x, Z)
        Vb, Vf = nab.base_field(x, Z)
        sZ = np.concatenate([x, Z.ravel()])
        dF = fd_derivative(lambda s: F(s[:n], s[n:].reshape(n, n)), sZ, cfg.fd_step) @ np.concatenate([Vb, Vf.ravel()])
        yb, yf = Y(x, Z)
        r["leibniz"] = max(
            r["leibniz"],
            float(np.max(np.abs(np.concatenate([lb - F(x, Z) * base - dF * yb, (lf - F(x, Z) * fib - dF * yf).ravel()])))),
        )
        r["base_projection"] = max(r["base_projection"], float(np.max(np.abs(Vb - X(x)))))
        rb, rf = nab(RgY, x, Z @ g)
        r["right_invariant"] = max(r["right_invariant"], float(np.max(np.abs(np.concatenate([rb - base, (rf - fib @ g).ravel()])))))
    return CovDerFlags(
        r["function_linear"] <= tol,
        r["leibniz"] <= tol,
        r["base_projection"] <= tol,
        r["right_invariant"] <= tol,
        r,
    )


def exponential2(section: Section2, t: float, x, steps: int = DEFAULT_STEPS, chart: Optional[BodyChart] = None) -> Jet2:
    """Second-order analogue of :func:`exponential`: the jet ``psi_t(x) -> x`` obtained by
    integrating ``g_{t+s} = g_t . Exp_s(psi_t x)`` for the element field ``section``."""
    x = _pt(x)
    n = x.size
    sizes = [n, n * n, n * n, n**3]
    cuts = np.cumsum(sizes)[:-1]

    def rhs(tau, s):
        z, P, Q, R = np.split(s, cuts)
        P, Q, R = P.reshape(n, n), Q.reshape(n, n), R.reshape(n, n, n)
        v, vP, vQ, vR = section(z)
        dR = np.einsum("jil,lk->jik", R, vQ) + np.einsum("jmk,mi->jik", R, vP) + np.einsum("jm,mik->jik", P, vR)
        return np.concatenate([v, (P @ vP).ravel(), (Q @ vQ).ravel(), dR.ravel()])

    s0 = np.concatenate([x, np.eye(n).ravel(), np.eye(n).ravel(), np.zeros(n**3)])
    if t == 0:
        s = s0
    else:
        inside = None if chart is None else (lambda s: chart.contains(s[:n]))
        s = integrate_flow(rhs, s0, t, steps, inside)
    z, P, Q, R = np.split(s, cuts)
    return Jet2(z, x, P.reshape(n, n), Q.reshape(n, n), R.reshape(n, n, n))
