"""First-order jets and second-order non-holonomic jets in quotient coordinates.

A :class:`Jet2` ``<x -> y; P, Q, R>`` is the 1-jet at the canonical frame over ``x`` of a
principal-bundle map ``(z, X) -> (psi(z), C(z) X)`` with ``psi(x) = y``:

* ``P = C(x)``               frame image,
* ``Q = D psi(x)``           base Jacobian,
* ``R[j, i, k] = dC^j_i/dz^k (x)``.

Composition and inversion below follow from the chain rule applied to such maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ComposabilityError, DomainError, InversionError
from .numerics import DEFAULT_FD_STEP, fd_derivative, fd_jacobian

COMPOSE_TOL = 1e-9
SINGULAR_TOL = 1e-9


def _vec(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return np.atleast_1d(a)


def _mat(a, n) -> np.ndarray:
    a = np.array(a, dtype=float).reshape(n, n)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BodyChart:
    """The single coordinate box covering the body."""

    box: tuple

    def __init__(self, box: Sequence[Sequence[float]]):
        pairs = tuple((float(lo), float(hi)) for lo, hi in box)
        for i, (lo, hi) in enumerate(pairs):
            if not lo < hi:
                raise ValueError(f"box[{i}]: need lo < hi, got ({lo}, {hi})")
        object.__setattr__(self, "box", pairs)

    @classmethod
    def cube(cls, dim: int = 3, lo: float = -1.0, hi: float = 1.0) -> "BodyChart":
        return cls([(lo, hi)] * dim)

    @property
    def dim(self) -> int:
        return len(self.box)

    @property
    def lo(self) -> np.ndarray:
        return np.array([b[0] for b in self.box])

    @property
    def hi(self) -> np.ndarray:
        return np.array([b[1] for b in self.box])

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) / 2

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return x.shape == (self.dim,) and bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def check(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.contains(x):
            raise DomainError(f"point {x.tolist()} outside chart box {list(self.box)}")
        return x

    def grid(self, per_axis: int = 5) -> np.ndarray:
        """Tensor grid including the box faces, shape ``(per_axis**n, n)``."""
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in self.box]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True, eq=False)
class Jet1:
    """1-jet of a local diffeomorphism: ``source -> target`` with Jacobian ``J``."""

    source: np.ndarray
    target: np.ndarray
    J: np.ndarray

    def __init__(self, source, target, J, check: bool = True):
        src = _vec(source)
        n = src.size
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", _vec(target))
        object.__setattr__(self, "J", _mat(J, n))
        if self.target.size != n:
            raise ValueError("source and target dimensions differ")
        if check and abs(np.linalg.det(self.J)) <= SINGULAR_TOL:
            raise InversionError("Jet1 Jacobian is singular", np.linalg.cond(self.J))

    @property
    def n(self) -> int:
        return self.source.size

    def to_dict(self) -> dict:
        return {"n": self.n, "x": self.source.tolist(), "y": self.target.tolist(), "J": self.J.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Jet1":
        return cls(d["x"], d["y"], d["J"])

    def allclose(self, other: "Jet1", tol: float = 1e-9) -> bool:
        return max_abs_diff1(self, other) <= tol


@dataclass(frozen=True, eq=False)
class Jet2:
    """Second-order non-holonomic jet ``<x -> y; P, Q, R>``."""

    x: np.ndarray
    y: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __init__(self, x, y, P, Q, R=None, check: bool = True):
        xs = _vec(x)
        n = xs.size
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "y", _vec(y))
        object.__setattr__(self, "P", _mat(P, n))
        object.__setattr__(self, "Q", _mat(Q, n))
        R = np.zeros((n, n, n)) if R is None else np.array(R, dtype=float).reshape(n, n, n)
        R.setflags(write=False)
        object.__setattr__(self, "R", R)
        if self.y.size != n:
            raise ValueError("source and target dimensions differ")
        if check:
            for name, M in (("P", self.P), ("Q", self.Q)):
                if abs(np.linalg.det(M)) <= SINGULAR_TOL:
                    raise InversionError(f"Jet2 {name} is singular", np.linalg.cond(M))

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def source(self) -> np.ndarray:
        return self.x

    @property
    def target(self) -> np.ndarray:
        return self.y

    def coords(self) -> np.ndarray:
        """Flat ``(P, Q, R)`` coordinate vector."""
        return np.concatenate([self.P.ravel(), self.Q.ravel(), self.R.ravel()])

    @classmethod
    def from_coords(cls, x, y, p, check: bool = True) -> "Jet2":
        n = np.atleast_1d(x).size
        p = np.asarray(p, dtype=float)
        return cls(x, y, p[: n * n], p[n * n : 2 * n * n], p[2 * n * n :], check=check)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "P": self.P.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Jet2":
        jet = cls(d["x"], d["y"], d["P"], d["Q"], d["R"])
        if "n" in d and int(d["n"]) != jet.n:
            raise ValueError(f"declared n={d['n']} but coordinates have n={jet.n}")
        return jet

    def allclose(self, other: "Jet2", tol: float = 1e-9) -> bool:
        return max_abs_diff2(self, other) <= tol

    def __repr__(self) -> str:
        return f"Jet2<{self.x.tolist()} -> {self.y.tolist()}; P={self.P.tolist()}, Q={self.Q.tolist()}, R={self.R.tolist()}>"


def max_abs_diff1(a: Jet1, b: Jet1) -> float:
    return float(max(np.max(np.abs(a.source - b.source)), np.max(np.abs(a.target - b.target)), np.max(np.abs(a.J - b.J))))


def max_abs_diff2(a: Jet2, b: Jet2) -> float:
    return float(
        max(
            np.max(np.abs(a.x - b.x)),
            np.max(np.abs(a.y - b.y)),
            np.max(np.abs(a.P - b.P)),
            np.max(np.abs(a.Q - b.Q)),
            np.max(np.abs(a.R - b.R)),
        )
    )


# --- raw coordinate algebra (broadcasts over leading batch axes) -------------------


def compose_coords(P2, Q2, R2, P1, Q1, R1):
    P = P2 @ P1
    Q = Q2 @ Q1
    # R[j,i,k] = sum R2[j,m,l] Q1[l,k] P1[m,i] + sum P2[j,m] R1[m,i,k], via matmul for speed
    T = R2 @ Q1[..., None, :, :]  # [j, m, k]
    first = np.swapaxes(np.swapaxes(T, -1, -2) @ P1[..., None, :, :], -1, -2)
    n = P1.shape[-1]
    second = (P2 @ R1.reshape(R1.shape[:-3] + (n, n * n))).reshape(np.broadcast_shapes(P2.shape[:-2], R1.shape[:-3]) + (n, n, n))
    return P, Q, first + second


def invert_coords(P, Q, R):
    Pi = np.linalg.inv(P)
    Qi = np.linalg.inv(Q)
    Ri = -np.einsum("...ja,...abc,...bm,...cl->...jml", Pi, R, Pi, Qi)
    return Pi, Qi, Ri


# --- groupoid operations -------------------------------------------------------------


def identity2(x, chart: Optional[BodyChart] = None) -> Jet2:
    x = chart.check(x) if chart is not None else np.atleast_1d(np.asarray(x, float))
    n = x.size
    return Jet2(x, x, np.eye(n), np.eye(n), np.zeros((n, n, n)))


def translation2(x, v) -> Jet2:
    x = np.atleast_1d(np.asarray(x, float))
    n = x.size
    return Jet2(x, x + np.asarray(v, float), np.eye(n), np.eye(n))


def _check_composable(src, tgt, tol):
    gap = float(np.max(np.abs(np.asarray(src) - np.asarray(tgt))))
    if gap > tol:
        raise ComposabilityError(f"cannot compose: source {np.asarray(src).tolist()} != target {np.asarray(tgt).tolist()} (gap {gap:.3g})")


def _check_invertible(M, msg):
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12 or abs(np.linalg.det(M)) <= SINGULAR_TOL:
        raise InversionError(msg, cond)


def compose2(g2: Jet2, g1: Jet2, tol: float = COMPOSE_TOL) -> Jet2:
    """``g2 . g1`` (apply ``g1`` first)."""
    _check_composable(g2.x, g1.y, tol)
    P, Q, R = compose_coords(g2.P, g2.Q, g2.R, g1.P, g1.Q, g1.R)
    return Jet2(g1.x, g2.y, P, Q, R, check=False)


def invert2(g: Jet2) -> Jet2:
    for name, M in (("P", g.P), ("Q", g.Q)):
        _check_invertible(M, f"cannot invert Jet2: {name} near-singular")
    P, Q, R = invert_coords(g.P, g.Q, g.R)
    return Jet2(g.y, g.x, P, Q, R, check=False)


def compose1(g2: Jet1, g1: Jet1, tol: float = COMPOSE_TOL) -> Jet1:
    _check_composable(g2.source, g1.target, tol)
    return Jet1(g1.source, g2.target, g2.J @ g1.J, check=False)


def invert1(g: Jet1) -> Jet1:
    _check_invertible(g.J, "cannot invert Jet1: Jacobian near-singular")
    return Jet1(g.target, g.source, np.linalg.inv(g.J), check=False)


def identity1(x) -> Jet1:
    x = np.atleast_1d(np.asarray(x, float))
    return Jet1(x, x, np.eye(x.size))


def project_frame(g: Jet2) -> Jet1:
    return Jet1(g.x, g.y, g.P, check=False)


def project_base(g: Jet2) -> Jet1:
    return Jet1(g.x, g.y, g.Q, check=False)


def is_holonomic(g: Jet2, tol: float = 1e-9) -> bool:
    return bool(np.max(np.abs(g.P - g.Q)) <= tol and np.max(np.abs(g.R - g.R.transpose(0, 2, 1))) <= tol)


def jet2_from_bundle_map(
    base: Callable,
    frame_part: Callable,
    x,
    h: float = DEFAULT_FD_STEP,
    box=None,
) -> Jet2:
    """Jet at ``x`` of the bundle map ``(z, X) -> (base(z), frame_part(z) @ X)``."""
    x = np.atleast_1d(np.asarray(x, float))
    n = x.size
    y = np.atleast_1d(np.asarray(base(x), float))
    P = np.asarray(frame_part(x), float).reshape(n, n)
    Q = fd_jacobian(lambda z: np.atleast_1d(base(z)), x, h, box)
    R = fd_derivative(lambda z: np.asarray(frame_part(z), float).reshape(n, n), x, h, box)
    return Jet2(x, y, P, Q, R)


def is_group_element(g: Jet2, tol: float = COMPOSE_TOL) -> bool:
    return bool(np.max(np.abs(g.x)) <= tol and np.max(np.abs(g.y)) <= tol)


def random_jet2(rng: np.random.Generator, x, y, scale: float = 0.5, min_det: float = 0.1) -> Jet2:
    """Random jet ``x -> y`` with ``P, Q`` near the identity (resampled while ``|det| < min_det``)."""
    x = np.atleast_1d(np.asarray(x, float))
    n = x.size
    while True:
        P = np.eye(n) + scale * rng.uniform(-1, 1, (n, n))
        Q = np.eye(n) + scale * rng.uniform(-1, 1, (n, n))
        if abs(np.linalg.det(P)) >= min_det and abs(np.linalg.det(Q)) >= min_det:
            break
    R = scale * rng.uniform(-1, 1, (n, n, n))
    return Jet2(x, y, P, Q, R)
