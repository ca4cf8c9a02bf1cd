"""Reference crystals, second-order frame structures and crystal changes.

A structure is represented by a membership *residual* on frames ``<0 -> x>`` (a frame
is a member when the residual is within ``tol``), a seeded sampler producing members
at given points, and a finite sample of its structure group (jets ``<0 -> 0>``).
Positive-dimensional groups cannot be enumerated, so sampling is the only finite
description; every predicate is evaluated point-wise and is thread-safe.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .jets import Jet2, compose2, identity2, invert2, max_abs_diff2
from .material import (
    ResponseFunction,
    SamplerConfig,
    is_material_isomorphism,
    solve_pair,
    symmetry_sample,
)
from .numerics import ToleranceConfig

Residual = Callable[[Jet2], float]
Oracle = Union[ResponseFunction, Residual]

STRUCTURE_TOL = 1e-9


@dataclass(frozen=True)
class Crystal:
    """A second-order frame ``<0 -> z0>`` anchoring a structure at ``z0``."""

    z0: np.ndarray
    frame: Jet2

    def __post_init__(self):
        z0 = np.atleast_1d(np.asarray(self.z0, float))
        object.__setattr__(self, "z0", z0)
        f = self.frame
        if f.x.shape != z0.shape:
            raise ValueError("crystal frame dimension does not match z0")
        if np.max(np.abs(f.x)) > 0 or np.max(np.abs(f.y - z0)) > 1e-12:
            raise ValueError("crystal frame must be a jet <0 -> z0>")
        for name in ("P", "Q"):
            if abs(np.linalg.det(getattr(f, name))) <= 1e-12:
                raise ValueError(f"crystal {name} part is singular")

    @property
    def n(self) -> int:
        return self.z0.size

    @classmethod
    def identity(cls, z0) -> "Crystal":
        z0 = np.atleast_1d(np.asarray(z0, float))
        return cls(z0, Jet2(np.zeros_like(z0), z0, np.eye(z0.size), np.eye(z0.size)))

    def changed(self, g: Jet2) -> "Crystal":
        """The crystal ``frame . g`` for a group element ``g = <0 -> 0>``."""
        return Crystal(self.z0, compose2(self.frame, g))

    def to_dict(self) -> dict:
        return {"z0": self.z0.tolist(), "frame": self.frame.to_dict()}


@dataclass
class GStructure2:
    n: int
    residual: Residual
    sampler: Optional[Callable[[np.ndarray, np.random.Generator], Jet2]] = None
    group_samples: list = field(default_factory=list)
    tol: float = STRUCTURE_TOL
    descriptor: dict = field(default_factory=dict)

    def membership(self, Z: Jet2) -> bool:
        if np.max(np.abs(Z.x)) > 0:
            return False
        return bool(self.residual(Z) <= self.tol)

    def sample(self, points, seed: int = 0) -> list:
        """One member frame per point; requires a sampler."""
        if self.sampler is None:
            raise ValueError("structure has no sampler")
        rng = np.random.default_rng([int(seed), 0x657])
        return [self.sampler(np.atleast_1d(np.asarray(p, float)), rng) for p in points]

    def action_defect(self, frames: Sequence[Jet2]) -> float:
        """Largest residual of ``Z . g`` over the given members and the sampled group."""
        return max((self.residual(compose2(Z, g)) for Z in frames for g in self.group_samples), default=0.0)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "tol": self.tol,
            "descriptor": self.descriptor,
            "group_samples": [g.to_dict() for g in self.group_samples],
        }


def oracle_residual(oracle: Oracle, cfg: SamplerConfig = SamplerConfig(), tol: ToleranceConfig = ToleranceConfig()) -> Residual:
    """Turn a response function into a groupoid-membership residual; callables pass through."""
    if isinstance(oracle, ResponseFunction):
        return lambda g: is_material_isomorphism(oracle, g, cfg, tol)[1]
    return oracle


def associated_group_sample(
    oracle: Oracle,
    crystal: Crystal,
    cfg: SamplerConfig = SamplerConfig(),
    tol: ToleranceConfig = ToleranceConfig(),
    count: int = 8,
) -> list:
    """Symmetry jets at ``z0`` conjugated to ``crystal^-1 . s . crystal``; identity first.

    Sampling needs a response function; a bare residual oracle only yields the identity.
    """
    if not isinstance(oracle, ResponseFunction):
        return [identity2(np.zeros(crystal.n))]
    Z0 = crystal.frame
    Zi = invert2(Z0)
    out = [identity2(np.zeros(crystal.n))]
    for s in symmetry_sample(oracle, crystal.z0, cfg, tol, count).jets[1:]:
        out.append(compose2(Zi, compose2(s, Z0)))
    return out


def structure_from_groupoid(
    oracle: Oracle,
    crystal: Crystal,
    cfg: SamplerConfig = SamplerConfig(),
    tol: ToleranceConfig = ToleranceConfig(),
    group_count: int = 8,
    structure_tol: float = STRUCTURE_TOL,
) -> GStructure2:
    """Frames ``Z = g . crystal`` with ``g : z0 -> x`` in the material groupoid."""
    residual = oracle_residual(oracle, cfg, tol)
    Z0 = crystal.frame
    Zi = invert2(Z0)

    def member_residual(Z: Jet2) -> float:
        return float(residual(compose2(Z, Zi)))

    sampler = None
    if isinstance(oracle, ResponseFunction):

        def sampler(x, rng):
            res = solve_pair(oracle, crystal.z0, x, cfg, tol)
            if not res.ok:
                raise ValueError(f"no material isomorphism z0 -> {x.tolist()} (residual {res.residual:.3e})")
            return compose2(res.jet, Z0)

    group = associated_group_sample(oracle, crystal, cfg, tol, group_count)
    desc = {"kind": "uniform-references", "crystal": crystal.to_dict()}
    if isinstance(oracle, ResponseFunction):
        desc["medium"] = oracle.name
    return GStructure2(crystal.n, member_residual, sampler, group, structure_tol, desc)


def conjugate_structure(omega: GStructure2, g: Jet2) -> GStructure2:
    """Right translate of ``omega`` by the group element ``g``.

    Members are ``Z . g``; the structure group becomes ``g^-1 . G . g``.
    """
    gi = invert2(g)

    def residual(Z: Jet2) -> float:
        return omega.residual(compose2(Z, gi))

    sampler = None
    if omega.sampler is not None:
        base = omega.sampler

        def sampler(x, rng):
            return compose2(base(x, rng), g)

    group = [compose2(gi, compose2(h, g)) for h in omega.group_samples]
    desc = {"kind": "conjugate", "by": g.to_dict(), "of": omega.descriptor}
    return GStructure2(omega.n, residual, sampler, group, omega.tol, desc)


def flat_frame(x) -> Jet2:
    """The translation frame ``<0 -> x; I, I, 0>``."""
    x = np.atleast_1d(np.asarray(x, float))
    return Jet2(np.zeros_like(x), x, np.eye(x.size), np.eye(x.size))


def standard_flat(n: int, group_samples: Optional[Sequence[Jet2]] = None, group_residual: Optional[Residual] = None, tol: float = STRUCTURE_TOL) -> GStructure2:
    """Frames ``flat_frame(x) . g`` with ``g`` in a group.

    The group is given either by a residual predicate on ``<0 -> 0>`` jets or, failing
    that, by its finite sample (distance to the nearest sampled element).
    """
    samples = list(group_samples) if group_samples else [identity2(np.zeros(n))]
    if group_residual is None:

        def group_residual(h):
            return min(max_abs_diff2(h, g) for g in samples)

    def residual(Z: Jet2) -> float:
        return float(group_residual(compose2(invert2(flat_frame(Z.y)), Z)))

    def sampler(x, rng):
        return compose2(flat_frame(x), samples[int(rng.integers(len(samples)))])

    return GStructure2(n, residual, sampler, samples, tol, {"kind": "standard-flat", "group_size": len(samples)})


def structure_gbar(frames: Sequence[Jet2]):
    """Groupoid elements ``Z_j . Z_i^-1`` between sampled member frames, as ``{(i, j): jet}``."""
    inv = [invert2(Z) for Z in frames]
    return {(i, j): compose2(frames[j], inv[i]) for i in range(len(frames)) for j in range(len(frames))}
