"""Synthetic fixtures shared by several test modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cosserat_jets.jets import Jet2, jet2_from_bundle_map, random_jet2


@dataclass
class BundleMap:
    """``(z, X) -> (psi(z), C(z) X)`` with quadratic ``psi`` and ``C``."""

    a: np.ndarray
    B: np.ndarray
    c: np.ndarray  # c[j, k, l] z_k z_l
    C0: np.ndarray
    C1: np.ndarray  # C1[j, i, k] z_k
    C2: np.ndarray  # C2[j, i, k, l] z_k z_l

    @classmethod
    def random(cls, rng, n, scale=0.3):
        return cls(
            a=rng.uniform(-0.5, 0.5, n),
            B=np.eye(n) + scale * rng.uniform(-1, 1, (n, n)),
            c=0.5 * scale * rng.uniform(-1, 1, (n, n, n)),
            C0=np.eye(n) + scale * rng.uniform(-1, 1, (n, n)),
            C1=scale * rng.uniform(-1, 1, (n, n, n)),
            C2=0.5 * scale * rng.uniform(-1, 1, (n, n, n, n)),
        )

    def base(self, z):
        z = np.atleast_1d(z)
        return self.a + self.B @ z + np.einsum("jkl,k,l->j", self.c, z, z)

    def frame(self, z):
        z = np.atleast_1d(z)
        return self.C0 + np.einsum("jik,k->ji", self.C1, z) + np.einsum("jikl,k,l->ji", self.C2, z, z)

    def jet(self, x, h=1e-5) -> Jet2:
        return jet2_from_bundle_map(self.base, self.frame, x, h)

    def base_inverse(self, y, guess):
        z = np.array(guess, dtype=float)
        for _ in range(60):
            D = self.B + np.einsum("jkl,l->jk", self.c, z) + np.einsum("jkl,k->jl", self.c, z)
            step = np.linalg.solve(D, self.base(z) - y)
            z = z - step
            if np.max(np.abs(step)) < 1e-15:
                break
        return z


def composed(m2: BundleMap, m1: BundleMap):
    base = lambda z: m2.base(m1.base(z))
    frame = lambda z: m2.frame(m1.base(z)) @ m1.frame(z)
    return base, frame


def random_composable_triple(rng, n, scale=0.5):
    pts = [rng.uniform(-1, 1, n) for _ in range(4)]
    g1 = random_jet2(rng, pts[0], pts[1], scale)
    g2 = random_jet2(rng, pts[1], pts[2], scale)
    g3 = random_jet2(rng, pts[2], pts[3], scale)
    return g1, g2, g3
