import numpy as np
import pytest

from cosserat_jets.gstructure import (
    Crystal,
    associated_group_sample,
    conjugate_structure,
    flat_frame,
    standard_flat,
    structure_from_groupoid,
    structure_gbar,
)
from cosserat_jets.jets import Jet2, compose2, identity2, invert2, max_abs_diff2, random_jet2
from cosserat_jets.material import builtin_media, is_material_isomorphism
from cosserat_jets.prolongation import GroupoidSection2, Parallelism2, canonical_section, gbar

Z0 = np.array([0.1, -0.2])


def crystal(seed=0):
    g = random_jet2(np.random.default_rng(seed), np.zeros(2), Z0, 0.3)
    return Crystal(Z0, g)


def group_element(seed, scale=0.3):
    return random_jet2(np.random.default_rng(seed), np.zeros(2), np.zeros(2), scale)


def frames_at(rng, points, scale=0.3):
    return [random_jet2(rng, np.zeros(2), p, scale) for p in points]


class TestCrystal:
    def test_validation(self):
        with pytest.raises(ValueError):
            Crystal([0.0, 0.0], Jet2([0, 0], [1, 0], np.eye(2), np.eye(2)))
        with pytest.raises(ValueError):
            Crystal([1.0, 0.0], Jet2([0.5, 0], [1, 0], np.eye(2), np.eye(2)))

    def test_identity_and_change(self):
        c = Crystal.identity([0.3, 0.1])
        assert c.frame.allclose(flat_frame([0.3, 0.1]), 0)
        g = group_element(1)
        assert c.changed(g).frame.allclose(compose2(c.frame, g), 0)


class TestStructureFromGroupoid:
    def test_trivial_medium_accepts_everything(self):
        trivial = lambda g: 0.0
        omega = structure_from_groupoid(trivial, crystal())
        rng = np.random.default_rng(2)
        assert all(omega.membership(Z) for Z in frames_at(rng, rng.uniform(-1, 1, (10, 2))))

    def test_frame_must_start_at_origin(self):
        omega = structure_from_groupoid(lambda g: 0.0, crystal())
        assert not omega.membership(identity2(Z0))

    def test_crystal_is_member(self):
        c = crystal()
        for name in ("micro_only", "det_density", "full_rigid"):
            assert structure_from_groupoid(builtin_media(name, 2), c, group_count=2).membership(c.frame)

    def test_micro_only_fixes_q(self):
        c = crystal(3)
        omega = structure_from_groupoid(builtin_media("micro_only", 2), c, group_count=2)
        rng = np.random.default_rng(4)
        for Z in frames_at(rng, rng.uniform(-0.5, 0.5, (6, 2))):
            assert not omega.membership(Z)
            fixed = Jet2(Z.x, Z.y, Z.P, c.frame.Q, Z.R)
            assert omega.membership(fixed)

    def test_sampler_produces_members(self):
        omega = structure_from_groupoid(builtin_media("det_density", 2), crystal(), group_count=2)
        pts = np.random.default_rng(5).uniform(-0.5, 0.5, (4, 2))
        for Z, p in zip(omega.sample(pts, seed=1), pts):
            np.testing.assert_allclose(Z.y, p)
            assert omega.membership(Z)

    def test_right_action_closure(self):
        omega = structure_from_groupoid(builtin_media("micro_only", 2), crystal(), group_count=4)
        frames = omega.sample(np.random.default_rng(6).uniform(-0.5, 0.5, (3, 2)))
        assert omega.action_defect(frames) <= omega.tol

    def test_gbar_reproduces_groupoid(self):
        W = builtin_media("det_density", 2)
        omega = structure_from_groupoid(W, crystal(), group_count=2)
        rng = np.random.default_rng(7)
        pts = rng.uniform(-0.5, 0.5, (5, 2))
        frames = omega.sample(pts)
        for g in structure_gbar(frames).values():
            assert is_material_isomorphism(W, g)[0]
        # and the converse on perturbed jets: g . Z_x is a member iff g is material
        for k in range(10):
            i, j = rng.integers(5, size=2)
            g = random_jet2(rng, pts[i], pts[j], 0.3)
            assert omega.membership(compose2(g, frames[i])) == is_material_isomorphism(W, g)[0]


class TestAssociatedGroup:
    def test_full_rigid_trivial(self):
        G = associated_group_sample(builtin_media("full_rigid", 2), crystal(), count=4)
        for g in G:
            assert g.allclose(identity2(np.zeros(2)), 1e-8)

    def test_micro_only_identity_crystal(self):
        G = associated_group_sample(builtin_media("micro_only", 2), Crystal.identity(Z0), count=6)
        assert G[0].allclose(identity2(np.zeros(2)), 0) and len(G) == 7
        for g in G:
            np.testing.assert_allclose(g.Q, np.eye(2), atol=1e-8)
            np.testing.assert_array_equal(g.x, 0) and np.testing.assert_array_equal(g.y, 0)
        assert max(np.max(np.abs(g.R)) for g in G) > 1e-3

    def test_group_axioms(self):
        W = builtin_media("det_density", 2)
        c = crystal(8)
        G = associated_group_sample(W, c, count=5)
        omega = structure_from_groupoid(W, c, group_count=0)
        for a in G:
            for b in G:
                assert omega.residual(compose2(c.frame, compose2(a, b))) <= 2 * omega.tol
            assert omega.residual(compose2(c.frame, invert2(a))) <= 2 * omega.tol

    def test_bare_oracle_gives_identity_only(self):
        assert len(associated_group_sample(lambda g: 0.0, crystal())) == 1


class TestConjugation:
    def test_identity(self):
        omega = structure_from_groupoid(builtin_media("micro_only", 2), crystal(), group_count=2)
        same = conjugate_structure(omega, identity2(np.zeros(2)))
        rng = np.random.default_rng(9)
        for Z in frames_at(rng, rng.uniform(-0.5, 0.5, (5, 2))) + omega.sample([[0.2, 0.2]]):
            assert same.residual(Z) == pytest.approx(omega.residual(Z), abs=1e-12)

    def test_round_trip(self):
        omega = structure_from_groupoid(builtin_media("det_density", 2), crystal(), group_count=2)
        g = group_element(10)
        back = conjugate_structure(conjugate_structure(omega, g), invert2(g))
        rng = np.random.default_rng(11)
        for Z in frames_at(rng, rng.uniform(-0.5, 0.5, (8, 2))) + omega.sample([[0.2, 0.2], [-0.3, 0.1]]):
            assert back.membership(Z) == omega.membership(Z)

    def test_doubling_q(self):
        c = crystal(12)
        omega = structure_from_groupoid(builtin_media("micro_only", 2), c, group_count=2)
        g = Jet2(np.zeros(2), np.zeros(2), np.eye(2), 2 * np.eye(2))
        conj = conjugate_structure(omega, g)
        for Z in conj.sample([[0.0, 0.3], [0.4, -0.1]]):
            assert conj.membership(Z)
            np.testing.assert_allclose(Z.Q, 2 * c.frame.Q, atol=1e-8)

    def test_matches_crystal_change(self):
        W = builtin_media("micro_only", 2)
        c = crystal(13)
        g = group_element(14)
        omega = structure_from_groupoid(W, c, group_count=4)
        direct = structure_from_groupoid(W, c.changed(g), group_count=4)
        conj = conjugate_structure(omega, g)
        for a, b in zip(conj.group_samples, direct.group_samples):
            assert max_abs_diff2(a, b) <= 1e-12
        rng = np.random.default_rng(15)
        for Z in frames_at(rng, rng.uniform(-0.5, 0.5, (6, 2))) + conj.sample([[0.1, 0.1]]):
            assert conj.residual(Z) == pytest.approx(direct.residual(Z), abs=1e-12)


class TestStandardFlat:
    def test_flat_frame_member(self):
        omega = standard_flat(2, [identity2(np.zeros(2)), group_element(16)])
        for x in ([0.0, 0.0], [0.3, -0.7]):
            assert omega.membership(flat_frame(x))

    def test_trivial_group_is_parallelism(self):
        omega = standard_flat(2)
        rng = np.random.default_rng(17)
        for Z in frames_at(rng, rng.uniform(-1, 1, (5, 2))):
            assert not omega.membership(Z)
        for Z in omega.sample(rng.uniform(-1, 1, (5, 2))):
            assert Z.allclose(flat_frame(Z.y), 0)

    def test_orbit_members(self):
        G = [identity2(np.zeros(2)), group_element(18), group_element(19)]
        omega = standard_flat(2, G)
        for x in ([0.1, 0.2], [-0.4, 0.0]):
            for g in G:
                assert omega.membership(compose2(flat_frame(x), g))

    def test_group_predicate(self):
        q_fixed = lambda h: float(np.max(np.abs(h.Q - np.eye(2))))
        omega = standard_flat(2, group_residual=q_fixed)
        g = random_jet2(np.random.default_rng(20), np.zeros(2), np.zeros(2))
        Z = compose2(flat_frame([0.2, 0.2]), Jet2(g.x, g.y, g.P, np.eye(2), g.R))
        assert omega.membership(Z)
        assert not omega.membership(compose2(flat_frame([0.2, 0.2]), g))

    def test_gbar_is_canonical_section(self):
        P = Parallelism2.from_fields(lambda x: np.eye(2), lambda x: np.eye(2), n=2)
        S = gbar(P)
        C = canonical_section(2)
        rng = np.random.default_rng(21)
        for x, y in rng.uniform(-1, 1, (5, 2, 2)):
            assert max_abs_diff2(S(x, y), C(x, y)) == 0
        frames = standard_flat(2).sample(rng.uniform(-1, 1, (4, 2)))
        for (i, j), g in structure_gbar(frames).items():
            assert max_abs_diff2(g, C(frames[i].y, frames[j].y)) == 0
