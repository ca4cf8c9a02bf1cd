import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cosserat_jets.errors import ComposabilityError, DomainError, InversionError
from cosserat_jets.jets import (
    BodyChart,
    Jet1,
    Jet2,
    compose1,
    compose2,
    identity2,
    invert1,
    invert2,
    is_holonomic,
    jet2_from_bundle_map,
    max_abs_diff2,
    project_base,
    project_frame,
    random_jet2,
    translation2,
)

from helpers import BundleMap, composed, random_composable_triple


def j1(P, Q, R, x=0.0, y=0.0):
    return Jet2([x], [y], [[P]], [[Q]], [[[R]]])


class TestIdentity:
    def test_unit_coordinates(self):
        e = identity2([0.0, 0.0, 0.0])
        np.testing.assert_array_equal(e.P, np.eye(3))
        np.testing.assert_array_equal(e.Q, np.eye(3))
        np.testing.assert_array_equal(e.R, 0)
        assert e.x.tolist() == e.y.tolist() == [0.0, 0.0, 0.0]

    def test_unit_laws(self):
        rng = np.random.default_rng(3)
        g = random_jet2(rng, [0.1, 0.2], [0.5, -0.3])
        assert compose2(identity2(g.y), g).allclose(g, 0)
        assert compose2(g, identity2(g.x)).allclose(g, 0)

    def test_outside_box(self):
        chart = BodyChart([(0, 1)])
        with pytest.raises(DomainError):
            identity2([2.0], chart)


class TestCompose2:
    def test_translations(self):
        x, v, w = np.array([0.1, 0.2]), np.array([0.3, -0.1]), np.array([-0.5, 0.25])
        g = compose2(translation2(x + v, w), translation2(x, v))
        assert g.allclose(translation2(x, v + w), 1e-15)

    def test_scalar_example(self):
        g = compose2(j1(7, 11, 13), j1(2, 3, 5))
        assert (g.P[0, 0], g.Q[0, 0], g.R[0, 0, 0]) == (14.0, 33.0, 113.0)

    def test_scalar_example_matches_bundle_maps(self):
        # psi1 = 3z, C1 = 2 + 5z realizes <0->0; 2, 3, 5>; psi2 = 11z, C2 = 7 + 13z
        base = lambda z: 11 * (3 * z)
        frame = lambda z: np.array([[(7 + 13 * 3 * z[0]) * (2 + 5 * z[0])]])
        oracle = jet2_from_bundle_map(base, frame, [0.0], 1e-4)
        assert oracle.allclose(compose2(j1(7, 11, 13), j1(2, 3, 5)), 1e-6)

    def test_mismatch(self):
        with pytest.raises(ComposabilityError):
            compose2(j1(1, 1, 0, 0.5, 0.5), j1(1, 1, 0, 0.0, 0.0))

    def test_within_tolerance_is_composable(self):
        compose2(j1(1, 1, 0, 1e-12, 0.0), j1(1, 1, 0, 0.0, 0.0))

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_chain_rule_oracle(self, n):
        rng = np.random.default_rng(100 + n)
        for _ in range(10):
            m1, m2 = BundleMap.random(rng, n), BundleMap.random(rng, n)
            x = rng.uniform(-0.5, 0.5, n)
            lhs = compose2(m2.jet(m1.base(x)), m1.jet(x))
            base, frame = composed(m2, m1)
            rhs = jet2_from_bundle_map(base, frame, x)
            assert max_abs_diff2(lhs, rhs) <= 1e-5

    def test_source_target_bookkeeping(self):
        rng = np.random.default_rng(1)
        g1, g2, _ = random_composable_triple(rng, 2)
        g = compose2(g2, g1)
        np.testing.assert_array_equal(g.x, g1.x)
        np.testing.assert_array_equal(g.y, g2.y)


class TestInvert2:
    def test_identity(self):
        e = identity2([0.3])
        assert invert2(e).allclose(e, 0)

    def test_scalar_example(self):
        gi = invert2(j1(2, 4, 8))
        assert (gi.P[0, 0], gi.Q[0, 0], gi.R[0, 0, 0]) == (0.5, 0.25, -0.5)
        assert compose2(gi, j1(2, 4, 8)).allclose(identity2([0.0]), 1e-15)
        assert compose2(j1(2, 4, 8), gi).allclose(identity2([0.0]), 1e-15)

    def test_involution(self):
        g = random_jet2(np.random.default_rng(2), [0, 1, 2], [3, 4, 5])
        assert invert2(invert2(g)).allclose(g, 1e-12)

    def test_singular(self):
        g = Jet2([0], [0], [[1e-14]], [[1.0]], check=False)
        with pytest.raises(InversionError) as info:
            invert2(g)
        assert "near-singular" in str(info.value)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_inverse_oracle(self, n):
        rng = np.random.default_rng(200 + n)
        for _ in range(5):
            m = BundleMap.random(rng, n, 0.2)
            x = rng.uniform(-0.3, 0.3, n)
            y = m.base(x)
            base_inv = lambda z: m.base_inverse(z, x)
            frame_inv = lambda z: np.linalg.inv(m.frame(m.base_inverse(z, x)))
            oracle = jet2_from_bundle_map(base_inv, frame_inv, y)
            assert max_abs_diff2(invert2(m.jet(x)), oracle) <= 1e-5


class TestFirstOrder:
    def test_compose(self):
        g = compose1(Jet1([1], [5], [[3]]), Jet1([0], [1], [[2]]))
        assert g.source.tolist() == [0.0] and g.target.tolist() == [5.0] and g.J[0, 0] == 6.0

    def test_invert(self):
        g = invert1(Jet1([0], [1], [[2]]))
        assert g.source.tolist() == [1.0] and g.target.tolist() == [0.0] and g.J[0, 0] == 0.5

    def test_associativity_exact(self):
        rng = np.random.default_rng(5)
        pts = rng.integers(-3, 3, (4, 2)).astype(float)
        js = [Jet1(pts[i], pts[i + 1], rng.integers(-4, 5, (2, 2)) + 5 * np.eye(2)) for i in range(3)]
        a = compose1(js[2], compose1(js[1], js[0]))
        b = compose1(compose1(js[2], js[1]), js[0])
        np.testing.assert_array_equal(a.J, b.J)

    def test_singular_rejected(self):
        with pytest.raises(InversionError):
            Jet1([0, 0], [0, 0], [[1, 2], [2, 4]])


class TestProjections:
    def test_identity(self):
        e = identity2([1.0, 2.0])
        for proj in (project_frame, project_base):
            p = proj(e)
            np.testing.assert_array_equal(p.J, np.eye(2))
            assert p.source.tolist() == p.target.tolist() == [1.0, 2.0]

    def test_scalar(self):
        g = j1(2, 3, 5)
        assert project_frame(g).J[0, 0] == 2.0
        assert project_base(g).J[0, 0] == 3.0

    @pytest.mark.parametrize("proj", [project_frame, project_base])
    def test_morphism(self, proj):
        rng = np.random.default_rng(9)
        g1, g2, _ = random_composable_triple(rng, 3)
        lhs = proj(compose2(g2, g1))
        rhs = compose1(proj(g2), proj(g1))
        assert lhs.allclose(rhs, 1e-12)


class TestHolonomic:
    def test_identity(self):
        assert is_holonomic(identity2([0.0, 0.0]))

    def test_p_ne_q(self):
        assert not is_holonomic(j1(2, 3, 5))

    def test_prolonged_base_map(self):
        # F(psi) for psi(x) = x + x^2/2: frame part is D psi
        g = jet2_from_bundle_map(lambda z: z + z**2 / 2, lambda z: np.array([[1 + z[0]]]), [0.0])
        assert is_holonomic(g, 1e-8)

    def test_prolonged_base_map_2d(self):
        psi = lambda z: np.array([z[0] + z[0] * z[1], z[1] + z[0] ** 2 / 3])
        Dpsi = lambda z: np.array([[1 + z[1], z[0]], [2 * z[0] / 3, 1.0]])
        g = jet2_from_bundle_map(psi, Dpsi, [0.3, -0.2])
        assert is_holonomic(g, 1e-8)

    def test_asymmetric_R(self):
        R = np.zeros((2, 2, 2))
        R[0, 0, 1] = 1.0
        assert not is_holonomic(Jet2([0, 0], [0, 0], np.eye(2), np.eye(2), R))

    def test_closed_under_composition(self):
        psi1 = lambda z: np.array([z[0] + z[1] ** 2, z[1]])
        D1 = lambda z: np.array([[1.0, 2 * z[1]], [0.0, 1.0]])
        psi2 = lambda z: np.array([z[0], z[1] + z[0] ** 3])
        D2 = lambda z: np.array([[1.0, 0.0], [3 * z[0] ** 2, 1.0]])
        x = np.array([0.2, 0.4])
        g1 = jet2_from_bundle_map(psi1, D1, x)
        g2 = jet2_from_bundle_map(psi2, D2, psi1(x))
        assert is_holonomic(compose2(g2, g1), 1e-8)
        assert is_holonomic(invert2(g1), 1e-8)


class TestBundleMapJet:
    def test_translation(self):
        v = np.array([0.5, -1.0])
        g = jet2_from_bundle_map(lambda z: z + v, lambda z: np.eye(2), [0.1, 0.1])
        assert g.allclose(translation2([0.1, 0.1], v), 1e-9)

    def test_scalar_example(self):
        g = jet2_from_bundle_map(lambda z: z, lambda z: np.array([[1 + z[0] ** 2]]), [1.0])
        assert g.allclose(j1(2, 1, 2, 1.0, 1.0), 1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_groupoid_axioms(n, seed):
    rng = np.random.default_rng(seed)
    g1, g2, g3 = random_composable_triple(rng, n)
    assert max_abs_diff2(compose2(g3, compose2(g2, g1)), compose2(compose2(g3, g2), g1)) <= 1e-9
    assert max_abs_diff2(compose2(invert2(g1), g1), identity2(g1.x)) <= 1e-9
    assert max_abs_diff2(compose2(g1, invert2(g1)), identity2(g1.y)) <= 1e-9


def test_json_round_trip():
    g = random_jet2(np.random.default_rng(0), [0.1, 0.2], [0.3, 0.4])
    d = json.loads(json.dumps(g.to_dict()))
    assert set(d) == {"n", "x", "y", "P", "Q", "R"}
    assert Jet2.from_dict(d).allclose(g, 0)
    assert Jet1.from_dict(project_frame(g).to_dict()).allclose(project_frame(g), 0)


def test_body_chart_validation():
    with pytest.raises(ValueError):
        BodyChart([(0, 1), (2, 2)])
    chart = BodyChart.cube(2)
    assert chart.grid(5).shape == (25, 2)
    assert chart.contains([1.0, -1.0]) and not chart.contains([1.01, 0.0])
