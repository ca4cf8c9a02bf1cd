"""Mechanical responses and the decision procedures built on the material groupoid:
membership, symmetry sampling, uniformity, homogeneity and algebroid membership.

A jet ``g: x -> y`` is a material isomorphism when ``W(h . g) = W(h)`` for every
deformation jet ``h`` leaving ``y``.  The quantifier is realized by a fixed, seeded set of
deformation coordinates (optionally plus a deterministic stencil); since ``W`` never
reads the target point, the same coordinate set serves every base point.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .algebroid import Section2, exponential2
from .errors import UnknownMedium
from .jets import BodyChart, Jet2, compose2, compose_coords, identity2, invert_coords, jet2_from_bundle_map
from .numerics import DEFAULT_FD2_STEP, ToleranceConfig, fd_derivative, solve_least_squares
from .prolongation import closedness_residual

# --- responses -----------------------------------------------------------------------


@dataclass(frozen=True)
class ResponseFunction:
    """``W(x, P, Q, R) -> R^d``; the target of the jet never enters.

    ``fn`` must broadcast over leading axes when ``vectorized`` is true (``x`` of shape
    ``(..., n)``, ``P`` of shape ``(..., n, n)`` and so on); otherwise it is called one jet
    at a time.
    """

    n: int
    d: int
    fn: Callable = field(repr=False)
    vectorized: bool = True
    name: str = "custom"

    def eval(self, x, P, Q, R) -> np.ndarray:
        x, P, Q, R = (np.asarray(a, float) for a in (x, P, Q, R))
        if self.vectorized:
            out = np.asarray(self.fn(x, P, Q, R), float)
            lead = np.broadcast_shapes(x.shape[:-1], P.shape[:-2], Q.shape[:-2], R.shape[:-3])
            return np.broadcast_to(out, lead + (self.d,))
        lead = np.broadcast_shapes(x.shape[:-1], P.shape[:-2], Q.shape[:-2], R.shape[:-3])
        n = self.n
        xb = np.broadcast_to(x, lead + (n,)).reshape(-1, n)
        Pb = np.broadcast_to(P, lead + (n, n)).reshape(-1, n, n)
        Qb = np.broadcast_to(Q, lead + (n, n)).reshape(-1, n, n)
        Rb = np.broadcast_to(R, lead + (n, n, n)).reshape(-1, n, n, n)
        out = np.array([np.asarray(self.fn(*args), float).reshape(self.d) for args in zip(xb, Pb, Qb, Rb)])
        return out.reshape(lead + (self.d,))


def evaluate_response(W: ResponseFunction, g: Jet2) -> np.ndarray:
    return W.eval(g.x, g.P, g.Q, g.R)


def _lead(P):
    return P.shape[:-2]


def _micro_only(n):
    return ResponseFunction(n, n * n, lambda x, P, Q, R: Q.reshape(_lead(Q) + (n * n,)), name="micro_only")


def _det_density(n, phi: Optional[Callable] = None):
    phi = phi or (lambda x: 1.0 + np.sum(x * x, axis=-1))

    def fn(x, P, Q, R):
        return (phi(x) * np.linalg.det(Q))[..., None]

    return ResponseFunction(n, 1, fn, name="det_density")


def _implant(n, A: Callable):
    def fn(x, P, Q, R):
        flat = x.reshape(-1, n)
        As = np.stack([np.asarray(A(xi), float).reshape(n, n) for xi in flat]).reshape(x.shape[:-1] + (n, n))
        out = Q @ As
        return out.reshape(out.shape[:-2] + (n * n,))

    return ResponseFunction(n, n * n, fn, name="implant")


def _source_tagged(n):
    def fn(x, P, Q, R):
        lead = np.broadcast_shapes(x.shape[:-1], Q.shape[:-2])
        return np.concatenate([np.broadcast_to(Q, lead + (n, n)).reshape(lead + (n * n,)), np.broadcast_to(x, lead + (n,))], axis=-1)

    return ResponseFunction(n, n * n + n, fn, name="source_tagged")


def _full_rigid(n):
    # includes the source point: without it every pair would be joined by the identity jet
    def fn(x, P, Q, R):
        lead = np.broadcast_shapes(x.shape[:-1], P.shape[:-2], Q.shape[:-2], R.shape[:-3])
        parts = [
            np.broadcast_to(x, lead + (n,)),
            np.broadcast_to(P, lead + (n, n)).reshape(lead + (n * n,)),
            np.broadcast_to(Q, lead + (n, n)).reshape(lead + (n * n,)),
            np.broadcast_to(R, lead + (n, n, n)).reshape(lead + (n**3,)),
        ]
        return np.concatenate(parts, axis=-1)

    return ResponseFunction(n, n + 2 * n * n + n**3, fn, name="full_rigid")


_REGISTRY: dict[str, Callable[..., ResponseFunction]] = {
    "micro_only": _micro_only,
    "det_density": _det_density,
    "implant": _implant,
    "source_tagged": _source_tagged,
    "full_rigid": _full_rigid,
}


def register_medium(name: str, factory: Callable[..., ResponseFunction]) -> None:
    """Plug-in hook: ``factory(n, **params)`` must return a :class:`ResponseFunction`."""
    _REGISTRY[name] = factory


def builtin_media(name: str, n: int = 3, **params) -> ResponseFunction:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownMedium(f"unknown medium {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory(n, **params)


def known_media() -> list[str]:
    return sorted(_REGISTRY)


# --- deformation sampling ------------------------------------------------------------


@dataclass(frozen=True)
class SamplerConfig:
    num_deformations: int = 64
    jet_scale: float = 0.5
    seed: int = 0
    exhaustive: bool = False

    def __post_init__(self):
        if int(self.num_deformations) < 8:
            raise ValueError("num_deformations must be >= 8")
        if not self.jet_scale > 0:
            raise ValueError("jet_scale must be > 0")


@lru_cache(maxsize=32)
def _samples(n: int, cfg: SamplerConfig):
    rng = np.random.default_rng([int(cfg.seed), 0xDEF0])
    s = cfg.jet_scale
    Ps, Qs, Rs = [np.eye(n)], [np.eye(n)], [np.zeros((n, n, n))]
    while len(Ps) < cfg.num_deformations:
        P = np.eye(n) + s * rng.uniform(-1, 1, (n, n))
        Q = np.eye(n) + s * rng.uniform(-1, 1, (n, n))
        if abs(np.linalg.det(P)) < 0.1 or abs(np.linalg.det(Q)) < 0.1:
            continue
        Ps.append(P)
        Qs.append(Q)
        Rs.append(s * rng.uniform(-1, 1, (n, n, n)))
    if cfg.exhaustive:
        m = 2 * n * n + n**3
        base = _coords(np.eye(n), np.eye(n), np.zeros((n, n, n)))
        for c in range(m):
            for sign in (1.0, -1.0):
                p = base.copy()
                p[c] += sign * min(s, 0.5)
                P, Q, R = _split(p, n)
                Ps.append(P)
                Qs.append(Q)
                Rs.append(R)
    out = tuple(np.array(a) for a in (Ps, Qs, Rs))
    for a in out:
        a.setflags(write=False)
    return out


def deformation_samples(n: int, cfg: SamplerConfig):
    """``(P, Q, R)`` arrays with a leading sample axis; the identity is always first."""
    return _samples(n, cfg)


def _coords(P, Q, R):
    return np.concatenate([np.ravel(P), np.ravel(Q), np.ravel(R)])


def _split(p, n):
    p = np.asarray(p, float)
    lead = p.shape[:-1]
    a, b = n * n, 2 * n * n
    return p[..., :a].reshape(lead + (n, n)), p[..., a:b].reshape(lead + (n, n)), p[..., b:].reshape(lead + (n, n, n))


def _residual_vectors(W: ResponseFunction, x, y, gP, gQ, gR, S):
    """``W(h . g) - W(h)`` for batched ``g`` (leading axis B) against samples ``S``.

    ``x``/``y`` have shape ``(B, n)`` or ``(n,)``; result has shape ``(B, S, d)``.
    """
    hP, hQ, hR = S
    cP, cQ, cR = compose_coords(hP[None], hQ[None], hR[None], gP[:, None], gQ[:, None], gR[:, None])
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xs = x[:, None, :] if x.ndim == 2 else x
    ys = y[:, None, :] if y.ndim == 2 else y
    w1 = W.eval(xs, cP, cQ, cR)
    w0 = W.eval(ys, hP[None], hQ[None], hR[None])
    return w1 - w0


def membership_residuals(W: ResponseFunction, x, y, gP, gQ, gR, cfg: SamplerConfig, chunk: int = 512) -> np.ndarray:
    """max-norm residual for each jet in a batch (shape ``(B,)``)."""
    S = deformation_samples(W.n, cfg)
    B = gP.shape[0]
    out = np.empty(B)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    for a in range(0, B, chunk):
        sl = slice(a, a + chunk)
        xa = x[sl] if x.ndim == 2 else x
        ya = y[sl] if y.ndim == 2 else y
        r = _residual_vectors(W, xa, ya, gP[sl], gQ[sl], gR[sl], S)
        out[sl] = np.max(np.abs(r), axis=(1, 2))
    return out


def is_material_isomorphism(W: ResponseFunction, g: Jet2, cfg: SamplerConfig = SamplerConfig(), tol: ToleranceConfig = ToleranceConfig()):
    """``(pass, residual)`` with residual = max over samples of ``|W(h . g) - W(h)|``."""
    r = float(membership_residuals(W, g.x, g.y, g.P[None], g.Q[None], g.R[None], cfg)[0])
    return r <= tol.abs_tol, r


# --- pair solves ----------------------------------------------------------------------


@dataclass
class PairResult:
    source: int
    target: int
    jet: Jet2
    residual: float
    converged: bool
    status: str

    @property
    def failed(self) -> bool:
        """Solver stopped at a stationary point that is not a member."""
        return self.converged and not self.ok

    ok: bool = False

    def to_dict(self, with_jet: bool = True) -> dict:
        d = dict(source=self.source, target=self.target, residual=self.residual, converged=self.converged, status=self.status, member=self.ok)
        if with_jet:
            d["jet"] = self.jet.to_dict()
        return d


def solve_pair(W: ResponseFunction, x, y, cfg: SamplerConfig, tol: ToleranceConfig, guess=None, indices=(0, 1)) -> PairResult:
    """Least-squares search for a member ``x -> y`` over jet coordinates."""
    n = W.n
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    S = deformation_samples(n, cfg)
    p0 = _coords(np.eye(n), np.eye(n), np.zeros((n, n, n))) if guess is None else np.asarray(guess, float)
    h = tol.fd_step

    def residual(p):
        P, Q, R = _split(np.asarray(p)[None], n)
        return _residual_vectors(W, x, y, P, Q, R, S).ravel()

    def jacobian(p, r):
        m = p.size
        E = np.eye(m) * h
        P, Q, R = _split(np.concatenate([p + E, p - E]), n)
        res = _residual_vectors(W, np.broadcast_to(x, (2 * m, n)), np.broadcast_to(y, (2 * m, n)), P, Q, R, S).reshape(2 * m, -1)
        return ((res[:m] - res[m:]) / (2 * h)).T

    sol = solve_least_squares(residual, p0, tol, jacobian)
    P, Q, R = _split(sol.solution, n)
    jet = Jet2(x, y, P, Q, R, check=False)
    res = PairResult(indices[0], indices[1], jet, sol.residual_norm, sol.converged, sol.status)
    res.ok = sol.residual_norm <= tol.abs_tol
    return res


def _star(W, points, base, cfg, tol):
    """Solve ``z0 -> x`` for every point, warm-started from the nearest solved point."""
    N, n = points.shape
    z0 = points[base]
    order = np.argsort(np.linalg.norm(points - z0, axis=1), kind="stable")
    star: dict[int, PairResult] = {}
    e = identity2(z0)
    star[base] = PairResult(base, base, e, 0.0, True, "identity", ok=True)
    solved = [base]
    for k in order:
        k = int(k)
        if k == base:
            continue
        near = min(solved, key=lambda j: (np.linalg.norm(points[j] - points[k]), j))
        g = star[near].jet
        res = solve_pair(W, z0, points[k], cfg, tol, guess=_coords(g.P, g.Q, g.R), indices=(base, k))
        star[k] = res
        if res.ok:
            solved.append(k)
        yield k, res


@dataclass
class UniformityReport:
    verdict: str
    points: np.ndarray
    base_index: int
    star: list
    pair_residuals: Optional[np.ndarray]
    max_residual: float
    failed_pairs: list
    unconverged_pairs: list
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(
            verdict=self.verdict,
            base_index=self.base_index,
            num_points=int(self.points.shape[0]),
            max_residual=self.max_residual,
            star=[r.to_dict() for r in self.star],
            pair_residuals=None if self.pair_residuals is None else self.pair_residuals.tolist(),
            failed_pairs=self.failed_pairs,
            unconverged_pairs=self.unconverged_pairs,
            notes=self.notes,
        )


def _star_coords(star: dict, N: int, n: int):
    P = np.stack([star[i].jet.P for i in range(N)])
    Q = np.stack([star[i].jet.Q for i in range(N)])
    R = np.stack([star[i].jet.R for i in range(N)])
    return P, Q, R


def _pair_candidates(P, Q, R):
    """All ``g_j . g_i^-1`` (shape ``(N, N, ...)``, index ``[i, j]`` for ``i -> j``)."""
    iP, iQ, iR = invert_coords(P, Q, R)
    return compose_coords(P[None], Q[None], R[None], iP[:, None], iQ[:, None], iR[:, None])


def uniformity_check(
    W: ResponseFunction,
    points,
    cfg: SamplerConfig = SamplerConfig(),
    tol: ToleranceConfig = ToleranceConfig(),
    base_index: int = 0,
    early_exit: bool = True,
) -> UniformityReport:
    """Decide whether every ordered pair of ``points`` is joined by a material isomorphism.

    Jets ``z0 -> x`` are solved from the base point; every ordered pair is then checked
    with the composed candidate and re-solved only when that candidate fails.  A pair whose
    solve stops at a non-member stationary point proves non-uniformity (on the sample set);
    exhausting the iteration budget only makes the verdict inconclusive.
    """
    points = np.atleast_2d(np.asarray(points, float))
    N, n = points.shape
    if N < 2:
        raise ValueError("uniformity_check needs at least two points")
    star: dict[int, PairResult] = {base_index: None}
    failed, unconverged = [], []
    for k, res in _star(W, points, base_index, cfg, tol):
        star[k] = res
        if res.failed:
            failed.append([base_index, k])
            if early_exit:
                break
        elif not res.ok:
            unconverged.append([base_index, k])
    star[base_index] = PairResult(base_index, base_index, identity2(points[base_index]), 0.0, True, "identity", ok=True)
    star_list = [star[k] for k in sorted(star) if star[k] is not None]
    notes = []
    if failed or unconverged:
        verdict = "non-uniform" if failed else "inconclusive"
        if failed and early_exit:
            notes.append("stopped at the first non-member stationary point")
        max_res = max(r.residual for r in star_list)
        return UniformityReport(verdict, points, base_index, star_list, None, max_res, failed, unconverged, notes)

    P, Q, R = _star_coords(star, N, n)
    cP, cQ, cR = _pair_candidates(P, Q, R)
    xs = np.repeat(points, N, axis=0)
    ys = np.tile(points, (N, 1))
    res = membership_residuals(W, xs, ys, cP.reshape(N * N, n, n), cQ.reshape(N * N, n, n), cR.reshape(N * N, n, n, n), cfg).reshape(N, N)
    for i, j in zip(*np.nonzero(res > tol.abs_tol)):
        i, j = int(i), int(j)
        pr = solve_pair(W, points[i], points[j], cfg, tol, guess=_coords(cP[i, j], cQ[i, j], cR[i, j]), indices=(i, j))
        res[i, j] = pr.residual
        if pr.failed:
            failed.append([i, j])
        elif not pr.ok:
            unconverged.append([i, j])
    verdict = "non-uniform" if failed else ("inconclusive" if unconverged else "uniform")
    return UniformityReport(verdict, points, base_index, star_list, res, float(res.max()), failed, unconverged, notes)


# --- symmetry ------------------------------------------------------------------------


@dataclass
class SymmetrySample:
    jets: list
    acceptance_rate: float
    candidates: int


def symmetry_sample(
    W: ResponseFunction,
    x,
    cfg: SamplerConfig = SamplerConfig(),
    tol: ToleranceConfig = ToleranceConfig(),
    count: int = 16,
) -> SymmetrySample:
    """Random jets ``x -> x`` pulled onto the symmetry group by a least-squares projection
    (moving only along directions the response sees), kept when they are members."""
    x = np.atleast_1d(np.asarray(x, float))
    n = x.size
    rng = np.random.default_rng([int(cfg.seed), 0x5311])
    accepted = [identity2(x)]
    hits = 0
    for _ in range(count):
        P = np.eye(n) + 0.5 * cfg.jet_scale * rng.uniform(-1, 1, (n, n))
        Q = np.eye(n) + 0.5 * cfg.jet_scale * rng.uniform(-1, 1, (n, n))
        R = 0.5 * cfg.jet_scale * rng.uniform(-1, 1, (n, n, n))
        res = solve_pair(W, x, x, cfg, tol, guess=_coords(P, Q, R))
        if res.ok and abs(np.linalg.det(res.jet.P)) > 1e-6 and abs(np.linalg.det(res.jet.Q)) > 1e-6:
            accepted.append(res.jet)
            hits += 1
    return SymmetrySample(accepted, hits / count if count else 0.0, count)


# --- homogeneity ---------------------------------------------------------------------

HOMOGENEITY_TOL = 1e-6
RIGIDITY_TOL = 1e-6
N_QUAD = 6


@dataclass
class HomogeneityReport:
    mode: str
    verdict: str
    tol: float
    points: np.ndarray
    residual_field: Optional[np.ndarray] = None
    max_residual: Optional[float] = None
    obstruction: Optional[float] = None
    q_rigid: Optional[bool] = None
    kappa: Optional[np.ndarray] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        arr = lambda a: None if a is None else np.asarray(a).tolist()
        return dict(
            mode=self.mode,
            verdict=self.verdict,
            tol=self.tol,
            max_residual=self.max_residual,
            obstruction=self.obstruction,
            q_rigid=self.q_rigid,
            kappa=arr(self.kappa),
            residual_field=arr(self.residual_field),
            notes=self.notes,
        )


def workers() -> int:
    try:
        return max(1, int(os.environ.get("COSSERAT_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    if workers() == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers()) as ex:
        return list(ex.map(fn, items))


def _section_residuals(W, points, J, cfg):
    """Residual field of the section ``(x_i, x_j) -> J_j^-1 . J_i`` (``J_i: x_i -> *``)."""
    N, n = points.shape
    P, Q, R = J
    iP, iQ, iR = invert_coords(P, Q, R)
    cP, cQ, cR = compose_coords(iP[None], iQ[None], iR[None], P[:, None], Q[:, None], R[:, None])
    xs = np.repeat(points, N, axis=0)
    ys = np.tile(points, (N, 1))
    return membership_residuals(W, xs, ys, cP.reshape(N * N, n, n), cQ.reshape(N * N, n, n), cR.reshape(N * N, n, n, n), cfg).reshape(N, N)


def q_rigidity(W: ResponseFunction, z0, cfg: SamplerConfig, tol: ToleranceConfig) -> bool:
    """True when the linearized symmetry condition at ``z0`` leaves no freedom in ``Q``."""
    n = W.n
    z0 = np.atleast_1d(np.asarray(z0, float))
    S = deformation_samples(n, cfg)
    p = _coords(np.eye(n), np.eye(n), np.zeros((n, n, n)))
    m = p.size
    h = tol.fd_step
    E = np.eye(m) * h
    P, Q, R = _split(np.concatenate([p + E, p - E]), n)
    res = _residual_vectors(W, np.broadcast_to(z0, (2 * m, n)), np.broadcast_to(z0, (2 * m, n)), P, Q, R, S).reshape(2 * m, -1)
    J = ((res[:m] - res[m:]) / (2 * h)).T
    _, s, Vt = np.linalg.svd(J, full_matrices=True)
    rank = int(np.sum(s > 1e-8 * max(s.max(initial=0.0), 1.0)))
    null = Vt[rank:]
    if null.size == 0:
        return True
    return bool(np.max(np.abs(null[:, n * n : 2 * n * n])) <= RIGIDITY_TOL)


def _solve_star_field(W, points, chart, cfg, tol):
    """Tight star solves from the grid point nearest the chart centre.

    Returns ``(z0, star, F_at, C_at)`` where ``F_at(x) = Q(z0 -> x)^-1`` and
    ``C_at(x) = P(z0 -> x)^-1`` re-solve off-grid points from the nearest grid jet, or a
    message string when some grid point cannot be reached.
    """
    tight = tol.with_(abs_tol=min(tol.abs_tol, 1e-12))
    z0_index = int(np.argmin(np.linalg.norm(points - chart.center, axis=1)))
    z0 = points[z0_index]
    star: dict[int, PairResult] = {}
    problems = []
    for k, res in _star(W, points, z0_index, cfg, tight):
        star[k] = res
        if not res.ok and res.residual > tol.abs_tol:
            problems.append(k)
    star[z0_index] = PairResult(z0_index, z0_index, identity2(z0), 0.0, True, "identity", ok=True)
    if problems:
        return f"no material isomorphism found from the base point to {len(problems)} grid point(s)"

    def solved(x):
        g = star[int(np.argmin(np.linalg.norm(points - x, axis=1)))].jet
        return solve_pair(W, z0, x, cfg, tight, guess=_coords(g.P, g.Q, g.R)).jet

    return z0, star, (lambda x: np.linalg.inv(solved(x).Q)), (lambda x: np.linalg.inv(solved(x).P))


def homogeneity_check(
    W: ResponseFunction,
    chart: BodyChart,
    candidate: Optional[tuple] = None,
    cfg: SamplerConfig = SamplerConfig(),
    tol: ToleranceConfig = ToleranceConfig(),
    per_axis: int = 5,
    verify_tol: float = HOMOGENEITY_TOL,
) -> HomogeneityReport:
    """Grid-certified homogeneity.

    With ``candidate = (kappa, C)`` the section induced by the deformation
    ``(z, X) -> (kappa(z), C(z) X)`` is checked for membership at every grid pair.

    Without a candidate one is constructed: jets ``z0 -> x`` are solved on the grid, the
    chart Jacobian is ``F(x) = Q(z0 -> x)^-1`` and the frame field ``C(x) = P(z0 -> x)^-1``.
    ``F`` must be closed (a Jacobian field); if it is not and the symmetry group leaves no
    freedom in ``Q``, the closedness residual is an obstruction and the medium is reported
    locally inhomogeneous.  Otherwise the induced section is verified by membership.
    """
    points = chart.grid(per_axis)
    N, n = points.shape
    if candidate is not None:
        kappa, C = candidate
        jets = [jet2_from_bundle_map(kappa, C, x, tol.fd_step, chart.box) for x in points]
        J = tuple(np.stack([getattr(g, a) for g in jets]) for a in "PQR")
        field_ = _section_residuals(W, points, J, cfg)
        mx = float(field_.max())
        verdict = "homogeneous" if mx <= verify_tol else "inconclusive"
        notes = [] if verdict == "homogeneous" else ["candidate deformation does not induce a material section"]
        kap = np.array([np.atleast_1d(kappa(x)) for x in points])
        return HomogeneityReport("verify-candidate", verdict, verify_tol, points, field_, mx, None, None, kap, notes)

    # construct-and-verify
    report = HomogeneityReport("construct-and-verify", "inconclusive", verify_tol, points)
    solved = _solve_star_field(W, points, chart, cfg, tol)
    if isinstance(solved, str):
        report.notes.append(solved)
        return report
    z0, star, F_at, C_at = solved
    h = DEFAULT_FD2_STEP
    box = chart.box

    closed = _pmap(lambda x: closedness_residual(F_at, x, h, box), points)
    report.obstruction = float(max(closed))
    report.q_rigid = q_rigidity(W, z0, cfg, tol)
    if report.obstruction > verify_tol:
        if report.q_rigid:
            report.verdict = "locally-inhomogeneous"
            report.notes.append("solved micro-deformation field is not a Jacobian field")
        else:
            report.notes.append("closedness fails for the solved field, but the symmetry group allows other Q-fields")
        return report

    Fs = np.stack([np.linalg.inv(star[i].jet.Q) for i in range(N)])
    Cs = np.stack([np.linalg.inv(star[i].jet.P) for i in range(N)])
    dCs = np.stack(_pmap(lambda x: fd_derivative(C_at, x, h, box), points))
    field_ = _section_residuals(W, points, (Cs, Fs, dCs), cfg)
    report.residual_field = field_
    report.max_residual = float(field_.max())

    # chart values by Gauss-Legendre quadrature of F along segments from z0
    nodes, weights = np.polynomial.legendre.leggauss(N_QUAD)
    nodes, weights = (nodes + 1) / 2, weights / 2

    def kappa_at(x):
        d = x - z0
        return z0 + sum(w * F_at(z0 + s * d) @ d for s, w in zip(nodes, weights))

    report.kappa = np.stack(_pmap(kappa_at, points))
    if report.max_residual <= verify_tol:
        report.verdict = "homogeneous"
    else:
        report.notes.append("constructed section failed membership")
    return report


@dataclass
class ObstructionMap:
    points: np.ndarray
    closedness: Optional[np.ndarray]
    curvature_norm: Optional[np.ndarray]
    notes: list = field(default_factory=list)

    def header(self) -> list:
        n = self.points.shape[1]
        return [f"x{i + 1}" for i in range(n)] + ["closedness", "curvature_max"]

    def rows(self) -> list:
        return [np.concatenate([p, [c, k]]) for p, c, k in zip(self.points, self.closedness, self.curvature_norm)]


def obstruction_map(
    W: ResponseFunction,
    chart: BodyChart,
    cfg: SamplerConfig = SamplerConfig(),
    tol: ToleranceConfig = ToleranceConfig(),
    per_axis: int = 5,
) -> ObstructionMap:
    """Point-wise closedness residual of the solved field ``F`` and the curvature
    max-norm of its connection ``G[k, i, j] = (F^-1 d_j F)[k, i]``.

    The connection of a solved frame field is flat up to discretization error, so the
    curvature column is a consistency check; the closedness column carries the
    obstruction.
    """
    from .algebroid import ChristoffelField, curvature

    points = chart.grid(per_axis)
    solved = _solve_star_field(W, points, chart, cfg, tol)
    if isinstance(solved, str):
        return ObstructionMap(points, None, None, [solved])
    _, _, F_at, _ = solved
    h = DEFAULT_FD2_STEP
    box = chart.box
    n = W.n

    def gamma(x):
        F = F_at(x)
        dF = fd_derivative(F_at, x, h, box)  # dF[a, i, j] = d_j F[a, i]
        return np.einsum("ka,aij->kij", np.linalg.inv(F), dF)

    G = ChristoffelField(n, gamma)
    closed = np.array(_pmap(lambda x: closedness_residual(F_at, x, h, box), points))
    curv = np.array(_pmap(lambda x: float(np.max(np.abs(curvature(G, x, 1e-3, box)))), points))
    return ObstructionMap(points, closed, curv)


# --- algebroid membership -------------------------------------------------------------


def algebroid_membership(
    W: ResponseFunction,
    theta: Section2,
    jets: Sequence[Jet2],
    tol: float = 1e-6,
    delta: float = 1e-4,
    steps: int = 4,
):
    """``(pass, max |d/dt W(g . Exp_t theta)|)`` at ``t = 0`` by central differences."""
    worst = 0.0
    for g in jets:
        ep = exponential2(theta, delta, g.x, steps)
        em = exponential2(theta, -delta, g.x, steps)
        d = (evaluate_response(W, compose2(g, ep)) - evaluate_response(W, compose2(g, em))) / (2 * delta)
        worst = max(worst, float(np.max(np.abs(d))))
    return worst <= tol, worst
