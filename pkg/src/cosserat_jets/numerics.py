"""Small dense numeric kernel: finite differences, RK4 flows, damped least squares."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import FieldNotEvaluable, FlowLeftDomain

DEFAULT_FD_STEP = 1e-5
# nested central differences lose roughly twice the digits of first derivatives
DEFAULT_FD2_STEP = 1e-4


@dataclass(frozen=True)
class ToleranceConfig:
    fd_step: float = DEFAULT_FD_STEP
    abs_tol: float = 1e-9
    rel_tol: float = 1e-13
    max_iter: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if not self.fd_step > 0:
            raise ValueError("fd_step must be > 0")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be > 0")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    def with_(self, **kw) -> "ToleranceConfig":
        return replace(self, **kw)

    def rng(self, *stream: int) -> np.random.Generator:
        """Independent generator for a named sub-stream of the seed."""
        return np.random.default_rng([int(self.rng_seed), *map(int, stream)])


def _eval(f, x):
    try:
        y = np.asarray(f(x), dtype=float)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise FieldNotEvaluable(np.atleast_1d(x), exc) from exc
    if not np.all(np.isfinite(y)):
        raise FieldNotEvaluable(np.atleast_1d(x), "non-finite value")
    return y


def _stencil(x, h, box, i):
    """Offsets along axis i: 'c' central, 'f' forward, 'b' backward."""
    if box is None:
        return "c"
    lo, hi = box[i]
    if x[i] - h >= lo and x[i] + h <= hi:
        return "c"
    if x[i] + 2 * h <= hi:
        return "f"
    if x[i] - 2 * h >= lo:
        return "b"
    return "c"


def fd_jacobian(f: Callable, x, h: float = DEFAULT_FD_STEP, box: Optional[Sequence] = None) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``x``.

    ``f`` maps an n-vector to any array shape; the result has shape ``(m, n)`` with the
    output flattened row-major.  Near the edges of ``box`` (a sequence of ``(lo, hi)``
    pairs) second-order one-sided stencils are used instead.
    """
    if not h > 0:
        raise ValueError("step must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    cols = []
    f0 = None
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        kind = _stencil(x, h, box, i)
        if kind == "c":
            d = (_eval(f, x + e).ravel() - _eval(f, x - e).ravel()) / (2 * h)
        else:
            if f0 is None:
                f0 = _eval(f, x).ravel()
            s = 1.0 if kind == "f" else -1.0
            d = s * (-3 * f0 + 4 * _eval(f, x + s * e).ravel() - _eval(f, x + 2 * s * e).ravel()) / (2 * h)
        cols.append(d)
    return np.stack(cols, axis=-1)


def fd_derivative(f: Callable, x, h: float = DEFAULT_FD_STEP, box=None) -> np.ndarray:
    """Partial derivatives of an array-valued field, stacked on a trailing axis.

    If ``f(x)`` has shape ``S`` the result has shape ``S + (n,)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    shape = _eval(f, x).shape
    return fd_jacobian(f, x, h, box).reshape(shape + (x.size,))


def integrate_flow(v: Callable, s0, t: float, steps: int, inside: Optional[Callable] = None):
    """Classical fixed-step RK4 for ``ds/dt = v(t, s)`` from 0 to ``t``.

    ``inside`` optionally rejects states (e.g. points leaving the chart box).
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    s = np.array(s0, dtype=float)
    dt = float(t) / steps
    tau = 0.0
    for k in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = np.asarray(v(tau, s), dtype=float)
            k2 = np.asarray(v(tau + dt / 2, s + dt / 2 * k1), dtype=float)
            k3 = np.asarray(v(tau + dt / 2, s + dt / 2 * k2), dtype=float)
            k4 = np.asarray(v(tau + dt, s + dt * k3), dtype=float)
            nxt = s + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(nxt)):
            raise FlowLeftDomain(tau, "non-finite state")
        if inside is not None and not inside(nxt):
            raise FlowLeftDomain(tau, "state outside domain")
        s = nxt
        tau = (k + 1) * dt
    return s


@dataclass
class LeastSquaresResult:
    solution: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    status: str

    def __iter__(self):
        # unpacks as (solution, final_residual_norm)
        yield self.solution
        yield self.residual_norm


def _fd_residual_jacobian(residual, p, r0, h):
    J = np.empty((r0.size, p.size))
    for i in range(p.size):
        e = np.zeros(p.size)
        e[i] = h
        J[:, i] = (np.asarray(residual(p + e), float).ravel() - np.asarray(residual(p - e), float).ravel()) / (2 * h)
    return J


def solve_least_squares(
    residual: Callable,
    guess,
    cfg: ToleranceConfig = ToleranceConfig(),
    jacobian: Optional[Callable] = None,
) -> LeastSquaresResult:
    """Levenberg-Marquardt with finite-difference Jacobians.

    Stops when ``max|r| <= abs_tol`` ("residual"), when the step is below ``rel_tol``
    relative to the iterate ("step"), when the gradient vanishes ("gradient") or after
    ``max_iter`` iterations ("max_iter", the only non-converged exit).  The best point
    seen is always returned.
    """
    p = np.array(guess, dtype=float).ravel()
    r = np.asarray(residual(p), float).ravel()
    cost = 0.5 * r @ r
    if np.max(np.abs(r), initial=0.0) <= cfg.abs_tol:
        return LeastSquaresResult(p, float(np.max(np.abs(r), initial=0.0)), True, 0, "residual")
    jac = jacobian or (lambda q, rq: _fd_residual_jacobian(residual, q, rq, cfg.fd_step))
    J = jac(p, r)
    A = J.T @ J
    g = J.T @ r
    mu = 1e-3 * max(np.max(np.diag(A), initial=0.0), 1e-12)
    nu = 2.0
    status = "max_iter"
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if np.max(np.abs(g), initial=0.0) <= 1e-15 * max(1.0, cost):
            status = "gradient"
            break
        try:
            delta = np.linalg.solve(A + mu * np.eye(p.size), -g)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2
            continue
        if np.linalg.norm(delta) <= cfg.rel_tol * (np.linalg.norm(p) + cfg.rel_tol):
            status = "step"
            break
        p_new = p + delta
        r_new = np.asarray(residual(p_new), float).ravel()
        cost_new = 0.5 * r_new @ r_new
        predicted = 0.5 * delta @ (mu * delta - g)
        rho = (cost - cost_new) / predicted if predicted > 0 else -1.0
        if np.isfinite(cost_new) and rho > 0:
            p, r, cost = p_new, r_new, cost_new
            if np.max(np.abs(r), initial=0.0) <= cfg.abs_tol:
                status = "residual"
                break
            J = jac(p, r)
            A = J.T @ J
            g = J.T @ r
            mu *= max(1 / 3, 1 - (2 * rho - 1) ** 3)
            nu = 2.0
        else:
            mu *= nu
            nu *= 2
            if mu > 1e30:
                status = "step"
                break
    norm = float(np.max(np.abs(r), initial=0.0))
    return LeastSquaresResult(p, norm, status != "max_iter", it, status)


def matrix_inverse(A, what: str = "matrix", tol: float = 1e-12):
    """Inverse with a conditioning guard."""
    from .errors import InversionError

    A = np.asarray(A, dtype=float)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1.0 / tol:
        raise InversionError(f"{what} is numerically singular", cond)
    return np.linalg.inv(A)
