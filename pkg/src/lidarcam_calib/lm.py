"""Levenberg-Marquardt for small dense nonlinear least-squares problems.

Minimises ``cost(x) = sum(r(x)**2)``. Damping follows Marquardt's scheme
(``J^T J + lambda * diag(J^T J)``) with a multiplicative schedule.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import JacobianMismatch, NumericalFailure


@dataclass(frozen=True)
class LMConfig:
    max_iterations: int = 200
    gradient_tol: float = 1e-10
    step_tol: float = 1e-12
    damping_init: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 10.0
    check_jacobian: bool = False
    fd_step: float = 1e-6
    jacobian_rtol: float = 1e-5

    def __post_init__(self):
        for name in ("max_iterations", "gradient_tol", "step_tol", "damping_init", "fd_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (self.damping_up > 1 and self.damping_down > 1):
            raise ValueError("damping factors must exceed 1")


@dataclass
class LMReport:
    status: str
    iterations: int
    initial_cost: float
    final_cost: float
    cost_history: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status in ("gradient", "step", "zero_cost")


def numerical_jacobian(fn, x, h=1e-6):
    """Central-difference Jacobian of a vector function."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def compare_jacobians(analytic, numeric, rtol=1e-5):
    """True when ``|A - N| <= rtol * max(1, |A|)`` holds elementwise."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = np.maximum(1.0, np.abs(analytic))
    return bool(np.all(np.abs(analytic - numeric) <= rtol * scale))


def _finite(*arrays):
    return all(np.all(np.isfinite(a)) for a in arrays)


def levenberg_marquardt(residual_fn, x0, jacobian_fn=None, cfg: LMConfig = LMConfig()):
    """Minimise ``sum(residual_fn(x)**2)`` starting at ``x0``.

    ``jacobian_fn`` defaults to central differences. Returns ``(x, report)``.
    Raises :class:`NumericalFailure` when the residual or Jacobian at an
    iterate is not finite.
    """
    if jacobian_fn is None:
        def jacobian_fn(x):
            return numerical_jacobian(residual_fn, x, cfg.fd_step)

    x = np.array(x0, dtype=float)
    r = np.asarray(residual_fn(x), dtype=float)
    if not _finite(r):
        raise NumericalFailure("residual is not finite at the initial point")
    cost = float(r @ r)

    if cfg.check_jacobian:
        Ja = jacobian_fn(x)
        Jn = numerical_jacobian(residual_fn, x, cfg.fd_step)
        if not compare_jacobians(Ja, Jn, cfg.jacobian_rtol):
            raise JacobianMismatch(
                f"analytic Jacobian deviates from finite differences by "
                f"{np.max(np.abs(Ja - Jn)):.3g}"
            )

    report = LMReport("max_iterations", 0, cost, cost, [cost])
    lam = cfg.damping_init
    for it in range(1, cfg.max_iterations + 1):
        report.iterations = it
        if cost == 0.0:
            report.status = "zero_cost"
            break
        J = np.asarray(jacobian_fn(x), dtype=float)
        if not _finite(J):
            raise NumericalFailure(f"Jacobian is not finite at iteration {it}")
        g = J.T @ r
        if np.max(np.abs(g)) < cfg.gradient_tol:
            report.status = "gradient"
            break
        A = J.T @ J
        diag = np.diag(A).copy()
        diag = np.maximum(diag, 1e-12 * max(1.0, float(diag.max())))

        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= cfg.damping_up
                continue
            x_new = x + step
            r_new = np.asarray(residual_fn(x_new), dtype=float)
            cost_new = float(r_new @ r_new) if _finite(r_new) else np.inf
            if cost_new < cost:
                accepted = True
                break
            if np.linalg.norm(step) < cfg.step_tol * (np.linalg.norm(x) + cfg.step_tol):
                break
            lam *= cfg.damping_up

        if not accepted:
            report.status = "step" if lam < 1e16 else "stalled"
            break
        assert cost_new <= cost
        small_step = np.linalg.norm(step) < cfg.step_tol * (np.linalg.norm(x) + cfg.step_tol)
        x, r, cost = x_new, r_new, cost_new
        report.cost_history.append(cost)
        lam = max(lam / cfg.damping_down, 1e-15)
        if small_step:
            report.status = "step"
            break
    report.final_cost = cost
    return x, report
