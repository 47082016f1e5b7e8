"""Damped Newton solver for the twisted-metric equation in log form.

Unknowns are a zero-mean potential phi and a scalar b solving

    log f(lam[g^-1 gt(phi)]) = F + b,      sup-normalized on output.

The linearization of the left side along dphi is tr(T @ H(dphi)) where T is
the trace reversal of the linearization coefficients, so each Newton step
solves an elliptic variable-coefficient problem; the constant mode is fixed
by a zero-mean constraint and b absorbs the compatibility defect (bordered
system, matrix-free Krylov with a diagonal preconditioner).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, lgmres

from . import grid as gridmod
from . import hermlin, symfun
from .errors import (
    ConeViolationError,
    InfeasibleStartError,
    MetricDegeneracyError,
    NonConvergenceError,
)

MIN_STEP = 2.0**-20


@dataclass
class PrimaryProblem:
    """Operator, background metrics, forcing, and grid for one instance."""

    spec: symfun.OperatorSpec
    g: np.ndarray
    g_h: np.ndarray
    F: np.ndarray
    grid: gridmod.TorusGrid
    tolerance: float = 1e-9
    max_iterations: int = 40

    def __post_init__(self):
        shape = self.grid.shape + (self.grid.n, self.grid.n)
        if self.spec.dim != self.grid.n:
            raise ValueError("operator dimension does not match the grid")
        if self.g.shape != shape or self.g_h.shape != shape:
            raise ValueError("metric fields must have shape grid.shape + (n, n)")
        if self.F.shape != self.grid.shape:
            raise ValueError("forcing must be a scalar field on the grid")
        if not np.all(np.isfinite(self.F)):
            raise ValueError("forcing must be finite")
        for name, m in (("metric", self.g), ("reference metric", self.g_h)):
            try:
                hermlin.cholesky_pd(m, name)
            except MetricDegeneracyError:
                raise
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    @property
    def g_inv(self):
        if not hasattr(self, "_g_inv"):
            self._g_inv = np.linalg.inv(self.g)
        return self._g_inv


@dataclass
class PrimarySolution:
    """Sup-normalized potential, log-scale constant, and iteration stats."""

    phi: np.ndarray
    b: float
    residual_sup: float
    iterations: int
    residual_history: list = field(default_factory=list)


def _eigs_of_twisted(problem, phi):
    gt = gridmod.twisted_metric(phi, problem.g, problem.g_h, problem.grid,
                                g_inv=problem.g_inv)
    lam = hermlin.endomorphism_eigs(problem.g, gt)
    return gt, lam


def residual(problem, phi, b):
    """Pointwise residual field log f(lam) - F - b.

    Raises ConeViolationError (with the first offending flat index) if the
    eigenvalue field leaves the cone.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != problem.grid.shape:
        raise ValueError("phi shape does not match the grid")
    _, lam = _eigs_of_twisted(problem, phi)
    f = symfun.evaluate(problem.spec, lam)
    return np.log(f) - problem.F - b


def _cone_ok(problem, lam):
    return bool(np.all(symfun.interior_margin(lam, problem.spec.cone) > 0.0))


def _coefficient_field(problem, gt):
    G = hermlin.linearization(problem.spec, problem.g, gt)
    return hermlin.trace_reversal(G, problem.g)


def apply_trace_reversed_hessian(coeff, dphi, grid):
    """tr(coeff @ H(dphi)) evaluated with the periodic stencils; real field."""
    H = gridmod.complex_hessian(dphi, grid)
    return np.einsum("...ij,...ji->...", coeff, H).real


def _newton_step(problem, coeff, r, krylov_rtol):
    """Solve the bordered system tr(coeff H(dphi)) - db = -r, mean(dphi) = 0."""
    g = problem.grid
    m = g.num_points
    shape = g.shape

    def matvec(u):
        dphi = u[:m].reshape(shape)
        db = u[m]
        top = apply_trace_reversed_hessian(coeff, dphi, g) - db
        bottom = np.array([dphi.mean()])
        return np.concatenate([top.reshape(-1), bottom])

    # center coefficient of each pure second difference is -2/h^2 and the
    # diagonal Hessian entries carry 1/4 twice: -tr(Re coeff)/h^2 pointwise
    diag = -np.einsum("...ii->...", coeff).real / g.h**2
    diag = np.where(np.abs(diag) > 1e-14, diag, -1.0)
    scale = np.concatenate([diag.reshape(-1), np.array([1.0])])

    def precond(u):
        return u / scale

    op = LinearOperator((m + 1, m + 1), matvec=matvec, dtype=float)
    M = LinearOperator((m + 1, m + 1), matvec=precond, dtype=float)
    rhs = np.concatenate([(-r).reshape(-1), np.array([0.0])])
    sol, info = lgmres(op, rhs, M=M, rtol=krylov_rtol, atol=0.0, maxiter=400)
    if info != 0:
        raise NonConvergenceError(f"inner Krylov solve stalled (info={info})")
    dphi = sol[:m].reshape(shape)
    return dphi - dphi.mean(), float(sol[m])


def solve_primary(problem, initial=None):
    """Damped Newton iteration; returns a sup-normalized PrimarySolution.

    The step is halved until the cone constraint holds everywhere and the
    sup residual decreases; steps below 2**-20 raise NonConvergenceError
    with the residual history attached.
    """
    g = problem.grid
    if initial is None:
        phi = np.zeros(g.shape)
    else:
        phi = np.asarray(initial, dtype=float).copy()
        if phi.shape != g.shape:
            raise ValueError("initial guess shape does not match the grid")
    phi -= phi.mean()

    _, lam = _eigs_of_twisted(problem, phi)
    if not _cone_ok(problem, lam):
        margin = symfun.interior_margin(lam, problem.spec.cone)
        idx = int(np.argmin(margin.reshape(-1)))
        raise InfeasibleStartError(
            f"initial iterate violates the cone constraint (margin "
            f"{float(margin.reshape(-1)[idx]):.3e} at flat index {idx})"
        )
    f = symfun.evaluate(problem.spec, lam)
    b = float(np.mean(np.log(f) - problem.F))

    history = []
    r = np.log(f) - problem.F - b
    sup = float(np.max(np.abs(r)))
    history.append(sup)

    for it in range(1, problem.max_iterations + 1):
        if sup <= problem.tolerance:
            return PrimarySolution(
                gridmod.normalize_sup(phi), b, sup, it - 1, history
            )
        gt, lam = _eigs_of_twisted(problem, phi)
        coeff = _coefficient_field(problem, gt)
        krylov_rtol = min(1e-2, max(1e-10, 0.05 * sup))
        dphi, db = _newton_step(problem, coeff, r, krylov_rtol)

        step = 1.0
        while True:
            trial_phi = phi + step * dphi
            trial_b = b + step * db
            try:
                _, lam_t = _eigs_of_twisted(problem, trial_phi)
                if _cone_ok(problem, lam_t):
                    f_t = symfun.evaluate(problem.spec, lam_t)
                    r_t = np.log(f_t) - problem.F - trial_b
                    sup_t = float(np.max(np.abs(r_t)))
                    if sup_t < sup:
                        break
            except ConeViolationError:
                pass
            step *= 0.5
            if step < MIN_STEP:
                raise NonConvergenceError(
                    "line search stalled below the minimum step", history
                )
        phi, b, r, sup = trial_phi, trial_b, r_t, sup_t
        phi -= phi.mean()
        history.append(sup)

    if sup <= problem.tolerance:
        return PrimarySolution(
            gridmod.normalize_sup(phi), b, sup, problem.max_iterations, history
        )
    raise NonConvergenceError(
        f"no convergence in {problem.max_iterations} iterations "
        f"(residual {sup:.3e})",
        history,
    )


@dataclass(frozen=True)
class L1BoundReport:
    """Premises and output of the final L1 bound chain for one solution.

    c_prime is the sup of tr(g^-1 g_h); the Laplacian margin is
    min(Delta phi + c_prime) and must clear -1e-9; the rescaled trace is
    min tr(g^-1 (g + H(n phi / c_prime))) and must also clear -1e-9; l1
    is the integral of -phi against the metric volume.
    """

    c_prime: float
    laplacian_margin: float
    rescaled_trace_min: float
    l1: float

    @property
    def passed(self):
        return self.laplacian_margin >= -1e-9 and self.rescaled_trace_min >= -1e-9


def l1_bound_check(phi, g, g_h, grid):
    """Verify the trace-route premises on a solved potential.

    Both checks are trace conditions: membership of the rescaled twisted
    eigenvalues in the largest cone only constrains the metric trace.
    """
    phi = np.asarray(phi, dtype=float)
    g_inv = np.linalg.inv(g)
    lap = gridmod.laplacian(phi, g, grid, g_inv=g_inv)
    c_prime = float(np.max(np.einsum("...ij,...ji->...", g_inv, g_h).real))
    laplacian_margin = float(np.min(lap) + c_prime)
    n = grid.n
    rescaled = n + (n / c_prime) * lap
    rescaled_trace_min = float(np.min(rescaled))
    l1 = gridmod.integrate(-phi, gridmod.volume_density(g), grid)
    return L1BoundReport(c_prime, laplacian_margin, rescaled_trace_min, l1)
