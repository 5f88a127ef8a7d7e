"""
Graphical lasso solver.

Minimizes -log det(Theta) + tr(S Theta) + lam * sum_ij |Theta_ij| by sweeping
over the rows/columns of W = Theta^-1. Each column update solves an
l1-penalized quadratic in theta_12 by cyclic coordinate descent, after first
checking whether ||s_12||_inf <= lam forces the whole row to zero.
"""
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np
from numba import njit
from numpy.typing import NDArray

from covthresh.covmodel import SymMatrix, as_array, objective, spd_logdet
from covthresh.exceptions import (
    DimensionMismatchError,
    InfeasibleError,
    InputError,
    NotPositiveDefiniteError,
)
from covthresh.solver_config import SolverConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GlassoSolution:
    """Precision estimate Theta, its working inverse W, and solve metadata."""
    theta: SymMatrix
    w: SymMatrix
    lam: float
    objective: float
    iterations: int
    converged: bool
    max_kkt_residual: float
    inverse_residual: float = 0.0
    # -log det W after every sweep, starting with the initial W
    dual_trace: Tuple[float, ...] = field(default=(), repr=False)
    # set when the solve aborted and the estimate is only a stand-in
    error: Optional[str] = None

    @property
    def p(self) -> int:
        return self.theta.p

    def summary(self) -> dict:
        return {
            'lambda': self.lam,
            'objective': self.objective,
            'iterations': self.iterations,
            'converged': self.converged,
            'max_kkt_residual': self.max_kkt_residual,
        }


@dataclass(frozen=True)
class KktReport:
    max_violation_zero: float
    max_violation_sign: float
    max_violation_diag: float
    passed: bool

    @property
    def max_violation(self) -> float:
        return max(self.max_violation_zero, self.max_violation_sign, self.max_violation_diag)

    def to_dict(self) -> dict:
        return {
            'max_violation_zero': self.max_violation_zero,
            'max_violation_sign': self.max_violation_sign,
            'max_violation_diag': self.max_violation_diag,
            'passed': self.passed,
        }


class RowSolution(NamedTuple):
    theta12: NDArray
    converged: bool
    sweeps: int


def _kkt_residuals(s: NDArray, theta: NDArray, w: NDArray, lam: float, support_tol: float) -> Tuple[float, float, float]:
    off = ~np.eye(s.shape[0], dtype=bool)
    support = np.abs(theta) > support_tol
    zero_mask = off & ~support
    sign_mask = off & support
    viol_zero = float(np.max(np.abs(s - w)[zero_mask] - lam, initial=0.0))
    viol_sign = float(np.max(np.abs(w - s - lam * np.sign(theta))[sign_mask], initial=0.0))
    viol_diag = float(np.max(np.abs(w.diagonal() - s.diagonal() - lam)))
    return viol_zero, viol_sign, viol_diag


def kkt_check(S, sol: GlassoSolution, cfg: Optional[SolverConfig] = None) -> KktReport:
    """
    Check the stationarity conditions of the solution against S.

    Off-diagonal entries with |Theta_ij| <= support_tol must satisfy
    |S_ij - W_ij| <= lam; the others W_ij = S_ij + lam * sign(Theta_ij);
    the diagonal W_ii = S_ii + lam.
    """
    cfg = cfg or SolverConfig()
    s = as_array(S)
    if s.shape != (sol.p, sol.p):
        raise DimensionMismatchError(f"S is {s.shape} but the solution is {sol.p} x {sol.p}")
    viol = _kkt_residuals(s, sol.theta.values, sol.w.values, sol.lam, cfg.support_tol)
    return KktReport(*viol, passed=max(viol) <= cfg.kkt_tol)


@njit(cache=True, nogil=True)
def _cd_row(W, idx, s, theta22, lam, tol, max_sweeps, theta):
    # updates theta in place; the quadratic term is A = W[idx][:, idx], read through idx
    m = idx.size
    grad = np.zeros(m)
    for k in range(m):
        if theta[k] != 0.0:
            wk = idx[k]
            for l in range(m):
                grad[l] += theta[k] * W[wk, idx[l]]
    thr = lam * theta22
    # change is measured as |d theta_k| * A_kk / theta22, i.e. in units of W
    stop = tol * theta22
    full = True
    for sweep in range(1, max_sweeps + 1):
        max_delta = 0.0
        for k in range(m):
            old = theta[k]
            if not full and old == 0.0:
                continue
            wk = idx[k]
            akk = W[wk, wk]
            r = grad[k] - akk * old + theta22 * s[k]
            if r > thr:
                new = -(r - thr) / akk
            elif r < -thr:
                new = -(r + thr) / akk
            else:
                new = 0.0
            if new != old:
                delta = new - old
                for l in range(m):
                    grad[l] += delta * W[wk, idx[l]]
                theta[k] = new
                if abs(delta) * akk > max_delta:
                    max_delta = abs(delta) * akk
        if max_delta <= stop:
            if full:
                return sweep, True
            full = True
        else:
            full = False
    return max_sweeps, False


@njit(cache=True, nogil=True)
def _sweep(W, theta, s, lam, inner_tol, max_inner):
    """
    One pass over every column of W, updating W and theta in place.

    Returns (max |dW|, failed row or -1, its Schur complement, rows that hit max_inner).
    """
    p = W.shape[0]
    others = np.empty(p - 1, dtype=np.int64)
    s12 = np.empty(p - 1)
    row = np.empty(p - 1)
    w12 = np.empty(p - 1)
    max_change = 0.0
    capped = 0
    for j in range(p):
        n = 0
        for i in range(p):
            if i != j:
                others[n] = i
                n += 1
        largest = 0.0
        for k in range(p - 1):
            s12[k] = s[others[k], j]
            if abs(s12[k]) > largest:
                largest = abs(s12[k])
        t22 = theta[j, j]
        w12[:] = 0.0
        if largest <= lam:
            row[:] = 0.0
        else:
            for k in range(p - 1):
                row[k] = theta[others[k], j]
            _, ok = _cd_row(W, others, s12, t22, lam, inner_tol, max_inner, row)
            if not ok:
                capped += 1
            for k in range(p - 1):
                if row[k] != 0.0:
                    wk = others[k]
                    beta = -row[k] / t22
                    for l in range(p - 1):
                        w12[l] += W[wk, others[l]] * beta
        schur = W[j, j]
        for k in range(p - 1):
            schur -= w12[k] * (-row[k] / t22)
        if not schur > 0:
            return max_change, j, schur, capped
        new22 = 1.0 / schur
        for k in range(p - 1):
            i = others[k]
            change = abs(w12[k] - W[i, j])
            if change > max_change:
                max_change = change
            W[i, j] = w12[k]
            W[j, i] = w12[k]
            entry = 0.0 - (-row[k] / t22) * new22
            theta[i, j] = entry
            theta[j, i] = entry
        theta[j, j] = new22
    return max_change, -1, 0.0, capped


def row_subproblem(W11, s12, theta22: float, lam: float, cfg: Optional[SolverConfig] = None,
                   warm: Optional[NDArray] = None) -> RowSolution:
    """
    Minimize 1/2 t' W11 t + theta22 * t' s12 + lam * theta22 * ||t||_1 over t.

    Returns the exact zero vector when ||s12||_inf <= lam without iterating.
    Otherwise runs cyclic coordinate descent, alternating full sweeps with
    sweeps over the nonzero coordinates, until a full sweep moves no
    coordinate by more than cfg.conv_tol (in units of W).
    """
    cfg = cfg or SolverConfig()
    A = as_array(W11)
    s = np.asarray(s12, dtype=np.float64).ravel()
    if A.shape != (s.size, s.size):
        raise DimensionMismatchError(f"W11 is {A.shape} but s12 has {s.size} entries")
    if not theta22 > 0:
        raise InputError(f"theta22 must be positive, got {theta22}")
    if warm is not None and np.size(warm) != s.size:
        logger.warning("ignoring warm start of length %d for a row of length %d", np.size(warm), s.size)
        warm = None
    if s.size == 0 or np.max(np.abs(s)) <= lam:
        return RowSolution(np.zeros(s.size), True, 0)
    theta = np.zeros(s.size) if warm is None else np.array(warm, dtype=np.float64).ravel()
    sweeps, converged = _cd_row(np.ascontiguousarray(A), np.arange(s.size, dtype=np.int64), np.ascontiguousarray(s),
                                float(theta22), float(lam), float(cfg.conv_tol), int(cfg.max_inner), theta)
    return RowSolution(theta, bool(converged), int(sweeps))


def _solution(s: NDArray, theta: NDArray, w: NDArray, lam: float, cfg: SolverConfig, iterations: int,
              converged: bool, inverse_residual: float, dual_trace=()) -> GlassoSolution:
    residual = max(_kkt_residuals(s, theta, w, lam, cfg.support_tol))
    try:
        value = objective(s, theta, lam)
    except NotPositiveDefiniteError:
        logger.warning("theta is not positive definite at lambda=%g; objective set to inf", lam)
        value = float('inf')
    return GlassoSolution(
        theta=SymMatrix(theta, sym_tol=np.inf),
        w=SymMatrix(w, sym_tol=np.inf),
        lam=float(lam),
        objective=value,
        iterations=iterations,
        converged=converged,
        max_kkt_residual=residual,
        inverse_residual=inverse_residual,
        dual_trace=tuple(dual_trace),
    )


def _solve_single(s: NDArray, lam: float, cfg: SolverConfig) -> GlassoSolution:
    w = s + lam
    return _solution(s, 1.0 / w, w, lam, cfg, 0, True, 0.0)


def _solve_pair(s: NDArray, lam: float, cfg: SolverConfig) -> GlassoSolution:
    s12 = s[0, 1]
    w12 = np.sign(s12) * max(abs(s12) - lam, 0.0)
    w = np.array([[s[0, 0] + lam, w12], [w12, s[1, 1] + lam]])
    det = w[0, 0] * w[1, 1] - w12 * w12
    if det <= 0:
        raise NotPositiveDefiniteError(f"no positive definite W fits the 2 x 2 block at lambda={lam}")
    theta = np.array([[w[1, 1], 0.0 - w12], [0.0 - w12, w[0, 0]]]) / det
    inverse_residual = float(np.max(np.abs(theta @ w - np.eye(2))))
    return _solution(s, theta, w, lam, cfg, 0, True, inverse_residual)


def _initial_state(s: NDArray, lam: float, warm: Optional[GlassoSolution]) -> Tuple[NDArray, NDArray]:
    p = s.shape[0]
    if warm is not None:
        if warm.p != p:
            logger.warning("ignoring warm start of dimension %d for a block of dimension %d", warm.p, p)
        else:
            w = warm.w.copy()
            np.fill_diagonal(w, s.diagonal() + lam)
            try:
                spd_logdet(w)
                return w, warm.theta.copy()
            except NotPositiveDefiniteError:
                logger.warning("warm start is not positive definite after the diagonal reset; starting cold")
    w = s.copy()
    np.fill_diagonal(w, s.diagonal() + lam)
    return w, np.diag(1.0 / w.diagonal())


def _solve_iterative(s: NDArray, lam: float, cfg: SolverConfig, warm: Optional[GlassoSolution] = None) -> GlassoSolution:
    p = s.shape[0]
    W, theta = _initial_state(s, lam, warm)
    W = np.ascontiguousarray(W, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    s = np.ascontiguousarray(s)
    trace = [-spd_logdet(W)]
    scale = float(np.mean(np.abs(s.diagonal()))) or 1.0
    w_tol = cfg.conv_tol * scale
    eye = np.eye(p)
    converged = False
    inverse_residual = np.inf
    sweep = 0
    for sweep in range(1, cfg.max_outer + 1):
        max_change, bad_row, schur, capped = _sweep(W, theta, s, float(lam), float(cfg.inner_tol), int(cfg.max_inner))
        if bad_row >= 0:
            raise NotPositiveDefiniteError(f"W lost positive definiteness at row {bad_row} (Schur complement {schur:.3e})")
        if capped:
            logger.debug("%d rows hit the inner iteration cap in sweep %d", capped, sweep)
        trace.append(-spd_logdet(W))
        logger.debug("sweep %d: max |dW| = %.3e, -log det W = %.12g", sweep, max_change, trace[-1])
        if max_change <= w_tol:
            inverse_residual = float(np.max(np.abs(theta @ W - eye)))
            residual = max(_kkt_residuals(s, theta, W, lam, cfg.support_tol))
            if residual <= cfg.kkt_tol and inverse_residual <= 10 * cfg.kkt_tol:
                converged = True
                break
    else:
        inverse_residual = float(np.max(np.abs(theta @ W - eye)))
        logger.warning("graphical lasso did not converge in %d sweeps at lambda=%g (p=%d)", cfg.max_outer, lam, p)
    return _solution(s, theta, W, lam, cfg, sweep, converged, inverse_residual, trace)


def solve_block(S, lam: float, cfg: Optional[SolverConfig] = None, warm: Optional[GlassoSolution] = None) -> GlassoSolution:
    """
    Solve the graphical lasso on one (sub)matrix.

    p = 1 and p = 2 are solved in closed form; larger blocks by row-wise
    sweeps started from W = S + lam*I, or from `warm` when its dimension
    matches and its W stays positive definite after resetting the diagonal.

    Raises:
        InputError: if lam < 0.
        InfeasibleError: if some S_ii + lam <= 0.
        NotPositiveDefiniteError: if W cannot be factorized.
    """
    cfg = cfg or SolverConfig()
    s = as_array(S)
    if lam < 0:
        raise InputError(f"lambda must be nonnegative, got {lam}")
    if np.any(s.diagonal() + lam <= 0):
        raise InfeasibleError(f"S_ii + lambda must be positive for every i (lambda={lam})")
    p = s.shape[0]
    if p == 1:
        return _solve_single(s, lam, cfg)
    if p == 2:
        sol = _solve_pair(s, lam, cfg)
        if sol.max_kkt_residual <= cfg.kkt_tol:
            return sol
        logger.warning("2 x 2 closed form failed its KKT check (%.3e); falling back to sweeps", sol.max_kkt_residual)
    return _solve_iterative(s, lam, cfg, warm)


def compile_kernels() -> None:
    """Solve a 3 x 3 problem once so that later timings exclude compilation."""
    solve_block(np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.3], [0.2, 0.3, 1.0]]), 0.1)


def solve_full(S, lam: float, cfg: Optional[SolverConfig] = None) -> GlassoSolution:
    """Solve on the whole matrix with no component splitting."""
    sol = solve_block(S, lam, cfg)
    logger.info("full solve at lambda=%g: %d sweeps, converged=%s", lam, sol.iterations, sol.converged)
    return sol
