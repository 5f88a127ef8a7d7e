"""
Exact covariance screening.

Threshold S at lam, split the nodes into the connected components of the
thresholded graph, solve one graphical lasso per component, and embed the
block solutions into a block-diagonal global estimate. Along a decreasing
lambda grid components only merge, so each solve warm-starts from the
previous estimate restricted to its block.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from covthresh import config
from covthresh.compgraph import (
    VertexPartition,
    lambda_for_max_component,
    partition_refines,
    threshold_partition,
)
from covthresh.covmodel import SymMatrix, as_array
from covthresh.exceptions import (
    DimensionMismatchError,
    InfeasibleError,
    InputError,
    NotPositiveDefiniteError,
)
from covthresh.glasso import GlassoSolution, compile_kernels, solve_block, solve_full
from covthresh.solver_config import SolverConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScreenedSolution:
    partition: VertexPartition
    block_solutions: Tuple[GlassoSolution, ...]
    assembled_theta: SymMatrix
    assembled_w: SymMatrix
    lam: float
    # seconds: 'partition', 'solve', 'assembly', and 'blocks' (one entry per block)
    timings: Dict[str, object] = field(default_factory=dict, compare=False)

    @property
    def failed_blocks(self) -> List[int]:
        return [k for k, sol in enumerate(self.block_solutions) if not sol.converged]

    @property
    def converged(self) -> bool:
        return not self.failed_blocks

    @property
    def objective(self) -> float:
        """Global objective: the block objectives add up under a block-diagonal Theta."""
        return float(sum(sol.objective for sol in self.block_solutions))

    @property
    def max_kkt_residual(self) -> float:
        return max(sol.max_kkt_residual for sol in self.block_solutions)

    def as_glasso_solution(self) -> GlassoSolution:
        return GlassoSolution(
            theta=self.assembled_theta,
            w=self.assembled_w,
            lam=self.lam,
            objective=self.objective,
            iterations=max(sol.iterations for sol in self.block_solutions),
            converged=self.converged,
            max_kkt_residual=self.max_kkt_residual,
            inverse_residual=max(sol.inverse_residual for sol in self.block_solutions),
        )

    def run_report(self, kkt_passed: Optional[bool] = None) -> dict:
        """Per-lambda report: component counts, objective, KKT flag, phase times in ms."""
        return {
            'lambda': self.lam,
            'num_components': self.partition.num_blocks,
            'max_component': self.partition.max_size(),
            'objective': self.objective,
            'kkt_passed': self.converged if kkt_passed is None else kkt_passed,
            'converged': self.converged,
            'failed_blocks': [[v + 1 for v in self.partition.blocks[k]] for k in self.failed_blocks],
            'errors': [self.block_solutions[k].error for k in self.failed_blocks if self.block_solutions[k].error],
            'time_partition_ms': 1000.0 * self.timings.get('partition', 0.0),
            'time_solve_ms': 1000.0 * self.timings.get('solve', 0.0),
        }


@dataclass(frozen=True)
class PathResult:
    lambdas: Tuple[float, ...]
    # aligned with lambdas; None where the whole lambda failed
    solutions: Tuple[Optional[ScreenedSolution], ...]
    partitions_nested: bool
    errors: Dict[float, str] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(sol is not None and sol.converged for sol in self.solutions)


def extract_block(S, block: Sequence[int]) -> SymMatrix:
    """Principal submatrix of S on `block`, rows/columns in ascending node order."""
    s = S if isinstance(S, SymMatrix) else SymMatrix(as_array(S), sym_tol=np.inf)
    nodes = sorted(int(v) for v in block)
    if not nodes:
        raise InputError("block must be nonempty")
    if nodes[0] < 0 or nodes[-1] >= s.p:
        raise InputError(f"block index outside [0, {s.p})")
    return s.submatrix(nodes)


def assemble(partition: VertexPartition, blocks: Sequence[GlassoSolution], p: int) -> Tuple[SymMatrix, SymMatrix]:
    """Embed per-block (Theta, W) into p x p matrices that are exactly zero across blocks."""
    if partition.p != p:
        raise DimensionMismatchError(f"partition covers {partition.p} nodes, expected {p}")
    if len(blocks) != partition.num_blocks:
        raise DimensionMismatchError(f"{len(blocks)} block solutions for {partition.num_blocks} blocks")
    theta = np.zeros((p, p))
    w = np.zeros((p, p))
    for nodes, sol in zip(partition.blocks, blocks):
        if sol.p != len(nodes):
            raise DimensionMismatchError(f"block of size {len(nodes)} got a {sol.p} x {sol.p} solution")
        ix = np.ix_(nodes, nodes)
        theta[ix] = sol.theta.values
        w[ix] = sol.w.values
    return SymMatrix(theta, sym_tol=np.inf), SymMatrix(w, sym_tol=np.inf)


def _restricted_warm(warm: Optional[ScreenedSolution], nodes: Tuple[int, ...]) -> Optional[GlassoSolution]:
    if warm is None or len(nodes) < 3:
        return None
    ix = np.ix_(nodes, nodes)
    # restricting the assembled estimate gives the block-diagonal union of the
    # old sub-solutions when blocks merged, or a sub-block when one split
    return GlassoSolution(
        theta=SymMatrix(warm.assembled_theta.values[ix], sym_tol=np.inf),
        w=SymMatrix(warm.assembled_w.values[ix], sym_tol=np.inf),
        lam=warm.lam,
        objective=float('nan'),
        iterations=0,
        converged=False,
        max_kkt_residual=float('nan'),
    )


def _failed_block(sub: SymMatrix, lam: float, message: str) -> GlassoSolution:
    # the cold-start diagonal estimate, so the other blocks still assemble
    w = sub.diagonal() + lam
    return GlassoSolution(
        theta=SymMatrix(np.diag(1.0 / w), sym_tol=np.inf),
        w=SymMatrix(np.diag(w), sym_tol=np.inf),
        lam=float(lam),
        objective=float('nan'),
        iterations=0,
        converged=False,
        max_kkt_residual=float('inf'),
        error=message,
    )


def _timed_block_solve(sub: SymMatrix, lam: float, cfg: SolverConfig,
                       warm: Optional[GlassoSolution]) -> Tuple[GlassoSolution, float]:
    start = time.perf_counter()
    try:
        sol = solve_block(sub, lam, cfg, warm)
    except NotPositiveDefiniteError as e:
        logger.warning("block of size %d aborted at lambda=%g: %s", sub.p, lam, e.message)
        sol = _failed_block(sub, lam, e.message)
    return sol, time.perf_counter() - start


def screen_solve(S, lam: float, cfg: Optional[SolverConfig] = None, warm: Optional[ScreenedSolution] = None,
                 n_jobs: Optional[int] = None) -> ScreenedSolution:
    """
    Solve the graphical lasso at lam one connected component at a time.

    Blocks are dispatched to a thread pool of `n_jobs` workers and gathered
    in canonical block order, so the result does not depend on scheduling.
    A block that fails to converge, or whose W loses positive definiteness,
    is reported in `failed_blocks` and leaves the others untouched.

    Raises:
        InfeasibleError: if some S_ii + lam <= 0.
    """
    cfg = cfg or SolverConfig()
    n_jobs = config.THREADS if n_jobs is None else n_jobs
    s = SymMatrix(S) if not isinstance(S, SymMatrix) else S
    if lam < 0:
        raise InputError(f"lambda must be nonnegative, got {lam}")
    if np.any(s.diagonal() + lam <= 0):
        raise InfeasibleError(f"S_ii + lambda must be positive for every i (lambda={lam})")
    if warm is not None and warm.partition.p != s.p:
        logger.warning("ignoring warm start over %d nodes for a problem over %d", warm.partition.p, s.p)
        warm = None

    start = time.perf_counter()
    partition = threshold_partition(s, lam)
    t_partition = time.perf_counter() - start
    logger.info("lambda=%g: %d components, largest %d (%.2f ms)",
                lam, partition.num_blocks, partition.max_size(), 1000 * t_partition)

    jobs = [(extract_block(s, nodes), _restricted_warm(warm, nodes)) for nodes in partition.blocks]
    start = time.perf_counter()
    if n_jobs == 1 or partition.num_blocks == 1:
        results = [_timed_block_solve(sub, lam, cfg, w0) for sub, w0 in jobs]
    else:
        results = Parallel(n_jobs=n_jobs, prefer='threads')(
            delayed(_timed_block_solve)(sub, lam, cfg, w0) for sub, w0 in jobs
        )
    t_solve = time.perf_counter() - start
    block_solutions = tuple(sol for sol, _ in results)

    start = time.perf_counter()
    theta, w = assemble(partition, block_solutions, s.p)
    t_assembly = time.perf_counter() - start

    result = ScreenedSolution(
        partition=partition,
        block_solutions=block_solutions,
        assembled_theta=theta,
        assembled_w=w,
        lam=float(lam),
        timings={
            'partition': t_partition,
            'solve': t_solve,
            'assembly': t_assembly,
            'blocks': [seconds for _, seconds in results],
        },
    )
    if not result.converged:
        logger.warning("lambda=%g: %d of %d blocks did not converge", lam, len(result.failed_blocks), partition.num_blocks)
    return result


def path_solve(S, lambdas: Sequence[float], cfg: Optional[SolverConfig] = None,
               n_jobs: Optional[int] = None) -> PathResult:
    """
    Screened solves over a lambda grid, from the largest value down.

    Each solve warm-starts from the last one that succeeded. Partitions must
    refine pairwise along the way; a violation is logged and recorded in
    `partitions_nested`. A lambda whose solve raises is recorded in `errors`
    with a None solution, and the rest of the grid still runs.
    """
    grid = sorted(set(float(lam) for lam in lambdas), reverse=True)
    if not grid:
        raise InputError("path_solve needs at least one lambda")
    s = SymMatrix(S) if not isinstance(S, SymMatrix) else S
    solutions = []
    nested = True
    previous = None
    errors = {}
    for lam in grid:
        try:
            current = screen_solve(s, lam, cfg, warm=previous, n_jobs=n_jobs)
        except (InfeasibleError, NotPositiveDefiniteError) as e:
            logger.error("lambda=%g failed: %s", lam, e.message)
            errors[lam] = e.message
            solutions.append(None)
            continue
        if previous is not None and not partition_refines(previous.partition, current.partition):
            logger.error("partition at lambda=%g does not refine the one at lambda=%g", previous.lam, lam)
            nested = False
        solutions.append(current)
        previous = current
    return PathResult(tuple(grid), tuple(solutions), nested, errors)


def size_guarded_lambda(S, p_max: int) -> float:
    """Smallest critical lambda whose components all have at most p_max nodes."""
    return lambda_for_max_component(S, p_max)


@dataclass(frozen=True)
class GridBenchmark:
    lambdas: Tuple[float, ...]
    time_screened: float
    time_full: float
    time_partition: float
    average_max_component: float
    max_objective_gap: float
    all_converged: bool

    @property
    def speedup_factor(self) -> float:
        return self.time_full / self.time_screened if self.time_screened > 0 else float('inf')

    def to_dict(self) -> dict:
        return {
            'lambdas': list(self.lambdas),
            'time_screened_s': self.time_screened,
            'time_full_s': self.time_full,
            'time_partition_s': self.time_partition,
            'speedup_factor': self.speedup_factor,
            'average_max_component': self.average_max_component,
            'max_relative_objective_gap': self.max_objective_gap,
            'all_converged': self.all_converged,
        }


def grid_benchmark(S, lambdas: Sequence[float], cfg: Optional[SolverConfig] = None,
                   n_jobs: Optional[int] = None) -> GridBenchmark:
    """Screened and unscreened solve times summed over a grid, with identical config."""
    cfg = cfg or SolverConfig()
    s = SymMatrix(S) if not isinstance(S, SymMatrix) else S
    grid = sorted(set(float(lam) for lam in lambdas), reverse=True)
    if not grid:
        raise InputError("grid_benchmark needs at least one lambda")
    compile_kernels()
    t_screened = t_full = t_partition = 0.0
    max_sizes = []
    gaps = []
    converged = True
    for lam in grid:
        start = time.perf_counter()
        screened = screen_solve(s, lam, cfg, n_jobs=n_jobs)
        t_screened += time.perf_counter() - start
        start = time.perf_counter()
        full = solve_full(s, lam, cfg)
        t_full += time.perf_counter() - start
        t_partition += screened.timings['partition']
        max_sizes.append(screened.partition.max_size())
        gaps.append(abs(screened.objective - full.objective) / (1.0 + abs(full.objective)))
        converged = converged and screened.converged and full.converged
    return GridBenchmark(
        lambdas=tuple(grid),
        time_screened=t_screened,
        time_full=t_full,
        time_partition=t_partition,
        average_max_component=float(np.mean(max_sizes)),
        max_objective_gap=float(max(gaps)),
        all_converged=converged,
    )
