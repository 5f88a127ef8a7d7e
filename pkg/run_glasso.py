import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from covthresh import config
from covthresh.compgraph import (
    auto_lambda_grid,
    component_profile,
    connected_components,
    lambda_for_max_component,
    support_graph,
    threshold_partition,
)
from covthresh.covmodel import sample_covariance, to_correlation
from covthresh.exceptions import (
    CovThreshError,
    CovThreshParserError,
    InfeasibleError,
    InputError,
    NotPositiveDefiniteError,
)
from covthresh.glasso import compile_kernels, kkt_check, solve_full
from covthresh.matrix_io import read_data_matrix, read_symmetric, write_matrix
from covthresh.report_schema import validate_report
from covthresh.run_report import RunReport
from covthresh.screen import grid_benchmark, path_solve, screen_solve
from covthresh.solver_config import SolverConfig
from covthresh.synth import SynthSpec, generate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 3


def parse_lambda_grid(text):
    """
    Parse a comma separated list of lambdas.

    Returns:
        list[float]: the values in the order given, or None for 'auto'.

    Raises:
        CovThreshParserError: on an empty list, a non-number or a negative value.
    """
    if text is None or text.strip().lower() == 'auto':
        return None
    try:
        grid = [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise CovThreshParserError(f"--lambda-grid must be a comma separated list of numbers, got {text!r}")
    if not grid:
        raise CovThreshParserError("--lambda-grid is empty")
    if any(lam < 0 for lam in grid):
        raise CovThreshParserError("lambda values must be nonnegative")
    return grid


def solver_config_from_args(args) -> SolverConfig:
    overrides = {
        'kkt_tol': args.kkt_tol,
        'conv_tol': args.conv_tol,
        'support_tol': args.support_tol,
        'max_outer': args.max_iter,
    }
    return SolverConfig(**{k: v for k, v in overrides.items() if v is not None})


def load_covariance(args):
    """S from --matrix, or the sample covariance of --data; rescaled with --correlation."""
    if args.matrix and args.data:
        raise CovThreshParserError("pass only one of --matrix and --data")
    if args.matrix:
        S = read_symmetric(args.matrix, header=args.header)
    elif args.data:
        X = read_data_matrix(args.data, header=args.header, impute_mean=args.impute_mean)
        S = sample_covariance(X, center=not args.no_center)
        logger.info("sample covariance of %d x %d data", X.n, X.p)
    else:
        raise CovThreshParserError("You must pass a covariance matrix with --matrix or data with --data")
    if args.correlation:
        S = to_correlation(S)
    return S


def lambdas_from_args(args, required=True):
    if args.lam is not None and args.lambda_grid is not None:
        raise CovThreshParserError("pass only one of --lambda and --lambda-grid")
    if args.lam is not None:
        if args.lam < 0:
            raise CovThreshParserError("lambda values must be nonnegative")
        return [args.lam]
    grid = parse_lambda_grid(args.lambda_grid)
    if grid is None and required:
        raise CovThreshParserError("You must pass --lambda or --lambda-grid")
    return grid


def _full_run_report(S, sol, cfg, seconds):
    partition = connected_components(support_graph(sol.theta, cfg.support_tol))
    return {
        **sol.summary(),
        'num_components': partition.num_blocks,
        'max_component': partition.max_size(),
        'kkt_passed': kkt_check(S, sol, cfg).passed,
        'time_partition_ms': 0.0,
        'time_solve_ms': 1000.0 * seconds,
    }


def _failed_run(lam, message):
    return {'lambda': lam, 'converged': False, 'kkt_passed': False, 'error': message}


def _numbered(path: Path, k: int, count: int) -> Path:
    if count == 1:
        return path
    return path.with_name(f"{path.stem}_{k + 1}{path.suffix}")


def cmd_partition(args, report):
    S = load_covariance(args)
    if args.lam is None:
        raise CovThreshParserError("partition needs --lambda")
    partition = threshold_partition(S, args.lam)
    report.metrics = {'lambda': args.lam, **partition.to_dict()}
    if args.out:
        labels = partition.labels() + 1
        table = np.column_stack((np.arange(1, S.p + 1), labels))
        np.savetxt(args.out, table, delimiter=',', fmt='%d', header='node,component', comments='')
        report.add_output(args.out)
    return EXIT_OK


def cmd_profile(args, report):
    S = load_covariance(args)
    p_max = args.p_max if args.p_max is not None else S.p
    lam_p_max = lambda_for_max_component(S, p_max)
    grid = lambdas_from_args(args, required=False)
    if grid is None:
        grid = auto_lambda_grid(S, p_max, top_fraction=args.top_fraction, num=args.num_lambdas)
    profile = component_profile(S, grid)
    report.metrics = {**profile.to_dict(), 'lambda_p_max': lam_p_max, 'p_max': p_max}
    if args.out:
        with open(args.out, 'w') as f:
            f.write("lambda,num_components,max_component\n")
            for lam, sizes in zip(profile.lambdas, profile.sizes_per_lambda):
                f.write(f"{lam!r},{len(sizes)},{sizes[0]}\n")
        report.add_output(args.out)
    return EXIT_OK


def cmd_solve(args, report):
    S = load_covariance(args)
    cfg = solver_config_from_args(args)
    lambdas = lambdas_from_args(args)
    runs = []
    estimates = []
    for lam in lambdas:
        if args.screen:
            sol = screen_solve(S, lam, cfg, n_jobs=args.threads)
            glasso_sol = sol.as_glasso_solution()
            runs.append(sol.run_report(kkt_passed=kkt_check(S, glasso_sol, cfg).passed))
            estimates.append(glasso_sol.theta)
            continue
        start = time.perf_counter()
        try:
            sol = solve_full(S, lam, cfg)
        except NotPositiveDefiniteError as e:
            logger.error("lambda=%g aborted: %s", lam, e.message)
            runs.append(_failed_run(lam, e.message))
            estimates.append(None)
            continue
        runs.append(_full_run_report(S, sol, cfg, time.perf_counter() - start))
        estimates.append(sol.theta)
    report.metrics = {'screened': args.screen, 'solver_config': dict(cfg), 'runs': runs}
    if args.out:
        for k, theta in enumerate(estimates):
            if theta is None:
                continue
            path = _numbered(Path(args.out), k, len(estimates))
            write_matrix(path, theta, args.format)
            report.add_output(path)
    return EXIT_OK if all(run['converged'] for run in runs) else EXIT_NOT_CONVERGED


def cmd_path(args, report):
    S = load_covariance(args)
    cfg = solver_config_from_args(args)
    lambdas = lambdas_from_args(args, required=False)
    if lambdas is None:
        p_max = args.p_max if args.p_max is not None else S.p
        lambdas = auto_lambda_grid(S, p_max, top_fraction=args.top_fraction, num=args.num_lambdas)
    result = path_solve(S, lambdas, cfg, n_jobs=args.threads)
    runs = []
    for k, (lam, sol) in enumerate(zip(result.lambdas, result.solutions)):
        if sol is None:
            runs.append(_failed_run(lam, result.errors[lam]))
            continue
        runs.append(sol.run_report(kkt_passed=kkt_check(S, sol.as_glasso_solution(), cfg).passed))
        if args.out:
            path = _numbered(Path(args.out), k, len(result.lambdas))
            write_matrix(path, sol.assembled_theta, args.format)
            report.add_output(path)
    report.metrics = {'partitions_nested': result.partitions_nested, 'solver_config': dict(cfg), 'runs': runs}
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _synth_spec(args) -> SynthSpec:
    if args.K is None or args.p1 is None:
        raise CovThreshParserError("You must pass --K and --p1")
    return SynthSpec(K=args.K, p1=args.p1, seed=args.seed)


def cmd_synth(args, report):
    spec = _synth_spec(args)
    instance = generate(spec)
    report.metrics = {'K': spec.K, 'p1': spec.p1, 'seed': spec.seed, **instance.to_dict()}
    if args.out:
        out = Path(args.out)
        write_matrix(out, instance.S, 'csv')
        sidecar = out.with_suffix('.json')
        sidecar.write_text(json.dumps(instance.to_dict(), indent=2))
        report.add_output(out)
        report.add_output(sidecar)
    return EXIT_OK


def cmd_bench(args, report):
    spec = _synth_spec(args)
    instance = generate(spec)
    cfg = solver_config_from_args(args)
    lam = instance.lambda_I if args.lambda_mode == 'I' else instance.lambda_II
    compile_kernels()

    start = time.perf_counter()
    screened = screen_solve(instance.S, lam, cfg, n_jobs=args.threads)
    t_screened = time.perf_counter() - start
    start = time.perf_counter()
    full = solve_full(instance.S, lam, cfg)
    t_full = time.perf_counter() - start

    report.metrics = {
        'lambda': lam,
        'lambda_mode': args.lambda_mode,
        'seed_used': instance.seed_used,
        'num_components': screened.partition.num_blocks,
        'time_screened_s': t_screened,
        'time_full_s': t_full,
        'time_partition_s': screened.timings['partition'],
        'partition_share': screened.timings['partition'] / t_screened if t_screened > 0 else 0.0,
        'speedup_factor': t_full / t_screened if t_screened > 0 else float('inf'),
        'objective_screened': screened.objective,
        'objective_full': full.objective,
        'objective_gap': abs(screened.objective - full.objective) / (1.0 + abs(full.objective)),
        'converged': screened.converged and full.converged,
        'solver_config': dict(cfg),
    }
    if args.grid:
        grid = np.linspace(instance.lambda_min, instance.lambda_max, args.grid).tolist()
        report.metrics['grid'] = grid_benchmark(instance.S, grid, cfg, n_jobs=args.threads).to_dict()
    if not report.metrics['converged']:
        logger.warning("bench: a solve did not converge; timings are still reported")
    return EXIT_OK


COMMANDS = {
    'partition': cmd_partition,
    'profile': cmd_profile,
    'solve': cmd_solve,
    'path': cmd_path,
    'synth': cmd_synth,
    'bench': cmd_bench,
}


def main(args):
    """
    Run one command and emit its report.

    Returns:
        int: the process exit code, 0 or 3 (a solve did not converge).

    Raises:
        CovThreshParserError: for anything the user has to fix on the command line or in the input files.
    """
    report = RunReport(command=args.command, inputs={k: v for k, v in vars(args).items() if k != 'command'})
    try:
        code = COMMANDS[args.command](args, report)
        if args.report:
            report.add_output(args.report)
        validate_report(report.to_dict())
    except (InputError, InfeasibleError) as e:
        raise CovThreshParserError(e.message)
    except NotPositiveDefiniteError as e:
        logger.error("solve aborted: %s", e.message)
        return EXIT_NOT_CONVERGED
    except CovThreshParserError:
        raise
    except CovThreshError as e:
        raise CovThreshParserError(e.message)

    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text)
    print(text)
    return code


def _add_input_args(parser):
    parser.add_argument('--matrix', type=str, help='CSV file holding a symmetric p x p matrix S.')
    parser.add_argument('--data', type=str, help='CSV file holding an n x p data matrix; S is its sample covariance.')
    parser.add_argument('--header', action='store_true', help='Skip the first line of the input file.')
    parser.add_argument('--correlation', action='store_true', help='Rescale S to a correlation matrix first.')
    parser.add_argument('--impute-mean', action='store_true',
                        help='Replace missing data values by their column mean instead of failing.')
    parser.add_argument('--no-center', action='store_true', help='Do not subtract column means from --data.')


def _add_lambda_args(parser):
    parser.add_argument('--lambda', dest='lam', type=float, help='Penalty value.')
    parser.add_argument('--lambda-grid', type=str,
                        help="Comma separated penalty values, e.g. 0.5,0.3,0.1, or 'auto'.")


def _add_grid_args(parser):
    parser.add_argument('--p-max', type=int, help='Largest allowed component size. Defaults to p.')
    parser.add_argument('--top-fraction', type=float, default=0.02,
                        help='Share of the largest critical values the auto grid draws from. Defaults to 0.02.')
    parser.add_argument('--num-lambdas', type=int, help='Thin the auto grid to this many values.')


def _add_solver_args(parser):
    parser.add_argument('--kkt-tol', type=float, help=f'KKT tolerance. Defaults to {config.KKT_TOL}.')
    parser.add_argument('--conv-tol', type=float, help=f'Relative change tolerance. Defaults to {config.CONV_TOL}.')
    parser.add_argument('--support-tol', type=float,
                        help=f'Entries of Theta at or below this are treated as zero. Defaults to {config.SUPPORT_TOL}.')
    parser.add_argument('--max-iter', type=int, help=f'Outer sweep cap. Defaults to {config.MAX_OUTER}.')
    parser.add_argument('--threads', type=int, default=config.THREADS,
                        help=f'Workers for independent block solves. Defaults to {config.THREADS}.')


def _add_synth_args(parser):
    parser.add_argument('--K', type=int, help='Number of planted blocks.')
    parser.add_argument('--p1', type=int, help='Nodes per planted block.')
    parser.add_argument('--seed', type=int, default=0, help='Random seed. Defaults to 0.')


def build_parser():
    parser = argparse.ArgumentParser(description='Graphical lasso with exact covariance thresholding.')
    parser.add_argument('--report', type=str, help='Also write the JSON report to this file.')
    parser.add_argument('--verbose', action='store_true', help='Log at DEBUG level.')
    commands = parser.add_subparsers(dest='command', required=True)

    partition = commands.add_parser('partition', help='Connected components of the thresholded covariance graph.')
    _add_input_args(partition)
    _add_lambda_args(partition)
    partition.add_argument('--out', type=str, help='Write node,component labels (1-based) to this CSV.')

    profile = commands.add_parser('profile', help='Component sizes over a lambda grid.')
    _add_input_args(profile)
    _add_lambda_args(profile)
    _add_grid_args(profile)
    profile.add_argument('--out', type=str, help='Write lambda,num_components,max_component rows to this CSV.')

    solve = commands.add_parser('solve', help='Solve the graphical lasso at one or more lambdas.')
    _add_input_args(solve)
    _add_lambda_args(solve)
    _add_solver_args(solve)
    solve.add_argument('--screen', action='store_true', help='Split into connected components before solving.')

    path = commands.add_parser('path', help='Screened solves over a decreasing lambda grid with warm starts.')
    _add_input_args(path)
    _add_lambda_args(path)
    _add_grid_args(path)
    _add_solver_args(path)

    for sub in (solve, path):
        sub.add_argument('--out', type=str, help='Write Theta here; numbered when there are several lambdas.')
        sub.add_argument('--format', choices=('csv', 'triplet'), default='csv',
                         help='Output format for Theta. Defaults to csv.')

    synth = commands.add_parser('synth', help='Generate a block-diagonal synthetic S.')
    _add_synth_args(synth)
    synth.add_argument('--out', type=str, help='Write S to this CSV and the lambda sidecar next to it.')

    bench = commands.add_parser('bench', help='Time screened against unscreened solves on a synthetic S.')
    _add_synth_args(bench)
    _add_solver_args(bench)
    bench.add_argument('--lambda-mode', choices=('I', 'II'), default='II',
                       help='Midpoint (I) or top (II) of the planted lambda interval. Defaults to II.')
    bench.add_argument('--grid', type=int, help='Also benchmark this many lambdas across the planted interval.')
    return parser


def cli():
    parser = build_parser()
    args = parser.parse_args()
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else config.LOG_LEVEL,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    try:
        sys.exit(main(args))
    except CovThreshParserError as e:
        parser.error(str(e))


if __name__ == "__main__":
    cli()
