"""Command-line interface: simulate | optimize | validate | sweep.

Exit codes: 0 success, 2 at least one case infeasible, 3 configuration
error, 4 numerical failure.  All CSV outputs are byte-reproducible for a
fixed config and seed; JSON reports additionally carry timing and the config
hash they came from.
"""
from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import report
from .errors import ConfigError
from .kalman import batch_posterior_stats, optimal_reduced_gain
from .precision_opt import (PrecisionSchedule, ScheduleStatus, reweighted_solve,
                            sparsity_report)
from .scenario import (BatchContext, ScenarioConfig, build_context, initial_state,
                       build_agents, load_scenario, problem_for,
                       propagate_scenario_nominal, with_overrides)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4


def _smax_tag(value: float) -> str:
    return f"{value:g}"


def _channel_labels(m_y: int) -> list[str]:
    return [f"y{j + 1}" for j in range(m_y)]


def _solve_case(context: BatchContext, s_max_value: float) -> tuple[PrecisionSchedule, float]:
    config = context.config
    problem = problem_for(context, s_max_value)
    t0 = time.perf_counter()
    sched = reweighted_solve(
        problem,
        epsilon=config.reweight_epsilon_scale * float(np.max(problem.s_max_flat, initial=1.0)),
        max_iters=config.reweight_max_iters,
        active_threshold=config.active_threshold,
        gap_tol=config.gap_tol, feas_tol=config.feas_tol)
    return sched, time.perf_counter() - t0


def _case_payload(context: BatchContext, s_max_value: float,
                  sched: PrecisionSchedule, seconds: float, files: dict) -> dict:
    payload = {
        "s_max": s_max_value,
        "status": sched.status.value,
        "reweight_iterations": sched.reweight_iterations,
        "solve_seconds": round(seconds, 3),
        "files": files,
    }
    if sched.status is ScheduleStatus.OPTIMAL:
        rep = sparsity_report(problem_for(context, s_max_value), sched,
                              context.config.active_threshold)
        payload.update({
            "objective": sched.objective,
            "active_count": rep.active_count,
            "history": [[obj, cnt] for obj, cnt in sched.history],
            "certificate_trace": float(np.trace(sched.certificate)),
            "verified_trace": rep.verified_trace,
            "threshold": rep.threshold,
            "step_active_counts": list(rep.step_counts),
        })
    else:
        payload["message"] = sched.message
    return payload


def cmd_simulate(config: ScenarioConfig, out: Path) -> int:
    """Write the nominal trajectory and open-loop mean/covariance envelopes."""
    from .discretization import propagate_mean_cov
    from .scenario import build_noise

    agents = build_agents(config)
    nominal = propagate_scenario_nominal(config, agents)
    noise = build_noise(config, agents)
    series = propagate_mean_cov(initial_state(config, agents), nominal, noise,
                                nominal.times[-1])

    n = agents.n
    state_labels = []
    for i in range(len(agents.agents)):
        state_labels += [f"x{i + 1}", f"z{i + 1}"]
    report.write_csv(out / "nominal_trajectory.csv", ["t"] + state_labels,
                     ([t] + list(row) for t, row in zip(nominal.times, nominal.states)))
    header = ["t"] + [f"mean_{lab}" for lab in state_labels] + \
        [f"sigma_{lab}" for lab in state_labels]
    sigmas = np.sqrt(np.maximum(series.covs[:, range(n), range(n)], 0.0))
    report.write_csv(out / "mean_cov.csv", header,
                     ([t] + list(m) + list(s)
                      for t, m, s in zip(series.times, series.means, sigmas)))

    report.svg_trajectories(out / "trajectory.svg", nominal.states, config.stations,
                            "Nominal trajectories and tracking stations")
    means = {state_labels[i]: series.means[:, i] for i in range(n)}
    bands = {state_labels[i]: (series.means[:, i] - sigmas[:, i],
                               series.means[:, i] + sigmas[:, i]) for i in range(n)}
    report.svg_lines(out / "envelopes.svg", series.times, means,
                     "Perturbation mean and 1-sigma envelopes", xlabel="t",
                     ylabel="state", bands=bands)
    report.write_json(out / "simulate.json", {
        "command": "simulate",
        "config_hash": config.config_hash(),
        "final_prior_trace": float(np.trace(series.covs[-1])),
        "files": ["nominal_trajectory.csv", "mean_cov.csv", "trajectory.svg",
                  "envelopes.svg"],
    })
    return EXIT_OK


def cmd_optimize(config: ScenarioConfig, out: Path) -> int:
    """Solve the reweighted schedule per s_max case; write grids, heatmaps, report."""
    nominal = propagate_scenario_nominal(config)
    first_context = build_context(config, nominal)
    labels = _channel_labels(config.num_channels)
    t_start = time.perf_counter()
    horizons_payload = []
    exit_code = EXIT_OK

    for case in config.s_max:
        context = first_context
        posterior = None
        for h in range(config.horizons):
            if h > 0:
                context = build_context(config, nominal, posterior, horizon_index=h)
            sched, seconds = _solve_case(context, case)
            tag = _smax_tag(case) if config.horizons == 1 else f"h{h + 1}_{_smax_tag(case)}"
            files = {}
            if sched.status is ScheduleStatus.OPTIMAL:
                rep = sparsity_report(problem_for(context, case), sched,
                                      config.active_threshold)
                grid_path = out / f"precisions_smax{tag}.csv"
                report.write_csv(grid_path, ["step"] + labels,
                                 ([k + 1] + list(row) for k, row in enumerate(rep.grid)))
                heat_path = out / f"heatmap_smax{tag}.svg"
                report.svg_heatmap(heat_path, rep.grid.T, case,
                                   f"Sensing precisions, s_max = {_smax_tag(case)}",
                                   labels, [str(k + 1) for k in range(sched.horizon)])
                files = {"grid": grid_path.name, "heatmap": heat_path.name}
                gain = optimal_reduced_gain(context.batch, rep.grid.ravel())
                posterior = batch_posterior_stats(context.batch, gain, rep.grid.ravel())
            else:
                exit_code = max(exit_code,
                                EXIT_INFEASIBLE if sched.status is ScheduleStatus.INFEASIBLE
                                else EXIT_NUMERICAL)
            horizons_payload.append(
                dict(_case_payload(context, case, sched, seconds, files),
                     horizon=h + 1, gamma=context.gamma,
                     prior_trace=context.prior_trace))
            if sched.status is not ScheduleStatus.OPTIMAL:
                break  # cannot chain past a failed horizon

    report.write_json(out / "optimize.json", {
        "command": "optimize",
        "config_hash": config.config_hash(),
        "gamma": first_context.gamma,
        "prior_trace": first_context.prior_trace,
        "cases": horizons_payload,
        "timing_seconds": round(time.perf_counter() - t_start, 3),
    })
    return exit_code


def _load_schedule_grid(path: Path, p: int, m_y: int) -> np.ndarray:
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    rows = [line.split(",") for line in lines[1:]]
    if len(rows) != p or any(len(r) != m_y + 1 for r in rows):
        raise ConfigError(f"schedule file {path} is not a {p} x {m_y} precision grid")
    return np.array([[float(v) for v in r[1:]] for r in rows])


def cmd_validate(config: ScenarioConfig, out: Path, trials: int,
                 schedule_path: Path | None) -> int:
    """Monte-Carlo check of the trace guarantee with the recomputed optimal gain."""
    if len(config.s_max) != 1:
        raise ConfigError("validate needs exactly one s_max case (use --s-max)")
    case = config.s_max[0]
    context = build_context(config)
    batch = context.batch
    p, m_y = config.horizon_steps, config.num_channels

    if schedule_path is not None:
        grid = _load_schedule_grid(schedule_path, p, m_y)
        solve_seconds = 0.0
        sched = None
    else:
        sched, solve_seconds = _solve_case(context, case)
        if sched.status is not ScheduleStatus.OPTIMAL:
            report.write_json(out / "validation.json", {
                "command": "validate", "config_hash": config.config_hash(),
                "s_max": case, "status": sched.status.value, "message": sched.message,
            })
            return EXIT_INFEASIBLE if sched.status is ScheduleStatus.INFEASIBLE \
                else EXIT_NUMERICAL
        grid = sparsity_report(problem_for(context, case), sched,
                               config.active_threshold).grid

    s_flat = grid.ravel()
    gain = optimal_reduced_gain(batch, s_flat)
    analytic = float(np.trace(batch_posterior_stats(batch, gain, s_flat).cov))

    payload = {
        "command": "validate",
        "config_hash": config.config_hash(),
        "s_max": case,
        "status": "optimal",
        "gamma": context.gamma,
        "analytic_trace": analytic,
        "trials": trials,
        "seed": config.seed,
        "solve_seconds": round(solve_seconds, 3),
    }
    if trials > 0:
        emp_trace, se, sq = _monte_carlo(context, gain, s_flat, trials, config.seed)
        payload.update({
            "empirical_trace": emp_trace,
            "standard_error": se,
            "within_three_se_of_gamma": bool(emp_trace <= context.gamma + 3 * se),
            "within_three_se_of_analytic": bool(abs(emp_trace - analytic) <= 3 * se),
        })
        report.write_csv(out / "validation.csv", ["trial", "squared_error"],
                         ([i, v] for i, v in enumerate(sq)))
    report.write_json(out / "validation.json", payload)
    return EXIT_OK


def _sqrt_factor(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(mat)
    return v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))


def _monte_carlo(context: BatchContext, gain: np.ndarray, s_flat: np.ndarray,
                 trials: int, seed: int) -> tuple[float, float, np.ndarray]:
    """Simulate noisy truths and measurements; filter with the given gain.

    Returns (empirical posterior trace, its standard error, per-trial squared
    errors).  Deterministic for a fixed seed.
    """
    config = context.config
    batch = context.batch
    agents = build_agents(config)
    init = initial_state(config, agents)
    n = agents.n
    p, m_y = config.horizon_steps, config.num_channels
    rng = np.random.default_rng(seed)

    x = init.mean + rng.standard_normal((trials, n)) @ _sqrt_factor(init.cov).T
    from .scenario import build_noise
    from .discretization import build_discrete_system
    system = build_discrete_system(context.nominal, build_noise(config, agents),
                                   context.sample_times, init)

    y_bar = np.zeros((trials, m_y * p))
    for k in range(p):
        noise_factor = _sqrt_factor(system.noise_covs[k])
        x = x @ system.transitions[k].T + rng.standard_normal((trials, n)) @ noise_factor.T
        c_k = context.meas_jacobians[k]
        s_k = s_flat[k * m_y:(k + 1) * m_y]
        block = x @ c_k.T
        active = s_k > 0
        if active.any():
            sd = np.zeros(m_y)
            sd[active] = 1.0 / np.sqrt(s_k[active])
            block = block + rng.standard_normal((trials, m_y)) * sd
        block[:, ~active] = 0.0
        y_bar[:, k * m_y:(k + 1) * m_y] = block

    mean_final = batch.mask @ batch.prior_mean
    mean_meas = batch.c_bar @ batch.prior_mean
    estimates = mean_final + (y_bar - mean_meas) @ gain.T
    errors = estimates - x
    centered = errors - errors.mean(axis=0)
    sq = (centered ** 2).sum(axis=1)
    emp_trace = float(sq.sum() / (trials - 1)) if trials > 1 else float(sq.sum())
    se = float(np.std(sq, ddof=1) / np.sqrt(trials)) if trials > 1 else float("inf")
    return emp_trace, se, sq


def cmd_sweep(config: ScenarioConfig, out: Path) -> int:
    """Compare schedules across s_max cases; parallel solves, ordered output."""
    if len(config.s_max) < 2:
        raise ConfigError("sweep needs at least two s_max values")
    context = build_context(config)
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=min(4, len(config.s_max))) as pool:
        results = list(pool.map(lambda c: _solve_case(context, c), config.s_max))

    rows, payload_cases = [], []
    exit_code = EXIT_OK
    for case, (sched, seconds) in zip(config.s_max, results):
        feasible = sched.status is ScheduleStatus.OPTIMAL
        if feasible:
            rep = sparsity_report(problem_for(context, case), sched,
                                  config.active_threshold)
            rows.append([case, "yes", sched.objective, rep.active_count,
                         rep.verified_trace])
        else:
            rows.append([case, "no", float("nan"), 0, float("nan")])
            exit_code = max(exit_code,
                            EXIT_INFEASIBLE if sched.status is ScheduleStatus.INFEASIBLE
                            else EXIT_NUMERICAL)
        payload_cases.append(_case_payload(context, case, sched, seconds, {}))

    report.write_csv(out / "sweep.csv",
                     ["s_max", "feasible", "objective", "active_count",
                      "verified_trace"], rows)
    report.svg_bars(out / "sweep.svg", [_smax_tag(c) for c in config.s_max],
                    [r[3] for r in rows], "Active channels vs s_max",
                    ylabel="active channels")
    report.write_json(out / "sweep.json", {
        "command": "sweep",
        "config_hash": config.config_hash(),
        "gamma": context.gamma,
        "cases": payload_cases,
        "timing_seconds": round(time.perf_counter() - t0, 3),
    })
    return exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparse-sensing",
        description="Sparse minimum-precision sensor schedules for multi-agent "
                    "tracking (batch Kalman + reweighted l1 SDP).")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (("simulate", "nominal trajectory and open-loop statistics"),
                      ("optimize", "solve precision schedules per s_max case"),
                      ("validate", "Monte-Carlo check of an optimal schedule"),
                      ("sweep", "compare schedules across s_max cases")):
        sp = sub.add_parser(name, help=doc)
        sp.add_argument("--config", required=True, help="scenario config file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--s-max", default=None,
                        help="override s_max cases, comma/space separated")
        sp.add_argument("--gap-tol", type=float, default=None)
        sp.add_argument("--feas-tol", type=float, default=None)
        if name == "validate":
            sp.add_argument("--trials", type=int, default=2000)
            sp.add_argument("--schedule", default=None,
                            help="precision grid CSV from a previous optimize run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_scenario(args.config)
        s_max = None
        if args.s_max is not None:
            s_max = [float(v) for v in args.s_max.replace(",", " ").split()]
        config = with_overrides(config, s_max=s_max, seed=args.seed,
                                gap_tol=args.gap_tol, feas_tol=args.feas_tol)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(config, out)
        if args.command == "optimize":
            return cmd_optimize(config, out)
        if args.command == "validate":
            schedule = Path(args.schedule) if args.schedule else None
            return cmd_validate(config, out, args.trials, schedule)
        return cmd_sweep(config, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
