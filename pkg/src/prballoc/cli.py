"""Batch experiment runner: scenario generation, risk scoring, solving, and
the before/after, alpha-sweep and scalability experiment suites."""

import argparse
import csv
import hashlib
import json
import logging
import os
import statistics
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import allocator_exact as exact
from . import allocator_heuristic as heur
from . import channel, lp_export, medrecords, metrics, risk
from .errors import DataError, InfeasibleError, PrballocError, UsageError

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (50.0, 100.0, 150.0, 250.0, 500.0)

# Stroke posteriors reported for the three outpatients in the reference
# experiments; used when no medical records are wired in.
REFERENCE_OP_PS = {8: 0.0032, 9: 0.0064, 10: 0.00208}

# Standard LTE PRB counts per bandwidth; the baseline scenario keeps 5 PRBs
# at 1.4 MHz, the scalability suite uses the standard counts.
SCALABILITY_CASES = ((1.4, 6), (3.0, 15), (5.0, 25), (10.0, 50), (15.0, 75), (20.0, 100))


@dataclass
class ExperimentSpec:
    kind: str  # single_solve | alpha_sweep | before_after | scalability
    output_dir: str
    scenario_path: str | None = None
    records_path: str | None = None
    objective: str = "wsrmax"
    alphas: tuple = DEFAULT_ALPHAS
    alpha: float = 500.0
    realizations: int = 100
    iterations: int = 1000
    seed: int = 0
    export_lp: bool = False
    runs: int = 3

    def __post_init__(self):
        if self.kind == "alpha_sweep" and not self.alphas:
            raise UsageError("alpha sweep needs a non-empty alpha list")


def write_text_atomic(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _load_scenario(spec):
    if spec.scenario_path:
        with open(spec.scenario_path, encoding="utf-8") as fh:
            return channel.scenario_from_json(fh.read())
    config = channel.ScenarioConfig(seed=spec.seed)
    scenario, _ = channel.generate_scenario(config, op_ps=REFERENCE_OP_PS)
    return scenario


def _power_maps(scenario, count):
    return [channel.generate_power_map(scenario, realization=i) for i in range(count)]


def _file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _write_realizations(scenario, power_maps, outdir):
    hashes = []
    for i, pm in enumerate(power_maps):
        path = os.path.join(outdir, f"power_map_{i:03d}.csv")
        channel.write_power_map_csv(pm, path)
        hashes.append(_file_sha256(path))
    return hashes


def _echo_config(spec, outdir, extra=None):
    payload = {k: getattr(spec, k) for k in spec.__dataclass_fields__}
    payload["alphas"] = list(spec.alphas)
    if extra:
        payload.update(extra)
    write_text_atomic(
        os.path.join(outdir, "config_echo.json"), json.dumps(payload, indent=2, sort_keys=True)
    )


def _mean(values):
    return sum(values) / len(values)


def run_single_solve(spec):
    os.makedirs(spec.output_dir, exist_ok=True)
    scenario = _load_scenario(spec)
    pm = channel.generate_power_map(scenario, realization=0)
    for prioritization, tag in ((False, "before"), (True, "after")):
        config = exact.SolverConfig(
            objective=spec.objective,
            prioritization=prioritization,
            alpha=spec.alpha,
            pf_log_mode="exact_log",
        )
        assignment, report = exact.solve_exact(scenario, pm, config)
        exact.write_result_csv(
            assignment, report, os.path.join(spec.output_dir, f"solve_{tag}.csv")
        )
        if spec.export_lp and prioritization:
            lp_config = config
            if spec.objective == "pf":
                lp_config = exact.SolverConfig(
                    objective="pf",
                    prioritization=True,
                    alpha=spec.alpha,
                    pf_log_mode="piecewise",
                    pwl=exact.PwlSpec.default(),
                )
            write_text_atomic(
                os.path.join(spec.output_dir, "model.lp"),
                lp_export.export_milp(scenario, pm, lp_config),
            )
    _echo_config(spec, spec.output_dir)
    return spec.output_dir


@dataclass
class BeforeAfterResult:
    exact_before: list  # per realization: dict user -> SINR
    exact_after: list
    heuristic_before: list  # per realization: dict user -> mean SINR
    heuristic_after: list
    op_ids: tuple
    user_ids: tuple

    def op_improvement_pct(self, before, after):
        b = _mean([_mean([r[k] for k in self.op_ids]) for r in before])
        a = _mean([_mean([r[k] for k in self.op_ids]) for r in after])
        return metrics.improvement_pct(b, a)

    def system_change_pct(self, before, after):
        b = _mean([_mean(list(r.values())) for r in before])
        a = _mean([_mean(list(r.values())) for r in after])
        return metrics.improvement_pct(b, a)


def run_before_after(spec, scenario=None, power_maps=None):
    """Paired before/after prioritization runs on identical realizations."""
    os.makedirs(spec.output_dir, exist_ok=True)
    if scenario is None:
        scenario = _load_scenario(spec)
    if power_maps is None:
        power_maps = _power_maps(scenario, spec.realizations)
    hashes = _write_realizations(scenario, power_maps, spec.output_dir)
    write_text_atomic(
        os.path.join(spec.output_dir, "scenario.json"), channel.scenario_to_json(scenario)
    )
    result = BeforeAfterResult(
        exact_before=[],
        exact_after=[],
        heuristic_before=[],
        heuristic_after=[],
        op_ids=scenario.config.op_ids,
        user_ids=scenario.config.user_ids,
    )
    for prioritization, bucket in ((False, result.exact_before), (True, result.exact_after)):
        config = exact.SolverConfig(
            objective=spec.objective, prioritization=prioritization, alpha=spec.alpha
        )
        for pm in power_maps:
            _, report = exact.solve_exact(scenario, pm, config)
            bucket.append(report.sinr)
    for prioritization, bucket, tag in (
        (False, result.heuristic_before, "before"),
        (True, result.heuristic_after, "after"),
    ):
        config = heur.HeuristicConfig(
            iterations=spec.iterations,
            prioritization=prioritization,
            alpha=spec.alpha,
            seed=spec.seed,
        )
        report = heur.run_heuristic(scenario, power_maps, config)
        bucket.extend(report.per_file_means)
        heur.write_heuristic_csv(
            report, os.path.join(spec.output_dir, f"heuristic_{tag}.csv")
        )
    for tag, runs in (("before", result.exact_before), ("after", result.exact_after)):
        rows = [
            (f"user_{k}", "exact", metrics.summarize([r[k] for r in runs]))
            for k in result.user_ids
        ]
        metrics.write_summary_csv(rows, os.path.join(spec.output_dir, f"exact_{tag}.csv"))
    summary = [
        ["op_improvement_exact_pct", repr(result.op_improvement_pct(result.exact_before, result.exact_after))],
        ["op_improvement_heuristic_pct", repr(result.op_improvement_pct(result.heuristic_before, result.heuristic_after))],
        ["system_change_exact_pct", repr(result.system_change_pct(result.exact_before, result.exact_after))],
        ["system_change_heuristic_pct", repr(result.system_change_pct(result.heuristic_before, result.heuristic_after))],
    ]
    with open(os.path.join(spec.output_dir, "summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerows(summary)
    _echo_config(spec, spec.output_dir, extra={"realization_sha256": hashes})
    return result


def run_alpha_sweep(spec, scenario=None, power_maps=None):
    """Exact after-prioritization solves per alpha: average SINR, healthy-user
    SD, and per-OP means, ordered by alpha."""
    os.makedirs(spec.output_dir, exist_ok=True)
    if scenario is None:
        scenario = _load_scenario(spec)
    if power_maps is None:
        power_maps = _power_maps(scenario, spec.realizations)
    cfg = scenario.config
    healthy = [k for k in cfg.user_ids if not scenario.is_outpatient(k)]
    rows = []
    table = []
    for alpha in sorted(spec.alphas):
        config = exact.SolverConfig(
            objective=spec.objective, prioritization=True, alpha=alpha
        )
        sinr_runs = []
        for pm in power_maps:
            _, report = exact.solve_exact(scenario, pm, config)
            sinr_runs.append(report.sinr)
        user_means = {k: _mean([r[k] for r in sinr_runs]) for k in cfg.user_ids}
        avg = _mean(list(user_means.values()))
        sd = metrics.fairness_sd([user_means[k] for k in healthy])
        row = {
            "alpha": alpha,
            "avg_sinr": avg,
            "healthy_sd": sd,
            "op_means": {k: user_means[k] for k in cfg.op_ids},
        }
        table.append(row)
        rows.append(
            [alpha, repr(avg), repr(sd)] + [repr(user_means[k]) for k in cfg.op_ids]
        )
    path = os.path.join(spec.output_dir, "alpha_sweep.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["alpha", "avg_sinr", "healthy_sd"] + [f"op_{k}_mean" for k in cfg.op_ids]
        )
        writer.writerows(rows)
    _echo_config(spec, spec.output_dir)
    return table


def run_scalability(spec):
    """Heuristic wall-clock per standard PRB count with all slots occupied."""
    os.makedirs(spec.output_dir, exist_ok=True)
    rows = []
    for bandwidth_mhz, prbs in SCALABILITY_CASES:
        users = 2 * prbs
        config = channel.ScenarioConfig(
            num_bs=2,
            prbs_per_bs=prbs,
            num_users=users,
            num_normal=users - 3,
            seed=spec.seed,
        )
        scenario, pm = channel.generate_scenario(config)
        hconfig = heur.HeuristicConfig(
            iterations=1, prioritization=False, seed=spec.seed
        )
        times = []
        for r in range(spec.runs):
            rng = np.random.default_rng(channel.derive_seed(spec.seed, prbs, r))
            start = time.perf_counter()
            heur.run_iteration(scenario, pm, hconfig, rng)
            times.append(time.perf_counter() - start)
        rows.append((bandwidth_mhz, prbs, users, statistics.median(times)))
    path = os.path.join(spec.output_dir, "scalability.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bandwidth_mhz", "prbs", "users", "seconds"])
        for bw, prbs, users, seconds in rows:
            writer.writerow([bw, prbs, users, repr(seconds)])
    _echo_config(spec, spec.output_dir)
    return rows


# --- command wiring ---------------------------------------------------------


def _cmd_ingest(args):
    rows = medrecords.load_raw_records(args.input)
    raw_ids = {r.patient_id for r in rows}
    records = medrecords.segment(
        medrecords.cleanse(rows), window=args.window, all_patient_ids=raw_ids
    )
    medrecords.write_records_csv(records, args.output)
    print(f"wrote {len(records)} records to {args.output}")


def _cmd_risk(args):
    records = {r.patient_id: r for r in medrecords.read_records_csv(args.records)}
    with open(args.scenario, encoding="utf-8") as fh:
        scenario = channel.scenario_from_json(fh.read())
    if not scenario.current_states:
        raise DataError("scenario has no current_states for the outpatients")
    config = risk.RiskConfig(alpha=args.alpha, smoothing=args.smoothing)
    ordered_patients = sorted(records)
    profiles = []
    for uid in scenario.config.user_ids:
        if not scenario.is_outpatient(uid):
            profiles.append(risk.RiskProfile(uid, False, 0.0, 1.0))
            continue
        state_tokens = scenario.current_states.get(uid)
        if state_tokens is None:
            raise DataError(f"no current state for outpatient {uid}")
        state = risk.CurrentState(**state_tokens)
        op_rank = uid - scenario.config.num_normal - 1
        if op_rank >= len(ordered_patients):
            raise DataError("fewer patient records than outpatients")
        record = records[ordered_patients[op_rank]]
        ps = risk.posterior_stroke(record, state, smoothing=args.smoothing)
        profiles.append(risk.RiskProfile(uid, True, ps, risk.priority(ps, config, True)))
    risk.write_risk_csv(profiles, args.output)
    print(f"wrote {len(profiles)} risk profiles to {args.output}")


def _cmd_generate(args):
    os.makedirs(args.output, exist_ok=True)
    config = channel.ScenarioConfig(
        num_bs=args.bs,
        prbs_per_bs=args.prbs,
        num_users=args.users,
        num_normal=args.normal,
        seed=args.seed,
    )
    scenario, _ = channel.generate_scenario(config, op_ps=REFERENCE_OP_PS if args.reference_ps else None)
    write_text_atomic(
        os.path.join(args.output, "scenario.json"), channel.scenario_to_json(scenario)
    )
    for i in range(args.realizations):
        pm = channel.generate_power_map(scenario, realization=i)
        channel.write_power_map_csv(pm, os.path.join(args.output, f"power_map_{i:03d}.csv"))
    print(f"wrote scenario and {args.realizations} power maps to {args.output}")


def _read_scenario_and_map(args):
    with open(args.scenario, encoding="utf-8") as fh:
        scenario = channel.scenario_from_json(fh.read())
    pm = channel.read_power_map_csv(args.power_map, scenario.config.noise_w)
    return scenario, pm


def _solver_config(args, piecewise=False):
    pwl = exact.PwlSpec.default() if piecewise else None
    return exact.SolverConfig(
        objective=args.objective,
        prioritization=args.prioritize,
        alpha=args.alpha,
        pf_log_mode="piecewise" if piecewise else "exact_log",
        pwl=pwl,
    )


def _cmd_solve(args):
    scenario, pm = _read_scenario_and_map(args)
    config = _solver_config(args)
    assignment, report = exact.solve_exact(scenario, pm, config)
    exact.write_result_csv(assignment, report, args.output)
    if args.export_lp:
        lp_config = _solver_config(args, piecewise=args.objective == "pf")
        write_text_atomic(args.export_lp, lp_export.export_milp(scenario, pm, lp_config))
    print(f"objective {report.objective_value!r}")


def _cmd_heuristic(args):
    with open(args.scenario, encoding="utf-8") as fh:
        scenario = channel.scenario_from_json(fh.read())
    power_maps = [
        channel.read_power_map_csv(p, scenario.config.noise_w) for p in args.power_map
    ]
    config = heur.HeuristicConfig(
        iterations=args.iterations,
        prioritization=args.prioritize,
        alpha=args.alpha,
        seed=args.seed,
    )
    report = heur.run_heuristic(scenario, power_maps, config)
    heur.write_heuristic_csv(report, args.output)
    print(f"wrote heuristic report for {len(power_maps)} file(s) to {args.output}")


def _cmd_export_lp(args):
    scenario, pm = _read_scenario_and_map(args)
    config = _solver_config(args, piecewise=args.objective == "pf")
    write_text_atomic(args.output, lp_export.export_milp(scenario, pm, config))
    print(f"wrote LP model to {args.output}")


def _cmd_validate_solution(args):
    scenario, pm = _read_scenario_and_map(args)
    config = _solver_config(args)
    with open(args.solution, encoding="utf-8") as fh:
        parity = lp_export.validate_external_solution(fh.read(), scenario, pm, config)
    print(
        f"recomputed {parity.recomputed_objective!r} "
        f"reported {parity.reported_objective!r} "
        f"optimum {parity.internal_optimum!r} "
        f"objective_match={parity.objective_match} is_optimal={parity.is_optimal}"
    )
    if not parity.is_optimal:
        print("solution is below the internal optimum")


def _spec_from_args(args, kind):
    return ExperimentSpec(
        kind=kind,
        output_dir=args.output,
        scenario_path=getattr(args, "scenario", None),
        objective=getattr(args, "objective", "wsrmax"),
        alphas=tuple(getattr(args, "alphas", DEFAULT_ALPHAS)),
        alpha=getattr(args, "alpha", 500.0),
        realizations=getattr(args, "realizations", 100),
        iterations=getattr(args, "iterations", 1000),
        seed=args.seed,
        runs=getattr(args, "runs", 3),
    )


def _cmd_before_after(args):
    result = run_before_after(_spec_from_args(args, "before_after"))
    print(
        "OP improvement (exact) "
        f"{result.op_improvement_pct(result.exact_before, result.exact_after):.2f}%"
    )


def _cmd_sweep_alpha(args):
    table = run_alpha_sweep(_spec_from_args(args, "alpha_sweep"))
    for row in table:
        print(f"alpha={row['alpha']:g} avg_sinr={row['avg_sinr']:.4f} healthy_sd={row['healthy_sd']:.4f}")


def _cmd_scalability(args):
    rows = run_scalability(_spec_from_args(args, "scalability"))
    for bw, prbs, users, seconds in rows:
        print(f"{bw:g} MHz: {prbs} PRBs, {users} users, {seconds:.4f} s")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="prballoc", description="Patient-priority OFDMA uplink PRB allocation"
    )
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="discretize raw medical records")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--window", type=int, default=medrecords.DEFAULT_OBSERVATION_DAYS)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("risk", help="score outpatients from discretized records")
    p.add_argument("--records", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--alpha", type=float, default=500.0)
    p.add_argument("--smoothing", choices=["off", "laplace"], default="off")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_risk)

    p = sub.add_parser("generate", help="write a scenario and power-map realizations")
    p.add_argument("--output", required=True)
    p.add_argument("--realizations", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bs", type=int, default=2)
    p.add_argument("--prbs", type=int, default=5)
    p.add_argument("--users", type=int, default=10)
    p.add_argument("--normal", type=int, default=7)
    p.add_argument("--reference-ps", action="store_true", help="inject the reference OP posteriors")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("solve", help="exact solve of one instance")
    p.add_argument("--scenario", required=True)
    p.add_argument("--power-map", required=True)
    p.add_argument("--objective", choices=["wsrmax", "pf"], default="wsrmax")
    p.add_argument("--prioritize", action="store_true")
    p.add_argument("--alpha", type=float, default=500.0)
    p.add_argument("--output", required=True)
    p.add_argument("--export-lp")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("heuristic", help="semi-greedy allocation with averaging")
    p.add_argument("--scenario", required=True)
    p.add_argument("--power-map", required=True, nargs="+")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--prioritize", action="store_true")
    p.add_argument("--alpha", type=float, default=500.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_heuristic)

    p = sub.add_parser("export-lp", help="emit the MILP in LP format")
    p.add_argument("--scenario", required=True)
    p.add_argument("--power-map", required=True)
    p.add_argument("--objective", choices=["wsrmax", "pf"], default="wsrmax")
    p.add_argument("--prioritize", action="store_true")
    p.add_argument("--alpha", type=float, default=500.0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_export_lp)

    p = sub.add_parser("validate-solution", help="check an external solver solution")
    p.add_argument("--scenario", required=True)
    p.add_argument("--power-map", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--objective", choices=["wsrmax", "pf"], default="wsrmax")
    p.add_argument("--prioritize", action="store_true")
    p.add_argument("--alpha", type=float, default=500.0)
    p.set_defaults(func=_cmd_validate_solution)

    p = sub.add_parser("before-after", help="paired prioritization experiment")
    p.add_argument("--output", required=True)
    p.add_argument("--scenario")
    p.add_argument("--objective", choices=["wsrmax", "pf"], default="wsrmax")
    p.add_argument("--alpha", type=float, default=500.0)
    p.add_argument("--realizations", type=int, default=100)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_before_after)

    p = sub.add_parser("sweep-alpha", help="fairness and SINR across alpha values")
    p.add_argument("--output", required=True)
    p.add_argument("--scenario")
    p.add_argument("--objective", choices=["wsrmax", "pf"], default="wsrmax")
    p.add_argument("--alphas", type=float, nargs="+", default=list(DEFAULT_ALPHAS))
    p.add_argument("--realizations", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_sweep_alpha)

    p = sub.add_parser("scalability", help="heuristic timing across PRB counts")
    p.add_argument("--output", required=True)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_scalability)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4
    except PrballocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
