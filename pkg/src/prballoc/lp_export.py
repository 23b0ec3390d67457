"""Emit the PRB-assignment MILP in LP text format for external solvers.

The export carries the big-M linearization of the SINR balance (product of a
continuous SINR and a binary assignment becomes a bounded auxiliary variable)
and, for the PF objective, tangent-line rows standing in for the natural log.
Variable names: X_k_n_b (binary assignment), T_k_n_b (per-slot SINR),
PHI_m_n_k_w_b (linearization product), S_k (per-user SINR), L_k (log SINR).
"""

import math
from dataclasses import dataclass

from .allocator_exact import (
    Assignment,
    default_lambda,
    evaluate_assignment,
    priorities_for,
    solve_exact,
)
from .channel import dbm_to_mw
from .errors import DataError, UsageError

FRACTIONAL_TOL = 1e-6
PARITY_TOL = 1e-9


def _num(x):
    return repr(float(x))


def _phi_indices(K, N, B):
    for k in range(1, K + 1):
        for m in range(1, K + 1):
            if m == k:
                continue
            for n in range(1, N + 1):
                for b in range(1, B + 1):
                    for w in range(1, B + 1):
                        if w == b:
                            continue
                        yield m, n, k, w, b


def export_milp(scenario, power_map, config, lam=None, bayes_block=None):
    """Complete LP-format model text; byte-identical across runs.

    `bayes_block` may hold (records, states) keyed by OP id to additionally
    emit the binary AND encoding of the day-level feature/class indicators.
    The user weights themselves always enter as precomputed constants.
    """
    cfg = scenario.config
    K, N, B = cfg.num_users, cfg.prbs_per_bs, cfg.num_bs
    if lam is None:
        lam = default_lambda(power_map)
    if lam <= 0:
        raise UsageError("lambda must be positive")
    weights = priorities_for(scenario, config)
    pf = config.objective == "pf"
    if pf and config.pwl is None:
        raise UsageError("PF export requires a PwlSpec")
    noise = power_map.noise_w

    def log_users():
        if not pf:
            return []
        if config.prioritization:
            return [k for k in cfg.user_ids if not scenario.is_outpatient(k)]
        return list(cfg.user_ids)

    lines = ["\\ prballoc MILP export", "Maximize"]
    if not pf:
        terms = []
        for k in cfg.user_ids:
            for n in range(1, N + 1):
                for b in range(1, B + 1):
                    terms.append(f"+ {_num(weights[k])} T_{k}_{n}_{b}")
        lines.append(" obj: " + " ".join(terms))
    else:
        terms = [f"+ L_{k}" for k in log_users()]
        if config.prioritization:
            for k in cfg.user_ids:
                if scenario.is_outpatient(k):
                    terms.append(f"+ {_num(weights[k])} S_{k}")
        lines.append(" obj: " + " ".join(terms))

    lines.append("Subject To")
    for m, n, k, w, b in _phi_indices(K, N, B):
        phi = f"PHI_{m}_{n}_{k}_{w}_{b}"
        lines.append(f" c13_{m}_{n}_{k}_{w}_{b}: {phi} - {_num(lam)} X_{m}_{n}_{w} <= 0")
        lines.append(f" c14_{m}_{n}_{k}_{w}_{b}: {phi} - T_{k}_{n}_{b} <= 0")
        lines.append(
            f" c15_{m}_{n}_{k}_{w}_{b}: {phi} - {_num(lam)} X_{m}_{n}_{w} - T_{k}_{n}_{b}"
            f" >= {_num(-lam)}"
        )
    for k in cfg.user_ids:
        for n in range(1, N + 1):
            for b in range(1, B + 1):
                terms = []
                for m in cfg.user_ids:
                    if m == k:
                        continue
                    for w in range(1, B + 1):
                        if w == b:
                            continue
                        qm = power_map.power(m, n, b)
                        terms.append(f"+ {_num(qm)} PHI_{m}_{n}_{k}_{w}_{b}")
                terms.append(f"+ {_num(noise)} T_{k}_{n}_{b}")
                terms.append(f"- {_num(power_map.power(k, n, b))} X_{k}_{n}_{b}")
                lines.append(f" c16_{k}_{n}_{b}: " + " ".join(terms) + " = 0")
    p_w = dbm_to_mw(cfg.tx_power_per_prb_dbm) / 1000.0
    pm_w = dbm_to_mw(cfg.max_power_per_connection_dbm) / 1000.0
    for k in cfg.user_ids:
        for b in range(1, B + 1):
            terms = [f"+ {_num(p_w)} X_{k}_{n}_{b}" for n in range(1, N + 1)]
            lines.append(f" c17_{k}_{b}: " + " ".join(terms) + f" <= {_num(pm_w)}")
    for n in range(1, N + 1):
        for b in range(1, B + 1):
            terms = [f"+ X_{k}_{n}_{b}" for k in cfg.user_ids]
            lines.append(f" c18_{n}_{b}: " + " ".join(terms) + " <= 1")
    for k in cfg.user_ids:
        terms = [
            f"+ X_{k}_{n}_{b}" for b in range(1, B + 1) for n in range(1, N + 1)
        ]
        lines.append(f" c19_{k}: " + " ".join(terms) + " >= 1")
    if pf:
        for k in cfg.user_ids:
            terms = [
                f"- T_{k}_{n}_{b}" for n in range(1, N + 1) for b in range(1, B + 1)
            ]
            lines.append(f" c21_{k}: S_{k} " + " ".join(terms) + " = 0")
        for k in log_users():
            for y, (m_y, h_y) in enumerate(config.pwl.segments, start=1):
                lines.append(f" c24_{k}_{y}: L_{k} - {_num(m_y)} S_{k} <= {_num(h_y)}")
    if bayes_block:
        lines.extend(_bayes_block_rows(bayes_block))

    lines.append("Bounds")
    for k in log_users():
        lines.append(f" L_{k} free")
    lines.append("Binary")
    for k in cfg.user_ids:
        for n in range(1, N + 1):
            for b in range(1, B + 1):
                lines.append(f" X_{k}_{n}_{b}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def _bayes_block_rows(bayes_block):
    """Binary AND rows tying day-level indicators: SB <= E, SB <= G,
    SB >= E + G - 1, with E and G folded in as data constants."""
    from .medrecords import FEATURES

    records, states = bayes_block
    rows = ["\\ optional Bayes indicator block (E, G folded as constants)"]
    for z in sorted(records):
        record, state = records[z], states[z]
        for d, entry in enumerate(record.days, start=1):
            g = 1 if entry.stroke else 0
            for i, feat in enumerate(FEATURES, start=1):
                e = 1 if entry.levels[feat] == state.level(feat) else 0
                sb = f"SB_{z}_{i}_{d}"
                rows.append(f" cband1_{z}_{i}_{d}: {sb} <= {e}")
                rows.append(f" cband2_{z}_{i}_{d}: {sb} <= {g}")
                rows.append(f" cband3_{z}_{i}_{d}: {sb} >= {e + g - 1}")
    return rows


def variable_counts(K, N, B):
    """Closed-form variable counts for the exported model."""
    return {
        "X": K * N * B,
        "T": K * N * B,
        "PHI": K * (K - 1) * N * B * (B - 1),
    }


@dataclass
class ParityReport:
    reported_objective: float | None
    recomputed_objective: float
    internal_optimum: float
    objective_match: bool
    is_optimal: bool
    tolerance: float = PARITY_TOL


def write_solution_file(assignment, objective, path):
    """Serialize a solution in the validator's `name value` format."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# objective {_num(objective)}\n")
        for k in sorted(assignment.slots):
            b, n = assignment.slots[k]
            fh.write(f"X_{k}_{n}_{b} 1\n")


def parse_solution_text(text):
    reported = None
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "objective":
                reported = float(parts[1])
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DataError(f"solution line {line_no}: expected 'name value'")
        try:
            values[parts[0]] = float(parts[1])
        except ValueError:
            raise DataError(f"solution line {line_no}: bad value {parts[1]!r}") from None
    return reported, values


def validate_external_solution(text, scenario, power_map, config):
    """Check an external solver's solution against the internal optimizer."""
    reported, values = parse_solution_text(text)
    slots = {}
    for name, value in values.items():
        if not name.startswith("X_"):
            continue
        if min(abs(value), abs(value - 1.0)) > FRACTIONAL_TOL:
            raise DataError(f"non-integral solution: {name} = {value}")
        if value > 0.5:
            try:
                _, k, n, b = name.split("_")
            except ValueError:
                raise DataError(f"malformed variable name {name!r}") from None
            k = int(k)
            if k in slots:
                raise DataError(f"user {k} assigned more than one slot")
            slots[k] = (int(b), int(n))
    missing = [k for k in scenario.config.user_ids if k not in slots]
    if missing:
        raise DataError(f"users without a slot: {missing}")
    assignment = Assignment(slots=slots)
    report = evaluate_assignment(assignment, power_map, scenario, config)
    _, optimal = solve_exact(scenario, power_map, config)
    scale = max(1.0, abs(report.objective_value))
    objective_match = (
        reported is not None
        and abs(report.objective_value - reported) / scale <= PARITY_TOL
    )
    is_optimal = (
        abs(report.objective_value - optimal.objective_value)
        / max(1.0, abs(optimal.objective_value))
        <= PARITY_TOL
    )
    return ParityReport(
        reported_objective=reported,
        recomputed_objective=report.objective_value,
        internal_optimum=optimal.objective_value,
        objective_match=objective_match,
        is_optimal=is_optimal,
    )
