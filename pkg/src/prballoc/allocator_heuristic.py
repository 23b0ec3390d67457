"""Real-time semi-greedy PRB assignment with OP-first ordering.

Each admitted user gets a pool holding, per free slot, the best achievable
SINR (interferer chosen with minimum interfering power); one pool entry is
picked uniformly at random and the chosen interferer is assigned the
co-channel slot at the same time.  An iteration harness averages over
randomized admission orders and over power-map realizations.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .allocator_exact import Assignment, sinr_of
from .channel import derive_seed
from .errors import InfeasibleError
from .metrics import summarize


@dataclass
class HeuristicConfig:
    iterations: int = 1000
    prioritization: bool = False
    alpha: float = 500.0
    seed: int = 0
    pool_selection: str = "uniform"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.pool_selection != "uniform":
            raise ValueError(f"unknown pool selection {self.pool_selection!r}")


@dataclass
class PoolEntry:
    slot: tuple  # (bs, prb)
    interferer: int | None
    sinr: float


@dataclass
class IterationTrace:
    serve_order: list
    slots: dict  # user_id -> (bs, prb)
    at_assignment_sinr: dict
    final_sinr: dict
    pool_sizes: list = field(default_factory=list)


def user_weights(scenario, config):
    """UP weights matching the heuristic's prioritization switch."""
    weights = {}
    for k in scenario.config.user_ids:
        if config.prioritization and scenario.is_outpatient(k):
            weights[k] = 1.0 + config.alpha * scenario.ps_of(k)
        else:
            weights[k] = 1.0
    return weights


def serve_order(scenario, config, rng):
    """OPs first by descending priority when prioritization is on.

    Normal users always arrive in uniformly random order; with prioritization
    off the whole population is shuffled.
    """
    user_ids = list(scenario.config.user_ids)
    if not config.prioritization:
        return [user_ids[i] for i in rng.permutation(len(user_ids))]
    weights = user_weights(scenario, config)
    ops = [k for k in user_ids if scenario.is_outpatient(k)]
    ops.sort(key=lambda k: (-weights[k], k))
    normals = [k for k in user_ids if not scenario.is_outpatient(k)]
    normals = [normals[i] for i in rng.permutation(len(normals))]
    return ops + normals


def best_sinr_pool(user_id, free_slots, unserved, power_map, scenario, prioritization):
    """One entry per free slot, each carrying the slot's best achievable SINR.

    The candidate interferer set is the unserved users that could take a free
    co-channel slot at another BS; an OP's candidates are restricted to normal
    users when prioritization is on.  The minimum-interfering-power candidate
    wins (ties by user id); without candidates the entry is interference-free.
    """
    free_slots = set(free_slots)
    if not free_slots:
        raise InfeasibleError("no free slot available")
    candidates = [m for m in unserved if m != user_id]
    if prioritization and scenario.is_outpatient(user_id):
        candidates = [m for m in candidates if not scenario.is_outpatient(m)]
    candidates.sort()
    noise = power_map.noise_w
    if candidates:
        cand_q = power_map.q[np.array(candidates) - 1]  # (C, N, B)
        min_q = cand_q.min(axis=0)
        arg_q = cand_q.argmin(axis=0)
    entries = []
    num_bs = scenario.config.num_bs
    for b, n in sorted(free_slots):
        own = power_map.power(user_id, n, b)
        co_channel_free = any(
            (w, n) in free_slots for w in range(1, num_bs + 1) if w != b
        )
        if candidates and co_channel_free:
            interferer = candidates[int(arg_q[n - 1, b - 1])]
            sinr = own / (float(min_q[n - 1, b - 1]) + noise)
            entries.append(PoolEntry(slot=(b, n), interferer=interferer, sinr=sinr))
        else:
            entries.append(PoolEntry(slot=(b, n), interferer=None, sinr=own / noise))
    return entries


def semi_greedy_pick(pool, rng):
    """Uniformly random entry from the pool of per-slot best SINRs."""
    if not pool:
        raise InfeasibleError("empty pool")
    return pool[int(rng.integers(len(pool)))]


def run_iteration(scenario, power_map, config, rng):
    """Serve every user once; returns the full trace of this iteration.

    The reported (final) SINRs are recomputed on the completed assignment,
    since later admissions can add interference to earlier users.
    """
    cfg = scenario.config
    if cfg.num_users > cfg.num_bs * cfg.prbs_per_bs:
        raise InfeasibleError("more users than slots")
    order = serve_order(scenario, config, rng)
    free = {(b, n) for b in range(1, cfg.num_bs + 1) for n in range(1, cfg.prbs_per_bs + 1)}
    slots = {}
    at_sinr = {}
    pool_sizes = []
    for user in order:
        if user in slots:
            continue  # already placed as someone's interferer
        unserved = [m for m in order if m not in slots and m != user]
        pool = best_sinr_pool(user, free, unserved, power_map, scenario, config.prioritization)
        pool_sizes.append(len(pool))
        entry = semi_greedy_pick(pool, rng)
        b, n = entry.slot
        slots[user] = entry.slot
        free.discard(entry.slot)
        at_sinr[user] = entry.sinr
        if entry.interferer is not None:
            co = min(w for w in range(1, cfg.num_bs + 1) if w != b and (w, n) in free)
            m = entry.interferer
            slots[m] = (co, n)
            free.discard((co, n))
            at_sinr[m] = power_map.power(m, n, co) / (
                power_map.power(user, n, co) + power_map.noise_w
            )
    assert len(slots) == cfg.num_users
    assignment = Assignment(slots=slots)
    final = {k: sinr_of(assignment, power_map, k) for k in slots}
    return IterationTrace(
        serve_order=order,
        slots=dict(slots),
        at_assignment_sinr=at_sinr,
        final_sinr=final,
        pool_sizes=pool_sizes,
    )


def run_file(scenario, power_map, config, file_index=0):
    """All iterations on one power map: per-user mean final SINRs and the
    per-iteration weighted objectives."""
    cfg = scenario.config
    weights = user_weights(scenario, config)
    sums = {k: 0.0 for k in cfg.user_ids}
    objectives = []
    for it in range(config.iterations):
        rng = np.random.default_rng(derive_seed(config.seed, file_index, it))
        trace = run_iteration(scenario, power_map, config, rng)
        objectives.append(sum(trace.final_sinr[k] * weights[k] for k in trace.final_sinr))
        for k, s in trace.final_sinr.items():
            sums[k] += s
    means = {k: sums[k] / config.iterations for k in sums}
    return means, objectives


@dataclass
class HeuristicReport:
    summaries: dict  # user_id -> StatSummary over per-file means
    per_file_means: list  # one dict per power map
    per_file_objectives: list  # list of per-iteration objective lists


def run_heuristic(scenario, power_maps, config):
    """Average the heuristic over files; 95% CIs are across files."""
    if not power_maps:
        raise ValueError("need at least one power map")
    per_file_means = []
    per_file_objectives = []
    for i, pm in enumerate(power_maps):
        means, objectives = run_file(scenario, pm, config, file_index=i)
        per_file_means.append(means)
        per_file_objectives.append(objectives)
    summaries = {
        k: summarize([m[k] for m in per_file_means]) for k in scenario.config.user_ids
    }
    return HeuristicReport(
        summaries=summaries,
        per_file_means=per_file_means,
        per_file_objectives=per_file_objectives,
    )


def write_heuristic_csv(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "mean_sinr", "sd", "ci_low", "ci_high"])
        for k in sorted(report.summaries):
            s = report.summaries[k]
            writer.writerow(
                [
                    k,
                    repr(s.mean),
                    "" if s.sd is None else repr(s.sd),
                    repr(s.ci_low),
                    repr(s.ci_high),
                ]
            )
