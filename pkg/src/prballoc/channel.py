"""Network scenario generation and the received-power map.

Received power per (user, PRB, base station) triple is
tx_power * fading_gain * attenuation, with 128 + 37.6*log10(d_km) path loss,
unit-mean exponential fading gains (squared Rayleigh envelope) and AWGN
integrated over one PRB's bandwidth.  All optimizer math is in watts.
"""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DataError, InfeasibleError

TABLE_DEFAULTS = dict(
    num_bs=2,
    prbs_per_bs=5,
    num_users=10,
    num_normal=7,
    distance_min_m=300.0,
    distance_max_m=600.0,
    tx_power_per_prb_dbm=17.0,
    max_power_per_connection_dbm=23.0,
    noise_density_dbm_hz=-162.0,
    prb_bandwidth_hz=180000.0,
)


def derive_seed(master_seed, *parts):
    """Stable 64-bit child seed from a master seed and integer indices.

    SHA-256 over the decimal rendering of (master, parts); documented so that
    parallel and sequential runs agree.
    """
    text = ":".join(str(int(x)) for x in (master_seed, *parts))
    digest = hashlib.sha256(b"prballoc:" + text.encode()).digest()
    return int.from_bytes(digest[:8], "big")


def path_loss_db(distance_m):
    """Urban path loss in dB: 128 + 37.6*log10(distance/1km)."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    return 128.0 + 37.6 * math.log10(distance_m / 1000.0)


def dbm_to_mw(x_dbm):
    return 10.0 ** (x_dbm / 10.0)


def mw_to_dbm(x_mw):
    if x_mw <= 0:
        raise ValueError("power must be positive")
    return 10.0 * math.log10(x_mw)


def noise_power_w(density_dbm_hz, bandwidth_hz):
    """AWGN power over one PRB, in watts."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return dbm_to_mw(density_dbm_hz + 10.0 * math.log10(bandwidth_hz)) / 1000.0


def draw_fading(rng, size=None):
    """Power gains: unit-mean exponential (squared unit-variance Rayleigh)."""
    return rng.exponential(1.0, size=size)


def received_power_w(tx_power_dbm, fading_gain, loss_db):
    """Received power in watts for one (user, PRB, BS) triple."""
    if fading_gain < 0:
        raise ValueError("fading gain must be non-negative")
    return dbm_to_mw(tx_power_dbm) * fading_gain * 10.0 ** (-loss_db / 10.0) / 1000.0


@dataclass
class ScenarioConfig:
    num_bs: int = TABLE_DEFAULTS["num_bs"]
    prbs_per_bs: int = TABLE_DEFAULTS["prbs_per_bs"]
    num_users: int = TABLE_DEFAULTS["num_users"]
    num_normal: int = TABLE_DEFAULTS["num_normal"]
    distance_min_m: float = TABLE_DEFAULTS["distance_min_m"]
    distance_max_m: float = TABLE_DEFAULTS["distance_max_m"]
    tx_power_per_prb_dbm: float = TABLE_DEFAULTS["tx_power_per_prb_dbm"]
    max_power_per_connection_dbm: float = TABLE_DEFAULTS["max_power_per_connection_dbm"]
    noise_density_dbm_hz: float = TABLE_DEFAULTS["noise_density_dbm_hz"]
    prb_bandwidth_hz: float = TABLE_DEFAULTS["prb_bandwidth_hz"]
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.num_users > self.num_bs * self.prbs_per_bs:
            raise InfeasibleError(
                f"{self.num_users} users exceed {self.num_bs * self.prbs_per_bs} slots"
            )
        if not self.num_normal < self.num_users:
            raise ValueError("num_normal must be smaller than num_users")
        if self.distance_min_m > self.distance_max_m:
            raise ValueError("distance_min_m exceeds distance_max_m")

    @property
    def user_ids(self):
        return tuple(range(1, self.num_users + 1))

    @property
    def op_ids(self):
        """Outpatients are the users with index above num_normal."""
        return tuple(range(self.num_normal + 1, self.num_users + 1))

    @property
    def noise_w(self):
        return noise_power_w(self.noise_density_dbm_hz, self.prb_bandwidth_hz)


@dataclass
class Scenario:
    config: ScenarioConfig
    # Explicit distances (meters, (num_users, num_bs)) pin the geometry for
    # every realization; None means each realization draws its own.
    distances: np.ndarray | None = None
    op_ps: dict = field(default_factory=dict)  # user_id -> stroke posterior
    current_states: dict = field(default_factory=dict)  # user_id -> level tokens

    def is_outpatient(self, user_id):
        return user_id > self.config.num_normal

    def ps_of(self, user_id):
        return self.op_ps.get(user_id, 0.0) if self.is_outpatient(user_id) else 0.0


@dataclass
class PowerMap:
    q: np.ndarray  # (num_users, prbs_per_bs, num_bs), watts
    noise_w: float
    fading: np.ndarray | None = None  # gains used to build q, same shape
    distances: np.ndarray | None = None  # meters per (user, bs), if generated

    def power(self, user_id, prb, bs):
        """Received power for 1-based (user, prb, bs)."""
        return float(self.q[user_id - 1, prb - 1, bs - 1])


def generate_scenario(config, op_ps=None):
    """A scenario plus its first power-map realization, deterministically."""
    config.validate()
    scenario = Scenario(config=config, op_ps=dict(op_ps or {}))
    return scenario, generate_power_map(scenario, realization=0)


def generate_power_map(scenario, realization=0):
    """One channel realization of the received-power map, in watts.

    A realization samples both user-to-BS distances (uniform per (user, BS)
    pair) and fading gains, unless the scenario carries explicit distances,
    which then stay fixed while fading is redrawn.
    """
    cfg = scenario.config
    rng = np.random.default_rng(derive_seed(cfg.seed, 1, realization))
    if scenario.distances is not None:
        distances = np.asarray(scenario.distances, dtype=float)
    else:
        distances = rng.uniform(
            cfg.distance_min_m, cfg.distance_max_m, size=(cfg.num_users, cfg.num_bs)
        )
    shape = (cfg.num_users, cfg.prbs_per_bs, cfg.num_bs)
    fading = draw_fading(rng, size=shape)
    tx_mw = dbm_to_mw(cfg.tx_power_per_prb_dbm)
    loss_db = 128.0 + 37.6 * np.log10(distances / 1000.0)  # (K, B)
    atten = 10.0 ** (-loss_db / 10.0)
    q = tx_mw * fading * atten[:, None, :] / 1000.0
    return PowerMap(q=q, noise_w=cfg.noise_w, fading=fading, distances=distances)


# --- serialization ---------------------------------------------------------


def scenario_to_json(scenario):
    payload = asdict(scenario.config)
    if scenario.distances is not None:
        payload["distances"] = [[repr(float(d)) for d in row] for row in scenario.distances]
    payload["op_ps"] = {str(k): repr(float(v)) for k, v in scenario.op_ps.items()}
    payload["current_states"] = {str(k): v for k, v in scenario.current_states.items()}
    return json.dumps(payload, indent=2, sort_keys=True)


def scenario_from_json(text):
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"bad scenario JSON: {exc}") from exc
    cfg_kwargs = {k: payload[k] for k in TABLE_DEFAULTS if k in payload}
    cfg_kwargs["seed"] = payload.get("seed", 0)
    config = ScenarioConfig(**cfg_kwargs)
    op_ps = {int(k): float(v) for k, v in payload.get("op_ps", {}).items()}
    states = {int(k): v for k, v in payload.get("current_states", {}).items()}
    distances = None
    if "distances" in payload:
        distances = np.array([[float(d) for d in row] for row in payload["distances"]])
        if distances.shape != (config.num_users, config.num_bs):
            raise DataError("distances shape does not match config")
    return Scenario(config=config, distances=distances, op_ps=op_ps, current_states=states)


def write_power_map_csv(power_map, path):
    """CSV with one row per (user, prb, bs) triple; powers round-trip exactly."""
    K, N, B = power_map.q.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "prb", "bs", "power_watts"])
        for k in range(K):
            for n in range(N):
                for b in range(B):
                    writer.writerow([k + 1, n + 1, b + 1, repr(float(power_map.q[k, n, b]))])


def read_power_map_csv(path, noise_w):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["user", "prb", "bs", "power_watts"]:
            raise DataError(f"{path}: bad power map header")
        entries = [(int(u), int(n), int(b), float(p)) for u, n, b, p in reader]
    if not entries:
        raise DataError(f"{path}: empty power map")
    K = max(e[0] for e in entries)
    N = max(e[1] for e in entries)
    B = max(e[2] for e in entries)
    q = np.full((K, N, B), np.nan)
    for u, n, b, p in entries:
        q[u - 1, n - 1, b - 1] = p
    if np.isnan(q).any():
        raise DataError(f"{path}: missing (user, prb, bs) triples")
    return PowerMap(q=q, noise_w=noise_w)
