"""Simulation world: RRU placement, reflector populations, UEs and slot roles."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

SPEED_OF_LIGHT = 3.0e8

UPLINK = "uplink"
DOWNLINK = "downlink"
STATIC = "long-standing"
MOBILE = "mobile"


def _frozen_vec(values, size=3):
    arr = np.array(values, dtype=float).reshape(size)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite coordinates: {arr}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RruNode:
    id: int
    position: np.ndarray
    rows: int = 4
    cols: int = 4
    role: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen_vec(self.position))
        if self.rows < 1 or self.cols < 1:
            raise ValueError("antenna array needs at least one row and one column")
        if self.role not in (None, UPLINK, DOWNLINK):
            raise ValueError(f"unknown role {self.role!r}")

    @property
    def n_antennas(self):
        return self.rows * self.cols


@dataclass(frozen=True, eq=False)
class Reflector:
    id: int
    position: np.ndarray
    velocity: np.ndarray
    kind: str
    reflection_gain: complex

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen_vec(self.position))
        object.__setattr__(self, "velocity", _frozen_vec(self.velocity))
        if self.kind not in (STATIC, MOBILE):
            raise ValueError(f"unknown reflector kind {self.kind!r}")
        if self.kind == STATIC and np.any(self.velocity != 0):
            raise ValueError("long-standing reflectors must have zero velocity")
        mag = abs(self.reflection_gain)
        if not 0 < mag <= 1:
            raise ValueError(f"reflection gain magnitude {mag} outside (0, 1]")


@dataclass(frozen=True, eq=False)
class UeNode:
    id: int
    position: np.ndarray
    active: bool = False
    tx_power: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen_vec(self.position))


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for :func:`generate_scenario`. Lengths in meters, speeds in m/s."""

    volume: tuple = (3000.0, 3000.0, 60.0)
    n_rru: int = 10
    n_downlink: int | None = None
    n_static: int = 5
    n_mobile: int = 3
    n_ue: int = 0
    ue_active: bool = False
    ue_tx_power: float = 0.2
    rru_height: tuple = (10.0, 60.0)
    antenna_rows: int = 4
    antenna_cols: int = 4
    min_rru_separation: float = 50.0
    speed_range: tuple = (0.0, 30.0)
    gain_range: tuple = (0.05, 0.5)
    carrier_frequency: float = 3.5e9
    sample_interval: float = 1e-8
    tx_power: float = 1.0

    def to_dict(self):
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown scenario config keys: {sorted(unknown)}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**kwargs)


@dataclass(frozen=True)
class SchedulePolicy:
    """How the EDU splits RRUs into uplink and downlink sets for a slot.

    ``fixed``: the first ``n_downlink`` RRUs (by id order) transmit.
    ``alternating``: RRU ``i`` transmits when ``i + slot`` is even.
    ``single_downlink``: one RRU transmits (``downlink_id``, or rotating by slot).
    """

    kind: str = "fixed"
    n_downlink: int | None = None
    downlink_id: int | None = None


@dataclass(frozen=True, eq=False)
class Scenario:
    volume: tuple
    rrus: tuple
    reflectors: tuple
    ues: tuple = ()
    carrier_frequency: float = 3.5e9
    sample_interval: float = 1e-8
    rng_seed: int = 0
    slot: int = 0
    tx_power: float = 1.0

    def __post_init__(self):
        if len(self.volume) != 3 or min(self.volume) <= 0:
            raise ValueError(f"volume extents must be positive, got {self.volume}")
        ids = [r.id for r in self.rrus]
        if len(set(ids)) != len(ids):
            raise ValueError("RRU ids must be unique")
        pos = np.array([r.position for r in self.rrus]).reshape(-1, 3)
        if len(np.unique(pos, axis=0)) != len(pos):
            raise ValueError("two RRUs share a position")
        object.__setattr__(self, "rrus", tuple(self.rrus))
        object.__setattr__(self, "reflectors", tuple(self.reflectors))
        object.__setattr__(self, "ues", tuple(self.ues))
        object.__setattr__(self, "volume", tuple(float(v) for v in self.volume))

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_frequency

    def rru(self, rru_id):
        for node in self.rrus:
            if node.id == rru_id:
                return node
        raise KeyError(f"unknown RRU id {rru_id}")

    def positions(self):
        return {r.id: r.position for r in self.rrus}

    @property
    def downlink_ids(self):
        return [r.id for r in self.rrus if r.role == DOWNLINK]

    @property
    def uplink_ids(self):
        return [r.id for r in self.rrus if r.role == UPLINK]

    @property
    def static_reflectors(self):
        return [r for r in self.reflectors if r.kind == STATIC]

    @property
    def mobile_reflectors(self):
        return [r for r in self.reflectors if r.kind == MOBILE]

    def contains(self, point, margin=0.0):
        """True if ``point`` lies in the volume grown by ``margin`` x extent per side."""
        p = np.asarray(point, dtype=float)
        ext = np.asarray(self.volume)
        return bool(np.all(p >= -margin * ext) and np.all(p <= ext * (1 + margin)))


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Sample a scenario; a pure function of ``(config, seed)``.

    RRUs are placed uniformly in the x-y extent with heights drawn from
    ``config.rru_height`` and a minimum pairwise separation. Reflectors are
    uniform in the whole volume: the first ``n_static`` are long-standing, the
    rest mobile with a horizontal heading. Roles follow the fixed split policy
    for slot 0.
    """
    vx, vy, vz = (float(v) for v in config.volume)
    if min(vx, vy, vz) <= 0:
        raise ValueError(f"volume extents must be positive, got {config.volume}")
    if config.n_rru < 2:
        raise ValueError("need at least 2 RRUs so that a bistatic pair exists")
    if config.n_static < 0 or config.n_mobile < 0 or config.n_ue < 0:
        raise ValueError("reflector and UE counts must be non-negative")
    h_lo, h_hi = config.rru_height
    if not 0 <= h_lo <= h_hi <= vz:
        raise ValueError(f"rru_height {config.rru_height} outside the volume z-extent")

    rng = np.random.default_rng(seed)
    rrus = []
    placed = np.empty((0, 3))
    attempts = 0
    while len(rrus) < config.n_rru:
        p = np.array([rng.uniform(0, vx), rng.uniform(0, vy), rng.uniform(h_lo, h_hi)])
        if len(placed) and np.min(np.linalg.norm(placed - p, axis=1)) < config.min_rru_separation:
            attempts += 1
            if attempts > 10_000:
                raise RuntimeError("cannot place RRUs with the requested minimum separation")
            continue
        placed = np.vstack([placed, p])
        rrus.append(RruNode(len(rrus), p, config.antenna_rows, config.antenna_cols))

    g_lo, g_hi = config.gain_range
    s_lo, s_hi = config.speed_range
    reflectors = []
    for k in range(config.n_static + config.n_mobile):
        p = rng.uniform([0, 0, 0], [vx, vy, vz])
        mag = np.exp(rng.uniform(np.log(g_lo), np.log(g_hi)))
        gain = complex(mag * np.exp(1j * rng.uniform(-np.pi, np.pi)))
        if k < config.n_static:
            reflectors.append(Reflector(k, p, np.zeros(3), STATIC, gain))
        else:
            speed = rng.uniform(s_lo, s_hi)
            heading = rng.uniform(-np.pi, np.pi)
            v = speed * np.array([np.cos(heading), np.sin(heading), 0.0])
            reflectors.append(Reflector(k, p, v, MOBILE, gain))

    ues = []
    for q in range(config.n_ue):
        p = np.array([rng.uniform(0, vx), rng.uniform(0, vy), rng.uniform(0, min(2.0, vz))])
        ues.append(UeNode(q, p, active=config.ue_active, tx_power=config.ue_tx_power))

    scenario = Scenario(
        volume=(vx, vy, vz),
        rrus=tuple(rrus),
        reflectors=tuple(reflectors),
        ues=tuple(ues),
        carrier_frequency=config.carrier_frequency,
        sample_interval=config.sample_interval,
        rng_seed=int(seed),
        tx_power=config.tx_power,
    )
    n_down = config.n_downlink if config.n_downlink is not None else config.n_rru // 2
    return assign_roles(scenario, 0, SchedulePolicy("fixed", n_downlink=n_down))


def assign_roles(scenario: Scenario, slot: int, policy: SchedulePolicy) -> Scenario:
    ids = sorted(r.id for r in scenario.rrus)
    q = len(ids)
    if policy.kind == "fixed":
        n_down = policy.n_downlink if policy.n_downlink is not None else q // 2
        down = set(ids[:n_down])
    elif policy.kind == "alternating":
        down = {rid for i, rid in enumerate(ids) if (i + slot) % 2 == 0}
    elif policy.kind == "single_downlink":
        chosen = policy.downlink_id if policy.downlink_id is not None else ids[slot % q]
        if chosen not in ids:
            raise KeyError(f"unknown RRU id {chosen}")
        down = {chosen}
    else:
        raise ValueError(f"unknown schedule policy {policy.kind!r}")
    if not down or len(down) == q:
        raise ValueError("schedule policy must leave both the uplink and downlink sets nonempty")
    rrus = tuple(
        dataclasses.replace(r, role=DOWNLINK if r.id in down else UPLINK) for r in scenario.rrus
    )
    return dataclasses.replace(scenario, rrus=rrus, slot=int(slot))


# -- serialization -----------------------------------------------------------

def _fl(values):
    return [float(v) for v in values]


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "volume": _fl(scenario.volume),
        "carrier_frequency": float(scenario.carrier_frequency),
        "sample_interval": float(scenario.sample_interval),
        "tx_power": float(scenario.tx_power),
        "rng_seed": int(scenario.rng_seed),
        "slot": int(scenario.slot),
        "rrus": [
            {"id": r.id, "position": _fl(r.position), "rows": r.rows, "cols": r.cols, "role": r.role}
            for r in scenario.rrus
        ],
        "reflectors": [
            {
                "id": r.id,
                "kind": r.kind,
                "position": _fl(r.position),
                "velocity": _fl(r.velocity),
                "gain": [float(r.reflection_gain.real), float(r.reflection_gain.imag)],
            }
            for r in scenario.reflectors
        ],
        "ues": [
            {"id": u.id, "position": _fl(u.position), "active": bool(u.active), "tx_power": float(u.tx_power)}
            for u in scenario.ues
        ],
    }


def scenario_from_dict(data: dict) -> Scenario:
    return Scenario(
        volume=tuple(data["volume"]),
        rrus=tuple(
            RruNode(r["id"], r["position"], r.get("rows", 4), r.get("cols", 4), r.get("role"))
            for r in data["rrus"]
        ),
        reflectors=tuple(
            Reflector(r["id"], r["position"], r["velocity"], r["kind"], complex(*r["gain"]))
            for r in data.get("reflectors", [])
        ),
        ues=tuple(
            UeNode(u["id"], u["position"], u.get("active", False), u.get("tx_power", 0.2))
            for u in data.get("ues", [])
        ),
        carrier_frequency=data.get("carrier_frequency", 3.5e9),
        sample_interval=data.get("sample_interval", 1e-8),
        rng_seed=data.get("rng_seed", 0),
        slot=data.get("slot", 0),
        tx_power=data.get("tx_power", 1.0),
    )


def save_scenario(scenario: Scenario, path, config: ScenarioConfig | None = None):
    doc = {"scenario": scenario_to_dict(scenario)}
    if config is not None:
        doc = {"config": config.to_dict(), **doc}
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


def load_scenario(path) -> Scenario:
    doc = yaml.safe_load(Path(path).read_text())
    if "scenario" not in doc:
        raise ValueError(f"{path}: no 'scenario' section")
    return scenario_from_dict(doc["scenario"])
