"""Monte Carlo campaigns: per-trial pipeline, error sweeps and mode comparison.

Seeding: trial ``t`` of a campaign with master seed ``m`` draws everything from
``SeedSequence(m, spawn_key=(t,))``. Its children seed, in order, the scenario,
the parameter errors, the classifier decisions and the signal-level noise.
Parameter errors and classifier decisions are keyed by path identity and are
reused across every sweep point and both modes, so grid points differ only in
the swept knob (common random numbers).
"""
from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import realize_channel
from .classifier.models import SyntheticClassifier
from .fingerprint import build_library
from .localization import (
    DEFAULT_CLUSTER_RADIUS,
    DEFAULT_EPS_R,
    DEFAULT_MAX_RANGE,
    DetectionHypothesis,
    fuse_detections,
    match_truth,
    reject_outliers,
    solve_many,
    validate_los,
)
from .scenario import SPEED_OF_LIGHT, ScenarioConfig, SchedulePolicy, assign_roles, generate_scenario
from .sensing import LOS_KEY, ErrorInjection, _perturb, separate_paths
from .signal_chain import (
    Y_LOS,
    Y_MOBILE,
    Y_STATIC,
    assemble_received,
    cancel_known,
    detect_uplink_idle,
    make_symbol_block,
    make_transmit_frame,
)

log = logging.getLogger(__name__)

MULTI = "multi"
SINGLE = "single"
DEFAULT_ACCURACIES = (0.98, 0.96, 0.94, 0.92, 0.90)
DEFAULT_SIGMA_RANGES = (0.1, 0.25, 0.5, 1.0)


@dataclass(frozen=True)
class CampaignConfig:
    """Everything that defines a campaign; results are a pure function of it.

    ``sigma_angle`` defaults to ``sigma_range / angle_reference_range``: the
    angular error whose cross-range effect at that distance equals the range
    error. ``accuracies`` drive the synthetic classifier; ``None`` entries or
    ``classifier="perfect"`` mean correct classification.
    """
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sigma_ranges: tuple = DEFAULT_SIGMA_RANGES
    accuracies: tuple = DEFAULT_ACCURACIES
    classifier: str = "synthetic"
    trials: int = 200
    mode: str = MULTI
    seed: int = 0
    angle_reference_range: float = 300.0
    sigma_angle: float | None = None
    sigma_doppler: float = 0.0
    eps_r: float = DEFAULT_EPS_R
    max_range: float = DEFAULT_MAX_RANGE
    cluster_radius: float = DEFAULT_CLUSTER_RADIUS
    validate_los: bool = True
    reject_outliers: bool = True
    leakage: float = 0.0
    signal_level: bool = False
    n_symbols: int = 256
    noise_snr_db: float = 20.0
    idle_threshold_factor: float = 3.0
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.sigma_ranges or not self.accuracies:
            raise ValueError("sweep grids must be nonempty")
        if self.mode not in (MULTI, SINGLE):
            raise ValueError(f"mode must be {MULTI!r} or {SINGLE!r}")
        if self.classifier not in ("synthetic", "perfect"):
            raise ValueError("classifier must be 'synthetic' or 'perfect'")
        if any(s < 0 for s in self.sigma_ranges):
            raise ValueError("sigma_range values must be non-negative")
        if any(not 0 <= a <= 1 for a in self.accuracies):
            raise ValueError("accuracies must lie in [0, 1]")

    def angle_sigma(self, sigma_range):
        if self.sigma_angle is not None:
            return self.sigma_angle
        return sigma_range / self.angle_reference_range

    def to_dict(self):
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "scenario":
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown campaign config keys: {sorted(unknown)}")
        if "scenario" in data:
            data["scenario"] = ScenarioConfig.from_dict(data["scenario"] or {})
        for key in ("sigma_ranges", "accuracies"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass(frozen=True)
class TrialResult:
    trial: int
    errors: tuple                 # perception error per matched reflector, meters
    matched_ids: tuple            # reflector ids for ``errors``
    misses: int
    false_alarms: int
    n_targets: int
    idle: bool = True
    n_hypotheses: int = 0
    n_correct: int = 0            # hypotheses whose claimed source is right
    n_los_rejected: int = 0
    n_outliers: int = 0
    sigma_range: float = 0.0
    accuracy: float | None = None
    mode: str = MULTI
    elapsed: float = field(default=0.0, compare=False)

    @property
    def realized_accuracy(self):
        return self.n_correct / self.n_hypotheses if self.n_hypotheses else float("nan")

    @property
    def mean_error(self):
        return float(np.mean(self.errors)) if self.errors else float("nan")


def trial_seed(master, trial):
    return np.random.SeedSequence(master, spawn_key=(int(trial),))


def _child_ints(seq, n):
    return [int(c.generate_state(1)[0]) for c in seq.spawn(n)]


@dataclass(frozen=True, eq=False)
class PreparedTrial:
    """Scenario, ground truth and random draws of one trial, reusable across grid points."""
    trial: int
    scenario: object
    targets: tuple                # mobile reflectors
    paths: tuple                  # (d, u, NLOS PathParams, LOS PathParams)
    normals: np.ndarray           # (n_paths, 4) errors of each NLOS path
    los_normals: np.ndarray       # (n_paths, 4) errors of the LOS path of the same pair
    draws: np.ndarray             # (n_paths, 2) classifier uniforms
    idle: bool
    error_seed: int


def _keyed_draws(seed, keys, size, uniform=False):
    """One independent draw vector per key, fixed by ``(seed, key)`` alone."""
    out = np.empty((len(keys), size))
    for i, k in enumerate(keys):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=k))
        out[i] = rng.random(size) if uniform else rng.standard_normal(size)
    return out


def prepare_trial(config: CampaignConfig, trial: int) -> PreparedTrial:
    scn_seed, err_seed, clf_seed, sig_seed = _child_ints(trial_seed(config.seed, trial), 4)
    scenario = generate_scenario(config.scenario, scn_seed)
    if config.mode == SINGLE:
        scenario = assign_roles(scenario, 0, SchedulePolicy("single_downlink", downlink_id=scenario.downlink_ids[0]))
    channel = realize_channel(scenario)
    targets = tuple(scenario.mobile_reflectors)
    mobile = {r.id for r in targets}
    paths = []
    for (d, u), ps in channel.paths.items():
        for p in ps[1:]:
            if p.reflector_id in mobile:
                paths.append((d, u, p, ps[0]))
    keys = [(p.source, p.sink, p.reflector_id) for _, _, p, _ in paths]
    normals = _keyed_draws(err_seed, keys, 4)
    los_normals = _keyed_draws(err_seed, [(d, u, LOS_KEY) for d, u, _, _ in paths], 4)
    draws = _keyed_draws(clf_seed, keys, 2, uniform=True)
    idle = True
    if config.signal_level:
        idle = _signal_level_idle(config, scenario, channel, sig_seed)
    elif any(ue.active for ue in scenario.ues):
        idle = False
    return PreparedTrial(trial, scenario, targets, tuple(paths), normals, los_normals, draws, idle, err_seed)


def _signal_level_idle(config, scenario, channel, seed):
    """Run the signal chain at every uplink RRU and apply the idle detector.

    Receiver noise is set ``noise_snr_db`` below the mean mobile-path power;
    the slot counts as idle only if every uplink RRU declares it idle. LOS and
    static clutter are cancelled with exact knowledge, and the separation
    is run to exercise the chain (its outputs feed no decision here).
    """
    rng = np.random.default_rng(seed)
    lib = build_library(scenario.downlink_ids, 0.0, seed, sample_interval=scenario.sample_interval)
    frames = {d: make_transmit_frame(make_symbol_block(config.n_symbols, rng, d), profile=lib[d],
                                     power=scenario.tx_power, rng=rng)
              for d in scenario.downlink_ids}
    ue_signals = {ue.id: np.sqrt(ue.tx_power) * make_symbol_block(config.n_symbols, rng).symbols
                  for ue in scenario.ues if ue.active}
    mobile = {r.id for r in scenario.mobile_reflectors}
    powers = [abs(p.alpha) ** 2 * scenario.tx_power for ps in channel.paths.values() for p in ps[1:]
              if p.reflector_id in mobile]
    ref = float(np.mean(powers)) if powers else 1e-12
    noise_power = ref * 10 ** (-config.noise_snr_db / 10)
    idle = True
    for u in scenario.uplink_ids:
        rx = assemble_received(scenario, channel, frames, u, ue_signals=ue_signals,
                               noise_psd=noise_power * scenario.sample_interval, rng=rng)
        residual = cancel_known(rx, rx.components[Y_LOS], rx.components[Y_STATIC])
        separate_paths(residual, rx, config.leakage)
        nlos = float(np.mean(np.abs(rx.components[Y_MOBILE]) ** 2))
        if not detect_uplink_idle(residual, config.idle_threshold_factor * noise_power, nlos):
            idle = False
    return idle


def evaluate_trial(config: CampaignConfig, prep: PreparedTrial, sigma_range, accuracy,
                   details=False):
    """Classify, validate, solve, fuse and score one prepared trial at one grid point.

    With ``details=True`` returns ``(result, info)`` where ``info`` holds the
    hypotheses, estimates and scored fused reflectors.
    """
    start = time.perf_counter()
    targets = prep.targets
    base = dict(trial=prep.trial, sigma_range=float(sigma_range), mode=config.mode,
                accuracy=None if accuracy is None else float(accuracy), n_targets=len(targets))
    if not prep.idle:
        result = TrialResult(errors=(), matched_ids=(), misses=len(targets), false_alarms=0, idle=False,
                             elapsed=time.perf_counter() - start, **base)
        return (result, {"scenario": prep.scenario, "hypotheses": [], "estimates": [], "fused": []}) \
            if details else result
    inj = ErrorInjection(sigma_range, config.angle_sigma(sigma_range), config.sigma_doppler, prep.error_seed)
    truth_src = np.array([d for d, _, _, _ in prep.paths], dtype=np.int64)
    if config.mode == SINGLE or config.classifier == "perfect" or accuracy is None or not len(truth_src):
        claimed = truth_src
    else:
        clf = SyntheticClassifier(accuracy, tuple(sorted(prep.scenario.downlink_ids)))
        claimed = clf.decide(truth_src, prep.draws)
    positions = prep.scenario.positions()
    all_hyps, hyps, n_los_rejected = [], [], 0
    for i, (d, u, p, los) in enumerate(prep.paths):
        hyp = DetectionHypothesis(_perturb(p, prep.normals[i], inj, SPEED_OF_LIGHT), int(claimed[i]), u,
                                  _perturb(los, prep.los_normals[i], inj, SPEED_OF_LIGHT))
        all_hyps.append(hyp)
        if config.validate_los and not validate_los(hyp, positions, config.eps_r):
            n_los_rejected += 1
            continue
        hyps.append(hyp)
    estimates = solve_many(hyps, positions)
    if config.reject_outliers:
        kept = reject_outliers(estimates, positions, config.max_range, prep.scenario.volume)
    else:
        kept = [e for e in estimates if e.accepted]
    fused = fuse_detections(kept, config.cluster_radius)
    match = match_truth(fused, targets, 2 * config.cluster_radius)
    result = TrialResult(
        errors=tuple(m[2] for m in match.matches),
        matched_ids=tuple(targets[m[1]].id for m in match.matches),
        misses=len(match.misses),
        false_alarms=len(match.false_alarms),
        n_hypotheses=len(prep.paths),
        n_correct=int(np.sum(claimed == truth_src)),
        n_los_rejected=n_los_rejected,
        n_outliers=len(estimates) - len(kept),
        elapsed=time.perf_counter() - start,
        **base,
    )
    if not details:
        return result
    scored = list(fused)
    for i, _, err in match.matches:
        scored[i] = dataclasses.replace(fused[i], perception_error=err)
    return result, {"scenario": prep.scenario, "hypotheses": all_hyps, "estimates": estimates, "fused": scored}


class TrialError(RuntimeError):
    """A module error raised inside a trial, tagged with the trial identity."""


def run_trial(config: CampaignConfig, trial: int = 0, sigma_range=None, accuracy=None, details=False):
    """One end-to-end trial; grid point defaults to the first sweep entries."""
    sigma_range = config.sigma_ranges[0] if sigma_range is None else sigma_range
    if accuracy is None and config.classifier == "synthetic" and config.mode == MULTI:
        accuracy = config.accuracies[0]
    try:
        return evaluate_trial(config, prepare_trial(config, trial), sigma_range, accuracy, details)
    except Exception as exc:
        raise TrialError(f"trial {trial} (master seed {config.seed}) failed: {exc}") from exc


# -- statistics ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ErrorCdf:
    values: np.ndarray            # sorted samples

    def quantile(self, q):
        """Quantile with linear interpolation between order statistics."""
        return float(np.quantile(self.values, q))

    @property
    def median(self):
        return self.quantile(0.5)

    def cdf(self, x):
        return float(np.searchsorted(self.values, x, side="right") / len(self.values))

    def __len__(self):
        return len(self.values)


def compute_cdf(errors) -> ErrorCdf:
    values = np.sort(np.asarray(list(errors), dtype=float))
    if values.size == 0:
        raise ValueError("cannot build a CDF from no samples")
    if not np.all(np.isfinite(values)):
        raise ValueError("errors must be finite")
    return ErrorCdf(values)


@dataclass(frozen=True)
class PointSummary:
    mode: str
    sigma_range: float
    accuracy: float | None
    trials: int
    n_errors: int
    mean_error: float
    median_error: float
    p90_error: float
    misses: int
    false_alarms: int
    targets: int
    realized_accuracy: float
    skipped_trials: int


def summarize(config, results, sigma_range, accuracy) -> PointSummary:
    errors = [e for r in results for e in r.errors]
    cdf = compute_cdf(errors) if errors else None
    n_h = sum(r.n_hypotheses for r in results)
    return PointSummary(
        mode=config.mode,
        sigma_range=float(sigma_range),
        accuracy=None if accuracy is None else float(accuracy),
        trials=len(results),
        n_errors=len(errors),
        mean_error=float(np.mean(errors)) if errors else float("nan"),
        median_error=cdf.median if cdf else float("nan"),
        p90_error=cdf.quantile(0.9) if cdf else float("nan"),
        misses=sum(r.misses for r in results),
        false_alarms=sum(r.false_alarms for r in results),
        targets=sum(r.n_targets for r in results),
        realized_accuracy=sum(r.n_correct for r in results) / n_h if n_h else float("nan"),
        skipped_trials=sum(not r.idle for r in results),
    )


@dataclass(frozen=True, eq=False)
class CampaignReport:
    config: CampaignConfig
    points: tuple                 # PointSummary per grid point, grid order
    results: dict                 # (sigma_range, accuracy) -> list of TrialResult

    def point(self, sigma_range, accuracy):
        for p in self.points:
            if np.isclose(p.sigma_range, sigma_range) and (p.accuracy == accuracy or
                                                           (p.accuracy is not None and accuracy is not None
                                                            and np.isclose(p.accuracy, accuracy))):
                return p
        raise KeyError((sigma_range, accuracy))

    def cdf(self, sigma_range, accuracy):
        key = next(k for k in self.results if np.isclose(k[0], sigma_range) and
                   (k[1] == accuracy or (k[1] is not None and accuracy is not None and np.isclose(k[1], accuracy))))
        return compute_cdf([e for r in self.results[key] for e in r.errors])

    def points_csv(self):
        buf = io.StringIO()
        names = [f.name for f in dataclasses.fields(PointSummary)]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for p in self.points:
            w.writerow([_fmt(getattr(p, n)) for n in names])
        return buf.getvalue()

    def errors_csv(self):
        """Long-format per-reflector errors: the raw data behind every CDF."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "sigma_range", "accuracy", "trial", "reflector_id", "eps_p"])
        for (s, a), results in self.results.items():
            for r in results:
                for rid, e in zip(r.matched_ids, r.errors):
                    w.writerow([self.config.mode, _fmt(s), _fmt(a), r.trial, rid, _fmt(e)])
        return buf.getvalue()

    def summary(self):
        return {
            "version": 1,
            "mode": self.config.mode,
            "trials": self.config.trials,
            "seed": self.config.seed,
            "points": [{k: _json_num(v) for k, v in dataclasses.asdict(p).items()} for p in self.points],
        }


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _json_num(v):
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


def grid_points(config: CampaignConfig):
    accs = [None] if config.classifier == "perfect" or config.mode == SINGLE else list(config.accuracies)
    return [(float(s), a) for s in config.sigma_ranges for a in accs]


def _run_chunk(args):
    config, trials, grid = args
    out = []
    for t in trials:
        try:
            prep = prepare_trial(config, t)
            out.append([evaluate_trial(config, prep, s, a) for s, a in grid])
        except Exception as exc:
            raise TrialError(f"trial {t} (master seed {config.seed}) failed: {exc}") from exc
    return out


def run_campaign(config: CampaignConfig, grid=None) -> CampaignReport:
    """All trials at every grid point; deterministic for a given config.

    Trials are prepared once and evaluated at each grid point. With
    ``workers > 1`` trials are spread over processes; results are merged in
    trial order, so the report does not depend on scheduling.
    """
    grid = grid_points(config) if grid is None else list(grid)
    trials = list(range(config.trials))
    if config.workers > 1:
        chunks = [trials[i::config.workers] for i in range(config.workers)]
        with concurrent.futures.ProcessPoolExecutor(config.workers) as pool:
            parts = list(pool.map(_run_chunk, [(config, c, grid) for c in chunks]))
        by_trial = {t: res for c, part in zip(chunks, parts) for t, res in zip(c, part)}
        rows = [by_trial[t] for t in trials]
    else:
        rows = _run_chunk((config, trials, grid))
    results = {g: [row[i] for row in rows] for i, g in enumerate(grid)}
    points = tuple(summarize(config, results[g], *g) for g in grid)
    return CampaignReport(config, points, results)


def compare_modes(config: CampaignConfig, sigma_range=0.5, accuracy=0.9):
    """Multi-RRU versus single-downlink campaigns on the same trial seeds."""
    multi = run_campaign(dataclasses.replace(config, mode=MULTI), [(sigma_range, accuracy)])
    single = run_campaign(dataclasses.replace(config, mode=SINGLE), [(sigma_range, None)])
    return multi, single


def comparison_summary(multi: CampaignReport, single: CampaignReport):
    m, s = multi.points[0], single.points[0]
    ratio = m.median_error / s.median_error if s.median_error > 0 else float("nan")
    return {
        "version": 1,
        "sigma_range": m.sigma_range,
        "accuracy": m.accuracy,
        "trials": m.trials,
        "multi": {k: _json_num(v) for k, v in dataclasses.asdict(m).items()},
        "single": {k: _json_num(v) for k, v in dataclasses.asdict(s).items()},
        "median_ratio": _json_num(ratio),
    }


def dump_json(obj):
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"
