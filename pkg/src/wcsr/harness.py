"""Seeded Monte Carlo experiment runner and result emission."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cooperative import FusionConfig, fuse_and_recover, make_rescan, perturb_observation
from .lowrank import (
    OccupancyMatrix,
    binarize_occupancy,
    build_anchor_grid,
    complete_global,
    complete_local,
    sample_mask,
)
from .recovery import SOLVERS, Metrics, SolverOptions, default_threshold, evaluate, solve, universal_lambda
from .sensing import build_sensing_matrix, measure
from .spectrum import OccupancyProfile, SensorNode, draw_snapshot

EXPERIMENTS = ("error_vs_snr", "error_vs_m", "coop_vs_gap", "lowrank_pipeline")
CSV_FIELDS = ("sweep", "solver", "nmse", "nmse_se", "pd", "pd_se", "pfa", "pfa_se", "trials")
COOP_SCHEMES = ("cooperative", "sequential")
LOWRANK_SCHEMES = ("local", "global")


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class SensingParams:
    m: int = 60
    snr_db: float = 15.0
    design: str = "uniform"


@dataclass(frozen=True)
class CoopParams:
    num_nodes: int = 2
    branches: int = 8
    required_m: int = 16
    snr_db: float = 20.0


@dataclass(frozen=True)
class LowrankParams:
    num_bands: int = 60
    nodes_per_region: int = 20
    radius: float = 50.0
    pattern_density: float = 0.3
    mask_mode: str = "random"
    refine_boundary: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    profile: OccupancyProfile | None
    sweep: tuple
    trials: int
    seed: int
    solvers: tuple = SOLVERS
    lambda_scale: float = 1.0
    max_iter: int = 2000
    tol: float = 1e-6
    epsilon: float = 0.1
    sparsity: int | None = None
    sensing: SensingParams = field(default_factory=SensingParams)
    coop: CoopParams = field(default_factory=CoopParams)
    lowrank: LowrankParams = field(default_factory=LowrankParams)

    def with_overrides(self, **kw) -> ExperimentConfig:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return ExperimentConfig(**d)

    def solver_names(self) -> tuple:
        if self.experiment == "coop_vs_gap":
            return COOP_SCHEMES
        if self.experiment == "lowrank_pipeline":
            return LOWRANK_SCHEMES
        return self.solvers


@dataclass
class ResultRow:
    sweep: float
    solver: str
    nmse: float
    nmse_se: float
    pd: float
    pd_se: float
    pfa: float
    pfa_se: float
    trials: int


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def records(self) -> list[dict]:
        return [asdict(r) for r in self.rows]

    def row(self, sweep, solver) -> ResultRow:
        for r in self.rows:
            if r.solver == solver and r.sweep == sweep:
                return r
        raise KeyError((sweep, solver))


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def _group(raw: dict, key: str, cls):
    sub = raw.get(key, {})
    if not isinstance(sub, dict):
        raise ConfigError(key, "must be an object")
    known = set(cls.__dataclass_fields__)
    extra = set(sub) - known
    if extra:
        raise ConfigError(f"{key}.{sorted(extra)[0]}", "unknown field")
    try:
        return cls(**sub)
    except TypeError as exc:
        raise ConfigError(key, str(exc)) from exc


def parse_config(raw: dict, seed_override: int | None = None) -> ExperimentConfig:
    """Validate a config document and build an :class:`ExperimentConfig`.

    Seed precedence: ``seed_override``, then the document's ``seed``, then
    the ``WCSR_SEED`` environment variable, then 0.
    """
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {exp!r}")

    trials = raw.get("trials")
    if not isinstance(trials, int) or isinstance(trials, bool) or trials < 1:
        raise ConfigError("trials", f"must be an integer >= 1, got {trials!r}")

    sweep = raw.get("sweep")
    if not isinstance(sweep, list) or not sweep:
        raise ConfigError("sweep", "must be a nonempty list")
    for v in sweep:
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ConfigError("sweep", f"values must be finite numbers, got {v!r}")

    if seed_override is not None:
        seed = seed_override
    elif "seed" in raw:
        seed = raw["seed"]
    else:
        seed = int(os.environ.get("WCSR_SEED", "0"))
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed", f"must be a 64-bit unsigned integer, got {seed!r}")

    profile = None
    if exp != "lowrank_pipeline" or "profile" in raw:
        if "profile" not in raw:
            raise ConfigError("profile", "required for this experiment")
        try:
            profile = OccupancyProfile.from_dict(raw["profile"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("profile", str(exc)) from exc

    solvers = raw.get("solvers", list(SOLVERS))
    if not isinstance(solvers, list) or not solvers:
        raise ConfigError("solvers", "must be a nonempty list")
    for s in solvers:
        if s not in SOLVERS:
            raise ConfigError("solvers", f"unknown solver {s!r}")
    if len(set(solvers)) != len(solvers):
        raise ConfigError("solvers", "duplicate solver names")

    opts = raw.get("solver_options", {})
    if not isinstance(opts, dict):
        raise ConfigError("solver_options", "must be an object")
    allowed = {"lambda_scale", "max_iter", "tol", "epsilon", "sparsity"}
    for key in opts:
        if key not in allowed:
            raise ConfigError(f"solver_options.{key}", "unknown field")
    lam = opts.get("lambda_scale", 1.0)
    if not isinstance(lam, (int, float)) or lam < 0:
        raise ConfigError("solver_options.lambda_scale", "must be >= 0")
    max_iter = opts.get("max_iter", 2000)
    if not isinstance(max_iter, int) or max_iter < 1:
        raise ConfigError("solver_options.max_iter", "must be an integer >= 1")
    tol = opts.get("tol", 1e-6)
    if not isinstance(tol, (int, float)) or tol <= 0:
        raise ConfigError("solver_options.tol", "must be > 0")
    eps = opts.get("epsilon", 0.1)
    if not isinstance(eps, (int, float)) or eps <= 0:
        raise ConfigError("solver_options.epsilon", "must be > 0")
    sparsity = opts.get("sparsity")
    if sparsity is not None and (not isinstance(sparsity, int) or sparsity < 1):
        raise ConfigError("solver_options.sparsity", "must be an integer >= 1")

    sensing = _group(raw, "sensing", SensingParams)
    coop = _group(raw, "cooperative", CoopParams)
    lowrank = _group(raw, "lowrank", LowrankParams)

    if exp == "error_vs_m":
        for v in sweep:
            if int(v) != v or v < 1:
                raise ConfigError("sweep", f"measurement counts must be integers >= 1, got {v!r}")
    elif exp == "error_vs_snr" and sensing.m < 1:
        raise ConfigError("sensing.m", "must be >= 1")
    if sensing.design not in ("uniform", "nonuniform"):
        raise ConfigError("sensing.design", f"unknown design {sensing.design!r}")
    if exp == "coop_vs_gap":
        if any(v < 0 for v in sweep):
            raise ConfigError("sweep", "gaps must be >= 0")
        if coop.num_nodes < 1 or coop.branches < 1 or coop.required_m < 1:
            raise ConfigError("cooperative", "num_nodes, branches and required_m must be >= 1")
    if exp == "lowrank_pipeline":
        if any(not 0 < v <= 1 for v in sweep):
            raise ConfigError("sweep", "per-node fractions must lie in (0, 1]")
        if lowrank.mask_mode not in ("random", "contiguous"):
            raise ConfigError("lowrank.mask_mode", f"unknown mode {lowrank.mask_mode!r}")
        if lowrank.num_bands < 1 or lowrank.nodes_per_region < 1 or lowrank.radius <= 0:
            raise ConfigError("lowrank", "num_bands, nodes_per_region must be >= 1 and radius > 0")

    return ExperimentConfig(
        experiment=exp,
        profile=profile,
        sweep=tuple(sweep),
        trials=trials,
        seed=seed,
        solvers=tuple(solvers),
        lambda_scale=float(lam),
        max_iter=max_iter,
        tol=float(tol),
        epsilon=float(eps),
        sparsity=sparsity,
        sensing=sensing,
        coop=coop,
        lowrank=lowrank,
    )


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path} is not valid JSON: {exc}") from exc
    return parse_config(raw, seed_override)


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------


def trial_rng(seed: int, sweep_index: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, sweep_index, trial_index])


def _noise_for_snr(signal_energy: float, m: int, snr_db: float, fallback_energy: float) -> float:
    # per-measurement SNR: ||Ax||^2 / (m sigma^2)
    energy = signal_energy if signal_energy > 0 else fallback_energy
    return math.sqrt(energy / (m * 10.0 ** (snr_db / 10.0)))


def _opts(cfg: ExperimentConfig, sigma: float, n: int) -> SolverOptions:
    return SolverOptions(lam=universal_lambda(sigma, n, cfg.lambda_scale), max_iter=cfg.max_iter, tol=cfg.tol)


def _sparse_trial(cfg: ExperimentConfig, value, rng) -> dict:
    prof = cfg.profile
    if cfg.experiment == "error_vs_snr":
        m, snr = cfg.sensing.m, float(value)
    else:
        m, snr = int(value), cfg.sensing.snr_db
    snap = draw_snapshot(prof, rng=rng)
    x = snap.amplitudes
    ens = build_sensing_matrix(m, prof, cfg.sensing.design, rng)
    Ax = ens.matrix @ x
    sigma = _noise_for_snr(float(Ax @ Ax), m, snr, max(prof.expected_sparsity(), 1.0))
    ens.noise_std = sigma
    y = measure(ens, x, rng).y
    opts = _opts(cfg, sigma, prof.num_bands)
    out = {}
    for name in cfg.solvers:
        res = solve(name, y, ens.matrix, prof, opts, k=cfg.sparsity, epsilon=cfg.epsilon)
        out[name] = evaluate(res.x_hat, x, snap.occupancy, default_threshold(res.x_hat, sigma))
    return out


def _coop_trial(cfg: ExperimentConfig, value, rng, trace=None) -> dict:
    prof, cp = cfg.profile, cfg.coop
    gamma = float(value)
    snap = draw_snapshot(prof, rng=rng)
    x = snap.amplitudes
    master = build_sensing_matrix(cp.required_m, prof, cfg.sensing.design, rng)
    Ax = master.matrix @ x
    sigma = _noise_for_snr(float(Ax @ Ax), cp.required_m, cp.snr_db, max(prof.expected_sparsity(), 1.0))
    opts = _opts(cfg, sigma, prof.num_bands)
    solver = cfg.solvers[0]
    nodes = [SensorNode(i, (float(i), 0.0), cp.branches, sigma) for i in range(cp.num_nodes)]
    obs = {0: x}
    for nd in nodes[1:]:
        obs[nd.id] = perturb_observation(x, gamma, rng) if x.any() else x.copy()
    base = int(rng.integers(2**63))
    fusion = FusionConfig(cp.required_m, solver=solver, sequential_fallback=True, epsilon=cfg.epsilon,
                          sparsity=cfg.sparsity)

    rescan_coop = make_rescan(nodes, obs, master, base)
    scans = rescan_coop(0)
    coop = fuse_and_recover(scans, fusion, prof, opts, rescan=rescan_coop)
    # sequential baseline: node 0 alone repeats scans on its own observation
    rescan_seq = make_rescan(nodes[:1], {0: x}, master, base + 1)
    seq_scans = rescan_seq(0)
    seq = fuse_and_recover(seq_scans, fusion, prof, opts, rescan=rescan_seq)
    if trace is not None:
        trace.append({"sweep": gamma, "scheme": "cooperative", "scan_rounds": coop.info["scan_rounds"],
                      "scans": [s.to_record() for s in scans]})
        trace.append({"sweep": gamma, "scheme": "sequential", "scan_rounds": seq.info["scan_rounds"],
                      "scans": [s.to_record() for s in seq_scans]})
    return {
        "cooperative": evaluate(coop.x_hat, x, snap.occupancy, default_threshold(coop.x_hat, sigma)),
        "sequential": evaluate(seq.x_hat, x, snap.occupancy, default_threshold(seq.x_hat, sigma)),
    }


def two_region_field(lp: LowrankParams, rng):
    """Synthetic occupancy field: two sub-regions, two band patterns each.

    Returns ``(truth, positions, grid)``; the truth matrix has rank <= 2 on
    each region's columns and rank up to 4 overall.
    """
    R = lp.radius
    s = R * math.sqrt(2.0)
    grid = build_anchor_grid((0.0, 0.0, 2.0 * s, s), R)
    n = lp.num_bands
    pats = (rng.random((n, 4)) < lp.pattern_density).astype(float)
    cols, pos = [], []
    for reg in range(2):
        centre = grid.anchors[reg]
        for v in range(lp.nodes_per_region):
            ang = rng.uniform(0.0, 2.0 * math.pi)
            rad = 0.4 * R * math.sqrt(rng.random())
            pos.append(centre + rad * np.array([math.cos(ang), math.sin(ang)]))
            cols.append(pats[:, 2 * reg + v % 2])
    return np.array(cols).T, np.array(pos), grid


def _classification(X, truth, observed) -> tuple:
    occ = truth > 0
    dec = binarize_occupancy(X, observed=observed).astype(bool)
    denom = float(np.sum(truth**2))
    nmse = float(np.sum((X - truth) ** 2) / denom) if denom > 0 else math.nan
    pd = float(np.sum(dec & occ) / occ.sum()) if occ.any() else math.nan
    pfa = float(np.sum(dec & ~occ) / (~occ).sum()) if (~occ).any() else math.nan
    return nmse, pd, pfa


def _lowrank_trial(cfg: ExperimentConfig, value, rng) -> dict:
    lp = cfg.lowrank
    truth, pos, grid = two_region_field(lp, rng)
    mask = sample_mask(truth.shape[0], truth.shape[1], float(value), lp.mask_mode, rng)
    obs = OccupancyMatrix(truth, mask, pos)
    local = complete_local(obs, grid, refine_boundary=lp.refine_boundary)
    glob = complete_global(obs)
    return {
        "local": Metrics(*_classification(local.values, truth, obs)),
        "global": Metrics(*_classification(glob.values, truth, obs)),
    }


def run_trial(cfg: ExperimentConfig, sweep_index: int, trial_index: int, trace=None) -> dict:
    """Metrics per solver/scheme for one trial on its own random sub-stream."""
    rng = trial_rng(cfg.seed, sweep_index, trial_index)
    value = cfg.sweep[sweep_index]
    if cfg.experiment in ("error_vs_snr", "error_vs_m"):
        return _sparse_trial(cfg, value, rng)
    if cfg.experiment == "coop_vs_gap":
        return _coop_trial(cfg, value, rng, trace)
    return _lowrank_trial(cfg, value, rng)


def run_trials(cfg: ExperimentConfig, sweep_index: int, trial_indices, threads: int = 1) -> list:
    trial_indices = list(trial_indices)
    if threads == 1 or len(trial_indices) < 2:
        return [run_trial(cfg, sweep_index, t) for t in trial_indices]
    workers = threads if threads > 0 else (os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: run_trial(cfg, sweep_index, t), trial_indices))


def _mean_se(values) -> tuple:
    a = np.asarray(values, dtype=float)
    a = a[~np.isnan(a)]
    if a.size == 0:
        return math.nan, math.nan
    mean = float(a.sum() / a.size)
    se = float(np.std(a, ddof=1) / math.sqrt(a.size)) if a.size > 1 else math.nan
    return mean, se


def aggregate(value, name: str, metrics: list, trials: int) -> ResultRow:
    nmse, nmse_se = _mean_se([mt.nmse for mt in metrics])
    pd, pd_se = _mean_se([mt.p_detect for mt in metrics])
    pfa, pfa_se = _mean_se([mt.p_false_alarm for mt in metrics])
    return ResultRow(value, name, nmse, nmse_se, pd, pd_se, pfa, pfa_se, trials)


def run_experiment(cfg: ExperimentConfig, threads: int = 1, trace: list | None = None) -> ResultTable:
    """Run every sweep point for ``cfg.trials`` trials and aggregate.

    Output is a pure function of ``cfg``; ``threads`` only changes speed.
    ``trace`` (coop_vs_gap only) collects the scan records of trial 0 at
    each sweep point.
    """
    table = ResultTable()
    for k, value in enumerate(cfg.sweep):
        per_trial = run_trials(cfg, k, range(cfg.trials), threads)
        if trace is not None and cfg.experiment == "coop_vs_gap":
            run_trial(cfg, k, 0, trace)
        for name in cfg.solver_names():
            table.rows.append(aggregate(value, name, [t[name] for t in per_trial], cfg.trials))
    return table


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_results(table: ResultTable, fmt: str = "csv") -> str:
    """Render ``table`` as CSV (fixed header) or a JSON array of row objects."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for d in table.records():
            w.writerow([_fmt(d[f]) for f in CSV_FIELDS])
        return buf.getvalue()
    if fmt == "json":
        records = [{f: _json_safe(d[f]) for f in CSV_FIELDS} for d in table.records()]
        return json.dumps(records, indent=1) + "\n"
    raise ValueError(f"unknown output format {fmt!r}")


def emit_results(table: ResultTable, path, fmt: str = "csv") -> Path:
    path = Path(path)
    text = format_results(table, fmt)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def read_results(path, fmt: str = "csv") -> ResultTable:
    """Load a table written by :func:`emit_results`."""
    path = Path(path)
    if fmt == "json":
        recs = [{k: (math.nan if v is None else v) for k, v in r.items()} for r in json.loads(path.read_text())]
    else:
        with open(path, newline="") as fh:
            recs = list(csv.DictReader(fh))
    rows = []
    for r in recs:
        d = {k: float(r[k]) for k in CSV_FIELDS if k not in ("solver", "trials")}
        rows.append(ResultRow(solver=r["solver"], trials=int(r["trials"]), **d))
    return ResultTable(rows)
