"""Brute-force (lambda, delta) grid search with seeded, averaged trials."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
import hashlib
import json
import math

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .dcs import DcsParams, dcs_solve, recover_gradients
from .errors import ConfigurationError, EmptyResultError, NumericalFailure
from .metrics import score
from .noise import NoiseSpec, check_seed, derive_seed
from .operators import assemble_system, default_m

DEFAULT_LAMBDAS = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
DEFAULT_DELTAS = (0.1, 1.0, 2.0, 5.0, 10.0)
SELECT_MODES = ("mean_snr", "per_trial_average")


@dataclass(frozen=True)
class HyperGrid:
    lambdas: tuple = DEFAULT_LAMBDAS
    deltas: tuple = DEFAULT_DELTAS

    def __post_init__(self):
        for name, lo_ok in (("lambdas", lambda v: v >= 0), ("deltas", lambda v: v > 0)):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ConfigurationError(f"grid.{name} must be non-empty")
            if not all(math.isfinite(v) and lo_ok(v) for v in vals):
                raise ConfigurationError(f"grid.{name} has out-of-range values: {vals}")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigurationError(f"grid.{name} must be strictly increasing: {vals}")
            object.__setattr__(self, name, vals)

    @property
    def size(self):
        return len(self.lambdas) * len(self.deltas)


@dataclass(frozen=True)
class SweepConfig:
    """One sweep: a noise model applied to every listed surface source."""

    surfaces: tuple = ()
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec.default("gaussian"))
    grid: HyperGrid = field(default_factory=HyperGrid)
    trials: int = 10
    m_ratio: float = 0.5
    base_seed: int = 0
    dcs: DcsParams = field(default_factory=DcsParams)
    select_mode: str = "mean_snr"
    fix_sensing: bool = False

    def __post_init__(self):
        if int(self.trials) < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        if not 0 < self.m_ratio <= 1:
            raise ConfigurationError(f"m_ratio must lie in (0, 1], got {self.m_ratio}")
        if self.select_mode not in SELECT_MODES:
            raise ConfigurationError(f"select_mode must be one of {SELECT_MODES}, got {self.select_mode!r}")
        object.__setattr__(self, "base_seed", check_seed(self.base_seed))
        object.__setattr__(self, "surfaces", tuple(self.surfaces))

    def to_dict(self):
        d = asdict(self)
        d["surfaces"] = list(self.surfaces)
        d["grid"] = {"lambdas": list(self.grid.lambdas), "deltas": list(self.grid.deltas)}
        return d

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class SweepResult:
    surface: str
    noise: dict
    records: list
    best: dict
    provenance: dict

    def to_dict(self):
        return {"surface": self.surface, "noise": self.noise, "records": self.records,
                "best": self.best, "provenance": self.provenance}

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=1) + "\n"


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def trial_seed(cfg, label, li, di, k):
    return derive_seed(cfg.base_seed, label, li, di, k)


def trial_streams(cfg, label, li, di, k):
    """(psi_x, psi_y, noise) seeds for one trial of one cell."""
    s = trial_seed(cfg, label, li, di, k)
    if cfg.fix_sensing:
        sx = derive_seed(cfg.base_seed, label, "psi_x")
        sy = derive_seed(cfg.base_seed, label, "psi_y")
    else:
        sx, sy = derive_seed(s, "psi_x"), derive_seed(s, "psi_y")
    return sx, sy, derive_seed(s, "noise")


def _run_trial(task):
    surface, cfg, li, di, k = task
    lam, delta = cfg.grid.lambdas[li], cfg.grid.deltas[di]
    sx, sy, sn = trial_streams(cfg, surface.label, li, di, k)
    with threadpool_limits(1):
        m = default_m(surface.dims.n, cfg.m_ratio)
        sys = assemble_system(surface, sx, sy, m, cfg.noise, sn)
        params = replace(cfg.dcs, lam=lam, delta=delta)
        try:
            c, state, rep = dcs_solve(sys, params)
            snr = score(surface, recover_gradients(c, sys)).snr_surface_db
        except NumericalFailure as exc:
            return (li, di, k, None, str(exc))
    return (li, di, k, snr, None)


def _cell_record(cfg, label, li, di, outcomes):
    snrs = [outcomes[k][0] for k in range(cfg.trials)]
    ok = [s for s in snrs if s is not None]
    rec = {
        "lambda": cfg.grid.lambdas[li],
        "delta": cfg.grid.deltas[di],
        "lambda_index": li,
        "delta_index": di,
        "trials": cfg.trials,
        "trial_snrs": snrs,
        "failures": len(snrs) - len(ok),
        "seeds": [trial_seed(cfg, label, li, di, k) for k in range(cfg.trials)],
    }
    if ok:
        rec["mean_snr_db"] = float(np.mean(ok))
        rec["std_snr_db"] = float(np.std(ok))
        rec["error"] = None
    else:
        rec["mean_snr_db"] = float("nan")
        rec["std_snr_db"] = float("nan")
        errs = [outcomes[k][1] for k in range(cfg.trials)]
        rec["error"] = f"cell failure: all {cfg.trials} trials failed ({errs[0]})"
    return rec


def _execute(tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [_run_trial(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial, tasks, chunksize=1))


def _records(surface, cfg, cells, workers):
    tasks = [(surface, cfg, li, di, k) for li, di in cells for k in range(cfg.trials)]
    outcomes = {}
    for li, di, k, snr, err in _execute(tasks, workers):
        outcomes.setdefault((li, di), {})[k] = (snr, err)
    return [_cell_record(cfg, surface.label, li, di, outcomes[(li, di)])
            for li, di in sorted(cells)]


def run_cell(surface, cfg, lam, delta, workers=1):
    """Run every trial of one (lambda, delta) cell; returns the cell record.

    Trials that raise :class:`NumericalFailure` are counted in ``failures`` and
    left out of the mean.  If all of them fail the record carries an
    ``error`` string instead of raising.
    """
    try:
        li = cfg.grid.lambdas.index(float(lam))
        di = cfg.grid.deltas.index(float(delta))
    except ValueError:
        raise ConfigurationError(f"({lam}, {delta}) is not a cell of the configured grid") from None
    return _records(surface, cfg, [(li, di)], workers)[0]


def select_optimal(result):
    """``(lambda*, delta*)`` of a result, per its selection mode.

    ``mean_snr``: argmax of the cell means, ties to smaller lambda then
    smaller delta.  ``per_trial_average``: the same argmax taken per trial
    index, then the chosen lambdas and deltas are averaged.
    """
    best = _best(result.records, result.provenance.get("select_mode", "mean_snr"))
    return best["lambda_star"], best["delta_star"]


def _argmax(cells):
    # cells: (snr, lambda, delta)
    return min(cells, key=lambda c: (-c[0], c[1], c[2]))


def _best(records, mode):
    usable = [r for r in records if r["failures"] < r["trials"]]
    if not usable:
        raise EmptyResultError("every cell failed; no optimum to select")
    if mode == "mean_snr":
        snr, lam, delta = _argmax([(r["mean_snr_db"], r["lambda"], r["delta"]) for r in usable])
        return {"lambda_star": lam, "delta_star": delta, "mean_snr_db": snr}
    picks = []
    for k in range(usable[0]["trials"]):
        cells = [(r["trial_snrs"][k], r["lambda"], r["delta"])
                 for r in usable if r["trial_snrs"][k] is not None]
        if cells:
            picks.append(_argmax(cells))
    if not picks:
        raise EmptyResultError("no trial index has a successful cell")
    return {"lambda_star": float(np.mean([p[1] for p in picks])),
            "delta_star": float(np.mean([p[2] for p in picks])),
            "mean_snr_db": float(np.mean([p[0] for p in picks]))}


def run_grid(surface, cfg, workers=1):
    """Evaluate every grid cell for ``surface`` and pick the optimum.

    The result depends only on ``(surface, cfg)``; ``workers`` changes the
    wall time, not the numbers.
    """
    cells = [(li, di) for li in range(len(cfg.grid.lambdas)) for di in range(len(cfg.grid.deltas))]
    records = _records(surface, cfg, cells, workers)
    try:
        best = _best(records, cfg.select_mode)
    except EmptyResultError:
        best = None
    provenance = {
        "config_hash": cfg.digest(),
        "base_seed": cfg.base_seed,
        "seed_count": sum(len(r["seeds"]) for r in records),
        "select_mode": cfg.select_mode,
        "fix_sensing": cfg.fix_sensing,
        "m": default_m(surface.dims.n, cfg.m_ratio),
        "n": surface.dims.n,
        "grid_shape": list(surface.dims.shape),
        "code_version": __version__,
    }
    return SweepResult(surface=surface.label, noise=cfg.noise.to_dict(), records=records,
                       best=best, provenance=provenance)

