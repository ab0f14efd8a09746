"""Monte Carlo sweeps: per-trial estimation, NMSE metrics, CRLB reference and CSV output."""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy
from scipy.optimize import linear_sum_assignment

from .channel import PathSet, delay_generator, irs_nf_responses, sample_paths, ue_ff_response
from .config import ScenarioConfig
from .crlb import crlb_report
from .errors import EstimationError, UniquenessViolation, ZeroReference
from .estimator import Codebooks, EstimationResult, estimate
from .measurement import TrainingOperators, add_noise, make_training_operators, synthesize_noiseless
from .tensor import nmode_product_chain, superdiagonal

log = logging.getLogger(__name__)

FAMILIES = ("theta", "phi", "psi", "tau", "gamma", "channel")
SUMMARY_COLUMNS = ("snr_db", "family", "median_nmse_db", "mean_nmse_db", "crlb_db", "trials_ok", "trials_failed")

# stream tags for SeedSequence spawn keys
_PATHS, _OPS, _NOISE = 0, 1, 2


def db(x: float) -> float:
    return 10 * math.log10(x) if x > 0 else -math.inf


def nmse(true_values, estimates) -> float:
    """||p - p_hat||^2 / ||p||^2."""
    p = np.asarray(true_values)
    q = np.asarray(estimates)
    ref = float(np.vdot(p, p).real)
    if ref == 0:
        raise ZeroReference("reference vector has zero norm")
    d = p - q
    return float(np.vdot(d, d).real) / ref


def channel_tensor(paths: PathSet, cfg: ScenarioConfig) -> np.ndarray:
    """N_r x N_t x P channel tensor, superdiagonal core times (A_R, conj(A_U), C, gamma^T)."""
    A_R = irs_nf_responses(paths.theta_e, paths.phi_a, paths.u, cfg).T
    A_U = ue_ff_response(paths.psi, cfg).T
    C = delay_generator(paths.tau, cfg)[None, :] ** np.arange(1, cfg.p + 1)[:, None]
    core = superdiagonal(4, len(paths))
    return nmode_product_chain(core, [A_R, A_U.conj(), C, paths.gamma[None, :]])


def channel_nmse(paths_true: PathSet, result: EstimationResult | PathSet, cfg: ScenarioConfig) -> float:
    est = result.paths if isinstance(result, EstimationResult) else result
    return nmse(channel_tensor(paths_true, cfg), channel_tensor(est, cfg))


def match_paths(truth: PathSet, est: PathSet) -> PathSet:
    """Reorder ``est`` so that the total |tau_hat - tau| against ``truth`` is minimal."""
    cost = np.abs(truth.tau[:, None] - est.tau[None, :])
    _, cols = linear_sum_assignment(cost)
    return est.permuted(cols)


def family_values(paths: PathSet) -> dict[str, np.ndarray]:
    return {"theta": paths.theta_e, "phi": paths.phi_a, "psi": paths.psi, "tau": paths.tau,
            "gamma": paths.gamma}


@dataclass(frozen=True)
class SweepSpec:
    snr_db: Sequence[float] = (0.0, 10.0, 20.0, 30.0)
    trials: int = 100
    distance_range: tuple[float, float] | None = None
    overrides: dict = field(default_factory=dict)
    master_seed: int = 0
    out: str | None = None
    on_grid: bool = False
    workers: int = 1
    with_crlb: bool = True

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trial count must be >= 1")
        if len(self.snr_db) == 0:
            raise ValueError("SNR list must be nonempty")
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))

    def scenario(self, base: ScenarioConfig | None = None) -> ScenarioConfig:
        cfg = base or ScenarioConfig()
        changes = dict(self.overrides)
        if self.distance_range is not None:
            changes["dist_range"] = tuple(self.distance_range)
        return cfg.replace(**changes) if changes else cfg


@dataclass
class TrialRecord:
    trial: int
    snr_db: float
    ok: bool
    nmse: dict = field(default_factory=dict)
    mse: dict = field(default_factory=dict)
    crlb: dict = field(default_factory=dict)  # raw bounds at this trial's sigma^2
    crlb_norm: dict = field(default_factory=dict)  # bounds divided by the squared reference norm
    snr_realized_db: float = math.nan
    sigma2: float = math.nan
    diagnostics: dict = field(default_factory=dict)
    error: str = ""


def draw_scenario(cfg: ScenarioConfig, master_seed: int, trial: int,
                  codebooks: Codebooks | None = None) -> tuple[PathSet, TrainingOperators]:
    """Paths and training operators of one trial; independent of the SNR index."""
    rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(_PATHS, trial)))
    paths = sample_paths(cfg, rng, grid=codebooks)
    ops = make_training_operators(cfg, seed=np.random.SeedSequence(master_seed, spawn_key=(_OPS, trial)))
    return paths, ops


def noise_seed(master_seed: int, trial: int, snr_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(_NOISE, trial, snr_index))


def run_trial(cfg: ScenarioConfig, spec: SweepSpec, trial: int, codebooks: Codebooks) -> list[TrialRecord]:
    """One scenario evaluated at every SNR of the sweep."""
    paths, ops = draw_scenario(cfg, spec.master_seed, trial, codebooks if spec.on_grid else None)
    X = synthesize_noiseless(paths, ops, cfg)
    truth = family_values(paths)
    h_ref = channel_tensor(paths, cfg)
    unit = crlb_report(paths, ops, cfg, 1.0) if spec.with_crlb else None

    out = []
    for k, snr in enumerate(spec.snr_db):
        meas = add_noise(X, snr, noise_seed(spec.master_seed, trial, k), operators=ops)
        rec = TrialRecord(trial, snr, ok=False, sigma2=meas.sigma2, snr_realized_db=db(meas.snr_linear))
        if unit is not None and meas.sigma2 > 0:
            rep = unit.scaled(meas.sigma2)
            for f in FAMILIES:
                ref = np.vdot(h_ref, h_ref).real if f == "channel" else np.vdot(truth[f], truth[f]).real
                rec.crlb[f] = rep.family(f)
                rec.crlb_norm[f] = rep.family(f) / ref
        try:
            res = estimate(meas, cfg, codebooks)
        except EstimationError as exc:
            rec.error = f"{type(exc).__name__}: {exc}"
            log.info("trial %d at %g dB failed: %s", trial, snr, rec.error)
            out.append(rec)
            continue
        est = match_paths(paths, res.paths)
        got = family_values(est)
        for f in FAMILIES[:-1]:
            rec.nmse[f] = nmse(truth[f], got[f])
            d = truth[f] - got[f]
            rec.mse[f] = float(np.vdot(d, d).real)
        h_est = channel_tensor(est, cfg)
        rec.nmse["channel"] = nmse(h_ref, h_est)
        rec.mse["channel"] = float(np.vdot(h_ref - h_est, h_ref - h_est).real)
        rec.diagnostics = {"z_moduli": res.z_moduli.tolist(), "evd_cond": res.evd_cond,
                           "leakage": res.leakage}
        rec.ok = True
        out.append(rec)
    return out


def _trial_job(args):
    cfg, spec, trial, cb = args
    return run_trial(cfg, spec, trial, cb)


@dataclass
class SweepResult:
    spec: SweepSpec
    config: ScenarioConfig
    records: list[TrialRecord]
    rows: list[dict]


def summarize(records: Sequence[TrialRecord], snr_list: Sequence[float]) -> list[dict]:
    rows = []
    for snr in snr_list:
        recs = [r for r in records if r.snr_db == snr]
        ok = [r for r in recs if r.ok]
        for f in FAMILIES:
            vals = np.array([r.nmse[f] for r in ok])
            bounds = np.array([r.crlb_norm[f] for r in recs if f in r.crlb_norm])
            rows.append({
                "snr_db": float(snr), "family": f,
                "median_nmse_db": db(float(np.median(vals))) if len(vals) else math.nan,
                "mean_nmse_db": db(float(np.mean(vals))) if len(vals) else math.nan,
                "crlb_db": db(float(np.mean(bounds))) if len(bounds) else math.nan,
                "trials_ok": len(ok), "trials_failed": len(recs) - len(ok),
            })
    return rows


def run_sweep(spec: SweepSpec, base: ScenarioConfig | None = None) -> SweepResult:
    """Run every trial at every SNR; output depends only on ``spec`` and ``base``."""
    cfg = spec.scenario(base)
    if not cfg.uniqueness_holds():
        raise UniquenessViolation("scenario violates min((P-1)*T_a, Q) >= L")
    cb = Codebooks.from_config(cfg)
    jobs = [(cfg, spec, t, cb) for t in range(spec.trials)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as ex:
            per_trial = list(ex.map(_trial_job, jobs))
    else:
        per_trial = [_trial_job(j) for j in jobs]
    records = [r for batch in per_trial for r in batch]
    result = SweepResult(spec, cfg, records, summarize(records, spec.snr_db))
    if spec.out:
        emit_results(result, spec.out)
    return result


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def manifest(result: SweepResult) -> dict:
    spec = result.spec
    return {
        "config": result.config.to_dict(),
        "config_sha256": result.config.digest(),
        "master_seed": spec.master_seed,
        "snr_db": list(spec.snr_db),
        "trials": spec.trials,
        "on_grid": spec.on_grid,
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
    }


def emit_results(result: SweepResult, path) -> tuple[Path, Path]:
    """Write the summary CSV and a JSON run manifest next to it (``<stem>.manifest.json``)."""
    if not result.rows:
        raise ValueError("nothing to write: result table is empty")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for row in result.rows:
            w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    mpath = path.with_name(path.stem + ".manifest.json")
    mpath.write_text(json.dumps(manifest(result), indent=2, sort_keys=True) + "\n")
    return path, mpath


def read_results(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append({
                "snr_db": float(rec["snr_db"]), "family": rec["family"],
                "median_nmse_db": float(rec["median_nmse_db"]), "mean_nmse_db": float(rec["mean_nmse_db"]),
                "crlb_db": float(rec["crlb_db"]), "trials_ok": int(rec["trials_ok"]),
                "trials_failed": int(rec["trials_failed"]),
            })
    return rows
