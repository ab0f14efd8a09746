"""File formats: measurement archives (.npz), flat tensor dumps and path tables (CSV)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .channel import PathSet
from .config import ScenarioConfig
from .errors import ShapeMismatch
from .measurement import MeasurementTensor, TrainingOperators

PATH_COLUMNS = ("theta_e", "phi_a", "psi", "tau", "u", "gamma_re", "gamma_im")

TENSOR_HEADER = """\
# reception tensor dump, one entry per row
# dims: Q={q} T_a={t} P={p}
# order: q fastest, then t, then p (1-based indices)
"""


def save_measurement(path, meas: MeasurementTensor, cfg: ScenarioConfig, paths: PathSet | None = None) -> None:
    ops = meas.operators
    arrays = dict(data=meas.data, w=ops.w, F=ops.F, v=ops.v, h_tilde=ops.h_tilde,
                  sigma2=meas.sigma2, snr_linear=meas.snr_linear,
                  config=np.array(cfg.canonical_json()))
    if paths is not None:
        arrays.update(theta_e=paths.theta_e, phi_a=paths.phi_a, psi=paths.psi, u=paths.u, gamma=paths.gamma)
    np.savez(path, **arrays)


def load_measurement(path) -> tuple[MeasurementTensor, ScenarioConfig, PathSet | None]:
    with np.load(path, allow_pickle=False) as z:
        cfg = ScenarioConfig.from_dict(json.loads(str(z["config"])))
        ops = TrainingOperators(z["w"], z["F"], z["v"], z["h_tilde"])
        meas = MeasurementTensor(z["data"], ops, float(z["sigma2"]), float(z["snr_linear"]))
        paths = None
        if "u" in z.files:
            paths = PathSet(z["theta_e"], z["phi_a"], z["psi"], z["u"], z["gamma"])
    if meas.data.shape != cfg.tensor_shape:
        raise ShapeMismatch(f"tensor shape {meas.data.shape} does not match config {cfg.tensor_shape}")
    return meas, cfg, paths


def write_tensor_csv(path, data: np.ndarray) -> None:
    Q, T, P = data.shape
    with open(path, "w", newline="") as fh:
        fh.write(TENSOR_HEADER.format(q=Q, t=T, p=P))
        w = csv.writer(fh)
        w.writerow(["q", "t", "p", "re", "im"])
        for p in range(P):
            for t in range(T):
                for q in range(Q):
                    x = data[q, t, p]
                    w.writerow([q + 1, t + 1, p + 1, repr(float(x.real)), repr(float(x.imag))])


def read_tensor_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for rec in csv.DictReader(lines):
        rows.append((int(rec["q"]), int(rec["t"]), int(rec["p"]), float(rec["re"]), float(rec["im"])))
    arr = np.array(rows)
    Q, T, P = (int(arr[:, k].max()) for k in range(3))
    out = np.zeros((Q, T, P), dtype=complex)
    idx = arr[:, :3].astype(int) - 1
    out[idx[:, 0], idx[:, 1], idx[:, 2]] = arr[:, 3] + 1j * arr[:, 4]
    return out


def path_rows(paths: PathSet) -> list[list[str]]:
    return [[repr(float(x)) for x in (p.theta_e, p.phi_a, p.psi, p.tau, p.u, p.gamma.real, p.gamma.imag)]
            for p in paths]


def write_paths_csv(path, paths: PathSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PATH_COLUMNS)
        w.writerows(path_rows(paths))


def read_paths_csv(path) -> PathSet:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    recs = list(csv.DictReader(lines))
    col = lambda k: [float(r[k]) for r in recs]  # noqa: E731
    gamma = np.array(col("gamma_re")) + 1j * np.array(col("gamma_im"))
    return PathSet(col("theta_e"), col("phi_a"), col("psi"), col("u"), gamma)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
