"""Window metrics (PRMSE / ROE), the multi-method comparison harness,
and report rendering in the per-sequence "PRMSE / ROE" table layout.

Every window is integrated over its one-second span from the
ground-truth initial state with the method's predicted bias removed;
PRMSE is the RMS of window-final position errors, ROE the RMS of the
geodesic angle between estimated and true final orientations (degrees).
Stochastic predictors are re-run with distinct seeds and their metrics
averaged; deterministic predictors run once.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffusion as diff
from .allan import random_walk_oracle
from .dataset import BiasTrack, Window, load_bias_csv, save_bias_csv
from .geometry import quat_to_rot, rotation_angle
from .imu_model import ImuIntrinsics, NoiseParams, correct_arrays
from .networks import Checkpoint, CheckpointError
from .strapdown import integrate_arrays

__all__ = [
    "WindowResult",
    "MethodReport",
    "prmse",
    "roe",
    "Predictor",
    "make_predictor",
    "KNOWN_METHODS",
    "evaluate_method",
    "report_from_results",
    "compare_report",
    "save_window_results",
    "load_window_results",
    "bias_trace_export",
]


@dataclass
class WindowResult:
    sequence_id: str
    window_index: int
    method: str
    run_index: int
    pos_err_m: float
    orient_err_deg: float
    bias_rmse_gyro: float = float("nan")
    bias_rmse_accel: float = float("nan")

    def __post_init__(self):
        if self.pos_err_m < 0 or self.orient_err_deg < 0:
            raise ValueError("errors must be non-negative")


@dataclass
class MethodReport:
    method: str
    runs: int
    config_digest: str
    per_sequence: dict = field(default_factory=dict)  # name -> {"prmse","roe"}
    average: dict = field(default_factory=dict)
    bias_rmse_gyro_median: float = float("nan")
    bias_rmse_accel_median: float = float("nan")


def prmse(pos_errors) -> float:
    """RMS over windows of the final-position error norm, meters."""
    e = np.asarray(pos_errors, dtype=float)
    if e.size == 0:
        raise ValueError("PRMSE of an empty window set")
    return float(np.sqrt(np.mean(e * e)))


def roe(orient_errors_deg) -> float:
    """RMS over windows of the final-orientation geodesic angle, degrees."""
    e = np.asarray(orient_errors_deg, dtype=float)
    if e.size == 0:
        raise ValueError("ROE of an empty window set")
    return float(np.sqrt(np.mean(e * e)))


# ---------------------------------------------------------------------------
# predictors

KNOWN_METHODS = ("zero-bias", "gt-bias", "random-walk-oracle", "diffusion", "regression")


class Predictor:
    """Maps windows to predicted bias tracks; subclasses set `stochastic`."""

    name = "base"
    stochastic = False

    def predict(self, windows: list[Window], rng) -> list[BiasTrack]:
        raise NotImplementedError


class ZeroBiasPredictor(Predictor):
    name = "zero-bias"

    def predict(self, windows, rng):
        return [BiasTrack.constant(w.imu.t, np.zeros(3), np.zeros(3)) for w in windows]


class GtBiasPredictor(Predictor):
    name = "gt-bias"

    def predict(self, windows, rng):
        return [w.gt_bias for w in windows]


class RandomWalkOraclePredictor(Predictor):
    name = "random-walk-oracle"
    stochastic = True

    def __init__(self, noise: NoiseParams, K: int = 50, intr: ImuIntrinsics | None = None):
        self.noise = noise
        self.K = K
        self.intr = intr or ImuIntrinsics()

    def predict(self, windows, rng):
        out = []
        for w in windows:
            track, _ = random_walk_oracle(w, self.noise, K=self.K, rng=rng, intr=self.intr)
            out.append(track)
        return out


class DiffusionPredictor(Predictor):
    name = "diffusion"
    stochastic = True

    def __init__(self, ckpt: Checkpoint, steps: int = 25, n_samples: int = 1):
        if ckpt.kind != "diffusion":
            raise CheckpointError(f"diffusion predictor given a {ckpt.kind!r} checkpoint")
        self.ckpt = ckpt
        self.steps = steps
        self.n_samples = n_samples

    def predict(self, windows, rng):
        imu, _ = diff.training_arrays(windows)
        bias = diff.sample_bias(self.ckpt, imu, rng, steps=self.steps, n_samples=self.n_samples)
        return [BiasTrack(w.imu.t.copy(), bias[i, :3].T, bias[i, 3:].T)
                for i, w in enumerate(windows)]


class RegressionPredictor(Predictor):
    name = "regression"

    def __init__(self, ckpt: Checkpoint):
        if ckpt.kind != "regression":
            raise CheckpointError(f"regression predictor given a {ckpt.kind!r} checkpoint")
        self.ckpt = ckpt

    def predict(self, windows, rng):
        imu, _ = diff.training_arrays(windows)
        bias = diff.regress_bias_batch(self.ckpt, imu)
        return [BiasTrack(w.imu.t.copy(), bias[i, :3].T, bias[i, 3:].T)
                for i, w in enumerate(windows)]


def make_predictor(name: str, *, noise: NoiseParams | None = None, oracle_k: int = 50,
                   diffusion_ckpt: Checkpoint | None = None,
                   regression_ckpt: Checkpoint | None = None,
                   steps: int = 25, n_samples: int = 1,
                   intr: ImuIntrinsics | None = None) -> Predictor:
    if name == "zero-bias":
        return ZeroBiasPredictor()
    if name == "gt-bias":
        return GtBiasPredictor()
    if name == "random-walk-oracle":
        if noise is None:
            raise ValueError("random-walk-oracle requires noise parameters")
        return RandomWalkOraclePredictor(noise, K=oracle_k, intr=intr)
    if name == "diffusion":
        if diffusion_ckpt is None:
            raise ValueError("diffusion predictor requires a checkpoint")
        return DiffusionPredictor(diffusion_ckpt, steps=steps, n_samples=n_samples)
    if name == "regression":
        if regression_ckpt is None:
            raise ValueError("regression predictor requires a checkpoint")
        return RegressionPredictor(regression_ckpt)
    raise ValueError(f"unknown predictor {name!r}; known: {', '.join(KNOWN_METHODS)}")


# ---------------------------------------------------------------------------
# batched window evaluation


def _window_errors(windows: list[Window], tracks: list[BiasTrack],
                   intr: ImuIntrinsics) -> list[tuple[float, float, float, float]]:
    """Integrate every window with its predicted bias; per-window errors.

    Windows of equal length integrate in one batched pass.
    """
    groups: dict[int, list[int]] = {}
    for i, w in enumerate(windows):
        groups.setdefault(len(w), []).append(i)
    results: list = [None] * len(windows)
    for length, idxs in groups.items():
        t_rel = np.stack([windows[i].imu.t for i in idxs])
        omega_m = np.stack([windows[i].imu.omega_m for i in idxs])
        accel_m = np.stack([windows[i].imu.accel_m for i in idxs])
        b_g = np.stack([tracks[i].b_g for i in idxs])
        b_a = np.stack([tracks[i].b_a for i in idxs])
        omega, accel = correct_arrays(omega_m, accel_m, b_g, b_a, intr)
        q0 = np.stack([windows[i].init_state.q for i in idxs])
        p0 = np.stack([windows[i].init_state.p for i in idxs])
        v0 = np.stack([windows[i].init_state.v for i in idxs])
        q, p, _ = integrate_arrays(q0, p0, v0, t_rel, omega, accel, intr.gravity)
        for row, i in enumerate(idxs):
            w = windows[i]
            pos_err = float(np.linalg.norm(p[row, -1] - w.final_state.p))
            dR = quat_to_rot(w.final_state.q).T @ quat_to_rot(q[row, -1])
            ang_err = float(np.degrees(rotation_angle(dR)))
            dg = tracks[i].b_g - w.gt_bias.b_g
            da = tracks[i].b_a - w.gt_bias.b_a
            rmse_g = float(np.sqrt(np.mean(dg * dg)))
            rmse_a = float(np.sqrt(np.mean(da * da)))
            results[i] = (pos_err, ang_err, rmse_g, rmse_a)
    return results


def _config_digest(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:12]


def evaluate_method(windows: list[Window], predictor: Predictor, runs: int = 50,
                    base_seed: int = 0, intr: ImuIntrinsics | None = None):
    """Evaluate one predictor over a window set.

    Stochastic predictors repeat `runs` times with distinct seeds and
    the per-sequence metrics are averaged across runs; deterministic
    predictors run once.  Returns (MethodReport, [WindowResult]).
    """
    if not windows:
        raise ValueError("no windows to evaluate")
    intr = intr or ImuIntrinsics()
    n_runs = runs if predictor.stochastic else 1
    all_results: list[WindowResult] = []
    per_run_seq: list[dict] = []
    per_run_avg: list[dict] = []
    for run in range(n_runs):
        seed_key = f"{base_seed}:{predictor.name}:{run}".encode()
        rng = np.random.default_rng(int.from_bytes(hashlib.sha256(seed_key).digest()[:8], "little"))
        tracks = predictor.predict(windows, rng)
        errs = _window_errors(windows, tracks, intr)
        for w, (pe, ae, rg, ra) in zip(windows, errs):
            all_results.append(WindowResult(w.sequence_id, w.window_index, predictor.name,
                                            run, pe, ae, rg, ra))
        by_seq: dict[str, list] = {}
        for w, e in zip(windows, errs):
            by_seq.setdefault(w.sequence_id, []).append(e)
        seq_metrics = {
            name: {"prmse": prmse([e[0] for e in errs_]), "roe": roe([e[1] for e in errs_])}
            for name, errs_ in sorted(by_seq.items())
        }
        per_run_seq.append(seq_metrics)
        per_run_avg.append({
            "prmse": float(np.mean([m["prmse"] for m in seq_metrics.values()])),
            "roe": float(np.mean([m["roe"] for m in seq_metrics.values()])),
        })
    seq_names = sorted(per_run_seq[0])
    per_sequence = {
        name: {
            "prmse": float(np.mean([r[name]["prmse"] for r in per_run_seq])),
            "roe": float(np.mean([r[name]["roe"] for r in per_run_seq])),
        }
        for name in seq_names
    }
    average = {
        "prmse": float(np.mean([a["prmse"] for a in per_run_avg])),
        "roe": float(np.mean([a["roe"] for a in per_run_avg])),
    }
    digest = _config_digest({"method": predictor.name, "runs": n_runs, "seed": base_seed,
                             "windows": len(windows)})
    report = MethodReport(
        method=predictor.name, runs=n_runs, config_digest=digest,
        per_sequence=per_sequence, average=average,
        bias_rmse_gyro_median=float(np.median([r.bias_rmse_gyro for r in all_results])),
        bias_rmse_accel_median=float(np.median([r.bias_rmse_accel for r in all_results])),
    )
    return report, all_results


def report_from_results(results: list[WindowResult], config_digest: str = "") -> MethodReport:
    """Recompute a MethodReport purely from persisted window results."""
    if not results:
        raise ValueError("no window results")
    method = results[0].method
    runs = sorted({r.run_index for r in results})
    per_run_seq, per_run_avg = [], []
    for run in runs:
        subset = [r for r in results if r.run_index == run]
        by_seq: dict[str, list[WindowResult]] = {}
        for r in subset:
            by_seq.setdefault(r.sequence_id, []).append(r)
        seq_metrics = {
            name: {"prmse": prmse([r.pos_err_m for r in rs]),
                   "roe": roe([r.orient_err_deg for r in rs])}
            for name, rs in sorted(by_seq.items())
        }
        per_run_seq.append(seq_metrics)
        per_run_avg.append({
            "prmse": float(np.mean([m["prmse"] for m in seq_metrics.values()])),
            "roe": float(np.mean([m["roe"] for m in seq_metrics.values()])),
        })
    seq_names = sorted(per_run_seq[0])
    per_sequence = {
        name: {"prmse": float(np.mean([r[name]["prmse"] for r in per_run_seq])),
               "roe": float(np.mean([r[name]["roe"] for r in per_run_seq]))}
        for name in seq_names
    }
    average = {"prmse": float(np.mean([a["prmse"] for a in per_run_avg])),
               "roe": float(np.mean([a["roe"] for a in per_run_avg]))}
    return MethodReport(
        method=method, runs=len(runs), config_digest=config_digest,
        per_sequence=per_sequence, average=average,
        bias_rmse_gyro_median=float(np.median([r.bias_rmse_gyro for r in results])),
        bias_rmse_accel_median=float(np.median([r.bias_rmse_accel for r in results])),
    )


# ---------------------------------------------------------------------------
# persistence


def save_window_results(results: list[WindowResult], path):
    with open(path, "w") as fh:
        fh.write("sequence_id,window_index,method,run_index,pos_err_m,orient_err_deg,"
                 "bias_rmse_gyro,bias_rmse_accel\n")
        for r in results:
            fh.write(f"{r.sequence_id},{r.window_index},{r.method},{r.run_index},"
                     f"{r.pos_err_m!r},{r.orient_err_deg!r},{r.bias_rmse_gyro!r},"
                     f"{r.bias_rmse_accel!r}\n")


def load_window_results(path) -> list[WindowResult]:
    out = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("sequence_id,"):
            raise ValueError(f"{path}: not a window-results CSV")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 8:
                continue
            out.append(WindowResult(parts[0], int(parts[1]), parts[2], int(parts[3]),
                                    float(parts[4]), float(parts[5]), float(parts[6]),
                                    float(parts[7])))
    return out


# ---------------------------------------------------------------------------
# comparison table


def _mark(values: dict[str, float]) -> dict[str, str]:
    """Best gets '*', second best '~' (smaller is better)."""
    order = sorted(values, key=lambda k: values[k])
    marks = {k: "" for k in values}
    if order:
        marks[order[0]] = "*"
    if len(order) > 1:
        marks[order[1]] = "~"
    return marks


def compare_report(reports: list[MethodReport]):
    """Render reports as (text table, structured dict).

    Cells are "PRMSE / ROE" with best (*) and second-best (~) marks per
    metric per row.
    """
    if not reports:
        raise ValueError("no reports")
    methods = [r.method for r in reports]
    seq_names = sorted({s for r in reports for s in r.per_sequence})
    rows = []
    doc_rows = {}
    for seq in [*seq_names, "Average"]:
        vals = {}
        for r in reports:
            m = r.average if seq == "Average" else r.per_sequence.get(seq)
            if m is not None:
                vals[r.method] = m
        pm = _mark({k: v["prmse"] for k, v in vals.items()})
        rm = _mark({k: v["roe"] for k, v in vals.items()})
        cells = {}
        doc_rows[seq] = {}
        for m in methods:
            if m in vals:
                cells[m] = (f"{vals[m]['prmse']:.4f}{pm[m]} / {vals[m]['roe']:.4f}{rm[m]}")
                doc_rows[seq][m] = {"prmse": vals[m]["prmse"], "roe": vals[m]["roe"],
                                    "best_prmse": pm[m] == "*", "best_roe": rm[m] == "*",
                                    "second_prmse": pm[m] == "~", "second_roe": rm[m] == "~"}
            else:
                cells[m] = "-"
        rows.append((seq, cells))

    col_w = {m: max(len(m), *(len(c[m]) for _, c in rows)) for m in methods}
    name_w = max(len("Sequence"), *(len(s) for s, _ in rows))
    sep = "  "
    lines = ["Sequence".ljust(name_w) + sep + sep.join(m.ljust(col_w[m]) for m in methods)]
    lines.append("-" * len(lines[0]))
    for seq, cells in rows:
        if seq == "Average":
            lines.append("-" * len(lines[0]))
        lines.append(seq.ljust(name_w) + sep + sep.join(cells[m].ljust(col_w[m]) for m in methods))
    lines.append("")
    lines.append("PRMSE [m] / ROE [deg] per 1-second window; * best, ~ second best per metric.")
    lines.append("runs: " + ", ".join(f"{r.method}={r.runs}" for r in reports))
    text = "\n".join(lines) + "\n"

    doc = {
        "methods": methods,
        "runs": {r.method: r.runs for r in reports},
        "config_digest": {r.method: r.config_digest for r in reports},
        "bias_rmse_median": {
            r.method: {"gyro": r.bias_rmse_gyro_median, "accel": r.bias_rmse_accel_median}
            for r in reports
        },
        "rows": doc_rows,
    }
    return text, doc


def bias_trace_export(window: Window, method_tracks: dict[str, BiasTrack], path):
    """Per-timestep CSV of ground-truth and per-method bias predictions."""
    channels = ["bgx", "bgy", "bgz", "bax", "bay", "baz"]
    names = list(method_tracks)
    with open(path, "w") as fh:
        cols = ["t"] + [f"gt_{c}" for c in channels]
        for name in names:
            cols += [f"{name}_{c}" for c in channels]
        fh.write(",".join(cols) + "\n")
        for i in range(len(window.imu.t)):
            vals = [window.imu.t[i], *window.gt_bias.b_g[i], *window.gt_bias.b_a[i]]
            for name in names:
                tr = method_tracks[name]
                vals += [*tr.b_g[i], *tr.b_a[i]]
            fh.write(",".join(repr(float(x)) for x in vals) + "\n")
