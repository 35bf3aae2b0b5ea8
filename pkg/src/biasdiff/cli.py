"""Command-line interface.

Subcommands: synth, calibrate, train, predict, evaluate, report.
Exit codes: 0 success, 2 bad arguments or config, 3 data errors,
4 checkpoint errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import allan, dataset, diffusion, evaluation, networks
from .allan import CalibrationError, FitConfig
from .dataset import (BiasProcess, BiasProcessConfig, DataError, Manifest, ManifestEntry,
                      MotionConfig, load_manifest, load_sequences, make_windows,
                      save_bias_csv, save_manifest, save_sequence, synthesize_sequence)
from .imu_model import ImuIntrinsics, NoiseParams
from .networks import CheckpointError

__all__ = ["main", "SynthSpec", "build_dataset"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CHECKPOINT = 4


@dataclass
class SynthSpec:
    """Generation recipe for a synthetic train/test dataset."""

    n_train: int = 8
    n_test: int = 3
    duration: float = 90.0
    rate: float = 200.0
    seed: int = 0
    window_duration: float = 1.0
    window_overlap: float = 0.5
    motion: MotionConfig = field(default_factory=lambda: MotionConfig(
        pos_components=2, pos_amplitude=(0.005, 0.05), pos_freq=(1.0, 3.0),
        att_components=2, att_amplitude=(0.01, 0.08), att_freq=(1.0, 3.0)))
    bias: BiasProcessConfig = field(default_factory=lambda: BiasProcessConfig(
        gyro=BiasProcess(rw_rate=1e-4, gm_tau=8.0, gm_sigma=0.01, initial_bias_std=0.02),
        accel=BiasProcess(rw_rate=1e-3, gm_tau=8.0, gm_sigma=0.05, initial_bias_std=0.15)))
    noise: NoiseParams = field(default_factory=lambda: NoiseParams(
        sigma_g=1.7e-4, sigma_a=2e-3, eta_g=1e-4, eta_a=1e-3))

    @staticmethod
    def from_json(path) -> "SynthSpec":
        with open(path) as fh:
            doc = json.load(fh)
        spec = SynthSpec()
        for key in ("n_train", "n_test", "duration", "rate", "seed",
                    "window_duration", "window_overlap"):
            if key in doc:
                setattr(spec, key, doc[key])
        if "motion" in doc:
            m = {**asdict(spec.motion), **doc["motion"]}
            for k in ("pos_amplitude", "pos_freq", "att_amplitude", "att_freq"):
                m[k] = tuple(m[k])
            spec.motion = MotionConfig(**m)
        if "bias" in doc:
            spec.bias = BiasProcessConfig(
                gyro=BiasProcess(**{**asdict(spec.bias.gyro), **doc["bias"].get("gyro", {})}),
                accel=BiasProcess(**{**asdict(spec.bias.accel), **doc["bias"].get("accel", {})}))
        if "noise" in doc:
            spec.noise = NoiseParams(**{**asdict(spec.noise), **doc["noise"]})
        return spec


def build_dataset(spec: SynthSpec, out_dir) -> Path:
    """Generate all sequences of a SynthSpec; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    intr = ImuIntrinsics()
    names = [("train", i) for i in range(spec.n_train)] + [("test", i) for i in range(spec.n_test)]
    for split, i in names:
        name = f"{split}{i:02d}"
        seq_seed = int(np.random.SeedSequence([spec.seed, 0 if split == "train" else 1, i])
                       .generate_state(1)[0])
        seq = synthesize_sequence(spec.motion, spec.bias, spec.noise, intr,
                                  spec.duration, spec.rate, seq_seed, name=name)
        save_sequence(seq, out / name)
        entries.append(ManifestEntry(name=name, split=split, path=name))
    manifest = Manifest(rate=spec.rate, window_duration=spec.window_duration,
                        window_overlap=spec.window_overlap, noise=spec.noise,
                        sequences=entries)
    path = out / "manifest.json"
    save_manifest(manifest, path)
    return path


def _windows_for_split(manifest: Manifest, manifest_path, split,
                       duration=None, overlap=None):
    seqs = load_sequences(manifest, manifest_path, split)
    windows = []
    for seq in seqs:
        windows.extend(make_windows(seq,
                                    duration or manifest.window_duration,
                                    overlap if overlap is not None else manifest.window_overlap))
    return windows


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args) -> int:
    spec = SynthSpec.from_json(args.config) if args.config else SynthSpec()
    if args.seed is not None:
        spec.seed = args.seed
    path = build_dataset(spec, args.out)
    print(f"wrote dataset manifest {path}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    seq = dataset.load_euroc(args.data)
    cfg = FitConfig()
    if args.white_band:
        cfg.white_band = tuple(args.white_band)
    if args.rw_band:
        cfg.rw_band = tuple(args.rw_band)
    if args.min_duration is not None:
        cfg.min_duration = args.min_duration
    params = allan.fit_noise_params(seq.imu, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "noise.json", "w") as fh:
        json.dump({"sigma_g": params.sigma_g, "sigma_a": params.sigma_a,
                   "eta_g": params.eta_g, "eta_a": params.eta_a}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    rate = seq.rate
    taus = allan.default_taus(rate, len(seq.imu))
    for name, signal in (("gyro", seq.imu.omega_m), ("accel", seq.imu.accel_m)):
        curve = allan.allan_deviation(signal, rate, taus)
        allan.save_allan_csv(curve, out / f"allan_{name}.csv", labels=["x", "y", "z"])
    print(f"sigma_g={params.sigma_g:.6g} sigma_a={params.sigma_a:.6g} "
          f"eta_g={params.eta_g:.6g} eta_a={params.eta_a:.6g}")
    print(f"wrote {out}/noise.json and Allan curve CSVs")
    return EXIT_OK


def _arch_configs(arch: str):
    if arch == "full":
        return networks.FULL_SCALE_ENCODER, networks.FULL_SCALE_DENOISER
    if arch == "desk":
        return networks.DESK_ENCODER, networks.DESK_DENOISER
    raise ValueError(f"unknown architecture {arch!r}")


def _cmd_train(args) -> int:
    manifest = load_manifest(args.data)
    windows = _windows_for_split(manifest, args.data, "train", args.window, args.overlap)
    if not windows:
        raise DataError("manifest has no training sequences")
    enc_cfg, den_cfg = _arch_configs(args.arch)

    def log(epoch, loss):
        if args.verbose:
            print(f"epoch {epoch:4d}  loss {loss:.6f}", flush=True)

    ckpt = diffusion.train_model(windows, kind=args.method, enc_cfg=enc_cfg, den_cfg=den_cfg,
                                 epochs=args.epochs, lr=args.lr, batch_size=args.batch,
                                 seed=args.seed, log=log)
    networks.save_checkpoint(args.out, ckpt)
    loss_path = str(args.out) + ".loss.csv"
    with open(loss_path, "w") as fh:
        fh.write("epoch,loss\n")
        for i, v in enumerate(ckpt.meta["loss_curve"]):
            fh.write(f"{i},{v!r}\n")
    print(f"trained {args.method} model: final loss {ckpt.meta['loss_curve'][-1]:.6f}, "
          f"{networks.parameter_count(enc_cfg, den_cfg)} parameters")
    print(f"wrote {args.out} and {loss_path}")
    return EXIT_OK


def _cmd_predict(args) -> int:
    ckpt = networks.load_checkpoint(args.ckpt)
    manifest = load_manifest(args.data)
    entries = [e for e in manifest.entries() if e.name == args.sequence]
    if not entries:
        raise DataError(f"sequence {args.sequence!r} not in manifest")
    base = Path(args.data).parent
    seq = dataset.load_euroc(base / entries[0].path)
    seq.name = entries[0].name
    windows = make_windows(seq, manifest.window_duration, manifest.window_overlap)
    tracks = []
    for w in windows:
        rng_seed = args.seed + w.window_index
        if ckpt.kind == "diffusion":
            tracks.append(diffusion.predict_bias(w, ckpt, mode=args.mode, n=args.samples,
                                                 seed=rng_seed, steps=args.steps))
        else:
            tracks.append(diffusion.regress_bias(w, ckpt))
    # stitch: non-overlapping halves of consecutive windows
    t_all, bg_all, ba_all = [], [], []
    last_t = -np.inf
    for tr in tracks:
        keep = tr.t > last_t
        t_all.append(tr.t[keep])
        bg_all.append(tr.b_g[keep])
        ba_all.append(tr.b_a[keep])
        last_t = tr.t[-1]
    track = dataset.BiasTrack(np.concatenate(t_all), np.vstack(bg_all), np.vstack(ba_all))
    save_bias_csv(track, args.out)
    print(f"wrote {len(track)} bias samples over {len(windows)} windows to {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    manifest = load_manifest(args.data)
    windows = _windows_for_split(manifest, args.data, args.split)
    if not windows:
        raise DataError(f"no {args.split} windows in manifest")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in evaluation.KNOWN_METHODS:
            raise UsageError(f"unknown method {m!r}; known: {', '.join(evaluation.KNOWN_METHODS)}")
    diffusion_ckpt = networks.load_checkpoint(args.ckpt_diffusion) if args.ckpt_diffusion else None
    regression_ckpt = networks.load_checkpoint(args.ckpt_regression) if args.ckpt_regression else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for name in methods:
        try:
            predictor = evaluation.make_predictor(
                name, noise=manifest.noise, oracle_k=args.oracle_k,
                diffusion_ckpt=diffusion_ckpt, regression_ckpt=regression_ckpt,
                steps=args.steps, n_samples=args.samples)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        report, results = evaluation.evaluate_method(windows, predictor, runs=args.runs,
                                                     base_seed=args.seed)
        mdir = out / name
        mdir.mkdir(parents=True, exist_ok=True)
        evaluation.save_window_results(results, mdir / "window_results.csv")
        with open(mdir / "report.json", "w") as fh:
            json.dump({"method": report.method, "runs": report.runs,
                       "config_digest": report.config_digest,
                       "per_sequence": report.per_sequence, "average": report.average,
                       "bias_rmse_gyro_median": report.bias_rmse_gyro_median,
                       "bias_rmse_accel_median": report.bias_rmse_accel_median},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
        reports.append(report)
        print(f"{name}: PRMSE {report.average['prmse']:.4f} m, ROE {report.average['roe']:.4f} deg "
              f"({report.runs} run{'s' if report.runs != 1 else ''})")
    text, doc = evaluation.compare_report(reports)
    (out / "comparison.txt").write_text(text)
    with open(out / "comparison.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote comparison to {out}/comparison.txt")
    return EXIT_OK


def _cmd_report(args) -> int:
    root = Path(args.results)
    if not root.is_dir():
        raise DataError(f"results directory {root} not found")
    reports = []
    for mdir in sorted(root.iterdir()):
        csv = mdir / "window_results.csv"
        if not csv.is_file():
            continue
        results = evaluation.load_window_results(csv)
        digest = ""
        rj = mdir / "report.json"
        if rj.is_file():
            digest = json.loads(rj.read_text()).get("config_digest", "")
        reports.append(evaluation.report_from_results(results, digest))
    if not reports:
        raise DataError(f"no persisted window results under {root}")
    text, doc = evaluation.compare_report(reports)
    if args.out:
        Path(str(args.out) + ".txt").write_text(text)
        with open(str(args.out) + ".json", "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {args.out}.txt and {args.out}.json")
    else:
        print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------


class UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="biasdiff",
                                 description="IMU bias diffusion: data, training, evaluation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON SynthSpec overrides")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("calibrate", help="Allan analysis on a static sequence")
    p.add_argument("--data", required=True, help="ASL sequence directory")
    p.add_argument("--out", required=True)
    p.add_argument("--white-band", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--rw-band", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--min-duration", type=float)
    p.set_defaults(fn=_cmd_calibrate)

    p = sub.add_parser("train", help="train a bias model")
    p.add_argument("--data", required=True, help="dataset manifest")
    p.add_argument("--method", choices=("diffusion", "regression"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=3e-5)
    p.add_argument("--window", type=float, default=1.0)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--arch", choices=("desk", "full"), default="desk")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("predict", help="sample bias tracks for a sequence")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="dataset manifest")
    p.add_argument("--sequence", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("single", "mean_of_n"), default="single")
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--steps", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("evaluate", help="run the method comparison")
    p.add_argument("--data", required=True, help="dataset manifest")
    p.add_argument("--methods", required=True,
                   help="comma list of " + ", ".join(evaluation.KNOWN_METHODS))
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ckpt-diffusion")
    p.add_argument("--ckpt-regression")
    p.add_argument("--oracle-k", type=int, default=50)
    p.add_argument("--steps", type=int, default=25)
    p.add_argument("--samples", type=int, default=1)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("report", help="render tables from persisted results")
    p.add_argument("--results", required=True)
    p.add_argument("--out", help="output prefix (writes .txt and .json)")
    p.set_defaults(fn=_cmd_report)
    return ap


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CalibrationError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
