"""Sequence synthesis, ASL-format ingestion, bias interpolation, windowing.

Synthetic sequences are generated from sums of random-phase sinusoids in
position and Euler attitude, so velocities, accelerations and body rates
are available in closed form.  Bias tracks combine a random walk, a
first-order Gauss-Markov process and a deterministic ramp.

On-disk layout follows the ASL CSV convention:

    <seq>/imu0/data.csv                     timestamp [ns], w_xyz, a_xyz
    <seq>/state_groundtruth_estimate0/data.csv
        timestamp [ns], p_xyz, q(w,x,y,z), v_xyz, b_w_xyz, b_a_xyz

Ground-truth quaternions on disk are scalar-first body-to-world; in
memory we keep scalar-last global-to-body (the two differ only by
component order, see geometry module).  Timestamps are kept as integer
nanoseconds internally so write/read round-trips are lossless.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import rotate_batch
from .imu_model import ImuIntrinsics, ImuSeries, NoiseParams
from .strapdown import NavState

__all__ = [
    "BiasTrack",
    "Sequence",
    "Window",
    "BiasProcess",
    "BiasProcessConfig",
    "MotionConfig",
    "TrajectoryTruth",
    "DataError",
    "generate_bias_track",
    "generate_trajectory",
    "synthesize_sequence",
    "load_euroc",
    "save_sequence",
    "interpolate_bias",
    "make_windows",
    "window_rng",
    "save_bias_csv",
    "load_bias_csv",
    "Manifest",
    "save_manifest",
    "load_manifest",
    "load_sequences",
]


class DataError(Exception):
    """Malformed or inconsistent on-disk data."""


# ---------------------------------------------------------------------------
# core containers


@dataclass
class BiasTrack:
    """Time-indexed bias pair: t (N,), b_g (N,3) rad/s, b_a (N,3) m/s^2."""

    t: np.ndarray
    b_g: np.ndarray
    b_a: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.b_g = np.asarray(self.b_g, dtype=float)
        self.b_a = np.asarray(self.b_a, dtype=float)
        if not (len(self.t) == len(self.b_g) == len(self.b_a)):
            raise ValueError("bias track arrays misaligned")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("bias track timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t)

    def slice(self, i) -> "BiasTrack":
        return BiasTrack(self.t[i], self.b_g[i], self.b_a[i])

    @staticmethod
    def constant(t, b_g, b_a) -> "BiasTrack":
        t = np.asarray(t, dtype=float)
        return BiasTrack(t, np.tile(np.asarray(b_g, float), (len(t), 1)),
                         np.tile(np.asarray(b_a, float), (len(t), 1)))


@dataclass
class Sequence:
    """IMU samples plus time-aligned ground truth at the IMU rate."""

    name: str
    rate: float
    source: str  # "synthetic" | "ingested"
    imu: ImuSeries
    t_ns: np.ndarray  # int64, serialization source of truth
    gt_q: np.ndarray  # (N,4) scalar-last, G->I
    gt_p: np.ndarray
    gt_v: np.ndarray
    gt_bias: BiasTrack  # at IMU rate
    gt_bias_native: BiasTrack | None = None  # as provided, pre-interpolation

    def __post_init__(self):
        n = len(self.imu)
        for arr, name in ((self.gt_q, "gt_q"), (self.gt_p, "gt_p"), (self.gt_v, "gt_v")):
            if len(arr) != n:
                raise ValueError(f"{name} not aligned with IMU samples")
        if len(self.gt_bias) != n:
            raise ValueError("gt_bias not aligned with IMU samples")

    def __len__(self):
        return len(self.imu)

    @property
    def duration(self) -> float:
        return float(self.imu.t[-1] - self.imu.t[0])

    def gt_state(self, i: int) -> NavState:
        return NavState(self.gt_q[i].copy(), self.gt_p[i].copy(), self.gt_v[i].copy(),
                        float(self.imu.t[i]))


@dataclass
class Window:
    """Fixed-duration slice: the unit of training, sampling and evaluation."""

    imu: ImuSeries
    gt_bias: BiasTrack
    init_state: NavState
    final_state: NavState
    sequence_id: str
    window_index: int

    def __len__(self):
        return len(self.imu)


# ---------------------------------------------------------------------------
# synthetic bias processes


@dataclass
class BiasProcess:
    """One 3-axis sensor's bias dynamics.

    rw_rate: random-walk rate (units/s/sqrt(Hz)); increments N(0, rw*sqrt(dt)).
    gm_sigma/gm_tau: stationary std and time constant of a first-order
    Gauss-Markov component.  ramp_rate adds a deterministic slope.
    """

    rw_rate: float = 0.0
    gm_tau: float = 60.0
    gm_sigma: float = 0.0
    ramp_rate: float = 0.0
    initial_bias_std: float = 0.0

    def __post_init__(self):
        if min(self.rw_rate, self.gm_sigma, self.initial_bias_std) < 0:
            raise ValueError("process magnitudes must be non-negative")
        if self.gm_sigma > 0 and self.gm_tau <= 0:
            raise ValueError("gm_tau must be positive when gm_sigma > 0")


@dataclass
class BiasProcessConfig:
    gyro: BiasProcess = field(default_factory=BiasProcess)
    accel: BiasProcess = field(default_factory=BiasProcess)


def _simulate_bias(proc: BiasProcess, t: np.ndarray, rng) -> np.ndarray:
    n = len(t)
    b = np.zeros((n, 3))
    b += rng.standard_normal(3) * proc.initial_bias_std
    dt = np.diff(t)
    if proc.rw_rate > 0:
        steps = rng.standard_normal((n - 1, 3)) * (proc.rw_rate * np.sqrt(dt))[:, None]
        b[1:] += np.cumsum(steps, axis=0)
    if proc.gm_sigma > 0:
        # exact discretization of dx = -x/tau dt + sqrt(2/tau) sigma dW
        x = rng.standard_normal(3) * proc.gm_sigma
        decay = np.exp(-dt / proc.gm_tau)
        kick = proc.gm_sigma * np.sqrt(1.0 - decay**2)
        gm = np.empty((n, 3))
        gm[0] = x
        noise = rng.standard_normal((n - 1, 3))
        for k in range(n - 1):
            x = decay[k] * x + kick[k] * noise[k]
            gm[k + 1] = x
        b += gm
    if proc.ramp_rate != 0.0:
        b += proc.ramp_rate * (t - t[0])[:, None]
    return b


def generate_bias_track(cfg: BiasProcessConfig, rate: float, duration: float, rng) -> BiasTrack:
    """Sample a bias track at the IMU rate over [0, duration)."""
    n = int(round(duration * rate))
    if n < 2:
        raise ValueError("duration*rate must be at least 2")
    t = np.arange(n) / rate
    return BiasTrack(t, _simulate_bias(cfg.gyro, t, rng), _simulate_bias(cfg.accel, t, rng))


# ---------------------------------------------------------------------------
# synthetic motion


@dataclass
class MotionConfig:
    """Random sinusoid-mixture motion; amplitudes/frequencies uniform in range."""

    pos_components: int = 3
    pos_amplitude: tuple = (0.0, 0.1)   # m
    pos_freq: tuple = (0.5, 2.0)        # Hz
    att_components: int = 3
    att_amplitude: tuple = (0.0, 0.1)   # rad
    att_freq: tuple = (0.5, 2.0)        # Hz


@dataclass
class TrajectoryTruth:
    """Closed-form motion evaluated at sample times."""

    t: np.ndarray
    q: np.ndarray        # (N,4) G->I
    p: np.ndarray        # (N,3)
    v: np.ndarray        # (N,3)
    a_G: np.ndarray      # (N,3) true global acceleration
    omega_I: np.ndarray  # (N,3) true body rate


class _SinusoidMix:
    """f(t) = sum_j A_j sin(2 pi f_j t + phi_j) per axis, with derivatives."""

    def __init__(self, n_axes, n_components, amp_range, freq_range, rng):
        shape = (n_axes, n_components)
        self.A = rng.uniform(*amp_range, size=shape)
        self.f = rng.uniform(*freq_range, size=shape)
        self.phi = rng.uniform(0.0, 2.0 * np.pi, size=shape)

    def eval(self, t, order=0):
        w = 2.0 * np.pi * self.f
        arg = w[None] * t[:, None, None] + self.phi[None]
        if order == 0:
            basis = np.sin(arg)
            gain = self.A
        elif order == 1:
            basis = np.cos(arg)
            gain = self.A * w
        elif order == 2:
            basis = -np.sin(arg)
            gain = self.A * w**2
        else:
            raise ValueError(order)
        return np.sum(gain[None] * basis, axis=2)


def _euler_zyx_to_rot_gi(roll, pitch, yaw):
    """R_GI = Rz(yaw) Ry(pitch) Rx(roll): body -> global."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def _euler_zyx_to_quat(roll, pitch, yaw) -> np.ndarray:
    """Vectorized ZYX Euler angles -> scalar-last G->I quaternion rows.

    Matches rot_to_quat(_euler_zyx_to_rot_gi(...).T) up to sign.
    """
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    return np.column_stack([
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
        cr * cp * cy + sr * sp * sy,
    ])


def generate_trajectory(motion_cfg: MotionConfig, duration: float, rate: float, rng) -> TrajectoryTruth:
    """C2-smooth random trajectory with exact analytic derivatives."""
    if rate < 50:
        raise ValueError("rate must be at least 50 Hz")
    n = int(round(duration * rate))
    t = np.arange(n) / rate

    pos = _SinusoidMix(3, motion_cfg.pos_components, motion_cfg.pos_amplitude, motion_cfg.pos_freq, rng)
    att = _SinusoidMix(3, motion_cfg.att_components, motion_cfg.att_amplitude, motion_cfg.att_freq, rng)

    p = pos.eval(t, 0)
    v = pos.eval(t, 1)
    a = pos.eval(t, 2)
    ang = att.eval(t, 0)        # columns: roll, pitch, yaw
    ang_dot = att.eval(t, 1)

    roll, pitch, yaw = ang.T
    roll_d, pitch_d, yaw_d = ang_dot.T
    # body rates from ZYX Euler-angle rates
    omega = np.stack(
        [
            roll_d - yaw_d * np.sin(pitch),
            pitch_d * np.cos(roll) + yaw_d * np.cos(pitch) * np.sin(roll),
            -pitch_d * np.sin(roll) + yaw_d * np.cos(pitch) * np.cos(roll),
        ],
        axis=1,
    )
    q = _euler_zyx_to_quat(roll, pitch, yaw)
    return TrajectoryTruth(t, q, p, v, a, omega)


# ---------------------------------------------------------------------------
# full sequence synthesis


def _ns_step(rate: float) -> int:
    step = round(1e9 / rate)
    if step <= 0:
        raise ValueError(f"rate {rate} too high")
    return int(step)


def synthesize_sequence(motion_cfg: MotionConfig, bias_cfg: BiasProcessConfig,
                        noise: NoiseParams, intr: ImuIntrinsics, duration: float,
                        rate: float, seed: int, name: str = "synthetic") -> Sequence:
    """Deterministic synthetic sequence: motion + bias + measurement noise."""
    ss = np.random.SeedSequence(seed)
    rng_motion, rng_bias, rng_noise = (np.random.default_rng(s) for s in ss.spawn(3))

    truth = generate_trajectory(motion_cfg, duration, rate, rng_motion)
    bias = generate_bias_track(bias_cfg, rate, duration, rng_bias)
    n = len(truth.t)
    t_ns = np.arange(n, dtype=np.int64) * _ns_step(rate)
    t = t_ns * 1e-9

    dt = 1.0 / rate
    f = rotate_batch(truth.q, truth.a_G - intr.gravity)  # specific force in {I}
    omega_m = truth.omega_I @ intr.T_g.T + f @ intr.T_s.T + bias.b_g
    accel_m = f + bias.b_a
    omega_m = omega_m + rng_noise.standard_normal((n, 3)) * (noise.sigma_g / np.sqrt(dt))
    accel_m = accel_m + rng_noise.standard_normal((n, 3)) * (noise.sigma_a / np.sqrt(dt))

    imu = ImuSeries(t, omega_m, accel_m)
    gt_bias = BiasTrack(t, bias.b_g, bias.b_a)
    return Sequence(name=name, rate=rate, source="synthetic", imu=imu, t_ns=t_ns,
                    gt_q=truth.q, gt_p=truth.p, gt_v=truth.v, gt_bias=gt_bias)


# ---------------------------------------------------------------------------
# interpolation and windowing


def interpolate_bias(track: BiasTrack, timestamps) -> BiasTrack:
    """Per-axis linear interpolation at the given timestamps.

    Queries beyond the track's span are clamped to the end values.
    """
    if len(track) < 2:
        raise ValueError("bias track needs at least 2 points to interpolate")
    ts = np.asarray(timestamps, dtype=float)
    b_g = np.column_stack([np.interp(ts, track.t, track.b_g[:, k]) for k in range(3)])
    b_a = np.column_stack([np.interp(ts, track.t, track.b_a[:, k]) for k in range(3)])
    return BiasTrack(ts, b_g, b_a)


def make_windows(seq: Sequence, duration: float = 1.0, overlap: float = 0.5) -> list[Window]:
    """Slice a sequence into fixed-length windows with the given overlap."""
    if not 0.0 <= overlap <= 0.95:
        raise ValueError(f"overlap {overlap} outside [0, 0.95]")
    w = int(round(duration * seq.rate))
    stride = int(round(w * (1.0 - overlap)))
    if stride < 1:
        raise ValueError("stride below one sample; reduce overlap")
    if len(seq) < w:
        raise ValueError(f"sequence {seq.name} shorter than one window")
    out = []
    index = 0
    for start in range(0, len(seq) - w + 1, stride):
        sl = slice(start, start + w)
        out.append(
            Window(
                imu=seq.imu[sl],
                gt_bias=seq.gt_bias.slice(sl),
                init_state=seq.gt_state(start),
                final_state=seq.gt_state(start + w - 1),
                sequence_id=seq.name,
                window_index=index,
            )
        )
        index += 1
    return out


def window_rng(seed: int, sequence_id: str, window_index: int) -> np.random.Generator:
    """Reproducible per-window RNG from (global seed, sequence, window)."""
    key = f"{seed}:{sequence_id}:{window_index}".encode()
    digest = hashlib.sha256(key).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


# ---------------------------------------------------------------------------
# ASL CSV serialization

_IMU_HEADER = ("#timestamp [ns],w_RS_S_x [rad s^-1],w_RS_S_y [rad s^-1],w_RS_S_z [rad s^-1],"
               "a_RS_S_x [m s^-2],a_RS_S_y [m s^-2],a_RS_S_z [m s^-2]")
_GT_HEADER = ("#timestamp,p_RS_R_x [m],p_RS_R_y [m],p_RS_R_z [m],"
              "q_RS_w [],q_RS_x [],q_RS_y [],q_RS_z [],"
              "v_RS_R_x [m s^-1],v_RS_R_y [m s^-1],v_RS_R_z [m s^-1],"
              "b_w_RS_S_x [rad s^-1],b_w_RS_S_y [rad s^-1],b_w_RS_S_z [rad s^-1],"
              "b_a_RS_S_x [m s^-2],b_a_RS_S_y [m s^-2],b_a_RS_S_z [m s^-2]")


def _read_csv(path: Path, n_cols: int) -> tuple[np.ndarray, np.ndarray]:
    """Parse an ASL CSV into (int64 timestamps, float matrix)."""
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    ts, rows = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != n_cols:
                raise DataError(f"{path}:{lineno}: expected {n_cols} columns, got {len(parts)}")
            try:
                ts.append(int(parts[0]))
                rows.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not ts:
        raise DataError(f"{path}: no data rows")
    return np.asarray(ts, dtype=np.int64), np.asarray(rows, dtype=float)


def _quat_file_to_internal(q_wxyz: np.ndarray) -> np.ndarray:
    """Scalar-first body-to-world -> scalar-last global-to-body.

    The same four numbers serve both conventions; only the component
    order changes (see geometry module docstring).
    """
    q = np.column_stack([q_wxyz[:, 1], q_wxyz[:, 2], q_wxyz[:, 3], q_wxyz[:, 0]])
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _quat_internal_to_file(q_xyzw: np.ndarray) -> np.ndarray:
    return np.column_stack([q_xyzw[:, 3], q_xyzw[:, 0], q_xyzw[:, 1], q_xyzw[:, 2]])


def _slerp_rows(t_src, q_src, t_dst):
    """Piecewise slerp of scalar-last quaternion rows onto new timestamps."""
    idx = np.clip(np.searchsorted(t_src, t_dst, side="right") - 1, 0, len(t_src) - 2)
    t0, t1 = t_src[idx], t_src[idx + 1]
    u = np.clip((t_dst - t0) / np.where(t1 > t0, t1 - t0, 1.0), 0.0, 1.0)
    q0, q1 = q_src[idx], q_src[idx + 1]
    dot = np.sum(q0 * q1, axis=1, keepdims=True)
    q1 = np.where(dot < 0, -q1, q1)
    dot = np.abs(np.clip(dot, -1.0, 1.0))
    theta = np.arccos(dot)
    small = theta[:, 0] < 1e-8
    s = np.where(small[:, None], 1.0, np.sin(theta))
    w0 = np.where(small[:, None], 1.0 - u[:, None], np.sin((1 - u[:, None]) * theta) / s)
    w1 = np.where(small[:, None], u[:, None], np.sin(u[:, None] * theta) / s)
    q = w0 * q0 + w1 * q1
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def load_euroc(dir_path) -> Sequence:
    """Load an ASL-layout sequence directory.

    Trims to the overlapping IMU/ground-truth time span, interpolates
    ground-truth states to the IMU timestamps (linear for p/v, slerp for
    q) and keeps the ground-truth bias at its native rate in
    ``gt_bias_native`` alongside the IMU-rate interpolation.
    """
    root = Path(dir_path)
    if (root / "mav0").is_dir():  # accept EuRoC bags unpacked with the mav0 wrapper
        root = root / "mav0"
    imu_ns, imu_vals = _read_csv(root / "imu0" / "data.csv", 7)
    gt_ns, gt_vals = _read_csv(root / "state_groundtruth_estimate0" / "data.csv", 17)

    lo = max(imu_ns[0], gt_ns[0])
    hi = min(imu_ns[-1], gt_ns[-1])
    keep = (imu_ns >= lo) & (imu_ns <= hi)
    if not np.any(keep):
        raise DataError(f"{root}: no overlap between IMU and ground-truth time spans")
    imu_ns, imu_vals = imu_ns[keep], imu_vals[keep]

    t = imu_ns * 1e-9
    gt_t = gt_ns * 1e-9
    imu = ImuSeries(t, imu_vals[:, 0:3], imu_vals[:, 3:6])

    gt_p = gt_vals[:, 0:3]
    gt_q = _quat_file_to_internal(gt_vals[:, 3:7])
    gt_v = gt_vals[:, 7:10]
    gt_bg = gt_vals[:, 10:13]
    gt_ba = gt_vals[:, 13:16]

    p = np.column_stack([np.interp(t, gt_t, gt_p[:, k]) for k in range(3)])
    v = np.column_stack([np.interp(t, gt_t, gt_v[:, k]) for k in range(3)])
    q = _slerp_rows(gt_t, gt_q, t)
    native = BiasTrack(gt_t, gt_bg, gt_ba)
    bias = interpolate_bias(native, t) if len(native) >= 2 else BiasTrack(t, gt_bg.repeat(len(t), 0), gt_ba.repeat(len(t), 0))

    med_dt = float(np.median(np.diff(t))) if len(t) > 1 else 0.005
    return Sequence(name=root.name, rate=1.0 / med_dt, source="ingested", imu=imu,
                    t_ns=imu_ns, gt_q=q, gt_p=p, gt_v=v, gt_bias=bias,
                    gt_bias_native=native)


def save_sequence(seq: Sequence, dir_path):
    """Write a sequence in the ASL layout (IMU + ground-truth state CSVs)."""
    root = Path(dir_path)
    (root / "imu0").mkdir(parents=True, exist_ok=True)
    (root / "state_groundtruth_estimate0").mkdir(parents=True, exist_ok=True)
    with open(root / "imu0" / "data.csv", "w") as fh:
        fh.write(_IMU_HEADER + "\n")
        for i in range(len(seq)):
            vals = [*seq.imu.omega_m[i], *seq.imu.accel_m[i]]
            fh.write(f"{int(seq.t_ns[i])}," + ",".join(repr(float(x)) for x in vals) + "\n")
    qf = _quat_internal_to_file(seq.gt_q)
    with open(root / "state_groundtruth_estimate0" / "data.csv", "w") as fh:
        fh.write(_GT_HEADER + "\n")
        for i in range(len(seq)):
            vals = [*seq.gt_p[i], *qf[i], *seq.gt_v[i], *seq.gt_bias.b_g[i], *seq.gt_bias.b_a[i]]
            fh.write(f"{int(seq.t_ns[i])}," + ",".join(repr(float(x)) for x in vals) + "\n")


def save_bias_csv(track: BiasTrack, path):
    """Sidecar bias CSV: t, bgx, bgy, bgz, bax, bay, baz."""
    with open(path, "w") as fh:
        fh.write("t,bgx,bgy,bgz,bax,bay,baz\n")
        for i in range(len(track)):
            vals = [track.t[i], *track.b_g[i], *track.b_a[i]]
            fh.write(",".join(repr(float(x)) for x in vals) + "\n")


def load_bias_csv(path) -> BiasTrack:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith(("#", "t,")):
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise DataError(f"{path}:{lineno}: expected 7 columns, got {len(parts)}")
            try:
                rows.append([float(x) for x in parts])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    m = np.asarray(rows)
    return BiasTrack(m[:, 0], m[:, 1:4], m[:, 4:7])


# ---------------------------------------------------------------------------
# dataset manifest


@dataclass
class ManifestEntry:
    name: str
    split: str        # "train" | "test"
    path: str         # sequence directory, relative to the manifest
    source: str = "synthetic"


@dataclass
class Manifest:
    rate: float
    window_duration: float
    window_overlap: float
    noise: NoiseParams
    sequences: list[ManifestEntry] = field(default_factory=list)

    def entries(self, split: str | None = None) -> list[ManifestEntry]:
        if split is None:
            return list(self.sequences)
        return [e for e in self.sequences if e.split == split]


def save_manifest(manifest: Manifest, path):
    doc = {
        "rate": manifest.rate,
        "window": {"duration": manifest.window_duration, "overlap": manifest.window_overlap},
        "noise": {"sigma_g": manifest.noise.sigma_g, "sigma_a": manifest.noise.sigma_a,
                  "eta_g": manifest.noise.eta_g, "eta_a": manifest.noise.eta_a},
        "sequences": [
            {"name": e.name, "split": e.split, "path": e.path, "source": e.source}
            for e in manifest.sequences
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing manifest: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
        noise = NoiseParams(**doc["noise"])
        entries = [ManifestEntry(**e) for e in doc["sequences"]]
        return Manifest(rate=float(doc["rate"]),
                        window_duration=float(doc["window"]["duration"]),
                        window_overlap=float(doc["window"]["overlap"]),
                        noise=noise, sequences=entries)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: bad manifest: {exc}") from None


def load_sequences(manifest: Manifest, manifest_path, split: str | None = None) -> list[Sequence]:
    base = Path(manifest_path).parent
    out = []
    for entry in manifest.entries(split):
        seq = load_euroc(base / entry.path)
        seq.name = entry.name
        seq.source = entry.source
        out.append(seq)
    return out
