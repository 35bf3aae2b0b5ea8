"""Denoising-diffusion machinery for bias sequences.

The forward process corrupts a normalized bias window x0 (6, W) through
T steps, x_t = sqrt(1-beta_t) x_{t-1} + sqrt(beta_t) eps; the closed
form jump uses alpha_bar_t = prod(1-beta_s).  Reverse sampling is
either ancestral (DDPM) or the deterministic accelerated DDIM over a
subsequence of timesteps.

The reverse update x_{t-1} = (x_t - gamma_t eps_hat)/sqrt(1-beta_t)
+ sigma_t z uses gamma_t = beta_t / sqrt(1-alpha_bar_t) and
sigma_t = sqrt(beta_t); no noise is added at the final step.

DDIM timesteps default to uniform spacing in the angle
arccos(sqrt(alpha_bar_t)) rather than uniform in t: with few steps the
uniform-in-t grid measurably shrinks the sampled distribution (the
per-gap contraction is cos(delta angle)), while the angle-uniform grid
minimizes it.  ``spacing="uniform"`` restores plain uniform steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import networks as nets
from .autodiff import Tensor
from .dataset import BiasTrack, Window

__all__ = [
    "DiffusionSchedule",
    "build_schedule",
    "forward_diffuse",
    "ddpm_sample",
    "ddim_sample",
    "ddim_timesteps",
    "training_arrays",
    "train_epoch",
    "train_model",
    "encode_windows",
    "sample_bias",
    "predict_bias",
]


@dataclass
class DiffusionSchedule:
    """Per-step arrays indexed by i = t-1 for t in 1..T."""

    beta: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if self.beta.ndim != 1 or len(self.beta) < 1:
            raise ValueError("beta must be a 1-d array")
        if np.any(self.beta <= 0) or np.any(self.beta >= 1):
            raise ValueError("beta values must lie in (0, 1)")
        self.alpha = 1.0 - self.beta
        self.alpha_bar = np.cumprod(self.alpha)
        self.gamma = self.beta / np.sqrt(1.0 - self.alpha_bar)
        self.sigma = np.sqrt(self.beta)

    @property
    def T(self) -> int:
        return len(self.beta)

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._idx(t)])

    def alpha_bar_at(self, t: int) -> float:
        return float(self.alpha_bar[self._idx(t)])

    def gamma_at(self, t: int) -> float:
        return float(self.gamma[self._idx(t)])

    def sigma_at(self, t: int) -> float:
        return float(self.sigma[self._idx(t)])

    def _idx(self, t) -> int:
        if np.any(np.asarray(t) < 1) or np.any(np.asarray(t) > self.T):
            raise ValueError(f"step {t} outside [1, {self.T}]")
        return np.asarray(t, dtype=int) - 1


def build_schedule(T: int = 1000, beta_1: float = 1e-4, beta_T: float = 0.02) -> DiffusionSchedule:
    """Linear beta schedule from beta_1 to beta_T over T steps."""
    if T < 2:
        raise ValueError("T must be at least 2")
    if not 0.0 < beta_1 <= beta_T < 1.0:
        raise ValueError(f"need 0 < beta_1 <= beta_T < 1, got {beta_1}, {beta_T}")
    return DiffusionSchedule(np.linspace(beta_1, beta_T, T))


def forward_diffuse(x0, t, eps, schedule: DiffusionSchedule):
    """Closed-form jump to step t: sqrt(ab_t) x0 + sqrt(1-ab_t) eps.

    t may be an int or a per-example vector matching x0's batch axis.
    """
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    idx = schedule._idx(t)
    ab = schedule.alpha_bar[idx]
    if np.ndim(ab) > 0:
        ab = ab.reshape((-1,) + (1,) * (x0.ndim - 1))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


# ---------------------------------------------------------------------------
# samplers (model-agnostic: eps_fn(x_t, t) -> predicted noise array)


def ddpm_sample(eps_fn, shape, schedule: DiffusionSchedule, rng) -> np.ndarray:
    """Ancestral sampling over all T steps from x_T ~ N(0, I)."""
    x = rng.standard_normal(shape)
    for t in range(schedule.T, 0, -1):
        i = t - 1
        x = (x - schedule.gamma[i] * np.asarray(eps_fn(x, t))) / np.sqrt(1.0 - schedule.beta[i])
        if t > 1:
            x = x + schedule.sigma[i] * rng.standard_normal(shape)
    return x


def ddim_timesteps(schedule: DiffusionSchedule, steps: int, spacing: str = "angle") -> np.ndarray:
    """Descending timestep subsequence from T down to 1."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    steps = min(steps, schedule.T)
    if spacing == "uniform":
        ts = np.linspace(1, schedule.T, steps)
        ts = np.unique(np.round(ts).astype(int))
    elif spacing == "angle":
        phi = np.arccos(np.sqrt(schedule.alpha_bar))
        targets = np.linspace(phi[0], phi[-1], steps)
        # nearest grid point per target angle
        right = np.searchsorted(phi, targets).clip(1, schedule.T - 1)
        left = right - 1
        nearest = np.where(targets - phi[left] <= phi[right] - targets, left, right)
        ts = np.unique(nearest + 1)
    else:
        raise ValueError(f"unknown spacing {spacing!r}")
    return ts[::-1]


def ddim_sample(eps_fn, shape, schedule: DiffusionSchedule, steps: int = 25,
                rng=None, x_T=None, spacing: str = "angle") -> np.ndarray:
    """Deterministic DDIM (eta = 0) over a timestep subsequence.

    Either an rng (to draw x_T) or an explicit x_T must be given.
    """
    if x_T is None:
        if rng is None:
            raise ValueError("provide rng or x_T")
        x = rng.standard_normal(shape)
    else:
        x = np.array(x_T, dtype=float, copy=True)
    ts = ddim_timesteps(schedule, steps, spacing)
    for j, t in enumerate(ts):
        i = t - 1
        eps = np.asarray(eps_fn(x, int(t)))
        sq_ab = np.sqrt(schedule.alpha_bar[i])
        x0_hat = (x - np.sqrt(1.0 - schedule.alpha_bar[i]) * eps) / sq_ab
        if j + 1 < len(ts):
            i_next = ts[j + 1] - 1
            x = (np.sqrt(schedule.alpha_bar[i_next]) * x0_hat
                 + np.sqrt(1.0 - schedule.alpha_bar[i_next]) * eps)
        else:
            x = x0_hat
    return x


# ---------------------------------------------------------------------------
# training


def training_arrays(windows: list[Window]):
    """Stack windows into (N, 6, W) IMU and bias arrays (unnormalized)."""
    if not windows:
        raise ValueError("empty window list")
    imu = np.stack([np.vstack([w.imu.omega_m.T, w.imu.accel_m.T]) for w in windows])
    bias = np.stack([np.vstack([w.gt_bias.b_g.T, w.gt_bias.b_a.T]) for w in windows])
    return imu, bias


def encode_windows(ckpt: nets.Checkpoint, imu: np.ndarray) -> np.ndarray:
    """Normalized condition codes for raw IMU windows (B, 6, W), no grads."""
    x = ckpt.normalizer.normalize_imu(imu).astype(np.float32)
    with ad.no_grad():
        c = nets.encode(ckpt.params, Tensor(x), ckpt.encoder_cfg)
    return c.data


def train_epoch(params, enc_cfg, den_cfg, imu_norm, bias_norm, schedule,
                opt_state, rng, batch_size=64, kind="diffusion") -> float:
    """One pass over the training windows; returns the mean loss.

    Diffusion: per example draw t ~ U[1,T] and eps ~ N(0,I), corrupt the
    normalized bias, and regress the noise.  Regression: predict the
    normalized bias directly.
    """
    n = imu_norm.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    order = rng.permutation(n)
    total, seen = 0.0, 0
    for start in range(0, n, batch_size):
        sel = order[start:start + batch_size]
        imu_b = Tensor(imu_norm[sel])
        c = nets.encode(params, imu_b, enc_cfg)
        if kind == "diffusion":
            t = rng.integers(1, schedule.T + 1, size=len(sel))
            eps = rng.standard_normal(bias_norm[sel].shape).astype(np.float32)
            x_t = forward_diffuse(bias_norm[sel], t, eps, schedule).astype(np.float32)
            pred = nets.denoise_eps(params, Tensor(x_t), t, c, den_cfg)
            loss = ad.mse_loss(pred, Tensor(eps))
        else:
            pred = nets.regress(params, c, den_cfg)
            loss = ad.mse_loss(pred, Tensor(bias_norm[sel].astype(np.float32)))
        loss.backward()
        ad.adam_step([params[k] for k in sorted(params)], opt_state)
        total += float(loss.data) * len(sel)
        seen += len(sel)
    return total / seen


def train_model(windows: list[Window], kind: str = "diffusion",
                enc_cfg: nets.EncoderConfig | None = None,
                den_cfg: nets.DenoiserConfig | None = None,
                epochs: int = 50, lr: float = 3e-5, batch_size: int = 64,
                seed: int = 0, schedule: DiffusionSchedule | None = None,
                log=None) -> nets.Checkpoint:
    """Train a diffusion or regression checkpoint from scratch."""
    if kind not in ("diffusion", "regression"):
        raise ValueError(f"unknown model kind {kind!r}")
    enc_cfg = enc_cfg or nets.DESK_ENCODER
    den_cfg = den_cfg or nets.DESK_DENOISER
    schedule = schedule or build_schedule(den_cfg.total_steps)
    imu, bias = training_arrays(windows)
    norm = nets.Normalizer.fit(imu, bias)
    imu_n = norm.normalize_imu(imu).astype(np.float32)
    bias_n = norm.normalize_bias(bias).astype(np.float32)

    rng = np.random.default_rng(seed)
    params = nets.init_params(enc_cfg, den_cfg, rng, dtype=np.float32)
    opt = ad.adam_init([params[k] for k in sorted(params)], lr=lr)
    curve = []
    for epoch in range(epochs):
        loss = train_epoch(params, enc_cfg, den_cfg, imu_n, bias_n, schedule,
                           opt, rng, batch_size, kind)
        curve.append(loss)
        if log:
            log(epoch, loss)
    sched_doc = {"T": schedule.T, "beta_1": float(schedule.beta[0]),
                 "beta_T": float(schedule.beta[-1])} if kind == "diffusion" else {}
    meta = {"seed": seed, "epochs": epochs, "lr": lr, "batch_size": batch_size,
            "windows": len(windows), "loss_curve": [float(x) for x in curve]}
    return nets.Checkpoint(kind=kind, encoder_cfg=enc_cfg, denoiser_cfg=den_cfg,
                           normalizer=norm, params=params, schedule=sched_doc, meta=meta)


# ---------------------------------------------------------------------------
# prediction


def schedule_from_checkpoint(ckpt: nets.Checkpoint) -> DiffusionSchedule:
    if ckpt.kind != "diffusion":
        raise nets.CheckpointError(f"expected a diffusion checkpoint, got {ckpt.kind!r}")
    doc = ckpt.schedule
    return build_schedule(int(doc["T"]), float(doc["beta_1"]), float(doc["beta_T"]))


def sample_bias(ckpt: nets.Checkpoint, imu: np.ndarray, rng, steps: int = 25,
                n_samples: int = 1, spacing: str = "angle") -> np.ndarray:
    """Sample denormalized bias windows (B, 6, W) for raw IMU windows.

    Draws n_samples per window and averages them (n_samples=1 is a
    single draw).  The condition code is encoded once and reused for
    every diffusion step and sample.
    """
    schedule = schedule_from_checkpoint(ckpt)
    c_data = encode_windows(ckpt, imu)
    c = Tensor(c_data)
    shape = (imu.shape[0], 6, imu.shape[2])

    def eps_fn(x_t, t):
        with ad.no_grad():
            out = nets.denoise_eps(ckpt.params, Tensor(x_t.astype(np.float32)), t, c,
                                   ckpt.denoiser_cfg)
        return out.data.astype(float)

    acc = np.zeros(shape)
    for _ in range(n_samples):
        acc += ddim_sample(eps_fn, shape, schedule, steps=steps, rng=rng, spacing=spacing)
    x0 = acc / n_samples
    return np.stack([ckpt.normalizer.denormalize_bias(x0[i]) for i in range(shape[0])])


def predict_bias(window: Window, ckpt: nets.Checkpoint, mode: str = "single",
                 n: int = 1, seed: int = 0, steps: int = 25) -> BiasTrack:
    """Sample a bias track for one window, aligned to its timestamps.

    mode="single" draws one sample (n must be 1); mode="mean_of_n"
    averages n independent samples.
    """
    if mode == "single":
        if n != 1:
            raise ValueError("mode='single' requires n=1")
    elif mode == "mean_of_n":
        if n < 1:
            raise ValueError("mean_of_n requires n >= 1")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    imu, _ = training_arrays([window])
    rng = np.random.default_rng(seed)
    out = sample_bias(ckpt, imu, rng, steps=steps, n_samples=n)[0]
    return BiasTrack(window.imu.t.copy(), out[:3].T, out[3:].T)


def regress_bias(window: Window, ckpt: nets.Checkpoint) -> BiasTrack:
    """Direct-regression prediction for one window."""
    if ckpt.kind != "regression":
        raise nets.CheckpointError(f"expected a regression checkpoint, got {ckpt.kind!r}")
    imu, _ = training_arrays([window])
    out = regress_bias_batch(ckpt, imu)[0]
    return BiasTrack(window.imu.t.copy(), out[:3].T, out[3:].T)


def regress_bias_batch(ckpt: nets.Checkpoint, imu: np.ndarray) -> np.ndarray:
    """Batched regression: raw IMU (B, 6, W) -> denormalized bias (B, 6, W)."""
    if ckpt.kind != "regression":
        raise nets.CheckpointError(f"expected a regression checkpoint, got {ckpt.kind!r}")
    c = Tensor(encode_windows(ckpt, imu))
    with ad.no_grad():
        out = nets.regress(ckpt.params, c, ckpt.denoiser_cfg)
    raw = out.data.astype(float)
    return np.stack([ckpt.normalizer.denormalize_bias(raw[i]) for i in range(raw.shape[0])])
