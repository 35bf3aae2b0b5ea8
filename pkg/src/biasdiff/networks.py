"""Network stack: causal TCN encoder, conditional GRU denoiser, direct
regression head, channel normalization, and checkpoint persistence.

Data layout everywhere is channel-major windows: a window is (6, W), a
batch is (B, 6, W), with W samples at the IMU rate.  The encoder turns
an IMU window into a per-timestep condition code (feature_dim, W); the
denoiser fuses latent + condition per timestep through one linear
layer, adds a projected sinusoidal step embedding, runs a two-cell
stacked GRU over the window and maps hidden states to the 6-channel
output with a final linear layer.

The regression baseline reuses the identical architecture with the
latent input clamped to zero and the step fixed at 1; its output is
read as the normalized bias instead of predicted noise.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "EncoderConfig",
    "DenoiserConfig",
    "Normalizer",
    "Checkpoint",
    "CheckpointError",
    "param_spec",
    "init_params",
    "parameter_count",
    "encode",
    "gru_cell",
    "denoise_eps",
    "regress",
    "timestep_embedding",
    "save_checkpoint",
    "load_checkpoint",
    "FULL_SCALE_ENCODER",
    "FULL_SCALE_DENOISER",
    "DESK_ENCODER",
    "DESK_DENOISER",
]


class CheckpointError(Exception):
    pass


@dataclass
class EncoderConfig:
    in_channels: int = 6
    widths: tuple = (64, 128)
    kernel_size: int = 5
    dilation_base: int = 2
    feature_dim: int = 128
    pool_features: bool = False  # average the code over time, then broadcast back

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if min(self.widths) <= 0 or self.feature_dim <= 0 or self.kernel_size <= 0:
            raise ValueError("encoder dimensions must be positive")

    @property
    def receptive_field(self) -> int:
        span = sum(self.dilation_base**i for i in range(len(self.widths)))
        return 1 + (self.kernel_size - 1) * span


@dataclass
class DenoiserConfig:
    latent_channels: int = 6
    condition_dim: int = 128
    fused_dim: int = 128
    hidden_size: int = 464
    num_cells: int = 2
    time_embed_dim: int = 128
    total_steps: int = 1000

    def __post_init__(self):
        if self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be even")
        if min(self.latent_channels, self.condition_dim, self.fused_dim,
               self.hidden_size, self.num_cells, self.total_steps) <= 0:
            raise ValueError("denoiser dimensions must be positive")


FULL_SCALE_ENCODER = EncoderConfig()
FULL_SCALE_DENOISER = DenoiserConfig()

# small configuration for CPU-budget experiments
DESK_ENCODER = EncoderConfig(widths=(24, 32), feature_dim=24)
DESK_DENOISER = DenoiserConfig(condition_dim=24, fused_dim=32, hidden_size=32,
                               time_embed_dim=32)


@dataclass
class Normalizer:
    """Per-channel standardization for 6-channel IMU inputs and bias targets."""

    imu_mean: np.ndarray
    imu_std: np.ndarray
    bias_mean: np.ndarray
    bias_std: np.ndarray

    def __post_init__(self):
        for name in ("imu_mean", "imu_std", "bias_mean", "bias_std"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(6))
        self.imu_std = np.maximum(self.imu_std, 1e-12)
        self.bias_std = np.maximum(self.bias_std, 1e-12)

    @staticmethod
    def fit(imu_windows: np.ndarray, bias_windows: np.ndarray) -> "Normalizer":
        """imu_windows, bias_windows: (N, 6, W) training arrays."""
        return Normalizer(
            imu_mean=imu_windows.mean(axis=(0, 2)),
            imu_std=imu_windows.std(axis=(0, 2)),
            bias_mean=bias_windows.mean(axis=(0, 2)),
            bias_std=bias_windows.std(axis=(0, 2)),
        )

    def normalize_imu(self, x):
        return (x - self.imu_mean[:, None]) / self.imu_std[:, None]

    def normalize_bias(self, b):
        return (b - self.bias_mean[:, None]) / self.bias_std[:, None]

    def denormalize_bias(self, b):
        return b * self.bias_std[:, None] + self.bias_mean[:, None]


# ---------------------------------------------------------------------------
# parameters


def param_spec(enc: EncoderConfig, den: DenoiserConfig) -> list[tuple[str, tuple]]:
    """Names and shapes of every parameter, in definition order."""
    spec = []
    prev = enc.in_channels
    for i, width in enumerate(enc.widths):
        spec.append((f"encoder.conv{i}.w", (width, prev, enc.kernel_size)))
        spec.append((f"encoder.conv{i}.b", (width,)))
        if prev != width:
            spec.append((f"encoder.res{i}.w", (width, prev, 1)))
        prev = width
    spec.append(("encoder.out.w", (enc.feature_dim, prev, 1)))
    spec.append(("encoder.out.b", (enc.feature_dim,)))

    fuse_in = den.latent_channels + den.condition_dim
    spec.append(("denoiser.fusion.w", (fuse_in, den.fused_dim)))
    spec.append(("denoiser.fusion.b", (den.fused_dim,)))
    spec.append(("denoiser.time_proj.w", (den.time_embed_dim, den.fused_dim)))
    spec.append(("denoiser.time_proj.b", (den.fused_dim,)))
    for cell in range(den.num_cells):
        in_dim = den.fused_dim if cell == 0 else den.hidden_size
        for gate in ("z", "r", "h"):
            spec.append((f"denoiser.gru{cell}.w_{gate}", (in_dim + den.hidden_size, den.hidden_size)))
            spec.append((f"denoiser.gru{cell}.b_{gate}", (den.hidden_size,)))
    spec.append(("denoiser.out.w", (den.hidden_size, den.latent_channels)))
    spec.append(("denoiser.out.b", (den.latent_channels,)))
    return spec


def parameter_count(enc: EncoderConfig, den: DenoiserConfig) -> int:
    """Exact number of scalars across encoder + denoiser."""
    return int(sum(np.prod(shape) for _, shape in param_spec(enc, den)))


def init_params(enc: EncoderConfig, den: DenoiserConfig, rng, dtype=np.float32) -> dict[str, Tensor]:
    """Fan-in scaled Gaussian weights, zero biases."""
    params = {}
    for name, shape in param_spec(enc, den):
        if name.endswith(".b"):
            data = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if name.endswith((".w",)) and len(shape) == 3 else shape[0]
            data = rng.standard_normal(shape) / np.sqrt(fan_in)
        params[name] = Tensor(data.astype(dtype), requires_grad=True)
    return params


def _check_params(params: dict, enc: EncoderConfig, den: DenoiserConfig):
    for name, shape in param_spec(enc, den):
        if name not in params:
            raise CheckpointError(f"missing parameter {name}")
        if tuple(params[name].shape) != tuple(shape):
            raise CheckpointError(
                f"parameter {name} has shape {params[name].shape}, config demands {shape}")


# ---------------------------------------------------------------------------
# encoder


def _ensure_batched(x, channels) -> tuple[Tensor, bool]:
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
    single = t.ndim == 2
    if single:
        t = Tensor(t.data[None], requires_grad=t.requires_grad) if not t.requires_grad else t
        if t.ndim == 2:
            raise ad.ShapeError("pass 3-d tensors when gradients are required")
    if t.ndim != 3 or t.shape[1] != channels:
        raise ad.ShapeError(f"expected (B, {channels}, W) input, got {t.shape}")
    return t, single


def encode(params: dict, imu: Tensor | np.ndarray, cfg: EncoderConfig) -> Tensor:
    """IMU window(s) -> per-timestep condition code (B, feature_dim, W).

    Accepts (6, W) or (B, 6, W); input must already be normalized.
    """
    x = imu if isinstance(imu, Tensor) else Tensor(np.asarray(imu))
    single = x.ndim == 2
    if single:
        x = Tensor(x.data[None])
    if x.ndim != 3 or x.shape[1] != cfg.in_channels:
        raise ad.ShapeError(f"encoder expects (B, {cfg.in_channels}, W), got {x.shape}")
    if x.shape[2] < cfg.receptive_field:
        raise ad.ShapeError(
            f"window length {x.shape[2]} below encoder receptive field {cfg.receptive_field}")
    h = x
    prev = cfg.in_channels
    for i, width in enumerate(cfg.widths):
        dilation = cfg.dilation_base**i
        y = ad.relu(ad.causal_dilated_conv1d(h, params[f"encoder.conv{i}.w"],
                                             params[f"encoder.conv{i}.b"], dilation))
        if prev != width:
            h = ad.add(y, ad.causal_dilated_conv1d(h, params[f"encoder.res{i}.w"], None, 1))
        else:
            h = ad.add(y, h)
        prev = width
    c = ad.causal_dilated_conv1d(h, params["encoder.out.w"], params["encoder.out.b"], 1)
    if cfg.pool_features:
        c = ad.tile_time(ad.mean_time(c), x.shape[2])
    if single:
        c = Tensor(c.data[0]) if not c.requires_grad else c
    return c


# ---------------------------------------------------------------------------
# GRU


def gru_cell(x: Tensor, h_prev: Tensor, params: dict, prefix: str = "denoiser.gru0") -> Tensor:
    """One GRU step: x (B, in), h_prev (B, hidden) -> h (B, hidden)."""
    w_z, b_z = params[f"{prefix}.w_z"], params[f"{prefix}.b_z"]
    w_r, b_r = params[f"{prefix}.w_r"], params[f"{prefix}.b_r"]
    w_h, b_h = params[f"{prefix}.w_h"], params[f"{prefix}.b_h"]
    cat = ad.concat([x, h_prev], axis=1)
    z = ad.sigmoid(ad.add(ad.matmul(cat, w_z), b_z))
    r = ad.sigmoid(ad.add(ad.matmul(cat, w_r), b_r))
    cat_r = ad.concat([x, ad.mul(r, h_prev)], axis=1)
    h_tilde = ad.tanh(ad.add(ad.matmul(cat_r, w_h), b_h))
    return ad.add(ad.mul(ad.sub(1.0, z), h_prev), ad.mul(z, h_tilde))


def _gru_sequence(x_rows: Tensor, n_steps: int, batch: int, params: dict,
                  prefix: str, in_dim: int, hidden: int) -> list[Tensor]:
    """Run one cell over a whole window; same math as repeated gru_cell.

    The input-to-gate products are hoisted out of the recurrence as one
    large matmul per gate.
    """
    wx, wh, pre = {}, {}, {}
    for gate in ("z", "r", "h"):
        w = params[f"{prefix}.w_{gate}"]
        wx[gate] = ad.narrow(w, 0, 0, in_dim)
        wh[gate] = ad.narrow(w, 0, in_dim, hidden)
        pre[gate] = ad.add(ad.matmul(x_rows, wx[gate]), params[f"{prefix}.b_{gate}"])
    h = Tensor(np.zeros((batch, hidden), dtype=x_rows.data.dtype))
    out = []
    for i in range(n_steps):
        z = ad.sigmoid(ad.add(ad.rows_step(pre["z"], n_steps, i), ad.matmul(h, wh["z"])))
        r = ad.sigmoid(ad.add(ad.rows_step(pre["r"], n_steps, i), ad.matmul(h, wh["r"])))
        h_tilde = ad.tanh(ad.add(ad.rows_step(pre["h"], n_steps, i),
                                 ad.matmul(ad.mul(r, h), wh["h"])))
        h = ad.add(ad.mul(ad.sub(1.0, z), h), ad.mul(z, h_tilde))
        out.append(h)
    return out


# ---------------------------------------------------------------------------
# timestep embedding and the denoiser


def timestep_embedding(t, dim: int, total_steps: int) -> np.ndarray:
    """Sinusoidal step embedding: (sin, cos) pairs at geometric frequencies.

    t: int or (B,) ints in [1, total_steps].  Returns (dim,) or (B, dim).
    """
    t_arr = np.atleast_1d(np.asarray(t))
    if np.any(t_arr < 1) or np.any(t_arr > total_steps):
        raise ValueError(f"step {t} outside [1, {total_steps}]")
    if dim % 2:
        raise ValueError("embedding dim must be even")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = t_arr[:, None].astype(float) * freqs[None]
    emb = np.concatenate([np.sin(ang), np.cos(ang)], axis=1)
    return emb[0] if np.ndim(t) == 0 else emb


def denoise_eps(params: dict, x_t, t, c, cfg: DenoiserConfig) -> Tensor:
    """Predicted noise for latent x_t at step t under condition code c.

    x_t (B, 6, W) or (6, W); t int or (B,); c matching condition series.
    """
    x = x_t if isinstance(x_t, Tensor) else Tensor(np.asarray(x_t))
    cc = c if isinstance(c, Tensor) else Tensor(np.asarray(c))
    single = x.ndim == 2
    if single:
        x, cc = Tensor(x.data[None]), Tensor(cc.data[None])
    if x.ndim != 3 or x.shape[1] != cfg.latent_channels:
        raise ad.ShapeError(f"latent must be (B, {cfg.latent_channels}, W), got {x.shape}")
    if cc.shape[0] != x.shape[0] or cc.shape[1] != cfg.condition_dim or cc.shape[2] != x.shape[2]:
        raise ad.ShapeError(
            f"condition shape {cc.shape} does not match latent {x.shape} "
            f"with condition_dim {cfg.condition_dim}")
    batch, _, w_len = x.shape

    fused_rows = ad.add(
        ad.matmul(ad.bcw_to_rows(ad.concat([x, cc], axis=1)), params["denoiser.fusion.w"]),
        params["denoiser.fusion.b"],
    )
    t_arr = np.full(batch, int(t)) if np.ndim(t) == 0 else np.asarray(t, dtype=int)
    if t_arr.shape != (batch,):
        raise ad.ShapeError(f"step vector shape {t_arr.shape} does not match batch {batch}")
    emb = Tensor(timestep_embedding(t_arr, cfg.time_embed_dim, cfg.total_steps).astype(x.data.dtype))
    t_rows = ad.repeat_rows(
        ad.add(ad.matmul(emb, params["denoiser.time_proj.w"]), params["denoiser.time_proj.b"]),
        w_len,
    )
    rows = ad.add(fused_rows, t_rows)

    in_dim = cfg.fused_dim
    for cell in range(cfg.num_cells):
        hs = _gru_sequence(rows, w_len, batch, params, f"denoiser.gru{cell}",
                           in_dim, cfg.hidden_size)
        rows = ad.bcw_to_rows(ad.stack_steps(hs))
        in_dim = cfg.hidden_size
    out_rows = ad.add(ad.matmul(rows, params["denoiser.out.w"]), params["denoiser.out.b"])
    out = ad.rows_to_bcw(out_rows, batch, w_len)
    if single and not out.requires_grad:
        out = Tensor(out.data[0])
    return out


def regress(params: dict, c, cfg: DenoiserConfig) -> Tensor:
    """Direct-regression head: the same backbone with zero latent, step 1.

    Output is read as the normalized bias sequence (B, 6, W)."""
    cc = c if isinstance(c, Tensor) else Tensor(np.asarray(c))
    single = cc.ndim == 2
    if single:
        cc = Tensor(cc.data[None])
    zeros = Tensor(np.zeros((cc.shape[0], cfg.latent_channels, cc.shape[2]), dtype=cc.data.dtype))
    out = denoise_eps(params, zeros, 1, cc, cfg)
    if single and not out.requires_grad:
        out = Tensor(out.data[0])
    return out


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"BFCKPT"
_VERSION = 1


@dataclass
class Checkpoint:
    kind: str  # "diffusion" | "regression"
    encoder_cfg: EncoderConfig
    denoiser_cfg: DenoiserConfig
    normalizer: Normalizer
    params: dict[str, Tensor]
    schedule: dict = field(default_factory=dict)  # T, beta_1, beta_T (diffusion)
    meta: dict = field(default_factory=dict)      # seed, epochs, loss_curve, ...


def save_checkpoint(path, ckpt: Checkpoint):
    """Binary layout: magic, u32 version, u32 header length, JSON header,
    little-endian float32 payload (tensors in name order)."""
    if ckpt.kind not in ("diffusion", "regression"):
        raise CheckpointError(f"unknown checkpoint kind {ckpt.kind!r}")
    _check_params(ckpt.params, ckpt.encoder_cfg, ckpt.denoiser_cfg)
    names = sorted(ckpt.params)
    directory = []
    chunks = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(ckpt.params[name].data, dtype="<f4")
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.size
    payload = b"".join(chunks)
    header = {
        "kind": ckpt.kind,
        "encoder": asdict(ckpt.encoder_cfg),
        "denoiser": asdict(ckpt.denoiser_cfg),
        "normalizer": {k: list(map(float, getattr(ckpt.normalizer, k)))
                       for k in ("imu_mean", "imu_std", "bias_mean", "bias_std")},
        "schedule": ckpt.schedule,
        "meta": ckpt.meta,
        "tensors": directory,
        "payload_elements": offset,
        "payload_crc32": zlib.crc32(payload),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(_VERSION).tobytes())
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        fh.write(payload)


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(str(exc)) from None
    if len(raw) < 14 or raw[:6] != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version = int(np.frombuffer(raw[6:10], dtype="<u4")[0])
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    hlen = int(np.frombuffer(raw[10:14], dtype="<u4")[0])
    if len(raw) < 14 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[14:14 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from None
    payload = raw[14 + hlen:]
    expected = int(header["payload_elements"]) * 4
    if len(payload) != expected:
        raise CheckpointError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    if zlib.crc32(payload) != header["payload_crc32"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")

    enc = EncoderConfig(**{**header["encoder"], "widths": tuple(header["encoder"]["widths"])})
    den = DenoiserConfig(**header["denoiser"])
    flat = np.frombuffer(payload, dtype="<f4")
    params = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape))
        start = entry["offset"]
        params[entry["name"]] = Tensor(flat[start:start + size].reshape(shape).copy(),
                                       requires_grad=True)
    _check_params(params, enc, den)
    norm = Normalizer(**header["normalizer"])
    return Checkpoint(kind=header["kind"], encoder_cfg=enc, denoiser_cfg=den,
                      normalizer=norm, params=params, schedule=header["schedule"],
                      meta=header["meta"])
