"""Small convolutional noise predictor with hand-written backpropagation.

Architecture: four 3x3 zero-padded convolutions (2C+1 -> H -> H -> H -> C)
with SiLU between them. The input stacks z_t, the upsampled LR image and a
constant plane holding gamma_t. A 16-dimensional sinusoidal embedding of
gamma_t is projected by ``gamma_embed.weight`` and added to the first
layer's bias.

Model files (.ymdl): magic ``YMDL``, then u32 little-endian version (1),
channels and hidden width, then every parameter as binary32 little-endian in
``PARAMETER_ORDER``, each flattened in C order. Convolution weights have
layout (kh, kw, in, out).
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from src.core_types import DataError, ImageTensor
from src.logger import get_logger
from src.rng import RngStream

logger = get_logger(__name__)

EMBED_DIM = 16
GAMMA_SCALE = 1000.0
DEFAULT_HIDDEN = 32
KERNEL = 3

PARAMETER_ORDER = (
    "conv1.weight",
    "conv1.bias",
    "gamma_embed.weight",
    "conv2.weight",
    "conv2.bias",
    "conv3.weight",
    "conv3.bias",
    "conv4.weight",
    "conv4.bias",
)

MODEL_MAGIC = b"YMDL"
MODEL_VERSION = 1
MODEL_HEADER = struct.Struct("<4sIII")


class StaleCacheError(RuntimeError):
    """Backward called with a cache from an older parameter version"""


class ModelFormatError(DataError):
    """Model file is malformed"""


def gamma_embedding(gamma_t: float) -> np.ndarray:
    """Sinusoidal embedding of the noise level."""
    half = EMBED_DIM // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = gamma_t * GAMMA_SCALE * freqs
    return np.concatenate([np.sin(args), np.cos(args)])


def silu(x: np.ndarray) -> np.ndarray:
    return x * expit(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Same-size 3x3 convolution with zero padding.

    Returns:
        (output of shape (H, W, out), im2col matrix for backward)
    """
    height, width, channels = x.shape
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    windows = sliding_window_view(padded, (KERNEL, KERNEL), axis=(0, 1))
    cols = windows.transpose(0, 1, 3, 4, 2).reshape(height * width, KERNEL * KERNEL * channels)
    out = cols @ weight.reshape(-1, weight.shape[-1]) + bias
    return out.reshape(height, width, -1), cols


def conv2d_backward(
    grad_out: np.ndarray,
    cols: np.ndarray,
    weight: np.ndarray,
    need_input_grad: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Gradients of ``conv2d`` w.r.t. weight, bias and (optionally) input."""
    height, width, out_channels = grad_out.shape
    flat = grad_out.reshape(height * width, out_channels)
    grad_weight = (cols.T @ flat).reshape(weight.shape)
    grad_bias = flat.sum(axis=0)
    if not need_input_grad:
        return grad_weight, grad_bias, None
    in_channels = weight.shape[2]
    grad_cols = (flat @ weight.reshape(-1, out_channels).T).reshape(
        height, width, KERNEL, KERNEL, in_channels
    )
    grad_padded = np.zeros((height + 2, width + 2, in_channels))
    for i in range(KERNEL):
        for j in range(KERNEL):
            grad_padded[i:i + height, j:j + width] += grad_cols[:, :, i, j, :]
    return grad_weight, grad_bias, grad_padded[1:-1, 1:-1]


@dataclass(frozen=True)
class ForwardCache:
    """Activations saved by ``TinyDenoiser.forward``."""

    owner_id: int
    version: int
    embedding: np.ndarray
    cols: tuple[np.ndarray, ...]
    pre_activations: tuple[np.ndarray, ...]


class TinyDenoiser:
    """Four-layer convolutional epsilon predictor."""

    def __init__(self, channels: int, hidden: int = DEFAULT_HIDDEN, seed: int = 0):
        """
        Initialize with Glorot-uniform weights and zero biases

        Args:
            channels: Image channel count C
            hidden: Width of the hidden convolutions
            seed: Initialization seed
        """
        if channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {channels}")
        if hidden < 1:
            raise ValueError(f"hidden must be positive, got {hidden}")
        self.channels = channels
        self.hidden = hidden
        self._version = 0
        rng = RngStream(seed)
        self.params: dict[str, np.ndarray] = {}
        for name, shape in self.parameter_shapes().items():
            if name.endswith(".bias"):
                self.params[name] = np.zeros(shape)
                continue
            if name == "gamma_embed.weight":
                fan_in, fan_out = shape
            else:
                fan_in = KERNEL * KERNEL * shape[2]
                fan_out = KERNEL * KERNEL * shape[3]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            draws = rng.uniform(int(np.prod(shape))).reshape(shape)
            self.params[name] = (2.0 * draws - 1.0) * limit

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        """Shape of every parameter, in file order."""
        c, h = self.channels, self.hidden
        return {
            "conv1.weight": (KERNEL, KERNEL, 2 * c + 1, h),
            "conv1.bias": (h,),
            "gamma_embed.weight": (EMBED_DIM, h),
            "conv2.weight": (KERNEL, KERNEL, h, h),
            "conv2.bias": (h,),
            "conv3.weight": (KERNEL, KERNEL, h, h),
            "conv3.bias": (h,),
            "conv4.weight": (KERNEL, KERNEL, h, c),
            "conv4.bias": (c,),
        }

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    @property
    def version(self) -> int:
        """Incremented whenever parameters are replaced or updated"""
        return self._version

    def mark_updated(self) -> None:
        """Invalidate outstanding forward caches after an in-place update."""
        self._version += 1

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        """Replace one parameter array.

        Raises:
            KeyError: If the parameter does not exist
            ValueError: If the shape differs
        """
        if name not in self.params:
            raise KeyError(f"Unknown parameter: {name}")
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.params[name].shape:
            raise ValueError(f"{name} expects shape {self.params[name].shape}, got {value.shape}")
        self.params[name] = value.copy()
        self.mark_updated()

    def forward(
        self,
        x_up: ImageTensor,
        z_t: ImageTensor,
        gamma_t: float,
    ) -> tuple[ImageTensor, ForwardCache]:
        """Predict noise for one image.

        Returns:
            (eps_pred shaped like z_t, cache for ``backward``)
        """
        if z_t.shape != x_up.shape or z_t.shape[2] != self.channels:
            raise ValueError(
                f"Expected matching (H, W, {self.channels}) inputs, got {z_t.shape}, {x_up.shape}"
            )
        p = self.params
        gamma_plane = np.full(z_t.shape[:2] + (1,), gamma_t)
        inputs = np.concatenate([z_t, x_up, gamma_plane], axis=2)
        embedding = gamma_embedding(gamma_t)
        bias1 = p["conv1.bias"] + embedding @ p["gamma_embed.weight"]

        pre1, cols1 = conv2d(inputs, p["conv1.weight"], bias1)
        pre2, cols2 = conv2d(silu(pre1), p["conv2.weight"], p["conv2.bias"])
        pre3, cols3 = conv2d(silu(pre2), p["conv3.weight"], p["conv3.bias"])
        out, cols4 = conv2d(silu(pre3), p["conv4.weight"], p["conv4.bias"])
        cache = ForwardCache(
            owner_id=id(self),
            version=self._version,
            embedding=embedding,
            cols=(cols1, cols2, cols3, cols4),
            pre_activations=(pre1, pre2, pre3),
        )
        return out, cache

    def backward(self, cache: ForwardCache, grad_out: ImageTensor) -> dict[str, np.ndarray]:
        """Exact parameter gradients for the forward pass recorded in ``cache``.

        Raises:
            StaleCacheError: If parameters changed since the forward pass
        """
        if cache.owner_id != id(self) or cache.version != self._version:
            raise StaleCacheError("Forward cache does not match the current parameters")
        p = self.params
        cols1, cols2, cols3, cols4 = cache.cols
        pre1, pre2, pre3 = cache.pre_activations
        grads: dict[str, np.ndarray] = {}

        grads["conv4.weight"], grads["conv4.bias"], d_act3 = conv2d_backward(
            grad_out, cols4, p["conv4.weight"]
        )
        grads["conv3.weight"], grads["conv3.bias"], d_act2 = conv2d_backward(
            d_act3 * silu_grad(pre3), cols3, p["conv3.weight"]
        )
        grads["conv2.weight"], grads["conv2.bias"], d_act1 = conv2d_backward(
            d_act2 * silu_grad(pre2), cols2, p["conv2.weight"]
        )
        grads["conv1.weight"], grads["conv1.bias"], _ = conv2d_backward(
            d_act1 * silu_grad(pre1), cols1, p["conv1.weight"], need_input_grad=False
        )
        grads["gamma_embed.weight"] = np.outer(cache.embedding, grads["conv1.bias"])
        return {name: grads[name] for name in PARAMETER_ORDER}

    def predict(self, x_cond: ImageTensor, z_t: ImageTensor, gamma_t: float) -> ImageTensor:
        """Denoiser interface used by the samplers."""
        eps_pred, _ = self.forward(x_cond, z_t, gamma_t)
        return eps_pred


def save_model(model: TinyDenoiser, path: Path | str) -> Path:
    """Write a model file; parameters are rounded to binary32."""
    path = Path(path)
    header = MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.channels, model.hidden)
    blob = b"".join(model.params[name].astype("<f4").tobytes(order="C") for name in PARAMETER_ORDER)
    path.write_bytes(header + blob)
    logger.info("model_saved", path=str(path), parameters=model.parameter_count)
    return path


def load_model(path: Path | str) -> TinyDenoiser:
    """Read a model file written by ``save_model``.

    Raises:
        ModelFormatError: On bad magic, unsupported version, or wrong payload size
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < MODEL_HEADER.size:
        raise ModelFormatError(f"{path}: file too short for a model header")
    magic, version, channels, hidden = MODEL_HEADER.unpack_from(blob)
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version}")
    try:
        model = TinyDenoiser(channels=channels, hidden=hidden)
    except ValueError as e:
        raise ModelFormatError(f"{path}: {e}") from e
    payload = blob[MODEL_HEADER.size:]
    if len(payload) != 4 * model.parameter_count:
        raise ModelFormatError(
            f"{path}: payload has {len(payload)} bytes, expected {4 * model.parameter_count}"
        )
    values = np.frombuffer(payload, dtype="<f4")
    offset = 0
    for name, shape in model.parameter_shapes().items():
        size = int(np.prod(shape))
        model.set_parameter(name, values[offset:offset + size].astype(np.float64).reshape(shape))
        offset += size
    logger.info("model_loaded", path=str(path), channels=channels, hidden=hidden)
    return model
