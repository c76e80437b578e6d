"""Coordinate network with per-video and per-frame shift modulations.

A stack of sine layers maps a normalized (x, y) coordinate to a grayscale
value. Two latent vectors condition the shared weights: a video-level
vector projected into one shift per layer, and a per-frame vector
projected into one shift per layer per frame. Both shifts are added to
the pre-activation before the sine, so zero latents reproduce the bare
network exactly (the projections carry no bias).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tg
from .errors import ContractError, ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class VideoModulation:
    """Latent vector holding the time-invariant features of one video."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 1:
            raise ShapeError(f"video modulation must be 1-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ContractError("video modulation contains non-finite entries")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FrameModulationSeq:
    """One latent vector per frame, stacked as a (T, r) array."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ShapeError(f"frame modulations must be (T, r) with T >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ContractError("frame modulations contain non-finite entries")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]

    def frame(self, t: int) -> np.ndarray:
        return self.values[t]


@dataclass(frozen=True)
class LayerShifts:
    """Recomputed per-layer shifts; diagnostic view, never persisted."""

    video_shifts: list  # K arrays of shape (hidden,)
    frame_shifts: list  # K arrays of shape (T, hidden)


@dataclass(frozen=True)
class CoordinateGrid:
    """Full pixel grid of a frame in normalized [-1, 1] coordinates.

    Pixel (i, j) maps to x = 2j/(w-1) - 1 and y = 2i/(h-1) - 1, row-major;
    an axis of extent 1 maps to 0.
    """

    height: int
    width: int
    coords: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ContractError(f"grid extents must be positive, got {self.height}x{self.width}")
        xs = _axis_coords(self.width)
        ys = _axis_coords(self.height)
        grid = np.empty((self.height * self.width, 2), dtype=np.float32)
        grid[:, 0] = np.tile(xs, self.height)
        grid[:, 1] = np.repeat(ys, self.width)
        grid.setflags(write=False)
        object.__setattr__(self, "coords", grid)


def _axis_coords(extent: int) -> np.ndarray:
    if extent == 1:
        return np.zeros(1, dtype=np.float32)
    return (2.0 * np.arange(extent, dtype=np.float32) / (extent - 1) - 1.0).astype(np.float32)


@dataclass(frozen=True)
class CoordSample:
    """Subset of pixel positions with their normalized coordinates."""

    indices: np.ndarray  # (N,) row-major pixel indices
    coords: np.ndarray   # (N, 2) normalized (x, y)


def sample_coords(height: int, width: int, count: int, rng: np.random.Generator) -> CoordSample:
    """Sample `count` distinct pixels uniformly; the full count gives the
    whole grid in row-major order."""
    total = height * width
    if not 1 <= count <= total:
        raise ContractError(f"coordinate count {count} outside [1, {total}]")
    grid = CoordinateGrid(height, width)
    if count == total:
        indices = np.arange(total, dtype=np.int64)
    else:
        indices = np.sort(rng.choice(total, size=count, replace=False)).astype(np.int64)
    return CoordSample(indices=indices, coords=grid.coords[indices])


class MetaModel:
    """Shared network weights plus the modulation projections.

    Weight matrices are stored input-major, so a batch of rows X maps
    through a layer as X @ W + b. Immutable during evaluation; training
    swaps in fresh tensors via `replace_params`.
    """

    def __init__(self, layer_weights, layer_biases, out_weight, out_bias,
                 video_projs, frame_projs, omega0: float, iteration: int = 0):
        self.layer_weights = list(layer_weights)   # [ (2,l), (l,l) x (K-1) ]
        self.layer_biases = list(layer_biases)     # K of (l,)
        self.out_weight = out_weight               # (l, 1)
        self.out_bias = out_bias                   # (1,)
        self.video_projs = list(video_projs)       # K of (s, l)
        self.frame_projs = list(frame_projs)       # K of (r, l)
        self.omega0 = float(omega0)
        self.iteration = int(iteration)
        self._validate()

    def _validate(self):
        if self.omega0 <= 0:
            raise ContractError(f"omega0 must be positive, got {self.omega0}")
        k = len(self.layer_weights)
        if k < 1:
            raise ContractError("need at least one sine layer")
        if not (len(self.layer_biases) == len(self.video_projs) == len(self.frame_projs) == k):
            raise ShapeError("per-layer parameter lists disagree in length")
        l = self.layer_weights[0].shape[1]
        if self.layer_weights[0].shape[0] != 2:
            raise ShapeError(f"first layer must take 2 inputs, got {self.layer_weights[0].shape}")
        for w in self.layer_weights[1:]:
            if w.shape != (l, l):
                raise ShapeError(f"hidden layer shape {w.shape}, expected {(l, l)}")
        for b in self.layer_biases:
            if b.shape != (l,):
                raise ShapeError(f"bias shape {b.shape}, expected {(l,)}")
        if self.out_weight.shape != (l, 1) or self.out_bias.shape != (1,):
            raise ShapeError("output layer shape inconsistent with hidden width")
        s = self.video_projs[0].shape[0]
        r = self.frame_projs[0].shape[0]
        for p in self.video_projs:
            if p.shape != (s, l):
                raise ShapeError(f"video projection shape {p.shape}, expected {(s, l)}")
        for p in self.frame_projs:
            if p.shape != (r, l):
                raise ShapeError(f"frame projection shape {p.shape}, expected {(r, l)}")

    # architecture dimensions
    @property
    def layers(self) -> int:
        return len(self.layer_weights)

    @property
    def hidden(self) -> int:
        return self.layer_weights[0].shape[1]

    @property
    def video_dim(self) -> int:
        return self.video_projs[0].shape[0]

    @property
    def frame_dim(self) -> int:
        return self.frame_projs[0].shape[0]

    @property
    def dtype(self):
        return self.layer_weights[0].dtype

    @classmethod
    def initialize(cls, layers: int, hidden: int, video_dim: int, frame_dim: int,
                   omega0: float = 30.0, seed: int = 0, dtype=np.float32,
                   rng: np.random.Generator | None = None) -> "MetaModel":
        """Fresh weights under the standard sine-network scheme: first layer
        uniform in +-1/fan_in, later layers and projections uniform in
        +-sqrt(6/fan_in)/omega0, output layer uniform in +-sqrt(6/fan_in)."""
        if layers < 1 or hidden < 1 or video_dim < 1 or frame_dim < 1:
            raise ContractError("all architecture dimensions must be >= 1")
        if rng is None:
            rng = np.random.default_rng([seed, 0])

        def uniform(shape, bound):
            return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype))

        lw, lb, vp, fp = [], [], [], []
        for k in range(layers):
            fan_in = 2 if k == 0 else hidden
            bound = (1.0 / fan_in) if k == 0 else (np.sqrt(6.0 / fan_in) / omega0)
            lw.append(uniform((fan_in, hidden), bound))
            lb.append(uniform((hidden,), bound))
            vp.append(uniform((video_dim, hidden), np.sqrt(6.0 / video_dim) / omega0))
            fp.append(uniform((frame_dim, hidden), np.sqrt(6.0 / frame_dim) / omega0))
        out_bound = np.sqrt(6.0 / hidden)
        return cls(lw, lb, uniform((hidden, 1), out_bound), uniform((1,), out_bound),
                   vp, fp, omega0=omega0, iteration=0)

    def parameters(self) -> list[tuple[str, Tensor]]:
        """All trainable tensors in their declared (serialization) order."""
        named: list[tuple[str, Tensor]] = []
        for k in range(self.layers):
            named.append((f"layer{k}.weight", self.layer_weights[k]))
            named.append((f"layer{k}.bias", self.layer_biases[k]))
        named.append(("out.weight", self.out_weight))
        named.append(("out.bias", self.out_bias))
        for k in range(self.layers):
            named.append((f"video_proj{k}", self.video_projs[k]))
        for k in range(self.layers):
            named.append((f"frame_proj{k}", self.frame_projs[k]))
        return named

    def replace_params(self, new_params: dict[str, Tensor], iteration: int | None = None) -> "MetaModel":
        current = dict(self.parameters())
        current.update(new_params)
        k = self.layers
        return MetaModel(
            [current[f"layer{i}.weight"] for i in range(k)],
            [current[f"layer{i}.bias"] for i in range(k)],
            current["out.weight"], current["out.bias"],
            [current[f"video_proj{i}"] for i in range(k)],
            [current[f"frame_proj{i}"] for i in range(k)],
            omega0=self.omega0,
            iteration=self.iteration if iteration is None else iteration,
        )


def forward_batch(model: MetaModel, v: Tensor, phis: Tensor,
                  coords: np.ndarray, rows_per_frame: int) -> Tensor:
    """Differentiable forward pass over stacked frames.

    `coords` holds rows_per_frame coordinate rows for each of the b frames,
    concatenated in frame order (b * rows_per_frame, 2); `phis` is (b, r).
    Returns predicted values of shape (b * rows_per_frame, 1), unclamped.
    """
    if v.data.ndim != 1 or v.shape[0] != model.video_dim:
        raise ShapeError(f"video modulation length {v.shape} != ({model.video_dim},)")
    if phis.data.ndim != 2 or phis.shape[1] != model.frame_dim:
        raise ShapeError(f"frame modulation shape {phis.shape} incompatible with r={model.frame_dim}")
    b = phis.shape[0]
    if coords.shape != (b * rows_per_frame, 2):
        raise ShapeError(
            f"coords shape {coords.shape} != ({b * rows_per_frame}, 2) for {b} frames"
        )
    v_row = tg.reshape(v, (1, model.video_dim))
    h = Tensor(np.ascontiguousarray(coords, dtype=model.dtype))
    for k in range(model.layers):
        a = tg.matmul(h, model.layer_weights[k])
        a = tg.add_row(a, model.layer_biases[k])
        video_shift = tg.reshape(tg.matmul(v_row, model.video_projs[k]), (model.hidden,))
        a = tg.add_row(a, video_shift)
        frame_shift = tg.matmul(phis, model.frame_projs[k])
        a = tg.add_blocks(a, frame_shift, rows_per_frame)
        h = tg.sine_act(a, model.omega0)
    out = tg.matmul(h, model.out_weight)
    return tg.add_row(out, model.out_bias)


def forward_frame(model: MetaModel, v, phi, coords) -> Tensor:
    """Predict values for one frame at the given coordinates.

    `v` may be a VideoModulation, array, or Tensor; `phi` likewise (length
    r); `coords` is an (N, 2) array, a CoordinateGrid, or a CoordSample.
    Returns a length-N tensor of raw (unclamped) predictions.
    """
    if isinstance(coords, CoordinateGrid):
        coords = coords.coords
    elif isinstance(coords, CoordSample):
        coords = coords.coords
    coords = np.asarray(coords, dtype=np.float64 if model.dtype == np.float64 else np.float32)
    if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 1:
        raise ShapeError(f"coords must be (N, 2) with N >= 1, got {coords.shape}")
    v_t = _modulation_tensor(v, model.video_dim, model.dtype, "video")
    phi_t = _modulation_tensor(phi, model.frame_dim, model.dtype, "frame")
    out = forward_batch(model, v_t, tg.reshape(phi_t, (1, model.frame_dim)),
                        coords, coords.shape[0])
    return tg.reshape(out, (coords.shape[0],))


def _modulation_tensor(m, expected: int, dtype, kind: str) -> Tensor:
    if isinstance(m, VideoModulation):
        m = m.values
    if isinstance(m, Tensor):
        arr = m.data
    else:
        arr = np.asarray(m)
    if arr.shape != (expected,):
        raise ShapeError(f"{kind} modulation shape {arr.shape} != ({expected},)")
    if isinstance(m, Tensor):
        return m
    return Tensor(arr.astype(dtype, copy=False))


def loss_mse_frame(pred, target) -> Tensor:
    """Mean squared error between predictions and true values."""
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=pred.dtype))
    if pred.shape != target.shape:
        raise ShapeError(f"loss_mse_frame: shape mismatch {pred.shape} vs {target.shape}")
    if pred.data.size < 1:
        raise ContractError("loss_mse_frame: empty inputs")
    return tg.mean(tg.squared_error(pred, target))


def compute_shifts(model: MetaModel, v: VideoModulation, phis: FrameModulationSeq) -> LayerShifts:
    """Materialize the per-layer shifts for inspection."""
    if len(v) != model.video_dim:
        raise ShapeError(f"video modulation length {len(v)} != {model.video_dim}")
    if phis.values.shape[1] != model.frame_dim:
        raise ShapeError(f"frame modulation width {phis.values.shape[1]} != {model.frame_dim}")
    video_shifts = [v.values @ p.data for p in model.video_projs]
    frame_shifts = [phis.values @ p.data for p in model.frame_projs]
    return LayerShifts(video_shifts=video_shifts, frame_shifts=frame_shifts)
