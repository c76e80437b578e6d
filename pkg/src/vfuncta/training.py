"""Two-level optimization: an outer loop over the dataset updating the
shared weights, and an inner loop adapting the modulation vectors of one
sampled batch of frames from zero.

Every inner step takes the frame updates and the video-vector update from
a single forward/backward evaluation; the outer step applies a
first-order gradient at the adapted modulations, treating them as
constants. Plain gradient descent everywhere, no optimizer state, so a
checkpoint plus the seed fully determines the rest of a run.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as tg
from .errors import ContractError, DataError, DivergenceError, NonFiniteError
from .model import (
    FrameModulationSeq,
    MetaModel,
    VideoModulation,
    forward_batch,
    sample_coords,
)
from .tensor import Tensor, backward

_PRECISIONS = {"float32": np.float32, "float64": np.float64}

# seed-stream tags; every generator in a run derives from (seed, tag, index)
_STREAM_INIT = 0
_STREAM_SHUFFLE = 1
_STREAM_STEP = 2


@dataclass(frozen=True)
class TrainConfig:
    """All knobs of the optimization procedure.

    `batch_frames` and `coords_per_frame` have no canonical defaults and
    must always be chosen for the data at hand.
    """

    batch_frames: int
    coords_per_frame: int
    layers: int = 10
    hidden: int = 256
    video_dim: int = 2048
    frame_dim: int = 512
    inner_steps: int = 10
    inner_lr: float = 0.1
    meta_lr: float = 5e-7
    iterations: int = 100_000
    omega0: float = 30.0
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        for name in ("batch_frames", "coords_per_frame", "layers", "hidden",
                     "video_dim", "frame_dim"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("inner_steps", "iterations"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("inner_lr", "meta_lr"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.omega0 <= 0:
            raise ContractError(f"omega0 must be positive, got {self.omega0}")
        if self.precision not in _PRECISIONS:
            raise ContractError(f"precision must be one of {sorted(_PRECISIONS)}")

    @property
    def dtype(self):
        return _PRECISIONS[self.precision]

    def new_model(self, rng: np.random.Generator | None = None) -> MetaModel:
        if rng is None:
            rng = np.random.default_rng([self.seed, _STREAM_INIT])
        return MetaModel.initialize(
            layers=self.layers, hidden=self.hidden, video_dim=self.video_dim,
            frame_dim=self.frame_dim, omega0=self.omega0, dtype=self.dtype, rng=rng)


@dataclass(frozen=True)
class Batch:
    """Sampled frames plus the coordinate subset shared by all of them."""

    targets: np.ndarray  # (b, N) true values at the sampled pixels
    coords: np.ndarray   # (N, 2) normalized coordinates

    def __post_init__(self):
        if self.targets.ndim != 2 or self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ContractError("batch needs (b, N) targets and (N, 2) coords")
        if self.targets.shape[1] != self.coords.shape[0]:
            raise ContractError(
                f"targets cover {self.targets.shape[1]} pixels but "
                f"{self.coords.shape[0]} coordinates were given")


@dataclass
class LogEntry:
    iteration: int
    loss: float
    seconds: float
    val_psnr: float | None = None
    timestamp: float = field(default_factory=time.time)


@dataclass
class TrainLog:
    """One record per completed outer iteration."""

    entries: list[LogEntry] = field(default_factory=list)

    def append(self, entry: LogEntry) -> None:
        self.entries.append(entry)

    def losses(self) -> np.ndarray:
        return np.array([e.loss for e in self.entries])

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# iteration\tloss\ttimestamp\tseconds\tval_psnr\n")
            for e in self.entries:
                val = "-" if e.val_psnr is None else repr(e.val_psnr)
                fh.write(f"{e.iteration}\t{e.loss!r}\t{e.timestamp:.3f}\t"
                         f"{e.seconds:.3f}\t{val}\n")


def _adapt(model: MetaModel, targets: np.ndarray, coords: np.ndarray, *,
           steps: int, inner_lr: float, v_init: np.ndarray | None = None,
           freeze_v: bool = False) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Run the inner loop and return (v, phis, per-step mean losses)."""
    b, n = targets.shape
    dtype = model.dtype
    tiled = np.ascontiguousarray(np.tile(coords, (b, 1)), dtype=dtype)
    target_t = Tensor(np.ascontiguousarray(targets.reshape(-1), dtype=dtype))
    v = (np.zeros(model.video_dim, dtype=dtype) if v_init is None
         else np.asarray(v_init, dtype=dtype).copy())
    phis = np.zeros((b, model.frame_dim), dtype=dtype)
    history: list[float] = []
    for g in range(steps):
        v_t, phi_t = Tensor(v), Tensor(phis)
        try:
            # overflow shows up as a structured divergence error, not a warning
            with np.errstate(over="ignore", invalid="ignore"):
                total, _ = _loss_graph(model, v_t, phi_t, tiled, target_t, n)
                loss = total.item()
                if not np.isfinite(loss):
                    raise NonFiniteError("loss")
                wanted = [phi_t] if freeze_v else [v_t, phi_t]
                grads = backward(total, wanted)
        except NonFiniteError as exc:
            raise DivergenceError(g, history) from exc
        history.append(loss)
        # per-frame loss gradient = b times the gradient of the batch mean
        phis = phis - (inner_lr * b) * grads[phi_t].data
        if not freeze_v:
            v = v - inner_lr * grads[v_t].data
    return v, phis, history


def _loss_graph(model: MetaModel, v_t: Tensor, phi_t: Tensor, tiled_coords,
                target_t: Tensor, rows_per_frame: int):
    pred = forward_batch(model, v_t, phi_t, tiled_coords, rows_per_frame)
    se = tg.squared_error(tg.reshape(pred, (pred.shape[0],)), target_t)
    per_frame = tg.group_mean(se, rows_per_frame)
    return tg.mean(per_frame), per_frame


def inner_adapt(model: MetaModel, batch: Batch, cfg: TrainConfig, *,
                steps: int | None = None, v_init: np.ndarray | None = None,
                freeze_v: bool = False):
    """Adapt modulations to one batch with the shared weights frozen.

    Returns (VideoModulation, FrameModulationSeq, final per-frame losses).
    """
    if batch.targets.shape[0] < 1:
        raise ContractError("batch must contain at least one frame")
    _require_dims(model, cfg)
    steps = cfg.inner_steps if steps is None else steps
    v, phis, _ = _adapt(model, batch.targets, batch.coords,
                        steps=steps, inner_lr=cfg.inner_lr,
                        v_init=v_init, freeze_v=freeze_v)
    n = batch.targets.shape[1]
    tiled = np.ascontiguousarray(np.tile(batch.coords, (batch.targets.shape[0], 1)),
                                 dtype=model.dtype)
    target_t = Tensor(np.ascontiguousarray(batch.targets.reshape(-1), dtype=model.dtype))
    _, per_frame = _loss_graph(model, Tensor(v), Tensor(phis), tiled, target_t, n)
    return VideoModulation(v), FrameModulationSeq(phis), per_frame.data.copy()


def sample_batch(video, cfg: TrainConfig, rng: np.random.Generator) -> Batch:
    """Pick b frames (with replacement only for short videos) and one
    coordinate subset shared by all of them."""
    t_total = video.frames
    replace = t_total < cfg.batch_frames
    frame_idx = np.sort(rng.choice(t_total, size=cfg.batch_frames, replace=replace))
    coord = sample_coords(video.height, video.width, cfg.coords_per_frame, rng)
    flat = video.values.reshape(t_total, -1)
    targets = flat[frame_idx][:, coord.indices]
    return Batch(targets=targets, coords=coord.coords)


def meta_step(model: MetaModel, video, cfg: TrainConfig,
              rng: np.random.Generator) -> tuple[MetaModel, float]:
    """One outer iteration on one video; returns the updated model and the
    mean batch loss at the adapted modulations."""
    if video.frames < 1:
        raise ContractError("video must contain at least one frame")
    _require_dims(model, cfg)
    batch = sample_batch(video, cfg, rng)
    v, phis, _ = _adapt(model, batch.targets, batch.coords,
                        steps=cfg.inner_steps, inner_lr=cfg.inner_lr)

    b, n = batch.targets.shape
    tiled = np.ascontiguousarray(np.tile(batch.coords, (b, 1)), dtype=model.dtype)
    target_t = Tensor(np.ascontiguousarray(batch.targets.reshape(-1), dtype=model.dtype))
    try:
        total, _ = _loss_graph(model, Tensor(v), Tensor(phis), tiled, target_t, n)
        loss = total.item()
        if not np.isfinite(loss):
            raise NonFiniteError("loss")
        named = model.parameters()
        grads = backward(total, [p for _, p in named])
    except NonFiniteError as exc:
        raise DivergenceError(cfg.inner_steps, []) from exc
    updated = {name: Tensor(p.data - cfg.meta_lr * grads[p].data)
               for name, p in named}
    return model.replace_params(updated, iteration=model.iteration + 1), loss


def train(dataset: Sequence, cfg: TrainConfig, *,
          checkpoint_dir=None, checkpoint_every: int = 0,
          resume: MetaModel | None = None,
          validate: Callable[[MetaModel], float] | None = None,
          val_every: int = 0,
          on_iteration: Callable[[LogEntry], None] | None = None
          ) -> tuple[MetaModel, TrainLog]:
    """Outer loop over the dataset in seeded shuffled order.

    Dataset items are VideoTensor objects or paths; unreadable paths are
    skipped with a warning and the run fails only if nothing is readable.
    Passing the model from a saved checkpoint as `resume` continues the
    identical run from its stored iteration.
    """
    items = list(dataset)
    if not items:
        raise ContractError("training dataset is empty")
    model = cfg.new_model() if resume is None else resume
    _require_dims(model, cfg)
    log = TrainLog()
    unreadable: set[int] = set()
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    for it in range(model.iteration, cfg.iterations):
        epoch, pos = divmod(it, len(items))
        order = np.random.default_rng([cfg.seed, _STREAM_SHUFFLE, epoch]).permutation(len(items))
        video = None
        for k in range(len(items)):
            idx = int(order[(pos + k) % len(items)])
            if idx in unreadable:
                continue
            try:
                video = _materialize(items[idx])
                break
            except DataError as exc:
                warnings.warn(f"skipping unreadable video {items[idx]}: {exc}")
                unreadable.add(idx)
        if video is None:
            raise DataError("no readable videos remain in the training set")

        t0 = time.perf_counter()
        rng = np.random.default_rng([cfg.seed, _STREAM_STEP, it])
        model, loss = meta_step(model, video, cfg, rng)
        entry = LogEntry(iteration=model.iteration, loss=loss,
                         seconds=time.perf_counter() - t0)
        if validate is not None and val_every > 0 and model.iteration % val_every == 0:
            entry.val_psnr = float(validate(model))
        log.append(entry)
        if on_iteration is not None:
            on_iteration(entry)
        if (checkpoint_dir is not None and checkpoint_every > 0
                and model.iteration % checkpoint_every == 0):
            from .container import save_model
            save_model(checkpoint_dir / f"checkpoint_{model.iteration:08d}.vfnc", model)
    return model, log


def _materialize(item):
    from .data import VideoTensor, load_video
    if isinstance(item, VideoTensor):
        return item
    return load_video(item)


def _require_dims(model: MetaModel, cfg: TrainConfig) -> None:
    got = (model.layers, model.hidden, model.video_dim, model.frame_dim)
    want = (cfg.layers, cfg.hidden, cfg.video_dim, cfg.frame_dim)
    if got != want:
        raise ContractError(f"model dims {got} do not match config dims {want}")
