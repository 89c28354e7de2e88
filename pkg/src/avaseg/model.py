"""Encoder-decoder segmentation network with a PAR-driven attention gate,
plus the training loop.

The network input is a 5-channel stack (d_vv, d_vh, vvvh, slope_n, par_n).
The attention branch maps the PAR channel to a multiplicative mask in
(0,1) that gates only the three SAR channels; slope bypasses the gate. The
gated SAR channels concatenated with slope form the 4-channel FCN input.

Parameters are initialized per-name from a seed, so two configurations
that share a layer (e.g. attention on/off) start from identical weights
for that layer.
"""

from __future__ import annotations

import io
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import (
    DatasetManifest,
    Patch,
    TRANSFORMS,
    augment,
    class_stats,
    load_patch,
)
from .errors import (DegenerateDatasetError, DimensionError,
                     TrainingDivergedError, ValueRangeError)
from .nn.ops import (
    BatchNormState,
    batchnorm2d,
    bilinear_upsample2x,
    concat_channels,
    conv2d,
    dropout,
    maxpool2x,
    relu,
    sigmoid,
)
from .nn.losses import soft_jaccard_loss, weighted_bce
from .nn.optim import Adam
from .nn.tensor import Tensor
from .nn.weights_io import load_weights, save_weights


@dataclass(frozen=True)
class FcnConfig:
    n_blocks: int = 4
    base_filters: int = 32
    kernel: int = 3
    dropout: float = 0.1
    in_channels: int = 4
    attention: bool = True
    attention_hidden: int = 16

    def __post_init__(self):
        if self.n_blocks < 1 or self.base_filters < 1 or self.attention_hidden < 1:
            raise DimensionError("n_blocks, base_filters, attention_hidden must be positive")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueRangeError(f"kernel must be odd for same-padding, got {self.kernel}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueRangeError(f"dropout must be in [0,1), got {self.dropout}")
        if self.in_channels != 4:
            raise DimensionError("the FCN consumes 4 channels (3 SAR + slope)")


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 8
    lr: float = 1e-4
    pos_weight: float | str = "auto"
    loss: str = "weighted_bce"
    augment: bool = True
    seed: int = 0
    early_stop_train_f1: float | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise DimensionError("batch_size must be >= 1")
        if self.loss not in ("weighted_bce", "soft_jaccard"):
            raise ValueRangeError(f"unknown loss {self.loss!r}")


def _param_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


class SegModel:
    """The FCN with optional attention branch; holds parameters and BN state."""

    def __init__(self, config: FcnConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.bn_states: dict[str, BatchNormState] = {}
        self._build()

    # ---- construction ----

    def _conv_init(self, name: str, cout: int, cin: int, k: int):
        rng = _param_rng(self.seed, name)
        std = np.sqrt(2.0 / (cin * k * k))
        w = rng.normal(0.0, std, size=(cout, cin, k, k)).astype(self.dtype)
        self.params[f"{name}.w"] = Tensor(w, requires_grad=True)
        self.params[f"{name}.b"] = Tensor(np.zeros(cout, dtype=self.dtype),
                                          requires_grad=True)

    def _bn_init(self, name: str, channels: int):
        self.params[f"{name}.gamma"] = Tensor(np.ones(channels, dtype=self.dtype),
                                              requires_grad=True)
        self.params[f"{name}.beta"] = Tensor(np.zeros(channels, dtype=self.dtype),
                                             requires_grad=True)
        self.bn_states[name] = BatchNormState(channels)

    def _build(self):
        cfg = self.config
        k = cfg.kernel
        chans = [cfg.base_filters * (2 ** i) for i in range(cfg.n_blocks)]
        cin = cfg.in_channels
        for i, cout in enumerate(chans):
            self._conv_init(f"enc{i}.conv1", cout, cin, k)
            self._bn_init(f"enc{i}.bn1", cout)
            self._conv_init(f"enc{i}.conv2", cout, cout, k)
            self._bn_init(f"enc{i}.bn2", cout)
            cin = cout
        mid = cfg.base_filters * (2 ** cfg.n_blocks)
        self._conv_init("mid.conv1", mid, chans[-1], k)
        self._bn_init("mid.bn1", mid)
        self._conv_init("mid.conv2", mid, mid, k)
        self._bn_init("mid.bn2", mid)
        up_in = mid
        for i in reversed(range(cfg.n_blocks)):
            skip = chans[i]
            self._conv_init(f"dec{i}.conv1", skip, up_in + skip, k)
            self._bn_init(f"dec{i}.bn1", skip)
            self._conv_init(f"dec{i}.conv2", skip, skip, k)
            self._bn_init(f"dec{i}.bn2", skip)
            up_in = skip
        self._conv_init("head", 1, chans[0], 1)
        if cfg.attention:
            hid = cfg.attention_hidden
            self._conv_init("att.conv1", hid, 1, k)
            self._conv_init("att.conv2", hid, hid, k)
            self._conv_init("att.head", 1, hid, 1)

    def parameter_count(self) -> int:
        return sum(int(np.prod(t.shape)) for t in self.params.values())

    # ---- forward ----

    def _cbr(self, x: Tensor, conv: str, bn: str, training: bool) -> Tensor:
        x = conv2d(x, self.params[f"{conv}.w"], self.params[f"{conv}.b"])
        x = batchnorm2d(x, self.params[f"{bn}.gamma"], self.params[f"{bn}.beta"],
                        self.bn_states[bn], training)
        return relu(x)

    def attention_forward(self, par: Tensor, training: bool = False) -> Tensor:
        """PAR patch (N,1,H,W) -> multiplicative mask in (0,1), same shape."""
        a = relu(conv2d(par, self.params["att.conv1.w"], self.params["att.conv1.b"]))
        a = relu(conv2d(a, self.params["att.conv2.w"], self.params["att.conv2.b"]))
        return sigmoid(conv2d(a, self.params["att.head.w"], self.params["att.head.b"]))

    def forward(self, x: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None,
                force_mask: float | None = None) -> Tensor:
        """(N,5,H,W) features -> (N,1,H,W) probabilities.

        force_mask substitutes a constant for the attention mask (diagnostic
        hook); it requires the attention branch to exist only when None.
        """
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != 5:
            raise DimensionError(f"expected (N,5,H,W) input, got {x.shape}")
        div = 2 ** self.config.n_blocks
        if x.shape[2] % div or x.shape[3] % div:
            raise DimensionError(
                f"spatial dims must be divisible by {div}, got {x.shape[2:]} ")
        if training and self.config.dropout > 0 and rng is None:
            raise DimensionError("training forward needs an rng for dropout")

        sar = Tensor(x[:, 0:3])
        slope = Tensor(x[:, 3:4])
        if force_mask is not None:
            mask_arr = np.full_like(x[:, 0:1], self.dtype.type(force_mask))
            gated = sar * mask_arr
        elif self.config.attention:
            mask = self.attention_forward(Tensor(x[:, 4:5]), training)
            gated = sar * mask
        else:
            gated = sar
        h = concat_channels(gated, slope)

        skips = []
        for i in range(self.config.n_blocks):
            h = self._cbr(h, f"enc{i}.conv1", f"enc{i}.bn1", training)
            h = self._cbr(h, f"enc{i}.conv2", f"enc{i}.bn2", training)
            skips.append(h)
            h = maxpool2x(h)
            h = dropout(h, self.config.dropout, rng, training)
        h = self._cbr(h, "mid.conv1", "mid.bn1", training)
        h = self._cbr(h, "mid.conv2", "mid.bn2", training)
        for i in reversed(range(self.config.n_blocks)):
            h = bilinear_upsample2x(h)
            h = concat_channels(h, skips[i])
            h = self._cbr(h, f"dec{i}.conv1", f"dec{i}.bn1", training)
            h = self._cbr(h, f"dec{i}.conv2", f"dec{i}.bn2", training)
            h = dropout(h, self.config.dropout, rng, training)
        return sigmoid(conv2d(h, self.params["head.w"], self.params["head.b"]))

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode forward returning a plain (N,1,H,W) array."""
        return self.forward(x, training=False).data

    # ---- serialization ----

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {name: t.data for name, t in self.params.items()}
        for name, st in self.bn_states.items():
            out[f"{name}.running_mean"] = st.running_mean
            out[f"{name}.running_var"] = st.running_var
        return out

    def state_copy(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.named_arrays().items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            if name not in arrays:
                raise DimensionError(f"weight file missing parameter {name}")
            a = np.asarray(arrays[name], dtype=self.dtype)
            if a.shape != t.data.shape:
                raise DimensionError(
                    f"parameter {name}: shape {a.shape} != expected {t.data.shape}")
            t.data = a.copy()
        for name, st in self.bn_states.items():
            st.running_mean = np.asarray(arrays[f"{name}.running_mean"],
                                         dtype=np.float32).copy()
            st.running_var = np.asarray(arrays[f"{name}.running_var"],
                                        dtype=np.float32).copy()

    def save(self, path) -> None:
        save_weights(path, self.named_arrays(),
                     extra={"model_config": asdict(self.config), "seed": self.seed})

    @classmethod
    def load(cls, path) -> "SegModel":
        arrays, extra = load_weights(path)
        cfg_doc = extra.get("model_config")
        if cfg_doc is None:
            raise DimensionError(f"{path}: weight file lacks a model_config record")
        model = cls(FcnConfig(**cfg_doc), seed=int(extra.get("seed", 0)))
        model.load_arrays(arrays)
        return model


def build_fcn(config: FcnConfig, seed: int = 0) -> SegModel:
    return SegModel(config, seed=seed)


def apply_attention(features: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Gate the SAR channels (first three) by the mask; remaining channels pass."""
    features = np.asarray(features)
    out = features.copy()
    out[:, 0:3] = features[:, 0:3] * mask
    return out


# ---- training ----


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return (2.0 * tp / denom) if denom else 0.0


def _batch_counts(probs: np.ndarray, label: np.ndarray, valid: np.ndarray,
                  tau: float = 0.5) -> tuple[int, int, int]:
    pred = (probs >= tau) & (valid == 1)
    pos = (label == 1) & (valid == 1)
    tp = int((pred & pos).sum())
    fp = int((pred & ~pos).sum())
    fn = int((~pred & pos).sum())
    return tp, fp, fn


def history_to_csv(history: list[dict]) -> str:
    buf = io.StringIO()
    buf.write("epoch,train_loss,val_loss,val_f1\n")
    for row in history:
        buf.write(f"{row['epoch']},{row['train_loss']:.8f},"
                  f"{row['val_loss']:.8f},{row['val_f1']:.6f}\n")
    return buf.getvalue()


def _load_split(manifest: DatasetManifest, base_dir, split: str) -> list[Patch]:
    from pathlib import Path

    recs = manifest.records_for(split)
    if not recs:
        raise DegenerateDatasetError(f"split {split!r} has no patches")
    return [load_patch(Path(base_dir) / r.path, (r.scene_id, r.row, r.col))
            for r in recs]


def _epoch_eval(model: SegModel, patches: list[Patch], batch_size: int,
                pos_weight: float, loss_name: str) -> tuple[float, float]:
    losses = []
    tp = fp = fn = 0
    for i0 in range(0, len(patches), batch_size):
        chunk = patches[i0:i0 + batch_size]
        xb = np.stack([p.features for p in chunk])
        yb = np.stack([p.label for p in chunk])[:, np.newaxis]
        vb = np.stack([p.valid for p in chunk])[:, np.newaxis]
        out = model.forward(xb, training=False)
        if loss_name == "weighted_bce":
            loss = weighted_bce(out, yb, pos_weight, valid=vb == 1)
        else:
            loss = soft_jaccard_loss(out, yb, valid=vb == 1)
        losses.append(float(loss.data))
        t, f, n = _batch_counts(out.data, yb, vb)
        tp, fp, fn = tp + t, fp + f, fn + n
    return float(np.mean(losses)), _f1_from_counts(tp, fp, fn)


def train(model: SegModel, manifest: DatasetManifest, cfg: TrainConfig,
          patches_dir) -> tuple[dict[str, np.ndarray], list[dict]]:
    """Optimize the model on the manifest's train split.

    Returns (best-validation weights, per-epoch history). Deterministic for
    a fixed seed. Raises if the loss stops being finite.
    """
    train_patches = _load_split(manifest, patches_dir, "train")
    val_patches = _load_split(manifest, patches_dir, "val")

    if cfg.pos_weight == "auto":
        pos = sum(p.pos_pixels for p in train_patches)
        neg = sum(p.valid_pixels - p.pos_pixels for p in train_patches)
        if pos == 0:
            raise DegenerateDatasetError("train split has no positive pixels")
        pos_weight = min(neg / pos, 500.0)
    else:
        pos_weight = float(cfg.pos_weight)

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7261494E]))
    opt = Adam(model.params, lr=cfg.lr)
    history: list[dict] = []
    best: dict[str, np.ndarray] = model.state_copy()
    best_f1 = -1.0
    choices = ("none",) + TRANSFORMS

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_patches))
        epoch_losses = []
        tp = fp = fn = 0
        for i0 in range(0, len(order), cfg.batch_size):
            idx = order[i0:i0 + cfg.batch_size]
            batch = []
            for j in idx:
                p = train_patches[j]
                if cfg.augment:
                    t = choices[int(rng.integers(len(choices)))]
                    p = augment(p, t, seed=int(rng.integers(2 ** 31)))
                batch.append(p)
            xb = np.stack([p.features for p in batch])
            yb = np.stack([p.label for p in batch])[:, np.newaxis]
            vb = np.stack([p.valid for p in batch])[:, np.newaxis]
            if not (vb == 1).any():
                continue
            out = model.forward(xb, training=True, rng=rng)
            if cfg.loss == "weighted_bce":
                loss = weighted_bce(out, yb, pos_weight, valid=vb == 1)
            else:
                loss = soft_jaccard_loss(out, yb, valid=vb == 1)
            lval = float(loss.data)
            if not np.isfinite(lval):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} (lr={cfg.lr}, "
                    f"pos_weight={pos_weight:.3f})")
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(lval)
            t, f, n = _batch_counts(out.data, yb, vb)
            tp, fp, fn = tp + t, fp + f, fn + n

        train_loss = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
        train_f1 = _f1_from_counts(tp, fp, fn)
        val_loss, val_f1 = _epoch_eval(model, val_patches, cfg.batch_size,
                                       pos_weight, cfg.loss)
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_loss": val_loss, "val_f1": val_f1})
        if val_f1 > best_f1:
            best_f1 = val_f1
            best = model.state_copy()
        if cfg.early_stop_train_f1 is not None and train_f1 >= cfg.early_stop_train_f1:
            _, eval_f1 = _epoch_eval(model, train_patches, cfg.batch_size,
                                     pos_weight, cfg.loss)
            if eval_f1 >= cfg.early_stop_train_f1:
                break
    return best, history
