"""Lightweight attention predictor: frozen patch-embedding backbone plus LoRA
adapters, trained with a blended cosine consistency loss against a pretrained
attention target and a socially guided supervision map."""

from __future__ import annotations

import struct
import sys
import zlib
from dataclasses import dataclass, field

import numpy as np

from .costmap import AttentionMap, Frame, Role

VLAD_MAGIC = b"VLAD"
VLAD_VERSION = 1

DEFAULT_EPSILON = 1e-8


class ModelFormatError(ValueError):
    pass


class TrainDivergence(RuntimeError):
    def __init__(self, step: int, record_id):
        super().__init__(f"non-finite loss at step {step} (record {record_id})")
        self.step = step
        self.record_id = record_id


@dataclass
class DistillConfig:
    lambda_vlm: float = 0.5
    learning_rate: float = 0.5
    rank: int = 4
    steps: int = 200
    batch_size: int = 4
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.lambda_vlm <= 1.0):
            raise ValueError("lambda_vlm must lie in [0, 1]")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.rank < 1 or self.steps < 1 or self.batch_size < 1:
            raise ValueError("rank, steps, and batch size must be positive")


@dataclass
class ModelConfig:
    patch_size: int = 8
    grid_height: int = 24
    grid_width: int = 32
    n_history: int = 2
    embed_dim: int = 16
    rank: int = 4
    seed: int = 0

    @property
    def input_height(self) -> int:
        return self.grid_height * self.patch_size

    @property
    def input_width(self) -> int:
        return self.grid_width * self.patch_size

    @property
    def patch_dim(self) -> int:
        return (self.n_history + 1) * self.patch_size * self.patch_size

    @property
    def n_cells(self) -> int:
        return self.grid_height * self.grid_width


class AttentionModel:
    """Patch embed -> tanh -> per-cell linear score -> sigmoid, with LoRA on
    both linear maps. Base weights never receive gradient updates."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d_in, d_emb, r = config.patch_dim, config.embed_dim, config.rank
        # frozen base
        self.w_embed = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_emb, d_in))
        self.w_attn = rng.normal(0.0, 1.0 / np.sqrt(d_emb), size=(d_emb,))
        # LoRA pairs: down-projections random, up-projections zero so the
        # untrained model reproduces the base exactly
        self.a_embed = rng.normal(0.0, 0.02, size=(r, d_in))
        self.b_embed = np.zeros((d_emb, r))
        self.a_attn = rng.normal(0.0, 0.02, size=(r, d_emb))
        self.b_attn = np.zeros((1, r))

    def base_weight_bytes(self) -> bytes:
        return self.w_embed.astype("<f4").tobytes() + self.w_attn.astype("<f4").tobytes()

    def adapter_params(self):
        return {"a_embed": self.a_embed, "b_embed": self.b_embed,
                "a_attn": self.a_attn, "b_attn": self.b_attn}

    def effective_weights(self):
        w_e = self.w_embed + self.b_embed @ self.a_embed
        w_a = self.w_attn + (self.b_attn @ self.a_attn).ravel()
        return w_e, w_a

    def forward_values(self, x: np.ndarray) -> np.ndarray:
        """x: (n_cells, patch_dim) patch matrix -> flat sigmoid scores."""
        w_e, w_a = self.effective_weights()
        h = np.tanh(x @ w_e.T)
        s = h @ w_a
        return 1.0 / (1.0 + np.exp(-s))

    def forward(self, seq) -> AttentionMap:
        x = sequence_to_patches(seq, self.config)
        p = self.forward_values(x)
        return AttentionMap(p.reshape(self.config.grid_height, self.config.grid_width),
                            role=Role.DISTILLED, frame=Frame.IMAGE)


def sequence_to_patches(seq, config: ModelConfig) -> np.ndarray:
    """Flatten an image sequence (n_history + 1 frames) into per-cell patch
    vectors: grayscale in [0, 1], stacked oldest-to-newest along the feature
    axis. Frames are resized to the model input resolution if needed."""
    frames = list(seq)
    if len(frames) != config.n_history + 1:
        raise ValueError(
            f"expected {config.n_history + 1} frames, got {len(frames)}"
        )
    p = config.patch_size
    planes = []
    for fr in frames:
        pix = fr.pixels if hasattr(fr, "pixels") else np.asarray(fr)
        gray = grayscale_resize(pix, config.input_height, config.input_width)
        # (grid_h, grid_w, p*p) patch blocks
        blocks = gray.reshape(config.grid_height, p, config.grid_width, p)
        planes.append(blocks.transpose(0, 2, 1, 3).reshape(config.n_cells, p * p))
    return np.concatenate(planes, axis=1)


def grayscale_resize(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    """uint8 RGB (or float grayscale) image -> float64 grayscale at the target size."""
    arr = np.asarray(pixels)
    if arr.ndim == 3:
        gray = arr.astype(np.float64) @ np.array([0.299, 0.587, 0.114]) / 255.0
    else:
        gray = arr.astype(np.float64)
    if gray.shape != (height, width):
        from PIL import Image

        im = Image.fromarray((np.clip(gray, 0.0, 1.0) * 255.0).astype(np.uint8), mode="L")
        im = im.resize((width, height), Image.BILINEAR)
        gray = np.asarray(im, dtype=np.float64) / 255.0
    return gray


# ---------------------------------------------------------------------------
# Losses


def loss_cosine(a: AttentionMap, b: AttentionMap, epsilon: float = DEFAULT_EPSILON) -> float:
    """1 - cos(flat(a), flat(b)); 0 for aligned maps, at most 2 in general."""
    return _loss_cosine_flat(a.values.astype(np.float64).ravel(),
                             b.values.astype(np.float64).ravel(), epsilon)


def _loss_cosine_flat(p: np.ndarray, t: np.ndarray, epsilon: float) -> float:
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    denom = np.linalg.norm(p) * np.linalg.norm(t)
    if denom <= epsilon:
        if denom == 0.0:
            print("warning: cosine loss on two zero maps is degenerate", file=sys.stderr)
            return 1.0
        denom = epsilon
    return float(1.0 - np.dot(p, t) / denom)


def _loss_cosine_grad(p: np.ndarray, t: np.ndarray, epsilon: float) -> np.ndarray:
    """d/dp of _loss_cosine_flat, consistent with its epsilon guard."""
    np_norm = np.linalg.norm(p)
    nt_norm = np.linalg.norm(t)
    denom = np_norm * nt_norm
    if denom <= epsilon:
        return -t / epsilon
    dot = np.dot(p, t)
    return -(t / denom - dot * p / (np_norm ** 3 * nt_norm))


def loss_total(pred: AttentionMap, a_pre: AttentionMap, a_vlm: AttentionMap,
               cfg: DistillConfig) -> float:
    lam = cfg.lambda_vlm
    return ((1.0 - lam) * loss_cosine(pred, a_pre, cfg.epsilon)
            + lam * loss_cosine(pred, a_vlm, cfg.epsilon))


# ---------------------------------------------------------------------------
# Gradients


def backward(model: AttentionModel, x: np.ndarray, a_pre: AttentionMap,
             a_vlm: AttentionMap, cfg: DistillConfig):
    """Analytic gradients of loss_total w.r.t. the LoRA parameters only.

    Returns (loss, grads) where grads has keys a_embed/b_embed/a_attn/b_attn.
    """
    w_e, w_a = model.effective_weights()
    z = x @ w_e.T          # (cells, emb)
    h = np.tanh(z)
    s = h @ w_a            # (cells,)
    p = 1.0 / (1.0 + np.exp(-s))

    t_pre = a_pre.values.astype(np.float64).ravel()
    t_vlm = a_vlm.values.astype(np.float64).ravel()
    lam = cfg.lambda_vlm
    loss = ((1.0 - lam) * _loss_cosine_flat(p, t_pre, cfg.epsilon)
            + lam * _loss_cosine_flat(p, t_vlm, cfg.epsilon))

    dl_dp = ((1.0 - lam) * _loss_cosine_grad(p, t_pre, cfg.epsilon)
             + lam * _loss_cosine_grad(p, t_vlm, cfg.epsilon))
    g_s = dl_dp * p * (1.0 - p)                     # (cells,)

    # attention-head adapters: s = (w_attn + b_attn a_attn) h
    gh_sum = g_s @ h                                # (emb,) = sum_c g_s[c] h_c
    g_b_attn = (model.a_attn @ gh_sum).reshape(1, -1)
    g_a_attn = model.b_attn.T @ gh_sum.reshape(1, -1)

    # backprop into the embedding
    dl_dh = np.outer(g_s, w_a)                      # (cells, emb)
    dl_dz = dl_dh * (1.0 - h * h)
    g_b_embed = dl_dz.T @ (x @ model.a_embed.T)     # (emb, r)
    g_a_embed = model.b_embed.T @ (dl_dz.T @ x)     # (r, d_in)

    grads = {"a_embed": g_a_embed, "b_embed": g_b_embed,
             "a_attn": g_a_attn, "b_attn": g_b_attn}
    return loss, grads


def finite_difference_grads(model: AttentionModel, x: np.ndarray, a_pre: AttentionMap,
                            a_vlm: AttentionMap, cfg: DistillConfig, h: float = 1e-5):
    """Central finite differences over every adapter entry (test oracle)."""

    def eval_loss():
        p = model.forward_values(x)
        lam = cfg.lambda_vlm
        return ((1.0 - lam) * _loss_cosine_flat(p, a_pre.values.astype(np.float64).ravel(), cfg.epsilon)
                + lam * _loss_cosine_flat(p, a_vlm.values.astype(np.float64).ravel(), cfg.epsilon))

    grads = {}
    for name, param in model.adapter_params().items():
        g = np.zeros_like(param)
        it = np.nditer(param, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = param[idx]
            param[idx] = orig + h
            lo_hi = eval_loss()
            param[idx] = orig - h
            lo_lo = eval_loss()
            param[idx] = orig
            g[idx] = (lo_hi - lo_lo) / (2.0 * h)
            it.iternext()
        grads[name] = g
    return grads


# ---------------------------------------------------------------------------
# Training


def train(model: AttentionModel, dataset, cfg: DistillConfig):
    """Plain SGD on the LoRA parameters.

    dataset: sequence of (record_id, x_patches, a_pre, a_vlm). Batches cycle
    through the dataset in order; gradients are averaged in index order so runs
    are bit-reproducible.
    """
    records = list(dataset)
    if not records:
        raise ValueError("dataset is empty")
    history = []
    cursor = 0
    for step in range(cfg.steps):
        batch = []
        for _ in range(min(cfg.batch_size, len(records))):
            batch.append(records[cursor])
            cursor = (cursor + 1) % len(records)
        total = 0.0
        acc = {k: np.zeros_like(v) for k, v in model.adapter_params().items()}
        for rid, x, a_pre, a_vlm in batch:
            loss, grads = backward(model, x, a_pre, a_vlm, cfg)
            if not np.isfinite(loss):
                raise TrainDivergence(step, rid)
            total += loss
            for k in acc:
                acc[k] += grads[k]
        scale = cfg.learning_rate / len(batch)
        model.a_embed -= scale * acc["a_embed"]
        model.b_embed -= scale * acc["b_embed"]
        model.a_attn -= scale * acc["a_attn"]
        model.b_attn -= scale * acc["b_attn"]
        history.append(total / len(batch))
    return model, history


def load_dataset_records(dataset_dir, config: ModelConfig):
    """Materialize (record_id, patches, a_pre, a_vlm) tuples from a dataset dir."""
    import json
    from pathlib import Path

    from PIL import Image

    from .costmap import load_grid

    root = Path(dataset_dir)
    with open(root / "index.json") as f:
        index = json.load(f)
    if index["n_history"] != config.n_history:
        raise ValueError(
            f"dataset history length {index['n_history']} != model config {config.n_history}"
        )
    records = []
    for rec in index["records"]:
        frames = []
        for rel in rec["history"]:
            frames.append(np.asarray(Image.open(root / rel).convert("RGB")))
        frames.append(np.asarray(Image.open(root / rec["frame"]).convert("RGB")))
        x = sequence_to_patches([_ArrayFrame(a) for a in frames], config)
        a_vlm = load_grid(root / rec["map"])
        if "pretrained_map" not in rec:
            raise ValueError(f"record {rec['id']} lacks a pretrained-style target map")
        a_pre = load_grid(root / rec["pretrained_map"])
        _check_grid(a_vlm, config, rec["id"])
        _check_grid(a_pre, config, rec["id"])
        records.append((rec["id"], x, a_pre, a_vlm))
    return records


class _ArrayFrame:
    def __init__(self, pixels):
        self.pixels = pixels


def _check_grid(m, config, rid):
    if (m.height, m.width) != (config.grid_height, config.grid_width):
        raise ValueError(
            f"record {rid}: map is {m.height}x{m.width}, model expects "
            f"{config.grid_height}x{config.grid_width}"
        )


# ---------------------------------------------------------------------------
# Serialization (.vlad)


def save_model(model: AttentionModel, path) -> None:
    with open(path, "wb") as f:
        f.write(model_to_bytes(model))


def model_to_bytes(model: AttentionModel) -> bytes:
    c = model.config
    body = VLAD_MAGIC + struct.pack(
        "<HHHHHHHI", VLAD_VERSION, c.patch_size, c.grid_height, c.grid_width,
        c.n_history, c.embed_dim, c.rank, c.seed & 0xFFFFFFFF,
    )
    for arr in (model.w_embed, model.w_attn, model.a_embed, model.b_embed,
                model.a_attn, model.b_attn):
        body += arr.astype("<f4").tobytes(order="C")
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def load_model(path) -> AttentionModel:
    with open(path, "rb") as f:
        data = f.read()
    return model_from_bytes(data)


def model_from_bytes(data: bytes) -> AttentionModel:
    if len(data) < 24 or data[:4] != VLAD_MAGIC:
        raise ModelFormatError("bad magic or truncated header")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ModelFormatError("CRC mismatch")
    version, patch, gh, gw, n, emb, rank, seed = struct.unpack("<HHHHHHHI", body[4:22])
    if version != VLAD_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    config = ModelConfig(patch_size=patch, grid_height=gh, grid_width=gw,
                         n_history=n, embed_dim=emb, rank=rank, seed=seed)
    model = AttentionModel(config)
    shapes = [model.w_embed.shape, model.w_attn.shape, model.a_embed.shape,
              model.b_embed.shape, model.a_attn.shape, model.b_attn.shape]
    offset = 22
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(body):
            raise ModelFormatError("truncated weight payload")
        arrays.append(np.frombuffer(body[offset:end], dtype="<f4").astype(np.float64).reshape(shape))
        offset = end
    if offset != len(body):
        raise ModelFormatError("trailing bytes after weights")
    (model.w_embed, model.w_attn, model.a_embed, model.b_embed,
     model.a_attn, model.b_attn) = arrays
    return model


def export_distilled(model: AttentionModel, seq, path) -> AttentionMap:
    """Forward a sequence and persist the resulting map as .agrid."""
    from .costmap import save_grid

    m = model.forward(seq)
    save_grid(m, path)
    return m


# Alias for readers coming from structural-similarity terminology: the
# consistency loss used here is cosine distance over flattened maps.
loss_ssim = loss_cosine
