"""Adagrad optimization, the teacher-forced training loop, checkpointing,
and loss logging.

Defaults follow the usual recipe for these models: lr 0.15, initial
accumulator 0.1, epsilon 1e-10, gradient clipping at global norm 2.0,
articles truncated to 400 tokens and summaries to 100. All randomness
(init and batch order) flows from the config seed.

Checkpoints are a self-describing binary container: magic + version, a
JSON manifest naming every tensor (shape, byte offset, parameter vs
optimizer slot), then the raw float64 little-endian data. Round-trips
are bit-exact.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import autograd as ag
from .pointer import PointerModel
from .seq2seq import Seq2SeqModel
from .transformer import TransformerConfig, TransformerModel

VARIANTS = ("baseline", "pointer", "pointer-coverage", "transformer")


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration, value):
        super().__init__(f"non-finite loss {value} at iteration {iteration}")
        self.iteration = iteration


class CheckpointError(RuntimeError):
    """Corrupt file, version mismatch, variant mismatch, or vocab mismatch."""


def build_model(variant, vocab_size, seed=0, emb_dim=32, hidden=64,
                d_model=64, heads=4, layers=2, ffn=128, max_len=256):
    """Model factory keyed by the four variant names."""
    if variant == "baseline":
        return Seq2SeqModel(vocab_size, emb_dim=emb_dim, hidden=hidden, seed=seed)
    if variant == "pointer":
        return PointerModel(vocab_size, emb_dim=emb_dim, hidden=hidden, seed=seed)
    if variant == "pointer-coverage":
        return PointerModel(vocab_size, emb_dim=emb_dim, hidden=hidden, seed=seed,
                            use_coverage=True)
    if variant == "transformer":
        cfg = TransformerConfig(d_model=d_model, heads=heads, layers=layers,
                                ffn=ffn, max_len=max_len)
        return TransformerModel(vocab_size, config=cfg, seed=seed)
    raise ValueError(f"unknown model variant {variant!r} (choose from {VARIANTS})")


class Adagrad:
    """Per-parameter accumulator of squared gradients:
    acc += g^2; theta -= lr * g / (sqrt(acc) + eps)."""

    def __init__(self, params: dict, lr=0.15, initial_accumulator=0.1, epsilon=1e-10):
        self.params = params
        self.lr = lr
        self.epsilon = epsilon
        self.acc = {name: np.full_like(t.data, initial_accumulator)
                    for name, t in params.items()}

    def step(self):
        for name, t in self.params.items():
            if t.grad is None:
                continue
            g = t.grad
            acc = self.acc[name]
            acc += g * g
            t.data -= self.lr * g / (np.sqrt(acc) + self.epsilon)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None


def adagrad_step(params, grads, state: Adagrad):
    """Functional wrapper: install grads, apply one update."""
    for name, t in state.params.items():
        t.grad = grads.get(name)
    state.step()
    state.zero_grad()


def clip_gradients(params: dict, max_norm: float) -> float:
    """Scale all grads so their global norm is at most max_norm; returns the
    pre-clip norm."""
    total = 0.0
    for t in params.values():
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    norm = math.sqrt(total)
    if norm > max_norm > 0:
        factor = max_norm / norm
        for t in params.values():
            if t.grad is not None:
                t.grad *= factor
    return norm


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "pointer"
    batch_size: int = 8
    iterations: int = 1000
    eval_interval: int = 100
    cov_start_iteration: int = 0  # coverage active on iterations > this
    seed: int = 0
    lr: float = 0.15
    initial_accumulator: float = 0.1
    clip_norm: float = 2.0
    max_article_len: int = 400
    max_summary_len: int = 100

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 1 or self.eval_interval < 1:
            raise ValueError("batch size, iterations, and eval interval must be positive")
        if self.cov_start_iteration > self.iterations:
            raise ValueError("cov_start_iteration cannot exceed iterations")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class LossLog:
    rows: list = field(default_factory=list)  # (iteration, train_loss, valid_loss|None)

    def add(self, iteration, train_loss, valid_loss=None):
        if self.rows and iteration <= self.rows[-1][0]:
            raise ValueError("loss log iterations must strictly increase")
        self.rows.append((iteration, train_loss, valid_loss))

    def to_csv(self) -> str:
        lines = ["iteration,train_loss,valid_loss"]
        for it, train, valid in self.rows:
            v = "" if valid is None else f"{valid:.6f}"
            lines.append(f"{it},{train:.6f},{v}")
        return "\n".join(lines) + "\n"


def _truncate(pair, config):
    la, ls = config.max_article_len, config.max_summary_len
    if len(pair.article_ids) <= la and len(pair.summary_ids) <= ls:
        return pair
    return replace(pair,
                   article_ids=pair.article_ids[:la],
                   article_ext_ids=pair.article_ext_ids[:la],
                   summary_ids=pair.summary_ids[:ls],
                   summary_ext_ids=pair.summary_ext_ids[:ls])


def _batches(pairs, batch_size, rng):
    while True:
        order = rng.permutation(len(pairs))
        for lo in range(0, len(pairs) - batch_size + 1, batch_size):
            yield [pairs[i] for i in order[lo:lo + batch_size]]


def _pair_loss(model, pair, coverage_active):
    if isinstance(model, PointerModel):
        return model.pair_loss(pair, coverage=model.use_coverage and coverage_active)
    return model.pair_loss(pair)


def _mean_loss(model, pairs, coverage_active):
    return ag.tmean(ag.stack([_pair_loss(model, p, coverage_active) for p in pairs]))


def train_loop(config: TrainConfig, train_pairs, model, dev_pairs=(),
               progress=None):
    """Run teacher-forced Adagrad training; returns (Checkpoint, LossLog).

    The checkpoint holds the best-dev parameters when dev evaluations
    happened, otherwise the final parameters. Non-finite loss aborts with
    TrainingDiverged naming the iteration.
    """
    train_pairs = [_truncate(p, config) for p in train_pairs]
    dev_pairs = [_truncate(p, config) for p in dev_pairs]
    if not train_pairs:
        raise ValueError("training corpus is empty")
    params = model.params()
    opt = Adagrad(params, lr=config.lr, initial_accumulator=config.initial_accumulator)
    rng = np.random.default_rng(config.seed)
    batch_size = min(config.batch_size, len(train_pairs))
    batches = _batches(train_pairs, batch_size, rng)
    log = LossLog()
    best = None  # (dev_loss, snapshot, acc_snapshot, iteration)
    for it in range(1, config.iterations + 1):
        batch = next(batches)
        coverage_active = it > config.cov_start_iteration
        loss = _mean_loss(model, batch, coverage_active)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDiverged(it, value)
        opt.zero_grad()
        loss.backward()
        clip_gradients(params, config.clip_norm)
        opt.step()
        valid = None
        if dev_pairs and it % config.eval_interval == 0:
            with ag.no_grad():
                valid = _mean_loss(model, dev_pairs, coverage_active).item()
            if best is None or valid < best[0]:
                best = (valid, _snapshot(params), _snapshot_arrays(opt.acc), it)
        log.add(it, value, valid)
        if progress is not None:
            progress(it, value, valid)
    if best is not None:
        ckpt_params, ckpt_acc, ckpt_it = best[1], best[2], best[3]
    else:
        ckpt_params, ckpt_acc, ckpt_it = _snapshot(params), _snapshot_arrays(opt.acc), config.iterations
    ckpt = Checkpoint(variant=config.variant, vocab_hash="", iteration=ckpt_it,
                      model_config=model.config_dict(), params=ckpt_params,
                      opt_state=ckpt_acc)
    return ckpt, log


def _snapshot(params):
    return {name: t.data.copy() for name, t in params.items()}


def _snapshot_arrays(arrays):
    return {name: a.copy() for name, a in arrays.items()}


# checkpoint container ------------------------------------------------

MAGIC = b"SUMNCKPT"
VERSION = 1


@dataclass
class Checkpoint:
    variant: str
    vocab_hash: str
    iteration: int
    model_config: dict
    params: dict       # name -> float64 ndarray
    opt_state: dict    # name -> float64 ndarray (adagrad accumulators)


def save_checkpoint(ckpt: Checkpoint, path):
    tensors = []
    blobs = []
    offset = 0
    for kind, group in (("param", ckpt.params), ("opt", ckpt.opt_state)):
        for name, arr in group.items():
            data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            tensors.append({"name": name, "kind": kind,
                            "shape": list(arr.shape), "offset": offset})
            blobs.append(data)
            offset += len(data)
    manifest = json.dumps({
        "variant": ckpt.variant,
        "vocab_hash": ckpt.vocab_hash,
        "iteration": ckpt.iteration,
        "model_config": ckpt.model_config,
        "tensors": tensors,
        "data_bytes": offset,
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path, vocab=None) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    head = len(MAGIC) + 4 + 8
    if len(raw) < head or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, = struct.unpack_from("<I", raw, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    mlen, = struct.unpack_from("<Q", raw, len(MAGIC) + 4)
    if len(raw) < head + mlen:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[head:head + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest ({exc})") from exc
    data = raw[head + mlen:]
    if len(data) != manifest["data_bytes"]:
        raise CheckpointError(f"{path}: truncated or padded tensor data "
                              f"({len(data)} bytes, expected {manifest['data_bytes']})")
    params, opt_state = {}, {}
    for spec in manifest["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = spec["offset"]
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=start)
        arr = arr.reshape(shape).astype(np.float64)
        (params if spec["kind"] == "param" else opt_state)[spec["name"]] = arr
    ckpt = Checkpoint(variant=manifest["variant"], vocab_hash=manifest["vocab_hash"],
                      iteration=manifest["iteration"],
                      model_config=manifest["model_config"],
                      params=params, opt_state=opt_state)
    if vocab is not None and ckpt.vocab_hash and vocab.content_hash() != ckpt.vocab_hash:
        raise CheckpointError(f"{path}: vocabulary hash mismatch")
    return ckpt


def restore_model(ckpt: Checkpoint, variant=None):
    """Rebuild the model a checkpoint describes and load its parameters."""
    if variant is not None and variant != ckpt.variant:
        raise CheckpointError(f"checkpoint holds a {ckpt.variant!r} model, "
                              f"not {variant!r}")
    cfg = dict(ckpt.model_config)
    if ckpt.variant == "transformer":
        model = build_model("transformer", cfg["vocab_size"], seed=cfg["seed"],
                            d_model=cfg["d_model"], heads=cfg["heads"],
                            layers=cfg["layers"], ffn=cfg["ffn"],
                            max_len=cfg["max_len"])
    else:
        model = build_model(ckpt.variant, cfg["vocab_size"], seed=cfg["seed"],
                            emb_dim=cfg["emb_dim"], hidden=cfg["hidden"])
    params = model.params()
    if set(params) != set(ckpt.params):
        raise CheckpointError("checkpoint tensor names do not match the model")
    for name, t in params.items():
        arr = ckpt.params[name]
        if arr.shape != t.data.shape:
            raise CheckpointError(f"shape mismatch for {name}: "
                                  f"{arr.shape} vs {t.data.shape}")
        t.data = arr.copy()
    return model
