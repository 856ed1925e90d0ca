"""Training loop: dataset splitting, dual-augmentation batches, optimization,
and a versioned binary checkpoint format.

Every random draw flows from per-(step, index, role) seeds derived with a
keyed blake2b hash of the run seed, so training is deterministic end to end:
the same dataset, config, and seed reproduce every logged loss bit-exactly.
"""

from __future__ import annotations

import binascii
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .augment import AugmentConfig, augment_graph
from .encoders import (
    BatchedGraphs, GraphEncoderConfig, JointModel, TextEncoderConfig,
    build_model, pad_token_batch,
)
from .objective import (
    LossBreakdown, LossWeights, inter_modal_loss, intra_modal_loss, mlm_loss,
    total_loss,
)
from .structures import CrystalGraph, FeaturizerConfig, build_graph
from .textproc import TokenSequence, Vocab, mask_tokens, tokenize

CHECKPOINT_MAGIC = b"XTCKPT\x00"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    graph: GraphEncoderConfig = GraphEncoderConfig()
    text_layers: int = 2
    text_heads: int = 4
    text_hidden: int = 64
    max_len: int = 128
    featurizer: FeaturizerConfig = FeaturizerConfig()
    d_joint: int = 64
    shared_projector: bool = False

    def text_config(self, vocab_size: int) -> TextEncoderConfig:
        return TextEncoderConfig(
            vocab_size=vocab_size, n_layers=self.text_layers, n_heads=self.text_heads,
            hidden_dim=self.text_hidden, max_len=self.max_len)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    steps: int = 2000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    grad_clip_norm: float = 5.0  # 0 disables clipping
    seed: int = 0
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    augment: AugmentConfig = AugmentConfig()
    p_keep: float = 0.85
    mlm_on_augmented: bool = True  # MLM targets from the first masked view
    mlm_warmup_steps: int = 0
    loss_weights: LossWeights = LossWeights()
    symmetrize_intra: bool = False
    baseline1_mode: bool = False  # freeze graph branch at its random init
    val_every: int = 200
    val_batches: int = 2

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (negative pairs need B >= 2)")
        ratios = self.split_ratios
        if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must be three positive values summing to 1, got {ratios}")
        if not 0.0 <= self.p_keep <= 1.0:
            raise ValueError(f"p_keep must lie in [0, 1], got {self.p_keep}")
        if self.steps < 0 or self.learning_rate < 0 or self.mlm_warmup_steps < 0:
            raise ValueError("steps, learning_rate and mlm_warmup_steps must be nonnegative")


def derive_seed(root_seed: int, *parts) -> int:
    """Stable 64-bit stream seed for (step, index, role, ...) tuples."""
    key = ":".join([str(root_seed)] + [str(p) for p in parts])
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")


def split_dataset(items: list, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Deterministic shuffle then floor allocation; remainder goes to train."""
    if not items:
        raise ValueError("cannot split an empty dataset")
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be three positive values summing to 1, got {ratios}")
    order = np.random.default_rng(derive_seed(seed, "split")).permutation(len(items))
    n = len(items)
    n_val = int(ratios[1] * n)
    n_test = int(ratios[2] * n)
    n_train = n - n_val - n_test
    shuffled = [items[i] for i in order]
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


@dataclass
class PreparedPair:
    """One graph-text pair, featurized and tokenized once up front."""

    pair_id: str
    graph: CrystalGraph
    seq: TokenSequence


def prepare_pairs(records, vocab: Vocab, model_cfg: ModelConfig) -> list[PreparedPair]:
    """records: iterable of objects with .record_id, .structure, .text."""
    return [
        PreparedPair(
            pair_id=r.record_id,
            graph=build_graph(r.structure, model_cfg.featurizer),
            seq=tokenize(r.text, vocab, model_cfg.max_len),
        )
        for r in records
    ]


@dataclass
class Batch:
    pair_ids: list[str]
    graphs: BatchedGraphs
    graphs_aug1: BatchedGraphs
    graphs_aug2: BatchedGraphs
    text_ids: list[tuple[int, ...]]
    text_aug1: list[tuple[int, ...]]
    text_aug2: list[tuple[int, ...]]
    mlm_positions: list[tuple[int, int]]  # (sample index, token position)
    mlm_targets: torch.Tensor
    # None when MLM reads the first augmented view; otherwise an
    # independently masked copy of each sequence.
    mlm_view_ids: list[tuple[int, ...]] | None = None


def make_batch(pairs: list[PreparedPair], cfg: TrainConfig, step: int,
               tag: str = "train") -> Batch:
    """Assemble one batch: two augmented graph views, two masked text views,
    and MLM targets. Seeds derive from (run seed, tag, step, index, role)."""
    g0, g1, g2, t0, t1, t2 = [], [], [], [], [], []
    positions: list[tuple[int, int]] = []
    targets: list[int] = []
    mlm_view_ids: list[tuple[int, ...]] | None = None if cfg.mlm_on_augmented else []
    for idx, pair in enumerate(pairs):
        g0.append(pair.graph)
        g1.append(augment_graph(pair.graph, cfg.augment, derive_seed(cfg.seed, tag, step, idx, "aug1")))
        g2.append(augment_graph(pair.graph, cfg.augment, derive_seed(cfg.seed, tag, step, idx, "aug2")))
        masked1 = mask_tokens(pair.seq, cfg.p_keep, derive_seed(cfg.seed, tag, step, idx, "mask1"))
        masked2 = mask_tokens(pair.seq, cfg.p_keep, derive_seed(cfg.seed, tag, step, idx, "mask2"))
        t0.append(pair.seq.ids)
        t1.append(masked1.input_ids)
        t2.append(masked2.input_ids)
        if cfg.mlm_on_augmented:
            mlm_view = masked1
        else:
            mlm_view = mask_tokens(pair.seq, cfg.p_keep, derive_seed(cfg.seed, tag, step, idx, "mlm"))
            mlm_view_ids.append(mlm_view.input_ids)
        for pos, target in zip(mlm_view.mask_positions, mlm_view.target_ids):
            positions.append((idx, pos))
            targets.append(target)
    return Batch(
        pair_ids=[p.pair_id for p in pairs],
        graphs=BatchedGraphs(g0), graphs_aug1=BatchedGraphs(g1), graphs_aug2=BatchedGraphs(g2),
        text_ids=t0, text_aug1=t1, text_aug2=t2,
        mlm_positions=positions,
        mlm_targets=torch.tensor(targets, dtype=torch.int64),
        mlm_view_ids=mlm_view_ids,
    )


def forward_losses(model: JointModel, batch: Batch, cfg: TrainConfig):
    """All four loss terms on one batch; returns (total tensor, breakdown).

    Inter-modal alignment reads the original (G, S) pair; the two augmented
    views feed the intra-modal terms only.
    """
    z_graph = model.project_graph(model.encode_graphs(batch.graphs))
    z_graph1 = model.project_graph(model.encode_graphs(batch.graphs_aug1))
    z_graph2 = model.project_graph(model.encode_graphs(batch.graphs_aug2))

    _, pooled0, _ = model.encode_tokens(batch.text_ids)
    hidden1, pooled1, _ = model.encode_tokens(batch.text_aug1)
    _, pooled2, _ = model.encode_tokens(batch.text_aug2)

    z_text = model.project_text(pooled0)
    z_text1 = model.project_text(pooled1)
    z_text2 = model.project_text(pooled2)

    inter = inter_modal_loss(model.disc_inter, z_graph, z_text)
    intra_g = intra_modal_loss(model.disc_graph, z_graph1, z_graph2, cfg.symmetrize_intra)
    intra_t = intra_modal_loss(model.disc_text, z_text1, z_text2, cfg.symmetrize_intra)

    if batch.mlm_view_ids is not None:
        mlm_hidden, _, _ = model.encode_tokens(batch.mlm_view_ids)
    else:
        mlm_hidden = hidden1
    logits = model.mlm_logits(mlm_hidden, batch.mlm_positions)
    # per-position normalization keeps the MLM term on the same scale as the
    # three alignment terms in the total
    mlm = mlm_loss(logits, batch.mlm_targets) / max(1, len(batch.mlm_positions))

    return total_loss(inter, intra_g, intra_t, mlm, cfg.loss_weights)


def trainable_parameters(model: JointModel, cfg: TrainConfig):
    if cfg.baseline1_mode:
        frozen = ("graph_encoder.", "graph_projector.")
        for name, p in model.named_parameters():
            p.requires_grad_(not name.startswith(frozen))
    return [p for p in model.parameters() if p.requires_grad]


def make_optimizer(model: JointModel, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(
        trainable_parameters(model, cfg), lr=cfg.learning_rate,
        betas=(cfg.adam_beta1, cfg.adam_beta2))


def train_step(model: JointModel, optimizer: torch.optim.Optimizer,
               batch: Batch, cfg: TrainConfig) -> LossBreakdown:
    """One optimization step; returns the pre-update loss breakdown."""
    optimizer.zero_grad()
    try:
        total, breakdown = forward_losses(model, batch, cfg)
    except FloatingPointError as exc:
        raise FloatingPointError(f"aborting training: {exc}") from exc
    total.backward()
    if cfg.grad_clip_norm:
        torch.nn.utils.clip_grad_norm_(
            [p for p in model.parameters() if p.requires_grad], cfg.grad_clip_norm)
    optimizer.step()
    return breakdown


def evaluate_loss(model: JointModel, pairs: list[PreparedPair], cfg: TrainConfig,
                  step: int, n_batches: int, tag: str = "val") -> LossBreakdown:
    """Mean loss over the first n_batches deterministic batches, no updates."""
    sums = np.zeros(5)
    count = 0
    with torch.no_grad():
        for b in range(n_batches):
            chunk = pairs[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            if len(chunk) < cfg.batch_size:
                break
            batch = make_batch(chunk, cfg, step=step, tag=f"{tag}{b}")
            _, breakdown = forward_losses(model, batch, cfg)
            sums += [breakdown.inter_modal, breakdown.intra_graph,
                     breakdown.intra_text, breakdown.mlm, breakdown.total]
            count += 1
    if count == 0:
        raise ValueError("validation slice smaller than one batch")
    sums /= count
    return LossBreakdown(*(float(x) for x in sums))


def evaluate_mlm_loss(model: JointModel, pairs: list[PreparedPair], cfg: TrainConfig,
                      n_batches: int = 4) -> float:
    """Held-out MLM loss per masked position, deterministic masks, no updates."""
    total = 0.0
    count = 0
    with torch.no_grad():
        for b in range(n_batches):
            chunk = pairs[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            if not chunk:
                break
            ids = []
            positions, targets = [], []
            for idx, pair in enumerate(chunk):
                masked = mask_tokens(pair.seq, cfg.p_keep, derive_seed(cfg.seed, "mlm-eval", b, idx))
                ids.append(masked.input_ids)
                for pos, target in zip(masked.mask_positions, masked.target_ids):
                    positions.append((idx, pos))
                    targets.append(target)
            hidden, _, _ = model.encode_tokens(ids)
            logits = model.mlm_logits(hidden, positions)
            loss = mlm_loss(logits, torch.tensor(targets, dtype=torch.int64))
            total += float(loss)
            count += max(1, len(positions))
    if count == 0:
        raise ValueError("no pairs to evaluate MLM loss on")
    return total / count


def mlm_warmup(model: JointModel, train_pairs: list[PreparedPair], cfg: TrainConfig) -> None:
    """Optional MLM-only pretraining of the text branch before joint training."""
    text_params = [p for n, p in model.named_parameters()
                   if n.startswith(("text_encoder.", "mlm_head."))]
    optimizer = torch.optim.Adam(text_params, lr=cfg.learning_rate,
                                 betas=(cfg.adam_beta1, cfg.adam_beta2))
    order: list[int] = []
    epoch = 0
    for step in range(1, cfg.mlm_warmup_steps + 1):
        if len(order) < cfg.batch_size:
            rng = np.random.default_rng(derive_seed(cfg.seed, "warmup-epoch", epoch))
            order = list(rng.permutation(len(train_pairs)))
            epoch += 1
        take, order = order[:cfg.batch_size], order[cfg.batch_size:]
        ids, positions, targets = [], [], []
        for idx, i in enumerate(take):
            masked = mask_tokens(train_pairs[i].seq, cfg.p_keep,
                                 derive_seed(cfg.seed, "warmup", step, idx))
            ids.append(masked.input_ids)
            for pos, target in zip(masked.mask_positions, masked.target_ids):
                positions.append((idx, pos))
                targets.append(target)
        optimizer.zero_grad()
        hidden, _, _ = model.encode_tokens(ids)
        loss = mlm_loss(model.mlm_logits(hidden, positions),
                        torch.tensor(targets, dtype=torch.int64)) / max(1, len(positions))
        loss.backward()
        if cfg.grad_clip_norm:
            torch.nn.utils.clip_grad_norm_(text_params, cfg.grad_clip_norm)
        optimizer.step()


@dataclass
class TrainResult:
    model: JointModel
    metrics: list[dict]
    step: int


def train(train_pairs: list[PreparedPair], val_pairs: list[PreparedPair],
          model: JointModel, cfg: TrainConfig) -> TrainResult:
    """Run the optimization loop; deterministic given (pairs, model, cfg)."""
    torch.set_num_threads(1)  # keeps CPU reductions bit-reproducible
    if len(train_pairs) < cfg.batch_size:
        raise ValueError(
            f"training split of {len(train_pairs)} is smaller than batch_size {cfg.batch_size}")
    if cfg.mlm_warmup_steps:
        mlm_warmup(model, train_pairs, cfg)
    optimizer = make_optimizer(model, cfg)
    metrics: list[dict] = []
    order: list[int] = []
    epoch = 0
    for step in range(1, cfg.steps + 1):
        if len(order) < cfg.batch_size:
            rng = np.random.default_rng(derive_seed(cfg.seed, "epoch", epoch))
            order = list(rng.permutation(len(train_pairs)))
            epoch += 1
        take, order = order[:cfg.batch_size], order[cfg.batch_size:]
        batch = make_batch([train_pairs[i] for i in take], cfg, step=step)
        breakdown = train_step(model, optimizer, batch, cfg)
        for p in model.parameters():
            if not torch.isfinite(p).all():
                raise FloatingPointError(f"non-finite parameters after step {step}")
        row = {"step": step, **breakdown.as_dict()}
        if cfg.val_every and step % cfg.val_every == 0 and len(val_pairs) >= cfg.batch_size:
            row["val_total"] = evaluate_loss(model, val_pairs, cfg, step, cfg.val_batches).total
        metrics.append(row)
    return TrainResult(model=model, metrics=metrics, step=cfg.steps)


# -- checkpoint format -------------------------------------------------------
#
#   magic   7 bytes  b"XTCKPT\0"
#   version u32 LE
#   hlen    u64 LE   header length in bytes
#   header  UTF-8 JSON: {"configs", "step", "rng_digest",
#                        "tensors": [{"name", "shape"}, ...]}
#   payload concatenated tensors, float64 little-endian, row-major,
#           in header order
#   crc     u32 LE   CRC-32 of the payload


def model_config_dict(model_cfg: ModelConfig) -> dict:
    return asdict(model_cfg)


def model_config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(
        graph=GraphEncoderConfig(**d["graph"]),
        text_layers=d["text_layers"], text_heads=d["text_heads"],
        text_hidden=d["text_hidden"], max_len=d["max_len"],
        featurizer=FeaturizerConfig(**d["featurizer"]),
        d_joint=d["d_joint"], shared_projector=d["shared_projector"],
    )


def train_config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["split_ratios"] = list(cfg.split_ratios)
    d["augment"]["op_weights"] = list(cfg.augment.op_weights)
    return d


def train_config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d["augment"] = AugmentConfig(**{**d["augment"], "op_weights": tuple(d["augment"]["op_weights"])})
    d["loss_weights"] = LossWeights(**d["loss_weights"])
    d["split_ratios"] = tuple(d["split_ratios"])
    return TrainConfig(**d)


def save_checkpoint(path, model: JointModel, model_cfg: ModelConfig,
                    train_cfg: TrainConfig, vocab_size: int, step: int) -> None:
    names = [name for name, _ in model.named_parameters()]
    tensors = dict(model.named_parameters())
    header = {
        "configs": {
            "model": model_config_dict(model_cfg),
            "train": train_config_dict(train_cfg),
            "vocab_size": vocab_size,
        },
        "step": step,
        "rng_digest": format(derive_seed(train_cfg.seed, "rng", step), "016x"),
        "tensors": [{"name": n, "shape": list(tensors[n].shape)} for n in names],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(
        tensors[n].detach().to(torch.float64).numpy().astype("<f8").tobytes() for n in names)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)
        fh.write(struct.pack("<I", binascii.crc32(payload)))


class CheckpointError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


@dataclass
class Checkpoint:
    model: JointModel
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    vocab_size: int
    step: int
    rng_digest: str


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError("corrupt-payload", "bad magic; not a checkpoint file")
    off = len(CHECKPOINT_MAGIC)
    (version,) = struct.unpack_from("<I", blob, off)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError("version-mismatch",
                              f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    off += 4
    (hlen,) = struct.unpack_from("<Q", blob, off)
    off += 8
    try:
        header = json.loads(blob[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("corrupt-payload", f"unreadable header: {exc}") from exc
    off += hlen
    n_payload = sum(
        8 * int(np.prod(t["shape"])) if t["shape"] else 8 for t in header["tensors"])
    if len(blob) < off + n_payload + 4:
        raise CheckpointError("corrupt-payload", "file truncated inside tensor payload")
    payload = blob[off:off + n_payload]
    (crc,) = struct.unpack_from("<I", blob, off + n_payload)
    if binascii.crc32(payload) != crc:
        raise CheckpointError("corrupt-payload", "payload checksum mismatch")

    model_cfg = model_config_from_dict(header["configs"]["model"])
    train_cfg = train_config_from_dict(header["configs"]["train"])
    vocab_size = header["configs"]["vocab_size"]
    model = build_model(
        model_cfg.graph, model_cfg.text_config(vocab_size),
        edge_dim=model_cfg.featurizer.k_rbf, d_joint=model_cfg.d_joint,
        shared_projector=model_cfg.shared_projector, seed=0)
    state = {}
    pos = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=pos).reshape(shape)
        state[entry["name"]] = torch.from_numpy(arr.copy())
        pos += 8 * count
    model.load_state_dict(state)
    return Checkpoint(model=model, model_cfg=model_cfg, train_cfg=train_cfg,
                      vocab_size=vocab_size, step=header["step"],
                      rng_digest=header["rng_digest"])
