"""Differentiable encoders: crystal-graph branch, text branch, projectors.

The graph branch comes in two flavors: a gated-convolution variant (cgcnn)
and a direction-aware variant (painn) that carries per-node 3-vector channels
consumed only through rotation-invariant readouts. The text branch is a
compact post-LN transformer with learned positions, CLS pooling, and a linear
MLM head. All modules default to float64; training and gradient checks run at
that precision.

Only smooth nonlinearities (GELU, SiLU, sigmoid, softplus, tanh) are used so
analytic gradients can be validated against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .structures import CrystalGraph
from .textproc import PAD_ID

_NORM_EPS = 1e-24  # inside sqrt; keeps vector-norm gradients finite at zero
_GATE_INIT = 0.05  # residual message gates start small but trainable; at
                   # exactly zero the convolution weights receive no gradient


@dataclass(frozen=True)
class GraphEncoderConfig:
    variant: str = "cgcnn"  # "cgcnn" or "painn"
    node_dim: int = 64
    n_layers: int = 3
    element_vocab_size: int = 104

    def __post_init__(self):
        if self.variant not in ("cgcnn", "painn"):
            raise ValueError(f"unknown graph encoder variant {self.variant!r}")
        if self.node_dim < 1 or self.n_layers < 1:
            raise ValueError("node_dim and n_layers must be positive")
        if self.element_vocab_size < 104:
            raise ValueError("element vocabulary must cover atomic numbers up to 103")


@dataclass(frozen=True)
class TextEncoderConfig:
    vocab_size: int
    n_layers: int = 2
    n_heads: int = 4
    hidden_dim: int = 64
    max_len: int = 128

    def __post_init__(self):
        if self.hidden_dim % self.n_heads != 0:
            raise ValueError(f"hidden_dim {self.hidden_dim} not divisible by n_heads {self.n_heads}")
        if min(self.vocab_size, self.n_layers, self.max_len) < 1:
            raise ValueError("vocab_size, n_layers and max_len must be positive")


class BatchedGraphs:
    """Block-diagonal collation of crystal graphs into flat tensors."""

    def __init__(self, graphs: list[CrystalGraph], dtype=torch.float64):
        elements, src, dst, feat, vec, graph_index = [], [], [], [], [], []
        offset = 0
        for gi, g in enumerate(graphs):
            elements.append(torch.from_numpy(np.ascontiguousarray(g.node_elements)))
            graph_index.append(torch.full((g.n_nodes,), gi, dtype=torch.int64))
            src.append(torch.from_numpy(np.ascontiguousarray(g.edge_src)) + offset)
            dst.append(torch.from_numpy(np.ascontiguousarray(g.edge_dst)) + offset)
            feat.append(torch.from_numpy(np.ascontiguousarray(g.edge_features)).to(dtype))
            vec.append(torch.from_numpy(np.ascontiguousarray(g.edge_vectors)).to(dtype))
            offset += g.n_nodes
        self.n_graphs = len(graphs)
        self.n_nodes = offset
        self.elements = torch.cat(elements)
        self.graph_index = torch.cat(graph_index)
        self.edge_src = torch.cat(src)
        self.edge_dst = torch.cat(dst)
        self.edge_features = torch.cat(feat)
        self.edge_vectors = torch.cat(vec)


def _segment_mean(x: torch.Tensor, index: torch.Tensor, n_segments: int) -> torch.Tensor:
    total = x.new_zeros((n_segments,) + x.shape[1:])
    total.index_add_(0, index, x)
    counts = torch.bincount(index, minlength=n_segments).to(x.dtype).clamp(min=1)
    return total / counts.reshape((n_segments,) + (1,) * (x.dim() - 1))


class CgcnnEncoder(nn.Module):
    """Gated edge-conditioned convolution over crystal graphs, mean-pooled.

    Each layer's aggregated message passes through a zero-initialized
    learnable gate before the residual add. The sigmoid*softplus message has
    a ~0.35 floor per dimension per edge at zero pre-activation, so ungated
    sums over neighbors drown the element-embedding signal in
    geometry-dependent drift (the original formulation relies on batch
    normalization here, which a deterministic desk-scale setup avoids); the
    gate lets training open the geometry channel gradually instead.
    """

    def __init__(self, cfg: GraphEncoderConfig, edge_dim: int):
        super().__init__()
        self.cfg = cfg
        self.element_embedding = nn.Embedding(cfg.element_vocab_size, cfg.node_dim)
        z_dim = 2 * cfg.node_dim + edge_dim
        self.filter_layers = nn.ModuleList(nn.Linear(z_dim, cfg.node_dim) for _ in range(cfg.n_layers))
        self.core_layers = nn.ModuleList(nn.Linear(z_dim, cfg.node_dim) for _ in range(cfg.n_layers))
        self.message_gates = nn.Parameter(torch.full((cfg.n_layers,), _GATE_INIT))

    def forward(self, batch: BatchedGraphs) -> torch.Tensor:
        x = self.element_embedding(batch.elements)
        for layer, (w_f, w_s) in enumerate(zip(self.filter_layers, self.core_layers)):
            z = torch.cat([x[batch.edge_dst], x[batch.edge_src], batch.edge_features], dim=-1)
            message = torch.sigmoid(w_f(z)) * F.softplus(w_s(z))
            agg = x.new_zeros(x.shape)
            agg.index_add_(0, batch.edge_dst, message)
            x = x + self.message_gates[layer] * agg
        return _segment_mean(x, batch.graph_index, batch.n_graphs)


class PainnInteraction(nn.Module):
    """One message + update block over scalar and vector node channels."""

    def __init__(self, dim: int, edge_dim: int):
        super().__init__()
        self.message_mlp = nn.Sequential(nn.Linear(dim, dim), nn.SiLU(), nn.Linear(dim, 3 * dim))
        self.filter_net = nn.Linear(edge_dim, 3 * dim)
        self.mix_u = nn.Linear(dim, dim, bias=False)
        self.mix_v = nn.Linear(dim, dim, bias=False)
        self.update_mlp = nn.Sequential(nn.Linear(2 * dim, dim), nn.SiLU(), nn.Linear(dim, 3 * dim))
        # near-zero initialized residual gates, same rationale as CgcnnEncoder
        self.message_gate = nn.Parameter(torch.full((), _GATE_INIT))
        self.update_gate = nn.Parameter(torch.full((), _GATE_INIT))
        self.dim = dim

    def forward(self, s, v, batch):
        d = self.dim
        # message step: neighbor scalars gated by RBF filters
        phi = self.message_mlp(s)[batch.edge_src] * self.filter_net(batch.edge_features)
        m_s, m_vv, m_vs = torch.split(phi, d, dim=-1)
        ds = s.new_zeros(s.shape)
        ds.index_add_(0, batch.edge_dst, m_s)
        vec_msg = m_vv.unsqueeze(1) * v[batch.edge_src] \
            + m_vs.unsqueeze(1) * batch.edge_vectors.unsqueeze(-1)
        dv = v.new_zeros(v.shape)
        dv.index_add_(0, batch.edge_dst, vec_msg)
        s, v = s + self.message_gate * ds, v + self.message_gate * dv

        # update step: node-local mixing of scalar and vector channels
        vu = self.mix_u(v)
        vv = self.mix_v(v)
        norms = torch.sqrt(vv.pow(2).sum(dim=1) + _NORM_EPS)
        a_ss, a_sv, a_vv = torch.split(self.update_mlp(torch.cat([s, norms], dim=-1)), d, dim=-1)
        dot = (vu * vv).sum(dim=1)
        s = s + self.update_gate * (a_ss + a_sv * dot)
        v = v + self.update_gate * (a_vv.unsqueeze(1) * vu)
        return s, v


class PainnEncoder(nn.Module):
    """Equivariant message passing; the readout uses scalars only, so the
    pooled representation is invariant under rotations of the structure."""

    def __init__(self, cfg: GraphEncoderConfig, edge_dim: int):
        super().__init__()
        self.cfg = cfg
        self.element_embedding = nn.Embedding(cfg.element_vocab_size, cfg.node_dim)
        self.blocks = nn.ModuleList(
            PainnInteraction(cfg.node_dim, edge_dim) for _ in range(cfg.n_layers))

    def forward(self, batch: BatchedGraphs) -> torch.Tensor:
        s = self.element_embedding(batch.elements)
        v = s.new_zeros(batch.n_nodes, 3, self.cfg.node_dim)
        for block in self.blocks:
            s, v = block(s, v, batch)
        return _segment_mean(s, batch.graph_index, batch.n_graphs)


class SelfAttention(nn.Module):
    def __init__(self, hidden: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = hidden // heads
        self.qkv = nn.Linear(hidden, 3 * hidden)
        self.out = nn.Linear(hidden, hidden)

    def forward(self, x, key_mask):
        b, l, h = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        shape = (b, l, self.heads, self.head_dim)
        q = q.reshape(shape).transpose(1, 2)
        k = k.reshape(shape).transpose(1, 2)
        v = v.reshape(shape).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / self.head_dim**0.5
        scores = scores.masked_fill(~key_mask[:, None, None, :], -1e30)
        attn = F.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(b, l, h)
        return self.out(ctx), attn


class TransformerBlock(nn.Module):
    def __init__(self, hidden: int, heads: int):
        super().__init__()
        self.attention = SelfAttention(hidden, heads)
        self.ln1 = nn.LayerNorm(hidden)
        self.ffn = nn.Sequential(nn.Linear(hidden, 4 * hidden), nn.GELU(), nn.Linear(4 * hidden, hidden))
        self.ln2 = nn.LayerNorm(hidden)

    def forward(self, x, key_mask):
        ctx, attn = self.attention(x, key_mask)
        x = self.ln1(x + ctx)
        x = self.ln2(x + self.ffn(x))
        return x, attn


class TextEncoder(nn.Module):
    """Token + position embeddings feeding post-LN transformer blocks."""

    def __init__(self, cfg: TextEncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.token_embedding = nn.Embedding(cfg.vocab_size, cfg.hidden_dim)
        self.position_embedding = nn.Embedding(cfg.max_len, cfg.hidden_dim)
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.hidden_dim, cfg.n_heads) for _ in range(cfg.n_layers))

    def forward(self, ids: torch.Tensor, key_mask: torch.Tensor,
                return_attention: bool = False):
        if ids.shape[1] > self.cfg.max_len:
            raise ValueError(f"sequence length {ids.shape[1]} exceeds max_len {self.cfg.max_len}")
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.token_embedding(ids) + self.position_embedding(positions)[None]
        attentions = []
        for block in self.blocks:
            x, attn = block(x, key_mask)
            if return_attention:
                attentions.append(attn)
        return (x, attentions) if return_attention else x


class Projector(nn.Module):
    """Two-layer MLP into the joint space; no normalization inside.

    The output layer starts at a tenth of the default init scale so joint
    embeddings begin with small norms; the unnormalized graph branch can
    otherwise hand the pair critic scores large enough to saturate softplus
    for the whole early phase of training.
    """

    def __init__(self, in_dim: int, d_joint: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(in_dim, d_joint), nn.GELU(), nn.Linear(d_joint, d_joint))
        with torch.no_grad():
            self.net[2].weight *= 0.1
            self.net[2].bias *= 0.1

    def forward(self, x):
        return self.net(x)


class Discriminator(nn.Module):
    """Separable critic on a pair of joint embeddings.

    T(a, b) = scale * <a, b> / sqrt(d) + bias. Because the score factors
    through the same dot-product geometry that cosine retrieval reads,
    maximizing the MI bound directly aligns paired embeddings; a free-form
    MLP on the concatenated pair can discriminate without ever aligning
    them. With all parameters zeroed, T is identically 0.
    """

    def __init__(self, d_joint: int):
        super().__init__()
        self.d_joint = d_joint
        self.scale = nn.Parameter(torch.ones(()))
        self.bias = nn.Parameter(torch.zeros(()))

    def forward(self, left, right):
        return self.scale * (left * right).sum(dim=-1) / self.d_joint**0.5 + self.bias


class JointModel(nn.Module):
    """All trainable pieces: both encoders, projectors, MLM head, and the
    three pair discriminators (inter-modal, intra-graph, intra-text)."""

    def __init__(self, graph_cfg: GraphEncoderConfig, text_cfg: TextEncoderConfig,
                 edge_dim: int, d_joint: int = 64, shared_projector: bool = False):
        super().__init__()
        self.graph_cfg = graph_cfg
        self.text_cfg = text_cfg
        self.edge_dim = edge_dim
        self.d_joint = d_joint
        encoder_cls = CgcnnEncoder if graph_cfg.variant == "cgcnn" else PainnEncoder
        self.graph_encoder = encoder_cls(graph_cfg, edge_dim)
        self.text_encoder = TextEncoder(text_cfg)
        self.graph_projector = Projector(graph_cfg.node_dim, d_joint)
        self.text_projector = Projector(text_cfg.hidden_dim, d_joint)
        self.shared_projector = nn.Linear(d_joint, d_joint) if shared_projector else None
        self.mlm_head = nn.Linear(text_cfg.hidden_dim, text_cfg.vocab_size)
        self.disc_inter = Discriminator(d_joint)
        self.disc_graph = Discriminator(d_joint)
        self.disc_text = Discriminator(d_joint)

    # -- graph branch -----------------------------------------------------
    def encode_graphs(self, batch: BatchedGraphs) -> torch.Tensor:
        if int(batch.elements.max()) >= self.graph_cfg.element_vocab_size:
            raise ValueError("atomic number outside the element embedding table")
        return self.graph_encoder(batch)

    def encode_graph(self, graph: CrystalGraph) -> torch.Tensor:
        return self.encode_graphs(BatchedGraphs([graph], dtype=self._dtype()))[0]

    def project_graph(self, h_graph: torch.Tensor) -> torch.Tensor:
        z = self.graph_projector(h_graph)
        return self.shared_projector(z) if self.shared_projector is not None else z

    # -- text branch ------------------------------------------------------
    def encode_tokens(self, ids_batch: list[tuple[int, ...]]):
        """Pad a list of id tuples and encode; returns (hidden, pooled, mask)."""
        ids, mask = pad_token_batch(ids_batch, device=self._device())
        hidden = self.text_encoder(ids, mask)
        return hidden, hidden[:, 0], mask

    def project_text(self, pooled: torch.Tensor) -> torch.Tensor:
        z = self.text_projector(pooled)
        return self.shared_projector(z) if self.shared_projector is not None else z

    def mlm_logits(self, hidden: torch.Tensor, positions: list[tuple[int, int]]) -> torch.Tensor:
        """Vocabulary logits at selected (sample, position) pairs."""
        if not positions:
            return hidden.new_zeros((0, self.text_cfg.vocab_size))
        rows = torch.tensor([p[0] for p in positions], dtype=torch.int64)
        cols = torch.tensor([p[1] for p in positions], dtype=torch.int64)
        if int(cols.max()) >= hidden.shape[1] or int(rows.max()) >= hidden.shape[0]:
            raise ValueError("MLM position outside the encoded batch")
        return self.mlm_head(hidden[rows, cols])

    def cls_attention_map(self, seq_ids: tuple[int, ...]) -> np.ndarray:
        """Per layer, the attention row from [CLS] to every token, summed
        over heads; shape (n_layers, seq_len)."""
        ids, mask = pad_token_batch([seq_ids], device=self._device())
        with torch.no_grad():
            _, attentions = self.text_encoder(ids, mask, return_attention=True)
        return np.stack([a[0, :, 0, :].sum(dim=0).numpy() for a in attentions])

    def _device(self):
        return next(self.parameters()).device

    def _dtype(self):
        return next(self.parameters()).dtype


def pad_token_batch(ids_batch: list[tuple[int, ...]], device=None):
    """Right-pad with [PAD]; the boolean mask marks real tokens."""
    max_len = max(len(ids) for ids in ids_batch)
    ids = torch.full((len(ids_batch), max_len), PAD_ID, dtype=torch.int64, device=device)
    mask = torch.zeros((len(ids_batch), max_len), dtype=torch.bool, device=device)
    for i, seq in enumerate(ids_batch):
        ids[i, :len(seq)] = torch.tensor(seq, dtype=torch.int64)
        mask[i, :len(seq)] = True
    return ids, mask


def build_model(graph_cfg: GraphEncoderConfig, text_cfg: TextEncoderConfig,
                edge_dim: int, d_joint: int = 64, shared_projector: bool = False,
                seed: int = 0, dtype=torch.float64) -> JointModel:
    """Seeded, reproducible model construction at the requested precision."""
    torch.manual_seed(seed)
    model = JointModel(graph_cfg, text_cfg, edge_dim, d_joint, shared_projector)
    return model.to(dtype)
