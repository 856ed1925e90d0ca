"""Evaluation suite: cross-modal retrieval, multiple-choice zero-shot
classification, application screening, clustering indices, and a 2-D
projection for plots.

Embeddings are compared by cosine similarity with deterministic tie-breaking
by ascending index; L2 normalization happens here at evaluation time only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch

from .datasynth import (
    DEFAULT_ELEMENT_POOL, combo_sentence, composition_sentence, derive_labels,
    oxide_sentence, random_formula, reduced_counts, structure_sentence,
)
from .encoders import BatchedGraphs, JointModel
from .structures import (
    CRYSTAL_SYSTEMS, OXIDE_TYPES, CrystalGraph, CrystalStructure,
)
from .textproc import Vocab, tokenize

CHOICE_SUBJECTS = ("composition", "structure", "composition-structure", "oxide-type")


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vectors")
    return float(np.dot(a, b) / (na * nb))


def retrieve(query, pool: np.ndarray, k: int) -> list[int]:
    """Indices of the top-k pool rows by cosine similarity, descending;
    ties break by ascending index."""
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2 or pool.shape[0] == 0:
        raise ValueError("pool must be a non-empty matrix")
    if k > pool.shape[0]:
        raise ValueError(f"k={k} exceeds pool size {pool.shape[0]}")
    sims = [cosine_similarity(query, row) for row in pool]
    order = sorted(range(len(sims)), key=lambda i: (-sims[i], i))
    return order[:k]


@dataclass
class RetrievalReport:
    direction: str
    pool_size: int
    topk: dict[int, float]
    ranks: list[int]          # 1-based rank of the true counterpart per query
    query_ids: list[str]
    n_queries: int
    n_dropped: int            # queries outside a full pool

    def as_dict(self) -> dict:
        return {
            "direction": self.direction,
            "pool_size": self.pool_size,
            "topk": {str(k): v for k, v in sorted(self.topk.items())},
            "n_queries": self.n_queries,
            "n_dropped": self.n_dropped,
            "ranks": self.ranks,
            "query_ids": self.query_ids,
        }


def retrieval_report(query_embs: np.ndarray, cand_embs: np.ndarray,
                     pool_size: int, ks=(1, 3, 10), seed: int = 0,
                     direction: str = "text->graph",
                     ids: list[str] | None = None) -> RetrievalReport:
    """Partition aligned pairs into seeded pools; rank each query's true
    counterpart among its pool's candidates."""
    n = query_embs.shape[0]
    if cand_embs.shape[0] != n:
        raise ValueError("query and candidate sides must be aligned")
    if pool_size < 1 or pool_size > n:
        raise ValueError(f"pool_size {pool_size} invalid for {n} pairs")
    ids = ids if ids is not None else [str(i) for i in range(n)]
    order = np.random.default_rng(seed).permutation(n)
    n_pools = n // pool_size
    ranks: list[int] = []
    query_ids: list[str] = []
    for p in range(n_pools):
        members = order[p * pool_size:(p + 1) * pool_size]
        cands = cand_embs[members]
        for local, idx in enumerate(members):
            ranking = retrieve(query_embs[idx], cands, pool_size)
            ranks.append(ranking.index(local) + 1)
            query_ids.append(ids[idx])
    ks = [k for k in ks if k <= pool_size]
    topk = {k: sum(r <= k for r in ranks) / len(ranks) for k in ks}
    return RetrievalReport(direction=direction, pool_size=pool_size, topk=topk,
                           ranks=ranks, query_ids=query_ids,
                           n_queries=len(ranks), n_dropped=n - n_pools * pool_size)


# -- model-side embedding helpers --------------------------------------------

def embed_graphs(model: JointModel, graphs: list[CrystalGraph],
                 chunk: int = 64) -> np.ndarray:
    out = []
    with torch.no_grad():
        for lo in range(0, len(graphs), chunk):
            h = model.encode_graphs(BatchedGraphs(graphs[lo:lo + chunk]))
            out.append(model.project_graph(h).numpy())
    return np.concatenate(out, axis=0)


def embed_token_sequences(model: JointModel, ids_list: list[tuple[int, ...]],
                          chunk: int = 64) -> np.ndarray:
    out = []
    with torch.no_grad():
        for lo in range(0, len(ids_list), chunk):
            _, pooled, _ = model.encode_tokens(ids_list[lo:lo + chunk])
            out.append(model.project_text(pooled).numpy())
    return np.concatenate(out, axis=0)


def embed_texts(model: JointModel, texts: list[str], vocab: Vocab,
                max_len: int) -> np.ndarray:
    return embed_token_sequences(model, [tokenize(t, vocab, max_len).ids for t in texts])


def retrieval_accuracy(model: JointModel, pairs, pool_size: int,
                       ks=(1, 3, 10), direction: str = "text->graph",
                       seed: int = 0) -> RetrievalReport:
    """pairs: PreparedPair list; direction 'text->graph' or 'graph->text'."""
    if pool_size > len(pairs):
        raise ValueError(f"test set of {len(pairs)} is smaller than pool_size {pool_size}")
    z_graph = embed_graphs(model, [p.graph for p in pairs])
    z_text = embed_token_sequences(model, [p.seq.ids for p in pairs])
    if direction == "text->graph":
        query, cand = z_text, z_graph
    elif direction == "graph->text":
        query, cand = z_graph, z_text
    else:
        raise ValueError(f"unknown retrieval direction {direction!r}")
    return retrieval_report(query, cand, pool_size, ks, seed, direction,
                            ids=[p.pair_id for p in pairs])


# -- zero-shot multiple choice ------------------------------------------------

@dataclass(frozen=True)
class ChoiceProblem:
    graph_id: str
    subject: str
    options: tuple[str, ...]
    answer: int

    def __post_init__(self):
        if len(set(self.options)) != len(self.options):
            raise ValueError("choice options must be pairwise distinct")
        if not 0 <= self.answer < len(self.options):
            raise ValueError("answer index outside the option list")


def gen_multiple_choice(structure: CrystalStructure, subject: str,
                        n_options: int = 10, seed: int = 0,
                        element_pool=DEFAULT_ELEMENT_POOL) -> ChoiceProblem:
    """One correct option templated from the true labels plus synthesized
    distractors; the label space caps n for structure and oxide subjects."""
    if subject not in CHOICE_SUBJECTS:
        raise ValueError(f"unknown subject {subject!r}; expected one of {CHOICE_SUBJECTS}")
    rng = np.random.default_rng(seed)
    labels = derive_labels(structure)
    counts = reduced_counts(structure.elements())
    symbols = tuple(sorted(counts))

    if subject == "composition":
        correct = composition_sentence(labels.formula, counts)
        taken = [set(symbols)]
        distractors = []
        for _ in range(n_options - 1):
            formula, dcounts = random_formula(rng, element_pool, forbidden_sets=taken)
            taken.append(set(dcounts))
            distractors.append(composition_sentence(formula, dcounts))
    elif subject == "structure":
        if n_options > len(CRYSTAL_SYSTEMS):
            warnings.warn(
                f"structure subject caps options at {len(CRYSTAL_SYSTEMS)}; reducing n")
            n_options = len(CRYSTAL_SYSTEMS)
        correct = structure_sentence(labels.crystal_system)
        others = [s for s in CRYSTAL_SYSTEMS if s != labels.crystal_system]
        picked = rng.choice(len(others), size=n_options - 1, replace=False)
        distractors = [structure_sentence(others[i]) for i in picked]
    elif subject == "oxide-type":
        if n_options > len(OXIDE_TYPES):
            warnings.warn(f"oxide-type subject caps options at {len(OXIDE_TYPES)}; reducing n")
            n_options = len(OXIDE_TYPES)
        correct = oxide_sentence(labels.oxide_type)
        others = [t for t in OXIDE_TYPES if t != labels.oxide_type]
        picked = rng.choice(len(others), size=n_options - 1, replace=False)
        distractors = [oxide_sentence(others[i]) for i in picked]
    else:  # composition-structure
        correct = combo_sentence(labels.formula, counts, labels.crystal_system)
        taken = [set(symbols)]
        distractors = []
        while len(distractors) < n_options - 1:
            mode = int(rng.integers(3))
            if mode == 0:  # wrong formula, right system
                formula, dcounts = random_formula(rng, element_pool, forbidden_sets=taken)
                taken.append(set(dcounts))
                option = combo_sentence(formula, dcounts, labels.crystal_system)
            elif mode == 1:  # right formula, wrong system
                system = CRYSTAL_SYSTEMS[int(rng.integers(7))]
                if system == labels.crystal_system:
                    continue
                option = combo_sentence(labels.formula, counts, system)
            else:  # both wrong
                formula, dcounts = random_formula(rng, element_pool, forbidden_sets=taken)
                taken.append(set(dcounts))
                system = CRYSTAL_SYSTEMS[int(rng.integers(7))]
                option = combo_sentence(formula, dcounts, system)
            if option != correct and option not in distractors:
                distractors.append(option)

    options = [correct] + distractors
    order = rng.permutation(len(options))
    shuffled = tuple(options[i] for i in order)
    return ChoiceProblem(graph_id=structure.id, subject=subject,
                         options=shuffled, answer=int(np.nonzero(order == 0)[0][0]))


def zero_shot_classify(model: JointModel, graph: CrystalGraph,
                       options: tuple[str, ...], vocab: Vocab,
                       max_len: int) -> int:
    """Pick the option whose text embedding is cosine-closest to the graph;
    ties resolve to the lowest index."""
    with torch.no_grad():
        z_graph = model.project_graph(model.encode_graph(graph)).numpy()
    z_options = embed_texts(model, list(options), vocab, max_len)
    sims = np.array([cosine_similarity(z_graph, z) for z in z_options])
    return int(np.argmax(sims))


def application_matrix(model: JointModel, graphs: list[CrystalGraph],
                       phrases: list[str], vocab: Vocab, max_len: int) -> np.ndarray:
    """Row i, column j: cosine similarity of material i and phrase j."""
    if not graphs or not phrases:
        raise ValueError("need at least one material and one application phrase")
    z_graphs = embed_graphs(model, graphs)
    z_phrases = embed_texts(model, phrases, vocab, max_len)
    out = np.empty((len(graphs), len(phrases)))
    for i, zg in enumerate(z_graphs):
        for j, zp in enumerate(z_phrases):
            out[i, j] = cosine_similarity(zg, zp)
    return out


# -- clustering indices -------------------------------------------------------

def _group_points(points, labels):
    points = np.asarray(points, dtype=np.float64)
    labels = list(labels)
    if points.shape[0] != len(labels):
        raise ValueError("one label per point required")
    unique = sorted(set(labels), key=str)
    if len(unique) < 2:
        raise ValueError("clustering indices need at least 2 distinct labels")
    groups = [points[[i for i, l in enumerate(labels) if l == u]] for u in unique]
    return points, groups


def davies_bouldin(points, labels) -> float:
    """Mean over clusters of the worst (sigma_i + sigma_j) / d(c_i, c_j);
    coincident centroids yield the +inf sentinel rather than an error."""
    _, groups = _group_points(points, labels)
    centroids = [g.mean(axis=0) for g in groups]
    sigmas = [float(np.mean(np.linalg.norm(g - c, axis=1))) for g, c in zip(groups, centroids)]
    k = len(groups)
    worst = []
    for i in range(k):
        ratios = []
        for j in range(k):
            if i == j:
                continue
            d = float(np.linalg.norm(centroids[i] - centroids[j]))
            ratios.append((sigmas[i] + sigmas[j]) / d if d > 0 else float("inf"))
        worst.append(max(ratios))
    return float(np.mean(worst))


def calinski_harabasz(points, labels) -> float:
    """[B / (k-1)] / [W / (n-k)] with between/within sums of squares."""
    points, groups = _group_points(points, labels)
    n, k = points.shape[0], len(groups)
    if n <= k:
        raise ValueError("Calinski-Harabasz needs more points than clusters")
    overall = points.mean(axis=0)
    between = sum(len(g) * float(np.linalg.norm(g.mean(axis=0) - overall) ** 2) for g in groups)
    within = sum(float(np.sum(np.linalg.norm(g - g.mean(axis=0), axis=1) ** 2)) for g in groups)
    if within == 0.0:
        return float("inf")
    return (between / (k - 1)) / (within / (n - k))


def silhouette(points, labels) -> float:
    """Mean of (b - a) / max(a, b); singleton clusters contribute 0."""
    points, _ = _group_points(points, labels)
    labels = list(labels)
    unique = sorted(set(labels), key=str)
    members = {u: [i for i, l in enumerate(labels) if l == u] for u in unique}
    dists = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    scores = []
    for i, label in enumerate(labels):
        own = [j for j in members[label] if j != i]
        if not own:
            scores.append(0.0)
            continue
        a = float(np.mean(dists[i, own]))
        b = min(float(np.mean(dists[i, members[u]])) for u in unique if u != label)
        denom = max(a, b)
        scores.append((b - a) / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


@dataclass(frozen=True)
class ClusterMetricsReport:
    label_name: str
    davies_bouldin: float
    calinski_harabasz: float
    silhouette: float

    def as_dict(self) -> dict:
        return {
            "label_name": self.label_name,
            "davies_bouldin": self.davies_bouldin,
            "calinski_harabasz": self.calinski_harabasz,
            "silhouette": self.silhouette,
        }


def cluster_metrics(points, labels, label_name: str) -> ClusterMetricsReport:
    return ClusterMetricsReport(
        label_name=label_name,
        davies_bouldin=davies_bouldin(points, labels),
        calinski_harabasz=calinski_harabasz(points, labels),
        silhouette=silhouette(points, labels),
    )


def pca2d(points) -> np.ndarray:
    """Project onto the top-2 principal components with a fixed sign
    convention (largest-magnitude loading positive)."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < 2:
        raise ValueError("PCA projection needs at least 2 points")
    centered = points - points.mean(axis=0)
    if not np.any(centered):
        warnings.warn("all points identical; projecting to zeros")
        return np.zeros((points.shape[0], 2))
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2] if vt.shape[0] >= 2 else np.vstack([vt, np.zeros((2 - vt.shape[0], vt.shape[1]))])
    for row in range(comps.shape[0]):
        lead = np.argmax(np.abs(comps[row]))
        if comps[row, lead] < 0:
            comps[row] = -comps[row]
    return centered @ comps.T
