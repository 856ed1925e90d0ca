"""Probabilistic crystal-graph augmentation for intra-modal contrastive pairs.

Three topology perturbations (edge removal, node dropping, random-walk
subgraph sampling) plus identity. Features of surviving nodes and edges are
never altered, and every output is again a valid CrystalGraph. All functions
are deterministic in their integer seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .structures import CrystalGraph


@dataclass(frozen=True)
class AugmentConfig:
    edge_removal_rate: float = 0.15
    node_drop_rate: float = 0.10
    subgraph_ratio: float = 0.8
    # selection weights for (edge_removal, node_drop, subgraph_sample, identity)
    op_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 0.0)

    def __post_init__(self):
        if not 0.0 <= self.edge_removal_rate < 1.0:
            raise ValueError(f"edge_removal_rate must lie in [0, 1), got {self.edge_removal_rate}")
        if not 0.0 <= self.node_drop_rate < 1.0:
            raise ValueError(f"node_drop_rate must lie in [0, 1), got {self.node_drop_rate}")
        if not 0.0 < self.subgraph_ratio <= 1.0:
            raise ValueError(f"subgraph_ratio must lie in (0, 1], got {self.subgraph_ratio}")
        if len(self.op_weights) != 4 or min(self.op_weights) < 0 or sum(self.op_weights) == 0:
            raise ValueError(f"op_weights must be 4 nonnegative weights, not all zero: {self.op_weights}")


def _select_edges(graph: CrystalGraph, keep: np.ndarray) -> dict:
    return dict(
        edge_src=graph.edge_src[keep],
        edge_dst=graph.edge_dst[keep],
        edge_offsets=graph.edge_offsets[keep],
        edge_distances=graph.edge_distances[keep],
        edge_features=graph.edge_features[keep],
        edge_vectors=graph.edge_vectors[keep],
    )


def _rebuild(graph: CrystalGraph, node_keep: np.ndarray | None, edge_keep: np.ndarray) -> CrystalGraph:
    edges = _select_edges(graph, edge_keep)
    if node_keep is None:
        elements = graph.node_elements
        features = graph.node_features
    else:
        elements = graph.node_elements[node_keep]
        features = graph.node_features[node_keep]
        remap = np.full(graph.n_nodes, -1, dtype=np.int64)
        remap[node_keep] = np.arange(len(node_keep))
        edges["edge_src"] = remap[edges["edge_src"]]
        edges["edge_dst"] = remap[edges["edge_dst"]]
    incident = np.zeros(len(elements), dtype=bool)
    incident[edges["edge_src"]] = True
    incident[edges["edge_dst"]] = True
    return CrystalGraph(
        id=graph.id,
        node_elements=elements,
        node_features=features,
        isolated_nodes=tuple(int(i) for i in np.nonzero(~incident)[0]),
        **edges,
    )


def _undirected_units(graph: CrystalGraph) -> list[tuple[int, ...]]:
    """Group directed edge indices into undirected units.

    Edge (u, v, offset) pairs with its reverse (v, u, -offset); an edge whose
    reverse was truncated away forms a unit of its own.
    """
    keyed: dict[tuple, list[int]] = {}
    for e in range(graph.n_edges):
        u, v = int(graph.edge_src[e]), int(graph.edge_dst[e])
        off = tuple(int(x) for x in graph.edge_offsets[e])
        neg = tuple(-x for x in off)
        key = min((u, v, off), (v, u, neg))
        keyed.setdefault(key, []).append(e)
    return [tuple(keyed[k]) for k in sorted(keyed)]


def edge_removal(graph: CrystalGraph, rate: float, seed: int) -> CrystalGraph:
    """Remove round(rate * n_undirected_edges) undirected edge units."""
    units = _undirected_units(graph)
    n_remove = int(round(rate * len(units)))
    if n_remove == 0:
        return graph
    rng = np.random.default_rng(seed)
    removed = rng.choice(len(units), size=n_remove, replace=False)
    drop = {e for u in removed for e in units[u]}
    keep = np.array([e not in drop for e in range(graph.n_edges)], dtype=bool)
    return _rebuild(graph, None, keep)


def node_drop(graph: CrystalGraph, rate: float, seed: int) -> CrystalGraph:
    """Drop round(rate * n_nodes) nodes, always leaving at least one."""
    n_drop = min(int(round(rate * graph.n_nodes)), graph.n_nodes - 1)
    if n_drop == 0:
        return graph
    rng = np.random.default_rng(seed)
    dropped = set(rng.choice(graph.n_nodes, size=n_drop, replace=False).tolist())
    node_keep = np.array([i for i in range(graph.n_nodes) if i not in dropped], dtype=np.int64)
    alive = np.zeros(graph.n_nodes, dtype=bool)
    alive[node_keep] = True
    edge_keep = alive[graph.edge_src] & alive[graph.edge_dst]
    return _rebuild(graph, node_keep, edge_keep)


def subgraph_sample(graph: CrystalGraph, ratio: float, seed: int) -> CrystalGraph:
    """Random-walk node sample from a uniform seed node; induced subgraph.

    The walk restarts at the seed node on dead ends; nodes outside the seed's
    connected component are unreachable and simply excluded.
    """
    rng = np.random.default_rng(seed)
    n = graph.n_nodes
    adjacency: list[set[int]] = [set() for _ in range(n)]
    for u, v in zip(graph.edge_src, graph.edge_dst):
        adjacency[int(u)].add(int(v))
        adjacency[int(v)].add(int(u))
    neighbors = [sorted(s) for s in adjacency]

    start = int(rng.integers(n))
    component = {start}
    frontier = [start]
    while frontier:
        nxt = frontier.pop()
        for other in neighbors[nxt]:
            if other not in component:
                component.add(other)
                frontier.append(other)

    target = min(math.ceil(ratio * n), len(component))
    collected = {start}
    current = start
    while len(collected) < target:
        options = neighbors[current]
        if not options:
            current = start
            continue
        current = options[int(rng.integers(len(options)))]
        collected.add(current)

    if len(collected) == n:
        return graph
    node_keep = np.array(sorted(collected), dtype=np.int64)
    alive = np.zeros(n, dtype=bool)
    alive[node_keep] = True
    edge_keep = alive[graph.edge_src] & alive[graph.edge_dst]
    return _rebuild(graph, node_keep, edge_keep)


def augment_graph(graph: CrystalGraph, cfg: AugmentConfig, seed: int) -> CrystalGraph:
    """Draw one operation by op_weights and apply it with its configured rate."""
    rng = np.random.default_rng(seed)
    weights = np.asarray(cfg.op_weights, dtype=np.float64)
    op = int(rng.choice(4, p=weights / weights.sum()))
    sub_seed = int(rng.integers(2**63))
    if op == 0:
        return edge_removal(graph, cfg.edge_removal_rate, sub_seed)
    if op == 1:
        return node_drop(graph, cfg.node_drop_rate, sub_seed)
    if op == 2:
        return subgraph_sample(graph, cfg.subgraph_ratio, sub_seed)
    return graph
