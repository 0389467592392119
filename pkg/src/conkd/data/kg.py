"""Typed-edge knowledge graphs and their file format.

Two graphs drive the recommender: an item-oriented relational graph
(items linked to attribute nodes, one weight matrix per relation) and a
word-oriented single-relation graph (preference words linked to concept
nodes, encoded with symmetric-normalized GCN aggregation).

KG file format: JSON-lines of ``{"head": name, "relation": name, "tail": name}``.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np


@dataclass
class KnowledgeGraph:
    node_names: list[str]
    relation_names: list[str]
    edges: list[tuple[int, int, int]]  # (head, relation, tail)
    _node_index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._node_index = {n: i for i, n in enumerate(self.node_names)}
        n = len(self.node_names)
        for h, r, t in self.edges:
            if not (0 <= h < n and 0 <= t < n):
                raise ValueError(f"edge endpoint out of range: {(h, r, t)}")
            if not 0 <= r < len(self.relation_names):
                raise ValueError(f"unknown relation id in edge {(h, r, t)}")

    @property
    def n_nodes(self) -> int:
        return len(self.node_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    def node_id(self, name: str):
        return self._node_index.get(name)

    def has_edges(self, node: int) -> bool:
        return node in self._touched()

    def _touched(self) -> set[int]:
        if not hasattr(self, "_touched_cache"):
            touched = set()
            for h, _, t in self.edges:
                touched.add(h)
                touched.add(t)
            self._touched_cache = touched
        return self._touched_cache

    def undirected_neighbors(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = defaultdict(set)
        for h, _, t in self.edges:
            adj[h].add(t)
            adj[t].add(h)
        return adj

    def edges_by_relation(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """relation id -> (head array, tail array); tails aggregate heads."""
        buckets: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for h, r, t in self.edges:
            buckets[r].append((h, t))
        out = {}
        for r, pairs in buckets.items():
            hs = np.array([p[0] for p in pairs], dtype=np.intp)
            ts = np.array([p[1] for p in pairs], dtype=np.intp)
            out[r] = (hs, ts)
        return out

    def sym_norm_edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edges+weights of D^-1/2 (A+I) D^-1/2 over the undirected graph."""
        pairs = set()
        for h, _, t in self.edges:
            pairs.add((h, t))
            pairs.add((t, h))
        for i in range(self.n_nodes):
            pairs.add((i, i))
        deg = np.zeros(self.n_nodes)
        for s, d in pairs:
            deg[d] += 1.0
        src = np.array([p[0] for p in sorted(pairs)], dtype=np.intp)
        dst = np.array([p[1] for p in sorted(pairs)], dtype=np.intp)
        w = 1.0 / np.sqrt(deg[src] * deg[dst])
        return src, dst, w

    def to_triples(self) -> list[dict]:
        return [{"head": self.node_names[h], "relation": self.relation_names[r],
                 "tail": self.node_names[t]} for h, r, t in self.edges]


def kg_from_triples(triples: list[dict], node_order: list[str] | None = None,
                    ) -> KnowledgeGraph:
    """Build a graph from name triples; nodes ordered by first occurrence
    unless an explicit order (e.g. the item catalog) is given."""
    names: dict[str, None] = {}
    if node_order:
        for n in node_order:
            names[n] = None
    rels: dict[str, None] = {}
    for t in triples:
        names.setdefault(t["head"], None)
        names.setdefault(t["tail"], None)
        rels.setdefault(t["relation"], None)
    node_names = list(names)
    rel_names = list(rels)
    node_idx = {n: i for i, n in enumerate(node_names)}
    rel_idx = {r: i for i, r in enumerate(rel_names)}
    edges = [(node_idx[t["head"]], rel_idx[t["relation"]], node_idx[t["tail"]])
             for t in triples]
    return KnowledgeGraph(node_names=node_names, relation_names=rel_names, edges=edges)


def build_item_kg(triples: list[dict], item_catalog: dict[int, str]) -> KnowledgeGraph:
    """Item graph with catalog items pinned to node ids 0..n_items-1 (by
    sorted catalog id); items absent from the triples keep a node."""
    order = [f"@{cid}" for cid in sorted(item_catalog)]
    return kg_from_triples(triples, node_order=order)


def load_kg_jsonl(path) -> list[dict]:
    triples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                triples.append({"head": obj["head"], "relation": obj["relation"],
                                "tail": obj["tail"]})
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ValueError(f"{path}: line {lineno}: {e}") from e
    return triples


def save_kg_jsonl(triples: list[dict], path):
    with open(path, "w", encoding="utf-8") as f:
        for t in triples:
            f.write(json.dumps(t, ensure_ascii=False) + "\n")


def load_catalog(path) -> dict[int, str]:
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    return {int(k): v for k, v in raw.items()}


def save_catalog(catalog: dict[int, str], path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump({str(k): v for k, v in catalog.items()}, f, ensure_ascii=False)
