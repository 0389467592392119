"""Recommendation teacher.

Relational graph convolution over the item graph (one weight matrix per
relation plus a self-loop transform, neighbor normalization constant 1),
symmetric-normalized GCN over the word graph, self-attentive pooling of
mentioned nodes, gated fusion into a user vector, and softmax scoring by
inner product against item embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import ParamStore, Tape, Tensor
from .nn import tensor as T
from .data.corpus import Turn, mentioned_entities
from .data.kg import KnowledgeGraph
from .data.vocab import Vocabulary


@dataclass
class RecommenderConfig:
    hidden: int = 64
    n_layers: int = 1

    def __post_init__(self):
        if self.hidden < 1 or self.n_layers < 1:
            raise ValueError("hidden and n_layers must be >= 1")


@dataclass
class RecTrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    clip_norm: float = 1.0
    seed: int = 0


def rgcn_layer(node_states: Tensor, edges_by_rel: dict, rel_weights: dict,
               self_weight: Tensor) -> Tensor:
    """h'_e = ReLU(sum_r sum_{e' -> e under r} W_r h_{e'} + W h_e)."""
    n = node_states.shape[0]
    for r in edges_by_rel:
        if r not in rel_weights:
            raise ValueError(f"no weight matrix for relation {r}")
    acc = T.matmul(node_states, self_weight)
    for r, (src, dst) in sorted(edges_by_rel.items()):
        msgs = T.matmul(node_states, rel_weights[r])
        acc = T.add(acc, T.edge_aggregate(msgs, src, dst, n))
    return T.relu(acc)


def gcn_layer(node_states: Tensor, norm_edges: tuple, weight: Tensor) -> Tensor:
    """H' = ReLU(D^-1/2 (A+I) D^-1/2 H W)."""
    src, dst, w = norm_edges
    if node_states.shape[1] != weight.shape[0]:
        raise ValueError(
            f"feature dim {node_states.shape[1]} does not match weight {weight.shape}")
    agg = T.edge_aggregate(node_states, src, dst, node_states.shape[0], weights=w)
    return T.relu(T.matmul(agg, weight))


class RecommenderModel:
    """Holds parameters plus precomputed graph index arrays."""

    def __init__(self, vocab: Vocabulary, item_kg: KnowledgeGraph,
                 word_kg: KnowledgeGraph, config: RecommenderConfig, seed: int = 0):
        self.vocab = vocab
        self.item_kg = item_kg
        self.word_kg = word_kg
        self.config = config
        self.seed = seed
        self.item_edges = item_kg.edges_by_relation()
        self.word_norm_edges = word_kg.sym_norm_edges()

        store = ParamStore(np.random.default_rng(seed))
        d = config.hidden
        store.embedding("item_nodes", item_kg.n_nodes, d)
        store.embedding("word_nodes", word_kg.n_nodes, d)
        # items missing from the graph start from a zero embedding
        for i in range(vocab.n_items):
            if not item_kg.has_edges(i):
                store["item_nodes"].data[i] = 0.0
        for layer in range(config.n_layers):
            for r in range(item_kg.n_relations):
                store.linear(f"rgcn{layer}.r{r}", d, d, bias=False)
            store.linear(f"rgcn{layer}.self", d, d, bias=False)
            store.linear(f"gcn{layer}", d, d, bias=False)
        for pool in ("item_pool", "word_pool"):
            store.linear(f"{pool}.m", d, d, bias=False)
            store.vector(f"{pool}.v", d, scale=1.0 / np.sqrt(d))
        store.linear("fuse", 2 * d, 1)
        store.vector("cold", d)
        self.store = store

    def parameters(self) -> dict[str, Tensor]:
        return self.store.parameters()

    # forward pieces -------------------------------------------------------
    def encode_graphs(self) -> tuple[Tensor, Tensor]:
        item_h = self.store["item_nodes"]
        word_h = self.store["word_nodes"]
        for layer in range(self.config.n_layers):
            rel_w = {r: self.store[f"rgcn{layer}.r{r}.w"]
                     for r in range(self.item_kg.n_relations)}
            item_h = rgcn_layer(item_h, self.item_edges, rel_w,
                                self.store[f"rgcn{layer}.self.w"])
            word_h = gcn_layer(word_h, self.word_norm_edges,
                               self.store[f"gcn{layer}.w"])
        return item_h, word_h

    def _pool(self, name: str, states: Tensor, node_ids: list[int]) -> Tensor:
        h = T.gather_rows(states, np.asarray(node_ids, dtype=np.intp))
        scores = T.matmul(T.tanh(T.matmul(h, self.store[f"{name}.m.w"])),
                          T.reshape(self.store[f"{name}.v"], (-1, 1)))
        alpha = T.softmax(T.reshape(scores, (1, -1)), axis=-1)
        return T.matmul(alpha, h)  # (1, D)

    def user_representation(self, item_nodes: list[int], word_nodes: list[int],
                            item_states: Tensor, word_states: Tensor) -> dict:
        """Gated fusion p_u = beta * v(x) + (1 - beta) * n(x); a learned
        cold-start vector stands in when nothing was mentioned."""
        d = self.config.hidden
        if not item_nodes and not word_nodes:
            p = T.reshape(self.store["cold"], (1, d))
            return {"p_u": p, "beta": None, "v": None, "n": None}
        zero = Tensor(np.zeros((1, d)))
        v = self._pool("word_pool", word_states, word_nodes) if word_nodes else zero
        n = self._pool("item_pool", item_states, item_nodes) if item_nodes else zero
        gate_in = T.concat([v, n], axis=1)
        beta = T.sigmoid(T.add(T.matmul(gate_in, self.store["fuse.w"]),
                               self.store["fuse.b"]))
        p_u = T.add(T.mul(beta, v), T.mul(1.0 - beta, n))
        return {"p_u": p_u, "beta": beta, "v": v, "n": n}

    def item_logits(self, p_u: Tensor, item_states: Tensor) -> Tensor:
        """Inner products against all catalog items: (B, n_items)."""
        emb = item_states[0:self.vocab.n_items]
        return T.matmul(p_u, T.swapaxes(emb, 0, 1))


def item_scores(p_u: Tensor, item_states: Tensor, n_items: int) -> np.ndarray:
    """Softmax item distribution for one user vector (eval path)."""
    logits = T.matmul(p_u, T.swapaxes(item_states[0:n_items], 0, 1))
    return T.softmax(logits, axis=-1).data[0]


class RecEvalSession:
    """Read-only scoring over frozen graph encodings."""

    def __init__(self, model: RecommenderModel):
        self.model = model
        with nn.no_grad():
            self.item_states, self.word_states = model.encode_graphs()

    def user_vector(self, history: list[Turn]) -> Tensor:
        items, words = mentioned_entities(history, self.model.vocab,
                                          self.model.item_kg, self.model.word_kg)
        with nn.no_grad():
            rep = self.model.user_representation(items, words,
                                                 self.item_states, self.word_states)
        return rep["p_u"]

    def item_probs(self, history: list[Turn]) -> np.ndarray:
        with nn.no_grad():
            p_u = self.user_vector(history)
            return item_scores(p_u, self.item_states, self.model.vocab.n_items)

    def item_logits(self, history: list[Turn]) -> np.ndarray:
        with nn.no_grad():
            p_u = self.user_vector(history)
            return self.model.item_logits(p_u, self.item_states).data[0]

    def topk(self, history: list[Turn], k: int) -> list[int]:
        return topk_items(self.item_probs(history), self.model.vocab, k)


def topk_items(probs: np.ndarray, vocab: Vocabulary, k: int) -> list[int]:
    """Top-k catalog ids, descending score, ties broken by ascending id."""
    if k > vocab.n_items:
        raise ValueError(f"k={k} exceeds item count {vocab.n_items}")
    order = np.lexsort((np.arange(len(probs)), -probs))
    return [vocab.item_ids[i] for i in order[:k]]


def build_rec_samples(corpus, item_kg: KnowledgeGraph, word_kg: KnowledgeGraph,
                      ) -> list[tuple[list[int], list[int], int]]:
    """(mentioned item nodes, mentioned word nodes, gold item index) per gold
    mention of every agent turn containing items."""
    vocab = corpus.vocab
    samples = []
    for dlg in corpus.dialogues:
        for ti, turn in enumerate(dlg.turns):
            if turn.speaker != "agent":
                continue
            golds = turn.item_mentions(vocab)
            if not golds:
                continue
            items, words = mentioned_entities(dlg.turns[:ti], vocab, item_kg, word_kg)
            for g in golds:
                samples.append((items, words, vocab.item_ids.index(g)))
    return samples


def train_recommender(corpus, item_kg: KnowledgeGraph, word_kg: KnowledgeGraph,
                      model_cfg: RecommenderConfig, train_cfg: RecTrainConfig,
                      ) -> RecommenderModel:
    """Cross-entropy training of the item distribution against gold items."""
    samples = build_rec_samples(corpus, item_kg, word_kg)
    if not samples:
        raise ValueError("corpus contains no recommendation turns")
    model = RecommenderModel(corpus.vocab, item_kg, word_kg, model_cfg,
                             seed=train_cfg.seed)
    params = model.parameters()
    opt = nn.Adam(params, lr=train_cfg.lr)
    rng = np.random.default_rng(train_cfg.seed)
    n = len(samples)
    for _ in range(train_cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, train_cfg.batch_size):
            batch = [samples[i] for i in order[start:start + train_cfg.batch_size]]
            tape = Tape()
            with nn.record(tape):
                item_states, word_states = model.encode_graphs()
                reps = [model.user_representation(it, wo, item_states, word_states)["p_u"]
                        for it, wo, _ in batch]
                p_u = T.concat(reps, axis=0)
                logits = model.item_logits(p_u, item_states)
                lp = T.log_softmax(logits, axis=-1)
                gold = np.array([g for _, _, g in batch])
                loss = T.neg(T.mean_(T.take_along_last(lp, gold)))
            opt.zero_grad()
            nn.backward(tape, loss, params=params.values())
            nn.clip_gradients(params, train_cfg.clip_norm)
            opt.step()
    return model
