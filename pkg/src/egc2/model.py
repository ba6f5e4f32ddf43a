"""Hierarchical-pooling graph classifier with a feature-graph read-out.

The network stacks L pooling architectures. Each architecture runs a
K-step normalized graph convolution, learns a soft cluster assignment
that coarsens the graph, and reads the pooled representation out into a
level embedding. In ``feature`` read-out mode the columns of the pooled
representation become nodes of a similarity-thresholded feature graph,
which a small GNN aggregates into the embedding; ``mean`` and ``max``
modes are the conventional column-pooling baselines. Level embeddings
are concatenated and classified by a two-layer MLP with softmax.

All graphs are zero-padded to a fixed node count. No GNN layer carries a
bias, so padded rows stay exactly zero through every propagation step;
only the MLP head has biases.
"""

from __future__ import annotations

import logging
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from egc2 import autodiff as ad
from egc2.autodiff import OptimizerState, Tensor, adam_step, backward, glorot_uniform
from egc2.graphs import Graph, GraphDataset
from egc2.reports import ExperimentReport

log = logging.getLogger(__name__)

HIDDEN_DIM_CHOICES = (32, 64, 128, 256, 512)
READOUT_MODES = ("feature", "mean", "max")


class TrainingDiverged(RuntimeError):
    pass


def derive_seed(master: int, *parts) -> int:
    """Deterministic child seed from a master seed and a label path."""
    entropy = [int(master) & 0xFFFFFFFF]
    for part in parts:
        if isinstance(part, str):
            entropy.append(zlib.crc32(part.encode()))
        else:
            entropy.append(int(part) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


@dataclass(frozen=True)
class ModelConfig:
    n0: int
    feature_dim: int
    num_classes: int
    num_levels: int = 3
    num_steps: int = 3
    hidden_dim: int = 64
    assign_ratio: float = 0.25
    feature_edge_ratio: float = 0.25
    learning_rate: float = 0.001
    max_epochs: int = 1000
    patience: int = 100
    readout_mode: str = "feature"
    batch_size: int = 32
    mlp_hidden: int = 64
    readout_hidden: int = 16
    seed: int = 0

    def __post_init__(self):
        if not 0.1 <= self.assign_ratio <= 0.9:
            raise ValueError(f"assign_ratio {self.assign_ratio} outside [0.1, 0.9]")
        if not 0.05 <= self.feature_edge_ratio <= 0.75:
            raise ValueError(
                f"feature_edge_ratio {self.feature_edge_ratio} outside [0.05, 0.75]")
        if self.hidden_dim not in HIDDEN_DIM_CHOICES:
            raise ValueError(f"hidden_dim must be one of {HIDDEN_DIM_CHOICES}")
        if self.readout_mode not in READOUT_MODES:
            raise ValueError(f"readout_mode must be one of {READOUT_MODES}")
        if self.n0 < 1:
            raise ValueError("n0 must be positive")

    @property
    def pool_sizes(self) -> list[int]:
        """Node counts after each pooling level: n_{l+1} = max(1, floor(n_l r))."""
        sizes, n = [], self.n0
        for _ in range(self.num_levels):
            n = max(1, int(np.floor(n * self.assign_ratio)))
            sizes.append(n)
        return sizes

    @classmethod
    def for_dataset(cls, dataset: GraphDataset, **overrides) -> "ModelConfig":
        return cls(n0=dataset.max_nodes(), feature_dim=dataset.feature_dim,
                   num_classes=dataset.num_classes, **overrides)

    def with_overrides(self, **overrides) -> "ModelConfig":
        return replace(self, **overrides)


def normalize_adjacency(a):
    """Symmetric degree normalization of A with self-loops added.

    Accepts a Tensor (recorded, differentiable) or a plain array and
    returns the same flavor. Rows that are all zero reduce to a pure
    self-loop of weight one, so padded nodes stay inert downstream.
    """
    if not isinstance(a, Tensor):
        return _normalize_adjacency_t(Tensor(a)).data
    return _normalize_adjacency_t(a)


def _normalize_adjacency_t(a: Tensor) -> Tensor:
    n = a.shape[-1]
    a_tilde = ad.add_bias(a, Tensor(np.eye(n)))
    degrees = ad.matmul(a_tilde, Tensor(np.ones((n, 1))))
    inv_root = ad.rsqrt(degrees)
    scale = ad.matmul(inv_root, ad.transpose(inv_root))
    return ad.hadamard(a_tilde, scale)


def gnn_block(a_hat: Tensor, h: Tensor, weights, activate_last: bool = True) -> Tensor:
    """K stacked propagation steps: h <- relu(a_hat @ h @ W_k).

    ``activate_last=False`` leaves the final step linear; the read-out
    head needs this because a rectified width-1 output can initialize
    dead with no gradient path to recover.
    """
    for position, w in enumerate(weights):
        h = ad.matmul(ad.matmul(a_hat, h), w)
        if activate_last or position < len(weights) - 1:
            h = ad.relu(h)
    return h


def diffpool_layer(a: Tensor, h: Tensor, pool_weights):
    """Soft cluster assignment and coarsening.

    Returns (pooled adjacency, pooled representation, assignment). The
    pooled adjacency is real-valued and reused as-is by the next level's
    normalization.
    """
    a_hat = _normalize_adjacency_t(a)
    assignment = ad.row_softmax(gnn_block(a_hat, h, pool_weights))
    assignment_t = ad.transpose(assignment)
    h_pool = ad.matmul(assignment_t, h)
    a_pool = ad.matmul(ad.matmul(assignment_t, a), assignment)
    return a_pool, h_pool, assignment


def feature_graph_edges(feature_rows: np.ndarray, ratio: float) -> np.ndarray:
    """Binary feature-graph adjacency from pairwise cosine similarity.

    The top floor(ratio * d * d) off-diagonal positions are selected by
    descending similarity (ties by ascending (row, col)) and then
    OR-symmetrized. Zero rows have similarity 0 to everything.
    """
    d = feature_rows.shape[0]
    norms = np.linalg.norm(feature_rows, axis=1)
    denom = np.outer(norms, norms)
    sim = np.zeros((d, d))
    np.divide(feature_rows @ feature_rows.T, denom, out=sim, where=denom > 0)

    rows, cols = np.nonzero(~np.eye(d, dtype=bool))
    budget = min(int(np.floor(ratio * d * d)), len(rows))
    order = np.lexsort((cols, rows, -sim[rows, cols]))[:budget]
    out = np.zeros((d, d))
    out[rows[order], cols[order]] = 1.0
    return np.maximum(out, out.T)


def feature_readout(h_pool: Tensor, ratio: float, readout_weights):
    """Aggregate pooled features through the feature graph into (d, 1).

    The feature-node inputs are the transposed pooled representation;
    the feature-graph topology is recomputed from current values and
    treated as a constant (it is piecewise constant in the inputs).
    """
    x_f = ad.transpose(h_pool)
    data = x_f.data if x_f.data.ndim == 3 else x_f.data[None]
    a_f = np.stack([feature_graph_edges(item, ratio) for item in data])
    if x_f.data.ndim == 2:
        a_f = a_f[0]
    a_f_hat = Tensor(normalize_adjacency(a_f))
    z = gnn_block(a_f_hat, x_f, readout_weights, activate_last=False)
    return z, a_f, x_f.data


@dataclass
class LevelTrace:
    pooled_adjacency: np.ndarray
    representation: np.ndarray
    assignment: np.ndarray
    feature_adjacency: np.ndarray | None
    feature_features: np.ndarray | None
    embedding: np.ndarray


@dataclass
class ForwardTrace:
    levels: list[LevelTrace]
    embedding: np.ndarray
    probabilities: np.ndarray


@dataclass
class _Level:
    conv: list[Tensor] = field(default_factory=list)
    pool: list[Tensor] = field(default_factory=list)
    readout: list[Tensor] = field(default_factory=list)


class EgcModel:
    """All trainable parameters of the L-level pooling network."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.trained = False
        self.training_log: list[dict] = []
        rng = np.random.default_rng(config.seed)
        d = config.hidden_dim
        self.levels: list[_Level] = []
        in_dim = config.feature_dim
        for l in range(config.num_levels):
            level = _Level()
            widths = [in_dim] + [d] * config.num_steps
            level.conv = [glorot_uniform(rng, widths[k], widths[k + 1])
                          for k in range(config.num_steps)]
            # the pool block consumes the conv embedding, so its input is d
            pool_widths = [d] * config.num_steps + [config.pool_sizes[l]]
            level.pool = [glorot_uniform(rng, pool_widths[k], pool_widths[k + 1])
                          for k in range(config.num_steps)]
            if config.readout_mode == "feature":
                r_widths = ([config.pool_sizes[l]]
                            + [config.readout_hidden] * (config.num_steps - 1)
                            + [1])
                level.readout = [
                    glorot_uniform(rng, r_widths[k], r_widths[k + 1])
                    for k in range(config.num_steps)]
            self.levels.append(level)
            in_dim = d
        z_dim = config.num_levels * d
        self.mlp_w1 = glorot_uniform(rng, z_dim, config.mlp_hidden)
        self.mlp_b1 = Tensor(np.zeros((1, config.mlp_hidden)), requires_grad=True)
        self.mlp_w2 = glorot_uniform(rng, config.mlp_hidden, config.num_classes)
        self.mlp_b2 = Tensor(np.zeros((1, config.num_classes)), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        params = []
        for level in self.levels:
            params.extend(level.conv)
            params.extend(level.pool)
            params.extend(level.readout)
        params.extend([self.mlp_w1, self.mlp_b1, self.mlp_w2, self.mlp_b2])
        return params

    # -- forward passes ------------------------------------------------

    def _stack(self, graphs) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        a = np.zeros((len(graphs), cfg.n0, cfg.n0))
        x = np.zeros((len(graphs), cfg.n0, cfg.feature_dim))
        for b, g in enumerate(graphs):
            if g.n > cfg.n0:
                raise ValueError(
                    f"graph {g.id} has {g.n} nodes, exceeds padding {cfg.n0}")
            if g.features.shape[1] != cfg.feature_dim:
                raise ValueError(
                    f"graph {g.id} feature dim {g.features.shape[1]} != "
                    f"{cfg.feature_dim}")
            a[b, :g.n, :g.n] = g.adjacency
            x[b, :g.n, :] = g.features
        return a, x

    def _level_embedding(self, h_pool: Tensor, level: _Level):
        cfg = self.config
        if cfg.readout_mode == "feature":
            z, a_f, x_f = feature_readout(
                h_pool, cfg.feature_edge_ratio, level.readout)
            return z, a_f, x_f
        if cfg.readout_mode == "mean":
            n_rows = h_pool.shape[-2]
            pooled = ad.matmul(Tensor(np.full((1, n_rows), 1.0 / n_rows)),
                               h_pool)
        else:  # max
            pooled = ad.col_max(h_pool)
        return ad.transpose(pooled), None, None

    def _forward_tensors(self, graphs, requires_adj_grad=False,
                         adjacency_override: np.ndarray | None = None):
        """Run the recorded forward pass over a stacked batch of graphs."""
        a_np, x_np = self._stack(graphs)
        if adjacency_override is not None:
            a_np = adjacency_override
        a = Tensor(a_np, requires_grad=requires_adj_grad)
        h = Tensor(x_np)

        levels = []
        embeddings = []
        a_cur = a
        for level in self.levels:
            a_hat = _normalize_adjacency_t(a_cur)
            h_emb = gnn_block(a_hat, h, level.conv)
            a_next, h_pool, assignment = diffpool_layer(a_cur, h_emb, level.pool)
            z, a_f, x_f = self._level_embedding(h_pool, level)
            embeddings.append(z)
            levels.append((a_next, h_emb, assignment, a_f, x_f, z))
            a_cur, h = a_next, h_pool

        z_all = ad.transpose(ad.concat_rows(*embeddings))
        hidden = ad.relu(ad.add_bias(ad.matmul(z_all, self.mlp_w1), self.mlp_b1))
        logits = ad.add_bias(ad.matmul(hidden, self.mlp_w2), self.mlp_b2)
        probs = ad.row_softmax(logits)
        return {"adjacency": a, "probs": probs, "levels": levels,
                "z_all": z_all}

    def forward(self, graph: Graph) -> ForwardTrace:
        """Single-graph forward pass with all intermediates materialized."""
        with ad.no_grad():
            out = self._forward_tensors([graph])
        levels = []
        for a_next, h_emb, assignment, a_f, x_f, z in out["levels"]:
            levels.append(LevelTrace(
                pooled_adjacency=a_next.data[0],
                representation=h_emb.data[0],
                assignment=assignment.data[0],
                feature_adjacency=None if a_f is None else a_f[0],
                feature_features=None if x_f is None else x_f[0],
                embedding=z.data[0, :, 0],
            ))
        return ForwardTrace(
            levels=levels,
            embedding=out["z_all"].data[0, 0],
            probabilities=out["probs"].data[0, 0],
        )

    def predict_proba(self, graphs) -> np.ndarray:
        cfg = self.config
        out = np.zeros((len(graphs), cfg.num_classes))
        step = max(1, cfg.batch_size)
        with ad.no_grad():
            for start in range(0, len(graphs), step):
                chunk = graphs[start:start + step]
                probs = self._forward_tensors(chunk)["probs"]
                out[start:start + len(chunk)] = probs.data[:, 0, :]
        return out

    def predict(self, graphs) -> np.ndarray:
        return self.predict_proba(graphs).argmax(axis=1)

    def accuracy(self, graphs) -> float:
        preds = self.predict(graphs)
        labels = np.array([g.label for g in graphs])
        return float((preds == labels).mean())

    def loss_gradient(self, graph: Graph,
                      adjacency_override: np.ndarray | None = None):
        """Loss, d(loss)/dA over the padded matrix, and class probabilities.

        The gradient is taken on the raw adjacency, differentiated through
        the normalization, with the true label's cross-entropy as loss.
        """
        override = None
        if adjacency_override is not None:
            override = np.zeros((1, self.config.n0, self.config.n0))
            n = adjacency_override.shape[0]
            override[0, :n, :n] = adjacency_override
        out = self._forward_tensors([graph], requires_adj_grad=True,
                                    adjacency_override=override)
        loss = ad.cross_entropy(out["probs"], [graph.label])
        grads = backward(loss, leaves=[out["adjacency"]])
        return (float(loss.data[0, 0]), grads[out["adjacency"]][0],
                out["probs"].data[0, 0])

    # -- checkpointing -------------------------------------------------

    def save(self, path) -> None:
        import json

        arrays = {f"p{k}": p.data for k, p in enumerate(self.parameters())}
        meta = dict(self.config.__dict__)
        header = np.frombuffer(json.dumps(
            {"config": meta, "trained": self.trained,
             "version": 1}).encode(), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=header, **arrays)

    @classmethod
    def load(cls, path) -> "EgcModel":
        import json

        with np.load(path) as payload:
            meta = json.loads(bytes(payload["__meta__"].tobytes()).decode())
            model = cls(ModelConfig(**meta["config"]))
            params = model.parameters()
            for k, p in enumerate(params):
                p.data = payload[f"p{k}"]
            model.trained = meta["trained"]
        return model


def train(train_graphs, val_graphs, config: ModelConfig) -> EgcModel:
    """Adam training with early stopping on validation loss.

    Returns the model restored to its best-validation-loss epoch.
    ``model.training_log`` records per-epoch train loss, validation loss,
    validation accuracy, and wall time.
    """
    if not train_graphs or not val_graphs:
        raise ValueError("train and validation sets must be non-empty")
    model = EgcModel(config)
    params = model.parameters()
    state = OptimizerState(params, config.learning_rate)
    shuffle_rng = np.random.default_rng(derive_seed(config.seed, "shuffle"))
    val_labels = [g.label for g in val_graphs]

    best_val = np.inf
    best_params = [p.data.copy() for p in params]
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        order = shuffle_rng.permutation(len(train_graphs))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [train_graphs[k] for k in order[start:start + config.batch_size]]
            out = model._forward_tensors(batch)
            loss = ad.cross_entropy(out["probs"], [g.label for g in batch])
            value = float(loss.data[0, 0])
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite training loss at epoch {epoch}")
            epoch_loss += value
            adam_step(params, backward(loss), state)

        with ad.no_grad():
            val_out = model._forward_tensors(val_graphs)
            val_loss = float(ad.cross_entropy(
                val_out["probs"], val_labels).data[0, 0]) / len(val_graphs)
            val_acc = float((val_out["probs"].data[:, 0, :].argmax(axis=1)
                             == np.array(val_labels)).mean())

        model.training_log.append({
            "epoch": epoch,
            "train_loss": epoch_loss / len(train_graphs),
            "val_loss": val_loss,
            "val_accuracy": val_acc,
            "seconds": time.perf_counter() - started,
        })
        if val_loss < best_val:
            best_val = val_loss
            best_params = [p.data.copy() for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    for p, data in zip(params, best_params):
        p.data = data
    model.trained = True
    return model


def stratified_folds(labels, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded stratified split; falls back to unstratified below 1/class."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(derive_seed(seed, "folds"))
    counts = np.bincount(labels)
    buckets: list[list[int]] = [[] for _ in range(folds)]
    if counts.min() < folds:
        log.warning("a class has fewer than %d graphs; "
                    "falling back to unstratified folds", folds)
        order = rng.permutation(len(labels))
        for pos, idx in enumerate(order):
            buckets[pos % folds].append(int(idx))
    else:
        # deal classes round-robin with a shared cursor so fold sizes
        # differ by at most one overall
        cursor = 0
        for cls in range(len(counts)):
            members = np.nonzero(labels == cls)[0]
            members = members[rng.permutation(len(members))]
            for idx in members:
                buckets[cursor % folds].append(int(idx))
                cursor += 1
    return [np.array(sorted(b), dtype=int) for b in buckets]


def cross_validate(dataset: GraphDataset, config: ModelConfig,
                   folds: int = 10) -> ExperimentReport:
    """Stratified k-fold evaluation: test fold i, validation fold i+1,
    train on the rest. Per-fold seeds derive from the config seed."""
    if folds < 3:
        raise ValueError("cross-validation needs at least 3 folds "
                         "(test, validation, and training data)")
    fold_indices = stratified_folds(dataset.labels(), folds, config.seed)
    accuracies = []
    per_fold = []
    for i in range(folds):
        test_idx = fold_indices[i]
        val_idx = fold_indices[(i + 1) % folds]
        train_idx = np.concatenate(
            [fold_indices[j] for j in range(folds) if j not in (i, (i + 1) % folds)])
        fold_config = config.with_overrides(
            seed=derive_seed(config.seed, "fold", i))
        model = train([dataset.graphs[k] for k in train_idx],
                      [dataset.graphs[k] for k in val_idx], fold_config)
        acc = model.accuracy([dataset.graphs[k] for k in test_idx])
        accuracies.append(acc)
        per_fold.append({
            "fold": i,
            "test_accuracy": acc,
            "epochs": len(model.training_log),
            "seconds": sum(e["seconds"] for e in model.training_log),
            "test_size": int(len(test_idx)),
        })
        log.info("fold %d/%d: accuracy %.4f (%d epochs)",
                 i + 1, folds, acc, len(model.training_log))

    return ExperimentReport(
        kind="cross_validation",
        config={"model": dict(config.__dict__), "folds": folds,
                "dataset": dataset.name, "numpy": np.__version__},
        metrics={
            "fold_accuracies": accuracies,
            "mean_accuracy": float(np.mean(accuracies)),
            "std_accuracy": float(np.std(accuracies)),
        },
        per_fold=per_fold,
    )
