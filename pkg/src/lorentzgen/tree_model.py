"""Autoregressive tree autoencoder on the hyperboloid, plus the composed
generation pipeline (autoencoder, latent adversarial model, sampler).

The encoder lifts a constant node feature, runs two graph-convolution
layers, and takes the centroid over all nodes.  The decoder rebuilds a
tree depth-first: at every step a transformed aggregate of the inward
messages is concatenated with the tree embedding and scored into a binary
expand/backtrack decision; messages along traversed edges are updated from
the current-state embedding concatenated with the neighbor aggregate.
Training is teacher forced; free decoding is deterministic argmax with
ties resolved toward backtracking, so any parameter setting yields a valid
tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from lorentzgen import autodiff as ad
from lorentzgen import layers as ly
from lorentzgen import wgan
from lorentzgen.autodiff import Tensor, backward, constant
from lorentzgen.geometry import Curvature, DEFAULT_CURVATURE
from lorentzgen.metrics import MetricsReport, evaluate_tree_sets
from lorentzgen.optim import RiemannianAdam, StepLR
from lorentzgen.trees import TreeGraph, canonical_form, dfs_actions, random_tree

BACKTRACK, EXPAND = 0, 1


class TreeEncoder:
    """Scalar node feature -> exp_o lift -> two GCN layers -> all-node centroid.

    The feature is the node degree (scaled into a moderate hyperbolic
    radius).  A constant feature would make the whole encoder blind: the
    linear layer maps equal inputs to one point and the scale-invariant
    centroid of copies of a point is that point, so every tree would embed
    identically.  Degree is the isomorphism-invariant scalar that breaks
    the collapse.
    """

    FEATURE_SCALE = 0.25

    def __init__(self, hidden_dim: int, curvature: Curvature = DEFAULT_CURVATURE, rng=None):
        rng = rng if rng is not None else np.random.default_rng()
        self.curvature = curvature
        self.gcn1 = ly.LorentzGCN(1, hidden_dim, curvature, rng=rng, name="encoder.gcn1")
        self.gcn2 = ly.LorentzGCN(hidden_dim, hidden_dim, curvature, rng=rng, name="encoder.gcn2")

    def named_parameters(self) -> list[Tensor]:
        return self.gcn1.named_parameters() + self.gcn2.named_parameters()

    def encode(self, tree: TreeGraph) -> Tensor:
        feats_raw = tree.degrees().astype(np.float64)[:, None] * self.FEATURE_SCALE
        feats = ly.e2h_rows(constant(feats_raw), self.curvature)
        nbrs = tree.neighbors()
        h = self.gcn1.forward(feats, nbrs)
        h = self.gcn2.forward(h, nbrs)
        return ly.lorentz_centroid_rows(h, None, self.curvature)


@dataclass
class DecodeStep:
    node: int
    p_backtrack: float
    p_expand: float
    truth: Optional[int]
    action: int


@dataclass
class DecodeTrace:
    steps: list[DecodeStep] = field(default_factory=list)
    truncated: bool = False


class TreeDecoder:
    """Depth-first constructor driven by a binary topological head.

    With ``validate_manifold`` set, every message and aggregate is checked
    against the hyperboloid invariant (used by tests and the selftest).
    """

    def __init__(
        self,
        hidden_dim: int,
        curvature: Curvature = DEFAULT_CURVATURE,
        rng=None,
        validate_manifold: bool = False,
    ):
        rng = rng if rng is not None else np.random.default_rng()
        d = hidden_dim
        self.curvature = curvature
        self.hidden_dim = d
        self.validate_manifold = validate_manifold
        self.msg_in = ly.LorentzLinear(d, d, curvature, rng=rng, name="decoder.msg_in")
        self.node_embed = ly.LorentzEmbedding(1, d, curvature, rng=rng, name="decoder.node_embed")
        # learned stand-in for an empty inward set (a leaf sending back to
        # its parent); distinct from the origin used to pad the root's
        # missing parent, otherwise first-child and leaf-return messages
        # coincide structurally and visit counts become invisible to the
        # scale-invariant centroid
        self.empty_embed = ly.LorentzEmbedding(1, d, curvature, rng=rng, name="decoder.empty_embed")
        self.msg_out = ly.LorentzLinear(2 * d, d, curvature, rng=rng, name="decoder.msg_out")
        self.topo_in = ly.LorentzLinear(d, d, curvature, rng=rng, name="decoder.topo_in")
        self.topo_comb = ly.LorentzLinear(2 * d, d, curvature, rng=rng, name="decoder.topo_comb")
        self.topo_head = ly.CentroidDistance(d, 2, curvature, rng=rng, name="decoder.topo_head")

    def named_parameters(self) -> list[Tensor]:
        return (
            self.msg_in.named_parameters()
            + self.node_embed.named_parameters()
            + self.empty_embed.named_parameters()
            + self.msg_out.named_parameters()
            + self.topo_in.named_parameters()
            + self.topo_comb.named_parameters()
            + self.topo_head.named_parameters()
        )

    def _origin_message(self) -> Tensor:
        return ly.origin_rows(1, self.hidden_dim, self.curvature)

    def _check(self, point: Tensor) -> Tensor:
        if self.validate_manifold:
            from lorentzgen import geometry as geo

            err = geo.manifold_error(point.data, self.curvature.k)
            scale = np.maximum(1.0, (point.data**2).sum(-1))
            if np.max(err / scale) > 1e-8:
                raise FloatingPointError(f"decoder intermediate left the manifold: {err.max():.3e}")
        return point

    def _aggregate(self, messages: list[Tensor], layer: ly.LorentzLinear) -> Tensor:
        stacked = messages[0] if len(messages) == 1 else ad.vstack(messages)
        return self._check(ly.lorentz_centroid_rows(layer.forward(stacked), None, self.curvature))

    def _topo_logits(self, inward: list[Tensor], z_tree: Tensor) -> Tensor:
        z_nei = self._aggregate(inward, self.topo_in)
        z_all = self.topo_comb.forward(ly.direct_concat_rows([z_nei, z_tree], self.curvature))
        return self.topo_head.forward(z_all)

    class _DecodeCache:
        """Subgraphs that are constant within one decode call; sharing the
        nodes lets gradient fan-out accumulate instead of rebuilding them
        at every step."""

        def __init__(self, decoder: "TreeDecoder"):
            self.origin = decoder._origin_message()
            self.z_cur = decoder.node_embed.forward(constant(np.ones((1, 1))))
            self.empty = decoder.empty_embed.forward(constant(np.ones((1, 1))))
            self.leaf_message: Optional[Tensor] = None

    def _edge_message(self, inward: list[Tensor], cache: "TreeDecoder._DecodeCache") -> Tensor:
        if not inward:
            if cache.leaf_message is None:
                cache.leaf_message = self._edge_message([cache.empty], cache)
            return cache.leaf_message
        z_nei = self._aggregate(inward, self.msg_in)
        return self._check(self.msg_out.forward(ly.direct_concat_rows([cache.z_cur, z_nei], self.curvature)))

    def teacher_decode(self, z_tree: Tensor, tree: TreeGraph) -> tuple[Tensor, np.ndarray, DecodeTrace]:
        """Replay the tree's construction sequence, collecting head logits.

        Returns the stacked (steps, 2) logits, the ground-truth decision
        labels, and the per-step trace.
        """
        actions = dfs_actions(tree)
        cache = self._DecodeCache(self)
        inward: dict[int, list[Tensor]] = {0: [cache.origin]}
        trace = DecodeTrace()
        logit_rows: list[Tensor] = []
        labels = np.empty(len(actions), dtype=np.intp)
        for i, (node, bit) in enumerate(actions):
            logits = self._topo_logits(inward[node], z_tree)
            logit_rows.append(logits)
            labels[i] = bit
            p = _softmax_pair(logits.data[0])
            trace.steps.append(DecodeStep(node, p[BACKTRACK], p[EXPAND], bit, bit))
            if bit == EXPAND:
                child = actions[i + 1][0]
                msg = self._edge_message(inward[node], cache)
                inward[child] = [msg]
            elif node != 0:
                msg = self._edge_message(inward[node][1:], cache)  # children only
                inward[tree.parent[node]].append(msg)
        return ad.vstack(logit_rows), labels, trace

    def free_decode(self, z_tree: Tensor, max_nodes: int) -> tuple[TreeGraph, DecodeTrace]:
        """Deterministic construction: expand while the head prefers it.

        Expansion past ``max_nodes`` is refused and flagged, so the output
        is always a valid tree of bounded size.
        """
        if max_nodes < 1:
            raise ValueError("max_nodes must be at least 1")
        cache = self._DecodeCache(self)
        parent = [-1]
        inward: dict[int, list[Tensor]] = {0: [cache.origin]}
        trace = DecodeTrace()
        cur = 0
        while True:
            logits = self._topo_logits(inward[cur], z_tree)
            p = _softmax_pair(logits.data[0])
            bit = EXPAND if p[EXPAND] > p[BACKTRACK] else BACKTRACK
            if bit == EXPAND and len(parent) >= max_nodes:
                bit = BACKTRACK
                trace.truncated = True
            trace.steps.append(DecodeStep(cur, p[BACKTRACK], p[EXPAND], None, bit))
            if bit == EXPAND:
                child = len(parent)
                parent.append(cur)
                inward[child] = [self._edge_message(inward[cur], cache)]
                cur = child
            else:
                if cur == 0:
                    break
                msg = self._edge_message(inward[cur][1:], cache)
                inward[parent[cur]].append(msg)
                cur = parent[cur]
        return TreeGraph(tuple(parent)), trace


def _softmax_pair(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


@dataclass
class AeConfig:
    hidden_dim: int = 32
    lr: float = 5e-3
    beta1: float = 0.0
    beta2: float = 0.999
    batch_size: int = 32
    epochs: int = 40
    lr_step: int = 20000
    lr_gamma: float = 0.5
    seed: int = 0


def tree_loss(encoder: TreeEncoder, decoder: TreeDecoder, tree: TreeGraph) -> Tensor:
    """Mean per-step cross-entropy of the teacher-forced decisions."""
    logits, labels, _ = decoder.teacher_decode(encoder.encode(tree), tree)
    return ad.cross_entropy_logits(logits, labels)


def ae_train(
    trees: list[TreeGraph],
    config: AeConfig,
    curvature: Curvature = DEFAULT_CURVATURE,
) -> tuple[TreeEncoder, TreeDecoder, list[float]]:
    """Teacher-forced training of the autoencoder; returns per-epoch losses."""
    rng = np.random.default_rng(config.seed)
    encoder = TreeEncoder(config.hidden_dim, curvature, rng)
    decoder = TreeDecoder(config.hidden_dim, curvature, rng)
    params = encoder.named_parameters() + decoder.named_parameters()
    opt = RiemannianAdam(
        params,
        lr=config.lr,
        betas=(config.beta1, config.beta2),
        scheduler=StepLR(config.lr_step, config.lr_gamma),
    )
    history: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(len(trees))
        epoch_losses = []
        for lo in range(0, len(trees), config.batch_size):
            batch = [trees[i] for i in order[lo : lo + config.batch_size]]
            opt.zero_grad()
            acc = None
            for tree in batch:
                term = tree_loss(encoder, decoder, tree)
                acc = term if acc is None else ad.add(acc, term)
            loss = ad.scale(acc, 1.0 / len(batch))
            backward(loss)
            opt.step()
            epoch_losses.append(float(loss.data))
        history.append(float(np.mean(epoch_losses)))
    return encoder, decoder, history


def teacher_accuracy(encoder: TreeEncoder, decoder: TreeDecoder, trees: list[TreeGraph]) -> float:
    """Fraction of correct teacher-forced decisions (ties read as backtrack)."""
    hits = 0
    total = 0
    for tree in trees:
        logits, labels, _ = decoder.teacher_decode(encoder.encode(tree), tree)
        pred = (logits.data[:, EXPAND] > logits.data[:, BACKTRACK]).astype(np.intp)
        hits += int((pred == labels).sum())
        total += labels.shape[0]
    return hits / total


@dataclass
class PipelineConfig:
    dataset_size: int = 500
    train_size: int = 400
    min_nodes: int = 20
    max_nodes: int = 50
    hidden_dim: int = 32
    latent_dim: int = 16
    ae_epochs: int = 40
    gan_epochs: int = 20
    gan_batch_size: int = 64
    sample_count: int = 100
    decode_cap: int = 100  # 2x the dataset maximum
    seed: int = 0

    def ae_config(self) -> AeConfig:
        return AeConfig(hidden_dim=self.hidden_dim, epochs=self.ae_epochs, seed=self.seed)

    def gan_config(self) -> wgan.GanConfig:
        return wgan.GanConfig(
            latent_dim=self.latent_dim,
            hidden_dim=self.hidden_dim,
            depth_gen=2,
            depth_critic=2,
            output_dim=self.hidden_dim,
            gp_weight=10.0,
            n_critic=5,
            lr=1e-4,
            beta1=0.0,
            beta2=0.9,
            batch_size=self.gan_batch_size,
            epochs=self.gan_epochs,
            seed=self.seed + 1,
            dropout=0.1,
            log_scale_init=1.0,  # embeddings sit beyond the unit reach of fresh layers
        )


def build_dataset(config: PipelineConfig, curvature: Curvature = DEFAULT_CURVATURE):
    """Canonicalized random trees, split deterministically by the seed."""
    rng = np.random.default_rng(config.seed)
    trees = [canonical_form(random_tree(rng, config.min_nodes, config.max_nodes)) for _ in range(config.dataset_size)]
    order = rng.permutation(config.dataset_size)
    train = [trees[i] for i in order[: config.train_size]]
    test = [trees[i] for i in order[config.train_size :]]
    return train, test


@dataclass
class PipelineResult:
    encoder: TreeEncoder
    decoder: TreeDecoder
    gan: wgan.GanModel
    train_trees: list[TreeGraph]
    test_trees: list[TreeGraph]
    sampled_trees: list[TreeGraph]
    report: MetricsReport
    ae_history: list[float]
    gan_history: wgan.TrainHistory
    train_accuracy: float
    test_accuracy: float


def embed_trees(encoder: TreeEncoder, trees: list[TreeGraph]) -> np.ndarray:
    return np.vstack([encoder.encode(t).data for t in trees])


def sample_trees(
    decoder: TreeDecoder,
    gan_model: wgan.GanModel,
    latent_dim: int,
    count: int,
    rng: np.random.Generator,
    decode_cap: int,
) -> list[TreeGraph]:
    latents = wgan.generate_points(gan_model, count, rng, latent_dim)
    return [decoder.free_decode(constant(latents[i : i + 1]), decode_cap)[0] for i in range(count)]


def run_pipeline(
    config: PipelineConfig,
    curvature: Curvature = DEFAULT_CURVATURE,
    ae_config: Optional[AeConfig] = None,
    gan_epoch_callback=None,
) -> PipelineResult:
    """Autoencoder training, latent adversarial training, sampling, metrics."""
    train, test = build_dataset(config, curvature)
    encoder, decoder, ae_history = ae_train(train, ae_config or config.ae_config(), curvature)
    embeddings = embed_trees(encoder, train)
    gan_model, gan_history = wgan.train_gan(
        config.gan_config(), embeddings, curvature, epoch_callback=gan_epoch_callback
    )
    sample_rng = np.random.default_rng(config.seed + 2)
    sampled = sample_trees(decoder, gan_model, config.latent_dim, config.sample_count, sample_rng, config.decode_cap)
    report = evaluate_tree_sets(sampled, test)
    return PipelineResult(
        encoder=encoder,
        decoder=decoder,
        gan=gan_model,
        train_trees=train,
        test_trees=test,
        sampled_trees=sampled,
        report=report,
        ae_history=ae_history,
        gan_history=gan_history,
        train_accuracy=teacher_accuracy(encoder, decoder, train),
        test_accuracy=teacher_accuracy(encoder, decoder, test),
    )
