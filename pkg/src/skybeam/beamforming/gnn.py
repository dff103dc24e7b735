"""Topology-aware GNN beamformer with per-cluster normalization.

Each user cluster is one heterogeneous graph: user nodes carry the real and
imaginary parts of their channel vector, a single hub node represents the
serving UAV. Message passing alternates typed MLPs: users aggregate the
hub's message plus an elementwise leave-one-out max over the other users'
messages (the dominant-interferer cue); the hub aggregates the mean user
message. A readout MLP emits the beam weights, which are scaled onto the
transmit-power ball by a smooth projection.

Training is unsupervised: the loss is the negative mean per-cluster sum
rate, differentiated end to end through the SINR expression and the
projection. Clusters from many scenario snapshots are flattened into one
batch and processed in parallel, grouped by cluster size.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ..nn import autodiff as ad
from ..nn.autodiff import Tensor
from ..nn.checkpoint import load_params, save_params
from ..nn.layers import Mlp, make_mlp
from ..nn.optim import Adam
from ..radio import ClusterSnapshot
from ..validation import ValidationError, check_csi_matrix

__all__ = [
    "GnnBeamformer",
    "GnnParams",
    "GraphBatch",
    "GraphGroup",
    "build_features",
    "build_graph_batch",
    "gnn_forward_groups",
    "batch_mean_rate",
    "gnn_loss",
    "table_i_preset",
]


def table_i_preset() -> dict:
    """Full-scale hyperparameters (embedding width 128); desk runs default to 32."""
    return {"embed_dim": 128, "rounds": 3, "learning_rate": 1e-3,
            "weight_decay": 1e-6, "epochs": 25}


def build_features(csi: np.ndarray) -> np.ndarray:
    """Node features: row k is [Re(h_k); Im(h_k)], nothing else.

    Using only observable CSI (no positions or angles) is what lets one
    trained model transfer across geometries and cluster sizes.
    """
    csi = check_csi_matrix(csi)
    return np.concatenate([csi.real, csi.imag], axis=1)


@dataclass
class GraphGroup:
    """All clusters of one size, stacked for dense batching."""

    size: int
    feats: np.ndarray              # [n_clusters, size, 2L]
    order: np.ndarray              # positions of these clusters in the input list


@dataclass
class GraphBatch:
    groups: list[GraphGroup]
    n_clusters: int
    n_antennas: int


def build_graph_batch(csi_list, dtype=np.float64) -> GraphBatch:
    """Group clusters by size so each group runs as one dense 3-d pass."""
    if not csi_list:
        raise ValidationError("empty cluster batch")
    mats = []
    for item in csi_list:
        csi = item.csi if isinstance(item, ClusterSnapshot) else item
        mats.append(check_csi_matrix(csi))
    n_antennas = mats[0].shape[1]
    by_size: dict[int, list[int]] = {}
    for i, m in enumerate(mats):
        if m.shape[1] != n_antennas:
            raise ValidationError("all clusters must share the antenna count")
        by_size.setdefault(m.shape[0], []).append(i)
    groups = []
    for size in sorted(by_size):
        idx = by_size[size]
        feats = np.stack([build_features(mats[i]) for i in idx]).astype(dtype)
        groups.append(GraphGroup(size=size, feats=feats, order=np.asarray(idx, dtype=np.int64)))
    return GraphBatch(groups=groups, n_clusters=len(mats), n_antennas=n_antennas)


@dataclass
class GnnParams:
    """Typed MLP blocks of the beamformer; message/update blocks per round."""

    enc: Mlp
    uav_init: Mlp
    msg_user: list
    msg_uav: list
    upd_user: list
    upd_uav: list
    out: Mlp
    rounds: int
    embed_dim: int
    n_antennas: int
    share_round_params: bool = False

    def _round(self, blocks, ell: int):
        return blocks[0] if self.share_round_params else blocks[ell]

    def named_params(self):
        yield from self.enc.named_params("enc")
        yield from self.uav_init.named_params("uav_init")
        n = 1 if self.share_round_params else self.rounds
        for ell in range(n):
            yield from self.msg_user[ell].named_params(f"msg_user.{ell}")
            yield from self.msg_uav[ell].named_params(f"msg_uav.{ell}")
            yield from self.upd_user[ell].named_params(f"upd_user.{ell}")
            yield from self.upd_uav[ell].named_params(f"upd_uav.{ell}")
        yield from self.out.named_params("out")

    def param_dict(self) -> dict[str, Tensor]:
        return dict(self.named_params())

    def data_view(self) -> "GnnParams":
        """Mirror with raw arrays instead of tensors, for tape-free inference."""

        def strip(mlp: Mlp) -> Mlp:
            layers = []
            for lyr in mlp.layers:
                c = type(lyr)(weight=lyr.weight.data, bias=lyr.bias.data,
                              norm_gamma=None if lyr.norm_gamma is None else lyr.norm_gamma.data,
                              norm_beta=None if lyr.norm_beta is None else lyr.norm_beta.data,
                              has_norm=lyr.has_norm, activation=lyr.activation)
                layers.append(c)
            return Mlp(layers=layers, norm_eps=mlp.norm_eps)

        return GnnParams(
            enc=strip(self.enc), uav_init=strip(self.uav_init),
            msg_user=[strip(m) for m in self.msg_user],
            msg_uav=[strip(m) for m in self.msg_uav],
            upd_user=[strip(m) for m in self.upd_user],
            upd_uav=[strip(m) for m in self.upd_uav],
            out=strip(self.out), rounds=self.rounds, embed_dim=self.embed_dim,
            n_antennas=self.n_antennas, share_round_params=self.share_round_params)


def init_gnn_params(rng: np.random.Generator, n_antennas: int, embed_dim: int, rounds: int,
                    share_round_params: bool = False, norm_uav_mlps: bool = False,
                    norm_eps: float = 1e-5, dtype=np.float64) -> GnnParams:
    """Xavier-uniform blocks. User-side MLPs normalize over the cluster's
    user nodes; hub-side MLPs skip normalization by default because a
    one-node graph would collapse to the affine shift."""
    d = embed_dim
    two_l = 2 * n_antennas

    def user_mlp(d_in, d_out):
        return make_mlp(rng, [d_in, d, d_out], norm=True, norm_eps=norm_eps, dtype=dtype)

    def uav_mlp(d_in, d_out):
        return make_mlp(rng, [d_in, d, d_out], norm=norm_uav_mlps, norm_eps=norm_eps, dtype=dtype)

    n_rounds = 1 if share_round_params else rounds
    return GnnParams(
        enc=user_mlp(two_l, d),
        uav_init=uav_mlp(d, d),
        msg_user=[user_mlp(d, d) for _ in range(n_rounds)],
        msg_uav=[uav_mlp(d, d) for _ in range(n_rounds)],
        upd_user=[user_mlp(3 * d, d) for _ in range(n_rounds)],
        upd_uav=[uav_mlp(2 * d, d) for _ in range(n_rounds)],
        out=user_mlp(d, two_l),
        rounds=rounds, embed_dim=d, n_antennas=n_antennas,
        share_round_params=share_round_params)


def _forward_group(params: GnnParams, feats, p_max: float, proj_eps: float):
    """One dense pass over a [clusters, size, 2L] stack.

    Returns (w_raw, w) where w = alpha * w_raw after the smooth power
    projection alpha = min(1, sqrt(p_max / (power + eps))).
    """
    g, k, _ = ad.as_array(feats).shape
    u = params.enc(feats)                                   # [G,K,d]
    a = params.uav_init(ad.tensor_mean(u, axis=1))          # [G,d]
    for ell in range(params.rounds):
        m_u = params._round(params.msg_user, ell)(u)        # [G,K,d]
        m_a = params._round(params.msg_uav, ell)(a)         # [G,d]
        hub = ad.broadcast_to(ad.reshape(m_a, (g, 1, -1)), ad.as_array(m_u).shape)
        agg_u = ad.concatenate([hub, ad.loo_max(m_u)], axis=-1)          # [G,K,2d]
        agg_a = ad.tensor_mean(m_u, axis=1)                              # [G,d]
        u = params._round(params.upd_user, ell)(ad.concatenate([u, agg_u], axis=-1))
        a = params._round(params.upd_uav, ell)(ad.concatenate([a, agg_a], axis=-1))
    w_raw = params.out(u)                                   # [G,K,2L]
    power = ad.tensor_sum(ad.mul(w_raw, w_raw), axis=(1, 2), keepdims=True)
    alpha = ad.minimum(1.0, ad.sqrt(ad.div(p_max, ad.add(power, proj_eps))))
    return w_raw, ad.mul(alpha, w_raw)


def gnn_forward_groups(params: GnnParams, batch: GraphBatch, p_max: float, proj_eps: float):
    """Per-group forward results, list aligned with ``batch.groups``."""
    return [_forward_group(params, grp.feats, p_max, proj_eps) for grp in batch.groups]


def _group_rates(feats, w, noise_power: float, n_antennas: int):
    """Differentiable per-cluster sum rates for one group: [G]."""
    l = n_antennas
    hr, hi = feats[..., :l], feats[..., l:]
    wr, wi = w[..., :l], w[..., l:]
    wr_t, wi_t = ad.swapaxes(wr, -1, -2), ad.swapaxes(wi, -1, -2)
    # gains[k, j] = h_k^H w_j (h conjugated)
    re_g = ad.add(ad.matmul(hr, wr_t), ad.matmul(hi, wi_t))
    im_g = ad.sub(ad.matmul(hr, wi_t), ad.matmul(hi, wr_t))
    p = ad.add(ad.mul(re_g, re_g), ad.mul(im_g, im_g))      # [G,K,K]
    signal = ad.diagonal(p)                                  # [G,K]
    interference = ad.sub(ad.tensor_sum(p, axis=-1), signal)
    sinr = ad.div(signal, ad.add(interference, noise_power))
    rates = ad.log2(ad.add(1.0, sinr))
    return ad.tensor_sum(rates, axis=-1)


def batch_mean_rate(params: GnnParams, batch: GraphBatch, noise_power: float,
                    p_max: float, proj_eps: float):
    """Mean per-cluster sum rate over the whole batch (Tensor when training)."""
    total = None
    for grp, (_, w) in zip(batch.groups, gnn_forward_groups(params, batch, p_max, proj_eps)):
        s = ad.tensor_sum(_group_rates(grp.feats, w, noise_power, batch.n_antennas))
        total = s if total is None else ad.add(total, s)
    return ad.div(total, float(batch.n_clusters))


def gnn_loss(params: GnnParams, batch: GraphBatch, noise_power: float,
             p_max: float, proj_eps: float):
    """Negative mean cluster sum rate, the unsupervised training objective."""
    return ad.neg(batch_mean_rate(params, batch, noise_power, p_max, proj_eps))


def _pairs_to_complex(w_pairs: np.ndarray, n_antennas: int) -> np.ndarray:
    return w_pairs[..., :n_antennas] + 1j * w_pairs[..., n_antennas:]


class GnnBeamformer(BaseEstimator):
    """Scikit-learn style estimator: fit on channel snapshots, predict beams.

    Parameters
    ----------
    embed_dim, rounds : network width and number of message-passing rounds.
    p_max_w, noise_w : transmit power budget and noise power, linear watts.
    projection_eps : stabilizer inside the power projection.
    learning_rate, weight_decay, epochs, batch_size : Adam training schedule
        (batch size counts snapshots; their clusters are flattened).
    val_fraction : held-out share of snapshots for the per-epoch metric.
    share_round_params : reuse one set of message/update MLPs across rounds.
    norm_uav_mlps : also normalize the single-node hub MLPs (off by default).
    dtype : "float64" (default, used by all verification) or "float32".
    seed : initialization and shuffling seed; fixed seed gives bit-identical
        training trajectories.
    """

    def __init__(self, embed_dim: int = 32, rounds: int = 3, p_max_w: float = 1.0,
                 noise_w: float = 1e-12, projection_eps: float = 1e-12,
                 learning_rate: float = 1e-3, weight_decay: float = 1e-6,
                 epochs: int = 25, batch_size: int = 64, val_fraction: float = 0.1,
                 norm_eps: float = 1e-5, share_round_params: bool = False,
                 norm_uav_mlps: bool = False, dtype: str = "float64", seed: int = 0):
        self.embed_dim = embed_dim
        self.rounds = rounds
        self.p_max_w = p_max_w
        self.noise_w = noise_w
        self.projection_eps = projection_eps
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.val_fraction = val_fraction
        self.norm_eps = norm_eps
        self.share_round_params = share_round_params
        self.norm_uav_mlps = norm_uav_mlps
        self.dtype = dtype
        self.seed = seed

    # -- internals ------------------------------------------------------
    def _np_dtype(self):
        if self.dtype == "float64":
            return np.float64
        if self.dtype == "float32":
            return np.float32
        raise ValidationError(f"dtype must be float64 or float32, got {self.dtype!r}")

    def _init_params(self, n_antennas: int, rng: np.random.Generator) -> None:
        self.params_ = init_gnn_params(
            rng, n_antennas=n_antennas, embed_dim=self.embed_dim, rounds=self.rounds,
            share_round_params=self.share_round_params, norm_uav_mlps=self.norm_uav_mlps,
            norm_eps=self.norm_eps, dtype=self._np_dtype())
        self.n_antennas_ = n_antennas

    @staticmethod
    def _as_snapshot_list(X) -> list[list[np.ndarray]]:
        """Normalize input to a list of snapshots, each a list of csi matrices."""
        if hasattr(X, "cluster_lists"):
            return X.cluster_lists()
        snapshots = []
        for item in X:
            if isinstance(item, ClusterSnapshot):
                snapshots.append([item.csi])
            elif isinstance(item, np.ndarray):
                snapshots.append([check_csi_matrix(item)])
            else:
                snapshots.append([c.csi if isinstance(c, ClusterSnapshot) else check_csi_matrix(c)
                                  for c in item])
        return snapshots

    # -- estimator API ----------------------------------------------------
    def fit(self, X, y=None):
        """Train on snapshots of clustered channels; returns self.

        ``X`` is a snapshot dataset or a sequence of snapshots (each a list
        of complex [users x antennas] matrices). Populates ``history_`` with
        one row per epoch: epoch, train_rate, val_rate, wall_ms.
        """
        snapshots = self._as_snapshot_list(X)
        snapshots = [s for s in snapshots if s]
        if not snapshots:
            raise ValidationError("training data contains no non-empty snapshots")
        dtype = self._np_dtype()
        rng = np.random.default_rng(self.seed)
        self._init_params(snapshots[0][0].shape[1], rng)

        order = rng.permutation(len(snapshots))
        n_val = int(round(self.val_fraction * len(snapshots)))
        val_idx, train_idx = order[:n_val], order[n_val:]
        if train_idx.size == 0:
            raise ValidationError("no snapshots left for training after the validation split")
        val_clusters = [c for i in val_idx for c in snapshots[i]]

        params = self.params_.param_dict()
        opt = Adam(params, learning_rate=self.learning_rate, weight_decay=self.weight_decay)
        self.history_ = []
        for epoch in range(1, self.epochs + 1):
            tic = time.perf_counter()
            perm = rng.permutation(train_idx.size)
            rate_sum, rate_count = 0.0, 0
            for lo in range(0, perm.size, self.batch_size):
                batch_snaps = [snapshots[train_idx[j]] for j in perm[lo:lo + self.batch_size]]
                clusters = [c for s in batch_snaps for c in s]
                batch = build_graph_batch(clusters, dtype=dtype)
                loss = gnn_loss(self.params_, batch, self.noise_w, self.p_max_w,
                                self.projection_eps)
                loss.backward()
                grads = {k: p.grad for k, p in params.items()}
                for p in params.values():
                    p.grad = None
                opt.step(grads)
                rate_sum += -float(loss.data) * batch.n_clusters
                rate_count += batch.n_clusters
            val_rate = self.score(val_clusters) if val_clusters else float("nan")
            self.history_.append({
                "epoch": epoch,
                "train_rate": rate_sum / rate_count,
                "val_rate": val_rate,
                "wall_ms": (time.perf_counter() - tic) * 1e3,
            })
        return self

    def predict(self, X, p_max_w: float | None = None, return_unprojected: bool = False):
        """Beamforming matrices for a list of clusters, in input order.

        Each element of ``X`` is a complex [users x antennas] csi matrix (or
        ClusterSnapshot); each output is the complex [users x antennas]
        precoder, guaranteed inside the power budget.
        """
        if not hasattr(self, "params_"):
            raise NotFittedError("GnnBeamformer is not fitted; call fit() or load()")
        items = list(X)
        if not items:
            return []
        p_max = self.p_max_w if p_max_w is None else p_max_w
        batch = build_graph_batch(items, dtype=self._np_dtype())
        if batch.n_antennas != self.n_antennas_:
            raise ValidationError(
                f"model was built for {self.n_antennas_} antennas, data has {batch.n_antennas}")
        view = self.params_.data_view()
        outs = [None] * batch.n_clusters
        raws = [None] * batch.n_clusters
        for grp, (w_raw, w) in zip(batch.groups, gnn_forward_groups(view, batch, p_max,
                                                                    self.projection_eps)):
            wc = _pairs_to_complex(np.asarray(w), self.n_antennas_)
            rc = _pairs_to_complex(np.asarray(w_raw), self.n_antennas_)
            for row, pos in enumerate(grp.order):
                outs[pos] = wc[row]
                raws[pos] = rc[row]
        return (outs, raws) if return_unprojected else outs

    def score(self, X, y=None) -> float:
        """Mean per-cluster sum rate (bps/Hz) over the given clusters."""
        items = list(X)
        if not items:
            return float("nan")
        if not hasattr(self, "params_"):
            raise NotFittedError("GnnBeamformer is not fitted; call fit() or load()")
        batch = build_graph_batch(items, dtype=self._np_dtype())
        view = self.params_.data_view()
        return float(ad.as_array(batch_mean_rate(view, batch, self.noise_w, self.p_max_w,
                                                 self.projection_eps)))

    # -- persistence ------------------------------------------------------
    def save(self, path) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError("nothing to save; fit the model first")
        meta = {"model": "gnn_beamformer", "n_antennas": self.n_antennas_,
                "config": self.get_params()}
        save_params(path, self.params_.param_dict(), extra_meta=meta)

    @classmethod
    def load(cls, path) -> "GnnBeamformer":
        meta, params = load_params(path)
        if meta.get("model") != "gnn_beamformer":
            raise ValidationError(f"{path} is not a beamformer checkpoint")
        est = cls(**meta["config"])
        rng = np.random.default_rng(est.seed)
        est._init_params(int(meta["n_antennas"]), rng)
        target = est.params_.param_dict()
        if set(target) != set(params):
            raise ValidationError("checkpoint parameter names do not match the configuration")
        for name, tensor in target.items():
            loaded = params[name].data.astype(est._np_dtype())
            if loaded.shape != tensor.data.shape:
                raise ValidationError(f"checkpoint shape mismatch for {name!r}")
            tensor.data = loaded
        return est
