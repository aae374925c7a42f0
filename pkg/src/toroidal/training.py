"""Contrastive training of embeddings under each geometry.

The trainable parameters are either a single linear encoder matrix or the
embedding rows themselves ("free" mode).  Raw activations are pushed
through the chosen geometry projection, the supervised contrastive loss
(plus an optional nearest-neighbour repulsion term) is evaluated on the
projected unit-norm embeddings, and exact analytic gradients are
backpropagated through the projection.  Updates use Adam with global-norm
gradient clipping; very large steps would otherwise wrap around toroidal
geometries and destabilise training.

Everything is plain NumPy and deterministic for a fixed seed.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import DEGENERATE_NORM_EPS, as_float_batch
from .data import EmbeddingSet, Encoding, SyntheticDataset
from .exceptions import (
    BatchTooSmallError,
    DuplicatePointsError,
    EmptySetError,
    ToroidalError,
)
from .geometry import (
    GeometryTag,
    clifford_project,
    flat_to_clifford,
    l2_normalize,
    l2p_project,
)

GEOMETRY_MODES = ("hypersphere", "torusC", "torusN")

# default grid for sweeping the repulsion weight in benchmark runs
KOLEO_WEIGHT_SWEEP = (0.0, 0.01, 0.1, 1.0)

_OUTPUT_TAGS = {
    "hypersphere": GeometryTag.HYPERSPHERE,
    "torusC": GeometryTag.CLIFFORD,
    "torusN": GeometryTag.CLIFFORD,
}


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    geometry: str = "hypersphere"
    dim: int = 8
    koleo_weight: float = 0.0
    clip_threshold: float = 100.0
    learning_rate: float = 0.05
    epochs: int = 100
    batch_size: int = 128
    temperature: float = 0.1
    seed: int = 0
    encoder: str = "linear"

    def __post_init__(self):
        if self.geometry not in GEOMETRY_MODES:
            raise ValueError(
                f"geometry must be one of {GEOMETRY_MODES}, got {self.geometry!r}"
            )
        if self.geometry == "torusN" and self.dim % 2 != 0:
            raise ValueError("torusN needs an even embedding dimension")
        if self.dim < 1:
            raise ValueError("embedding dimension must be positive")
        if self.koleo_weight < 0:
            raise ValueError("koleo_weight must be non-negative")
        if not self.clip_threshold > 0:
            raise ValueError("clip_threshold must be positive")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.encoder not in ("linear", "free"):
            raise ValueError("encoder must be 'linear' or 'free'")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def output_geometry(self) -> GeometryTag:
        return _OUTPUT_TAGS[self.geometry]


def project_for_geometry(raw, geometry: str) -> np.ndarray:
    """Project raw activations into the configured geometry."""
    if geometry == "hypersphere":
        return l2_normalize(raw)
    if geometry == "torusC":
        return clifford_project(raw)
    if geometry == "torusN":
        return l2p_project(raw)
    raise ValueError(f"geometry must be one of {GEOMETRY_MODES}, got {geometry!r}")


def project_backward(raw, geometry: str, grad_z) -> np.ndarray:
    """Backpropagate d(loss)/d(embedding) through the projection.

    Returns d(loss)/d(raw activations); shapes follow the forward pass.
    """
    x, was_1d = as_float_batch(raw)
    g, _ = as_float_batch(grad_z)
    n, d = x.shape
    if geometry == "hypersphere":
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        z = x / norms
        out = (g - (g * z).sum(axis=1, keepdims=True) * z) / norms
    elif geometry == "torusC":
        scale = np.sqrt(1.0 / d)
        out = scale * (g[:, 0::2] * np.cos(x) - g[:, 1::2] * np.sin(x))
    elif geometry == "torusN":
        pairs = x.reshape(n, d // 2, 2)
        gp = g.reshape(n, d // 2, 2)
        norms = np.linalg.norm(pairs, axis=2, keepdims=True)
        unit = pairs / norms
        scale = np.sqrt(2.0 / d)
        radial = (gp * unit).sum(axis=2, keepdims=True)
        out = ((scale / norms) * (gp - radial * unit)).reshape(n, d)
    else:
        raise ValueError(f"geometry must be one of {GEOMETRY_MODES}, got {geometry!r}")
    return out[0] if was_1d else out


def supcon_loss(embeddings, labels, temperature: float = 0.1,
                ) -> tuple[float, np.ndarray]:
    """Supervised contrastive loss and its gradient on unit-norm embeddings.

    For each anchor the mean log-probability of its same-label positives is
    taken against all other batch items (positives averaged outside the
    log); anchors without positives contribute zero.  Returns the summed
    loss over anchors and d(loss)/d(embeddings).
    """
    z, _ = as_float_batch(embeddings)
    y = np.asarray(labels)
    n = z.shape[0]
    if n < 2:
        raise BatchTooSmallError("contrastive loss needs at least 2 items")
    if y.shape != (n,):
        raise ValueError(f"labels must have shape ({n},), got {y.shape}")

    logits = (z @ z.T) / temperature
    off_diag = ~np.eye(n, dtype=bool)
    positives = (y[:, None] == y[None, :]) & off_diag
    pos_counts = positives.sum(axis=1)
    anchors = pos_counts > 0

    # row-wise log-sum-exp over a != i
    masked = np.where(off_diag, logits, -np.inf)
    row_max = masked.max(axis=1, keepdims=True)
    exp = np.exp(masked - row_max)
    exp[~off_diag] = 0.0
    denom = exp.sum(axis=1, keepdims=True)
    log_denom = np.log(denom) + row_max

    mean_pos = np.zeros(n)
    np.divide((positives * logits).sum(axis=1), pos_counts,
              out=mean_pos, where=anchors)
    loss = float((log_denom[anchors, 0] - mean_pos[anchors]).sum())

    grad_logits = np.zeros((n, n))
    grad_logits[anchors] = (exp / denom)[anchors]
    grad_logits[anchors] -= (positives / np.maximum(pos_counts, 1)[:, None])[anchors]
    grad_z = (grad_logits + grad_logits.T) @ z / temperature
    return loss, grad_z


def koleo_loss(embeddings) -> tuple[float, np.ndarray]:
    """Nearest-neighbour repulsion: minus the mean log distance to each
    point's nearest neighbour.

    The gradient flows only through each argmin pair (ties broken by the
    lowest index).  Coincident points raise DuplicatePointsError, since the
    gradient is undefined there; stability against *small* distances is
    handled downstream by gradient clipping rather than by reshaping the
    loss.
    """
    z, _ = as_float_batch(embeddings)
    n = z.shape[0]
    if n < 2:
        raise BatchTooSmallError("nearest-neighbour repulsion needs >= 2 items")
    sq_norms = (z * z).sum(axis=1)
    gram = sq_norms[:, None] + sq_norms[None, :] - 2.0 * (z @ z.T)
    np.fill_diagonal(gram, np.inf)
    nearest = gram.argmin(axis=1)
    diff = z - z[nearest]
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist <= DEGENERATE_NORM_EPS):
        raise DuplicatePointsError(
            "coincident points: nearest-neighbour gradient undefined"
        )
    loss = float(-np.log(dist).mean())
    coeff = -1.0 / (n * dist * dist)
    contrib = coeff[:, None] * diff
    grad = contrib.copy()
    np.subtract.at(grad, nearest, contrib)
    return loss, grad


def clip_gradients(grads: np.ndarray, threshold: float) -> np.ndarray:
    """Global-norm clipping: scale to ``threshold`` if the norm exceeds it."""
    if not threshold > 0:
        raise ValueError("clip threshold must be positive")
    norm = float(np.linalg.norm(grads))
    if norm > threshold:
        return grads * (threshold / norm)
    return grads


def circular_variance(data) -> float:
    """1 - ||mean of the unit vectors||, in [0, 1].

    0 means fully concentrated, 1 a balanced spread.  Flat-torus sets are
    lifted to their Clifford representation first.
    """
    if isinstance(data, EmbeddingSet):
        if data.encoding != Encoding.FLOAT:
            raise ValueError("circular variance requires float embeddings")
        vectors = data.vectors
        if data.geometry == GeometryTag.FLAT_TORUS:
            vectors = flat_to_clifford(vectors)
    else:
        vectors = np.asarray(data, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise EmptySetError("circular variance of an empty set is undefined")
    return float(1.0 - np.linalg.norm(vectors.mean(axis=0)))


class _Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, shape, learning_rate: float):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads * grads
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclasses.dataclass(frozen=True)
class EpochLog:
    epoch: int
    supcon_loss: float
    koleo_loss: float
    circ_var: float
    grad_norm: float
    clipped: bool


@dataclasses.dataclass(frozen=True)
class TrainResult:
    embeddings: EmbeddingSet | None  # None when the run diverged
    history: tuple[EpochLog, ...]
    diverged: bool

    def write_log_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("epoch,supcon_loss,koleo_loss,circ_var,grad_norm,clipped_flag\n")
            for row in self.history:
                fh.write(
                    f"{row.epoch},{row.supcon_loss!r},{row.koleo_loss!r},"
                    f"{row.circ_var!r},{row.grad_norm!r},{int(row.clipped)}\n"
                )


_ACTIVATION_BLOWUP = 1e12
_EARLY_STOP_PATIENCE = 10
_EARLY_STOP_MIN_DELTA = 1e-4


class ContrastiveEmbedder(BaseEstimator):
    """Trains embeddings under a chosen geometry; sklearn estimator surface.

    With ``encoder="linear"`` a single matrix maps input features to the
    pre-projection space and ``transform`` embeds new data; with
    ``encoder="free"`` the embedding rows are optimised directly (like
    manifold learners, use ``fit_transform``/``embedding_``).

    Fitted attributes: ``weights_`` (linear mode), ``embedding_`` (training
    embeddings after projection), ``history_`` (per-epoch logs),
    ``diverged_`` (True if the run halted on NaN/Inf loss or an activation
    blow-up), ``n_pair_jitters_`` (times a degenerate torusN pair was
    nudged).
    """

    def __init__(self, geometry: str = "hypersphere", dim: int = 8,
                 koleo_weight: float = 0.0, clip_threshold: float = 100.0,
                 learning_rate: float = 0.05, epochs: int = 100,
                 batch_size: int = 128, temperature: float = 0.1,
                 seed: int = 0, encoder: str = "linear"):
        self.geometry = geometry
        self.dim = dim
        self.koleo_weight = koleo_weight
        self.clip_threshold = clip_threshold
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.temperature = temperature
        self.seed = seed
        self.encoder = encoder

    def _config(self) -> TrainConfig:
        return TrainConfig(
            geometry=self.geometry, dim=self.dim,
            koleo_weight=self.koleo_weight, clip_threshold=self.clip_threshold,
            learning_rate=self.learning_rate, epochs=self.epochs,
            batch_size=self.batch_size, temperature=self.temperature,
            seed=self.seed, encoder=self.encoder,
        )

    # -- internals ---------------------------------------------------------

    def _raw_activations(self, x_batch, rows):
        if self.encoder == "linear":
            return x_batch @ self._params
        return self._params[rows]

    def _guard_pairs(self, raw: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Nudge degenerate torusN pairs so the projection stays defined."""
        if self.geometry != "torusN":
            return raw
        pairs = raw.reshape(raw.shape[0], -1, 2)
        bad = np.linalg.norm(pairs, axis=2) <= DEGENERATE_NORM_EPS
        if not np.any(bad):
            return raw
        jitter = rng.normal(scale=1e-8, size=(int(bad.sum()), 2))
        pairs = pairs.copy()
        pairs[bad] += jitter
        self.n_pair_jitters_ += int(bad.sum())
        return pairs.reshape(raw.shape)

    def _losses(self, raw, labels):
        z = project_for_geometry(raw, self.geometry)
        loss_s, grad_s = supcon_loss(z, labels, self.temperature)
        if self.koleo_weight > 0:
            loss_k, grad_k = koleo_loss(z)
            grad_z = grad_s + self.koleo_weight * grad_k
        else:
            loss_k = 0.0
            grad_z = grad_s
        return z, loss_s, loss_k, grad_z

    # -- estimator API -----------------------------------------------------

    def fit(self, X, y):
        config = self._config()  # validates parameters
        x, _ = as_float_batch(X)
        labels = np.asarray(y)
        n, in_dim = x.shape
        if labels.shape != (n,):
            raise ValueError(f"labels must have shape ({n},), got {labels.shape}")
        if n < 2:
            raise BatchTooSmallError("training needs at least 2 points")

        rng = np.random.default_rng(self.seed)
        if self.encoder == "linear":
            self._params = rng.normal(scale=1.0 / np.sqrt(in_dim),
                                      size=(in_dim, self.dim))
        else:
            self._params = rng.normal(size=(n, self.dim))
        adam = _Adam(self._params.shape, self.learning_rate)

        self.n_pair_jitters_ = 0
        self.diverged_ = False
        history: list[EpochLog] = []
        best = np.inf
        stall = 0

        for epoch in range(self.epochs):
            order = rng.permutation(n)
            sum_s = sum_k = sum_norm = 0.0
            n_anchors = 0
            n_batches = 0
            clipped = False
            for start in range(0, n, self.batch_size):
                rows = order[start:start + self.batch_size]
                if rows.size < 2:
                    continue
                raw = self._guard_pairs(self._raw_activations(x[rows], rows), rng)
                if (not np.all(np.isfinite(raw))
                        or np.abs(raw).max() > _ACTIVATION_BLOWUP):
                    self.diverged_ = True
                    break
                _, loss_s, loss_k, grad_z = self._losses(raw, labels[rows])
                if not np.isfinite(loss_s + loss_k):
                    self.diverged_ = True
                    break
                grad_raw = project_backward(raw, self.geometry, grad_z)
                if self.encoder == "linear":
                    grad = x[rows].T @ grad_raw
                else:
                    grad = np.zeros_like(self._params)
                    grad[rows] = grad_raw
                norm = float(np.linalg.norm(grad))
                sum_norm += norm
                clipped = clipped or norm > self.clip_threshold
                self._params = adam.step(
                    self._params, clip_gradients(grad, self.clip_threshold)
                )
                sum_s += loss_s
                sum_k += loss_k * rows.size
                n_anchors += rows.size
                n_batches += 1

            if n_batches == 0:
                self.diverged_ = True
            epoch_s = sum_s / max(n_anchors, 1)
            epoch_k = sum_k / max(n_anchors, 1)
            try:
                full = project_for_geometry(
                    self._guard_pairs(self._raw_activations(x, slice(None)), rng),
                    self.geometry,
                )
                circ = circular_variance(full)
            except (ToroidalError, FloatingPointError):
                circ = float("nan")
                self.diverged_ = True
            history.append(EpochLog(
                epoch=epoch, supcon_loss=epoch_s, koleo_loss=epoch_k,
                circ_var=circ, grad_norm=sum_norm / max(n_batches, 1),
                clipped=clipped,
            ))
            if self.diverged_:
                break
            total = epoch_s + self.koleo_weight * epoch_k
            if total < best - _EARLY_STOP_MIN_DELTA:
                best = total
                stall = 0
            else:
                stall += 1
                if stall >= _EARLY_STOP_PATIENCE:
                    break

        self.history_ = tuple(history)
        self.config_ = config
        if self.encoder == "linear":
            self.weights_ = self._params.copy()
        if self.diverged_:
            self.embedding_ = None
        else:
            self.embedding_ = project_for_geometry(
                self._guard_pairs(self._raw_activations(x, slice(None)), rng),
                self.geometry,
            )
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "history_"):
            raise ToroidalError("estimator is not fitted")
        if self.encoder != "linear":
            raise ToroidalError(
                "free-embedding mode has no out-of-sample transform; "
                "use fit_transform or embedding_"
            )
        x, was_1d = as_float_batch(X)
        out = project_for_geometry(x @ self.weights_, self.geometry)
        return out[0] if was_1d else out

    def fit_transform(self, X, y) -> np.ndarray:
        self.fit(X, y)
        if self.embedding_ is None:
            raise ToroidalError("training diverged; no embedding available")
        return self.embedding_


def train(dataset: SyntheticDataset, config: TrainConfig) -> TrainResult:
    """Train on the synthetic dataset's train split and package the result.

    Returns the projected training embeddings (geometry-tagged, labelled),
    the per-epoch log, and the divergence flag.  Bit-identical across runs
    for a fixed dataset seed and config.
    """
    x, y = dataset.sample(split=0)
    est = ContrastiveEmbedder(**config.to_dict())
    est.fit(x, y)
    if est.embedding_ is None:
        embeddings = None
    else:
        embeddings = EmbeddingSet(
            geometry=config.output_geometry,
            vectors=est.embedding_,
            labels=y,
        )
    return TrainResult(
        embeddings=embeddings,
        history=est.history_,
        diverged=est.diverged_,
    )
