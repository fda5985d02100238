"""Superpixel-level refinement of the coarse region.

Pipeline: center-distance smoothing of the proposed ellipses -> per-superpixel
pseudo-logits -> node features -> residual logits from a message-passing
network -> blended logits l = alpha * pseudo + (1 - alpha) * residual ->
sigmoid -> pixel projection -> Otsu binarization.

The network is a K-layer mean-aggregation message-passing net (linear encoder,
tanh layers, linear head) with hand-derived backpropagation, so every gradient
is checkable against finite differences. Training minimizes a focal loss of
the blended probabilities against superpixel-level labels.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateHistogramError, DimensionMismatchError, EmptyMaskError
from .raster import Ellipse, center_distance_weight, otsu_threshold, to_grayscale
from .superpixels import SuperpixelGraph, SuperpixelMap, aggregate, build_graph, project_to_pixels
from .vlm.client import VlmClient
from .vlm.parsing import parse_yes_no
from .vlm.prompts import make_distance_prompt

FEATURE_DIM = 7  # gray (mean, min, max) + region (mean, min, max) + distance flag
LOG_FLOOR = 1e-12

DEFAULT_HIDDEN = 32
DEFAULT_LAYERS = 3
DEFAULT_ALPHA = 0.5
DEFAULT_SCALE = 4.0

# multiplicative / measured-distance phrasing for the no-model fallback
_DISTANCE_PATTERNS = re.compile(
    r"\b(distance|twice|thrice|half|halfway|double|triple|times)\b", re.IGNORECASE
)


@dataclass
class LayerParams:
    w_self: np.ndarray  # (d, d)
    w_nb: np.ndarray  # (d, d)
    b: np.ndarray  # (d,)


@dataclass
class RefinerModel:
    """Parameters of the residual network plus the blending scalar alpha and
    the pseudo-logit scale s."""

    w_in: np.ndarray  # (d, FEATURE_DIM)
    b_in: np.ndarray  # (d,)
    layers: list[LayerParams]
    w_out: np.ndarray  # (d,)
    b_out: float
    alpha: float = DEFAULT_ALPHA
    scale: float = DEFAULT_SCALE
    version: str = "1"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def hidden(self) -> int:
        return self.w_in.shape[0]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @classmethod
    def zeros(cls, hidden: int = DEFAULT_HIDDEN, depth: int = DEFAULT_LAYERS,
              alpha: float = DEFAULT_ALPHA, scale: float = DEFAULT_SCALE) -> "RefinerModel":
        return cls(
            w_in=np.zeros((hidden, FEATURE_DIM)),
            b_in=np.zeros(hidden),
            layers=[
                LayerParams(np.zeros((hidden, hidden)), np.zeros((hidden, hidden)), np.zeros(hidden))
                for _ in range(depth)
            ],
            w_out=np.zeros(hidden),
            b_out=0.0,
            alpha=alpha,
            scale=scale,
        )

    @classmethod
    def initialize(cls, hidden: int = DEFAULT_HIDDEN, depth: int = DEFAULT_LAYERS,
                   alpha: float = DEFAULT_ALPHA, scale: float = DEFAULT_SCALE,
                   seed: int = 0) -> "RefinerModel":
        """Seeded uniform(+-1/sqrt(fan_in)) weights, zero biases."""
        rng = np.random.default_rng(seed)

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        return cls(
            w_in=uniform((hidden, FEATURE_DIM), FEATURE_DIM),
            b_in=np.zeros(hidden),
            layers=[
                LayerParams(uniform((hidden, hidden), hidden), uniform((hidden, hidden), hidden), np.zeros(hidden))
                for _ in range(depth)
            ],
            w_out=uniform(hidden, hidden),
            b_out=0.0,
            alpha=alpha,
            scale=scale,
        )

    # -- flat parameter view used by the optimizer and the gradient check --

    def params(self) -> list[np.ndarray]:
        out = [self.w_in, self.b_in]
        for layer in self.layers:
            out.extend([layer.w_self, layer.w_nb, layer.b])
        out.append(self.w_out)
        return out

    def to_json(self) -> str:
        doc = {
            "version": self.version,
            "hyperparameters": {
                "d": self.hidden,
                "K": self.depth,
                "alpha": self.alpha,
                "s": self.scale,
            },
            "parameters": {
                "w_in": self.w_in.tolist(),
                "b_in": self.b_in.tolist(),
                "layers": [
                    {"w_self": l.w_self.tolist(), "w_nb": l.w_nb.tolist(), "b": l.b.tolist()}
                    for l in self.layers
                ],
                "w_out": self.w_out.tolist(),
                "b_out": self.b_out,
            },
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RefinerModel":
        doc = json.loads(text)
        p = doc["parameters"]
        return cls(
            w_in=np.asarray(p["w_in"], dtype=np.float64),
            b_in=np.asarray(p["b_in"], dtype=np.float64),
            layers=[
                LayerParams(
                    np.asarray(l["w_self"], dtype=np.float64),
                    np.asarray(l["w_nb"], dtype=np.float64),
                    np.asarray(l["b"], dtype=np.float64),
                )
                for l in p["layers"]
            ],
            w_out=np.asarray(p["w_out"], dtype=np.float64),
            b_out=float(p["b_out"]),
            alpha=float(doc["hyperparameters"]["alpha"]),
            scale=float(doc["hyperparameters"]["s"]),
            version=str(doc["version"]),
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    steps: int = 2000
    focal_gamma: float = 2.0
    focal_balance: float = 0.25
    seed: int = 7
    alpha: float = DEFAULT_ALPHA
    scale: float = DEFAULT_SCALE
    hidden: int = DEFAULT_HIDDEN
    depth: int = DEFAULT_LAYERS

    def __post_init__(self):
        if self.focal_gamma < 0:
            raise ValueError("focal gamma must be >= 0")
        if not 0.0 < self.focal_balance < 1.0:
            raise ValueError("focal balance must lie in (0, 1)")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")


@dataclass(frozen=True)
class TrainSample:
    """One supervised sample at superpixel granularity."""

    graph: SuperpixelGraph
    features: np.ndarray  # (L, FEATURE_DIM)
    pseudo: np.ndarray  # (L,)
    labels: np.ndarray  # (L,) in {0, 1}


# ---------------------------------------------------------------------------
# pseudo-logits and node features
# ---------------------------------------------------------------------------

def pseudo_logits(region_ellipses: list[Ellipse], sp: SuperpixelMap, scale: float = DEFAULT_SCALE) -> np.ndarray:
    """Smoothing then aggregation: the center-distance weight map is averaged
    within each superpixel and mapped affinely to [-scale, +scale]."""
    if scale <= 0:
        raise ValueError("pseudo-logit scale must be positive")
    h, w = sp.shape
    weighted = center_distance_weight(list(region_ellipses), w, h)
    means = aggregate(sp, weighted)[:, 0]
    return scale * (2.0 * means - 1.0)


def node_features(gray: np.ndarray, region: np.ndarray, sp: SuperpixelMap, flag: bool) -> np.ndarray:
    """Per-node (gray mean, min, max, region mean, min, max, distance flag)."""
    if gray.shape != sp.shape or region.shape != sp.shape:
        raise DimensionMismatchError(
            f"gray {gray.shape} / region {region.shape} must match superpixels {sp.shape}"
        )
    gray_stats = aggregate(sp, gray)
    region_stats = aggregate(sp, np.asarray(region, dtype=np.float64))
    flag_col = np.full((sp.count, 1), 1.0 if flag else 0.0)
    return np.concatenate([gray_stats, region_stats, flag_col], axis=1)


def distance_flag(instruction: str, client: VlmClient | None = None) -> bool:
    """Does the instruction need distance arithmetic? Asks the model when one
    is supplied; otherwise (or when the reply is unusable) a phrase heuristic
    answers, so this never fails."""
    if not instruction:
        raise ValueError("instruction must be nonempty")
    if client is not None:
        try:
            return parse_yes_no(client.complete(make_distance_prompt(instruction)))
        except Exception:
            pass
    return _DISTANCE_PATTERNS.search(instruction) is not None


# ---------------------------------------------------------------------------
# network forward / backward
# ---------------------------------------------------------------------------

def _forward_cached(model: RefinerModel, graph: SuperpixelGraph, features: np.ndarray):
    if features.shape != (graph.count, FEATURE_DIM):
        raise DimensionMismatchError(
            f"features {features.shape} must be ({graph.count}, {FEATURE_DIM})"
        )
    adjacency = graph.neighbor_matrix()
    hidden = [features @ model.w_in.T + model.b_in]
    pre = []
    messages = []
    for layer in model.layers:
        m = adjacency @ hidden[-1]
        z = hidden[-1] @ layer.w_self.T + m @ layer.w_nb.T + layer.b
        messages.append(m)
        pre.append(z)
        hidden.append(np.tanh(z))
    logits = hidden[-1] @ model.w_out + model.b_out
    return logits, {
        "adjacency": adjacency,
        "features": features,
        "hidden": hidden,
        "pre": pre,
        "messages": messages,
    }


def residual_forward(model: RefinerModel, graph: SuperpixelGraph, features: np.ndarray) -> np.ndarray:
    """Residual logits, one per superpixel. Deterministic."""
    logits, _ = _forward_cached(model, graph, features)
    return logits


def _backward(model: RefinerModel, cache: dict, dlogits: np.ndarray) -> "Gradients":
    grads = Gradients.zeros_like(model)
    h_last = cache["hidden"][-1]
    grads.w_out[:] = dlogits @ h_last
    grads.b_out = float(dlogits.sum())
    dh = np.outer(dlogits, model.w_out)
    adjacency = cache["adjacency"]
    for k in reversed(range(model.depth)):
        dz = dh * (1.0 - np.tanh(cache["pre"][k]) ** 2)
        grads.layers[k].w_self[:] = dz.T @ cache["hidden"][k]
        grads.layers[k].w_nb[:] = dz.T @ cache["messages"][k]
        grads.layers[k].b[:] = dz.sum(axis=0)
        layer = model.layers[k]
        dh = dz @ layer.w_self + adjacency.T @ (dz @ layer.w_nb)
    grads.w_in[:] = dh.T @ cache["features"]
    grads.b_in[:] = dh.sum(axis=0)
    return grads


@dataclass
class Gradients:
    w_in: np.ndarray
    b_in: np.ndarray
    layers: list[LayerParams]
    w_out: np.ndarray
    b_out: float

    @classmethod
    def zeros_like(cls, model: RefinerModel) -> "Gradients":
        return cls(
            w_in=np.zeros_like(model.w_in),
            b_in=np.zeros_like(model.b_in),
            layers=[
                LayerParams(np.zeros_like(l.w_self), np.zeros_like(l.w_nb), np.zeros_like(l.b))
                for l in model.layers
            ],
            w_out=np.zeros_like(model.w_out),
            b_out=0.0,
        )

    def params(self) -> list[np.ndarray]:
        out = [self.w_in, self.b_in]
        for layer in self.layers:
            out.extend([layer.w_self, layer.w_nb, layer.b])
        out.append(self.w_out)
        return out

    def add_scaled(self, other: "Gradients", factor: float) -> None:
        for mine, theirs in zip(self.params(), other.params()):
            mine += factor * theirs
        self.b_out += factor * other.b_out


# ---------------------------------------------------------------------------
# losses and blending
# ---------------------------------------------------------------------------

def combine_logits(pseudo: np.ndarray, residual: np.ndarray, alpha: float) -> np.ndarray:
    """Blend l = alpha * pseudo + (1 - alpha) * residual, elementwise."""
    pseudo = np.asarray(pseudo, dtype=np.float64)
    residual = np.asarray(residual, dtype=np.float64)
    if pseudo.shape != residual.shape:
        raise DimensionMismatchError(f"pseudo {pseudo.shape} != residual {residual.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 1.0:
        return pseudo.copy()
    if alpha == 0.0:
        return residual.copy()
    return alpha * pseudo + (1.0 - alpha) * residual


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def focal_loss(logits: np.ndarray, labels: np.ndarray, gamma: float = 2.0,
               balance: float = 0.25) -> tuple[float, np.ndarray]:
    """Mean focal loss over superpixels and its analytic gradient w.r.t. logits.

    Per element: -w * (1 - p_t)^gamma * ln(p_t) with p_t = p for label 1 and
    1 - p otherwise, and w = balance for label 1 and 1 - balance otherwise.
    The log argument is floored at 1e-12.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.shape != labels.shape:
        raise DimensionMismatchError(f"logits {logits.shape} != labels {labels.shape}")
    positive = labels.astype(bool)
    p = sigmoid(logits)
    pt = np.where(positive, p, 1.0 - p)
    weight = np.where(positive, balance, 1.0 - balance)
    pt_safe = np.maximum(pt, LOG_FLOOR)
    focal = (1.0 - pt) ** gamma
    loss = float(np.mean(-weight * focal * np.log(pt_safe)))

    # d loss / d p_t, with the log-floor region treated as constant
    if gamma > 0:
        dfocal = gamma * (1.0 - pt) ** (gamma - 1.0) * np.log(pt_safe)
    else:
        dfocal = np.zeros_like(pt)
    dlog = np.where(pt > LOG_FLOOR, focal / pt_safe, 0.0)
    dloss_dpt = weight * dfocal - weight * dlog
    dpt_dlogit = np.where(positive, 1.0, -1.0) * p * (1.0 - p)
    grad = dloss_dpt * dpt_dlogit / logits.size
    return loss, grad


def refiner_loss(model: RefinerModel, sample: TrainSample, gamma: float,
                 balance: float) -> tuple[float, Gradients]:
    """Focal loss of the blended logits plus gradients for every parameter."""
    logits, cache = _forward_cached(model, sample.graph, sample.features)
    blended = combine_logits(sample.pseudo, logits, model.alpha)
    loss, dblended = focal_loss(blended, sample.labels, gamma, balance)
    dresidual = (1.0 - model.alpha) * dblended
    return loss, _backward(model, cache, dresidual)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def train(dataset: list[TrainSample], cfg: TrainConfig = TrainConfig()) -> tuple[RefinerModel, list[float]]:
    """Full-batch gradient descent with analytic backpropagation.

    Per step, gradients are averaged over the dataset in list order; the
    returned curve holds the pre-update loss of every step. Deterministic for
    a fixed seed.
    """
    if not dataset:
        raise EmptyMaskError("training dataset is empty")
    model = RefinerModel.initialize(
        hidden=cfg.hidden, depth=cfg.depth, alpha=cfg.alpha, scale=cfg.scale, seed=cfg.seed
    )
    curve: list[float] = []
    n = len(dataset)
    for _ in range(cfg.steps):
        total = Gradients.zeros_like(model)
        loss_sum = 0.0
        for sample in dataset:
            loss, grads = refiner_loss(model, sample, cfg.focal_gamma, cfg.focal_balance)
            loss_sum += loss
            total.add_scaled(grads, 1.0 / n)
        curve.append(loss_sum / n)
        for param, grad in zip(model.params(), total.params()):
            param -= cfg.learning_rate * grad
        model.b_out -= cfg.learning_rate * total.b_out
    return model, curve


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def refine(trace, img: np.ndarray, sp: SuperpixelMap, model: RefinerModel,
           flag: bool) -> tuple[np.ndarray, np.ndarray]:
    """Full refinement of a grounding trace into (probability map, final mask).

    A constant probability map (degenerate Otsu histogram) falls back to the
    fixed 0.5 threshold.
    """
    gray = to_grayscale(img)
    if gray.shape != sp.shape:
        raise DimensionMismatchError(f"image {gray.shape} does not match superpixels {sp.shape}")
    pseudo = pseudo_logits(list(trace.final_ellipses), sp, model.scale)
    features = node_features(gray, trace.final_region, sp, flag)
    graph = build_graph(sp)
    residual = residual_forward(model, graph, features)
    blended = combine_logits(pseudo, residual, model.alpha)
    probs = sigmoid(blended)
    prob_map = project_to_pixels(sp, probs)
    try:
        _, final = otsu_threshold(prob_map)
    except DegenerateHistogramError:
        final = prob_map > 0.5
    return prob_map, final


def select_placement_point(prob: np.ndarray, final: np.ndarray, footprint: np.ndarray) -> tuple[int, int]:
    """Placement position maximizing the probability mass under the footprint
    restricted to the final mask.

    The footprint (a small binary mask) slides over every position where it
    fits inside the image; the score of a position is the sum of prob over
    footprint cells that also lie in the final mask. Returns the (x, y) of
    the footprint's center cell; ties resolve to the smallest (y, x).
    """
    prob = np.asarray(prob, dtype=np.float64)
    final = np.asarray(final, dtype=bool)
    footprint = np.asarray(footprint, dtype=bool)
    if prob.shape != final.shape:
        raise DimensionMismatchError(f"prob {prob.shape} != final {final.shape}")
    fh, fw = footprint.shape
    h, w = prob.shape
    if fh > h or fw > w:
        raise DimensionMismatchError("footprint must be smaller than the image")
    if not final.any():
        raise EmptyMaskError("cannot place into an empty final mask")

    weighted = np.where(final, prob, 0.0)
    windows = np.lib.stride_tricks.sliding_window_view(weighted, (fh, fw))
    scores = np.einsum("ijkl,kl->ij", windows, footprint.astype(np.float64))
    flat = int(np.argmax(scores))  # row-major argmax = smallest (y, x) tie-break
    top_y, top_x = divmod(flat, scores.shape[1])
    return top_x + fw // 2, top_y + fh // 2
