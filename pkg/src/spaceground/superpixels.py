"""SLIC superpixel segmentation over grayscale images, plus graph utilities.

The segmentation is localized k-means in (intensity, x, y) space. Intensity
is scaled to [0, 100] so the conventional compactness range (around 10)
balances color and space; the spatial term is scaled by compactness / S with
S = sqrt(w * h / target_count). A post-pass re-labels every connected
component, merges components smaller than S^2 / 4 into the neighbor sharing
the largest boundary, and reindexes labels to a contiguous [0, L).

The whole pipeline is deterministic: seeds start on a regular grid (perturbed
to the lowest-gradient spot in a 3x3 neighborhood), assignment ties keep the
first cluster in index order, and merges process components smallest-first.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, GeometryError

INTENSITY_SCALE = 100.0

DEFAULT_TARGET_COUNT = 600
DEFAULT_COMPACTNESS = 10.0
DEFAULT_ITERATIONS = 10


@dataclass(frozen=True)
class SlicParams:
    target_count: int = DEFAULT_TARGET_COUNT
    compactness: float = DEFAULT_COMPACTNESS
    iterations: int = DEFAULT_ITERATIONS
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "target_count": self.target_count,
            "compactness": self.compactness,
            "iterations": self.iterations,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SlicParams":
        return cls(
            target_count=int(d["target_count"]),
            compactness=float(d["compactness"]),
            iterations=int(d["iterations"]),
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class SuperpixelMap:
    """Partition of an image into L 4-connected superpixels.

    ``labels`` holds one contiguous id in [0, L) per pixel.
    """

    labels: np.ndarray
    count: int
    params: SlicParams

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class SuperpixelGraph:
    """Adjacency structure of a SuperpixelMap: nodes are superpixels, edges
    connect 4-adjacent ones. Edge list is deduplicated (i < j), no loops."""

    count: int
    edges: np.ndarray  # (E, 2) int array, each row (i, j) with i < j

    def neighbor_matrix(self) -> np.ndarray:
        """Row-normalized adjacency: A[i, j] = 1 / deg(i) for j adjacent to i.

        Rows of isolated nodes are all zero, so A @ h realizes "mean over an
        empty neighborhood is the zero vector".
        """
        a = np.zeros((self.count, self.count), dtype=np.float64)
        for i, j in self.edges:
            a[i, j] = 1.0
            a[j, i] = 1.0
        deg = a.sum(axis=1, keepdims=True)
        np.divide(a, deg, out=a, where=deg > 0)
        return a


def _seed_positions(w: int, h: int, target_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Regular seed grid with roughly sqrt spacing; returns (xs, ys) floats."""
    spacing = np.sqrt(w * h / target_count)
    nx = max(1, round(w / spacing))
    ny = max(1, round(h / spacing))
    xs = (np.arange(nx) + 0.5) * (w / nx)
    ys = (np.arange(ny) + 0.5) * (h / ny)
    gx, gy = np.meshgrid(xs, ys)
    return gx.ravel(), gy.ravel()


def _perturb_to_low_gradient(gray: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Move each seed to the lowest-gradient pixel in its 3x3 neighborhood."""
    h, w = gray.shape
    padded = np.pad(gray, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    grad = gx**2 + gy**2

    out_x = np.empty(len(xs), dtype=np.int64)
    out_y = np.empty(len(ys), dtype=np.int64)
    for k, (x, y) in enumerate(zip(xs, ys)):
        cx = int(np.clip(round(x), 0, w - 1))
        cy = int(np.clip(round(y), 0, h - 1))
        best = (np.inf, cy, cx)
        for ny_ in range(max(0, cy - 1), min(h, cy + 2)):
            for nx_ in range(max(0, cx - 1), min(w, cx + 2)):
                g = grad[ny_, nx_]
                if g < best[0]:
                    best = (g, ny_, nx_)
        out_y[k], out_x[k] = best[1], best[2]
    return out_x, out_y


def _connected_components(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected components of an integer label map, ids in scan order."""
    h, w = labels.shape
    comp = np.full((h, w), -1, dtype=np.int64)
    next_id = 0
    stack: list[tuple[int, int]] = []
    for sy in range(h):
        for sx in range(w):
            if comp[sy, sx] != -1:
                continue
            lab = labels[sy, sx]
            comp[sy, sx] = next_id
            stack.append((sy, sx))
            while stack:
                y, x = stack.pop()
                if y > 0 and comp[y - 1, x] == -1 and labels[y - 1, x] == lab:
                    comp[y - 1, x] = next_id
                    stack.append((y - 1, x))
                if y + 1 < h and comp[y + 1, x] == -1 and labels[y + 1, x] == lab:
                    comp[y + 1, x] = next_id
                    stack.append((y + 1, x))
                if x > 0 and comp[y, x - 1] == -1 and labels[y, x - 1] == lab:
                    comp[y, x - 1] = next_id
                    stack.append((y, x - 1))
                if x + 1 < w and comp[y, x + 1] == -1 and labels[y, x + 1] == lab:
                    comp[y, x + 1] = next_id
                    stack.append((y, x + 1))
            next_id += 1
    return comp, next_id


def _boundary_counts(comp: np.ndarray) -> dict[int, dict[int, int]]:
    """Shared 4-adjacent boundary length between every pair of components."""
    nbr: dict[int, dict[int, int]] = {}
    for a, b in zip(comp[:, :-1].ravel(), comp[:, 1:].ravel()):
        if a != b:
            nbr.setdefault(a, {})[b] = nbr.setdefault(a, {}).get(b, 0) + 1
            nbr.setdefault(b, {})[a] = nbr.setdefault(b, {}).get(a, 0) + 1
    for a, b in zip(comp[:-1, :].ravel(), comp[1:, :].ravel()):
        if a != b:
            nbr.setdefault(a, {})[b] = nbr.setdefault(a, {}).get(b, 0) + 1
            nbr.setdefault(b, {})[a] = nbr.setdefault(b, {}).get(a, 0) + 1
    return nbr


def _enforce_connectivity(labels: np.ndarray, min_size: float) -> np.ndarray:
    """Absorb disconnected fragments and small regions, reindex to [0, L).

    Per k-means label only its largest connected component keeps an identity;
    every other fragment, and any region smaller than ``min_size``, merges
    into the neighbor sharing the largest boundary (ties: smallest neighbor
    id), smallest region first. Keeping one component per label pins the
    final count near the seed count instead of inflating it with fragments.
    Final ids follow first appearance in row-major scan order.
    """
    comp, n_comp = _connected_components(labels)
    if n_comp == 1:
        return np.zeros_like(labels)

    sizes = np.bincount(comp.ravel(), minlength=n_comp).astype(np.int64)
    first_pixel = {}
    for idx, c in enumerate(comp.ravel()):
        if c not in first_pixel:
            first_pixel[c] = idx
    keeper: dict[int, int] = {}  # label -> its largest component (ties: first seen)
    flat_labels = labels.ravel()
    for c in range(n_comp):
        lab = int(flat_labels[first_pixel[c]])
        if lab not in keeper or sizes[c] > sizes[keeper[lab]]:
            keeper[lab] = c
    keepers = set(keeper.values())

    nbr = _boundary_counts(comp)
    merged_into = np.arange(n_comp, dtype=np.int64)
    alive = n_comp

    def root(c: int) -> int:
        while merged_into[c] != c:
            merged_into[c] = merged_into[merged_into[c]]
            c = merged_into[c]
        return c

    heap = [(int(sizes[c]), c) for c in range(n_comp)]
    heapq.heapify(heap)
    while heap and alive > 1:
        size, c = heapq.heappop(heap)
        if root(c) != c:
            continue
        if sizes[c] != size:  # stale entry; requeue with the grown size
            heapq.heappush(heap, (int(sizes[c]), c))
            continue
        if c in keepers and size >= min_size:
            continue
        candidates = sorted(nbr.get(c, {}).items(), key=lambda kv: (-kv[1], kv[0]))
        if not candidates:
            continue
        target = candidates[0][0]
        merged_into[c] = target
        sizes[target] += sizes[c]
        alive -= 1
        # fold c's boundaries into target
        for other, count in nbr.pop(c, {}).items():
            if other == target:
                continue
            nbr[other].pop(c, None)
            nbr[other][target] = nbr[other].get(target, 0) + count
            nbr.setdefault(target, {})[other] = nbr.setdefault(target, {}).get(other, 0) + count
        nbr.setdefault(target, {}).pop(c, None)
        heapq.heappush(heap, (int(sizes[target]), target))

    roots = np.array([root(c) for c in range(n_comp)], dtype=np.int64)
    final = roots[comp]
    # contiguous reindex by first appearance
    _, first_index = np.unique(final.ravel(), return_index=True)
    order = final.ravel()[np.sort(first_index)]
    remap = np.full(n_comp, -1, dtype=np.int64)
    remap[order] = np.arange(len(order))
    return remap[final]


def slic(
    gray: np.ndarray,
    target_count: int = DEFAULT_TARGET_COUNT,
    compactness: float = DEFAULT_COMPACTNESS,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
) -> SuperpixelMap:
    """Segment a grayscale image into roughly ``target_count`` superpixels.

    ``seed`` is recorded in the map's params for provenance; the algorithm
    itself contains no random choices.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise DimensionMismatchError(f"expected (H, W) grayscale, got {gray.shape}")
    h, w = gray.shape
    n = h * w
    if not 1 <= target_count <= n:
        raise GeometryError(f"target_count must lie in [1, {n}], got {target_count}")
    if compactness <= 0:
        raise GeometryError("compactness must be positive")
    if iterations < 1:
        raise GeometryError("iterations must be >= 1")

    intensity = gray * INTENSITY_SCALE
    spacing = np.sqrt(n / target_count)
    sx, sy = _seed_positions(w, h, target_count)
    px, py = _perturb_to_low_gradient(gray, sx, sy)

    centers = np.stack(
        [intensity[py, px], px.astype(np.float64), py.astype(np.float64)], axis=1
    )
    k = len(centers)
    spatial_scale = (compactness / spacing) ** 2
    half_window = int(np.ceil(max(spacing, w / max(1, round(w / spacing)), h / max(1, round(h / spacing))))) + 1

    labels = np.full((h, w), -1, dtype=np.int64)
    best_dist = np.full((h, w), np.inf, dtype=np.float64)

    for _ in range(iterations):
        labels.fill(-1)
        best_dist.fill(np.inf)
        for ci in range(k):
            c_int, c_x, c_y = centers[ci]
            x0 = max(0, int(c_x) - half_window)
            x1 = min(w, int(c_x) + half_window + 1)
            y0 = max(0, int(c_y) - half_window)
            y1 = min(h, int(c_y) + half_window + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            ys_, xs_ = np.mgrid[y0:y1, x0:x1]
            d = (intensity[y0:y1, x0:x1] - c_int) ** 2 + ((xs_ - c_x) ** 2 + (ys_ - c_y) ** 2) * spatial_scale
            window_best = best_dist[y0:y1, x0:x1]
            better = d < window_best
            window_best[better] = d[better]
            labels[y0:y1, x0:x1][better] = ci

        # stragglers outside every window: nearest center spatially
        missing = labels < 0
        if missing.any():
            ys_, xs_ = np.nonzero(missing)
            d = (xs_[:, None] - centers[None, :, 1]) ** 2 + (ys_[:, None] - centers[None, :, 2]) ** 2
            labels[ys_, xs_] = np.argmin(d, axis=1)

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        sums_i = np.bincount(flat, weights=intensity.ravel(), minlength=k)
        sums_x = np.bincount(flat, weights=np.tile(np.arange(w, dtype=np.float64), h), minlength=k)
        sums_y = np.bincount(flat, weights=np.repeat(np.arange(h, dtype=np.float64), w), minlength=k)
        occupied = counts > 0
        centers[occupied, 0] = sums_i[occupied] / counts[occupied]
        centers[occupied, 1] = sums_x[occupied] / counts[occupied]
        centers[occupied, 2] = sums_y[occupied] / counts[occupied]

    final = _enforce_connectivity(labels, min_size=spacing * spacing / 4.0)
    count = int(final.max()) + 1
    params = SlicParams(target_count=target_count, compactness=compactness, iterations=iterations, seed=seed)
    return SuperpixelMap(labels=final, count=count, params=params)


def build_graph(sp: SuperpixelMap) -> SuperpixelGraph:
    """Adjacency graph from 4-neighborhood label transitions, deduplicated."""
    labels = sp.labels
    pairs = []
    horiz = np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1)
    vert = np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1)
    for arr in (horiz, vert):
        diff = arr[arr[:, 0] != arr[:, 1]]
        if len(diff):
            pairs.append(np.sort(diff, axis=1))
    if pairs:
        edges = np.unique(np.concatenate(pairs, axis=0), axis=0)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    return SuperpixelGraph(count=sp.count, edges=edges)


def aggregate(sp: SuperpixelMap, values: np.ndarray) -> np.ndarray:
    """Exact per-superpixel (mean, min, max) over ``values``; shape (L, 3)."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != sp.shape:
        raise DimensionMismatchError(f"value map shape {values.shape} != {sp.shape}")
    flat_labels = sp.labels.ravel()
    flat_values = values.ravel()
    counts = np.bincount(flat_labels, minlength=sp.count).astype(np.float64)
    sums = np.bincount(flat_labels, weights=flat_values, minlength=sp.count)
    means = sums / counts
    mins = np.full(sp.count, np.inf)
    maxs = np.full(sp.count, -np.inf)
    np.minimum.at(mins, flat_labels, flat_values)
    np.maximum.at(maxs, flat_labels, flat_values)
    return np.stack([means, mins, maxs], axis=1)


def project_to_pixels(sp: SuperpixelMap, values: np.ndarray) -> np.ndarray:
    """Broadcast one value per superpixel back onto the pixel grid."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (sp.count,):
        raise DimensionMismatchError(f"expected {sp.count} values, got shape {values.shape}")
    return values[sp.labels]
