"""Residual vector quantization with EMA-learned codebooks.

Each code keeps two views of the same running statistics: a unit-norm
direction ``v_k = normalize(m_k / (n_k + eps))`` used for the search, and
the running mean ``u_k = m_k / (n_k + eps)`` that is subtracted from the
residual.  The first layer is queried with the l2-normalized embedding and
deeper layers with the raw residual; against unit-norm directions the
nearest-code search is a cosine search.  ``normalize(e) - dequantize(codes)``
equals the last residual exactly.

Subtracting unit vectors instead would overshoot any residual shorter than
one, so residual norms would grow with depth; the running mean has the
scale of the residuals it was fitted to.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IndexOutOfRange, NonFiniteInput, ShapeMismatch

EMA_EPS = 1e-6


def l2_normalize(x: np.ndarray, axis: int = -1, eps: float = 1e-12) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / np.maximum(np.linalg.norm(x, axis=axis, keepdims=True), eps)


@dataclass
class Codebook:
    vectors: np.ndarray
    ema_count: np.ndarray = None
    ema_sum: np.ndarray = None
    decay: float = 0.99
    eps: float = EMA_EPS
    values: np.ndarray = None

    def __post_init__(self):
        self.vectors = l2_normalize(self.vectors)
        if self.ema_count is None:
            self.ema_count = np.ones(self.size)
        if self.ema_sum is None:
            self.ema_sum = self.vectors * self.ema_count[:, None]
        if self.values is None:
            n = self.ema_count[:, None]
            self.values = np.where(n > 0, self.ema_sum / np.where(n > 0, n, 1.0), self.vectors)
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def nearest(self, query: np.ndarray) -> np.ndarray:
        """Index of the closest code for each row of ``query``; ties go to the lowest index."""
        d2 = (query ** 2).sum(-1, keepdims=True) - 2.0 * query @ self.vectors.T + (self.vectors ** 2).sum(-1)
        return np.argmin(d2, axis=-1)


@dataclass
class RvqStack:
    books: list[Codebook]
    domain: str = "time"

    def __post_init__(self):
        if not self.books:
            raise ValueError("an RVQ stack needs at least one codebook")
        if len({b.dim for b in self.books}) != 1:
            raise ShapeMismatch("all codebooks in a stack must share the code dimension")

    @property
    def depth(self) -> int:
        return len(self.books)

    @property
    def dim(self) -> int:
        return self.books[0].dim

    @classmethod
    def random(cls, depth: int, size: int, dim: int, rng: np.random.Generator, domain: str = "time",
               decay: float = 0.99) -> "RvqStack":
        return cls([Codebook(rng.normal(size=(size, dim)), decay=decay) for _ in range(depth)], domain)


@dataclass
class Quantized:
    codes: np.ndarray        # (..., L) int
    quantized: np.ndarray    # (..., d')
    residuals: np.ndarray    # (L+1, ..., d'); residuals[0] is the normalized input

    @property
    def selected(self) -> np.ndarray:
        """(L, ..., d') code vectors chosen at each layer."""
        return self.residuals[:-1] - self.residuals[1:]


def quantize(stack: RvqStack, e) -> Quantized:
    """Greedy residual quantization of one vector (shape (d',)) or a batch (shape (..., d'))."""
    e = np.asarray(e, dtype=np.float64)
    if e.shape[-1] != stack.dim:
        raise ShapeMismatch(f"embedding width {e.shape[-1]} != code dim {stack.dim}")
    if not np.all(np.isfinite(e)):
        raise NonFiniteInput("cannot quantize non-finite embeddings")
    lead = e.shape[:-1]
    r = l2_normalize(e.reshape(-1, stack.dim))
    residuals = [r]
    codes = np.empty((r.shape[0], stack.depth), dtype=np.int64)
    total = np.zeros_like(r)
    for layer, book in enumerate(stack.books):
        idx = book.nearest(r)
        chosen = book.values[idx]
        codes[:, layer] = idx
        total = total + chosen
        r = r - chosen
        residuals.append(r)
    res = np.stack(residuals).reshape((stack.depth + 1,) + lead + (stack.dim,))
    return Quantized(codes.reshape(lead + (stack.depth,)), total.reshape(lead + (stack.dim,)), res)


def dequantize(stack: RvqStack, codes) -> np.ndarray:
    """Sum of the selected code values; ``codes`` has shape (..., L)."""
    codes = np.asarray(codes, dtype=np.int64)
    if codes.shape[-1] != stack.depth:
        raise ShapeMismatch(f"expected {stack.depth} codes per item, got {codes.shape[-1]}")
    out = np.zeros(codes.shape[:-1] + (stack.dim,))
    for layer, book in enumerate(stack.books):
        idx = codes[..., layer]
        if idx.size and (idx.min() < 0 or idx.max() >= book.size):
            raise IndexOutOfRange(f"layer {layer} code outside [0, {book.size})")
        out = out + book.values[idx]
    return out


def ema_update(book: Codebook, codes, embeddings) -> Codebook:
    """One EMA step from (code index, embedding) assignments; updates ``book`` in place and returns it.

    n_k <- g n_k + (1-g) count_k;  m_k <- g m_k + (1-g) sum_k;  u_k <- m_k / (n_k + eps);
    v_k <- normalize(u_k).  Codes whose running sum is exactly zero keep their previous direction.
    """
    codes = np.asarray(codes, dtype=np.int64).reshape(-1)
    emb = np.asarray(embeddings, dtype=np.float64).reshape(-1, book.dim)
    if not np.all(np.isfinite(emb)):
        raise NonFiniteInput("EMA update with non-finite embeddings")
    counts = np.bincount(codes, minlength=book.size).astype(np.float64)
    sums = np.zeros((book.size, book.dim))
    np.add.at(sums, codes, emb)
    g = book.decay
    book.ema_count = g * book.ema_count + (1.0 - g) * counts
    book.ema_sum = g * book.ema_sum + (1.0 - g) * sums
    raw = book.ema_sum / (book.ema_count[:, None] + book.eps)
    book.values = raw
    norms = np.linalg.norm(raw, axis=1)
    live = norms > 0
    book.vectors[live] = raw[live] / norms[live, None]
    return book


def commitment_loss(residual_inputs, selected_codes, beta: float) -> float:
    """beta * sum over layers of ||r^(l-1) - v^(l)||^2, averaged over items.

    Inputs have shape (L, ..., d'); a plain (L, d') pair is a single item.
    """
    r = np.asarray(residual_inputs, dtype=np.float64)
    v = np.asarray(selected_codes, dtype=np.float64)
    if r.shape != v.shape:
        raise ShapeMismatch(f"commitment: residuals {r.shape} vs codes {v.shape}")
    per_layer = ((r - v) ** 2).sum(-1)
    per_item = per_layer.reshape(per_layer.shape[0], -1).sum(0)
    return float(beta * per_item.mean())


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; samples with replacement when there are fewer points than seeds."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    d2 = ((points - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            nxt = points[rng.integers(n)] + 1e-3 * rng.normal(size=points.shape[1])
        else:
            nxt = points[rng.choice(n, p=d2 / total)]
        centers.append(nxt)
        d2 = np.minimum(d2, ((points - nxt) ** 2).sum(1))
    return np.stack(centers)


def seed_stack(stack: RvqStack, embeddings: np.ndarray, rng: np.random.Generator) -> RvqStack:
    """Re-initialise each layer from k-means++ seeds drawn from that layer's residual inputs."""
    r = l2_normalize(np.asarray(embeddings, dtype=np.float64).reshape(-1, stack.dim))
    for book in stack.books:
        centers = kmeans_plus_plus(r, book.size, rng)
        book.vectors = l2_normalize(centers)
        book.ema_count = np.ones(book.size)
        book.ema_sum = centers.copy()
        book.values = centers.copy()
        r = r - book.values[book.nearest(r)]
    return stack


@dataclass
class TokenGrid:
    """Codes per token, domain and layer: ``codes[i, domain, layer]`` with domain 0 = time, 1 = freq."""

    codes: np.ndarray
    domains: tuple[str, ...] = field(default=("time", "freq"))

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)
        if self.codes.ndim < 3 or self.codes.shape[-2] != len(self.domains):
            raise ShapeMismatch(f"token grid shape {self.codes.shape} does not match {len(self.domains)} domains")

    @property
    def depth(self) -> int:
        return self.codes.shape[-1]
