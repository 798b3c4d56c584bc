"""Delay embedding, 1-D Rips persistence and persistence-diagram vectorizations."""
import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import NamedTuple

import gudhi
import numpy as np
from scipy.spatial import cKDTree
from scipy.special import ndtr

from .errors import (
    ConstantSignal,
    DegenerateMesh,
    InvalidParameter,
    InvalidPixelSize,
    SignalTooShort,
    TooFewPoints,
)
from .dataset import FeatureMatrix, TimeSeriesRecord
from .parallel import parallel_map

logger = logging.getLogger(__name__)

FNN_THRESHOLD = 0.02
MAX_DIMENSION = 10
FNN_RTOL = 10.0
FNN_ATOL = 2.0
# peak-to-median magnitude ratio below which the spectrum counts as flat
FLAT_SPECTRUM_RATIO = 5.0

CARLSSON_NAMES = ("f1", "f2", "f3", "f4", "f5")


# ---------------------------------------------------------------------------
# Embedding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmbeddingParams:
    dimension: int
    delay: int

    def __post_init__(self):
        if self.dimension < 2:
            raise InvalidParameter(f"embedding dimension must be >= 2, got {self.dimension}")
        if self.delay < 1:
            raise InvalidParameter(f"delay must be >= 1, got {self.delay}")


@dataclass
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if not np.all(np.isfinite(self.points)):
            raise InvalidParameter("point cloud has non-finite coordinates")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


class DelayEstimate(NamedTuple):
    tau: int
    dominant_hz: float
    degenerate: bool


class DimensionEstimate(NamedTuple):
    dimension: int
    fnn_fractions: tuple[float, ...]
    capped: bool


def estimate_delay(x: np.ndarray, fs: float) -> DelayEstimate:
    """Quarter period of the dominant FFT frequency, in samples."""
    x = np.asarray(x, dtype=float)
    if x.size < 2 or np.ptp(x) == 0.0:
        raise ConstantSignal("delay estimation needs a non-constant signal")
    mag = np.abs(np.fft.rfft(x - x.mean()))[1:]
    freqs = np.fft.rfftfreq(x.size, d=1.0 / fs)[1:]
    k = int(np.argmax(mag))
    median = np.median(mag)
    degenerate = median > 0 and mag[k] / median < FLAT_SPECTRUM_RATIO
    tau = max(1, int(round(fs / (4.0 * freqs[k]))))
    if degenerate:
        logger.warning("Flat spectrum; delay %d from a weak dominant bin", tau)
    return DelayEstimate(tau, float(freqs[k]), bool(degenerate))


def takens_embed(x: np.ndarray, params: EmbeddingParams) -> PointCloud:
    """Rows (x_i, x_{i+tau}, ..., x_{i+(m-1)tau})."""
    x = np.asarray(x, dtype=float)
    span = (params.dimension - 1) * params.delay
    count = x.size - span
    if count < params.dimension + 1:
        raise SignalTooShort(f"{x.size} samples cannot hold m={params.dimension}, tau={params.delay}")
    windows = np.lib.stride_tricks.sliding_window_view(x, span + 1)[:, :: params.delay]
    return PointCloud(windows.copy())


def _fnn_fraction(x: np.ndarray, tau: int, m: int, sigma: float) -> float:
    count = x.size - m * tau
    # the (m+1)-th coordinate must exist for every point considered
    points = np.lib.stride_tricks.sliding_window_view(x, (m - 1) * tau + 1)[:count, ::tau]
    extra = x[m * tau: m * tau + count]
    dist, idx = cKDTree(points).query(points, k=2)
    d_m = dist[:, 1]
    gap = np.abs(extra - extra[idx[:, 1]])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d_m > 0, gap / d_m, np.where(gap > 0, np.inf, 0.0))
    false = (ratio > FNN_RTOL) | (gap / sigma > FNN_ATOL)
    return float(np.mean(false))


def estimate_dimension_fnn(x: np.ndarray, tau: int, threshold: float = FNN_THRESHOLD,
                           max_dimension: int = MAX_DIMENSION) -> DimensionEstimate:
    """Smallest m (at least 2) whose false-nearest-neighbour fraction is below ``threshold``.

    Args:
        x: Input samples, longer than 10 * tau.
        tau: Delay in samples.
        threshold: Acceptable false-neighbour fraction.
        max_dimension: Cap; returned with ``capped=True`` when reached.

    Returns:
        DimensionEstimate with the fraction curve that was evaluated.
    """
    x = np.asarray(x, dtype=float)
    if tau < 1:
        raise InvalidParameter("tau must be >= 1")
    if x.size <= 10 * tau:
        raise SignalTooShort(f"FNN needs more than {10 * tau} samples, got {x.size}")
    sigma = x.std() or 1.0
    fractions = []
    for m in range(1, max_dimension + 1):
        if x.size - m * tau < 2:
            break
        fraction = _fnn_fraction(x, tau, m, sigma)
        fractions.append(fraction)
        if fraction < threshold:
            return DimensionEstimate(max(2, m), tuple(fractions), False)
    logger.warning("FNN fraction never fell below %.3f; using dimension %d", threshold, max_dimension)
    return DimensionEstimate(max_dimension, tuple(fractions), True)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PersistenceDiagram:
    """Finite 1-D persistence pairs (birth, death) with death > birth >= 0."""
    pairs: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(self.pairs)):
            raise InvalidParameter("persistence pairs must be finite")
        if np.any(self.pairs[:, 1] <= self.pairs[:, 0]) or np.any(self.pairs[:, 0] < 0):
            raise InvalidParameter("persistence pairs need death > birth >= 0")

    def __len__(self) -> int:
        return self.pairs.shape[0]

    @property
    def births(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def deaths(self) -> np.ndarray:
        return self.pairs[:, 1]

    @property
    def lifetimes(self) -> np.ndarray:
        return self.pairs[:, 1] - self.pairs[:, 0]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, self.pairs, fmt="%.17g")

    @classmethod
    def load(cls, path: str | Path) -> "PersistenceDiagram":
        data = np.loadtxt(path, dtype=float, ndmin=2)
        return cls(data.reshape(-1, 2))


def rips_persistence_h1(cloud: PointCloud, max_points: int = 400, seed: int = 0) -> PersistenceDiagram:
    """H1 pairs of the Vietoris-Rips filtration (filtration value = edge length)."""
    points = cloud.points
    if len(points) > max_points:
        rng = np.random.default_rng(seed)
        points = points[np.sort(rng.choice(len(points), size=max_points, replace=False))]
    if len(points) < 4:
        raise TooFewPoints(f"Rips persistence needs at least 4 points, got {len(points)}")
    tree = gudhi.RipsComplex(points=points).create_simplex_tree(max_dimension=1)
    tree.collapse_edges()
    tree.expansion(2)
    tree.compute_persistence(homology_coeff_field=2, min_persistence=0.0)
    pairs = np.asarray(tree.persistence_intervals_in_dimension(1), dtype=float).reshape(-1, 2)
    pairs = pairs[np.isfinite(pairs[:, 1]) & (pairs[:, 1] > pairs[:, 0])]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return PersistenceDiagram(pairs[order])


# ---------------------------------------------------------------------------
# Vectorizations
# ---------------------------------------------------------------------------

def carlsson_coordinates(diagram: PersistenceDiagram) -> np.ndarray:
    if len(diagram) == 0:
        return np.zeros(5)
    b, d, life = diagram.births, diagram.deaths, diagram.lifetimes
    d_max = d.max()
    return np.array([
        np.sum(b * life),
        np.sum((d_max - d) * life),
        np.sum(b ** 2 * life ** 4),
        np.sum((d_max - d) ** 2 * life ** 4),
        life.max(),
    ])


def carlsson_feature_subsets() -> list[tuple[str, ...]]:
    """All 31 non-empty subsets of the five coordinates, smallest first."""
    return [c for r in range(1, 6) for c in itertools.combinations(CARLSSON_NAMES, r)]


def persistence_weight(lifetimes: np.ndarray, b_cap: float) -> np.ndarray:
    life = np.asarray(lifetimes, dtype=float)
    if b_cap <= 0:
        return (life > 0).astype(float)
    return np.clip(life / b_cap, 0.0, 1.0)


def _grid(lo: float, hi: float, pixel: float) -> np.ndarray:
    n = max(1, int(np.ceil((hi - lo) / pixel - 1e-9)))
    return lo + pixel * np.arange(n + 1)


def _image(births: np.ndarray, lifetimes: np.ndarray, weights: np.ndarray, sigma: float,
           edges_b: np.ndarray, edges_l: np.ndarray) -> np.ndarray:
    # exact Gaussian mass per pixel: product of 1-D CDF differences
    mass_b = np.diff(ndtr((edges_b[None, :] - births[:, None]) / sigma), axis=1)
    mass_l = np.diff(ndtr((edges_l[None, :] - lifetimes[:, None]) / sigma), axis=1)
    image = np.einsum("p,pi,pj->ji", weights, mass_b, mass_l)
    return image.ravel()


def persistence_image(
    diagram: PersistenceDiagram,
    sigma: float = 0.1,
    pixel_size: float = 0.1,
    range_b: tuple[float, float] = (0.0, 1.0),
    range_l: tuple[float, float] = (0.0, 1.0),
    b_cap: float | None = None,
) -> np.ndarray:
    """Row-major pixel integrals of the weighted Gaussian surface over (birth, lifetime).

    Rows run over lifetime, columns over birth. Ranges that do not cover the
    diagram are widened by whole pixels. ``b_cap`` defaults to the diagram's
    own maximum lifetime.
    """
    if pixel_size <= 0:
        raise InvalidPixelSize(f"pixel size must be positive, got {pixel_size}")
    if sigma <= 0:
        raise InvalidParameter("sigma must be positive")
    b_lo, b_hi = range_b
    l_lo, l_hi = range_l
    if len(diagram):
        births, life = diagram.births, diagram.lifetimes
        if births.min() < b_lo:
            b_lo -= pixel_size * np.ceil((b_lo - births.min()) / pixel_size)
        if births.max() > b_hi:
            b_hi += pixel_size * np.ceil((births.max() - b_hi) / pixel_size)
        if life.min() < l_lo:
            l_lo -= pixel_size * np.ceil((l_lo - life.min()) / pixel_size)
        if life.max() > l_hi:
            l_hi += pixel_size * np.ceil((life.max() - l_hi) / pixel_size)
    edges_b = _grid(b_lo, b_hi, pixel_size)
    edges_l = _grid(l_lo, l_hi, pixel_size)
    if len(diagram) == 0:
        return np.zeros((edges_b.size - 1) * (edges_l.size - 1))
    cap = diagram.lifetimes.max() if b_cap is None else b_cap
    weights = persistence_weight(diagram.lifetimes, cap)
    return _image(diagram.births, diagram.lifetimes, weights, sigma, edges_b, edges_l)


class PersistenceImager:
    """Persistence images on ranges and weight cap frozen from training diagrams."""

    def __init__(self, sigma: float = 0.1, pixel_size: float = 0.1, padding: float = 0.1):
        if pixel_size <= 0:
            raise InvalidPixelSize(f"pixel size must be positive, got {pixel_size}")
        self.sigma = sigma
        self.pixel_size = pixel_size
        self.padding = padding
        self.edges_b_: np.ndarray | None = None
        self.edges_l_: np.ndarray | None = None
        self.b_cap_: float = 0.0

    def fit(self, diagrams: Sequence[PersistenceDiagram]) -> "PersistenceImager":
        pooled = np.vstack([d.pairs for d in diagrams] + [np.empty((0, 2))])
        if pooled.size == 0:
            b_lo, b_hi, l_lo, l_hi = 0.0, 1.0, 0.0, 1.0
        else:
            births, life = pooled[:, 0], pooled[:, 1] - pooled[:, 0]
            b_pad = self.padding * max(np.ptp(births), self.pixel_size)
            l_pad = self.padding * max(np.ptp(life), self.pixel_size)
            b_lo, b_hi = max(0.0, births.min() - b_pad), births.max() + b_pad
            l_lo, l_hi = max(0.0, life.min() - l_pad), life.max() + l_pad
            self.b_cap_ = float(life.max())
        self.edges_b_ = _grid(b_lo, b_hi, self.pixel_size)
        self.edges_l_ = _grid(l_lo, l_hi, self.pixel_size)
        return self

    @property
    def n_features(self) -> int:
        return (self.edges_b_.size - 1) * (self.edges_l_.size - 1)

    def transform(self, diagrams: Sequence[PersistenceDiagram]) -> np.ndarray:
        if self.edges_b_ is None:
            raise InvalidParameter("PersistenceImager used before fit")
        rows = []
        for d in diagrams:
            if len(d) == 0:
                rows.append(np.zeros(self.n_features))
                continue
            births = np.clip(d.births, self.edges_b_[0], self.edges_b_[-1])
            life = np.clip(d.lifetimes, self.edges_l_[0], self.edges_l_[-1])
            moved = int(np.count_nonzero((births != d.births) | (life != d.lifetimes)))
            if moved:
                logger.warning("Clipped %d diagram points into the fitted image range", moved)
            weights = persistence_weight(life, self.b_cap_)
            rows.append(_image(births, life, weights, self.sigma, self.edges_b_, self.edges_l_))
        return np.vstack(rows) if rows else np.empty((0, self.n_features))

    @property
    def feature_names(self) -> list[str]:
        n_b = self.edges_b_.size - 1
        return [f"pi_{i // n_b}_{i % n_b}" for i in range(self.n_features)]


def landscape_values(diagram: PersistenceDiagram, k: int, xs: np.ndarray) -> np.ndarray:
    """k-th largest triangle function max(0, min(x - b, d - x)) evaluated at ``xs``."""
    xs = np.asarray(xs, dtype=float)
    if k < 1:
        raise InvalidParameter("landscape index k must be >= 1")
    if len(diagram) < k:
        return np.zeros_like(xs)
    tents = np.maximum(0.0, np.minimum(xs[None, :] - diagram.births[:, None],
                                       diagram.deaths[:, None] - xs[None, :]))
    return -np.partition(-tents, k - 1, axis=0)[k - 1]


def landscape_nodes(diagram: PersistenceDiagram, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints (x, lambda_k(x)) of the piecewise-linear k-th landscape."""
    if len(diagram) < k:
        return np.empty(0), np.empty(0)
    b, d = diagram.births, diagram.deaths
    # a rising edge of one tent meets a falling edge of another at (b_i + d_j) / 2
    crossings = 0.5 * (b[:, None] + d[None, :]).ravel()
    lo, hi = b.min(), d.max()
    xs = np.unique(np.concatenate([b, d, crossings[(crossings >= lo) & (crossings <= hi)]]))
    ys = landscape_values(diagram, k, xs)
    if xs.size > 2:
        slopes = np.diff(ys) / np.diff(xs)
        keep = np.concatenate([[True], ~np.isclose(slopes[1:], slopes[:-1], rtol=0, atol=1e-12), [True]])
        xs, ys = xs[keep], ys[keep]
    return xs, ys


class LandscapeVectorizer:
    """k-th landscape sampled on the mesh of node abscissas pooled at fit time."""

    def __init__(self, k: int = 1):
        if k < 1:
            raise InvalidParameter("landscape index k must be >= 1")
        self.k = k
        self.mesh_: np.ndarray | None = None

    def fit(self, diagrams: Sequence[PersistenceDiagram]) -> "LandscapeVectorizer":
        nodes = [landscape_nodes(d, self.k)[0] for d in diagrams]
        mesh = np.unique(np.concatenate(nodes + [np.empty(0)]))
        self.mesh_ = mesh if mesh.size else np.zeros(1)
        return self

    def transform(self, diagrams: Sequence[PersistenceDiagram]) -> np.ndarray:
        if self.mesh_ is None:
            raise InvalidParameter("LandscapeVectorizer used before fit")
        return np.vstack([landscape_values(d, self.k, self.mesh_) for d in diagrams]) \
            if diagrams else np.empty((0, self.mesh_.size))

    @property
    def feature_names(self) -> list[str]:
        return [f"pl{self.k}_{i}" for i in range(self.mesh_.size)]


def landscape_features(diagrams: Sequence[PersistenceDiagram], landscape_k: int = 1) -> np.ndarray:
    """Rows of lambda_k values on the mesh shared by all ``diagrams``."""
    if not diagrams:
        raise InvalidParameter("need at least one diagram")
    return LandscapeVectorizer(landscape_k).fit(diagrams).transform(diagrams)


def lagrange_basis(mesh: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix L[j, p] = l_j(x_p) of Lagrange cardinal polynomials on ``mesh``."""
    mesh = np.asarray(mesh, dtype=float)
    x = np.asarray(x, dtype=float)
    if mesh.size < 2:
        raise DegenerateMesh("a mesh needs at least two nodes")
    if np.unique(mesh).size != mesh.size:
        raise DegenerateMesh("mesh nodes must be distinct")
    basis = np.ones((mesh.size, x.size))
    for j, a_j in enumerate(mesh):
        for i, a_i in enumerate(mesh):
            if i != j:
                basis[j] *= (x - a_i) / (a_j - a_i)
    return basis


def _expand(mesh: np.ndarray, values: np.ndarray) -> np.ndarray:
    lo, hi = mesh.min(), mesh.max()
    if values.size == 0 or (values.min() >= lo and values.max() <= hi):
        return mesh
    return np.linspace(min(lo, values.min()), max(hi, values.max()), mesh.size)


def _template_rows(diagrams, mesh_a, mesh_b) -> np.ndarray:
    rows = []
    for d in diagrams:
        if len(d) == 0:
            rows.append(np.zeros(mesh_a.size * mesh_b.size))
            continue
        la = lagrange_basis(mesh_a, d.births)
        lb = lagrange_basis(mesh_b, d.lifetimes)
        rows.append(np.abs(la[:, None, :] * lb[None, :, :]).sum(axis=2).ravel())
    return np.vstack(rows) if rows else np.empty((0, mesh_a.size * mesh_b.size))


def template_function_features(diagrams: Sequence[PersistenceDiagram], mesh_a: Sequence[float],
                               mesh_b: Sequence[float]) -> np.ndarray:
    """Sum over points of |l_i^A(birth) * l_j^B(lifetime)|, row-major in (i, j).

    Meshes that do not cover every point are replaced by uniform grids of the
    same size over the widened range.
    """
    mesh_a = np.asarray(mesh_a, dtype=float)
    mesh_b = np.asarray(mesh_b, dtype=float)
    lagrange_basis(mesh_a, np.empty(0))
    lagrange_basis(mesh_b, np.empty(0))
    pooled = np.vstack([d.pairs for d in diagrams] + [np.empty((0, 2))])
    mesh_a = _expand(mesh_a, pooled[:, 0])
    mesh_b = _expand(mesh_b, pooled[:, 1] - pooled[:, 0])
    return _template_rows(diagrams, mesh_a, mesh_b)


class TemplateFunctionVectorizer:
    """Lagrange template functions on uniform meshes frozen from training diagrams."""

    def __init__(self, n_birth: int = 5, n_lifetime: int = 5, padding: float = 0.1):
        if n_birth < 2 or n_lifetime < 2:
            raise DegenerateMesh("template meshes need at least two nodes")
        self.n_birth = n_birth
        self.n_lifetime = n_lifetime
        self.padding = padding
        self.mesh_a_: np.ndarray | None = None
        self.mesh_b_: np.ndarray | None = None

    def fit(self, diagrams: Sequence[PersistenceDiagram]) -> "TemplateFunctionVectorizer":
        pooled = np.vstack([d.pairs for d in diagrams] + [np.empty((0, 2))])
        if pooled.size == 0:
            births, life = np.array([0.0, 1.0]), np.array([0.1, 1.0])
        else:
            births, life = pooled[:, 0], pooled[:, 1] - pooled[:, 0]
        b_pad = self.padding * max(np.ptp(births), 1e-6)
        l_pad = self.padding * max(np.ptp(life), 1e-6)
        self.mesh_a_ = np.linspace(births.min() - b_pad, births.max() + b_pad, self.n_birth)
        l_lo = life.min() - l_pad
        if l_lo <= 0:
            l_lo = 0.5 * life.min()
        self.mesh_b_ = np.linspace(l_lo, life.max() + l_pad, self.n_lifetime)
        return self

    def transform(self, diagrams: Sequence[PersistenceDiagram]) -> np.ndarray:
        if self.mesh_a_ is None:
            raise InvalidParameter("TemplateFunctionVectorizer used before fit")
        clipped = []
        for d in diagrams:
            if len(d) == 0:
                clipped.append(d)
                continue
            # polynomials explode outside the mesh; hold target points at its edges
            b = np.clip(d.births, self.mesh_a_[0], self.mesh_a_[-1])
            life = np.clip(d.lifetimes, self.mesh_b_[0], self.mesh_b_[-1])
            moved = int(np.count_nonzero((b != d.births) | (life != d.lifetimes)))
            if moved:
                logger.warning("Clipped %d diagram points onto the template mesh", moved)
            clipped.append(_ClippedDiagram(b, life))
        return _template_rows(clipped, self.mesh_a_, self.mesh_b_)

    @property
    def feature_names(self) -> list[str]:
        return [f"tf_{i}_{j}" for i in range(self.n_birth) for j in range(self.n_lifetime)]


class _ClippedDiagram:
    """Birth/lifetime view that may leave the birth >= 0 domain after clipping."""

    def __init__(self, births: np.ndarray, lifetimes: np.ndarray):
        self.births = births
        self.lifetimes = lifetimes

    def __len__(self) -> int:
        return self.births.size


# ---------------------------------------------------------------------------
# Record pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TdaParams:
    max_points: int = 400
    fnn_threshold: float = FNN_THRESHOLD
    max_dimension: int = MAX_DIMENSION
    sigma: float = 0.1
    pixel_size: float = 0.1
    landscape_k: int = 1
    template_nodes: int = 5
    padding: float = 0.1
    cc_subset_search: bool = False

    @classmethod
    def from_config(cls, section: dict) -> "TdaParams":
        return cls(**{k: v for k, v in section.items() if k in cls.__dataclass_fields__})


def record_diagram(record: TimeSeriesRecord, params: TdaParams = TdaParams(), seed: int = 0) -> PersistenceDiagram:
    """Delay, FNN dimension, embedding and H1 persistence of one record."""
    delay = estimate_delay(record.samples, record.fs)
    dim = estimate_dimension_fnn(record.samples, delay.tau, params.fnn_threshold, params.max_dimension)
    if dim.capped:
        logger.warning("Record %s: FNN cap reached", record.id)
    cloud = takens_embed(record.samples, EmbeddingParams(dim.dimension, delay.tau))
    return rips_persistence_h1(cloud, params.max_points, seed)


def diagrams_for_records(records: Sequence[TimeSeriesRecord], params: TdaParams = TdaParams(),
                         seed: int = 0, cache_dir: str | Path | None = None,
                         n_jobs: int | None = None) -> list[PersistenceDiagram]:
    """Diagrams for every record, read from / written to ``cache_dir`` keyed by record id."""
    cache = Path(cache_dir) if cache_dir else None
    todo = [r for r in records if cache is None or not (cache / f"{r.id}.txt").exists()]
    computed = dict(zip((r.id for r in todo),
                        parallel_map(partial(record_diagram, params=params, seed=seed), todo,
                                     n_jobs=n_jobs, desc="persistence")))
    diagrams = []
    for r in records:
        if r.id in computed:
            diagram = computed[r.id]
            if cache is not None:
                diagram.save(cache / f"{r.id}.txt")
        else:
            diagram = PersistenceDiagram.load(cache / f"{r.id}.txt")
        diagrams.append(diagram)
    return diagrams


TDA_METHODS = ("cc", "pi", "pl", "tf")


def make_vectorizer(method: str, params: TdaParams = TdaParams()):
    """Fitted-on-source vectorizer for ``pi``/``pl``/``tf``; None for ``cc``."""
    if method == "cc":
        return None
    if method == "pi":
        return PersistenceImager(params.sigma, params.pixel_size, params.padding)
    if method == "pl":
        return LandscapeVectorizer(params.landscape_k)
    if method == "tf":
        return TemplateFunctionVectorizer(params.template_nodes, params.template_nodes, params.padding)
    raise InvalidParameter(f"unknown TDA method {method!r}; expected one of {TDA_METHODS}")


def vectorize(method: str, diagrams: Sequence[PersistenceDiagram], record_ids: Sequence[str],
              labels: Sequence[int], tag: str = "", vectorizer=None) -> FeatureMatrix:
    """Feature matrix from diagrams; ``vectorizer`` must already be fitted unless ``method`` is cc."""
    if method == "cc":
        values = np.vstack([carlsson_coordinates(d) for d in diagrams] + [np.empty((0, 5))])
        return FeatureMatrix(record_ids, list(CARLSSON_NAMES), values, labels, tag)
    if vectorizer is None:
        raise InvalidParameter(f"method {method!r} needs a fitted vectorizer")
    return FeatureMatrix(record_ids, vectorizer.feature_names, vectorizer.transform(diagrams), labels, tag)


class DiagramFeatures:
    """Per-tag diagrams whose vectorizer is fitted on whichever tag acts as source."""

    def __init__(self, method: str, params: TdaParams = TdaParams()):
        make_vectorizer(method, params)
        self.method = method
        self.params = params
        self._diagrams: dict[str, list[PersistenceDiagram]] = {}
        self._ids: dict[str, list[str]] = {}
        self._labels: dict[str, np.ndarray] = {}
        self._fitted: dict[str, dict[str, FeatureMatrix]] = {}

    def add_tag(self, tag: str, diagrams: Sequence[PersistenceDiagram], record_ids: Sequence[str],
                labels: Sequence[int]) -> None:
        if len(diagrams) != len(record_ids) or len(record_ids) != len(labels):
            raise InvalidParameter(f"tag {tag!r}: diagrams, ids and labels differ in length")
        self._diagrams[tag] = list(diagrams)
        self._ids[tag] = [str(r) for r in record_ids]
        self._labels[tag] = np.asarray(labels, dtype=int)
        self._fitted.clear()

    def __contains__(self, tag: str) -> bool:
        return tag in self._diagrams

    @property
    def tags(self) -> list[str]:
        return list(self._diagrams)

    def record_ids(self, tag: str) -> list[str]:
        return self._ids[tag]

    def labels(self, tag: str) -> np.ndarray:
        return self._labels[tag]

    def for_source(self, source_tag: str) -> dict[str, FeatureMatrix]:
        """Feature matrices of every tag, vectorized with ranges frozen from ``source_tag``."""
        if source_tag not in self._fitted:
            vectorizer = make_vectorizer(self.method, self.params)
            if vectorizer is not None:
                vectorizer.fit(self._diagrams[source_tag])
            self._fitted[source_tag] = {
                tag: vectorize(self.method, self._diagrams[tag], self._ids[tag], self._labels[tag], tag, vectorizer)
                for tag in self._diagrams
            }
        return self._fitted[source_tag]
