"""Region adjacency, CAR weights and intrinsic CAR densities.

The intrinsic CAR prior on region effects ``beta`` with edge weights
``w_ij`` and scale ``sigma`` has joint log-density (up to a constant)::

    -1 / (2 sigma**2) * sum_{i<j} w_ij (beta_i - beta_j)**2

i.e. precision ``Q / sigma**2`` with ``Q = diag(W 1) - W`` the weighted graph
Laplacian.  ``Q`` is singular along the constant vector, so densities and
draws live on the sum-to-zero subspace.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse.csgraph import connected_components

from .exceptions import ConfigurationError, DomainError, IngestionError

__all__ = [
    "AdjacencyGraph",
    "SpatialWeights",
    "build_weights",
    "read_adjacency",
    "car_conditional",
    "car_quadratic_form",
    "car_log_density",
    "sample_car",
    "UNWEIGHTED",
    "TENURE_WEIGHTED",
]

UNWEIGHTED = "unweighted"
TENURE_WEIGHTED = "tenure_weighted"
TENURE_GAP_OFFSET = 0.00001


@dataclass(frozen=True)
class AdjacencyGraph:
    """Undirected graph on regions ``0 .. n_regions - 1``."""

    n_regions: int
    edges: frozenset

    def __post_init__(self):
        if self.n_regions < 1:
            raise ConfigurationError("graph needs at least one region")
        norm = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ConfigurationError(f"self-loop on region {a}")
            if not (0 <= a < self.n_regions and 0 <= b < self.n_regions):
                raise ConfigurationError(f"edge ({a}, {b}) out of range")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, n_regions, edges):
        return cls(n_regions, frozenset(tuple(e) for e in edges))

    def adjacency_matrix(self):
        A = np.zeros((self.n_regions, self.n_regions))
        for a, b in self.edges:
            A[a, b] = A[b, a] = 1.0
        return A

    @cached_property
    def _n_components(self):
        return int(connected_components(self.adjacency_matrix(), directed=False)[0])

    def n_components(self):
        return self._n_components

    def is_connected(self):
        return self.n_components() == 1

    def require_connected(self):
        n = self.n_components()
        if n != 1:
            raise ConfigurationError(
                f"adjacency graph has {n} connected components; "
                "island regions are not supported, supply a connected graph"
            )


@dataclass(frozen=True, eq=False)
class SpatialWeights:
    """Symmetric edge weights on an adjacency graph."""

    graph: AdjacencyGraph
    w: np.ndarray
    mode: str

    @property
    def n_regions(self):
        return self.graph.n_regions

    @cached_property
    def totals(self):
        """Total neighbour weight of each region."""
        return self.w.sum(axis=1)

    @cached_property
    def laplacian(self):
        return np.diag(self.totals) - self.w

    @cached_property
    def _eigen(self):
        lam, U = np.linalg.eigh(self.laplacian)
        return lam, U

    @cached_property
    def log_pseudo_determinant(self):
        """Log of the product of the non-null Laplacian eigenvalues."""
        lam, _ = self._eigen
        keep = lam > lam.max() * 1e-12
        return float(np.sum(np.log(lam[keep])))


def build_weights(graph, L=None, mode=UNWEIGHTED):
    """Edge weights for the CAR prior.

    Parameters
    ----------
    graph : AdjacencyGraph
    L : array_like, optional
        Tenure covariate per region; required in tenure-weighted mode.
    mode : {"unweighted", "tenure_weighted"}
        Unweighted uses ``w_ij = 1`` on every edge.  Tenure-weighted uses
        ``w_ij = 1 / (|L_i - L_j| + 0.00001)`` so that neighbours with similar
        tenure influence each other more.
    """
    n = graph.n_regions
    w = np.zeros((n, n))
    if mode == UNWEIGHTED:
        for a, b in graph.edges:
            w[a, b] = w[b, a] = 1.0
    elif mode == TENURE_WEIGHTED:
        if L is None:
            raise ConfigurationError("tenure-weighted mode needs the tenure covariate")
        L = np.asarray(L, dtype=float)
        if L.shape != (n,):
            raise ConfigurationError(f"tenure covariate has length {L.size}, expected {n}")
        for a, b in graph.edges:
            w[a, b] = w[b, a] = 1.0 / (abs(L[a] - L[b]) + TENURE_GAP_OFFSET)
    else:
        raise ConfigurationError(f"unknown spatial weighting mode {mode!r}")
    return SpatialWeights(graph, w, mode)


def read_adjacency(path, region_ids):
    """Read an edge list with one ``region_a,region_b`` pair per line.

    Blank lines and lines starting with ``#`` are skipped.  Region ids are
    mapped to positions in ``region_ids``; edges naming regions that are not
    in the panel are an error.
    """
    index = {str(r): k for k, r in enumerate(region_ids)}
    edges = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise IngestionError(f"{path}:{lineno}: expected 'region_a,region_b'")
            try:
                a, b = index[parts[0]], index[parts[1]]
            except KeyError as exc:
                raise IngestionError(f"{path}:{lineno}: unknown region id {exc.args[0]!r}") from None
            if a == b:
                raise IngestionError(f"{path}:{lineno}: self-loop on region {parts[0]!r}")
            edges.add((min(a, b), max(a, b)))
    return AdjacencyGraph(len(index), frozenset(edges))


def car_conditional(i, beta, W, sigma10):
    """Mean and variance of ``beta_i`` given all other region effects."""
    total = W.totals[i]
    if total <= 0:
        raise ConfigurationError(
            f"region {i} has no neighbours; isolated regions are rejected, "
            "supply a connected adjacency graph"
        )
    if sigma10 <= 0:
        raise DomainError("sigma10 must be positive")
    beta = np.asarray(beta, dtype=float)
    mean = float(W.w[i] @ beta) / total
    return mean, sigma10 ** 2 / total


def car_quadratic_form(beta, W):
    """``sum_{i<j} w_ij (beta_i - beta_j)**2``."""
    beta = np.asarray(beta, dtype=float)
    return float(beta @ W.laplacian @ beta)


def car_log_density(beta, W, sigma10, atol=1e-8):
    """Intrinsic CAR log-density on the sum-to-zero subspace.

    Includes the normalising terms of the ``n - 1`` dimensional Gaussian
    with precision ``Q / sigma10**2`` restricted to contrasts.
    """
    if not sigma10 > 0:
        raise DomainError("sigma10 must be positive")
    beta = np.asarray(beta, dtype=float)
    scale = max(1.0, float(np.max(np.abs(beta), initial=0.0)))
    if abs(beta.sum()) > atol * scale * beta.size:
        raise DomainError(f"CAR effects must sum to zero (sum = {beta.sum():.3g})")
    rank = W.n_regions - 1
    quad = car_quadratic_form(beta, W)
    return (
        -0.5 * rank * np.log(2 * np.pi * sigma10 ** 2)
        + 0.5 * W.log_pseudo_determinant
        - 0.5 * quad / sigma10 ** 2
    )


def sample_car(W, sigma10, rng):
    """Draw region effects from the intrinsic CAR on the sum-to-zero subspace."""
    W.graph.require_connected()
    if not sigma10 > 0:
        raise DomainError("sigma10 must be positive")
    lam, U = W._eigen
    # the smallest eigenvalue belongs to the constant vector on a connected graph
    lam, U = lam[1:], U[:, 1:]
    z = rng.standard_normal(lam.size)
    beta = sigma10 * (U @ (z / np.sqrt(lam)))
    return beta - beta.mean()
