"""Clustering of attack-description embeddings into super-tactics.

Three methods operate on the same inputs: spherical k-means on the raw
vectors, and Louvain plus spectral clustering on a (thresholded) cosine
similarity matrix.  Selection diagnostics follow: the summed Shannon
entropy of tactic-to-cluster proportions, the balanced score (population
standard deviation of cluster sizes), weighted modularity, and a plurality
rule that maps each tactic to one cluster.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import eigh

from .embed import EmbeddingVector

logger = logging.getLogger(__name__)

# Relative cutoff below which a Laplacian eigenvalue counts as zero.
_ZERO_EIGENVALUE_RTOL = 1e-10

# A single-node move must improve modularity by more than this to happen.
_MOVE_TOL = 1e-12

SUPER_TACTICS: dict[str, frozenset[str]] = {
    "Preparation and Reconnaissance": frozenset(
        {"Impact", "Initial Access", "Resource Development", "Reconnaissance", "Discovery"}
    ),
    "Persistence and Evasion": frozenset(
        {"Persistence", "Privilege Escalation", "Execution", "Defense Evasion"}
    ),
    "Credential Movement": frozenset({"Credential Access", "Lateral Movement"}),
    "Command and Data Manipulation": frozenset(
        {"Command and Control", "Collection", "Exfiltration"}
    ),
}


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric matrix of pairwise cosine similarities with node labels."""

    values: np.ndarray
    node_labels: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("similarity matrix must be square")
        if not np.allclose(values, values.T, atol=1e-12):
            raise ValueError("similarity matrix must be symmetric")
        if np.any(values < -1.0 - 1e-9) or np.any(values > 1.0 + 1e-9):
            raise ValueError("similarities must lie within [-1, 1]")
        labels = tuple(self.node_labels)
        if len(labels) != values.shape[0]:
            raise ValueError("one label per node required")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "node_labels", labels)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class ClusterAssignment:
    """Node-to-cluster labels with dense ids and no empty cluster."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=int)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a nonempty vector")
        present = np.unique(labels)
        if present[0] != 0 or present[-1] != present.size - 1:
            raise ValueError("cluster ids must be dense starting at 0")
        object.__setattr__(self, "labels", labels)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def n_nodes(self) -> int:
        return int(self.labels.size)


def _as_matrix(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        return np.asarray(vectors, dtype=float)
    rows = [v.values if isinstance(v, EmbeddingVector) else np.asarray(v, float) for v in vectors]
    return np.vstack(rows)


def _unit_rows(matrix: np.ndarray, *, on_zero: str = "error") -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if on_zero == "error" and np.any(norms == 0.0):
        raise ValueError("undefined angle: zero vector in input")
    return matrix / np.where(norms == 0.0, 1.0, norms)


def build_similarity(vectors, node_labels: Sequence[str] | None = None) -> SimilarityMatrix:
    """Pairwise cosine similarity of the given vectors.

    The diagonal is set to exactly 1 and off-diagonal entries are clipped
    into [-1, 1] to absorb rounding.
    """
    matrix = _as_matrix(vectors)
    if matrix.shape[0] == 0:
        raise ValueError("empty corpus: no vectors")
    unit = _unit_rows(matrix)
    sims = np.clip(unit @ unit.T, -1.0, 1.0)
    sims = (sims + sims.T) / 2.0
    np.fill_diagonal(sims, 1.0)
    if node_labels is None:
        node_labels = tuple(str(i) for i in range(matrix.shape[0]))
    return SimilarityMatrix(sims, tuple(node_labels))


def apply_thresholds(
    sim: SimilarityMatrix,
    low: float = 0.25,
    high: float = 0.85,
    high_value: float = 0.5,
) -> SimilarityMatrix:
    """Sparsify and cap off-diagonal similarities.

    Off-diagonal entries below ``low`` are zeroed; entries above ``high``
    are replaced by ``high_value``.  The diagonal is never touched.
    """
    if low > high:
        raise ValueError("low threshold exceeds high threshold")
    values = sim.values.copy()
    mask = ~np.eye(sim.n, dtype=bool)
    off = values[mask]
    off[off < low] = 0.0
    off[off > high] = high_value
    values[mask] = off
    return SimilarityMatrix(values, sim.node_labels)


# ---------------------------------------------------------------------------
# Spherical k-means


def _kmeans_pp(unit: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ on the unit sphere with 1 - cos as the distance."""
    n = unit.shape[0]
    chosen = [int(rng.integers(n))]
    dist = 1.0 - unit @ unit[chosen[0]]
    for _ in range(1, k):
        weights = np.clip(dist, 0.0, None)
        total = weights.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(weights / total), rng.random()))
            idx = min(idx, n - 1)
        chosen.append(idx)
        dist = np.minimum(dist, 1.0 - unit @ unit[idx])
    return unit[chosen].copy()


def spherical_kmeans(
    vectors,
    k: int,
    *,
    seed: int,
    max_iter: int = 300,
    n_init: int = 4,
) -> ClusterAssignment:
    """K-means with cosine assignment and normalised-mean centroids.

    Runs ``n_init`` restarts from seeded k-means++ initialisations and
    keeps the partition with the highest total cosine to the assigned
    centroids, which guards against poor local optima.  Iteration stops
    when labels stop changing or after ``max_iter`` rounds; empty clusters
    are re-seeded from the points worst explained by the current
    centroids.
    """
    matrix = _as_matrix(vectors)
    n = matrix.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    if n_init < 1:
        raise ValueError("n_init must be at least 1")
    if k == n:
        return ClusterAssignment(np.arange(n))
    unit = _unit_rows(matrix, on_zero="keep")

    best_labels: np.ndarray | None = None
    best_score = -np.inf
    for restart in range(n_init):
        rng = np.random.default_rng(seed + 1_000_003 * restart)
        labels = _kmeans_once(unit, k, rng, max_iter)
        score = _kmeans_objective(unit, labels, k)
        if score > best_score:
            best_score = score
            best_labels = labels
    return ClusterAssignment(_densify(best_labels))


def _kmeans_once(
    unit: np.ndarray, k: int, rng: np.random.Generator, max_iter: int
) -> np.ndarray:
    n = unit.shape[0]
    centroids = _kmeans_pp(unit, k, rng)
    labels = np.full(n, -1)
    for _ in range(max_iter):
        sims = unit @ centroids.T
        new_labels = np.argmax(sims, axis=1)
        # Re-seed empties deterministically from the worst-fit points.
        fit = np.max(sims, axis=1)
        for cluster in range(k):
            if not np.any(new_labels == cluster):
                worst = int(np.argmin(fit))
                new_labels[worst] = cluster
                fit[worst] = np.inf
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for cluster in range(k):
            mean = unit[labels == cluster].mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0.0:
                centroids[cluster] = mean / norm
    return labels


def _kmeans_objective(unit: np.ndarray, labels: np.ndarray, k: int) -> float:
    total = 0.0
    for cluster in range(k):
        members = unit[labels == cluster]
        mean = members.mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm > 0.0:
            total += float((members @ (mean / norm)).sum())
    return total


def _densify(labels: np.ndarray) -> np.ndarray:
    """Relabel clusters as 0..k-1 ordered by smallest member node index."""
    order: dict[int, int] = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        if lab not in order:
            order[lab] = len(order)
        out[i] = order[lab]
    return out


# ---------------------------------------------------------------------------
# Louvain community detection


def _edge_weights(sim: SimilarityMatrix) -> np.ndarray:
    weights = np.array(sim.values, dtype=float)
    np.fill_diagonal(weights, 0.0)
    if np.any(weights < 0.0):
        raise ValueError("negative edge weights: apply thresholds first")
    return weights


def _local_moves(
    graph: np.ndarray,
    two_m: float,
    rng: np.random.Generator,
    init_labels: np.ndarray | None = None,
) -> tuple[np.ndarray, bool]:
    """Single-node move phase; sweeps in seeded order until stable.

    ``graph`` may carry self-loops on its diagonal (aggregated levels).
    Moves to every community, including empty ones, are evaluated, so the
    returned partition cannot be improved by any single-node move.
    """
    n = graph.shape[0]
    labels = np.arange(n) if init_labels is None else init_labels.copy()
    degrees = graph.sum(axis=1)
    m = two_m / 2.0
    comm_tot = np.bincount(labels, weights=degrees, minlength=n).astype(float)
    improved = False
    moved = True
    while moved:
        moved = False
        for i in rng.permutation(n):
            current = labels[i]
            w_to = np.bincount(labels, weights=graph[i], minlength=n)
            w_current = w_to[current] - graph[i, i]
            k_i = degrees[i]
            gains = (w_to - w_current) / m - k_i * (comm_tot - comm_tot[current] + k_i) / (
                2.0 * m * m
            )
            gains[current] = 0.0
            best = int(np.argmax(gains))
            if gains[best] > _MOVE_TOL:
                labels[i] = best
                comm_tot[current] -= k_i
                comm_tot[best] += k_i
                moved = True
                improved = True
    return labels, improved


def _aggregate(graph: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ids = np.unique(labels)
    dense = np.searchsorted(ids, labels)
    onehot = np.zeros((graph.shape[0], ids.size))
    onehot[np.arange(graph.shape[0]), dense] = 1.0
    return onehot.T @ graph @ onehot, dense


def louvain(sim: SimilarityMatrix, *, seed: int) -> ClusterAssignment:
    """Weighted Louvain at resolution 1 with a node-level polish pass.

    The usual move/aggregate cycle runs until no level improves; a final
    sweep of single-node moves on the original graph then guarantees the
    returned partition is locally optimal at node granularity.
    """
    weights = _edge_weights(sim)
    two_m = weights.sum()
    if two_m <= 0.0:
        raise ValueError("disconnected trivial graph: no positive edge weight")
    rng = np.random.default_rng(seed)

    membership = np.arange(sim.n)
    graph = weights
    while True:
        labels, improved = _local_moves(graph, two_m, rng)
        if not improved:
            break
        graph, dense = _aggregate(graph, labels)
        membership = dense[labels[membership]]
        if graph.shape[0] == membership.max() + 1 == len(np.unique(labels)) == labels.size:
            break

    labels, _ = _local_moves(weights, two_m, rng, init_labels=_densify(membership))
    return ClusterAssignment(_densify(labels))


def modularity(sim: SimilarityMatrix, assignment: ClusterAssignment) -> float:
    """Weighted modularity of a partition; self-loops are ignored."""
    if assignment.n_nodes != sim.n:
        raise ValueError("assignment and similarity matrix disagree on node count")
    weights = _edge_weights(sim)
    two_m = weights.sum()
    if two_m <= 0.0:
        raise ValueError("disconnected trivial graph: no positive edge weight")
    degrees = weights.sum(axis=1)
    q = 0.0
    for cluster in range(assignment.n_clusters):
        members = assignment.labels == cluster
        q += weights[np.ix_(members, members)].sum() / two_m
        q -= (degrees[members].sum() / two_m) ** 2
    return float(q)


# ---------------------------------------------------------------------------
# Spectral clustering


def spectral_cluster(
    sim: SimilarityMatrix,
    k: int,
    egn: int,
    *,
    seed: int,
) -> ClusterAssignment:
    """Unnormalised spectral clustering: L = D - S, then spherical k-means.

    Eigenvalues below 1e-10 of the largest are treated as zero.  The
    constant direction they always contain is discarded; when the graph is
    disconnected the rest of that eigenspace carries the component
    indicators and is kept, so exact block structure is preserved.  The
    features are the ``egn`` remaining eigenvectors of smallest eigenvalue.
    """
    n = sim.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    if not 1 <= egn <= n - 1:
        raise ValueError(f"egn must lie in [1, {n - 1}]")
    values = sim.values
    laplacian = np.diag(values.sum(axis=1)) - values
    eigenvalues, eigenvectors = eigh(laplacian)
    largest = max(abs(eigenvalues[0]), abs(eigenvalues[-1]), 1e-300)
    n_zero = int(np.sum(eigenvalues < _ZERO_EIGENVALUE_RTOL * largest))
    n_zero = max(n_zero, 1)

    blocks: list[np.ndarray] = []
    if n_zero > 1:
        # Orthonormal basis of the zero eigenspace minus its constant
        # direction: these are the connected-component indicators.
        zero_space = eigenvectors[:, :n_zero]
        ones = np.ones(n) / np.sqrt(n)
        deflated = zero_space - np.outer(ones, ones @ zero_space)
        q_mat, r_mat = np.linalg.qr(deflated)
        keep = np.abs(np.diag(r_mat)) > 1e-8
        blocks.append(q_mat[:, keep][:, : n_zero - 1])
    needed = egn - (n_zero - 1)
    if needed > 0:
        blocks.append(eigenvectors[:, n_zero : n_zero + needed])
    features = np.hstack(blocks)[:, :egn]
    return spherical_kmeans(features, k, seed=seed)


# ---------------------------------------------------------------------------
# Selection diagnostics


def entropy_sum(assignment: ClusterAssignment, tactic_labels: Sequence[str]) -> float:
    """Sum over tactics of the Shannon entropy of their cluster spread.

    Natural log; a tactic fully inside one cluster contributes zero.
    """
    labels = _check_tactics(assignment, tactic_labels)
    total = 0.0
    for tactic in sorted(set(tactic_labels)):
        members = labels[[i for i, t in enumerate(tactic_labels) if t == tactic]]
        counts = np.bincount(members, minlength=assignment.n_clusters).astype(float)
        props = counts / counts.sum()
        positive = props[props > 0.0]
        total += float(-(positive * np.log(positive)).sum())
    return total


def balanced_score(assignment: ClusterAssignment) -> float:
    """Population standard deviation of cluster member counts."""
    counts = np.bincount(assignment.labels, minlength=assignment.n_clusters)
    return float(np.std(counts))


def majority_assign(
    assignment: ClusterAssignment, tactic_labels: Sequence[str]
) -> dict[str, int]:
    """Map each tactic to the cluster holding the plurality of its members.

    Ties break toward the lowest cluster id.  Tactics are processed in
    first-appearance order so the result is stable for a given input.
    """
    labels = _check_tactics(assignment, tactic_labels)
    mapping: dict[str, int] = {}
    for i, tactic in enumerate(tactic_labels):
        if tactic in mapping:
            continue
        members = labels[[j for j, t in enumerate(tactic_labels) if t == tactic]]
        counts = np.bincount(members, minlength=assignment.n_clusters)
        mapping[tactic] = int(np.argmax(counts))
    return mapping


def _check_tactics(assignment: ClusterAssignment, tactic_labels: Sequence[str]) -> np.ndarray:
    if len(tactic_labels) != assignment.n_nodes:
        raise ValueError("one tactic label per node required")
    return assignment.labels


def name_super_groups(mapping: Mapping[str, int]) -> dict[int, str]:
    """Name each cluster of tactics, canonically when the composition matches.

    A cluster whose member tactics exactly match a known super-tactic
    composition gets that name; anything else gets a stable generated one.
    """
    groups: dict[int, set[str]] = {}
    for tactic, cluster in mapping.items():
        groups.setdefault(cluster, set()).add(tactic)
    names: dict[int, str] = {}
    for cluster in sorted(groups):
        composition = frozenset(groups[cluster])
        for name, members in SUPER_TACTICS.items():
            if composition == members:
                names[cluster] = name
                break
        else:
            names[cluster] = f"Group {cluster}"
    return names


@dataclass(frozen=True)
class GridRow:
    """One row of the method-comparison report."""

    method: str
    params: str
    k: int
    entropy_sum: float
    balanced_score: float
    modularity: float


def clustering_report(
    vectors,
    tactic_labels: Sequence[str],
    *,
    seed: int,
    low: float = 0.25,
    high: float = 0.85,
    high_value: float = 0.5,
    kmeans_ks: Iterable[int] = (4,),
    spectral_params: Iterable[tuple[int, int]] = ((4, 4), (4, 6)),
) -> tuple[list[GridRow], dict[str, ClusterAssignment]]:
    """Run every configured method and tabulate the selection diagnostics.

    Modularity is always evaluated on the thresholded similarity matrix so
    the column is comparable across methods.
    """
    sim = build_similarity(vectors, tactic_labels)
    thresholded = apply_thresholds(sim, low, high, high_value)
    rows: list[GridRow] = []
    assignments: dict[str, ClusterAssignment] = {}

    def add(method: str, params: str, assignment: ClusterAssignment) -> None:
        rows.append(
            GridRow(
                method,
                params,
                assignment.n_clusters,
                entropy_sum(assignment, tactic_labels),
                balanced_score(assignment),
                modularity(thresholded, assignment),
            )
        )
        assignments[f"{method}({params})"] = assignment

    for k in kmeans_ks:
        add("spherical_kmeans", f"k={k}", spherical_kmeans(vectors, k, seed=seed))
    add("louvain", f"low={low},high={high}", louvain(thresholded, seed=seed))
    for k, egn in spectral_params:
        add(
            "spectral",
            f"k={k},egn={egn}",
            spectral_cluster(thresholded, k, egn, seed=seed),
        )
    return rows, assignments
