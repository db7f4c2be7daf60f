"""Cohesion of a document-entity matrix.

The index is the Frobenius norm of the pairwise scalar-product similarity
matrix, identical for the document projection ``A A^T`` and the entity
projection ``A^T A``. The main path assembles it from leading singular values
of the sparse matrix, extending the computed prefix until a certified bound on
the truncated tail of the fourth-power sum drops below tolerance; the explicit
sparse-product path serves as its oracle and as the fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, svds

from .corpus import EntityMatrix, Vocabulary
from .errors import EmptyBucketError, InputError, IntegrityError
from .series import IndexSeries

DEFAULT_TOL = 1e-6
DEFAULT_K_STEP = 16

# Fixed seed for the ARPACK starting vector; keeps repeated runs bit-identical.
_V0_SEED = 0x5EED


@dataclass(frozen=True)
class SvdSpectrum:
    """Leading singular values with truncation-certification metadata.

    ``residual_bound`` is an upper bound on the truncated tail's relative
    contribution to the fourth-power sum; ``converged`` means it met the
    requested tolerance.
    """

    sigmas: tuple[float, ...]
    k: int
    converged: bool
    residual_bound: float

    def __post_init__(self):
        if self.k != len(self.sigmas):
            raise IntegrityError("spectrum k does not match sigma count")
        if any(s < 0 for s in self.sigmas):
            raise IntegrityError("negative singular value")
        if any(self.sigmas[i] < self.sigmas[i + 1] for i in range(self.k - 1)):
            raise IntegrityError("singular values not descending")


@dataclass(frozen=True)
class CohesionResult:
    """Cohesion of one bucket: raw Frobenius value and its 1/m normalization."""

    bucket: date
    nci_raw: float
    nci_normalized: float
    m: int
    k_used: int
    method: str  # "svd" | "explicit"


def _csr(matrix: EntityMatrix) -> sp.csr_matrix:
    if matrix.m == 0:
        raise EmptyBucketError(f"bucket {matrix.bucket}: no documents")
    return matrix.to_csr()


def frobenius_explicit(matrix: EntityMatrix) -> float:
    """``||A A^T||_F`` through sparse products; the oracle path."""
    A = _csr(matrix)
    G = A @ A.T
    return math.sqrt(float(np.sum(G.data**2)))


def frobenius_entity_projection(matrix: EntityMatrix) -> float:
    """``||A^T A||_F``; equals the document projection by conservation."""
    A = _csr(matrix)
    G = A.T @ A
    return math.sqrt(float(np.sum(G.data**2)))


def _certify(
    sigmas: np.ndarray, mn: int, fro_sq: float, tol: float
) -> tuple[int, float, float] | None:
    """Smallest certified prefix of the computed spectrum, if any.

    Every truncated singular value is majorized by the next computed one (or
    the last, at the batch edge), so the tail of the fourth-power sum is
    bounded both by count * majorant^4 and, using the exact total energy
    ``||A||_F^2``, by majorant^2 * remaining second-moment mass. Returns
    (k, partial fourth-power sum, relative bound) for the smallest prefix
    whose bound is within ``tol``.
    """
    s2 = sigmas**2
    s4 = s2**2
    cum4 = np.cumsum(s4)
    cum2 = np.cumsum(s2)
    k_avail = len(sigmas)
    for k in range(1, k_avail + 1):
        if k == mn:
            return k, float(cum4[k - 1]), 0.0
        majorant = sigmas[k] if k < k_avail else sigmas[k_avail - 1]
        count_bound = (mn - k) * majorant**4
        mass_bound = majorant**2 * max(fro_sq - float(cum2[k - 1]), 0.0)
        bound = min(count_bound, mass_bound)
        if cum4[k - 1] > 0 and bound <= tol * cum4[k - 1]:
            return k, float(cum4[k - 1]), float(bound / cum4[k - 1])
    return None


def nci_svd(
    matrix: EntityMatrix,
    tol: float = DEFAULT_TOL,
    k_step: int = DEFAULT_K_STEP,
) -> tuple[CohesionResult, SvdSpectrum]:
    """Cohesion from incrementally computed leading singular values.

    Singular values are taken in batches of ``k_step`` from a Krylov solver on
    the sparse operator (never densified). Iteration stops once the certified
    relative tail bound is at most ``tol``; exhausting the spectrum without
    certification falls back to the explicit path and flags it.
    """
    if matrix.m == 0:
        raise EmptyBucketError(f"bucket {matrix.bucket}: no documents")
    if not 0.0 < tol < 1.0:
        raise InputError(f"tol must be in (0, 1), got {tol}")
    if k_step < 1:
        raise InputError(f"k_step must be >= 1, got {k_step}")

    m, n = matrix.m, matrix.n
    mn = min(m, n)
    fro_sq = float(matrix.nnz)  # binary matrix: ||A||_F^2 == nnz

    def result(raw: float, k_used: int, method: str) -> CohesionResult:
        return CohesionResult(
            bucket=matrix.bucket,
            nci_raw=raw,
            nci_normalized=raw / m,
            m=m,
            k_used=k_used,
            method=method,
        )

    if matrix.nnz == 0:
        return result(0.0, 0, "svd"), SvdSpectrum((), 0, True, 0.0)
    if mn == 1:
        sigma = math.sqrt(fro_sq)  # rank one: the lone singular value
        return result(sigma**2, 1, "svd"), SvdSpectrum((sigma,), 1, True, 0.0)

    A = matrix.to_csr()
    v0 = np.random.default_rng(_V0_SEED).standard_normal(mn)
    sigmas = np.empty(0)
    last_bound = math.inf
    k_computed = 0
    while True:
        k_req = min(k_computed + k_step, mn - 1)
        if k_req <= k_computed:
            break  # spectrum exhausted without certification
        try:
            vals = svds(A, k=k_req, v0=v0, return_singular_vectors=False)
        except (ArpackError, ArpackNoConvergence):
            break
        sigmas = np.sort(np.maximum(vals, 0.0))[::-1]
        k_computed = k_req
        certified = _certify(sigmas, mn, fro_sq, tol)
        if certified is not None:
            k_used, partial4, rel_bound = certified
            spectrum = SvdSpectrum(
                tuple(float(s) for s in sigmas[:k_used]), k_used, True, rel_bound
            )
            return result(math.sqrt(partial4), k_used, "svd"), spectrum
        cum4 = float(np.sum(sigmas**4))
        if cum4 > 0:
            last_bound = (mn - k_computed) * float(sigmas[-1] ** 4) / cum4

    raw = frobenius_explicit(matrix)
    spectrum = SvdSpectrum(
        tuple(float(s) for s in sigmas), int(len(sigmas)), False, last_bound
    )
    return result(raw, mn, "explicit"), spectrum


@dataclass(frozen=True)
class PartitionSpec:
    """Disjoint, exhaustive grouping of one matrix axis."""

    axis: str  # "entity" | "document"
    groups: tuple[tuple[str, tuple[int, ...]], ...]

    def __post_init__(self):
        if self.axis not in ("entity", "document"):
            raise InputError(f"axis must be 'entity' or 'document', got {self.axis!r}")

    def validate(self, size: int) -> None:
        """Check the groups partition ``range(size)``; name every defect."""
        seen: dict[int, str] = {}
        duplicated = []
        for name, ids in self.groups:
            for i in ids:
                if i in seen:
                    duplicated.append(f"{i} (in {seen[i]!r} and {name!r})")
                else:
                    seen[i] = name
        uncovered = [i for i in range(size) if i not in seen]
        out_of_range = sorted(i for i in seen if i < 0 or i >= size)
        if duplicated or uncovered or out_of_range:
            parts = []
            if uncovered:
                parts.append(f"uncovered ids: {uncovered}")
            if duplicated:
                parts.append(f"duplicated ids: {duplicated}")
            if out_of_range:
                parts.append(f"ids outside [0, {size}): {out_of_range}")
            raise IntegrityError(f"{self.axis} partition invalid; " + "; ".join(parts))


@dataclass(frozen=True)
class BlockCohesion:
    """Squared Frobenius mass of one similarity block between two groups."""

    group_a: str
    group_b: str
    frob_sq: float

    @property
    def frob(self) -> float:
        return math.sqrt(self.frob_sq)


def partition_cohesion(
    matrix: EntityMatrix, spec: PartitionSpec
) -> list[BlockCohesion]:
    """Per-block squared Frobenius masses over the full group-pair grid.

    Blocks sum exactly to the squared raw cohesion for any valid partition of
    either axis.
    """
    A = _csr(matrix)
    if spec.axis == "entity":
        spec.validate(matrix.n)
        sliced = {name: sp.csc_matrix(A)[:, list(ids)] for name, ids in spec.groups}

        def block(ga, gb):
            return sliced[ga].T @ sliced[gb]

    else:
        spec.validate(matrix.m)
        sliced = {name: A[list(ids), :] for name, ids in spec.groups}

        def block(ga, gb):
            return sliced[ga] @ sliced[gb].T

    out = []
    for name_a, _ in spec.groups:
        for name_b, _ in spec.groups:
            prod = block(name_a, name_b)
            out.append(BlockCohesion(name_a, name_b, float(np.sum(prod.data**2))))
    return out


def partition_from_taxonomy(vocab: Vocabulary, depth: int = 1) -> PartitionSpec:
    """Entity partition by taxonomy prefix of the given depth (roots for 1)."""
    groups: dict[str, list[int]] = {}
    for ent in vocab.entities:
        key = "/".join(ent.taxonomy_path[:depth])
        groups.setdefault(key, []).append(ent.id)
    ordered = tuple(
        (name, tuple(ids)) for name, ids in sorted(groups.items())
    )
    return PartitionSpec(axis="entity", groups=ordered)


@dataclass(frozen=True)
class NullModelReport:
    """Observed cohesion against a degree-preserving randomized ensemble."""

    observed: float
    sample_mean: float
    sample_std: float
    z_score: float | None
    n_samples: int
    seed: int
    degenerate: bool


def _rewire(matrix: EntityMatrix, rng: np.random.Generator) -> EntityMatrix:
    """One degree-preserving double-edge-swap randomization of the bipartite graph.

    10 * nnz swap attempts; a swap is rejected when it would duplicate an
    occurrence or be a no-op, which preserves both document lengths and entity
    document frequencies.
    """
    n = matrix.n
    doc_of = np.concatenate(
        [np.full(row.size, i, dtype=np.int64) for i, row in enumerate(matrix.rows)]
    ) if matrix.nnz else np.empty(0, dtype=np.int64)
    ent_of = (
        np.concatenate(matrix.rows) if matrix.nnz else np.empty(0, dtype=np.int64)
    )
    occupied = {int(i) * n + int(j) for i, j in zip(doc_of, ent_of)}
    nnz = matrix.nnz
    picks = rng.integers(0, nnz, size=(10 * nnz, 2))
    for e1, e2 in picks:
        i1, j1 = int(doc_of[e1]), int(ent_of[e1])
        i2, j2 = int(doc_of[e2]), int(ent_of[e2])
        if i1 == i2 or j1 == j2:
            continue
        new1, new2 = i1 * n + j2, i2 * n + j1
        if new1 in occupied or new2 in occupied:
            continue
        occupied.discard(i1 * n + j1)
        occupied.discard(i2 * n + j2)
        occupied.add(new1)
        occupied.add(new2)
        ent_of[e1], ent_of[e2] = j2, j1
    rows: list[list[int]] = [[] for _ in range(matrix.m)]
    for i, j in zip(doc_of, ent_of):
        rows[int(i)].append(int(j))
    return EntityMatrix.from_rows(matrix.bucket, n, [sorted(r) for r in rows])


def null_model(
    matrix: EntityMatrix,
    n_samples: int,
    seed: int,
    tol: float = DEFAULT_TOL,
) -> NullModelReport:
    """Z-score the observed normalized cohesion against rewired surrogates.

    Each sample's randomness derives from ``(seed, sample index)`` so the
    report is identical regardless of evaluation order.
    """
    if n_samples < 2:
        raise InputError(f"n_samples must be >= 2, got {n_samples}")
    if matrix.nnz < 2:
        raise InputError(f"null model needs nnz >= 2, got {matrix.nnz}")
    observed = nci_svd(matrix, tol=tol)[0].nci_normalized
    values = np.empty(n_samples)
    for idx in range(n_samples):
        rng = np.random.default_rng([seed, idx])
        sample = _rewire(matrix, rng)
        values[idx] = nci_svd(sample, tol=tol)[0].nci_normalized
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1))
    degenerate = std == 0.0
    z = None if degenerate else (observed - mean) / std
    return NullModelReport(
        observed=observed,
        sample_mean=mean,
        sample_std=std,
        z_score=z,
        n_samples=n_samples,
        seed=seed,
        degenerate=degenerate,
    )


def nci_series(
    matrices: list[EntityMatrix],
    tol: float = DEFAULT_TOL,
    name: str = "nci",
) -> IndexSeries:
    """Normalized cohesion per bucket; empty buckets become missing points."""
    points: list[tuple[date, float | None]] = []
    prev: date | None = None
    for matrix in matrices:
        if prev is not None and matrix.bucket <= prev:
            raise InputError(
                f"buckets not strictly increasing at {matrix.bucket} (after {prev})"
            )
        prev = matrix.bucket
        if matrix.m == 0:
            points.append((matrix.bucket, None))
        else:
            points.append((matrix.bucket, nci_svd(matrix, tol=tol)[0].nci_normalized))
    return IndexSeries(name, tuple(points))
