"""Principal component analysis over the standardized indicator table.

Components are numbered 1-based, ordered by descending eigenvalue of the
sample correlation matrix, with the sign convention that each loading
column's largest-magnitude entry is positive.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import ConfigurationError, SchemaError, StateError
from .ingest import IndicatorTable

_RANK_EPS = 1e-10


@dataclass(frozen=True)
class PcaModel:
    """Loadings (indicators x components), eigenvalues and variance shares."""

    loadings: np.ndarray
    eigenvalues: np.ndarray
    explained_ratio: np.ndarray
    indicator_names: tuple[str, ...]
    col_means: np.ndarray
    col_stds: np.ndarray

    @property
    def n_components(self) -> int:
        return self.loadings.shape[1]


@dataclass(frozen=True)
class ScoreTable:
    """Component scores per neighborhood; `component_ids` are 1-based."""

    neighborhood_ids: list[str]
    scores: np.ndarray
    component_ids: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.neighborhood_ids)

    def select(self, components: list[int]) -> "ScoreTable":
        """Restrict to the given 1-based component ids, preserving order."""
        positions = []
        for comp in components:
            if comp not in self.component_ids:
                raise ConfigurationError(f"component {comp} not in score table")
            positions.append(self.component_ids.index(comp))
        return ScoreTable(
            neighborhood_ids=list(self.neighborhood_ids),
            scores=self.scores[:, positions],
            component_ids=tuple(components),
        )


def apply_sign_convention(loadings: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-|entry| is positive (idempotent)."""
    flipped = loadings.copy()
    for col in range(flipped.shape[1]):
        pivot = np.argmax(np.abs(flipped[:, col]))
        if flipped[pivot, col] < 0:
            flipped[:, col] = -flipped[:, col]
    return flipped


def fit_pca(table: IndicatorTable) -> PcaModel:
    """Fit PCA on a standardized indicator table.

    Eigendecomposition of the sample correlation matrix (covariance of the
    z-scores). Warns with the numerical rank when the correlation matrix is
    rank deficient.
    """
    if not table.standardized:
        raise StateError("fit_pca requires a standardized table")
    n, p = table.values.shape
    if n < p:
        raise StateError(f"need at least as many rows ({n}) as columns ({p})")

    corr = table.values.T @ table.values / (n - 1)
    result = numerics.symmetric_eigen(corr)
    eigenvalues = result.eigenvalues.copy()
    rank = int(np.sum(eigenvalues > _RANK_EPS * max(1.0, eigenvalues[0])))
    if rank < p:
        warnings.warn(
            f"correlation matrix is rank deficient (rank {rank} of {p})",
            stacklevel=2,
        )
    eigenvalues[np.abs(eigenvalues) < _RANK_EPS] = np.abs(
        eigenvalues[np.abs(eigenvalues) < _RANK_EPS]
    )
    return PcaModel(
        loadings=apply_sign_convention(result.eigenvectors),
        eigenvalues=eigenvalues,
        explained_ratio=eigenvalues / eigenvalues.sum(),
        indicator_names=table.columns,
        col_means=np.asarray(table.col_means),
        col_stds=np.asarray(table.col_stds),
    )


def transform(model: PcaModel, table: IndicatorTable) -> ScoreTable:
    """Project a standardized table onto the model's components."""
    if not table.standardized:
        raise StateError("transform requires a standardized table")
    if tuple(table.columns) != tuple(model.indicator_names):
        raise SchemaError(
            f"indicator labels {table.columns} do not match the fitted model "
            f"{model.indicator_names}"
        )
    return ScoreTable(
        neighborhood_ids=list(table.neighborhood_ids),
        scores=table.values @ model.loadings,
        component_ids=tuple(range(1, model.n_components + 1)),
    )


def select_components(
    model: PcaModel,
    explicit: list[int] | None = None,
    variance_threshold: float | None = None,
) -> list[int]:
    """Choose component ids either explicitly or by cumulative variance.

    An explicit list is validated and passed through verbatim. In threshold
    mode the smallest prefix of components whose cumulative explained ratio
    reaches the threshold is returned.
    """
    if explicit is not None and variance_threshold is not None:
        raise ConfigurationError("give either an explicit list or a threshold")
    if explicit is not None:
        if len(explicit) == 0:
            raise ConfigurationError("component selection is empty")
        for comp in explicit:
            if not 1 <= comp <= model.n_components:
                raise ConfigurationError(
                    f"component index {comp} out of range 1..{model.n_components}"
                )
        if len(set(explicit)) != len(explicit):
            raise ConfigurationError("component selection contains duplicates")
        return list(explicit)
    if variance_threshold is None:
        raise ConfigurationError("no component selection given")
    if not 0.0 < variance_threshold <= 1.0:
        raise ConfigurationError(
            f"variance threshold must be in (0, 1], got {variance_threshold}"
        )
    cumulative = np.cumsum(model.explained_ratio)
    keep = int(np.searchsorted(cumulative, variance_threshold - 1e-12)) + 1
    keep = min(keep, model.n_components)
    return list(range(1, keep + 1))


def top_k_neighborhoods(scores: ScoreTable, component: int, k: int) -> list[str]:
    """The k neighborhoods with the highest scores on one component.

    Ties are broken lexicographically by neighborhood id.
    """
    if component not in scores.component_ids:
        raise ConfigurationError(f"component {component} not in score table")
    if not 1 <= k <= scores.n:
        raise ConfigurationError(f"k must be in 1..{scores.n}, got {k}")
    col = scores.scores[:, scores.component_ids.index(component)]
    order = sorted(zip(scores.neighborhood_ids, col), key=lambda t: (-t[1], t[0]))
    return [nid for nid, _ in order[:k]]
