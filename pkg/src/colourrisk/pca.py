"""Standardization and principal-component reduction of indicator matrices.

The reduction works on the correlation matrix of the input (columns are
standardized first), so every variable enters on an equal footing. Loadings
are stored as rows: row i holds the coefficients that map a standardized
observation to principal component i.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "StandardScaler",
    "PCAModel",
    "ComponentSelection",
    "FixedTransform",
    "ZeroVarianceError",
    "EigenSolverError",
    "standardize",
    "fit_pca",
    "select_components",
    "project",
]


class ZeroVarianceError(ValueError):
    """A column is constant and cannot be standardized."""

    def __init__(self, columns: list[int]):
        self.columns = list(columns)
        super().__init__(f"zero-variance column(s) at index {self.columns}")


class EigenSolverError(RuntimeError):
    """The symmetric eigensolver failed to converge."""


@dataclass(frozen=True)
class StandardScaler:
    """Per-column centering and scaling parameters.

    `ddof` records the degrees-of-freedom correction used for the standard
    deviation (1 = sample sd, the default; 0 = population sd).
    """

    means: np.ndarray
    sds: np.ndarray
    ddof: int = 1

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.means.shape[0]:
            raise ValueError(
                f"expected {self.means.shape[0]} columns, got shape {X.shape}"
            )
        return (X - self.means) / self.sds

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "sds": self.sds.tolist(),
            "ddof": self.ddof,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StandardScaler":
        return cls(
            means=np.asarray(d["means"], dtype=float),
            sds=np.asarray(d["sds"], dtype=float),
            ddof=int(d["ddof"]),
        )


@dataclass(frozen=True)
class PCAModel:
    """Eigenstructure of a correlation matrix.

    loadings: k x k matrix, row i is the unit eigenvector for eigenvalue i.
    eigenvalues: descending; for correlation-matrix input they sum to k.
    """

    loadings: np.ndarray
    eigenvalues: np.ndarray
    explained_ratio: np.ndarray
    cumulative_ratio: np.ndarray

    @property
    def k(self) -> int:
        return self.loadings.shape[0]

    def to_dict(self) -> dict:
        return {
            "loadings": self.loadings.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PCAModel":
        loadings = np.asarray(d["loadings"], dtype=float)
        eigenvalues = np.asarray(d["eigenvalues"], dtype=float)
        total = eigenvalues.sum()
        ratio = eigenvalues / total
        return cls(
            loadings=loadings,
            eigenvalues=eigenvalues,
            explained_ratio=ratio,
            cumulative_ratio=np.cumsum(ratio),
        )


@dataclass(frozen=True)
class ComponentSelection:
    """Smallest component count reaching the cumulative-variance threshold."""

    r: int
    cumulative: float
    threshold_met: bool


@dataclass(frozen=True)
class FixedTransform:
    """A scaler + loadings bundle frozen for downstream refits.

    Serializes losslessly (float reprs round-trip) so a resampling run can
    verify the transform was not touched by hashing before and after.
    """

    scaler: StandardScaler
    model: PCAModel
    r: int

    def to_json(self) -> str:
        payload = {
            "scaler": self.scaler.to_dict(),
            "model": self.model.to_dict(),
            "components": self.r,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FixedTransform":
        d = json.loads(text)
        return cls(
            scaler=StandardScaler.from_dict(d["scaler"]),
            model=PCAModel.from_dict(d["model"]),
            r=int(d["components"]),
        )

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


SIGN_TIE_REL_TOL = 1e-12


def _fix_sign(row: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry positive, lowest index on (near-)ties.

    Exactly tied magnitudes (e.g. the +-1/sqrt(2) loadings of any 2-variable
    fit) land a last-ulp apart depending on the eigensolver, so the tie rule
    uses a small relative band rather than exact equality. This keeps the
    orientation identical across solvers and memory layouts.
    """
    mags = np.abs(row)
    j = int(np.flatnonzero(mags >= mags.max() * (1.0 - SIGN_TIE_REL_TOL))[0])
    return -row if row[j] < 0 else row


def standardize(X: np.ndarray, ddof: int = 1) -> tuple[StandardScaler, np.ndarray]:
    """Center and scale every column to mean 0, sd 1.

    Raises ZeroVarianceError naming the offending columns if any column is
    constant. Requires at least 2 rows.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {X.shape}")
    n = X.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 rows to standardize, got {n}")
    if not np.isfinite(X).all():
        raise ValueError("non-finite values in input matrix")
    means = X.mean(axis=0)
    sds = X.std(axis=0, ddof=ddof)
    zero = np.flatnonzero(sds == 0.0)
    if zero.size:
        raise ZeroVarianceError(zero.tolist())
    scaler = StandardScaler(means=means, sds=sds, ddof=ddof)
    return scaler, (X - means) / sds


def fit_pca(Z: np.ndarray) -> PCAModel:
    """Eigendecompose the sample correlation matrix of standardized data.

    Loadings rows carry a deterministic sign: the largest-magnitude entry of
    each row is made positive (first such entry on exact ties), so repeated
    fits of the same matrix are bit-identical.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {Z.shape}")
    n, k = Z.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows, got {n}")
    if not np.isfinite(Z).all():
        raise ValueError("non-finite values in standardized matrix")
    corr = (Z.T @ Z) / (n - 1)
    try:
        eigenvalues, vectors = np.linalg.eigh(corr)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"symmetric eigensolver did not converge: {exc}") from exc
    # eigh returns ascending order; loadings rows = eigenvectors.
    order = np.arange(k - 1, -1, -1)
    eigenvalues = eigenvalues[order]
    loadings = vectors[:, order].T.copy()
    for i in range(k):
        loadings[i] = _fix_sign(loadings[i])
    total = eigenvalues.sum()
    ratio = eigenvalues / total
    return PCAModel(
        loadings=loadings,
        eigenvalues=eigenvalues,
        explained_ratio=ratio,
        cumulative_ratio=np.cumsum(ratio),
    )


def select_components(
    model: PCAModel, threshold: float = 0.90, cap: int | None = None
) -> ComponentSelection:
    """Pick the smallest r whose cumulative explained variance reaches the threshold.

    If no prefix reaches the threshold (possible only through rounding at
    threshold 1.0), all k components are returned. A cap, when set, truncates
    r and reports threshold_met=False if the capped prefix falls short.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    cum = model.cumulative_ratio
    reached = np.flatnonzero(cum >= threshold)
    r = int(reached[0]) + 1 if reached.size else model.k
    met = True
    if cap is not None and r > cap:
        r = int(cap)
        met = False
    return ComponentSelection(r=r, cumulative=float(cum[r - 1]), threshold_met=met)


def project(
    scaler: StandardScaler, model: PCAModel, X: np.ndarray, r: int
) -> np.ndarray:
    """Score raw observations on the first r components using stored parameters."""
    if not 1 <= r <= model.k:
        raise ValueError(f"component count {r} outside 1..{model.k}")
    Z = scaler.transform(X)
    return Z @ model.loadings[:r].T
