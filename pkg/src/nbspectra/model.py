"""Deterministic linear algebra of the block-model parameters.

The mean progeny matrix M = diag(pi) W drives everything downstream: its
eigenvalues give the expected non-backtracking outliers, its left
eigenvectors give the per-type signal vectors, and the count of
eigenvalues with mu_k^2 > mu_1 (the detectability threshold) tells how
many communities are recoverable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "SbmParams",
    "SpectralData",
    "derive_spectral_data",
    "ks_detectable",
    "preset",
    "write_params",
    "read_params",
]

DEGREE_TOL = 1e-9


@dataclass(frozen=True)
class SbmParams:
    """Block-model parameters: type distribution pi and affinity matrix W.

    All presets satisfy the equal-degree condition: every column sum of
    M = diag(pi) W equals the mean degree alpha, within 1e-9.
    """

    r: int
    pi: np.ndarray
    W: np.ndarray

    def __post_init__(self) -> None:
        pi = np.asarray(self.pi, dtype=np.float64)
        W = np.asarray(self.W, dtype=np.float64)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "W", W)
        if self.r < 1 or len(pi) != self.r or W.shape != (self.r, self.r):
            raise ValueError("inconsistent dimensions")
        if abs(pi.sum() - 1.0) > 1e-9 or np.any(pi <= 0):
            raise ValueError("pi must be a positive probability vector")
        if np.any(W < 0) or not np.allclose(W, W.T, atol=1e-12):
            raise ValueError("W must be symmetric and nonnegative")

    @property
    def M(self) -> np.ndarray:
        return self.pi[:, None] * self.W

    @property
    def alpha(self) -> float:
        return float(self.M.sum(axis=0)[0])


@dataclass(frozen=True)
class SpectralData:
    """Eigen-data of M = diag(pi) W.

    mu is sorted by decreasing absolute value; phi[k] and psi[k] are the
    left and right eigenvectors of mu[k], normalized so that
    <phi_i, psi_j> = delta_ij and <phi_i, phi_j>_pi = delta_ij, with
    phi[0] the all-ones vector and psi[0] = pi.  r0 counts the
    eigenvalues above the detectability threshold mu_k^2 > mu_1.
    """

    params: SbmParams
    M: np.ndarray
    alpha: float
    mu: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    r0: int

    @property
    def r(self) -> int:
        return self.params.r

    @property
    def pi(self) -> np.ndarray:
        return self.params.pi


def derive_spectral_data(params: SbmParams) -> SpectralData:
    """Eigendecomposition of M via the symmetric conjugate diag(pi)^1/2 W diag(pi)^1/2.

    Raises ValueError when the column sums of M differ by more than 1e-9
    (unequal expected degrees) or when M is not positively regular.
    """
    M = params.M
    r = params.r
    col_sums = M.sum(axis=0)
    if col_sums.max() - col_sums.min() > DEGREE_TOL:
        raise ValueError(
            f"column sums of M are not all equal: spread {col_sums.max() - col_sums.min():.3g}"
        )
    power = M.copy()
    for k in range(1, r + 1):
        if np.all(power > 0):
            break
        power = power @ M
    else:
        raise ValueError(
            f"M is not positively regular: M^{r} still has non-positive entries"
        )

    sqrt_pi = np.sqrt(params.pi)
    S = sqrt_pi[:, None] * params.W * sqrt_pi[None, :]
    vals, U = np.linalg.eigh(S)

    # Sort by |mu| descending; equal moduli keep the positive one first,
    # then fall back to the eigh output order.
    order = sorted(range(r), key=lambda i: (-abs(vals[i]), -np.sign(vals[i]), i))
    mu = vals[order]
    U = U[:, order]

    phi = (U / sqrt_pi[:, None]).T
    psi = (U * sqrt_pi[:, None]).T

    # Fix signs: phi[0] is scaled to all-ones; for k >= 1 the first entry
    # of phi[k] with magnitude above tolerance is made positive.  The dual
    # psi[k] is rescaled inversely so <phi_i, psi_j> stays delta_ij.
    for k in range(r):
        if k == 0:
            c = phi[0, 0]
        else:
            nz = np.nonzero(np.abs(phi[k]) > 1e-12)[0]
            c = np.sign(phi[k, nz[0]]) if len(nz) else 1.0
        phi[k] /= c
        psi[k] *= c

    r0 = int(np.sum(mu**2 > mu[0]))
    return SpectralData(
        params=params, M=M, alpha=float(mu[0]), mu=mu, phi=phi, psi=psi, r0=r0
    )


def ks_detectable(data: SpectralData, k: int) -> bool:
    """True when mu_k^2 > mu_1, i.e. block k sits above the detectability threshold."""
    if not 1 <= k <= data.r:
        raise ValueError(f"k must be in [1, {data.r}]")
    return bool(data.mu[k - 1] ** 2 > data.mu[0])


_SYM_RE = re.compile(r"^sbm-sym\((\d+),\s*([0-9.]+),\s*([0-9.]+)\)$")


def preset(name: str) -> SbmParams:
    """Named parameter sets.

    ``er4`` is the single-type model with mean degree 4; ``sbm-2x-7-1`` and
    ``sbm-2x-5-3`` are balanced two-block models with (a, b) = (7, 1) and
    (5, 3); ``sbm-sym(r,a,b)`` is the symmetric r-block model with
    within-affinity a and cross-affinity b.
    """
    if name == "er4":
        return SbmParams(r=1, pi=np.array([1.0]), W=np.array([[4.0]]))
    if name == "sbm-2x-7-1":
        return _symmetric_blocks(2, 7.0, 1.0)
    if name == "sbm-2x-5-3":
        return _symmetric_blocks(2, 5.0, 3.0)
    m = _SYM_RE.match(name)
    if m:
        return _symmetric_blocks(int(m.group(1)), float(m.group(2)), float(m.group(3)))
    raise ValueError(f"unknown preset {name!r}")


def _symmetric_blocks(r: int, a: float, b: float) -> SbmParams:
    W = np.full((r, r), b)
    np.fill_diagonal(W, a)
    return SbmParams(r=r, pi=np.full(r, 1.0 / r), W=W)


def write_params(params: SbmParams, path: str | Path) -> None:
    """Write parameters as JSON with keys r, pi and row-major W."""
    payload = {
        "r": params.r,
        "pi": params.pi.tolist(),
        "W": params.W.reshape(-1).tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_params(path: str | Path) -> SbmParams:
    payload = json.loads(Path(path).read_text())
    r = int(payload["r"])
    return SbmParams(
        r=r,
        pi=np.asarray(payload["pi"], dtype=np.float64),
        W=np.asarray(payload["W"], dtype=np.float64).reshape(r, r),
    )
