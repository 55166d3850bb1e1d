"""Pilot codebook, pilot-phase signal model and LMMSE channel estimation.

Covariances are block-diagonal ``(S, M, M)`` stacks (see
:mod:`ccpilot.geometry`); channel vectors and received signals use the
stacked ``MS`` layout, sector-major. Pilot indices are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard

from .config import is_power_of_two


class DegenerateConfigurationError(np.linalg.LinAlgError):
    """The processed-signal covariance is singular (only possible without noise)."""


def hadamard_codebook(tau: int) -> np.ndarray:
    """Sylvester-Hadamard pilot book; column ``t`` is pilot ``t``."""
    if not is_power_of_two(tau):
        raise ValueError(f"pilot length must be a power of two, got {tau}")
    return hadamard(tau).astype(float)


def pilot_matrix(assignment, codebook: np.ndarray, p_u: float) -> np.ndarray:
    """Rows ``sqrt(p_u) * phi_{pi_k}^T`` for the given (active) UEs, ``K x tau``."""
    return math.sqrt(p_u) * codebook[:, np.asarray(assignment)].T


def synthesize_received(H: np.ndarray, assignment, codebook: np.ndarray, p_u: float,
                        noise_power: float, rng: np.random.Generator) -> np.ndarray:
    """Pilot-phase received signal ``Y = H Psi + N`` (``MS x tau``).

    ``H`` may carry leading batch axes, ``(..., MS, K)``.
    """
    assignment = np.asarray(assignment)
    if H.shape[-1] != assignment.shape[0]:
        raise ValueError(f"H has {H.shape[-1]} columns but {assignment.shape[0]} pilots assigned")
    psi = pilot_matrix(assignment, codebook, p_u)
    Y = H @ psi
    if noise_power > 0:
        shape = Y.shape
        noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        Y = Y + math.sqrt(noise_power / 2) * noise
    return Y


def despread(Y: np.ndarray, k: int, assignment, codebook: np.ndarray, p_u: float) -> np.ndarray:
    """Correlate ``Y`` with the pilot of UE ``k`` and normalize by ``p_u * tau``."""
    if p_u <= 0:
        raise ValueError("pilot power must be positive")
    tau = codebook.shape[0]
    psi = math.sqrt(p_u) * codebook[:, assignment[k]]
    return Y @ psi.conj() / (p_u * tau)


def interferers(k: int, assignment) -> np.ndarray:
    assignment = np.asarray(assignment)
    same = np.flatnonzero(assignment == assignment[k])
    return same[same != k]


def q_matrix(k: int, assignment, covariances: np.ndarray, noise_power: float,
             p_u: float, tau: int) -> np.ndarray:
    """Covariance of the despread signal of UE ``k`` as ``(S, M, M)`` blocks."""
    assignment = np.asarray(assignment)
    group = np.flatnonzero(assignment == assignment[k])
    M = covariances.shape[-1]
    return covariances[group].sum(axis=0) + noise_power / (p_u * tau) * np.eye(M)


def _inverse_factor(Q: np.ndarray) -> np.ndarray:
    """``L^{-1}`` of the Cholesky factor of Hermitian PD blocks."""
    try:
        chol = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as exc:
        raise DegenerateConfigurationError(
            "processed-signal covariance is singular; noise power must be positive") from exc
    return np.linalg.inv(chol)


def _blocks(vec: np.ndarray, S: int) -> np.ndarray:
    return vec.reshape(vec.shape[:-1] + (S, -1))


def lmmse_estimate(k: int, y: np.ndarray, covariances: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """``R_k Q_k^{-1} y``, evaluated sector by sector.

    ``y`` has shape ``(..., MS)``.
    """
    R = covariances[k]
    S = R.shape[0]
    Linv = _inverse_factor(Q)
    yb = _blocks(y, S)[..., None]
    est = R @ (np.swapaxes(Linv.conj(), -1, -2) @ (Linv @ yb))
    return est[..., 0].reshape(y.shape)


def analytic_mse(k: int, assignment, covariances: np.ndarray, noise_power: float,
                 p_u: float, tau: int) -> tuple[np.ndarray, float]:
    """Error covariance blocks ``R - R Q^{-1} R`` and their trace."""
    Q = q_matrix(k, assignment, covariances, noise_power, p_u, tau)
    R = covariances[k]
    A = _inverse_factor(Q) @ R
    err = R - np.swapaxes(A.conj(), -1, -2) @ A
    return err, float(np.trace(err, axis1=-2, axis2=-1).real.sum())


@dataclass
class EstimationResult:
    H_hat: np.ndarray          # (..., MS, K)
    mse: np.ndarray            # (K,)
    error_covs: np.ndarray     # (K, S, M, M)


def estimate_channels(Y: np.ndarray, assignment, covariances: np.ndarray,
                      codebook: np.ndarray, p_u: float, noise_power: float) -> EstimationResult:
    """LMMSE estimates for all active UEs from pilot-phase observations.

    ``Y`` is ``(..., MS, tau)``; leading axes are independent realizations
    sharing the same assignment. UEs sharing a pilot share the same
    despread signal and the same ``Q``, so the factorization is done once
    per occupied pilot.
    """
    assignment = np.asarray(assignment)
    K = assignment.shape[0]
    S, M = covariances.shape[1], covariances.shape[-1]
    tau = codebook.shape[0]
    batch = Y.shape[:-2]
    pilots, inverse = np.unique(assignment, return_inverse=True)

    # despread every occupied pilot at once: (..., MS, P)
    Yp = Y @ codebook[:, pilots] / (math.sqrt(p_u) * tau)
    ridge = noise_power / (p_u * tau) * np.eye(M)
    Q = np.stack([covariances[inverse == g].sum(axis=0) for g in range(len(pilots))]) + ridge
    Linv = _inverse_factor(Q)                            # (P, S, M, M)
    Qinv = np.swapaxes(Linv.conj(), -1, -2) @ Linv
    gain = covariances @ Qinv[inverse]                  # R_k Q_k^{-1}, (K, S, M, M)
    y = np.swapaxes(Yp[..., inverse], -1, -2).reshape(batch + (K, S, M, 1))
    H_hat = np.swapaxes((gain @ y).reshape(batch + (K, S * M)), -1, -2)
    err = covariances - gain @ covariances
    err = (err + np.swapaxes(err.conj(), -1, -2)) / 2
    mse = np.einsum("ksii->k", err).real
    return EstimationResult(H_hat, mse, err)


def nmse_ce(H_hat: np.ndarray, H: np.ndarray) -> float:
    energy = np.linalg.norm(H) ** 2
    if energy == 0:
        raise ValueError("channel matrix is zero")
    return float(np.linalg.norm(H_hat - H) ** 2 / energy)
