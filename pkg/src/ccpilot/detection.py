"""Robust MMSE combining, SINR, achievable rate and QPSK symbol detection."""

from __future__ import annotations

import math

import numpy as np

QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2)


def _error_sum(error_covs: np.ndarray, n_antennas: int) -> np.ndarray:
    """Sum of per-UE error covariances as a full ``MS x MS`` matrix.

    Accepts ``(K, S, M, M)`` block stacks or ``(K, MS, MS)`` full matrices.
    """
    if error_covs.ndim == 4:
        total = error_covs.sum(axis=0)
        S, M = total.shape[0], total.shape[-1]
        full = np.zeros((S * M, S * M), dtype=complex)
        for s in range(S):
            full[s * M:(s + 1) * M, s * M:(s + 1) * M] = total[s]
        return full
    if error_covs.ndim == 3:
        return error_covs.sum(axis=0)
    return np.zeros((n_antennas, n_antennas), dtype=complex)


def _system_matrix(H_hat, error_covs, noise_power, p_u):
    MS = H_hat.shape[0]
    A = H_hat @ H_hat.conj().T + _error_sum(error_covs, MS)
    A[np.diag_indices(MS)] += noise_power / p_u
    return (A + A.conj().T) / 2


def robust_combiner(H_hat: np.ndarray, error_covs: np.ndarray, noise_power: float,
                    p_u: float) -> np.ndarray:
    """MMSE combining vectors ``w_k = A^{-1} h_k`` as columns of an ``MS x K`` matrix.

    ``A`` includes the desired UE's own estimate, so ``w_k`` is the
    MSE-minimizing scaling of ``(A - h_k h_k^H)^{-1} h_k`` (same direction).
    """
    if noise_power <= 0:
        raise ValueError("noise power must be positive")
    A = _system_matrix(H_hat, error_covs, noise_power, p_u)
    return np.linalg.solve(A, H_hat)


def sinr(k: int, H_hat: np.ndarray, error_covs: np.ndarray, noise_power: float,
         p_u: float) -> float:
    """SINR of UE ``k`` with the interference-plus-error matrix inverted directly."""
    others = np.delete(H_hat, k, axis=1)
    MS = H_hat.shape[0]
    B = others @ others.conj().T + _error_sum(error_covs, MS)
    B[np.diag_indices(MS)] += noise_power / p_u
    h = H_hat[:, k]
    return float(np.vdot(h, np.linalg.solve(B, h)).real)


def sinr_all(H_hat: np.ndarray, error_covs: np.ndarray, noise_power: float,
             p_u: float) -> np.ndarray:
    """All SINRs from one factorization via Sherman-Morrison, ``g / (1 - g)``."""
    A = _system_matrix(H_hat, error_covs, noise_power, p_u)
    g = np.einsum("mk,mk->k", H_hat.conj(), np.linalg.solve(A, H_hat)).real
    g = np.clip(g, 0.0, 1.0 - 1e-15)
    return g / (1.0 - g)


def rate(gamma):
    return np.log2(1.0 + np.asarray(gamma))


def random_qpsk(k: int, rng: np.random.Generator) -> np.ndarray:
    return QPSK[rng.integers(0, 4, size=k)]


def hard_decision(s_hat: np.ndarray) -> np.ndarray:
    idx = np.argmin(np.abs(s_hat[..., None] - QPSK), axis=-1)
    return QPSK[idx]


def detect_symbols(W: np.ndarray, H: np.ndarray, s: np.ndarray, noise_power: float,
                   p_u: float, rng: np.random.Generator):
    """One data-phase use: returns ``(s_hat, mse_sd, ser)``.

    ``y = sqrt(p_u) H s + n`` and ``s_hat = W^H y / sqrt(p_u)``.
    """
    MS = H.shape[0]
    y = math.sqrt(p_u) * H @ s
    if noise_power > 0:
        y = y + math.sqrt(noise_power / 2) * (rng.standard_normal(MS) + 1j * rng.standard_normal(MS))
    s_hat = W.conj().T @ y / math.sqrt(p_u)
    mse = float(np.mean(np.abs(s_hat - s) ** 2))
    ser = float(np.mean(~np.isclose(hard_decision(s_hat), s)))
    return s_hat, mse, ser
