"""ZF and RZF linear precoders with unit-norm columns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import ChannelMatrix


class PrecoderSingularError(np.linalg.LinAlgError):
    """The Gram matrix is too ill-conditioned for zero forcing."""


@dataclass(frozen=True)
class Precoder:
    W: np.ndarray  # complex (N, K), unit-norm columns
    raw_norms: np.ndarray  # (K,) pre-normalization column norms
    kind: str  # "zf" | "rzf"
    regularizer: float  # K*sigma^2/P_max for RZF, 0 for ZF


def _as_matrix(H) -> np.ndarray:
    return H.H if isinstance(H, ChannelMatrix) else np.asarray(H)


def _normalize_columns(W_raw: np.ndarray, kind: str, rho: float) -> Precoder:
    norms = np.linalg.norm(W_raw, axis=0)
    if np.any(norms <= 0) or not np.all(np.isfinite(norms)):
        raise PrecoderSingularError("precoding column norm vanished")
    return Precoder(W=W_raw / norms[None, :], raw_norms=norms, kind=kind, regularizer=rho)


def make_zf(H, cond_cap: float = 1e8) -> Precoder:
    """W = H (H^H H)^{-1} with normalized columns.

    Solves the K x K Gram system by Cholesky instead of inverting.  Raises
    when the Gram condition number exceeds `cond_cap`; the caller is expected
    to redraw the user set.
    """
    Hm = _as_matrix(H)
    gram = Hm.conj().T @ Hm
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > cond_cap:
        raise PrecoderSingularError(f"Gram condition number {cond:.3e} exceeds cap")
    cho = scipy.linalg.cho_factor(gram)
    W_raw = scipy.linalg.cho_solve(cho, Hm.conj().T).conj().T
    return _normalize_columns(W_raw, "zf", 0.0)


def make_rzf(H, noise_power: float, p_max: float) -> Precoder:
    """W = H (H^H H + rho I)^{-1}, rho = K*sigma^2/P_max, normalized columns."""
    if noise_power <= 0 or p_max <= 0:
        raise ValueError("noise power and power budget must be positive")
    Hm = _as_matrix(H)
    k = Hm.shape[1]
    rho = k * noise_power / p_max
    gram = Hm.conj().T @ Hm + rho * np.eye(k)
    cho = scipy.linalg.cho_factor(gram)
    W_raw = scipy.linalg.cho_solve(cho, Hm.conj().T).conj().T
    return _normalize_columns(W_raw, "rzf", rho)


def effective_gains(H, precoder: Precoder) -> np.ndarray:
    """(K, K) matrix of |h_k^H w_l|^2; diagonal holds the useful gains."""
    Hm = _as_matrix(H)
    return np.abs(Hm.conj().T @ precoder.W) ** 2
