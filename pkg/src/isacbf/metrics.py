"""Communication and sensing performance metrics.

Column ordering of the Jacobian and of the delay FIM is m-major: entry
``m * N + n`` belongs to the path BS m -> target -> TMT n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SPEED_OF_LIGHT, BeamformerSet, GeometryError, steering_vector

SINGULAR_COND = 1e12


@dataclass(frozen=True)
class CrlbReport:
    """Location CRLB and the pieces it is built from.

    ``crlb`` is ``inf`` and ``localizable`` is False when the 2x2 location
    FIM is (numerically) singular.
    """

    Lambda: np.ndarray
    Z: np.ndarray
    loc_fim: np.ndarray
    crlb: float
    localizable: bool

    @property
    def covariance(self):
        if not self.localizable:
            return None
        return np.linalg.inv(self.loc_fim)


def _as_vectors(bf):
    if isinstance(bf, BeamformerSet):
        return bf.f
    return np.asarray(bf, dtype=complex)


def sinr_matrix(bf, sc):
    """All SINRs, shape ``(M, K)``."""
    f = _as_vectors(bf)
    # gains[i, j, m, k] = |h_{i,m,k}^H f_{i,j}|^2
    gains = np.abs(np.einsum("imkn,ijn->ijmk", sc.h.conj(), f)) ** 2
    M, K = f.shape[:2]
    out = np.empty((M, K))
    for m in range(M):
        for k in range(K):
            total = gains[:, :, m, k].sum()
            desired = gains[m, k, m, k]
            out[m, k] = desired / (total - desired + sc.config.sigma_n2)
    return out


def sinr(bf, sc, m, k):
    """SINR of user ``k`` in cell ``m``."""
    f = _as_vectors(bf)
    h = sc.h
    desired = abs(np.vdot(h[m, m, k], f[m, k])) ** 2
    intra = sum(abs(np.vdot(h[m, m, k], f[m, j])) ** 2 for j in range(f.shape[1]) if j != k)
    inter = sum(
        abs(np.vdot(h[i, m, k], f[i, j])) ** 2 for i in range(f.shape[0]) if i != m for j in range(f.shape[1])
    )
    return desired / (intra + inter + sc.config.sigma_n2)


def jacobian(geometry):
    """Derivatives of the delays w.r.t. target (x, y); shape ``(2, M*N)``."""
    p = geometry.target_xy
    d_bs = np.linalg.norm(p - geometry.bs_xy, axis=1)
    d_tmt = np.linalg.norm(p - geometry.tmt_xy, axis=1)
    if np.any(d_bs <= 0) or np.any(d_tmt <= 0):
        raise GeometryError("zero BS-target or TMT-target distance")
    u_bs = (p - geometry.bs_xy) / d_bs[:, None]
    u_tmt = (p - geometry.tmt_xy) / d_tmt[:, None]
    cols = (u_bs[:, None, :] + u_tmt[None, :, :]) / SPEED_OF_LIGHT
    return cols.reshape(-1, 2).T


def sensing_gain(bf, sc):
    """``a^T(theta_m) (sum_k F_mk) a^*(theta_m)`` per BS.

    Accepts beamformer vectors ``(M, K, Nt)`` or lifted matrices ``(M, K, Nt, Nt)``.
    """
    a = sc.steering
    x = bf.f if isinstance(bf, BeamformerSet) else np.asarray(bf, dtype=complex)
    if x.ndim == 3:
        return np.sum(np.abs(np.einsum("mn,mkn->mk", a, x)) ** 2, axis=1)
    if x.ndim == 4:
        val = np.einsum("mi,mkij,mj->m", a, x, a.conj())
        scale = max(1.0, np.abs(val).max(initial=0.0))
        if np.any(val.real < -1e-12 * scale) or np.any(np.abs(val.imag) > 1e-9 * scale):
            raise ArithmeticError("lifted beamformers are not Hermitian PSD")
        return np.maximum(val.real, 0.0)
    raise ValueError("expected beamformer array of rank 3 or 4")


def fim_delay_diag(bf, sc):
    """Diagonal of the delay FIM, length ``M*N`` (1/s^2)."""
    q = sensing_gain(bf, sc)
    return (sc.delay_fim_gain * q[:, None]).ravel()


def crlb(Lambda, Z):
    """Sum CRLB ``tr((Lambda diag(Z) Lambda^T)^-1)`` in m^2."""
    Lambda = np.asarray(Lambda, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 2:
        Z = np.diag(Z)
    if np.any(Z < 0):
        raise ValueError("delay FIM must be nonnegative")
    J = (Lambda * Z) @ Lambda.T
    J = 0.5 * (J + J.T)
    ev = np.linalg.eigvalsh(J)
    if ev[-1] <= 0 or ev[0] <= ev[-1] / SINGULAR_COND:
        return CrlbReport(Lambda, Z, J, math.inf, False)
    return CrlbReport(Lambda, Z, J, float(np.trace(np.linalg.inv(J))), True)


def crlb_report(bf, sc):
    return crlb(jacobian(sc.geometry), fim_delay_diag(bf, sc))


def crlb_value(bf, sc):
    return crlb_report(bf, sc).crlb


def beampattern(bf, theta_grid, Nt=None):
    """Transmit power pattern per BS, shape ``(M, len(theta_grid))``."""
    x = bf.f if isinstance(bf, BeamformerSet) else np.asarray(bf, dtype=complex)
    Nt = x.shape[-1] if Nt is None else Nt
    A = np.stack([steering_vector(t, Nt) for t in np.atleast_1d(theta_grid)])
    if x.ndim == 3:
        return np.sum(np.abs(np.einsum("gn,mkn->mgk", A, x)) ** 2, axis=2)
    R = x.sum(axis=1)
    return np.maximum(np.einsum("gi,mij,gj->mg", A, R, A.conj()).real, 0.0)
