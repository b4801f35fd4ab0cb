"""Problem normalisation shared by the optimisation modules.

Solvers work in scaled units so that every coefficient is O(1):

* beamformers of BS m are divided by ``sqrt(P_m)``;
* channels become ``g[i, m, k] = h[i, m, k] * sqrt(P_i) / sigma_n``, so noise is 1;
* the location FIM is ``s * sum_m x_m B_m`` where ``x_m`` is the normalised
  sensing gain ``a^T (sum_k F_mk) a^* / P_m`` and ``trace(sum_m B_m) == 1``;
  CRLB auxiliaries are stored as ``s * mu``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic
from .metrics import jacobian

# relative safety margin on the SINR threshold inside every solver
SINR_MARGIN = 1e-5


@dataclass(frozen=True)
class Normalized:
    P: np.ndarray
    P_total: float | None
    g: np.ndarray
    a: np.ndarray
    B: np.ndarray
    scale: float
    Gamma: float

    @property
    def M(self):
        return self.g.shape[0]

    @property
    def K(self):
        return self.g.shape[2]

    @property
    def Nt(self):
        return self.g.shape[3]

    def crlb_from_gains(self, x):
        """Physical CRLB for normalised sensing gains ``x`` (inf if singular)."""
        J = np.tensordot(np.asarray(x, dtype=float), self.B, axes=1)
        ev = np.linalg.eigvalsh(J)
        if ev[-1] <= 0 or ev[0] <= ev[-1] * 1e-12:
            return np.inf
        return float(np.trace(np.linalg.inv(J))) / self.scale


def normalize(sc):
    cfg = sc.config
    P = cfg.power_budgets
    g = sc.h * np.sqrt(P)[:, None, None, None] / np.sqrt(cfg.sigma_n2)
    lam = jacobian(sc.geometry).T.reshape(cfg.M, cfg.N, 2)
    kappa = sc.delay_fim_gain
    B = np.einsum("mn,mni,mnj->mij", kappa * P[:, None], lam, lam)
    s = float(np.trace(B.sum(axis=0)))
    return Normalized(
        P=P,
        P_total=cfg.P_total,
        g=g,
        a=sc.steering,
        B=B / s,
        scale=s,
        Gamma=cfg.Gamma * (1 + SINR_MARGIN),
    )


def add_crlb_lmis(prog, x_exprs, B, mu, tag="lmi"):
    """Add ``[[sum_m x_m B_m, e_i], [e_i^T, mu_i]] >= 0`` for i = 1, 2.

    ``x_exprs`` is a list of scalar affine expressions, ``mu`` a length-2 one.
    """
    J = [None] * 4
    for m, x in enumerate(x_exprs):
        for r in range(2):
            for c in range(2):
                term = x * B[m, r, c]
                J[2 * r + c] = term if J[2 * r + c] is None else J[2 * r + c] + term
    for i in range(2):
        e = [1.0 if i == 0 else 0.0, 1.0 if i == 1 else 0.0]
        entries = [J[0], J[1], e[0], J[2], J[3], e[1], e[0], e[1], mu[i]]
        prog.add_constraint("psd", conic.vstack(entries), tag=tag)
