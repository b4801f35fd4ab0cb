"""Numeric Fisher information by direct integration of the received-signal model.

This is an independent check of the closed-form delay FIM in
:mod:`isacbf.metrics`.  The transmit waveforms are built so that the signal
orthogonality assumption holds exactly on the observation window: symbols are
real cosine sequences on distinct DFT bins and the pulse train is periodic
over ``L * Ts``, so waveforms of different (BS, user) pairs have disjoint
line spectra and stay orthogonal under any relative delay.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import BeamformerSet, steering_derivative, steering_vector


class PulseError(ValueError):
    pass


@dataclass(frozen=True)
class PulseShape:
    """Baseband pulse sampled on a uniform grid centred on zero.

    ``func``/``dfunc`` evaluate the pulse and its derivative at arbitrary times;
    the samples are only used for the spectral quantities.
    """

    t: np.ndarray
    samples: np.ndarray
    Ts: float
    func: Callable
    dfunc: Callable

    def __post_init__(self):
        self.check_real()

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    def _spectrum(self, pad=16):
        nfft = pad * self.samples.size
        G = np.fft.fft(self.samples, nfft) * self.dt
        f = np.fft.fftfreq(nfft, self.dt)
        return f, np.abs(G) ** 2

    @property
    def beta(self):
        """Effective (RMS) bandwidth in Hz from the sampled spectrum."""
        f, S = self._spectrum()
        return float(np.sqrt(np.sum(f**2 * S) / np.sum(S)))

    def first_moment(self):
        """Normalised spectral first moment; zero for a real pulse."""
        f, S = self._spectrum()
        f2 = np.sqrt(np.sum(f**2 * S) / np.sum(S))
        return float(np.sum(f * S) / (f2 * np.sum(S)))

    def check_real(self, tol=1e-9):
        if abs(self.first_moment()) > tol:
            raise PulseError("pulse spectrum has a nonzero first moment")

    def energy(self):
        return float(np.sum(np.abs(self.samples) ** 2) * self.dt)


def gaussian_pulse(Ts, width=None, oversample=32, span=6.0):
    """Gaussian pulse with ``int g^2 dt = Ts`` (unit-power symbol stream)."""
    sigma = Ts / 8.0 if width is None else width
    amp = np.sqrt(Ts / (sigma * np.sqrt(np.pi)))
    dt = Ts / oversample
    half = int(np.ceil(span * sigma / dt))
    t = np.arange(-half, half + 1) * dt

    def g(x):
        return amp * np.exp(-(x**2) / (2 * sigma**2))

    def dg(x):
        return -x / sigma**2 * g(x)

    return PulseShape(t=t, samples=g(t), Ts=Ts, func=g, dfunc=dg)


def orthogonal_symbols(M, K, L):
    """Real symbols ``c[m, k, l] = sqrt(2) cos(2 pi p l / L)`` with a distinct bin per (m, k)."""
    if M * K >= L // 2:
        raise ValueError("need L > 2*M*K for distinct cosine bins")
    p = 1 + np.arange(M * K).reshape(M, K)
    l = np.arange(L)
    return np.sqrt(2.0) * np.cos(2 * np.pi * p[..., None] * l / L)


def _waveform(pulse, symbols, t, delay, L, derivative=False):
    """Periodic pulse train ``sum_l c_l g(t - delay - l Ts)`` (or its derivative)."""
    Ts = pulse.Ts
    T0 = L * Ts
    u = np.mod(t - delay, T0)
    l0 = np.floor(u / Ts).astype(int)
    fn = pulse.dfunc if derivative else pulse.func
    out = np.zeros_like(u)
    for d in (-1, 0, 1, 2):
        l = l0 + d
        out += symbols[np.mod(l, L)] * fn(u - l * Ts)
    return out


def parameter_list(M, N):
    """Nuisance-augmented parameter ordering: delays, angles, Re eps, Im eps."""
    params = [("tau", m, n) for m in range(M) for n in range(N)]
    params += [("theta", m) for m in range(M)]
    params += [("eps_re", m, n) for m in range(M) for n in range(N)]
    params += [("eps_im", m, n) for m in range(M) for n in range(N)]
    return params


def _derivatives(pulse, sc, f, params, oversample):
    cfg = sc.config
    M, N, K, Nt, L = cfg.M, cfg.N, cfg.K, cfg.Nt, cfg.L
    T0 = L * pulse.Ts
    Ns = L * oversample
    t = np.arange(Ns) * (T0 / Ns)
    c = orthogonal_symbols(M, K, L)

    alpha = np.stack([f[m] @ steering_vector(sc.theta[m], Nt) for m in range(M)])
    dalpha = np.stack([f[m] @ steering_derivative(sc.theta[m], Nt) for m in range(M)])

    s_cache, ds_cache = {}, {}

    def wave(m, k, n, deriv):
        cache = ds_cache if deriv else s_cache
        key = (m, k, n)
        if key not in cache:
            cache[key] = _waveform(pulse, c[m, k], t, sc.tau[m, n], L, derivative=deriv)
        return cache[key]

    D = np.zeros((len(params), N, Ns), dtype=complex)
    for i, par in enumerate(params):
        kind = par[0]
        if kind == "tau":
            _, m, n = par
            D[i, n] = -sc.eps[m, n] * sum(alpha[m, k] * wave(m, k, n, True) for k in range(K))
        elif kind == "theta":
            _, m = par
            for n in range(N):
                D[i, n] = sc.eps[m, n] * sum(dalpha[m, k] * wave(m, k, n, False) for k in range(K))
        elif kind in ("eps_re", "eps_im"):
            _, m, n = par
            base = sum(alpha[m, k] * wave(m, k, n, False) for k in range(K))
            D[i, n] = base if kind == "eps_re" else 1j * base
        else:
            raise ValueError(f"unknown parameter {par!r}")
    return D, T0 / Ns


def fim_numeric_matrix(pulse, sc, bf, params=None, oversample=32):
    """FIM over ``params`` by Riemann-sum integration of the Slepian-Bang integrand.

    The scenario's ``L`` sets the window length; ``pulse.Ts`` replaces the
    configured symbol duration.
    """
    pulse.check_real()
    f = bf.f if isinstance(bf, BeamformerSet) else np.asarray(bf, dtype=complex)
    if params is None:
        params = parameter_list(sc.config.M, sc.config.N)
    D, dt = _derivatives(pulse, sc, f, params, oversample)
    flat = D.reshape(len(params), -1)
    J = (2.0 / sc.config.sigma_s2) * dt * np.real(flat.conj() @ flat.T)
    return J, params


def fim_numeric(pulse, sc, bf, p, q, oversample=32):
    """Single FIM entry ``J(p, q)``."""
    J, _ = fim_numeric_matrix(pulse, sc, bf, params=[p, q], oversample=oversample)
    return float(J[0, 1])


def closed_form_check(sc, bf, pulse=None, oversample=32):
    """Compare the numeric FIM with the closed-form delay FIM.

    Returns ``(ratios, cross)``: numeric over closed-form delay diagonals, and
    the largest normalised coupling between a delay and any other parameter.
    The closed form is evaluated with the pulse's own ``Ts`` and ``beta``.
    """
    from .metrics import fim_delay_diag

    if pulse is None:
        pulse = gaussian_pulse(sc.config.Ts, oversample=oversample)
    J, params = fim_numeric_matrix(pulse, sc, bf, oversample=oversample)
    MN = sc.config.M * sc.config.N
    Z = fim_delay_diag(bf, sc.with_config(beta=pulse.beta, Ts=pulse.Ts))
    d = np.sqrt(np.abs(np.diag(J)))
    scale = np.outer(d, d)
    scale[scale == 0] = 1.0
    Jn = J / scale
    cross = np.abs(Jn[:MN, MN:]).max(initial=0.0)
    off = Jn[:MN, :MN] - np.diag(np.diag(Jn[:MN, :MN]))
    return np.diag(J)[:MN] / Z, float(max(cross, np.abs(off).max(initial=0.0)))
