"""Shared scenario builders for the test-suite."""
import dataclasses

import numpy as np

from isacbf.checks import desk_scenario, random_beamformers  # noqa: F401


def aligned_scenario(seed=91, Nt=8, Gamma=10.0, picks=((0, 1, 0, 1.8599758106749835),)):
    """Desk scenario with chosen channels replaced by the target steering direction.

    Each pick ``(i, m, k, phase)`` sets ``h[i, m, k]`` parallel to ``a^*(theta_i)``,
    which puts the target direction inside BS i's channel span.
    """
    sc = desk_scenario(seed, Nt=Nt, Gamma=Gamma)
    h = np.array(sc.h)
    for i, m, k, ph in picks:
        h[i, m, k] = np.linalg.norm(h[i, m, k]) * sc.steering[i].conj() / np.sqrt(Nt) * np.exp(1j * ph)
    return dataclasses.replace(sc, h=h)
