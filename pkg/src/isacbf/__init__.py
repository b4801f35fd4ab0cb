"""Multi-cell ISAC coordinated beamforming for ToA localisation CRLB minimisation."""
from .baselines import beampattern_approx, radar_only, zf_beamforming
from .hybrid import run_admm
from .metrics import beampattern, crlb, crlb_report, crlb_value, sinr, sinr_matrix
from .model import BeamformerSet, Geometry, Scenario, SystemConfig, generate_scenario, reference_geometry
from .sca import run_sca
from .sdr import solve_sdr

__all__ = [
    "BeamformerSet",
    "Geometry",
    "Scenario",
    "SystemConfig",
    "beampattern",
    "beampattern_approx",
    "crlb",
    "crlb_report",
    "crlb_value",
    "generate_scenario",
    "reference_geometry",
    "radar_only",
    "run_admm",
    "run_sca",
    "sinr",
    "sinr_matrix",
    "solve_sdr",
    "zf_beamforming",
]

__version__ = "0.1.0"
