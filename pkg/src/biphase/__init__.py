"""Bi-photon and classical defocus phase imaging: simulation, correlation analysis, retrieval."""
from .biphoton import (
    BiphotonFactors,
    OpticalConfig,
    SampleTransmittance,
    joint_density,
    propagate_biphoton,
    pump_near_field,
    sample_plane_factors,
)
from .correlator import CoincidenceSet, MarginalImages, accumulate_marginals, find_coincidences
from .events import DetectorModel, EventStream, generate_classical_frames, generate_pair_events
from .field import ComplexField, DomainError, Grid2D, fresnel_propagate
from .retrieval import TieConfig, enhancement_ratio, epsilon_scan, gs_retrieve, tie_invert

__version__ = "0.1.0"
