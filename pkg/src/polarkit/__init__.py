"""polarkit: exact finite-length analysis of polar codes over the BEC."""

from .asymptotics import (
    DoubleExponent,
    bivariate_orthant,
    loglog_exponent,
    overlap_limit,
    polar_threshold,
    predicted_cdf,
    q_function,
    q_inverse,
)
from .becpolar import (
    LevelCdf,
    enumerate_level,
    evolve_exact,
    level_from_samples,
    sample_paths,
    split_erasure_polynomials,
)
from .boundprop import check_process_conditions, propagate_comp_interval, propagate_z_interval
from .codec import (
    ERASED,
    ErasureWord,
    PolarCode,
    SimulationReport,
    encode,
    map_decode_bec,
    sc_decode_bec,
    simulate,
    transmit_bec,
    wilson_interval,
)
from .construct import (
    SelectionBounds,
    SelectionSet,
    digit_reverse,
    hybrid_selection,
    hybrid_selection_recursive,
    overlap_fraction,
    polar_selection,
    rm_selection,
    selection_bounds,
)
from .extval import ExtendedUnitValue
from .gf2kernel import BitMatrix, KernelProfile, is_polarizing, kernel_profile, partial_distances

__version__ = "0.1.0"

__all__ = [
    "BitMatrix",
    "DoubleExponent",
    "ERASED",
    "ErasureWord",
    "ExtendedUnitValue",
    "KernelProfile",
    "LevelCdf",
    "PolarCode",
    "SelectionBounds",
    "SelectionSet",
    "SimulationReport",
    "bivariate_orthant",
    "check_process_conditions",
    "digit_reverse",
    "encode",
    "enumerate_level",
    "evolve_exact",
    "hybrid_selection",
    "hybrid_selection_recursive",
    "is_polarizing",
    "kernel_profile",
    "level_from_samples",
    "loglog_exponent",
    "map_decode_bec",
    "overlap_fraction",
    "overlap_limit",
    "partial_distances",
    "polar_selection",
    "polar_threshold",
    "predicted_cdf",
    "propagate_comp_interval",
    "propagate_z_interval",
    "q_function",
    "q_inverse",
    "rm_selection",
    "sample_paths",
    "sc_decode_bec",
    "selection_bounds",
    "simulate",
    "split_erasure_polynomials",
    "transmit_bec",
    "wilson_interval",
]
