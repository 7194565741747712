"""Stopping-time machinery: poles, density stopping, oscillating solutions and coronas."""
from .bilateral import (AugmentedRegion, CoronaDecomposition, CoronaHMReport, SawtoothDomain, augment_all,
                        augment_and_split, bilateral_corona, build_sawtooth, sawtooth_cells, verify_corona_hm)
from .calibration import CalibrationParams, Poles, flat_poles, measure_constant, place_poles
from .density import (DensityStoppingState, LDForest, binomial_stderr, density_stopping, e_mask, iterate_LD,
                      separate)
from .oscillation import (KhintchineReport, OscillatingSolution, construct_uQ, flat_disk_potential,
                          khintchine_experiment, pole_solution)
from .regimes import (CoherencyReport, PackingReport, StoppingRegime, check_coherency, semi_coherent_subregime,
                      verify_packing)

__all__ = [
    "AugmentedRegion", "CalibrationParams", "CoherencyReport", "CoronaDecomposition", "CoronaHMReport",
    "DensityStoppingState", "KhintchineReport", "LDForest", "OscillatingSolution", "PackingReport", "Poles",
    "SawtoothDomain", "StoppingRegime", "augment_all", "augment_and_split", "bilateral_corona",
    "binomial_stderr", "build_sawtooth", "check_coherency", "construct_uQ", "density_stopping", "e_mask",
    "flat_disk_potential", "flat_poles", "iterate_LD", "khintchine_experiment", "measure_constant", "place_poles",
    "pole_solution", "sawtooth_cells", "semi_coherent_subregime", "separate", "verify_corona_hm",
    "verify_packing",
]
