"""Rough-path numerics: controlled integration, RDE solvers, slow-fast
simulation and Monte Carlo checks of the averaging principle."""

from .core import (
    Grid,
    GridControlledPath,
    GridRoughPath,
    SmoothMap,
    chen_block,
    compose_smooth,
    concat_cp,
    concat_rough_paths,
    dilate,
    hoelder_seminorm,
    homogeneous_norm,
    level2_field,
    zero_rough_path,
)
from .experiment import (
    StudyResult,
    StudySpec,
    aux_gap_slope,
    convergence_study,
    decompose_M,
    delta_schedule,
    floor_to_block,
    khasminskii_aux,
)
from .frozen import (
    FbarTable,
    FrozenModel,
    averaged_drift,
    contraction_check,
    invariant_moment_check,
    mixing_decay_check,
    solve_averaged,
    solve_frozen,
)
from .integral import integral_error_bound, kappa, local_summand, rough_integral
from .lifts import (
    NoiseSpec,
    brownian_ito_lift,
    fbm_lift,
    make_rng,
    mixed_lift,
    sample_lift,
    smooth_lift,
    stratonovich_from_ito,
)
from .models import get_model
from .rde import (
    ExplosionError,
    VectorFieldSet,
    apriori_bracket,
    rough_euler_step,
    solve_rde,
    solve_rde_picard,
    stability_gap,
)
from .slowfast import (
    MicroStepPolicy,
    SlowFastCoeffs,
    assemble_blocks,
    fast_sde_consistency,
    ito_strat_switch,
    solve_slow_fast,
)

__version__ = "0.1.0"
