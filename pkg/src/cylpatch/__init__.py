"""Contour dynamics for vortex patches on the half cylinder.

The flow domain is the half cylinder (x1, x2) in [0, inf) x [-pi, pi)
with a solid wall at x1 = 0, handled by the image method. Patches of
unit vorticity are marker polygons advected by their self-induced
velocity; the package also ships a decreasing-rearrangement toolkit on
wall-anchored grids and an experiment CLI (`cylpatch`) that certifies
the steady strip, the stability of near-strip patches, and linear
perimeter growth.

Call warmup() once to precompile the JIT kernels (cached on disk).
"""

from .errors import (
    AreaDistortionError,
    BlowupError,
    CheckpointError,
    ConfigError,
    CylpatchError,
    GeometryError,
    GridMismatchError,
    SingularInputError,
)
from .kernel import (
    gamma_s,
    green_half,
    kernel_half,
    kernel_s,
    velocity_from_contours,
    velocity_from_grid,
)
from .geometry import (
    Contour,
    Patch,
    apply_shear,
    make_cover_strip,
    make_rectangle,
    make_strip,
    membership,
    patch_area,
    patch_impulse,
    patch_perimeter,
    rasterize_patch,
    strip_velocity_profile,
    sym_diff_functionals,
    to_cylinder,
    vertical_center,
)
from .rearrange import (
    GridField,
    StripProfile,
    column_profile,
    cutoff,
    impulse,
    j1_distance,
    l1_distance,
    level_measure,
    load_field,
    mass,
    mp_gap,
    nonexpansivity_check,
    rearrange,
    save_field,
)
from .dynamics import (
    FlowState,
    RemeshStats,
    RunConfig,
    RunResult,
    config_hash,
    initial_state,
    load_checkpoint,
    remesh,
    resolve_config,
    resume_state,
    run,
    save_checkpoint,
    step,
)
from .experiments import (
    DiagRecord,
    ExperimentReport,
    diagnose,
    kernel_identity_table,
    perimeter_growth_experiment,
    rearrangement_suite,
    stability_experiment,
    steady_strip_experiment,
    velocity_gap_probe,
)

__version__ = "0.1.0"


def warmup() -> None:
    """Compile every JIT kernel on tiny inputs (results are disk-cached)."""
    import numpy as np

    from . import kernel as _kernel

    _kernel.warmup()
    tri = Contour(np.array([[0.4, 0.0], [1.1, 0.35], [0.6, 0.8]]), 1.0, 0)
    p = Patch((tri,), "warmup")
    sym_diff_functionals(p, 128)
    membership(p)(np.array([0.7, 0.3]))
    rasterize_patch(p, 8, 8, 2.0)
