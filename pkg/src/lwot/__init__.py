"""Layerwise-Wasserstein distances, barycenters and root phenotyping."""

from . import errors
from .discrete_ot import (
    DiscreteMeasure,
    MultiCoupling,
    TransportPlan,
    barycenter_from_coupling,
    multimarginal_lp,
    transport_lp,
    w_barycenter,
)
from .layerwise import (
    LayerwiseCoupling,
    LwDistanceReport,
    RotationSearchResult,
    layerwise_coupling,
    lw_barycenter,
    lw_barycenter_objective,
    lw_distance,
    lw_distance_extended,
    rescale,
    rotate,
    symmetrized_barycenter,
    symmetrized_distance,
)
from .measures import (
    AtomicMeasure,
    GriddedMeasure,
    LayeredMeasure,
    VerticalProfile,
    from_grid,
    load_atoms_csv,
    load_grid_json,
    normalize,
    vertical_marginal,
)
from .ot1d import Discrete1D, barycenter_1d, w2sq_1d
from .phenotypes import (
    ConvexityReport,
    EntropyReport,
    convexity_check,
    shannon_entropy,
    vertical_internal_energy,
    vertical_mean,
    vertical_quantile,
    vertical_variance,
)
from .skeleton import (
    GhostLimb,
    Limb,
    RootLengthBracket,
    SkeletalRoot,
    SkeletalRootMeasure,
    ValidationReport,
    ghost,
    load_skeleton_json,
    root_length,
    root_length_bounds,
    save_skeleton_json,
    skeletal_barycenter,
    to_atomic,
    validate,
)

__version__ = "0.1.0"
