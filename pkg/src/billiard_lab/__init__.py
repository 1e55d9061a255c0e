"""Open planar billiards: deformable no-eclipse tables, symbolic orbits,
and Lyapunov exponents along deformations."""

from .geometry import (AlphaRangeError, ConvexityError, DeformationFamily,
                       EclipseCertificate, EclipseError, GeometryError,
                       ObstacleSpec, SmoothnessError, TableBounds,
                       boundary_pair_extremes, circle, check_no_eclipse,
                       curvature, curvature_partials, ellipse, eval_jet,
                       outward_normal, partial_jet, perimeter,
                       phi_max_from_observation, table_bounds, validate_family)
from .dynamics import (GrazingError, Hit, PhaseState, ReflectionRecord,
                       Trajectory, billiard_step, first_intersection, reflect,
                       trajectory)
from .symbolic import (AlphaDerivatives, BilliardOrbit, ShadowingError,
                       SolveError, Word, enumerate_cyclic_words,
                       find_orbit_segment, find_periodic_orbit, is_admissible,
                       orbit_alpha_derivatives, sample_itinerary, theta_metric)
from .lyapunov import (CurvatureTrace, FrontExpansionReport, KdotTrace,
                       LyapunovReport, curvature_between,
                       default_seed_curvature, f_derivative_sum,
                       front_expansion_check, jacobian_lyapunov_oracle,
                       kdot_trace, lyapunov_bounds, lyapunov_estimate,
                       periodic_curvature_fixed_point, propagate_curvature)

__version__ = "0.1.0"
