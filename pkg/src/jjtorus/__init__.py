"""Phase-lock areas, constrictions and the isomonodromic foliation of the
overdamped Josephson junction model dtheta/dtau = a cos(theta) + ell + s cos(tau)."""

from .dynamics import (CircleMapProbe, ModelParams, RotationResult, ScaledParams, circle_map,
                       dh_da_at_a0, finite_difference_probe, flow_lift, rotation_number,
                       to_physical, to_scaled, variational_probe, vector_field)
from .errors import (ConvergenceError, DomainError, IntegrationError, NotFoundError,
                     OnDivisorError, PoleError, UnclassifiableSingularity)

__version__ = "0.1.0"
