"""Evidence fusion and reliability-aware arbitration for closed-set QA."""

from .errors import (
    BeliefError,
    CapacityError,
    ClientError,
    ConfigurationError,
    FrameLookupError,
    ParseError,
    SchemaError,
    TotalConflictError,
    UsageError,
)
from .frame import Frame, HypothesisSet, MassFunction, intersect, make_frame, normalize, singleton
from .fusion import (
    BACKEND,
    UNCERTAIN,
    FusionConfig,
    FusionResult,
    RestrictedBpa,
    belief,
    build_bpa,
    combine_general,
    combine_restricted,
    decide,
    fuse_evidence,
)

__version__ = "0.1.0"
