from .bounds import (
    CoverCheck,
    EntropyEstimate,
    LowerBoundCount,
    NetAudit,
    TheoreticalCover,
    audit_net,
    build_separated_family,
    build_theoretical_cover,
    cover_count_bound,
    evolved_spacings,
    level_set,
    lower_bound_count,
    regular_net,
    slope_fit,
    verify_cover,
)
from .counting import (
    CoverResult,
    TruncationReport,
    ball_contains,
    exact_cover_count,
    exact_separated_count,
    greedy_cover_count,
    greedy_separated_count,
    neighbour_lists,
    truncated_inequality_audit,
    validate_witness,
)
from .families import (
    Family,
    FamilyError,
    family_from_functions,
    fourier_family,
    mcshane_family,
    shift_delta_step,
    shift_family,
)
