"""rankaudit: audit method-comparison leaderboards.

Three analyses over a per-case score table:

* pairwise one-sided rank-test significance maps with Bonferroni control,
* leaderboards rebuilt under target-appropriate metrics (DSC vs NSD,
  both computable from voxel masks),
* demographic parity audits over intersectional subgroups.
"""

from .data_model import (
    DemographicTable,
    MetricKind,
    ScoreTable,
    TableSchema,
    VoxelMask,
    load_demographics,
    load_mask,
    load_score_table,
    write_demographics,
    write_mask,
    write_score_table,
)
from .errors import (
    AuditError,
    ConfigurationError,
    FormatError,
    InsufficientDataError,
    ParseError,
    ShapeMismatchError,
    ValidationError,
)
from .fairness import (
    DpdMode,
    DpdResult,
    FairnessReport,
    Subgroup,
    dpd,
    enumerate_subgroups,
    fairness_audit,
    group_scores,
    success_rate,
)
from .leaderboard import (
    Leaderboard,
    MetricPolicy,
    RankChangeReport,
    SortKey,
    build_leaderboard,
    default_policy,
    load_policy,
    method_target_mean,
    rank_changes,
)
from .rank_stats import (
    PairedSample,
    SignificanceMap,
    WilcoxonMethod,
    Tier,
    WilcoxonResult,
    aggregate_per_case,
    bonferroni,
    pair,
    significance_map,
    simulate_null_fwer,
    wilcoxon_one_sided,
)
from .render import KdeCurve, kde, render_significance_svg, render_violin_svg
from .seg_metrics import (
    DEFAULT_TOLERANCE_MM,
    BoundarySet,
    DistanceField,
    Tolerance,
    boundary,
    distance_field,
    dsc,
    nsd,
)

__version__ = "0.1.0"

__all__ = [
    "AuditError",
    "BoundarySet",
    "ConfigurationError",
    "DEFAULT_TOLERANCE_MM",
    "DemographicTable",
    "DistanceField",
    "DpdMode",
    "DpdResult",
    "FairnessReport",
    "FormatError",
    "InsufficientDataError",
    "KdeCurve",
    "Leaderboard",
    "MetricKind",
    "MetricPolicy",
    "PairedSample",
    "ParseError",
    "RankChangeReport",
    "ScoreTable",
    "ShapeMismatchError",
    "SignificanceMap",
    "SortKey",
    "Subgroup",
    "TableSchema",
    "WilcoxonMethod",
    "Tier",
    "Tolerance",
    "ValidationError",
    "VoxelMask",
    "WilcoxonResult",
    "aggregate_per_case",
    "bonferroni",
    "boundary",
    "build_leaderboard",
    "default_policy",
    "distance_field",
    "dpd",
    "dsc",
    "enumerate_subgroups",
    "fairness_audit",
    "group_scores",
    "kde",
    "load_demographics",
    "load_mask",
    "load_policy",
    "load_score_table",
    "method_target_mean",
    "nsd",
    "pair",
    "rank_changes",
    "render_significance_svg",
    "render_violin_svg",
    "significance_map",
    "simulate_null_fwer",
    "success_rate",
    "wilcoxon_one_sided",
    "write_demographics",
    "write_mask",
    "write_score_table",
]
