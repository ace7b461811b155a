"""Multi-label implicit discourse relation recognition over Level-2 PDTB-3 senses."""

from multisense.corpus import (
    NUM_LABELS,
    SENSES,
    Instance,
    RecordError,
    compute_stats,
    duplicate_expansion,
    filter_vocabulary,
    parse_records,
    to_label_vector,
)

__version__ = "0.1.0"

__all__ = [
    "NUM_LABELS",
    "SENSES",
    "Instance",
    "RecordError",
    "compute_stats",
    "duplicate_expansion",
    "filter_vocabulary",
    "parse_records",
    "to_label_vector",
]
