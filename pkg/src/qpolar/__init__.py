"""Channel polarization over finite quasigroups, MAC polarization and linear-channel loss analysis."""

__version__ = "0.1.0"

from .algebra import (BalancedPartition, Quasigroup, StablePartition, cyclic_group, derived_quasigroup,
                      enumerate_stable_partitions, example_quasigroup, product_group, stable_partition_check,
                      validate_quasigroup, xor_group)
from .dmc import Dmc, bec, bhattacharyya, bsc, channels_equivalent, mutual_information, project_channel
from .errors import ParseError, QpolarError, ResourceLimit, ValidationError
from .polarize import SignSequence, minus_transform, plus_transform, polarize_path, survey

__all__ = [
    "BalancedPartition", "Dmc", "ParseError", "QpolarError", "Quasigroup", "ResourceLimit", "SignSequence",
    "StablePartition", "ValidationError", "bec", "bhattacharyya", "bsc", "channels_equivalent", "cyclic_group",
    "derived_quasigroup", "enumerate_stable_partitions", "example_quasigroup", "minus_transform",
    "mutual_information", "plus_transform", "polarize_path", "product_group", "project_channel",
    "stable_partition_check", "survey", "validate_quasigroup", "xor_group",
]
