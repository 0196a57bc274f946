//! Region partitions, history chains and the decoherence functional.

mod decoherence;
mod partition;
mod spec;

pub use decoherence::{
    chain_apply, decoherence_matrix, dh_probabilities, ConsistencyReport, DecoherenceMatrix, DhTable, PruneStats,
    TreeOptions, DEFAULT_CONSISTENCY_MIN_WEIGHT, DEFAULT_EPS_CONSISTENCY,
};
pub use partition::{make_partition, project, BoxRegion, PartitionSpec, RegionPartition};
pub use spec::{HistoryLabel, HistorySpec};
