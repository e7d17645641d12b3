//! Minimum-description-length comparison of metadata partitions against
//! inferred stochastic-block-model partitions.

pub mod combinatorics;
pub mod dl;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod inference;
pub mod io;
pub mod metablox;
pub mod rng;
pub mod significance;
pub mod synthetic;

pub use combinatorics::QTable;
pub use dl::{dl, dl_with, DlBreakdown, Variant};
pub use error::{Error, Result};
pub use graph::{block_stats, load_edge_list, BlockStats, Canonicalize, Graph, Partition};
pub use inference::{infer, infer_with, InferenceConfig, InferenceResult};
pub use metablox::{metablox, MetabloxConfig, MetabloxReport, VariantReport};
pub use significance::{randomized_dl_distribution, PermutationEnsemble};
