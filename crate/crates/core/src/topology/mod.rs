//! Communication graphs and the Markovian switching schedule.

mod graph;
mod mixing;
mod schedule;

pub use graph::{laplacian, make_topology, union_connectivity, Graph, TopologyKind};
pub use mixing::{mixing_matrix, MixingMatrix};
pub use schedule::{default_subset_size, MarkovSchedule};
