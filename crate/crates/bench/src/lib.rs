//! Shared fixtures for the criterion benches.

use diffgraph_core::harness::{load_dataset, DataSource, Dataset, RunConfig};
use diffgraph_core::hetgraph::SyntheticSpec;

/// Synthetic users x items graph with the default auxiliary relations.
pub fn synthetic(users: usize, items: usize, density: f64) -> SyntheticSpec {
    SyntheticSpec {
        n_users: users,
        n_items: items,
        density,
        ..SyntheticSpec::default()
    }
}

pub fn config(spec: SyntheticSpec, epochs: usize) -> RunConfig {
    RunConfig {
        epochs,
        data: DataSource::Synthetic(spec),
        ..RunConfig::default()
    }
}

pub fn dataset(cfg: &RunConfig) -> Dataset {
    load_dataset(cfg).expect("synthetic data generates")
}
