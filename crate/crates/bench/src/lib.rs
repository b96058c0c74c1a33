//! Shared fixtures for the criterion benchmarks.

use iafmc::synthetic::ClusteredMarkov;
use iafmc::{init_params, AssociationGraph, Dataset, Mode, ModelParams};

pub struct Fixture {
    pub dataset: Dataset,
    pub graph: AssociationGraph,
    pub params: ModelParams,
}

/// Clustered synthetic data with `users` users over 50 items and a
/// freshly initialized model (d = 20, L = 3).
pub fn fixture(users: usize, mode: Mode) -> Fixture {
    let dataset = ClusteredMarkov {
        users,
        ..Default::default()
    }
    .generate()
    .expect("valid generator settings");
    let graph = AssociationGraph::from_dataset(&dataset);
    let params = init_params(dataset.n_users(), dataset.n_items(), 20, 3, mode, 7).expect("positive shape");
    Fixture { dataset, graph, params }
}
