//! Bayesian nonparametric Plackett-Luce models built on completely random
//! measures: a single gamma-process model, a generalised-gamma variant, a
//! finite-dimensional baseline and a Dirichlet-process mixture of dependent
//! gamma processes.

pub mod crm;
pub mod dist;
pub mod error;
pub mod io;
pub mod mixture;
pub mod pl;
pub mod rng;
pub mod simulate;
pub mod single;
pub mod special;
pub mod summaries;

pub use crm::{AtomicMeasure, CrmFamily, CrmSpec, ItemId, ItemRegistry, TruncationRule};
pub use error::{Error, Result};
pub use pl::{LatentZ, PartialRanking, RankingDataset};
pub use rng::StreamFactory;
