pub mod angular;
pub mod bernstein;
pub mod bootstrap;
pub mod copula;
pub mod data;
pub mod diagnostics;
pub mod egpd;
pub mod error;
pub mod gpd;
pub mod model_file;
pub mod optim;
pub mod pipeline;
pub mod radial;
pub mod rng;
pub mod spline;
pub mod transfer;

pub use error::{Error, Result};
