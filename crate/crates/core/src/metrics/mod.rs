//! Evaluation metrics for prediction regions.

mod cec;
mod kmeans;
mod size;
mod wsc;

pub use cec::{cec, cec_v, cec_x, cluster_count, density_features, CecConfig};
pub use kmeans::{kmeans_pp, Partition};
pub use size::{estimate_region_size, region_sizes, SizeEstimate};
pub use wsc::{wsc, WscConfig, WscResult};

use crate::error::{Error, Result};

/// Fraction of test points whose output lies in its region.
pub fn marginal_coverage(memberships: &[bool]) -> Result<f64> {
    if memberships.is_empty() {
        return Err(Error::InvalidData("coverage of an empty test set".into()));
    }
    Ok(memberships.iter().filter(|b| **b).count() as f64 / memberships.len() as f64)
}
