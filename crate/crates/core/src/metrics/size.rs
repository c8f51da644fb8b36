use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::ConditionalModel;
use crate::rng::RngStream;
use crate::scores::CalibratedMethod;
use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Importance-sampling estimate of `|R̂(x)|` with the model as proposal:
/// `(1/K) Σ 1(Ŷ⁽ᵏ⁾ ∈ R̂(x)) / f̂(Ŷ⁽ᵏ⁾ | x)`.
///
/// `contains` receives the `K` draws and returns their memberships.
pub fn estimate_region_size<F>(
    model: &dyn ConditionalModel,
    x: &[f64],
    volume_samples: usize,
    stream: &RngStream,
    contains: F,
) -> Result<f64>
where
    F: FnOnce(ArrayView2<f64>) -> Result<Vec<bool>>,
{
    if volume_samples == 0 {
        return Err(Error::InvalidConfig("region size needs at least one volume sample".into()));
    }
    let draws = model.sample(x, volume_samples, &mut stream.rng())?;
    let inside = contains(draws.view())?;
    let log_density = model.log_density_batch(x, draws.view())?;
    let mut total = 0.0;
    for (member, ld) in inside.into_iter().zip(log_density) {
        if !ld.is_finite() {
            return Err(Error::Numerical(format!("proposal log-density {ld} at a sampled point")));
        }
        if member {
            total += (-ld).exp();
        }
    }
    Ok(total / volume_samples as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeEstimate {
    pub per_point: Vec<f64>,
    pub mean_size: f64,
    pub median_size: f64,
    pub volume_samples: usize,
}

impl SizeEstimate {
    pub fn from_sizes(per_point: Vec<f64>, volume_samples: usize) -> Result<Self> {
        if per_point.is_empty() {
            return Err(Error::InvalidData("no region sizes to summarize".into()));
        }
        let mean_size = per_point.iter().sum::<f64>() / per_point.len() as f64;
        let mut sorted = per_point.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median_size = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        Ok(Self { per_point, mean_size, median_size, volume_samples })
    }
}

/// Region sizes at every test input. Region state for point `j` comes from
/// `region_stream.child(j)` and its volume draws from `volume_stream.child(j)`.
pub fn region_sizes(
    method: &CalibratedMethod,
    model: &dyn ConditionalModel,
    test: &Dataset,
    volume_samples: usize,
    region_stream: &RngStream,
    volume_stream: &RngStream,
) -> Result<SizeEstimate> {
    let sizes = (0..test.len())
        .into_par_iter()
        .map(|j| {
            let x = test.x_row(j);
            let region = method.region(model, x, &region_stream.child(j as u64))?;
            estimate_region_size(model, x, volume_samples, &volume_stream.child(j as u64), |ys| {
                region.contains_batch(ys)
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    SizeEstimate::from_sizes(sizes, volume_samples)
}
