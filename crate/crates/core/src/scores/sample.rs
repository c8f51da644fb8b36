use super::{check_alpha, check_requirements, min_squared_distance, ConformityScore, MonteCarloParams, PointState};
use crate::error::{Error, Result};
use crate::models::{Capabilities, ConditionalModel};
use crate::rng::RngStream;
use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

/// Distance from `y` to the nearest of `L` draws from `F̂_{Y|x}`.
#[derive(Debug, Clone, Copy)]
pub struct Pcp {
    pub region_samples: usize,
}

impl Pcp {
    pub fn new(params: MonteCarloParams) -> Self {
        Self { region_samples: params.region_samples }
    }
}

impl ConformityScore for Pcp {
    fn name(&self) -> String {
        "pcp".into()
    }

    fn requirements(&self) -> Capabilities {
        Capabilities::sampler()
    }

    fn prepare(&self, model: &dyn ConditionalModel, x: &[f64], stream: &RngStream) -> Result<PointState> {
        check_requirements(self, model)?;
        Ok(PointState::Samples(model.sample(x, self.region_samples, &mut stream.rng())?))
    }

    fn score(&self, _model: &dyn ConditionalModel, _x: &[f64], state: &PointState, y: &[f64]) -> Result<f64> {
        Ok(min_squared_distance(state.samples()?, y).sqrt())
    }
}

/// Number of highest-density draws HD-PCP keeps: `⌊(1 − α)L⌋`.
pub fn hd_pcp_kept(region_samples: usize, alpha: f64) -> usize {
    let raw = (1.0 - alpha) * region_samples as f64;
    (raw + raw * 1e-12).floor() as usize
}

/// PCP restricted to the `⌊(1 − α)L⌋` draws of highest predictive density.
#[derive(Debug, Clone, Copy)]
pub struct HdPcp {
    pub region_samples: usize,
    pub alpha: f64,
}

impl HdPcp {
    pub fn new(params: MonteCarloParams, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if hd_pcp_kept(params.region_samples, alpha) == 0 {
            return Err(Error::InvalidConfig(format!(
                "HD-PCP keeps no samples with L = {} and alpha = {alpha}",
                params.region_samples
            )));
        }
        Ok(Self { region_samples: params.region_samples, alpha })
    }
}

impl ConformityScore for HdPcp {
    fn name(&self) -> String {
        "hd_pcp".into()
    }

    fn requirements(&self) -> Capabilities {
        Capabilities::density().union(Capabilities::sampler())
    }

    fn prepare(&self, model: &dyn ConditionalModel, x: &[f64], stream: &RngStream) -> Result<PointState> {
        check_requirements(self, model)?;
        let draws = model.sample(x, self.region_samples, &mut stream.rng())?;
        let log_density = model.log_density_batch(x, draws.view())?;
        let mut order: Vec<usize> = (0..draws.nrows()).collect();
        // Highest density first; equal densities keep draw order.
        order.sort_by(|&a, &b| log_density[b].total_cmp(&log_density[a]));
        order.truncate(hd_pcp_kept(self.region_samples, self.alpha));
        Ok(PointState::Samples(draws.select(Axis(0), &order)))
    }

    fn score(&self, _model: &dyn ConditionalModel, _x: &[f64], state: &PointState, y: &[f64]) -> Result<f64> {
        Ok(min_squared_distance(state.samples()?, y).sqrt())
    }
}

/// Number of latent draws STDQR keeps: `⌈(1 − α)L⌉`.
pub fn stdqr_kept(region_samples: usize, alpha: f64) -> usize {
    let raw = (1.0 - alpha) * region_samples as f64;
    (raw - raw * 1e-12).ceil() as usize
}

/// Balls around the images `Q̂(z⁽ˡ⁾; x)` of the `⌈(1 − α)L⌉` latent draws
/// closest to the origin.
#[derive(Debug, Clone, Copy)]
pub struct Stdqr {
    pub region_samples: usize,
    pub alpha: f64,
}

impl Stdqr {
    pub fn new(params: MonteCarloParams, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if stdqr_kept(params.region_samples, alpha) == 0 {
            return Err(Error::InvalidConfig("STDQR keeps no latent samples".into()));
        }
        Ok(Self { region_samples: params.region_samples, alpha })
    }

    /// The latent draws for one input, closest to the origin first.
    pub fn kept_latents(&self, dim: usize, stream: &RngStream) -> Array2<f64> {
        let mut rng = stream.rng();
        let mut z = Array2::<f64>::zeros((self.region_samples, dim));
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let norms: Vec<f64> = z.rows().into_iter().map(|r| r.dot(&r)).collect();
        let mut order: Vec<usize> = (0..self.region_samples).collect();
        order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]));
        order.truncate(stdqr_kept(self.region_samples, self.alpha));
        z.select(Axis(0), &order)
    }
}

impl ConformityScore for Stdqr {
    fn name(&self) -> String {
        "stdqr".into()
    }

    fn requirements(&self) -> Capabilities {
        Capabilities::invertible_map().union(Capabilities::sampler())
    }

    fn prepare(&self, model: &dyn ConditionalModel, x: &[f64], stream: &RngStream) -> Result<PointState> {
        check_requirements(self, model)?;
        let d = model.output_dim();
        let z = self.kept_latents(d, stream);
        let mut mapped = Array2::zeros(z.raw_dim());
        for (i, row) in z.rows().into_iter().enumerate() {
            let y = model.latent_forward(x, &row.to_vec())?;
            mapped.row_mut(i).assign(&ndarray::ArrayView1::from(&y));
        }
        Ok(PointState::Samples(mapped))
    }

    fn score(&self, _model: &dyn ConditionalModel, _x: &[f64], state: &PointState, y: &[f64]) -> Result<f64> {
        Ok(min_squared_distance(state.samples()?, y).sqrt())
    }
}
