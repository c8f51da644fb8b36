//! Split conformal prediction for multivariate outputs.
//!
//! A conditional model ([`models::ConditionalModel`]) exposes some of a
//! density, a sampler, marginal quantiles and an invertible latent map. The
//! scores in [`scores`] turn it into prediction regions with finite-sample
//! marginal coverage; [`metrics`] measures size and conditional coverage and
//! [`stats`] ranks methods across datasets.
//!
//! ```
//! use mocp::datagen::ToyProcess;
//! use mocp::models::ToyOracle;
//! use mocp::rng::{phase, RngStream};
//! use mocp::scores::{calibrate, MethodConfig, MethodId};
//!
//! let process = ToyProcess::Unimodal;
//! let model = ToyOracle::new(process);
//! let seed = RngStream::new(0);
//! let cal = process.generate(200, &seed.child(phase::DATA), true).unwrap();
//! let method = calibrate(MethodId::LCp, &MethodConfig::default(), &model, &cal, 0.2, &seed.child(phase::CALIBRATION)).unwrap();
//! let region = method.region(&model, &[0.0], &seed.child(phase::TEST)).unwrap();
//! assert!(region.contains(&model.mixture_at(&[0.0]).unwrap().latent_forward(&[0.0, 0.0])).unwrap());
//! ```

pub mod calibration;
pub mod data;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod scores;
pub mod selftest;
pub mod special;
pub mod stats;
