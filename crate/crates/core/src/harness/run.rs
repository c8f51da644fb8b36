use super::config::{DatasetSource, ModelSpec, RunConfig};
use crate::data::{split_dataset, Dataset, SplitIndices, Standardizer};
use crate::error::{Error, Result};
use crate::metrics::{
    cec_v, cec_x, cluster_count, density_features, kmeans_pp, marginal_coverage, region_sizes, wsc,
};
use crate::models::{
    fit_conditional_gaussian, fit_knn_kde, CapabilityMask, ConditionalModel, ToyOracle,
};
use crate::rng::{phase, RngStream};
use crate::scores::{calibrate, MCp, MethodConfig, MethodId};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

/// Metrics and timings of one method on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub dataset: String,
    pub model: String,
    pub method: MethodId,
    pub seed: u64,
    pub alpha: f64,
    pub n_cal: usize,
    pub n_test: usize,
    pub mc: Option<f64>,
    pub mean_size: Option<f64>,
    pub median_size: Option<f64>,
    pub wsc: Option<f64>,
    pub cec_x: Option<f64>,
    pub cec_v: Option<f64>,
    /// Split-conformal threshold; absent for CopulaCPTS or when infinite.
    pub q_hat: Option<f64>,
    pub cal_time_s: f64,
    pub test_time_s: f64,
    /// Marginal quantiles were read off samples and that sampling time was
    /// subtracted from the timings.
    pub timing_excludes_sampling: bool,
    pub error: Option<String>,
}

impl RunRecord {
    /// The record with wall-clock fields zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        Self { cal_time_s: 0.0, test_time_s: 0.0, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedMethod {
    pub method: MethodId,
    pub reason: String,
}

/// Everything produced for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub config_hash: String,
    pub seed: u64,
    pub dataset: String,
    pub model: String,
    pub records: Vec<RunRecord>,
    pub skipped: Vec<SkippedMethod>,
    /// Set when the seed aborted before any method ran.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub config_hash: String,
    pub seeds: Vec<SeedOutcome>,
}

impl RunOutput {
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.seeds.iter().flat_map(|s| s.records.iter())
    }

    pub fn has_errors(&self) -> bool {
        self.seeds.iter().any(|s| s.error.is_some() || s.records.iter().any(|r| r.error.is_some()))
    }
}

struct Prepared {
    model: Arc<dyn ConditionalModel>,
    val: Dataset,
    cal: Dataset,
    test: Dataset,
}

fn load_source(cfg: &RunConfig, seed: &RngStream) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetSource::Toy { process, n } => process.generate(*n, &seed.child(phase::DATA), true),
        DatasetSource::Csv { path } => Dataset::read_csv(path),
    }
}

fn standardize(data: &Dataset, split: &SplitIndices) -> Result<Dataset> {
    let sx = Standardizer::fit(&data.x, &split.train)?;
    let sy = Standardizer::fit(&data.y, &split.train)?;
    Dataset::with_names(sx.apply(&data.x), sy.apply(&data.y), data.feature_names.clone(), data.target_names.clone())
}

fn fit_model(cfg: &RunConfig, train: &Dataset, val: &Dataset) -> Result<Arc<dyn ConditionalModel>> {
    let model: Arc<dyn ConditionalModel> = match &cfg.model.spec {
        ModelSpec::ConditionalGaussian => Arc::new(fit_conditional_gaussian(train)?),
        ModelSpec::KnnKde { k, sigma_grid } => {
            Arc::new(fit_knn_kde(train, (*k).min(train.len()), sigma_grid, val)?)
        }
        ModelSpec::Oracle => match cfg.dataset {
            DatasetSource::Toy { process, .. } => Arc::new(ToyOracle::new(process)),
            DatasetSource::Csv { .. } => {
                return Err(Error::InvalidConfig("the oracle model is only available for toy datasets".into()))
            }
        },
    };
    Ok(match cfg.model.capabilities {
        Some(allowed) => Arc::new(CapabilityMask::new(model, allowed)),
        None => model,
    })
}

fn prepare(cfg: &RunConfig, data: &Dataset, seed: &RngStream) -> Result<Prepared> {
    let split = split_dataset(data.len(), cfg.split.cal_size, cfg.split.train_frac, cfg.split.val_frac, &seed.child(phase::SPLIT))?;
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::InvalidConfig("split leaves no training or no test points".into()));
    }
    let data = match cfg.dataset {
        DatasetSource::Csv { .. } => standardize(data, &split)?,
        DatasetSource::Toy { .. } => data.clone(),
    };
    let train = data.select(&split.train)?;
    // Without a validation split, tuning and clustering fall back to train.
    let val = if split.val.is_empty() {
        log::warn!("empty validation split; using the training set in its place");
        train.clone()
    } else {
        data.select(&split.val)?
    };
    let model = fit_model(cfg, &train, &val)?;
    Ok(Prepared { model, val, cal: data.select(&split.cal)?, test: data.select(&split.test)? })
}

/// Time spent reading marginal quantiles off samples for every point.
fn quantile_sampling_seconds(model: &dyn ConditionalModel, data: &Dataset, alpha: f64, stream: &RngStream) -> Result<f64> {
    let mcp = MCp::new(alpha)?;
    let start = Instant::now();
    (0..data.len())
        .into_par_iter()
        .map(|j| mcp.intervals(model, data.x_row(j), &stream.child(j as u64)).map(|_| ()))
        .collect::<Result<Vec<()>>>()?;
    Ok(start.elapsed().as_secs_f64())
}

struct SeedContext<'a> {
    cfg: &'a RunConfig,
    hash: &'a str,
    seed: u64,
    stream: RngStream,
    prepared: Prepared,
    input_partition: Option<crate::metrics::Partition>,
    features: Option<(Array2<f64>, Array2<f64>)>,
}

impl SeedContext<'_> {
    fn evaluate(&self, id: MethodId) -> RunRecord {
        let p = &self.prepared;
        let mut record = RunRecord {
            config_hash: self.hash.to_string(),
            dataset: self.cfg.dataset.name(),
            model: self.cfg.model.name().to_string(),
            method: id,
            seed: self.seed,
            alpha: self.cfg.alpha,
            n_cal: p.cal.len(),
            n_test: p.test.len(),
            mc: None,
            mean_size: None,
            median_size: None,
            wsc: None,
            cec_x: None,
            cec_v: None,
            q_hat: None,
            cal_time_s: 0.0,
            test_time_s: 0.0,
            timing_excludes_sampling: false,
            error: None,
        };
        if let Err(e) = self.fill(id, &mut record) {
            log::error!("{id} on seed {}: {e}", self.seed);
            record.error = Some(e.to_string());
        }
        record
    }

    fn fill(&self, id: MethodId, record: &mut RunRecord) -> Result<()> {
        let cfg = self.cfg;
        let p = &self.prepared;
        let model = p.model.as_ref();
        let method_config = MethodConfig { monte_carlo: cfg.monte_carlo, copula: cfg.copula, ..MethodConfig::default() };
        let cal_stream = self.stream.child(phase::CALIBRATION);
        let test_stream = self.stream.child(phase::TEST);

        let start = Instant::now();
        let method = calibrate(id, &method_config, model, &p.cal, cfg.alpha, &cal_stream)?;
        record.cal_time_s = start.elapsed().as_secs_f64();
        record.q_hat = method.q_hat().filter(|q| q.is_finite());

        let start = Instant::now();
        let covered = method.memberships(model, &p.test, &test_stream)?;
        record.test_time_s = start.elapsed().as_secs_f64();

        if id.uses_marginal_quantiles() && !model.capabilities().marginal_quantiles {
            let cal_sampling = quantile_sampling_seconds(model, &p.cal, cfg.alpha, &cal_stream)?;
            let test_sampling = quantile_sampling_seconds(model, &p.test, cfg.alpha, &test_stream)?;
            record.cal_time_s = (record.cal_time_s - cal_sampling).max(0.0);
            record.test_time_s = (record.test_time_s - test_sampling).max(0.0);
            record.timing_excludes_sampling = true;
        }

        record.mc = Some(marginal_coverage(&covered)?);
        let caps = model.capabilities();
        if caps.density && caps.sampler {
            let sizes = region_sizes(&method, model, &p.test, cfg.volume_samples, &test_stream, &self.stream.child(phase::VOLUME))?;
            record.mean_size = Some(sizes.mean_size);
            record.median_size = Some(sizes.median_size);
        }
        if (p.test.len() as f64) >= 2.0 / cfg.wsc.delta {
            record.wsc = Some(wsc(p.test.x.view(), &covered, &cfg.wsc, &self.stream.child(phase::WSC))?.value);
        }
        if let Some(partition) = &self.input_partition {
            record.cec_x = Some(cec_x(p.test.x.view(), &covered, partition, cfg.alpha)?);
        }
        if let Some((val_features, test_features)) = &self.features {
            let stream = self.stream.child(phase::CLUSTERING).child(1);
            record.cec_v = Some(cec_v(val_features.view(), test_features.view(), &covered, &cfg.cec, cfg.alpha, &stream)?);
        }
        Ok(())
    }
}

fn run_seed(cfg: &RunConfig, hash: &str, data: &Result<Dataset>, seed: u64) -> SeedOutcome {
    let mut outcome = SeedOutcome {
        config_hash: hash.to_string(),
        seed,
        dataset: cfg.dataset.name(),
        model: cfg.model.name().to_string(),
        records: Vec::new(),
        skipped: Vec::new(),
        error: None,
    };
    let stream = RngStream::new(seed);
    let loaded;
    let data = match data {
        Ok(d) => d,
        Err(_) => match load_source(cfg, &stream) {
            Ok(d) => {
                loaded = d;
                &loaded
            }
            Err(e) => {
                outcome.error = Some(e.to_string());
                return outcome;
            }
        },
    };
    let prepared = match prepare(cfg, data, &stream) {
        Ok(p) => p,
        Err(e) => {
            log::error!("seed {seed}: {e}");
            outcome.error = Some(e.to_string());
            return outcome;
        }
    };
    let caps = prepared.model.capabilities();
    let clusters = cluster_count(cfg.cec.clusters, prepared.test.len(), prepared.val.len());
    let input_partition =
        kmeans_pp(prepared.val.x.view(), clusters, &mut stream.child(phase::CLUSTERING).child(0).rng(), cfg.cec.max_iter)
            .map_err(|e| log::warn!("seed {seed}: no input partition for CEC-X: {e}"))
            .ok();
    let features = if caps.density && caps.sampler {
        let fs = stream.child(phase::DENSITY_FEATURES);
        let model = prepared.model.as_ref();
        match (
            density_features(model, prepared.val.x.view(), cfg.cec.density_samples, &fs.child(0)),
            density_features(model, prepared.test.x.view(), cfg.cec.density_samples, &fs.child(1)),
        ) {
            (Ok(v), Ok(t)) => Some((v, t)),
            (Err(e), _) | (_, Err(e)) => {
                log::warn!("seed {seed}: no density features for CEC-V: {e}");
                None
            }
        }
    } else {
        None
    };
    let ctx = SeedContext { cfg, hash, seed, stream, prepared, input_partition, features };
    for &id in &cfg.methods {
        let missing = id.missing(&caps);
        if !missing.is_empty() {
            let reason = format!("{} required", missing.join(", "));
            log::info!("skipping {id} on seed {seed}: {reason}");
            outcome.skipped.push(SkippedMethod { method: id, reason });
            continue;
        }
        outcome.records.push(ctx.evaluate(id));
    }
    outcome
}

/// Runs every seed of `cfg`, persisting results when `output_dir` is set.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    // CSV data is shared by all seeds; toy data is drawn per seed.
    let shared = match &cfg.dataset {
        DatasetSource::Csv { path } => Ok(Dataset::read_csv(path)?),
        DatasetSource::Toy { .. } => Err(Error::InvalidData("drawn per seed".into())),
    };
    let seeds = cfg.seeds.iter().map(|&s| run_seed(cfg, &hash, &shared, s)).collect();
    let output = RunOutput { config_hash: hash, seeds };
    if let Some(dir) = &cfg.output_dir {
        persist(cfg, &output, dir)?;
    }
    Ok(output)
}

pub const INDEX_FILE: &str = "index.csv";
pub const RECORDS_DIR: &str = "records";

fn persist(cfg: &RunConfig, output: &RunOutput, dir: &Path) -> Result<()> {
    let records_dir = dir.join(RECORDS_DIR);
    std::fs::create_dir_all(&records_dir)?;
    let config_file = records_dir.join(format!("{}-config.json", output.config_hash));
    std::fs::write(&config_file, serde_json::to_string_pretty(cfg)?)?;
    let index_path = dir.join(INDEX_FILE);
    let new_index = !index_path.exists();
    let mut index = std::fs::OpenOptions::new().create(true).append(true).open(&index_path)?;
    if new_index {
        writeln!(index, "config_hash,seed,dataset,model,records,skipped,error,file")?;
    }
    for seed in &output.seeds {
        let name = format!("{}-seed{}.json", output.config_hash, seed.seed);
        std::fs::write(records_dir.join(&name), serde_json::to_string_pretty(seed)?)?;
        let failed = seed.error.is_some() || seed.records.iter().any(|r| r.error.is_some());
        writeln!(
            index,
            "{},{},{},{},{},{},{},{}/{}",
            output.config_hash,
            seed.seed,
            seed.dataset,
            seed.model,
            seed.records.len(),
            seed.skipped.len(),
            failed,
            RECORDS_DIR,
            name
        )?;
    }
    Ok(())
}

/// Loads every per-seed outcome listed in `dir`'s index.
pub fn load_outcomes(dir: &Path) -> Result<Vec<SeedOutcome>> {
    let mut reader = csv::Reader::from_path(dir.join(INDEX_FILE))?;
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for row in reader.records() {
        let row = row?;
        let file = row.get(7).ok_or_else(|| Error::InvalidData("malformed index row".into()))?;
        // Re-running a configuration appends duplicate index rows.
        if seen.insert(file.to_string()) {
            let text = std::fs::read_to_string(dir.join(file))?;
            out.push(serde_json::from_str(&text)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::ToyProcess;
    use crate::harness::config::{ModelConfig, SplitConfig};
    use crate::models::Capabilities;
    use crate::scores::MonteCarloParams;

    fn small(methods: Vec<MethodId>) -> RunConfig {
        RunConfig {
            dataset: DatasetSource::Toy { process: ToyProcess::Unimodal, n: 700 },
            model: ModelConfig { spec: ModelSpec::Oracle, capabilities: None },
            methods,
            monte_carlo: MonteCarloParams::new(30, 30).unwrap(),
            volume_samples: 20,
            seeds: vec![3, 4],
            split: SplitConfig { cal_size: 100, train_frac: 0.5, val_frac: 0.1 },
            wsc: crate::metrics::WscConfig { n_directions: 50, ..Default::default() },
            ..RunConfig::default()
        }
    }

    #[test]
    fn three_methods_two_seeds_give_six_full_records() {
        let out = run_experiment(&small(vec![MethodId::DrCp, MethodId::CHdr, MethodId::LCp])).unwrap();
        let records: Vec<_> = out.records().collect();
        assert_eq!(records.len(), 6);
        for r in records {
            assert!(r.error.is_none(), "{:?}", r.error);
            for v in [r.mc, r.mean_size, r.median_size, r.wsc, r.cec_x, r.cec_v, r.q_hat] {
                assert!(v.is_some_and(f64::is_finite), "{r:?}");
            }
            assert!(r.cal_time_s >= 0.0 && r.test_time_s >= 0.0);
            assert_eq!(r.n_cal, 100);
            assert_eq!(r.n_test, 240);
        }
        assert!(!out.has_errors());
    }

    #[test]
    fn density_only_model_skips_pcp() {
        let mut cfg = small(vec![MethodId::Pcp, MethodId::DrCp]);
        cfg.model.capabilities = Some(Capabilities::density());
        let out = run_experiment(&cfg).unwrap();
        for seed in &out.seeds {
            assert_eq!(seed.skipped, vec![SkippedMethod { method: MethodId::Pcp, reason: "sampler required".into() }]);
            assert_eq!(seed.records.len(), 1);
            // Without a sampler there is no volume estimate or CEC-V.
            assert!(seed.records[0].mean_size.is_none() && seed.records[0].cec_v.is_none());
            assert!(seed.records[0].mc.is_some());
        }
    }

    #[test]
    fn identical_configs_give_identical_records() {
        let mut cfg = small(vec![MethodId::Pcp, MethodId::MCp, MethodId::CopulaCpts]);
        // Hide the closed-form quantiles so M-CP and CopulaCPTS sample them.
        cfg.model.capabilities = Some(Capabilities::density().union(Capabilities::sampler()));
        let strip = |o: RunOutput| o.records().map(RunRecord::without_timings).collect::<Vec<_>>();
        let a = strip(run_experiment(&cfg).unwrap());
        let b = strip(run_experiment(&cfg).unwrap());
        assert_eq!(a, b);
        assert!(a.iter().filter(|r| r.method != MethodId::Pcp).all(|r| r.timing_excludes_sampling));
    }

    #[test]
    fn fit_failure_aborts_the_seed() {
        // 20 features but only 15 training rows: least squares is underdetermined.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wide.csv");
        let x = Array2::from_shape_fn((60, 20), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let y = Array2::from_shape_fn((60, 2), |(i, j)| ((i * 5 + j) % 13) as f64);
        Dataset::new(x, y).unwrap().write_csv(&path).unwrap();
        let mut cfg = small(vec![MethodId::DrCp]);
        cfg.dataset = DatasetSource::Csv { path };
        cfg.model.spec = ModelSpec::ConditionalGaussian;
        cfg.split = SplitConfig { cal_size: 10, train_frac: 0.3, val_frac: 0.1 };
        let out = run_experiment(&cfg).unwrap();
        assert!(out.has_errors());
        for seed in &out.seeds {
            assert!(seed.records.is_empty());
            assert!(seed.error.as_deref().unwrap().contains("training rows"), "{:?}", seed.error);
        }
    }

    #[test]
    fn records_persist_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(vec![MethodId::LCp]);
        cfg.output_dir = Some(dir.path().to_path_buf());
        let out = run_experiment(&cfg).unwrap();
        run_experiment(&cfg).unwrap();
        let loaded = load_outcomes(dir.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        for (a, b) in loaded.iter().zip(&out.seeds) {
            assert_eq!(a.records[0].without_timings(), b.records[0].without_timings());
        }
        assert!(dir.path().join(RECORDS_DIR).join(format!("{}-config.json", out.config_hash)).exists());
    }
}
