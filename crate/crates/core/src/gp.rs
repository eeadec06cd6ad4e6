//! Heteroscedastic Gaussian process regression on compressed data.
//!
//! A [`GpModel`] is a single-output GP with a constant prior mean, a
//! [`KernelSpec`] and a [`NoiseModel`]. Inference always runs through the
//! replication-compressed system unless the model was built in dense mode,
//! which is kept for cross-checking.
//!
//! Input-dependent noise is fitted by a fixed-point loop: a constant-noise GP
//! is fitted first, empirical log-variances are formed at every unique input
//! (replicate variance where there are replicates, squared residuals
//! otherwise), a second GP is fitted to them, and the main GP is refitted with
//! the exponentiated latent predictions as its noise. The loop stops when the
//! log likelihood stops improving.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{CompressedDataset, RawSamples, TaskPoint, TaskSchema};
use crate::error::{Error, Result};
use crate::hyperopt::{optimize, OptControl, StartTrace};
use crate::kernels::{HyperParams, KernelSpec, DEFAULT_JITTER};
use crate::replication::{dense, CompressedPosterior, CompressedSystem, PredCov, PriorCov};

thread_local! {
    static PREDICT_CALLS: Cell<usize> = const { Cell::new(0) };
}

/// Number of [`GpModel::predict`] calls made on this thread.
pub fn predict_calls() -> usize {
    PREDICT_CALLS.with(Cell::get)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitControls {
    pub opt: OptControl,
    /// Noise-model iterations; `0` returns the constant-noise fit.
    pub max_iter: usize,
    /// Stop once an iteration improves log L by less than this.
    pub tol: f64,
    /// Use the replication-compressed likelihood (the dense one otherwise).
    pub compressed: bool,
    pub jitter: f64,
}

impl Default for FitControls {
    fn default() -> Self {
        FitControls {
            opt: OptControl::default(),
            max_iter: 10,
            tol: 1e-4,
            compressed: true,
            jitter: DEFAULT_JITTER,
        }
    }
}

#[derive(Debug, Clone)]
pub enum NoiseModel {
    Constant { lambda: f64 },
    /// GP on `log r(x)`; its predictive mean is exponentiated.
    Latent(Box<GpModel>),
}

impl NoiseModel {
    /// Noise variances at encoded inputs.
    pub fn at(&self, xs: &[Vec<f64>]) -> Result<DVector<f64>> {
        match self {
            NoiseModel::Constant { lambda } => Ok(DVector::from_element(xs.len(), *lambda)),
            NoiseModel::Latent(m) => Ok(m.predict_mean_encoded(xs)?.map(f64::exp)),
        }
    }

    pub fn is_latent(&self) -> bool {
        matches!(self, NoiseModel::Latent(_))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Noise-model iterations that were run.
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log likelihood after the constant fit and after every iteration.
    pub history: Vec<f64>,
    pub evals: usize,
    pub compressed: bool,
    /// Optimizer starts of the constant-noise fit.
    #[serde(default)]
    pub trace: Vec<StartTrace>,
}

#[derive(Debug, Clone)]
enum Posterior {
    Compressed(CompressedPosterior),
    Dense(dense::DensePosterior),
}

/// A fitted single-output GP.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub schema: TaskSchema,
    pub kernel: KernelSpec,
    pub hyper: HyperParams,
    pub noise: NoiseModel,
    /// Single-output training statistics.
    pub train: CompressedDataset,
    pub mean: f64,
    pub jitter: f64,
    pub diagnostics: FitDiagnostics,
    raw: Option<RawSamples>,
    encoded: Vec<Vec<f64>>,
    noise_n: DVector<f64>,
    posterior: Posterior,
    log_likelihood: f64,
}

/// Mean, noise and posterior for fixed kernel and noise.
fn condition(
    kernel: &KernelSpec,
    encoded: &[Vec<f64>],
    train: &CompressedDataset,
    raw: Option<&RawSamples>,
    mean: f64,
    noise_n: &DVector<f64>,
    jitter: f64,
    compressed: bool,
) -> Result<(Posterior, f64)> {
    let k_n = kernel.gram(encoded, jitter);
    if compressed {
        let means: Vec<f64> = train.means.iter().map(|m| m[0]).collect();
        let sq: Vec<f64> = train.sq_dev.iter().map(|s| s[0]).collect();
        let sys = CompressedSystem::assemble(k_n, noise_n.clone(), &train.counts, &means, &sq, mean, kernel.amplitude)?;
        let post = sys.posterior()?;
        let ll = post.loglik(&sys);
        Ok((Posterior::Compressed(post), ll))
    } else {
        let raw = raw.ok_or_else(|| Error::InvalidArgument("dense inference needs the raw samples".into()))?;
        let k_full = dense::expand(&k_n, &raw.membership);
        let noise_full = DVector::from_iterator(raw.membership.len(), raw.membership.iter().map(|&i| noise_n[i]));
        let resid = DVector::from_iterator(raw.outputs.len(), raw.outputs.iter().map(|y| y[0] - mean));
        let post = dense::posterior(&k_full, &noise_full, &resid, kernel.amplitude)?;
        let ll = post.loglik();
        Ok((Posterior::Dense(post), ll))
    }
}

/// Total variance of the N samples, from the sufficient statistics.
fn output_variance(train: &CompressedDataset) -> f64 {
    let m = train.global_mean(0);
    let ss: f64 = train
        .means
        .iter()
        .zip(&train.sq_dev)
        .zip(&train.counts)
        .map(|((mu, s), &a)| s[0] + a as f64 * (mu[0] - m).powi(2))
        .sum();
    ss / train.total_count as f64
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on single-output data.
    pub fn new(
        schema: TaskSchema,
        kernel: KernelSpec,
        noise: NoiseModel,
        train: CompressedDataset,
        raw: Option<RawSamples>,
        compressed: bool,
        jitter: f64,
    ) -> Result<Self> {
        if train.output_dim() != 1 {
            return Err(Error::InvalidArgument(format!(
                "GpModel is single-output, got {} outputs",
                train.output_dim()
            )));
        }
        kernel.validate(&schema)?;
        let encoded = schema.encode_all(&train.unique_points)?;
        let mean = train.global_mean(0);
        let noise_n = noise.at(&encoded)?;
        let (posterior, log_likelihood) =
            condition(&kernel, &encoded, &train, raw.as_ref(), mean, &noise_n, jitter, compressed)?;
        let mut hyper = kernel.hyper(&schema, output_variance(&train));
        if let NoiseModel::Constant { lambda } = noise {
            let var = output_variance(&train).max(f64::MIN_POSITIVE);
            hyper.push("log_noise", lambda.ln(), ((1e-8 * var).ln(), var.ln()));
        }
        Ok(GpModel {
            schema,
            kernel,
            hyper,
            noise,
            train,
            mean,
            jitter,
            diagnostics: FitDiagnostics {
                log_likelihood,
                compressed,
                ..FitDiagnostics::default()
            },
            raw,
            encoded,
            noise_n,
            posterior,
            log_likelihood,
        })
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn is_compressed(&self) -> bool {
        matches!(self.posterior, Posterior::Compressed(_))
    }

    /// Noise variances at the unique training inputs.
    pub fn training_noise(&self) -> &DVector<f64> {
        &self.noise_n
    }

    pub fn noise_at(&self, query: &[TaskPoint]) -> Result<DVector<f64>> {
        self.noise.at(&self.schema.encode_all(query)?)
    }

    fn cross(&self, qs: &[Vec<f64>]) -> DMatrix<f64> {
        let ks = self.kernel.cross(&self.encoded, qs);
        match (&self.posterior, &self.raw) {
            (Posterior::Dense(_), Some(raw)) => dense::expand_rows(&ks, &raw.membership),
            _ => ks,
        }
    }

    fn posterior_predict(&self, ks: &DMatrix<f64>, kss: PriorCov<'_>, r: &DVector<f64>) -> (DVector<f64>, PredCov) {
        match &self.posterior {
            Posterior::Compressed(p) => p.predict(ks, kss, r, self.mean),
            Posterior::Dense(p) => p.predict(ks, kss, r, self.mean),
        }
    }

    pub(crate) fn predict_mean_encoded(&self, qs: &[Vec<f64>]) -> Result<DVector<f64>> {
        let ks = self.cross(qs);
        let alpha = match &self.posterior {
            Posterior::Compressed(p) => &p.alpha,
            Posterior::Dense(p) => &p.alpha,
        };
        Ok(ks.tr_mul(alpha).add_scalar(self.mean))
    }

    /// Predictive mean and covariance (noise included) at encoded inputs.
    pub fn predict_encoded(&self, qs: &[Vec<f64>], full_cov: bool) -> Result<(DVector<f64>, PredCov)> {
        let ks = self.cross(qs);
        let r = self.noise.at(qs)?;
        Ok(if full_cov {
            let kss = self.kernel.gram(qs, 0.0);
            self.posterior_predict(&ks, PriorCov::Full(&kss), &r)
        } else {
            let kss = self.kernel.prior_diag(qs);
            self.posterior_predict(&ks, PriorCov::Diag(&kss), &r)
        })
    }

    pub fn predict(&self, query: &[TaskPoint], full_cov: bool) -> Result<PredictiveDistribution> {
        PREDICT_CALLS.with(|c| c.set(c.get() + 1));
        let qs = self.schema.encode_all(query)?;
        let (mean, cov) = self.predict_encoded(&qs, full_cov)?;
        Ok(PredictiveDistribution {
            query: query.to_vec(),
            mean: vec![mean],
            cov: vec![cov],
        })
    }

    /// The same model re-conditioned through the dense `N × N` path.
    pub fn to_dense(&self) -> Result<GpModel> {
        let mut m = self.clone();
        let (p, ll) = condition(&m.kernel, &m.encoded, &m.train, m.raw.as_ref(), m.mean, &m.noise_n, m.jitter, false)?;
        m.posterior = p;
        m.log_likelihood = ll;
        Ok(m)
    }
}

/// Single-output training data: compressed statistics plus, optionally, the
/// raw samples for the dense path.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub compressed: CompressedDataset,
    pub raw: Option<RawSamples>,
}

impl TrainingData {
    pub fn from_samples(points: &[TaskPoint], outputs: &[Vec<f64>]) -> Result<Self> {
        let (compressed, raw) = crate::domain::build_compressed_indexed(points, outputs)?;
        Ok(TrainingData {
            compressed,
            raw: Some(raw),
        })
    }

    pub fn column(&self, o: usize) -> TrainingData {
        TrainingData {
            compressed: self.compressed.column(o),
            raw: self.raw.as_ref().map(|r| RawSamples {
                membership: r.membership.clone(),
                outputs: r.outputs.iter().map(|y| vec![y[o]]).collect(),
            }),
        }
    }
}

fn check_not_degenerate(train: &CompressedDataset) -> Result<f64> {
    let var = output_variance(train);
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::DegenerateData("outputs have zero variance".into()));
    }
    Ok(var)
}

/// Maximum-likelihood fit with a constant noise variance.
pub fn fit_constant(
    schema: &TaskSchema,
    data: &TrainingData,
    kernel_init: &KernelSpec,
    controls: &FitControls,
) -> Result<GpModel> {
    let train = &data.compressed;
    let var = check_not_degenerate(train)?;
    kernel_init.validate(schema)?;
    let encoded = schema.encode_all(&train.unique_points)?;
    let mean = train.global_mean(0);
    let mut hyper = kernel_init.hyper(schema, var);
    hyper.push("log_noise", (0.1 * var).ln(), ((1e-8 * var).ln(), var.ln()));
    let nk = kernel_init.n_params();

    let objective = |theta: &[f64]| -> f64 {
        let kernel = kernel_init.with_params(&theta[..nk]);
        let noise = DVector::from_element(encoded.len(), theta[nk].exp());
        condition(&kernel, &encoded, train, data.raw.as_ref(), mean, &noise, controls.jitter, controls.compressed)
            .map_or(f64::NEG_INFINITY, |(_, ll)| ll)
    };
    let res = optimize(objective, &hyper.bounds, Some(&hyper.values), &controls.opt)?;

    let kernel = kernel_init.with_params(&res.theta[..nk]);
    let lambda = res.theta[nk].exp();
    let mut model = GpModel::new(
        schema.clone(),
        kernel,
        NoiseModel::Constant { lambda },
        train.clone(),
        data.raw.clone(),
        controls.compressed,
        controls.jitter,
    )
    .map_err(|e| e.with_theta(&res.theta))?;
    model.hyper.values = res.theta.clone();
    model.hyper.bounds = hyper.bounds;
    model.diagnostics.evals = res.trace.iter().map(|t| t.evals).sum();
    model.diagnostics.history = vec![model.log_likelihood];
    model.diagnostics.trace = res.trace;
    Ok(model)
}

/// Maximum-likelihood fit of the kernel only, with the noise model held fixed.
pub fn fit_fixed_noise(
    schema: &TaskSchema,
    data: &TrainingData,
    kernel_init: &KernelSpec,
    noise: NoiseModel,
    controls: &FitControls,
) -> Result<GpModel> {
    let train = &data.compressed;
    let var = check_not_degenerate(train)?;
    let encoded = schema.encode_all(&train.unique_points)?;
    let mean = train.global_mean(0);
    let noise_n = noise.at(&encoded)?;
    let hyper = kernel_init.hyper(schema, var);
    let objective = |theta: &[f64]| -> f64 {
        let kernel = kernel_init.with_params(theta);
        condition(&kernel, &encoded, train, data.raw.as_ref(), mean, &noise_n, controls.jitter, controls.compressed)
            .map_or(f64::NEG_INFINITY, |(_, ll)| ll)
    };
    let res = optimize(objective, &hyper.bounds, Some(&hyper.values), &controls.opt)?;
    let kernel = kernel_init.with_params(&res.theta);
    let mut model = GpModel::new(
        schema.clone(),
        kernel,
        noise,
        train.clone(),
        data.raw.clone(),
        controls.compressed,
        controls.jitter,
    )
    .map_err(|e| e.with_theta(&res.theta))?;
    model.diagnostics.evals = res.trace.iter().map(|t| t.evals).sum();
    Ok(model)
}

/// Empirical log-variance targets at the unique inputs of `model`.
fn log_variance_targets(model: &GpModel, floor: f64) -> Result<Vec<f64>> {
    let fitted = model.predict_mean_encoded(&model.encoded)?;
    Ok(model
        .train
        .counts
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let v = if a >= 2 {
                model.train.sq_dev[i][0] / (a - 1) as f64
            } else {
                (model.train.means[i][0] - fitted[i]).powi(2)
            };
            v.max(floor).ln()
        })
        .collect())
}

fn fit_latent(
    schema: &TaskSchema,
    train: &CompressedDataset,
    targets: &[f64],
    kernel_init: &KernelSpec,
    controls: &FitControls,
) -> Result<NoiseModel> {
    let data = TrainingData {
        compressed: CompressedDataset {
            unique_points: train.unique_points.clone(),
            counts: vec![1; targets.len()],
            means: targets.iter().map(|z| vec![*z]).collect(),
            sq_dev: vec![vec![0.0]; targets.len()],
            total_count: targets.len(),
        },
        raw: None,
    };
    let latent_controls = FitControls {
        compressed: true,
        max_iter: 0,
        ..controls.clone()
    };
    match fit_constant(schema, &data, kernel_init, &latent_controls) {
        Ok(m) => Ok(NoiseModel::Latent(Box::new(m))),
        // every target equal: the noise is constant
        Err(Error::DegenerateData(_)) => Ok(NoiseModel::Constant {
            lambda: targets[0].exp(),
        }),
        Err(e) => Err(e),
    }
}

/// Constant-noise fit followed by up to `max_iter` noise-model iterations.
/// Returns the iterate with the highest log likelihood.
pub fn fit_heteroscedastic(
    schema: &TaskSchema,
    data: &TrainingData,
    kernel_init: &KernelSpec,
    controls: &FitControls,
) -> Result<GpModel> {
    let base = fit_constant(schema, data, kernel_init, controls)?;
    if controls.max_iter == 0 {
        return Ok(base);
    }
    let train = &data.compressed;
    let lo = train.means.iter().map(|m| m[0]).fold(f64::INFINITY, f64::min);
    let hi = train.means.iter().map(|m| m[0]).fold(f64::NEG_INFINITY, f64::max);
    let spread = match &data.raw {
        Some(raw) => {
            let lo = raw.outputs.iter().map(|y| y[0]).fold(f64::INFINITY, f64::min);
            let hi = raw.outputs.iter().map(|y| y[0]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        }
        None => (hi - lo).max(output_variance(train).sqrt()),
    };
    let floor = 1e-10 * spread * spread;

    let trace = base.diagnostics.trace.clone();
    let mut history = vec![base.log_likelihood];
    let mut evals = base.diagnostics.evals;
    let mut best = base.clone();
    let mut current = base;
    let mut prev = current.log_likelihood;
    let mut iterations = 0;
    for it in 1..=controls.max_iter {
        iterations = it;
        let targets = log_variance_targets(&current, floor)?;
        let noise = fit_latent(schema, train, &targets, kernel_init, controls)?;
        let model = fit_fixed_noise(schema, data, &current.kernel, noise, controls)?;
        evals += model.diagnostics.evals;
        history.push(model.log_likelihood);
        let improvement = model.log_likelihood - prev;
        if model.log_likelihood > best.log_likelihood {
            best = model.clone();
        }
        if improvement < controls.tol {
            break;
        }
        prev = model.log_likelihood;
        current = model;
    }
    best.diagnostics = FitDiagnostics {
        iterations,
        log_likelihood: best.log_likelihood,
        history,
        evals,
        compressed: controls.compressed,
        trace,
    };
    Ok(best)
}

/// Gaussian predictions at a list of query points, one entry per output.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub query: Vec<TaskPoint>,
    pub mean: Vec<DVector<f64>>,
    pub cov: Vec<PredCov>,
}

impl PredCov {
    pub fn diag(&self) -> DVector<f64> {
        match self {
            PredCov::Full(m) => m.diagonal(),
            PredCov::Diag(d) => d.clone(),
        }
    }

    pub fn to_full(&self) -> DMatrix<f64> {
        match self {
            PredCov::Full(m) => m.clone(),
            PredCov::Diag(d) => DMatrix::from_diagonal(d),
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, PredCov::Full(_))
    }
}

impl PredictiveDistribution {
    pub fn outputs(&self) -> usize {
        self.mean.len()
    }

    /// Reported variances of output `o`; round-off negatives clamp to zero.
    pub fn variance(&self, o: usize) -> DVector<f64> {
        self.cov[o].diag().map(|v| v.max(0.0))
    }

    /// One row per query: the coordinates, then `y{o}_mean,y{o}_var` for each
    /// output.
    pub fn to_csv(&self, schema: &TaskSchema) -> String {
        let mut s: String = schema.dims.iter().map(|d| d.name.clone()).collect::<Vec<_>>().join(",");
        for o in 0..self.outputs() {
            s.push_str(&format!(",y{o}_mean,y{o}_var"));
        }
        s.push('\n');
        let vars: Vec<DVector<f64>> = (0..self.outputs()).map(|o| self.variance(o)).collect();
        for (k, p) in self.query.iter().enumerate() {
            let coords: Vec<String> = p.coords.iter().map(|c| c.to_string()).collect();
            s.push_str(&coords.join(","));
            for o in 0..self.outputs() {
                s.push_str(&format!(",{},{}", self.mean[o][k], vars[o][k]));
            }
            s.push('\n');
        }
        s
    }
}

/// Independent per-output GPs (diagonal coregionalization).
#[derive(Debug, Clone)]
pub struct Policy {
    pub schema: TaskSchema,
    pub models: Vec<GpModel>,
}

impl Policy {
    pub fn predict(&self, query: &[TaskPoint], full_cov: bool) -> Result<PredictiveDistribution> {
        let parts: Vec<PredictiveDistribution> = self
            .models
            .iter()
            .map(|m| m.predict(query, full_cov))
            .collect::<Result<_>>()?;
        let mut mean = Vec::with_capacity(parts.len());
        let mut cov = Vec::with_capacity(parts.len());
        for p in parts {
            mean.extend(p.mean);
            cov.extend(p.cov);
        }
        Ok(PredictiveDistribution {
            query: query.to_vec(),
            mean,
            cov,
        })
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.models.iter().map(|m| m.log_likelihood).sum()
    }

    pub fn to_dense(&self) -> Result<Policy> {
        Ok(Policy {
            schema: self.schema.clone(),
            models: self.models.iter().map(GpModel::to_dense).collect::<Result<_>>()?,
        })
    }
}

/// Fits every output column independently with the same controls and seed.
pub fn fit_mogp(
    schema: &TaskSchema,
    data: &TrainingData,
    kernel_init: &KernelSpec,
    controls: &FitControls,
) -> Result<Policy> {
    let outputs = data.compressed.output_dim();
    let models = (0..outputs)
        .into_par_iter()
        .map(|o| fit_heteroscedastic(schema, &data.column(o), kernel_init, controls))
        .collect::<Result<Vec<_>>>()?;
    Ok(Policy {
        schema: schema.clone(),
        models,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum NoiseRecord {
    Constant { lambda: f64 },
    Latent { model: Box<ModelRecord> },
}

/// Serialized form of a [`GpModel`]; the posterior is recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub kernel: KernelSpec,
    pub theta: HyperParams,
    pub noise: NoiseRecord,
    pub mean: f64,
    pub jitter: f64,
    pub train: CompressedDataset,
    pub diagnostics: FitDiagnostics,
}

impl From<&GpModel> for ModelRecord {
    fn from(m: &GpModel) -> Self {
        ModelRecord {
            kernel: m.kernel.clone(),
            theta: m.hyper.clone(),
            noise: match &m.noise {
                NoiseModel::Constant { lambda } => NoiseRecord::Constant { lambda: *lambda },
                NoiseModel::Latent(l) => NoiseRecord::Latent {
                    model: Box::new(ModelRecord::from(l.as_ref())),
                },
            },
            mean: m.mean,
            jitter: m.jitter,
            train: m.train.clone(),
            diagnostics: m.diagnostics.clone(),
        }
    }
}

impl ModelRecord {
    pub fn into_model(self, schema: &TaskSchema) -> Result<GpModel> {
        let noise = match self.noise {
            NoiseRecord::Constant { lambda } => NoiseModel::Constant { lambda },
            NoiseRecord::Latent { model } => NoiseModel::Latent(Box::new(model.into_model(schema)?)),
        };
        let mut m = GpModel::new(schema.clone(), self.kernel, noise, self.train, None, true, self.jitter)?;
        m.hyper = self.theta;
        m.diagnostics = self.diagnostics;
        Ok(m)
    }
}

/// Model file: the schema plus one record per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: TaskSchema,
    pub outputs: Vec<ModelRecord>,
}

impl ModelFile {
    pub fn from_policy(p: &Policy) -> Self {
        ModelFile {
            schema: p.schema.clone(),
            outputs: p.models.iter().map(ModelRecord::from).collect(),
        }
    }

    pub fn into_policy(self) -> Result<Policy> {
        let schema = self.schema;
        let models = self
            .outputs
            .into_iter()
            .map(|r| r.into_model(&schema))
            .collect::<Result<_>>()?;
        Ok(Policy { schema, models })
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&s)?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, s).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
