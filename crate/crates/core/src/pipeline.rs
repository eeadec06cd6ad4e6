//! Declarative align → fit → predict → evaluate runs.
//!
//! The stage functions here are the same ones the command-line tool calls, so
//! a pipeline run writes the same artifacts as the equivalent sequence of
//! commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{validate_point, Coord, DemonstrationSet, DimDomain, TaskPoint, TaskSchema};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_r2, R2Report};
use crate::gp::{fit_mogp, FitControls, FitDiagnostics, GpModel, ModelFile, Policy, TrainingData};
use crate::kernels::{Composition, KernelSpec, RealKernel};
use crate::preprocess::{dtw_align, rescale_set, uniform_grid, AlignmentResult, Reference, DEFAULT_GRID};
use crate::synthetic::integer_levels;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub grid: usize,
    /// Reference demonstration id; the median-length one when absent.
    pub reference: Option<String>,
    /// Rescale the aligned set to this duration.
    pub duration: Option<f64>,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            grid: DEFAULT_GRID,
            reference: None,
            duration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub composition: Composition,
    pub real_kernel: RealKernel,
    pub controls: FitControls,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            composition: Composition::Product,
            real_kernel: RealKernel::Se,
            controls: FitControls::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    /// Grid spec, see [`query_grid`].
    pub grid: String,
    #[serde(default)]
    pub full_cov: bool,
}

/// Paths are relative to the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub align: Option<AlignConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    pub predict: PredictConfig,
    /// Held-out demonstrations for R²; the training samples when absent.
    #[serde(default)]
    pub test: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: PipelineConfig = serde_json::from_str(&s)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.input = base.join(&cfg.input);
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.test = cfg.test.map(|t| base.join(t));
        Ok(cfg)
    }
}

/// Alignment followed by the optional duration rescaling.
pub fn align_stage(set: &DemonstrationSet, cfg: &AlignConfig) -> Result<(DemonstrationSet, AlignmentResult)> {
    let reference = cfg.reference.clone().map_or(Reference::Auto, Reference::Id);
    let result = dtw_align(set, &reference, cfg.grid)?;
    let aligned = match cfg.duration {
        Some(d) => rescale_set(&result.aligned, d)?,
        None => result.aligned.clone(),
    };
    Ok((aligned, result))
}

pub fn fit_stage(set: &DemonstrationSet, cfg: &FitConfig) -> Result<Policy> {
    let (points, outputs) = set.samples();
    let data = TrainingData::from_samples(&points, &outputs)?;
    let kernel = KernelSpec::default_for(&set.schema, cfg.composition, cfg.real_kernel);
    fit_mogp(&set.schema, &data, &kernel, &cfg.controls)
}

/// Parses a query grid such as `t=0:1:100,s=3,u=lin`.
///
/// Each dim takes a single value, a `|`-separated list, `lo:hi:count`
/// (evenly spaced; integers are rounded) or `*` (every integer or label).
/// The time dim defaults to 100 points over its domain. Points are ordered
/// with the first dim varying fastest.
pub fn query_grid(schema: &TaskSchema, spec: &str) -> Result<Vec<TaskPoint>> {
    let mut values: Vec<Option<Vec<Coord>>> = vec![None; schema.len()];
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, val) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("grid field `{part}` is not dim=values")))?;
        let i = schema
            .dim_index(key.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dim `{}` in grid", key.trim())))?;
        values[i] = Some(dim_values(schema, i, val.trim())?);
    }
    if values[0].is_none() {
        values[0] = Some(dim_values(schema, 0, "*")?);
    }
    let values: Vec<Vec<Coord>> = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::InvalidArgument(format!("grid is missing dim `{}`", schema.dims[i].name))))
        .collect::<Result<_>>()?;
    let total: usize = values.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    for mut k in 0..total {
        let mut coords = Vec::with_capacity(values.len());
        for v in &values {
            coords.push(v[k % v.len()].clone());
            k /= v.len();
        }
        let p = TaskPoint::new(coords);
        validate_point(schema, &p).map_err(Error::InvalidPoint)?;
        out.push(p);
    }
    Ok(out)
}

fn dim_values(schema: &TaskSchema, i: usize, val: &str) -> Result<Vec<Coord>> {
    let dim = &schema.dims[i];
    let bad = || Error::InvalidArgument(format!("bad grid values `{val}` for dim `{}`", dim.name));
    if val == "*" {
        return Ok(match &dim.domain {
            DimDomain::Real { lo, hi } => uniform_grid(hi - lo, 100).into_iter().map(|t| Coord::Real(lo + t)).collect(),
            DimDomain::Integer { lo, hi } => (*lo..=*hi).map(Coord::Int).collect(),
            DimDomain::Categorical { labels, .. } => labels.iter().cloned().map(Coord::Cat).collect(),
        });
    }
    let parts: Vec<&str> = val.split(':').collect();
    if parts.len() == 3 {
        let count: usize = parts[2].parse().map_err(|_| bad())?;
        if count == 0 {
            return Err(bad());
        }
        return match dim.domain {
            DimDomain::Real { .. } => {
                let lo: f64 = parts[0].parse().map_err(|_| bad())?;
                let hi: f64 = parts[1].parse().map_err(|_| bad())?;
                if count == 1 {
                    return Ok(vec![Coord::Real(lo)]);
                }
                Ok(uniform_grid(hi - lo, count).into_iter().map(|t| Coord::Real(lo + t)).collect())
            }
            DimDomain::Integer { .. } => {
                let lo: i64 = parts[0].parse().map_err(|_| bad())?;
                let hi: i64 = parts[1].parse().map_err(|_| bad())?;
                Ok(integer_levels(lo, hi, count).into_iter().map(Coord::Int).collect())
            }
            DimDomain::Categorical { .. } => Err(bad()),
        };
    }
    val.split('|').map(|v| schema.coord_from_str(i, v.trim())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodTiming {
    pub dense_ms: f64,
    pub compressed_ms: f64,
    pub speedup: f64,
    pub max_abs_diff: f64,
}

/// Median time of one likelihood evaluation at the fitted hyperparameters,
/// through both inference paths.
pub fn likelihood_timing(model: &GpModel, repeats: usize) -> Result<LikelihoodTiming> {
    let mut dense = Vec::with_capacity(repeats);
    let mut comp = Vec::with_capacity(repeats);
    let mut diff: f64 = 0.0;
    let compressed = model.clone();
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let d = model.to_dense()?;
        dense.push(start.elapsed().as_secs_f64() * 1e3);
        let start = Instant::now();
        let c = GpModel::new(
            compressed.schema.clone(),
            compressed.kernel.clone(),
            compressed.noise.clone(),
            compressed.train.clone(),
            None,
            true,
            compressed.jitter,
        )?;
        comp.push(start.elapsed().as_secs_f64() * 1e3);
        diff = diff.max((d.log_marginal_likelihood() - c.log_marginal_likelihood()).abs());
    }
    let (d, c) = (median(&mut dense), median(&mut comp));
    Ok(LikelihoodTiming {
        dense_ms: d,
        compressed_ms: c,
        speedup: d / c,
        max_abs_diff: diff,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub align_ms: Option<f64>,
    pub fit_ms: f64,
    pub predict_ms: f64,
    pub evaluate_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub input: PathBuf,
    pub compressed: bool,
    pub seed: u64,
    pub n_unique: usize,
    pub n_samples: usize,
    pub diagnostics: Vec<FitDiagnostics>,
    pub r2: R2Report,
    pub r2_in_sample: bool,
    pub timings: StageTimes,
    pub likelihood_timing: Vec<LikelihoodTiming>,
    pub artifacts: Vec<PathBuf>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs every stage and writes `aligned.json` (when aligning),
/// `paths.csv`, `model.json`, `predictions.csv` and `report.json` into the
/// output directory. Errors carry the name of the failing stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)
        .map_err(|source| Error::Io {
            path: out.display().to_string(),
            source,
        })
        .map_err(|e| e.in_stage("setup"))?;
    let mut artifacts = Vec::new();

    let set = DemonstrationSet::read(&cfg.input).map_err(|e| e.in_stage("load"))?;

    let (set, align_ms) = match &cfg.align {
        Some(a) => {
            let start = Instant::now();
            let (aligned, result) = align_stage(&set, a).map_err(|e| e.in_stage("align"))?;
            let t = ms(start);
            let p = out.join("aligned.json");
            aligned.write(&p).map_err(|e| e.in_stage("align"))?;
            artifacts.push(p);
            let p = out.join("paths.csv");
            write(&p, &result.paths_csv()).map_err(|e| e.in_stage("align"))?;
            artifacts.push(p);
            (aligned, Some(t))
        }
        None => (set, None),
    };

    let start = Instant::now();
    let fitted = fit_stage(&set, &cfg.fit).map_err(|e| e.in_stage("fit"))?;
    let fit_ms = ms(start);
    let file = ModelFile::from_policy(&fitted);
    let p = out.join("model.json");
    file.write(&p).map_err(|e| e.in_stage("fit"))?;
    artifacts.push(p);

    let start = Instant::now();
    let policy = file.into_policy().map_err(|e| e.in_stage("predict"))?;
    let query = query_grid(&policy.schema, &cfg.predict.grid).map_err(|e| e.in_stage("predict"))?;
    let pred = policy
        .predict(&query, cfg.predict.full_cov)
        .map_err(|e| e.in_stage("predict"))?;
    let p = out.join("predictions.csv");
    write(&p, &pred.to_csv(&policy.schema)).map_err(|e| e.in_stage("predict"))?;
    artifacts.push(p);
    let predict_ms = ms(start);

    let start = Instant::now();
    let (r2, in_sample) = match &cfg.test {
        Some(path) => {
            let test = DemonstrationSet::read(path).map_err(|e| e.in_stage("evaluate"))?;
            let (pts, ys) = test.samples();
            (evaluate_r2(&policy, &pts, &ys), false)
        }
        None => {
            let (pts, ys) = set.samples();
            (evaluate_r2(&policy, &pts, &ys), true)
        }
    };
    let r2 = r2.map_err(|e| e.in_stage("evaluate"))?;
    let evaluate_ms = ms(start);

    let likelihood_timing = fitted
        .models
        .iter()
        .map(|m| likelihood_timing(m, 5))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("evaluate"))?;

    let report = PipelineReport {
        input: cfg.input.clone(),
        compressed: cfg.fit.controls.compressed,
        seed: cfg.fit.controls.opt.seed,
        n_unique: fitted.models[0].train.len(),
        n_samples: fitted.models[0].train.total_count,
        diagnostics: fitted.models.iter().map(|m| m.diagnostics.clone()).collect(),
        r2,
        r2_in_sample: in_sample,
        timings: StageTimes {
            align_ms,
            fit_ms,
            predict_ms,
            evaluate_ms,
        },
        likelihood_timing,
        artifacts: {
            artifacts.push(out.join("report.json"));
            artifacts
        },
    };
    let p = out.join("report.json");
    write(&p, &(serde_json::to_string_pretty(&report)? + "\n")).map_err(|e| e.in_stage("report"))?;
    Ok(report)
}
