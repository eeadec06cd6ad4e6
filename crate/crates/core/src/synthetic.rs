//! Synthetic demonstration generators.
//!
//! `mixed3` is a deterministic task over `(t, s, u)` with `t ∈ [0, 1]`,
//! `s ∈ {1..5}` and `u ∈ {lin, sin, dsin}`. `damped` is a one-dimensional
//! damped oscillation observed with Gaussian noise of variance `λ`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{validate_point, Coord, Demonstration, DemonstrationSet, DimSpec, TaskPoint, TaskSchema};
use crate::error::{Error, Result};
use crate::preprocess::uniform_grid;

pub const MIXED3_LABELS: [&str; 3] = ["lin", "sin", "dsin"];

/// The `mixed3` task function.
pub fn mixed3(t: f64, s: i64, u: &str) -> f64 {
    let s = s as f64;
    match u {
        "lin" => -t * s / 20.0,
        "sin" => 0.3 * (PI * (5.0 * t - 0.25) - s / 5.0).sin(),
        "dsin" => 0.25 * (PI * (3.0 * t - 0.5)).sin() * (-0.8 * t * s).exp() + 0.1,
        _ => f64::NAN,
    }
}

/// Noise-free mean of the damped-oscillation model.
pub fn damped(t: f64) -> f64 {
    (PI * (4.0 * t - 0.25)).sin() * (-3.0 * t).exp() / (1.0 + (-5.0 * t).exp())
}

pub fn mixed3_schema() -> TaskSchema {
    TaskSchema::new(vec![
        DimSpec::real("t", 0.0, 1.0),
        DimSpec::integer("s", 1, 5),
        DimSpec::categorical("u", &MIXED3_LABELS),
    ])
    .expect("static schema is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Mixed3,
    Damped,
}

impl std::str::FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed3" => Ok(Generator::Mixed3),
            "damped" => Ok(Generator::Damped),
            _ => Err(Error::InvalidArgument(format!("unknown generator `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub generator: Generator,
    /// Samples per dim: `[t, s, u]` for mixed3, `[t]` for damped.
    pub grid: Vec<usize>,
    pub replicates: usize,
    /// Noise variance.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn mixed3(t: usize, s: usize, u: usize) -> Self {
        SyntheticSpec {
            generator: Generator::Mixed3,
            grid: vec![t, s, u],
            replicates: 1,
            noise: 0.0,
            seed: 0,
        }
    }

    pub fn damped(n: usize, replicates: usize, noise: f64, seed: u64) -> Self {
        SyntheticSpec {
            generator: Generator::Damped,
            grid: vec![n],
            replicates,
            noise,
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        let want = match self.generator {
            Generator::Mixed3 => 3,
            Generator::Damped => 1,
        };
        if self.grid.len() != want {
            return Err(Error::InvalidArgument(format!(
                "{:?} needs {want} grid counts, got {}",
                self.generator,
                self.grid.len()
            )));
        }
        if self.grid[0] < 2 {
            return Err(Error::InvalidArgument("time grid needs at least two points".into()));
        }
        if self.generator == Generator::Mixed3
            && (self.grid[1] == 0 || self.grid[1] > 5 || self.grid[2] == 0 || self.grid[2] > 3)
        {
            return Err(Error::InvalidArgument(
                "mixed3 grid must have 1..=5 sizes and 1..=3 labels".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::InvalidArgument("noise variance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `count` evenly spread levels of `lo..=hi`, endpoints included.
pub fn integer_levels(lo: i64, hi: i64, count: usize) -> Vec<i64> {
    if count == 1 {
        return vec![(lo + hi) / 2];
    }
    let span = (hi - lo) as f64;
    let mut v: Vec<i64> = (0..count)
        .map(|k| lo + (span * k as f64 / (count - 1) as f64).round() as i64)
        .collect();
    v.dedup();
    v
}

/// One demonstration per context and replicate, sampled on a uniform time
/// grid over `[0, 1]`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<DemonstrationSet> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.noise.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let times = uniform_grid(1.0, spec.grid[0]);
    let mut demos = Vec::new();
    let schema;
    match spec.generator {
        Generator::Mixed3 => {
            schema = mixed3_schema();
            let sizes = integer_levels(1, 5, spec.grid[1]);
            for u in &MIXED3_LABELS[..spec.grid[2]] {
                for &s in &sizes {
                    for r in 0..spec.replicates {
                        let mut context = BTreeMap::new();
                        context.insert("s".to_string(), Coord::Int(s));
                        context.insert("u".to_string(), Coord::Cat(u.to_string()));
                        let outputs = times
                            .iter()
                            .map(|&t| {
                                let eps = if spec.noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                                vec![mixed3(t, s, u) + eps]
                            })
                            .collect();
                        demos.push(Demonstration::new(format!("{u}-s{s}-r{r}"), context, times.clone(), outputs)?);
                    }
                }
            }
        }
        Generator::Damped => {
            schema = TaskSchema::time_only(0.0, 1.0);
            for r in 0..spec.replicates {
                let outputs = times
                    .iter()
                    .map(|&t| {
                        let eps = if spec.noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                        vec![damped(t) + eps]
                    })
                    .collect();
                demos.push(Demonstration::new(format!("r{r}"), BTreeMap::new(), times.clone(), outputs)?);
            }
        }
    }
    let set = DemonstrationSet::new(schema, demos)?;
    let (points, _) = set.samples();
    for p in &points {
        validate_point(&set.schema, p).map_err(Error::InvalidPoint)?;
    }
    Ok(set)
}

/// Dense `t × s × u` evaluation grid for mixed3 with the true outputs.
pub fn mixed3_grid(t: usize, s: usize, u: usize) -> (Vec<TaskPoint>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut ys = Vec::new();
    for label in &MIXED3_LABELS[..u] {
        for size in integer_levels(1, 5, s) {
            for time in uniform_grid(1.0, t) {
                pts.push(TaskPoint::new(vec![
                    Coord::Real(time),
                    Coord::Int(size),
                    Coord::Cat(label.to_string()),
                ]));
                ys.push(mixed3(time, size, label));
            }
        }
    }
    (pts, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed3_branches() {
        for s in 1..=5 {
            assert_eq!(mixed3(0.0, s, "lin"), 0.0);
        }
        assert!((mixed3(1.0, 2, "lin") + 0.1).abs() < 1e-15);
        assert!((mixed3(0.0, 0, "dsin") - (0.25 * (-PI / 2.0).sin() + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn damped_is_deterministic() {
        let a = gen_synthetic(&SyntheticSpec::damped(20, 3, 0.0, 5)).unwrap();
        let b = gen_synthetic(&SyntheticSpec::damped(20, 3, 0.0, 5)).unwrap();
        assert_eq!(a.to_json_string().unwrap(), b.to_json_string().unwrap());
        let noisy1 = gen_synthetic(&SyntheticSpec::damped(20, 3, 0.05, 5)).unwrap();
        let noisy2 = gen_synthetic(&SyntheticSpec::damped(20, 3, 0.05, 5)).unwrap();
        assert_eq!(noisy1, noisy2);
        assert_ne!(noisy1, a);
    }

    #[test]
    fn train_grid_shape() {
        let set = gen_synthetic(&SyntheticSpec::mixed3(8, 3, 3)).unwrap();
        assert_eq!(set.demos.len(), 9);
        assert_eq!(set.total_samples(), 72);
        assert_eq!(integer_levels(1, 5, 3), vec![1, 3, 5]);
        assert_eq!(integer_levels(1, 5, 5), vec![1, 2, 3, 4, 5]);
        let (pts, ys) = mixed3_grid(100, 5, 3);
        assert_eq!(pts.len(), 1500);
        assert_eq!(ys.len(), 1500);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = SyntheticSpec::mixed3(8, 3, 3);
        s.grid = vec![8, 3];
        assert!(gen_synthetic(&s).is_err());
        assert!(gen_synthetic(&SyntheticSpec::mixed3(8, 6, 3)).is_err());
        assert!(gen_synthetic(&SyntheticSpec::damped(1, 3, 0.0, 0)).is_err());
        assert!(gen_synthetic(&SyntheticSpec::damped(10, 0, 0.0, 0)).is_err());
        assert!(gen_synthetic(&SyntheticSpec::damped(10, 1, -1.0, 0)).is_err());
    }
}
