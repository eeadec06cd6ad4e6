//! Via-point modulation of a learned policy.
//!
//! Via-points are turned into their own Gaussian process posterior over the
//! query grid, using the policy's kernels with frozen hyperparameters, and the
//! result is fused with the policy prediction as a product of Gaussians.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{validate_point, TaskPoint, TaskSchema};
use crate::error::{Error, Result};
use crate::gp::{GpModel, Policy, PredictiveDistribution};
use crate::replication::{symmetrize, CompressedSystem, PredCov, PriorCov};

/// Ridge added to `Σ^d + Σ^v` when it does not factorize, relative to its
/// mean diagonal.
const FUSION_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViaPoint {
    pub x: TaskPoint,
    pub y: Vec<f64>,
    /// Noise variance `r_v` for each output.
    pub strength: Vec<f64>,
}

impl ViaPoint {
    /// Parses `"t=0.5,s=3,x=0.1,y=-0.2,strength=1e-6"`. Keys naming a schema
    /// dim are coordinates; `strength` applies to every output; every other
    /// key is an output value, taken in the order given.
    pub fn parse(schema: &TaskSchema, s: &str) -> Result<Self> {
        let mut coords = BTreeMap::new();
        let mut y = Vec::new();
        let mut strength = None;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, val) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("via-point field `{part}` is not key=value")))?;
            let (key, val) = (key.trim(), val.trim());
            if let Some(i) = schema.dim_index(key) {
                coords.insert(i, schema.coord_from_str(i, val)?);
            } else {
                let v: f64 = val
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("via-point value `{part}` is not a number")))?;
                if key == "strength" {
                    strength = Some(v);
                } else {
                    y.push(v);
                }
            }
        }
        if coords.len() != schema.len() {
            let missing: Vec<&str> = schema
                .dims
                .iter()
                .enumerate()
                .filter(|(i, _)| !coords.contains_key(i))
                .map(|(_, d)| d.name.as_str())
                .collect();
            return Err(Error::InvalidArgument(format!("via-point is missing {}", missing.join(", "))));
        }
        let strength = strength.ok_or_else(|| Error::InvalidArgument("via-point needs strength=".into()))?;
        Ok(ViaPoint {
            x: TaskPoint::new(coords.into_values().collect()),
            strength: vec![strength; y.len()],
            y,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViaPointSet {
    pub points: Vec<ViaPoint>,
}

impl ViaPointSet {
    pub fn new(schema: &TaskSchema, outputs: usize, points: Vec<ViaPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("via-point set is empty".into()));
        }
        for (k, p) in points.iter().enumerate() {
            validate_point(schema, &p.x).map_err(Error::InvalidPoint)?;
            if p.y.len() != outputs || p.strength.len() != outputs {
                return Err(Error::InvalidArgument(format!(
                    "via-point {k} has {} outputs and {} strengths, policy has {outputs} outputs",
                    p.y.len(),
                    p.strength.len()
                )));
            }
            if let Some(r) = p.strength.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
                return Err(Error::InvalidArgument(format!("via-point {k} strength {r} is not positive")));
            }
        }
        Ok(ViaPointSet { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Posterior of one output given only the via-points, with the kernel and
/// prior mean of `model` and no noise at the queries.
fn via_output(model: &GpModel, vp: &ViaPointSet, o: usize, qs: &[Vec<f64>], full_cov: bool) -> Result<(DVector<f64>, PredCov)> {
    let xs: Vec<TaskPoint> = vp.points.iter().map(|p| p.x.clone()).collect();
    let xs = model.schema.encode_all(&xs)?;
    let ys: Vec<f64> = vp.points.iter().map(|p| p.y[o]).collect();
    let noise = DVector::from_iterator(vp.len(), vp.points.iter().map(|p| p.strength[o]));
    let kernel = &model.kernel;
    let sys = CompressedSystem::assemble(
        kernel.gram(&xs, 0.0),
        noise,
        &vec![1; vp.len()],
        &ys,
        &vec![0.0; vp.len()],
        model.mean,
        kernel.amplitude,
    )?;
    let post = sys.posterior()?;
    let ks = kernel.cross(&xs, qs);
    let r_star = DVector::zeros(qs.len());
    Ok(if full_cov {
        let kss = kernel.gram(qs, 0.0);
        post.predict(&ks, PriorCov::Full(&kss), &r_star, model.mean)
    } else {
        let kss = kernel.prior_diag(qs);
        post.predict(&ks, PriorCov::Diag(&kss), &r_star, model.mean)
    })
}

/// Distribution over the query grid implied by the via-points alone.
pub fn viapoint_distribution(
    vp: &ViaPointSet,
    policy: &Policy,
    query: &[TaskPoint],
    full_cov: bool,
) -> Result<PredictiveDistribution> {
    if vp.is_empty() {
        return Err(Error::InvalidArgument("via-point set is empty".into()));
    }
    let qs = policy.schema.encode_all(query)?;
    let mut mean = Vec::with_capacity(policy.models.len());
    let mut cov = Vec::with_capacity(policy.models.len());
    for (o, model) in policy.models.iter().enumerate() {
        let (m, c) = via_output(model, vp, o, &qs, full_cov)?;
        mean.push(m);
        cov.push(c);
    }
    Ok(PredictiveDistribution {
        query: query.to_vec(),
        mean,
        cov,
    })
}

fn fuse_full(mu_d: &DVector<f64>, s_d: &DMatrix<f64>, mu_v: &DVector<f64>, s_v: &DMatrix<f64>) -> Result<(DVector<f64>, PredCov)> {
    let q = mu_d.len();
    let sum = s_d + s_v;
    let chol = match sum.clone().cholesky() {
        Some(c) => c,
        None => {
            let ridge = FUSION_RIDGE * (sum.trace() / q.max(1) as f64).max(f64::MIN_POSITIVE);
            let mut sum = sum;
            for i in 0..q {
                sum[(i, i)] += ridge;
            }
            sum.cholesky()
                .ok_or_else(|| Error::numerical("Σ^d + Σ^v is not positive definite"))?
        }
    };
    let mean = s_v * chol.solve(mu_d) + s_d * chol.solve(mu_v);
    let cov = symmetrize(s_d * chol.solve(s_v));
    Ok((mean, PredCov::Full(cov)))
}

fn fuse_diag(mu_d: &DVector<f64>, s_d: &DVector<f64>, mu_v: &DVector<f64>, s_v: &DVector<f64>) -> (DVector<f64>, PredCov) {
    let q = mu_d.len();
    let ridge = FUSION_RIDGE * ((s_d.sum() + s_v.sum()) / q.max(1) as f64).max(f64::MIN_POSITIVE);
    let mut mean = DVector::zeros(q);
    let mut var = DVector::zeros(q);
    for i in 0..q {
        let s = match s_d[i] + s_v[i] {
            s if s > 0.0 => s,
            s => s + ridge,
        };
        mean[i] = (s_v[i] * mu_d[i] + s_d[i] * mu_v[i]) / s;
        var[i] = s_d[i] * s_v[i] / s;
    }
    (mean, PredCov::Diag(var))
}

/// Product of the two Gaussians on a shared query grid. Full covariances are
/// fused as matrices; if either side is diagonal, both are treated as
/// diagonal.
pub fn condition(policy: &PredictiveDistribution, via: &PredictiveDistribution) -> Result<PredictiveDistribution> {
    if policy.query != via.query {
        return Err(Error::GridMismatch(format!(
            "policy grid has {} points, via-point grid has {} (or they differ)",
            policy.query.len(),
            via.query.len()
        )));
    }
    if policy.outputs() != via.outputs() {
        return Err(Error::GridMismatch(format!(
            "policy has {} outputs, via-point distribution has {}",
            policy.outputs(),
            via.outputs()
        )));
    }
    let mut mean = Vec::with_capacity(policy.outputs());
    let mut cov = Vec::with_capacity(policy.outputs());
    for o in 0..policy.outputs() {
        let (m, c) = match (&policy.cov[o], &via.cov[o]) {
            (PredCov::Full(a), PredCov::Full(b)) => fuse_full(&policy.mean[o], a, &via.mean[o], b)?,
            (a, b) => fuse_diag(&policy.mean[o], &a.diag(), &via.mean[o], &b.diag()),
        };
        mean.push(m);
        cov.push(c);
    }
    Ok(PredictiveDistribution {
        query: policy.query.clone(),
        mean,
        cov,
    })
}

/// A policy prediction computed once on a fixed grid, reused for every
/// via-point set.
#[derive(Debug, Clone)]
pub struct Modulator<'a> {
    policy: &'a Policy,
    demo: PredictiveDistribution,
    qs: Vec<Vec<f64>>,
    full_cov: bool,
}

impl<'a> Modulator<'a> {
    pub fn new(policy: &'a Policy, query: &[TaskPoint], full_cov: bool) -> Result<Self> {
        let demo = policy.predict(query, full_cov)?;
        let qs = policy.schema.encode_all(query)?;
        Ok(Modulator {
            policy,
            demo,
            qs,
            full_cov,
        })
    }

    pub fn policy_distribution(&self) -> &PredictiveDistribution {
        &self.demo
    }

    pub fn modulate(&self, vp: &ViaPointSet) -> Result<PredictiveDistribution> {
        let mut mean = Vec::with_capacity(self.policy.models.len());
        let mut cov = Vec::with_capacity(self.policy.models.len());
        for (o, model) in self.policy.models.iter().enumerate() {
            let (m, c) = via_output(model, vp, o, &self.qs, self.full_cov)?;
            mean.push(m);
            cov.push(c);
        }
        let via = PredictiveDistribution {
            query: self.demo.query.clone(),
            mean,
            cov,
        };
        condition(&self.demo, &via)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Coord;
    use crate::gp::{NoiseModel, TrainingData};
    use crate::kernels::{k_se, Component, Composition, KernelSpec, RealKernel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tp(t: f64) -> TaskPoint {
        TaskPoint::new(vec![Coord::Real(t)])
    }

    fn policy(amp: f64, l: f64) -> Policy {
        let schema = TaskSchema::time_only(0.0, 10.0);
        let mut k = KernelSpec::default_for(&schema, Composition::Product, RealKernel::Se);
        k.amplitude = amp;
        if let Component::Real { lengthscale, .. } = &mut k.components[0].component {
            *lengthscale = l;
        }
        let pts: Vec<TaskPoint> = (0..6).map(|i| tp(i as f64 * 0.2)).collect();
        let ys: Vec<Vec<f64>> = (0..6).map(|i| vec![(i as f64).sin()]).collect();
        let d = TrainingData::from_samples(&pts, &ys).unwrap();
        let m = GpModel::new(schema.clone(), k, NoiseModel::Constant { lambda: 0.01 }, d.compressed, None, true, 0.0).unwrap();
        Policy { schema, models: vec![m] }
    }

    fn random_spd(rng: &mut ChaCha8Rng, q: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(q, q, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(q, q) * 0.1
    }

    fn dist(mu: DVector<f64>, cov: DMatrix<f64>) -> PredictiveDistribution {
        PredictiveDistribution {
            query: (0..mu.len()).map(|k| tp(k as f64)).collect(),
            mean: vec![mu],
            cov: vec![PredCov::Full(cov)],
        }
    }

    #[test]
    fn interpolates_a_stiff_via_point() {
        let p = policy(1.0, 0.5);
        let vp = ViaPointSet::new(&p.schema, 1, vec![ViaPoint { x: tp(0.7), y: vec![2.5], strength: vec![1e-12] }]).unwrap();
        let d = viapoint_distribution(&vp, &p, &[tp(0.7)], true).unwrap();
        assert!((d.mean[0][0] - 2.5).abs() < 1e-5);
    }

    #[test]
    fn reverts_to_prior_mean_far_away() {
        let p = policy(1.0, 0.1);
        let vp = ViaPointSet::new(&p.schema, 1, vec![ViaPoint { x: tp(0.0), y: vec![3.0], strength: vec![1e-4] }]).unwrap();
        let d = viapoint_distribution(&vp, &p, &[tp(9.0)], false).unwrap();
        assert_eq!(d.mean[0][0], p.models[0].mean);
        assert!((d.cov[0].diag()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_closed_form() {
        let (amp, l) = (1.3, 0.4);
        let p = policy(amp, l);
        let (x1, x2, y1, y2, r1, r2) = (0.2, 0.5, 1.0, -0.5, 0.01, 0.02);
        let vp = ViaPointSet::new(
            &p.schema,
            1,
            vec![
                ViaPoint { x: tp(x1), y: vec![y1], strength: vec![r1] },
                ViaPoint { x: tp(x2), y: vec![y2], strength: vec![r2] },
            ],
        )
        .unwrap();
        let xq = 0.35;
        let d = viapoint_distribution(&vp, &p, &[tp(xq)], true).unwrap();
        let m = p.models[0].mean;
        let k = |a: f64, b: f64| amp * k_se(a - b, l);
        let (a, b, c) = (k(x1, x1) + r1, k(x1, x2), k(x2, x2) + r2);
        let det = a * c - b * b;
        let (u1, u2) = (y1 - m, y2 - m);
        let (w1, w2) = ((c * u1 - b * u2) / det, (a * u2 - b * u1) / det);
        let (k1, k2) = (k(xq, x1), k(xq, x2));
        let mean = m + k1 * w1 + k2 * w2;
        let var = amp - (c * k1 * k1 - 2.0 * b * k1 * k2 + a * k2 * k2) / det;
        assert!((d.mean[0][0] - mean).abs() < 1e-10);
        assert!((d.cov[0].diag()[0] - var).abs() < 1e-10);
    }

    #[test]
    fn equal_covariances_average_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_spd(&mut rng, 5);
        let a = DVector::from_fn(5, |_, _| rng.random::<f64>());
        let b = DVector::from_fn(5, |_, _| rng.random::<f64>());
        let out = condition(&dist(a.clone(), s.clone()), &dist(b.clone(), s)).unwrap();
        assert!((&out.mean[0] - (a + b) * 0.5).amax() < 1e-10);
    }

    #[test]
    fn confident_side_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_spd(&mut rng, 5);
        let a = DVector::from_fn(5, |_, _| rng.random::<f64>());
        let b = DVector::from_fn(5, |_, _| rng.random::<f64>());
        let out = condition(&dist(a.clone(), s.clone()), &dist(b, s * 1e6)).unwrap();
        let range = a.max() - a.min();
        assert!((&out.mean[0] - a).amax() < 1e-3 * range);
    }

    #[test]
    fn fused_covariance_is_loewner_smaller_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (sd, sv) = (random_spd(&mut rng, 5), random_spd(&mut rng, 5));
            let (a, b) = (DVector::from_fn(5, |_, _| rng.random::<f64>()), DVector::from_fn(5, |_, _| rng.random::<f64>()));
            let x = condition(&dist(a.clone(), sd.clone()), &dist(b.clone(), sv.clone())).unwrap();
            let y = condition(&dist(b, sv.clone()), &dist(a, sd.clone())).unwrap();
            let (cx, cy) = (x.cov[0].to_full(), y.cov[0].to_full());
            assert!((&x.mean[0] - &y.mean[0]).amax() < 1e-10);
            assert!((&cx - &cy).amax() < 1e-10);
            assert_eq!(cx, cx.transpose());
            assert!(crate::kernels::min_eigenvalue(&(sd - &cx)) >= -1e-8);
            assert!(crate::kernels::min_eigenvalue(&(sv - &cx)) >= -1e-8);
        }
    }

    #[test]
    fn grid_mismatch_rejected() {
        let s = DMatrix::identity(3, 3);
        let a = dist(DVector::zeros(3), s.clone());
        let mut b = dist(DVector::zeros(3), s);
        b.query[2] = tp(7.5);
        assert!(matches!(condition(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn policy_prediction_is_reused() {
        let p = policy(1.0, 0.3);
        let q: Vec<TaskPoint> = (0..20).map(|k| tp(k as f64 * 0.05)).collect();
        let before = crate::gp::predict_calls();
        let m = Modulator::new(&p, &q, true).unwrap();
        for y in [0.0, 0.5, 1.0] {
            let vp = ViaPointSet::new(&p.schema, 1, vec![ViaPoint { x: tp(0.5), y: vec![y], strength: vec![1e-6] }]).unwrap();
            m.modulate(&vp).unwrap();
        }
        assert_eq!(crate::gp::predict_calls() - before, 1);
    }

    #[test]
    fn parse_via_point() {
        let schema = crate::synthetic::mixed3_schema();
        let v = ViaPoint::parse(&schema, "t=0.25,s=3,u=sin,x=0.1,y=-2,strength=1e-6").unwrap();
        assert_eq!(v.x.coords, vec![Coord::Real(0.25), Coord::Int(3), Coord::Cat("sin".into())]);
        assert_eq!(v.y, vec![0.1, -2.0]);
        assert_eq!(v.strength, vec![1e-6, 1e-6]);
        assert!(ViaPoint::parse(&schema, "t=0.25,u=sin,y=1,strength=1").is_err());
        assert!(ViaPoint::parse(&schema, "t=0.25,s=3,u=sin,y=1").is_err());
        assert!(ViaPointSet::new(&schema, 1, vec![]).is_err());
        let bad = ViaPoint::parse(&schema, "t=0.25,s=3,u=sin,y=1,strength=0").unwrap();
        assert!(ViaPointSet::new(&schema, 1, vec![bad]).is_err());
    }
}
