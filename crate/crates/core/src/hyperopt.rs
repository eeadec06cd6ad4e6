//! Multi-start maximization of bounded objectives.
//!
//! Starts are drawn by Latin-hypercube sampling over the box and refined
//! independently, either with a projected Nelder-Mead simplex or with a
//! projected BFGS on central-difference gradients. Results are deterministic
//! for a given seed regardless of how many threads run the starts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NelderMead,
    QuasiNewton,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nelder-mead" | "simplex" => Ok(Method::NelderMead),
            "quasi-newton" | "bfgs" => Ok(Method::QuasiNewton),
            _ => Err(Error::InvalidArgument(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptControl {
    pub n_starts: usize,
    pub max_evals: usize,
    pub seed: u64,
    /// Convergence threshold on the spread of objective values.
    pub tol: f64,
    pub method: Method,
}

impl Default for OptControl {
    fn default() -> Self {
        OptControl {
            n_starts: 8,
            max_evals: 500,
            seed: 0,
            tol: 1e-6,
            method: Method::NelderMead,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: usize,
    pub initial: Vec<f64>,
    pub best: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub trace: Vec<StartTrace>,
}

impl OptResult {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("start,best,evals\n");
        for t in &self.trace {
            s.push_str(&format!("{},{},{}\n", t.start, t.best, t.evals));
        }
        s
    }
}

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

/// `n` stratified points in the box, one per stratum along every axis.
pub fn latin_hypercube(bounds: &[(f64, f64)], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; bounds.len()]; n];
    for (d, (lo, hi)) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in pts.iter_mut().zip(strata) {
            let u = (s as f64 + rng.random::<f64>()) / n as f64;
            p[d] = lo + u * (hi - lo);
        }
    }
    pts
}

/// Maximizes `objective` inside `bounds`. `initial`, when given, replaces
/// the first Latin-hypercube start. Non-finite objective values count as
/// failures; a start whose initial value is non-finite is redrawn up to ten
/// times before it is dropped.
pub fn optimize<F>(
    objective: F,
    bounds: &[(f64, f64)],
    initial: Option<&[f64]>,
    control: &OptControl,
) -> Result<OptResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if control.n_starts == 0 {
        return Err(Error::InvalidArgument("n_starts must be at least 1".into()));
    }
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::InvalidArgument("bounds must be finite and ordered".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(control.seed);
    let mut starts = latin_hypercube(bounds, control.n_starts, &mut rng);
    if let Some(x0) = initial {
        starts[0] = x0.to_vec();
        clamp_into(&mut starts[0], bounds);
    }
    // redraws come from a fixed sequence so the outcome does not depend on scheduling
    let redraws: Vec<Vec<Vec<f64>>> = (0..control.n_starts)
        .map(|_| {
            (0..10)
                .map(|_| bounds.iter().map(|(lo, hi)| lo + rng.random::<f64>() * (hi - lo)).collect())
                .collect()
        })
        .collect();

    if bounds.is_empty() {
        let v = objective(&[]);
        if !v.is_finite() {
            return Err(Error::Initialization("objective is not finite".into()));
        }
        return Ok(OptResult {
            theta: vec![],
            value: v,
            trace: vec![StartTrace {
                start: 0,
                initial: vec![],
                best: v,
                evals: 1,
            }],
        });
    }

    let runs: Vec<Option<(Vec<f64>, f64, StartTrace)>> = starts
        .into_par_iter()
        .zip(redraws)
        .enumerate()
        .map(|(k, (x0, alts))| {
            let mut x = x0;
            let mut f0 = objective(&x);
            let mut evals = 1;
            let mut alts = alts.into_iter();
            while !f0.is_finite() {
                x = alts.next()?;
                f0 = objective(&x);
                evals += 1;
            }
            let (xb, fb, used) = match control.method {
                Method::NelderMead => nelder_mead(&objective, &x, f0, bounds, control),
                Method::QuasiNewton => bfgs(&objective, &x, f0, bounds, control),
            };
            let trace = StartTrace {
                start: k,
                initial: x,
                best: fb,
                evals: evals + used,
            };
            Some((xb, fb, trace))
        })
        .collect();

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::new();
    for (x, f, t) in runs.into_iter().flatten() {
        trace.push(t);
        if best.as_ref().is_none_or(|(_, bf)| f > *bf) {
            best = Some((x, f));
        }
    }
    let (theta, value) = best.ok_or_else(|| {
        Error::Initialization("objective was not finite at any starting point".into())
    })?;
    Ok(OptResult {
        theta,
        value,
        trace,
    })
}

/// Projected Nelder-Mead on `-f`. Returns the best point, its value and
/// the number of evaluations used.
fn nelder_mead<F>(
    f: &F,
    x0: &[f64],
    f0: f64,
    bounds: &[(f64, f64)],
    control: &OptControl,
) -> (Vec<f64>, f64, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let d = x0.len();
    let mut evals = 0;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.to_vec(), -f0));
    for i in 0..d {
        let (lo, hi) = bounds[i];
        let step = 0.1 * (hi - lo).max(1e-12);
        let mut x = x0.to_vec();
        x[i] = if x[i] + step <= hi { x[i] + step } else { x[i] - step };
        clamp_into(&mut x, bounds);
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let xatol = 1e-4;
    while evals < control.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_spread = simplex[d].1 - simplex[0].1;
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread <= control.tol && x_spread <= xatol {
            break;
        }

        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / d as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&simplex[d].0)
                .map(|(c, w)| c + t * (w - c))
                .collect();
            clamp_into(&mut x, bounds);
            x
        };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                // shrink towards the best vertex
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    clamp_into(&mut x, bounds);
                    let fx = eval(&x, &mut evals);
                    *v = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, v) = simplex.swap_remove(0);
    (x, -v, evals)
}

fn fd_gradient<F>(f: &F, x: &[f64], bounds: &[(f64, f64)], evals: &mut usize) -> Option<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        let (lo, hi) = bounds[i];
        let xp_i = (x[i] + h).min(hi);
        let xm_i = (x[i] - h).max(lo);
        if xp_i == xm_i {
            continue;
        }
        let mut xp = x.to_vec();
        xp[i] = xp_i;
        let mut xm = x.to_vec();
        xm[i] = xm_i;
        let (fp, fm) = (f(&xp), f(&xm));
        *evals += 2;
        if !(fp.is_finite() && fm.is_finite()) {
            return None;
        }
        g[i] = (fp - fm) / (xp_i - xm_i);
    }
    Some(g)
}

/// Projected BFGS ascent with central-difference gradients and Armijo
/// backtracking.
fn bfgs<F>(f: &F, x0: &[f64], f0: f64, bounds: &[(f64, f64)], control: &OptControl) -> (Vec<f64>, f64, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let d = x0.len();
    let mut evals = 0;
    let mut x = x0.to_vec();
    let mut fx = f0;
    let mut h = nalgebra::DMatrix::<f64>::identity(d, d);
    let Some(mut g) = fd_gradient(f, &x, bounds, &mut evals) else {
        return (x, fx, evals);
    };

    while evals < control.max_evals {
        let gv = nalgebra::DVector::from_column_slice(&g);
        let mut dir = &h * &gv;
        if dir.dot(&gv) <= 0.0 {
            h = nalgebra::DMatrix::identity(d, d);
            dir = gv.clone();
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-10 && evals < control.max_evals {
            let mut xn: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, b)| a + step * b).collect();
            clamp_into(&mut xn, bounds);
            let fnew = f(&xn);
            evals += 1;
            let moved: f64 = xn.iter().zip(&x).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            if fnew.is_finite() && fnew >= fx + 1e-4 * moved {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else { break };
        let Some(gn) = fd_gradient(f, &xn, bounds, &mut evals) else {
            x = xn;
            fx = fnew;
            break;
        };
        let s = nalgebra::DVector::from_iterator(d, xn.iter().zip(&x).map(|(a, b)| a - b));
        // ascent on f is descent on -f: y = -(g_new - g_old)
        let y = nalgebra::DVector::from_iterator(d, g.iter().zip(&gn).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        let improvement = fnew - fx;
        x = xn;
        fx = fnew;
        g = gn;
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let i = nalgebra::DMatrix::<f64>::identity(d, d);
            let a = &i - rho * &s * y.transpose();
            let b = &i - rho * &y * s.transpose();
            h = &a * &h * &b + rho * &s * s.transpose();
        }
        if improvement.abs() < control.tol {
            break;
        }
    }
    (x, fx, evals)
}
