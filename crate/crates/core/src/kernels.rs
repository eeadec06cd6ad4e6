//! Covariance functions over mixed real / integer / categorical inputs.
//!
//! Every per-dimension component is in correlation form (`k(x, x) = 1`), and a
//! single amplitude `σ_f²` scales the composed kernel. Components act on the
//! numeric encoding produced by [`TaskSchema::encode`]: reals and integers as
//! values, categories as label indices.
//!
//! Hyperparameters are exposed as a flat vector in an unconstrained
//! transformed space (logs, logits, partial-correlation `atanh`s), so every
//! vector inside the bounds maps to a positive semidefinite kernel.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DimDomain, TaskSchema};
use crate::error::{Error, Result};

/// Relative jitter added to the Gram diagonal by default.
pub const DEFAULT_JITTER: f64 = 1e-8;
/// Largest relative jitter tried before giving up on a factorization.
pub const MAX_JITTER: f64 = 1e-4;

const LOGIT_BOUND: f64 = 8.0;
const PARTIAL_CORR_BOUND: f64 = 4.0;

/// Squared exponential correlation `exp(-τ²/2l²)`.
pub fn k_se(tau: f64, l: f64) -> f64 {
    (-(tau * tau) / (2.0 * l * l)).exp()
}

/// Matérn 5/2 correlation.
pub fn k_matern52(tau: f64, l: f64) -> f64 {
    let r = 5f64.sqrt() * tau.abs() / l;
    (1.0 + r + r * r / 3.0) * (-r).exp()
}

/// Linear warping of `lo..=hi` onto `[0, scale)`.
pub fn linear_warp(s: f64, lo: i64, hi: i64, scale: f64) -> f64 {
    scale * (s - lo as f64) / ((hi - lo + 1) as f64)
}

/// Cosine correlation between two integer levels under the linear warping
/// onto `[0, β)`.
pub fn k_int_cosine(s: i64, s2: i64, lo: i64, hi: i64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= PI) {
        return Err(Error::InfeasibleParameter {
            block: "integer cosine".into(),
            detail: format!("beta = {beta} outside (0, pi]"),
        });
    }
    Ok((linear_warp(s as f64, lo, hi, beta) - linear_warp(s2 as f64, lo, hi, beta)).cos())
}

/// Open interval of admissible compound-symmetry covariances for `levels`
/// categories (unit variance).
pub fn cs_feasible_interval(levels: usize) -> (f64, f64) {
    if levels <= 1 {
        (f64::NEG_INFINITY, 1.0)
    } else {
        (-1.0 / (levels as f64 - 1.0), 1.0)
    }
}

/// Compound symmetry: `1` for equal categories, `c` otherwise.
pub fn k_cat_cs(u: usize, u2: usize, c: f64, levels: usize) -> Result<f64> {
    let (lo, hi) = cs_feasible_interval(levels);
    if !(c > lo && c < hi) {
        return Err(Error::InfeasibleParameter {
            block: "compound symmetry".into(),
            detail: format!("c = {c} outside ({lo}, {hi}) for {levels} levels"),
        });
    }
    Ok(if u == u2 { 1.0 } else { c })
}

/// Grouped compound symmetry: `1` on the diagonal, `c[g(u)][g(u')]` elsewhere.
pub fn k_cat_grouped(u: usize, u2: usize, group_of: &[usize], c: &[Vec<f64>]) -> f64 {
    if u == u2 {
        1.0
    } else {
        c[group_of[u]][group_of[u2]]
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Checks the block conditions for a grouped CS matrix: each within-group
/// block `W_g` and its centred form `W_g - mean(W_g) J` must be PSD, and so
/// must the `G×G` matrix of block averages.
pub fn validate_grouped(group_of: &[usize], c: &[Vec<f64>]) -> Result<()> {
    let g_count = c.len();
    let sizes: Vec<usize> = (0..g_count)
        .map(|g| group_of.iter().filter(|&&x| x == g).count())
        .collect();
    for g in 0..g_count {
        if c[g].len() != g_count || (0..g_count).any(|h| c[g][h] != c[h][g]) {
            return Err(Error::InfeasibleParameter {
                block: "group covariances".into(),
                detail: "matrix must be square and symmetric".into(),
            });
        }
    }
    let mut means = vec![0.0; g_count];
    for g in 0..g_count {
        let n = sizes[g];
        if n == 0 {
            return Err(Error::InfeasibleParameter {
                block: format!("W_{}", g + 1),
                detail: "group has no categories".into(),
            });
        }
        let w = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { c[g][g] });
        let eig = min_eigenvalue(&w);
        if eig < -1e-8 {
            return Err(Error::InfeasibleParameter {
                block: format!("W_{}", g + 1),
                detail: format!("min eigenvalue {eig:.3e}"),
            });
        }
        means[g] = w.sum() / (n * n) as f64;
        let centred = w.map(|x| x - means[g]);
        let eig = min_eigenvalue(&centred);
        if eig < -1e-8 {
            return Err(Error::InfeasibleParameter {
                block: format!("W_{} - mean(W_{}) J", g + 1, g + 1),
                detail: format!("min eigenvalue {eig:.3e}"),
            });
        }
    }
    let avg = DMatrix::from_fn(g_count, g_count, |i, j| if i == j { means[i] } else { c[i][j] });
    let eig = min_eigenvalue(&avg);
    if eig < -1e-8 {
        return Err(Error::InfeasibleParameter {
            block: "between-group averages".into(),
            detail: format!("min eigenvalue {eig:.3e}"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RealKernel {
    Se,
    Matern52,
}

impl RealKernel {
    pub fn eval(self, tau: f64, l: f64) -> f64 {
        match self {
            RealKernel::Se => k_se(tau, l),
            RealKernel::Matern52 => k_matern52(tau, l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Component {
    Real {
        base: RealKernel,
        lengthscale: f64,
    },
    IntCosine {
        beta: f64,
        lo: i64,
        hi: i64,
    },
    /// A real kernel on the linear warping of `lo..=hi` onto `[0, 1)`.
    IntWarped {
        base: RealKernel,
        lengthscale: f64,
        lo: i64,
        hi: i64,
    },
    CatCs {
        c: f64,
        levels: usize,
    },
    CatGrouped {
        group_of: Vec<usize>,
        c: Vec<Vec<f64>>,
    },
}

impl Component {
    #[inline]
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        match self {
            Component::Real { base, lengthscale } => base.eval((a - b).abs(), *lengthscale),
            Component::IntCosine { beta, lo, hi } => {
                (linear_warp(a, *lo, *hi, *beta) - linear_warp(b, *lo, *hi, *beta)).cos()
            }
            Component::IntWarped {
                base,
                lengthscale,
                lo,
                hi,
            } => base.eval(
                (linear_warp(a, *lo, *hi, 1.0) - linear_warp(b, *lo, *hi, 1.0)).abs(),
                *lengthscale,
            ),
            Component::CatCs { c, .. } => {
                if a == b {
                    1.0
                } else {
                    *c
                }
            }
            Component::CatGrouped { group_of, c } => {
                k_cat_grouped(a as usize, b as usize, group_of, c)
            }
        }
    }

    fn n_params(&self) -> usize {
        match self {
            Component::Real { .. } | Component::IntCosine { .. } | Component::IntWarped { .. } => 1,
            Component::CatCs { levels, .. } => usize::from(*levels > 1),
            Component::CatGrouped { group_of, c } => {
                let g = c.len();
                let within = (0..g).filter(|&k| group_size(group_of, k) > 1).count();
                within + g * (g - 1) / 2
            }
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            Component::Real { lengthscale, .. } | Component::IntWarped { lengthscale, .. } => {
                if !(*lengthscale > 0.0 && lengthscale.is_finite()) {
                    return Err(Error::InfeasibleParameter {
                        block: "lengthscale".into(),
                        detail: format!("{lengthscale} is not positive"),
                    });
                }
            }
            Component::IntCosine { beta, lo, hi } => {
                k_int_cosine(*lo, *hi, *lo, *hi, *beta)?;
            }
            Component::CatCs { c, levels } => {
                if *levels > 1 {
                    k_cat_cs(0, 1, *c, *levels)?;
                }
            }
            Component::CatGrouped { group_of, c } => validate_grouped(group_of, c)?,
        }
        Ok(())
    }

    fn push_params(&self, out: &mut Vec<f64>) {
        match self {
            Component::Real { lengthscale, .. } | Component::IntWarped { lengthscale, .. } => {
                out.push(lengthscale.ln())
            }
            Component::IntCosine { beta, .. } => out.push(logit(beta / PI)),
            Component::CatCs { c, levels } => {
                if *levels > 1 {
                    let (lo, hi) = cs_feasible_interval(*levels);
                    out.push(logit((c - lo) / (hi - lo)));
                }
            }
            Component::CatGrouped { group_of, c } => {
                let g = c.len();
                let mut avg = vec![1.0; g];
                for k in 0..g {
                    let n = group_size(group_of, k);
                    if n > 1 {
                        let (lo, hi) = cs_feasible_interval(n);
                        out.push(logit((c[k][k] - lo) / (hi - lo)));
                        avg[k] = (1.0 + (n as f64 - 1.0) * c[k][k]) / n as f64;
                    }
                }
                let rho = DMatrix::from_fn(g, g, |i, j| {
                    if i == j {
                        1.0
                    } else {
                        c[i][j] / (avg[i] * avg[j]).sqrt()
                    }
                });
                out.extend(partial_corr_params(&rho));
            }
        }
    }

    fn read_params(&mut self, p: &[f64]) {
        match self {
            Component::Real { lengthscale, .. } | Component::IntWarped { lengthscale, .. } => {
                *lengthscale = p[0].exp()
            }
            Component::IntCosine { beta, .. } => *beta = PI * sigmoid(p[0]),
            Component::CatCs { c, levels } => {
                if *levels > 1 {
                    let (lo, hi) = cs_feasible_interval(*levels);
                    *c = lo + (hi - lo) * sigmoid(p[0]);
                }
            }
            Component::CatGrouped { group_of, c } => {
                let g = c.len();
                let mut k_param = 0;
                let mut avg = vec![1.0; g];
                for k in 0..g {
                    let n = group_size(group_of, k);
                    if n > 1 {
                        let (lo, hi) = cs_feasible_interval(n);
                        c[k][k] = lo + (hi - lo) * sigmoid(p[k_param]);
                        k_param += 1;
                        avg[k] = (1.0 + (n as f64 - 1.0) * c[k][k]) / n as f64;
                    } else {
                        c[k][k] = 0.0;
                    }
                }
                let rho = corr_from_partial(g, &p[k_param..]);
                for i in 0..g {
                    for j in 0..g {
                        if i != j {
                            c[i][j] = (avg[i] * avg[j]).sqrt() * rho[(i, j)];
                        }
                    }
                }
                // keep the matrix exactly symmetric
                for i in 0..g {
                    for j in 0..i {
                        c[j][i] = c[i][j];
                    }
                }
            }
        }
    }

    fn param_info(&self, dim_name: &str, range: f64) -> Vec<(String, f64, f64)> {
        match self {
            Component::Real { .. } => vec![(
                format!("log_lengthscale[{dim_name}]"),
                (1e-2 * range).ln(),
                (1e1 * range).ln(),
            )],
            Component::IntWarped { .. } => vec![(
                format!("log_lengthscale[{dim_name}]"),
                1e-2f64.ln(),
                1e1f64.ln(),
            )],
            Component::IntCosine { .. } => {
                vec![(format!("logit_beta[{dim_name}]"), -LOGIT_BOUND, LOGIT_BOUND)]
            }
            Component::CatCs { levels, .. } => {
                if *levels > 1 {
                    vec![(format!("logit_c[{dim_name}]"), -LOGIT_BOUND, LOGIT_BOUND)]
                } else {
                    vec![]
                }
            }
            Component::CatGrouped { group_of, c } => {
                let g = c.len();
                let mut v = Vec::new();
                for k in 0..g {
                    if group_size(group_of, k) > 1 {
                        v.push((
                            format!("logit_within[{dim_name}][{}]", k + 1),
                            -LOGIT_BOUND,
                            LOGIT_BOUND,
                        ));
                    }
                }
                for i in 1..g {
                    for j in 0..i {
                        v.push((
                            format!("atanh_partial[{dim_name}][{},{}]", i + 1, j + 1),
                            -PARTIAL_CORR_BOUND,
                            PARTIAL_CORR_BOUND,
                        ));
                    }
                }
                v
            }
        }
    }
}

fn group_size(group_of: &[usize], g: usize) -> usize {
    group_of.iter().filter(|&&x| x == g).count()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Correlation matrix from canonical partial correlations `tanh(p)`, filled
/// row by row below the diagonal.
fn corr_from_partial(g: usize, p: &[f64]) -> DMatrix<f64> {
    let mut w = DMatrix::<f64>::zeros(g, g);
    if g > 0 {
        w[(0, 0)] = 1.0;
    }
    let mut k = 0;
    for i in 1..g {
        let mut rem: f64 = 1.0;
        for j in 0..i {
            let z = p[k].tanh();
            k += 1;
            w[(i, j)] = z * rem.sqrt();
            rem -= w[(i, j)] * w[(i, j)];
        }
        w[(i, i)] = rem.max(0.0).sqrt();
    }
    &w * w.transpose()
}

/// Inverse of [`corr_from_partial`].
fn partial_corr_params(rho: &DMatrix<f64>) -> Vec<f64> {
    let g = rho.nrows();
    let mut out = Vec::with_capacity(g * (g.saturating_sub(1)) / 2);
    if g < 2 {
        return out;
    }
    let l = match rho.clone().cholesky() {
        Some(c) => c.l(),
        None => {
            out.resize(g * (g - 1) / 2, 0.0);
            return out;
        }
    };
    for i in 1..g {
        let mut rem: f64 = 1.0;
        for j in 0..i {
            let z = (l[(i, j)] / rem.max(1e-300).sqrt()).clamp(-0.999_999, 0.999_999);
            out.push(z.atanh());
            rem -= l[(i, j)] * l[(i, j)];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Composition {
    Product,
    Sum,
    Anova,
}

impl std::str::FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(Composition::Product),
            "sum" => Ok(Composition::Sum),
            "anova" => Ok(Composition::Anova),
            _ => Err(Error::InvalidArgument(format!("unknown composition `{s}`"))),
        }
    }
}

impl std::str::FromStr for RealKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "se" => Ok(RealKernel::Se),
            "matern52" => Ok(RealKernel::Matern52),
            _ => Err(Error::InvalidArgument(format!("unknown real kernel `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimKernel {
    pub dim: usize,
    #[serde(flatten)]
    pub component: Component,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub composition: Composition,
    /// `σ_f²`.
    pub amplitude: f64,
    pub components: Vec<DimKernel>,
}

/// Named, bounded entries of a flat hyperparameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl HyperParams {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn in_bounds(&self) -> bool {
        self.values
            .iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64, bounds: (f64, f64)) {
        self.names.push(name.into());
        self.values.push(value);
        self.bounds.push(bounds);
    }
}

impl KernelSpec {
    /// One component per schema dim: `real` on real dims, cosine on integer
    /// dims and (grouped) compound symmetry on categorical dims.
    pub fn default_for(schema: &TaskSchema, composition: Composition, real: RealKernel) -> Self {
        let components = schema
            .dims
            .iter()
            .enumerate()
            .map(|(dim, d)| {
                let component = match &d.domain {
                    DimDomain::Real { lo, hi } => Component::Real {
                        base: real,
                        lengthscale: 0.2 * (hi - lo),
                    },
                    DimDomain::Integer { lo, hi } => Component::IntCosine {
                        beta: PI / 2.0,
                        lo: *lo,
                        hi: *hi,
                    },
                    DimDomain::Categorical { labels, groups } => match groups {
                        Some(gs) if gs.len() > 1 => Component::CatGrouped {
                            group_of: d.group_of().unwrap_or_default(),
                            c: vec![vec![0.0; gs.len()]; gs.len()],
                        },
                        _ => Component::CatCs {
                            c: 0.0,
                            levels: labels.len(),
                        },
                    },
                };
                DimKernel { dim, component }
            })
            .collect();
        KernelSpec {
            composition,
            amplitude: 1.0,
            components,
        }
    }

    /// Checks every component against its feasibility conditions and that
    /// each schema dim has exactly one component.
    pub fn validate(&self, schema: &TaskSchema) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InfeasibleParameter {
                block: "amplitude".into(),
                detail: format!("{} is not positive", self.amplitude),
            });
        }
        let mut seen = vec![false; schema.len()];
        for dk in &self.components {
            if dk.dim >= schema.len() || seen[dk.dim] {
                return Err(Error::Schema(format!(
                    "kernel component for dim {} is out of range or repeated",
                    dk.dim
                )));
            }
            seen[dk.dim] = true;
            let ok = matches!(
                (&schema.dims[dk.dim].domain, &dk.component),
                (DimDomain::Real { .. }, Component::Real { .. })
                    | (DimDomain::Integer { .. }, Component::IntCosine { .. } | Component::IntWarped { .. })
                    | (DimDomain::Categorical { .. }, Component::CatCs { .. } | Component::CatGrouped { .. })
            );
            if !ok {
                return Err(Error::Schema(format!(
                    "kernel component for dim `{}` does not match its kind",
                    schema.dims[dk.dim].name
                )));
            }
            dk.component.check()?;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Schema("every schema dim needs a kernel component".into()));
        }
        Ok(())
    }

    /// Covariance between two encoded points.
    #[inline]
    pub fn compose(&self, a: &[f64], b: &[f64]) -> f64 {
        let ks = self.components.iter().map(|dk| dk.component.eval(a[dk.dim], b[dk.dim]));
        let c = match self.composition {
            Composition::Product => ks.product::<f64>(),
            Composition::Sum => ks.sum::<f64>(),
            Composition::Anova => ks.map(|k| 1.0 + k).product::<f64>(),
        };
        self.amplitude * c
    }

    /// `compose(x, x)`, the prior variance at a point.
    pub fn prior_variance(&self, a: &[f64]) -> f64 {
        self.compose(a, a)
    }

    /// Gram matrix with `jitter · σ_f²` added to the diagonal. Only the lower
    /// triangle is evaluated; the upper is mirrored.
    pub fn gram(&self, xs: &[Vec<f64>], jitter: f64) -> DMatrix<f64> {
        let n = xs.len();
        let rows: Vec<Vec<f64>> = if n >= 128 {
            (0..n)
                .into_par_iter()
                .map(|i| (0..=i).map(|j| self.compose(&xs[i], &xs[j])).collect())
                .collect()
        } else {
            (0..n)
                .map(|i| (0..=i).map(|j| self.compose(&xs[i], &xs[j])).collect())
                .collect()
        };
        let mut k = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += jitter * self.amplitude;
        }
        k
    }

    /// `n × q` cross-covariance between training and query points.
    pub fn cross(&self, xs: &[Vec<f64>], qs: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), qs.len(), |i, j| self.compose(&xs[i], &qs[j]))
    }

    pub fn prior_diag(&self, qs: &[Vec<f64>]) -> DVector<f64> {
        DVector::from_iterator(qs.len(), qs.iter().map(|q| self.prior_variance(q)))
    }

    /// Flat transformed parameter vector: `log σ_f²` first, then each
    /// component's entries in component order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = vec![self.amplitude.ln()];
        for dk in &self.components {
            dk.component.push_params(&mut out);
        }
        out
    }

    pub fn n_params(&self) -> usize {
        1 + self.components.iter().map(|dk| dk.component.n_params()).sum::<usize>()
    }

    /// Inverse of [`KernelSpec::params`].
    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "kernel parameter vector length");
        self.amplitude = p[0].exp();
        let mut k = 1;
        for dk in &mut self.components {
            let n = dk.component.n_params();
            dk.component.read_params(&p[k..k + n]);
            k += n;
        }
    }

    pub fn with_params(&self, p: &[f64]) -> Self {
        let mut s = self.clone();
        s.set_params(p);
        s
    }

    /// Named parameters with default bounds. Lengthscales range over
    /// `[1e-2, 1e1]` times the dim's extent; the amplitude over
    /// `[1e-3, 1e3]` times `output_var`.
    pub fn hyper(&self, schema: &TaskSchema, output_var: f64) -> HyperParams {
        let var = if output_var > 0.0 { output_var } else { 1.0 };
        let mut h = HyperParams {
            names: Vec::new(),
            values: Vec::new(),
            bounds: Vec::new(),
        };
        let values = self.params();
        h.push("log_amplitude", values[0], ((1e-3 * var).ln(), (1e3 * var).ln()));
        let mut k = 1;
        for dk in &self.components {
            let dim = &schema.dims[dk.dim];
            let range = match dim.domain {
                DimDomain::Real { lo, hi } => hi - lo,
                _ => 1.0,
            };
            for (name, lo, hi) in dk.component.param_info(&dim.name, range) {
                h.push(name, values[k], (lo, hi));
                k += 1;
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DimSpec, TaskSchema};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mixed_schema() -> TaskSchema {
        TaskSchema::new(vec![
            DimSpec::real("t", 0.0, 1.0),
            DimSpec::integer("s", 1, 5),
            DimSpec::categorical("u", &["lin", "sin", "dsin"]),
        ])
        .unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                vec![
                    rng.random::<f64>(),
                    rng.random_range(1..=5) as f64,
                    rng.random_range(0..3) as f64,
                ]
            })
            .collect()
    }

    #[test]
    fn se_values() {
        assert_eq!(k_se(0.0, 0.3), 1.0);
        let l = 0.7;
        assert!((k_se(l * 2f64.sqrt(), l) - (-1f64).exp()).abs() < 1e-15);
        assert!((k_se(l * 2f64.sqrt(), l) - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn matern_values() {
        assert_eq!(k_matern52(0.0, 2.0), 1.0);
        // direct evaluation of (1 + √5 + 5/3) e^{-√5}
        let s5 = 5f64.sqrt();
        let expect = (1.0 + s5 + 5.0 / 3.0) * (-s5).exp();
        assert!((k_matern52(1.3, 1.3) - expect).abs() < 1e-14);
        assert!((expect - 0.523994).abs() < 1e-6);
        let grid: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        assert!(grid.windows(2).all(|w| k_matern52(w[1], 0.8) <= k_matern52(w[0], 0.8)));
    }

    #[test]
    fn cosine_values() {
        assert_eq!(k_int_cosine(3, 3, 1, 5, 1.0).unwrap(), 1.0);
        let v = k_int_cosine(1, 5, 1, 5, PI).unwrap();
        assert!((v - (4.0 * PI / 5.0).cos()).abs() < 1e-15);
        assert!((v + 0.809017).abs() < 1e-6);
        assert!(k_int_cosine(1, 2, 1, 5, 0.0).is_err());
        assert!(k_int_cosine(1, 2, 1, 5, 3.5).is_err());
        for beta in [0.3, 1.5, PI] {
            let c = Component::IntCosine { beta, lo: 1, hi: 5 };
            let k = DMatrix::from_fn(5, 5, |i, j| c.eval(i as f64 + 1.0, j as f64 + 1.0));
            assert!(min_eigenvalue(&k) >= -1e-8);
        }
    }

    #[test]
    fn cs_interval_and_boundary() {
        assert_eq!(k_cat_cs(1, 1, 0.2, 3).unwrap(), 1.0);
        assert_eq!(k_cat_cs(0, 1, 0.2, 3).unwrap(), 0.2);
        assert_eq!(cs_feasible_interval(3), (-0.5, 1.0));
        assert!(k_cat_cs(0, 1, -0.5, 3).is_err());
        let gram = |c: f64| DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { c });
        assert!(min_eigenvalue(&gram(-0.33)) >= -1e-8);
        assert!(min_eigenvalue(&gram(-0.34)) < 0.0);
    }

    #[test]
    fn grouped_degenerate_cases() {
        // singletons: every off-diagonal pair uses a between-group entry
        let c = 0.3;
        let spec = Component::CatGrouped {
            group_of: vec![0, 1, 2],
            c: vec![vec![0.0, c, c], vec![c, 0.0, c], vec![c, c, 0.0]],
        };
        let cs = Component::CatCs { c, levels: 3 };
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(spec.eval(a as f64, b as f64), cs.eval(a as f64, b as f64));
            }
        }
        spec.check().unwrap();
        // one group is plain CS
        let one = Component::CatGrouped {
            group_of: vec![0; 4],
            c: vec![vec![-0.2]],
        };
        let cs = Component::CatCs { c: -0.2, levels: 4 };
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(one.eval(a as f64, b as f64), cs.eval(a as f64, b as f64));
            }
        }
        assert_eq!(one.n_params(), cs.n_params());
    }

    #[test]
    fn grouped_violations_name_the_block() {
        let err = validate_grouped(&[0, 0, 0, 1, 1], &[vec![-0.6, 0.0], vec![0.0, 0.5]]).unwrap_err();
        assert!(matches!(err, Error::InfeasibleParameter { ref block, .. } if block.contains("W_1")));
        let err = validate_grouped(&[0, 0, 1, 1], &[vec![0.0, 0.9], vec![0.9, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::InfeasibleParameter { ref block, .. } if block.contains("between")));
    }

    #[test]
    fn grouped_random_feasible_params_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let group_of = vec![0, 0, 0, 1, 1, 1];
        for _ in 0..50 {
            let mut comp = Component::CatGrouped {
                group_of: group_of.clone(),
                c: vec![vec![0.0; 2]; 2],
            };
            let p: Vec<f64> = (0..comp.n_params()).map(|_| rng.random_range(-4.0..4.0)).collect();
            comp.read_params(&p);
            comp.check().unwrap();
            let k = DMatrix::from_fn(6, 6, |i, j| comp.eval(i as f64, j as f64));
            assert!(min_eigenvalue(&k) >= -1e-8);
            // transform round trip
            let mut back = Vec::new();
            comp.push_params(&mut back);
            for (a, b) in p.iter().zip(&back) {
                assert!((a - b).abs() < 1e-6, "{p:?} vs {back:?}");
            }
        }
    }

    #[test]
    fn composition_formulas() {
        let schema = mixed_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for comp in [Composition::Product, Composition::Sum, Composition::Anova] {
            let mut spec = KernelSpec::default_for(&schema, comp, RealKernel::Se);
            spec.amplitude = 1.7;
            let x = [0.3, 2.0, 1.0];
            let zero_lag = spec.compose(&x, &x);
            let expect = match comp {
                Composition::Product => 1.7,
                Composition::Sum => 3.0 * 1.7,
                Composition::Anova => 8.0 * 1.7,
            };
            assert!((zero_lag - expect).abs() < 1e-14);

            for _ in 0..10 {
                let pts = random_points(&mut rng, 2);
                let (a, b) = (&pts[0], &pts[1]);
                let kt = (-(a[0] - b[0]).powi(2) / (2.0 * 0.2 * 0.2)).exp();
                let ks = (PI / 2.0 * (a[1] - b[1]) / 5.0).cos();
                let ku = if a[2] == b[2] { 1.0 } else { 0.0 };
                let hand = 1.7
                    * match comp {
                        Composition::Product => kt * ks * ku,
                        Composition::Sum => kt + ks + ku,
                        Composition::Anova => (1.0 + kt) * (1.0 + ks) * (1.0 + ku),
                    };
                assert!((spec.compose(a, b) - hand).abs() < 1e-12);
                assert_eq!(spec.compose(a, b), spec.compose(b, a));
            }
        }
    }

    #[test]
    fn time_component_is_shift_invariant() {
        let schema = mixed_schema();
        let spec = KernelSpec::default_for(&schema, Composition::Anova, RealKernel::Matern52);
        let a = [0.1, 2.0, 0.0];
        let b = [0.45, 4.0, 2.0];
        for d in [0.2, -0.7, 3.0] {
            let sa = [a[0] + d, a[1], a[2]];
            let sb = [b[0] + d, b[1], b[2]];
            assert!((spec.compose(&a, &b) - spec.compose(&sa, &sb)).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_matches_elementwise_and_is_symmetric() {
        let schema = mixed_schema();
        let spec = KernelSpec::default_for(&schema, Composition::Product, RealKernel::Se);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = random_points(&mut rng, 30);
        let k = spec.gram(&xs, 1e-8);
        for i in 0..30 {
            for j in 0..30 {
                let expect = spec.compose(&xs[i], &xs[j]) + if i == j { 1e-8 * spec.amplitude } else { 0.0 };
                assert_eq!(k[(i, j)], expect);
                assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
        assert!(k.clone().cholesky().is_some());
        let se = Component::Real { base: RealKernel::Se, lengthscale: 0.3 };
        let g = DMatrix::from_fn(20, 20, |i, j| se.eval(xs[i][0], xs[j][0]));
        assert!(min_eigenvalue(&g) >= -1e-8);
    }

    #[test]
    fn params_round_trip_and_bounds() {
        let schema = TaskSchema::new(vec![
            DimSpec::real("t", 0.0, 2.0),
            DimSpec::integer("s", 2, 6),
            DimSpec::grouped("u", &[&["a", "b"], &["c", "d", "e"]]),
        ])
        .unwrap();
        let spec = KernelSpec::default_for(&schema, Composition::Anova, RealKernel::Se);
        spec.validate(&schema).unwrap();
        let h = spec.hyper(&schema, 0.5);
        assert_eq!(h.len(), spec.n_params());
        assert_eq!(h.names[0], "log_amplitude");
        assert!(h.in_bounds());
        let p = spec.params();
        let back = spec.with_params(&p);
        for (a, b) in back.params().iter().zip(&p) {
            assert!((a - b).abs() < 1e-9);
        }
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"cat_grouped\""));
        let parsed: KernelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn validate_rejects_mismatched_components() {
        let schema = mixed_schema();
        let mut spec = KernelSpec::default_for(&schema, Composition::Sum, RealKernel::Se);
        spec.components.swap(1, 2);
        spec.components[1].dim = 1;
        spec.components[2].dim = 2;
        assert!(spec.validate(&schema).is_err());
        let mut spec = KernelSpec::default_for(&schema, Composition::Sum, RealKernel::Se);
        spec.components.pop();
        assert!(spec.validate(&schema).is_err());
    }
}
