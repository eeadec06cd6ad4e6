//! Exact inference on replicated designs.
//!
//! With `N` observations at `n` unique inputs (`a_i` replicates each) the full
//! system satisfies `K_N = U K_n Uᵀ` and `Uᵀ R_N U = A_n R_n`, where `U` is
//! the `N × n` 0/1 membership matrix. The Woodbury identity then reduces the
//! likelihood and the predictive equations to solves with the `n × n` matrix
//! `K_n + A_n⁻¹ R_n`:
//!
//! ```text
//! log L = -½ [ yᵀR_N⁻¹y - ȳᵀA_nR_n⁻¹ȳ + ȳᵀ(K_n + A_n⁻¹R_n)⁻¹ȳ ]
//!         -½ [ log|K_n + A_n⁻¹R_n| + log|R_N| - log|A_n⁻¹R_n| ] - N/2 log 2π
//! ```
//!
//! `yᵀR_N⁻¹y` only needs the per-location sums of squares, which are kept in
//! the compressed statistics. The dense `N × N` formulation lives in
//! [`dense`] and is used as an oracle.

use std::cell::Cell;
use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, DEFAULT_JITTER, MAX_JITTER};

thread_local! {
    static FACTOR_CALLS: Cell<usize> = const { Cell::new(0) };
    static FACTOR_MAX_DIM: Cell<usize> = const { Cell::new(0) };
}

/// Number of Cholesky factorizations attempted on this thread and the
/// largest matrix dimension among them, since the last reset.
pub fn factor_stats() -> (usize, usize) {
    (FACTOR_CALLS.with(Cell::get), FACTOR_MAX_DIM.with(Cell::get))
}

pub fn reset_factor_stats() {
    FACTOR_CALLS.with(|c| c.set(0));
    FACTOR_MAX_DIM.with(|c| c.set(0));
}

/// Cholesky of `m`, retrying with `jitter · scale` added to the diagonal,
/// growing ×10 from [`DEFAULT_JITTER`] up to [`MAX_JITTER`]. Returns the
/// factor and the extra jitter that was needed.
pub fn factorize(m: &DMatrix<f64>, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = m.nrows();
    FACTOR_CALLS.with(|c| c.set(c.get() + 1));
    FACTOR_MAX_DIM.with(|c| c.set(c.get().max(n)));
    if let Some(ch) = m.clone().cholesky() {
        return Ok((ch, 0.0));
    }
    let mut jitter = DEFAULT_JITTER;
    while jitter <= MAX_JITTER * (1.0 + 1e-9) {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += jitter * scale;
        }
        if let Some(ch) = a.cholesky() {
            return Ok((ch, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::numerical(format!(
        "{n}x{n} system is not positive definite even with jitter {MAX_JITTER:e}"
    )))
}

fn log_det(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// The `n`-sized quantities needed for compressed inference of one output.
#[derive(Debug, Clone)]
pub struct CompressedSystem {
    /// Gram matrix at the unique inputs (any jitter already included).
    pub k_n: DMatrix<f64>,
    /// Noise variance `r_i` at each unique input.
    pub noise: DVector<f64>,
    /// Replicate counts `a_i`.
    pub counts: DVector<f64>,
    /// `ȳ - m̄`.
    pub rhs: DVector<f64>,
    /// `Σ_i r_i⁻¹ Σ_j (y_i^(j) - m_i)²`.
    pub quad_full: f64,
    pub total: usize,
    /// Scale for jitter escalation (the kernel amplitude).
    pub scale: f64,
}

impl CompressedSystem {
    /// Assembles the system from per-location statistics. `sq_dev[i]` is the
    /// summed squared deviation of the replicates around `means[i]`.
    pub fn assemble(
        k_n: DMatrix<f64>,
        noise: DVector<f64>,
        counts: &[usize],
        means: &[f64],
        sq_dev: &[f64],
        prior_mean: f64,
        scale: f64,
    ) -> Result<Self> {
        let n = counts.len();
        if k_n.nrows() != n || k_n.ncols() != n || noise.len() != n || means.len() != n || sq_dev.len() != n {
            return Err(Error::InvalidArgument("compressed system dimensions disagree".into()));
        }
        if noise.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::numerical("noise variances must be positive"));
        }
        if counts.iter().any(|&a| a == 0) {
            return Err(Error::InvalidArgument("replicate counts must be positive".into()));
        }
        let rhs = DVector::from_iterator(n, means.iter().map(|m| m - prior_mean));
        let quad_full = (0..n)
            .map(|i| (sq_dev[i] + counts[i] as f64 * rhs[i] * rhs[i]) / noise[i])
            .sum();
        Ok(CompressedSystem {
            k_n,
            noise,
            counts: DVector::from_iterator(n, counts.iter().map(|&a| a as f64)),
            rhs,
            quad_full,
            total: counts.iter().sum(),
            scale,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `ȳᵀ A_n R_n⁻¹ ȳ`, the part of `quad_full` explained by the means.
    pub fn quad_means(&self) -> f64 {
        (0..self.len())
            .map(|i| self.counts[i] * self.rhs[i] * self.rhs[i] / self.noise[i])
            .sum()
    }

    /// `K_n + A_n⁻¹ R_n`.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        let mut c = self.k_n.clone();
        for i in 0..self.len() {
            c[(i, i)] += self.noise[i] / self.counts[i];
        }
        c
    }

    /// Factorizes `K_n + A_n⁻¹ R_n` once; the result serves any number of
    /// likelihood and prediction queries.
    pub fn posterior(&self) -> Result<CompressedPosterior> {
        let (chol, jitter) = factorize(&self.system_matrix(), self.scale)?;
        let alpha = chol.solve(&self.rhs);
        Ok(CompressedPosterior { chol, alpha, jitter })
    }
}

#[derive(Debug, Clone)]
pub struct CompressedPosterior {
    pub chol: Cholesky<f64, Dyn>,
    /// `(K_n + A_n⁻¹R_n)⁻¹ (ȳ - m̄)`.
    pub alpha: DVector<f64>,
    /// Extra jitter needed by the factorization.
    pub jitter: f64,
}

impl CompressedPosterior {
    pub fn loglik(&self, sys: &CompressedSystem) -> f64 {
        let quad = sys.quad_full - sys.quad_means() + sys.rhs.dot(&self.alpha);
        let log_det_full: f64 = (0..sys.len()).map(|i| sys.counts[i] * sys.noise[i].ln()).sum();
        let log_det_reduced: f64 = (0..sys.len()).map(|i| (sys.noise[i] / sys.counts[i]).ln()).sum();
        let det = log_det(&self.chol) + log_det_full - log_det_reduced;
        -0.5 * quad - 0.5 * det - 0.5 * sys.total as f64 * (2.0 * PI).ln()
    }

    /// Predictive mean and covariance. `k_star` is `n × q`; `k_ss` is the
    /// prior covariance at the queries (full `q × q` or just its diagonal);
    /// `r_star` the noise at the queries.
    pub fn predict(
        &self,
        k_star: &DMatrix<f64>,
        k_ss: PriorCov<'_>,
        r_star: &DVector<f64>,
        prior_mean: f64,
    ) -> (DVector<f64>, PredCov) {
        let mean = k_star.tr_mul(&self.alpha).add_scalar(prior_mean);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(k_star)
            .expect("cholesky factor has a positive diagonal");
        let cov = match k_ss {
            PriorCov::Full(k) => {
                let mut s = k - v.tr_mul(&v);
                for i in 0..s.nrows() {
                    s[(i, i)] += r_star[i];
                }
                PredCov::Full(symmetrize(s))
            }
            PriorCov::Diag(d) => PredCov::Diag(DVector::from_iterator(
                d.len(),
                (0..d.len()).map(|j| d[j] + r_star[j] - v.column(j).norm_squared()),
            )),
        };
        (mean, cov)
    }
}

pub enum PriorCov<'a> {
    Full(&'a DMatrix<f64>),
    Diag(&'a DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredCov {
    Full(DMatrix<f64>),
    Diag(DVector<f64>),
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// One-shot compressed log likelihood.
pub fn loglik_compressed(sys: &CompressedSystem) -> Result<f64> {
    Ok(sys.posterior()?.loglik(sys))
}

/// One-shot compressed prediction.
pub fn predict_compressed(
    sys: &CompressedSystem,
    k_star: &DMatrix<f64>,
    k_ss: PriorCov<'_>,
    r_star: &DVector<f64>,
    prior_mean: f64,
) -> Result<(DVector<f64>, PredCov)> {
    Ok(sys.posterior()?.predict(k_star, k_ss, r_star, prior_mean))
}

/// Full `N × N` formulation, kept as the reference the compressed path is
/// checked against.
pub mod dense {
    use super::*;

    /// `U K_n Uᵀ` for the membership vector `membership[k] = i`.
    pub fn expand(k_n: &DMatrix<f64>, membership: &[usize]) -> DMatrix<f64> {
        let big_n = membership.len();
        DMatrix::from_fn(big_n, big_n, |a, b| k_n[(membership[a], membership[b])])
    }

    /// Rows of `k_star` repeated per sample: `U K_n*`.
    pub fn expand_rows(k_star: &DMatrix<f64>, membership: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(membership.len(), k_star.ncols(), |a, j| k_star[(membership[a], j)])
    }

    #[derive(Debug, Clone)]
    pub struct DensePosterior {
        pub chol: Cholesky<f64, Dyn>,
        pub alpha: DVector<f64>,
        pub resid: DVector<f64>,
        pub noise: DVector<f64>,
    }

    /// Factorizes `K_N + R_N` for residuals `y - m`.
    pub fn posterior(k_full: &DMatrix<f64>, noise: &DVector<f64>, resid: &DVector<f64>, scale: f64) -> Result<DensePosterior> {
        let mut c = k_full.clone();
        for i in 0..c.nrows() {
            c[(i, i)] += noise[i];
        }
        let (chol, _) = factorize(&c, scale)?;
        let alpha = chol.solve(resid);
        Ok(DensePosterior {
            chol,
            alpha,
            resid: resid.clone(),
            noise: noise.clone(),
        })
    }

    impl DensePosterior {
        pub fn loglik(&self) -> f64 {
            let n = self.resid.len() as f64;
            -0.5 * self.resid.dot(&self.alpha) - 0.5 * log_det(&self.chol) - 0.5 * n * (2.0 * PI).ln()
        }

        /// `k_star` is `N × q`.
        pub fn predict(
            &self,
            k_star: &DMatrix<f64>,
            k_ss: PriorCov<'_>,
            r_star: &DVector<f64>,
            prior_mean: f64,
        ) -> (DVector<f64>, PredCov) {
            let cp = CompressedPosterior {
                chol: self.chol.clone(),
                alpha: self.alpha.clone(),
                jitter: 0.0,
            };
            cp.predict(k_star, k_ss, r_star, prior_mean)
        }
    }

    pub fn loglik(k_full: &DMatrix<f64>, noise: &DVector<f64>, resid: &DVector<f64>, scale: f64) -> Result<f64> {
        Ok(posterior(k_full, noise, resid, scale)?.loglik())
    }
}

/// One row of the replication benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub a: usize,
    pub big_n: usize,
    pub t_dense_ms: f64,
    pub t_compressed_ms: f64,
    pub speedup: f64,
    pub max_abs_diff: f64,
    pub t_dense_predict_ms: f64,
    pub t_compressed_predict_ms: f64,
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("n,a,N,t_dense_ms,t_compressed_ms,speedup,max_abs_diff\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.n, r.a, r.big_n, r.t_dense_ms, r.t_compressed_ms, r.speedup, r.max_abs_diff
        ));
    }
    s
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Times one likelihood evaluation (Gram assembly + factorization + solve)
/// and one prediction on a 100-point grid, dense against compressed, on the
/// damped-oscillation data with `n` unique inputs and `a` replicates each.
/// Repeats alternate between the two paths; the medians are reported.
/// Runs on a single thread.
pub fn bench_replication(
    n: usize,
    a_list: &[usize],
    kernel: &KernelSpec,
    noise: f64,
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| {
        a_list
            .iter()
            .map(|&a| bench_one(n, a, kernel, noise, repeats.max(1), seed))
            .collect()
    })
}

fn bench_one(n: usize, a: usize, kernel: &KernelSpec, noise: f64, repeats: usize, seed: u64) -> Result<BenchRow> {
    let set = crate::synthetic::gen_synthetic(&crate::synthetic::SyntheticSpec::damped(n, a, noise, seed))?;
    let (points, outputs) = set.samples();
    let (comp, raw) = crate::domain::build_compressed_indexed(&points, &outputs)?;
    let means: Vec<f64> = comp.means.iter().map(|m| m[0]).collect();
    let sq: Vec<f64> = comp.sq_dev.iter().map(|s| s[0]).collect();
    let ux: Vec<Vec<f64>> = comp.unique_points.iter().map(|p| vec![p.time()]).collect();
    let m = comp.global_mean(0);
    let resid = DVector::from_iterator(raw.outputs.len(), raw.outputs.iter().map(|y| y[0] - m));
    let queries: Vec<Vec<f64>> = (0..100).map(|k| vec![k as f64 / 99.0]).collect();
    let k_ss = kernel.prior_diag(&queries);
    let r_star = DVector::from_element(queries.len(), noise);

    let mut t_dense = Vec::with_capacity(repeats);
    let mut t_comp = Vec::with_capacity(repeats);
    let mut t_dense_pred = Vec::with_capacity(repeats);
    let mut t_comp_pred = Vec::with_capacity(repeats);
    let mut max_abs_diff: f64 = 0.0;
    for _ in 0..repeats {
        let start = Instant::now();
        let k_n = kernel.gram(&ux, DEFAULT_JITTER);
        let sys = CompressedSystem::assemble(
            k_n,
            DVector::from_element(comp.len(), noise),
            &comp.counts,
            &means,
            &sq,
            m,
            kernel.amplitude,
        )?;
        let post = sys.posterior()?;
        let ll_c = post.loglik(&sys);
        t_comp.push(start.elapsed().as_secs_f64() * 1e3);

        let start = Instant::now();
        let k_n = kernel.gram(&ux, DEFAULT_JITTER);
        let k_full = dense::expand(&k_n, &raw.membership);
        let dpost = dense::posterior(
            &k_full,
            &DVector::from_element(raw.membership.len(), noise),
            &resid,
            kernel.amplitude,
        )?;
        let ll_d = dpost.loglik();
        t_dense.push(start.elapsed().as_secs_f64() * 1e3);
        max_abs_diff = max_abs_diff.max((ll_c - ll_d).abs());

        let start = Instant::now();
        let ks = kernel.cross(&ux, &queries);
        let (mu_c, _) = post.predict(&ks, PriorCov::Diag(&k_ss), &r_star, m);
        t_comp_pred.push(start.elapsed().as_secs_f64() * 1e3);

        let start = Instant::now();
        let ks = dense::expand_rows(&kernel.cross(&ux, &queries), &raw.membership);
        let (mu_d, _) = dpost.predict(&ks, PriorCov::Diag(&k_ss), &r_star, m);
        t_dense_pred.push(start.elapsed().as_secs_f64() * 1e3);
        max_abs_diff = max_abs_diff.max((mu_c - mu_d).amax());
    }
    let td = median(&mut t_dense);
    let tc = median(&mut t_comp);
    Ok(BenchRow {
        n,
        a,
        big_n: n * a,
        t_dense_ms: td,
        t_compressed_ms: tc,
        speedup: td / tc,
        max_abs_diff,
        t_dense_predict_ms: median(&mut t_dense_pred),
        t_compressed_predict_ms: median(&mut t_comp_pred),
    })
}
