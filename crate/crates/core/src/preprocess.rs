//! Temporal alignment of demonstrations.
//!
//! Each demonstration is reduced to its task completion index (normalized
//! cumulative arc length), aligned against a reference by DTW on that index,
//! and resampled onto a shared uniform time grid. Demonstrations recorded
//! under the same context then become exact replicates at every grid time.

use rayon::prelude::*;

use crate::domain::{Demonstration, DemonstrationSet};
use crate::error::{Error, Result};

/// Grid size used when none is given.
pub const DEFAULT_GRID: usize = 25;

/// Normalized cumulative path length, `0` at the first sample and exactly
/// `1` at the last.
pub fn compute_tci(d: &Demonstration) -> Result<Vec<f64>> {
    let mut cum = Vec::with_capacity(d.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in d.outputs.windows(2) {
        let seg: f64 = w[1]
            .iter()
            .zip(&w[0])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        acc += seg;
        cum.push(acc);
    }
    if !(acc > 0.0) || !acc.is_finite() {
        return Err(Error::DegenerateTrajectory(d.id.clone()));
    }
    let n = cum.len();
    for z in &mut cum {
        *z /= acc;
    }
    cum[n - 1] = 1.0;
    Ok(cum)
}

/// Optimal warping path between two scalar sequences under the symmetric
/// step set `{(1,0), (0,1), (1,1)}` with absolute-difference local cost.
/// Returns the path from `(0, 0)` to `(a.len()-1, b.len()-1)` and its cost.
pub fn dtw(a: &[f64], b: &[f64]) -> (Vec<(usize, usize)>, f64) {
    let (n, m) = (a.len(), b.len());
    assert!(n > 0 && m > 0, "dtw on empty sequence");
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let local = (a[i] - b[j]).abs();
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[at(i - 1, j - 1)] } else { f64::INFINITY };
                let up = if i > 0 { acc[at(i - 1, j)] } else { f64::INFINITY };
                let left = if j > 0 { acc[at(i, j - 1)] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[at(i, j)] = local + best;
        }
    }

    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        // ties prefer the diagonal
        let step = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[at(i - 1, j - 1)];
            let up = acc[at(i - 1, j)];
            let left = acc[at(i, j - 1)];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        (i, j) = step;
        path.push(step);
    }
    path.reverse();
    (path, acc[at(n - 1, m - 1)])
}

/// Summed local cost of an arbitrary path.
pub fn path_cost(a: &[f64], b: &[f64], path: &[(usize, usize)]) -> f64 {
    path.iter().map(|&(i, j)| (a[i] - b[j]).abs()).sum()
}

/// `m` uniformly spaced timestamps on `[0, end]`, with both endpoints exact.
pub fn uniform_grid(end: f64, m: usize) -> Vec<f64> {
    assert!(m >= 2, "grid needs at least two points");
    let mut g: Vec<f64> = (0..m).map(|k| end * k as f64 / (m - 1) as f64).collect();
    g[m - 1] = end;
    g
}

/// Piecewise-linear interpolation of `outputs` (sampled at increasing
/// `times`) at each query time. Queries outside the sampled span are clamped
/// to the end values; queries hitting a knot return it exactly.
pub fn interpolate(times: &[f64], outputs: &[Vec<f64>], queries: &[f64]) -> Vec<Vec<f64>> {
    let last = times.len() - 1;
    queries
        .iter()
        .map(|&q| {
            if q <= times[0] {
                return outputs[0].clone();
            }
            if q >= times[last] {
                return outputs[last].clone();
            }
            // first knot strictly greater than q
            let hi = times.partition_point(|&t| t <= q);
            let lo = hi - 1;
            if times[lo] == q {
                return outputs[lo].clone();
            }
            let w = (q - times[lo]) / (times[hi] - times[lo]);
            outputs[lo]
                .iter()
                .zip(&outputs[hi])
                .map(|(a, b)| a + w * (b - a))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// Demonstration with the median sample count.
    Auto,
    Id(String),
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub reference_id: String,
    /// One warping path per demonstration, as `(reference index, demo index)`.
    pub paths: Vec<Vec<(usize, usize)>>,
    pub costs: Vec<f64>,
    /// Every demonstration on the same uniform grid over `[0, t_R]`.
    pub aligned: DemonstrationSet,
}

impl AlignmentResult {
    /// Warping paths as CSV with a header row.
    pub fn paths_csv(&self) -> String {
        let mut out = String::from("demo_id,ref_index,demo_index\n");
        for (d, path) in self.aligned.demos.iter().zip(&self.paths) {
            for (r, i) in path {
                out.push_str(&format!("{},{r},{i}\n", d.id));
            }
        }
        out
    }
}

fn pick_reference(set: &DemonstrationSet, reference: &Reference) -> Result<usize> {
    match reference {
        Reference::Id(id) => set
            .demos
            .iter()
            .position(|d| &d.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("no demonstration with id `{id}`"))),
        Reference::Auto => {
            let mut order: Vec<usize> = (0..set.demos.len()).collect();
            order.sort_by_key(|&i| (set.demos[i].len(), i));
            Ok(order[(order.len() - 1) / 2])
        }
    }
}

/// Aligns every demonstration to a reference on the completion index and
/// resamples onto `grid` uniform timestamps over the reference duration.
pub fn dtw_align(set: &DemonstrationSet, reference: &Reference, grid: usize) -> Result<AlignmentResult> {
    if set.demos.is_empty() {
        return Err(Error::InvalidArgument("no demonstrations to align".into()));
    }
    if grid < 2 {
        return Err(Error::InvalidArgument("grid needs at least two points".into()));
    }
    let r = pick_reference(set, reference)?;
    let reference = &set.demos[r];
    let ref_tci = compute_tci(reference)?;
    let t0 = reference.times[0];
    let ref_times: Vec<f64> = reference.times.iter().map(|t| t - t0).collect();
    let t_r = ref_times[ref_times.len() - 1];
    let grid_times = uniform_grid(t_r, grid);

    let per_demo: Vec<Result<(Vec<(usize, usize)>, f64, Demonstration)>> = set
        .demos
        .par_iter()
        .map(|d| {
            let tci = compute_tci(d)?;
            let (path, cost) = dtw(&ref_tci, &tci);
            // for each reference index keep the matched sample closest in completion
            let mut best: Vec<Option<(f64, usize)>> = vec![None; ref_tci.len()];
            for &(k, l) in &path {
                let c = (ref_tci[k] - tci[l]).abs();
                match best[k] {
                    Some((bc, _)) if bc <= c => {}
                    _ => best[k] = Some((c, l)),
                }
            }
            let warped: Vec<Vec<f64>> = best
                .iter()
                .map(|b| d.outputs[b.expect("path covers every reference index").1].clone())
                .collect();
            let outputs = interpolate(&ref_times, &warped, &grid_times);
            let demo = Demonstration {
                id: d.id.clone(),
                context: d.context.clone(),
                times: grid_times.clone(),
                outputs,
            };
            Ok((path, cost, demo))
        })
        .collect();

    let mut paths = Vec::with_capacity(set.demos.len());
    let mut costs = Vec::with_capacity(set.demos.len());
    let mut demos = Vec::with_capacity(set.demos.len());
    for item in per_demo {
        let (p, c, d) = item?;
        paths.push(p);
        costs.push(c);
        demos.push(d);
    }
    Ok(AlignmentResult {
        reference_id: reference.id.clone(),
        paths,
        costs,
        aligned: DemonstrationSet {
            schema: set.schema.clone(),
            demos,
        },
    })
}

/// Linear time law `s(t) = t · t_D / t_R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeScaler {
    pub t_r: f64,
    pub t_d: f64,
}

impl TimeScaler {
    pub fn new(t_r: f64, t_d: f64) -> Result<Self> {
        if !(t_r > 0.0) || !(t_d > 0.0) || !t_r.is_finite() || !t_d.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "durations must be positive, got t_R = {t_r}, t_D = {t_d}"
            )));
        }
        Ok(TimeScaler { t_r, t_d })
    }

    pub fn apply(&self, elapsed: f64) -> f64 {
        elapsed * (self.t_d / self.t_r)
    }
}

/// Remaps timestamps (relative to the first sample) to the desired
/// duration. Outputs are untouched.
pub fn time_scale(d: &Demonstration, scaler: &TimeScaler) -> Result<Demonstration> {
    let scaler = TimeScaler::new(scaler.t_r, scaler.t_d)?;
    if (d.duration() - scaler.t_r).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "demonstration `{}` lasts {} s, scaler expects {}",
            d.id,
            d.duration(),
            scaler.t_r
        )));
    }
    let t0 = d.times[0];
    let mut out = d.clone();
    for t in &mut out.times {
        *t = t0 + scaler.apply(*t - t0);
    }
    Ok(out)
}

/// Rescales every demonstration of an aligned set to `duration` and snaps
/// the timestamps onto one shared grid.
pub fn rescale_set(set: &DemonstrationSet, duration: f64) -> Result<DemonstrationSet> {
    let mut demos = Vec::with_capacity(set.demos.len());
    for d in &set.demos {
        let scaled = time_scale(d, &TimeScaler::new(d.duration(), duration)?)?;
        demos.push(scaled);
    }
    if let Some(first) = demos.first() {
        let grid = uniform_grid(duration, first.len());
        for d in &mut demos {
            if d.len() == grid.len() && d.times[0] == 0.0 {
                d.times = grid.clone();
            }
        }
    }
    Ok(DemonstrationSet {
        schema: set.schema.clone(),
        demos,
    })
}
