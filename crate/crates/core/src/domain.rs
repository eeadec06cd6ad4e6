//! Task variables, demonstrations and replication-aware sufficient statistics.
//!
//! A [`TaskSchema`] declares the input space: one real-valued time axis plus
//! any number of real, integer and categorical context dimensions. Every
//! demonstration sample becomes a [`TaskPoint`] in that space, and
//! [`build_compressed`] collapses exact replicates into a [`CompressedDataset`].

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result, Violation};

#[derive(Debug, Clone, PartialEq)]
pub enum DimDomain {
    /// Closed interval `[lo, hi]`.
    Real { lo: f64, hi: f64 },
    /// Inclusive range `lo..=hi`.
    Integer { lo: i64, hi: i64 },
    /// Unordered labels, optionally partitioned into groups.
    Categorical {
        labels: Vec<String>,
        groups: Option<Vec<Vec<String>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDim", into = "RawDim")]
pub struct DimSpec {
    pub name: String,
    pub domain: DimDomain,
}

impl DimSpec {
    pub fn real(name: &str, lo: f64, hi: f64) -> Self {
        DimSpec {
            name: name.to_string(),
            domain: DimDomain::Real { lo, hi },
        }
    }

    pub fn integer(name: &str, lo: i64, hi: i64) -> Self {
        DimSpec {
            name: name.to_string(),
            domain: DimDomain::Integer { lo, hi },
        }
    }

    pub fn categorical(name: &str, labels: &[&str]) -> Self {
        DimSpec {
            name: name.to_string(),
            domain: DimDomain::Categorical {
                labels: labels.iter().map(|s| s.to_string()).collect(),
                groups: None,
            },
        }
    }

    pub fn grouped(name: &str, groups: &[&[&str]]) -> Self {
        let groups: Vec<Vec<String>> = groups
            .iter()
            .map(|g| g.iter().map(|s| s.to_string()).collect())
            .collect();
        DimSpec {
            name: name.to_string(),
            domain: DimDomain::Categorical {
                labels: groups.iter().flatten().cloned().collect(),
                groups: Some(groups),
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.domain {
            DimDomain::Real { .. } => "real",
            DimDomain::Integer { .. } => "integer",
            DimDomain::Categorical { .. } => "categorical",
        }
    }

    /// Index of `label` in a categorical domain.
    pub fn category_index(&self, label: &str) -> Option<usize> {
        match &self.domain {
            DimDomain::Categorical { labels, .. } => labels.iter().position(|l| l == label),
            _ => None,
        }
    }

    /// Group number of every category, in label order. Ungrouped domains
    /// put every label in its own group.
    pub fn group_of(&self) -> Option<Vec<usize>> {
        let DimDomain::Categorical { labels, groups } = &self.domain else {
            return None;
        };
        Some(match groups {
            None => (0..labels.len()).collect(),
            Some(groups) => labels
                .iter()
                .map(|l| groups.iter().position(|g| g.contains(l)).unwrap_or(0))
                .collect(),
        })
    }

    fn check(&self) -> Result<()> {
        match &self.domain {
            DimDomain::Real { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::Schema(format!(
                        "dim `{}`: real interval [{lo}, {hi}] is empty or not finite",
                        self.name
                    )));
                }
            }
            DimDomain::Integer { lo, hi } => {
                if lo > hi {
                    return Err(Error::Schema(format!(
                        "dim `{}`: integer range {lo}..={hi} is empty",
                        self.name
                    )));
                }
            }
            DimDomain::Categorical { labels, groups } => {
                if labels.is_empty() {
                    return Err(Error::Schema(format!(
                        "dim `{}`: category list is empty",
                        self.name
                    )));
                }
                for (i, l) in labels.iter().enumerate() {
                    if labels[..i].contains(l) {
                        return Err(Error::Schema(format!(
                            "dim `{}`: duplicate category `{l}`",
                            self.name
                        )));
                    }
                }
                if let Some(groups) = groups {
                    let mut seen: Vec<&String> = groups.iter().flatten().collect();
                    if groups.iter().any(|g| g.is_empty()) || seen.len() != labels.len() {
                        return Err(Error::Schema(format!(
                            "dim `{}`: groups must partition the categories",
                            self.name
                        )));
                    }
                    seen.sort();
                    seen.dedup();
                    if seen.len() != labels.len() || labels.iter().any(|l| !seen.contains(&l)) {
                        return Err(Error::Schema(format!(
                            "dim `{}`: groups must partition the categories",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RawDim {
    name: String,
    kind: String,
    domain: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    groups: Option<Vec<Vec<String>>>,
}

impl TryFrom<RawDim> for DimSpec {
    type Error = String;

    fn try_from(raw: RawDim) -> std::result::Result<Self, String> {
        let bad = || format!("dim `{}`: malformed {} domain", raw.name, raw.kind);
        let domain = match raw.kind.as_str() {
            "real" => {
                let v: [f64; 2] = serde_json::from_value(raw.domain.clone()).map_err(|_| bad())?;
                DimDomain::Real { lo: v[0], hi: v[1] }
            }
            "integer" => {
                let v: [i64; 2] = serde_json::from_value(raw.domain.clone()).map_err(|_| bad())?;
                DimDomain::Integer { lo: v[0], hi: v[1] }
            }
            "categorical" => {
                let labels: Vec<String> =
                    serde_json::from_value(raw.domain.clone()).map_err(|_| bad())?;
                DimDomain::Categorical {
                    labels,
                    groups: raw.groups.clone(),
                }
            }
            other => return Err(format!("dim `{}`: unknown kind `{other}`", raw.name)),
        };
        let dim = DimSpec {
            name: raw.name,
            domain,
        };
        dim.check().map_err(|e| e.to_string())?;
        Ok(dim)
    }
}

impl From<DimSpec> for RawDim {
    fn from(d: DimSpec) -> Self {
        let kind = d.kind().to_string();
        let (domain, groups) = match d.domain {
            DimDomain::Real { lo, hi } => (serde_json::json!([lo, hi]), None),
            DimDomain::Integer { lo, hi } => (serde_json::json!([lo, hi]), None),
            DimDomain::Categorical { labels, groups } => (serde_json::json!(labels), groups),
        };
        RawDim {
            name: d.name,
            kind,
            domain,
            groups,
        }
    }
}

/// Ordered input dimensions. The first dimension is the time/phase axis and
/// must be real-valued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct TaskSchema {
    pub dims: Vec<DimSpec>,
}

#[derive(Deserialize)]
struct RawSchema {
    dims: Vec<DimSpec>,
}

impl TryFrom<RawSchema> for TaskSchema {
    type Error = String;

    fn try_from(raw: RawSchema) -> std::result::Result<Self, String> {
        TaskSchema::new(raw.dims).map_err(|e| e.to_string())
    }
}

impl TaskSchema {
    pub fn new(dims: Vec<DimSpec>) -> Result<Self> {
        let Some(first) = dims.first() else {
            return Err(Error::Schema("schema needs at least one dim".into()));
        };
        if !matches!(first.domain, DimDomain::Real { .. }) {
            return Err(Error::Schema(format!(
                "time axis `{}` must be real-valued",
                first.name
            )));
        }
        for (i, d) in dims.iter().enumerate() {
            d.check()?;
            if dims[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::Schema(format!("duplicate dim name `{}`", d.name)));
            }
        }
        Ok(TaskSchema { dims })
    }

    /// Schema with only a time axis on `[lo, hi]`.
    pub fn time_only(lo: f64, hi: f64) -> Self {
        TaskSchema {
            dims: vec![DimSpec::real("t", lo, hi)],
        }
    }

    pub fn time_dim(&self) -> &DimSpec {
        &self.dims[0]
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    /// Numeric encoding used by the kernels: reals and integers as-is,
    /// categories as their label index.
    pub fn encode(&self, p: &TaskPoint) -> Result<Vec<f64>> {
        validate_point(self, p).map_err(Error::InvalidPoint)?;
        Ok(p
            .coords
            .iter()
            .zip(&self.dims)
            .map(|(c, d)| match c {
                Coord::Real(x) => *x,
                Coord::Int(s) => *s as f64,
                Coord::Cat(l) => d.category_index(l).unwrap_or(0) as f64,
            })
            .collect())
    }

    pub fn encode_all(&self, ps: &[TaskPoint]) -> Result<Vec<Vec<f64>>> {
        ps.iter().map(|p| self.encode(p)).collect()
    }

    /// Interprets a JSON scalar as a coordinate of dim `idx`.
    pub fn coord_from_json(&self, idx: usize, v: &Value) -> Result<Coord> {
        let dim = &self.dims[idx];
        let bad = || Error::Schema(format!("dim `{}`: cannot read value {v}", dim.name));
        Ok(match dim.domain {
            DimDomain::Real { .. } => Coord::Real(v.as_f64().ok_or_else(bad)?),
            DimDomain::Integer { .. } => Coord::Int(v.as_i64().ok_or_else(bad)?),
            DimDomain::Categorical { .. } => Coord::Cat(v.as_str().ok_or_else(bad)?.to_string()),
        })
    }

    /// Parses a coordinate from text (`0.5`, `3`, `A`).
    pub fn coord_from_str(&self, idx: usize, s: &str) -> Result<Coord> {
        let dim = &self.dims[idx];
        let bad = || Error::Schema(format!("dim `{}`: cannot parse `{s}`", dim.name));
        Ok(match dim.domain {
            DimDomain::Real { .. } => Coord::Real(s.trim().parse().map_err(|_| bad())?),
            DimDomain::Integer { .. } => Coord::Int(s.trim().parse().map_err(|_| bad())?),
            DimDomain::Categorical { .. } => Coord::Cat(s.trim().to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coord {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl Coord {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Coord::Real(x) => Some(*x),
            _ => None,
        }
    }
}

impl std::fmt::Display for Coord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coord::Real(x) => write!(f, "{x}"),
            Coord::Int(s) => write!(f, "{s}"),
            Coord::Cat(l) => f.write_str(l),
        }
    }
}

/// A location in the task-variable space, one coordinate per schema dim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPoint {
    pub coords: Vec<Coord>,
}

impl TaskPoint {
    pub fn new(coords: Vec<Coord>) -> Self {
        TaskPoint { coords }
    }

    pub fn time(&self) -> f64 {
        self.coords[0].as_real().unwrap_or(f64::NAN)
    }

    fn key(&self) -> Vec<CoordKey> {
        self.coords
            .iter()
            .map(|c| match c {
                // +0.0 and -0.0 compare equal, so they must hash equal
                Coord::Real(x) => CoordKey::Real(if *x == 0.0 { 0 } else { x.to_bits() }),
                Coord::Int(s) => CoordKey::Int(*s),
                Coord::Cat(l) => CoordKey::Cat(l.clone()),
            })
            .collect()
    }
}

#[derive(Hash, PartialEq, Eq)]
enum CoordKey {
    Real(u64),
    Int(i64),
    Cat(String),
}

/// Reports every coordinate of `p` that falls outside its declared domain.
pub fn validate_point(schema: &TaskSchema, p: &TaskPoint) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if p.coords.len() != schema.dims.len() {
        out.push(Violation {
            dim: "*".into(),
            reason: format!(
                "point has {} coordinates, schema has {} dims",
                p.coords.len(),
                schema.dims.len()
            ),
        });
        return Err(out);
    }
    for (c, d) in p.coords.iter().zip(&schema.dims) {
        let reason = match (&d.domain, c) {
            (DimDomain::Real { lo, hi }, Coord::Real(x)) => {
                (!(x >= lo && x <= hi)).then(|| format!("{x} outside [{lo}, {hi}]"))
            }
            (DimDomain::Integer { lo, hi }, Coord::Int(s)) => {
                (s < lo || s > hi).then(|| format!("{s} outside {lo}..={hi}"))
            }
            (DimDomain::Categorical { labels, .. }, Coord::Cat(l)) => {
                (!labels.contains(l)).then(|| format!("unknown category `{l}`"))
            }
            (_, c) => Some(format!("value {c} has the wrong kind for a {} dim", d.kind())),
        };
        if let Some(reason) = reason {
            out.push(Violation {
                dim: d.name.clone(),
                reason,
            });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// One recorded trajectory under a fixed context.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub id: String,
    /// Non-time coordinates keyed by dim name.
    pub context: BTreeMap<String, Coord>,
    pub times: Vec<f64>,
    pub outputs: Vec<Vec<f64>>,
}

impl Demonstration {
    pub fn new(
        id: impl Into<String>,
        context: BTreeMap<String, Coord>,
        times: Vec<f64>,
        outputs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        if times.len() != outputs.len() {
            return Err(Error::Schema(format!(
                "demonstration `{id}`: {} timestamps but {} outputs",
                times.len(),
                outputs.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::Schema(format!(
                "demonstration `{id}`: needs at least 2 samples"
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Schema(format!(
                "demonstration `{id}`: timestamps must be strictly increasing"
            )));
        }
        let dim = outputs[0].len();
        if dim == 0 || outputs.iter().any(|y| y.len() != dim) {
            return Err(Error::Schema(format!(
                "demonstration `{id}`: outputs must share one nonzero dimension"
            )));
        }
        Ok(Demonstration {
            id,
            context,
            times,
            outputs,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs[0].len()
    }

    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationSet {
    pub schema: TaskSchema,
    pub demos: Vec<Demonstration>,
}

impl DemonstrationSet {
    pub fn new(schema: TaskSchema, demos: Vec<Demonstration>) -> Result<Self> {
        if let Some(first) = demos.first() {
            let dim = first.output_dim();
            for d in &demos {
                if d.output_dim() != dim {
                    return Err(Error::Schema(format!(
                        "demonstration `{}` has {} outputs, expected {dim}",
                        d.id,
                        d.output_dim()
                    )));
                }
                for name in d.context.keys() {
                    match schema.dim_index(name) {
                        Some(i) if i > 0 => {}
                        _ => {
                            return Err(Error::Schema(format!(
                                "demonstration `{}`: context key `{name}` is not a context dim",
                                d.id
                            )))
                        }
                    }
                }
                if d.context.len() + 1 != schema.len() {
                    return Err(Error::Schema(format!(
                        "demonstration `{}`: context must set every non-time dim",
                        d.id
                    )));
                }
                // context only; timestamps may exceed the time domain before rescaling
                let t0 = match schema.time_dim().domain {
                    DimDomain::Real { lo, .. } => lo,
                    _ => unreachable!("time axis is real"),
                };
                validate_point(&schema, &point_of(&schema, d, t0)).map_err(Error::InvalidPoint)?;
            }
        }
        Ok(DemonstrationSet { schema, demos })
    }

    pub fn output_dim(&self) -> usize {
        self.demos.first().map_or(0, |d| d.output_dim())
    }

    pub fn total_samples(&self) -> usize {
        self.demos.iter().map(|d| d.len()).sum()
    }

    pub fn get(&self, id: &str) -> Option<&Demonstration> {
        self.demos.iter().find(|d| d.id == id)
    }

    /// Flattens every sample into `(point, output)` pairs, demonstration by
    /// demonstration.
    pub fn samples(&self) -> (Vec<TaskPoint>, Vec<Vec<f64>>) {
        let mut points = Vec::with_capacity(self.total_samples());
        let mut outputs = Vec::with_capacity(self.total_samples());
        for d in &self.demos {
            for (t, y) in d.times.iter().zip(&d.outputs) {
                points.push(point_of(&self.schema, d, *t));
                outputs.push(y.clone());
            }
        }
        (points, outputs)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: DemoFile = serde_json::from_str(s)?;
        file.into_set()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&DemoFile::from_set(self))?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()? + "\n").map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn point_of(schema: &TaskSchema, d: &Demonstration, t: f64) -> TaskPoint {
    let mut coords = Vec::with_capacity(schema.len());
    coords.push(Coord::Real(t));
    for dim in &schema.dims[1..] {
        coords.push(d.context.get(&dim.name).cloned().unwrap_or(Coord::Real(f64::NAN)));
    }
    TaskPoint { coords }
}

#[derive(Serialize, Deserialize)]
struct DemoFile {
    schema: TaskSchema,
    demonstrations: Vec<RawDemo>,
}

#[derive(Serialize, Deserialize)]
struct RawDemo {
    id: String,
    #[serde(default)]
    context: BTreeMap<String, Value>,
    samples: Vec<Vec<f64>>,
}

impl DemoFile {
    fn into_set(self) -> Result<DemonstrationSet> {
        let schema = self.schema;
        let mut demos = Vec::with_capacity(self.demonstrations.len());
        for raw in self.demonstrations {
            let mut context = BTreeMap::new();
            for (name, v) in &raw.context {
                let idx = schema.dim_index(name).ok_or_else(|| {
                    Error::Schema(format!("demonstration `{}`: unknown dim `{name}`", raw.id))
                })?;
                context.insert(name.clone(), schema.coord_from_json(idx, v)?);
            }
            let mut times = Vec::with_capacity(raw.samples.len());
            let mut outputs = Vec::with_capacity(raw.samples.len());
            for row in raw.samples {
                if row.len() < 2 {
                    return Err(Error::Schema(format!(
                        "demonstration `{}`: sample rows need a time and at least one output",
                        raw.id
                    )));
                }
                times.push(row[0]);
                outputs.push(row[1..].to_vec());
            }
            demos.push(Demonstration::new(raw.id, context, times, outputs)?);
        }
        DemonstrationSet::new(schema, demos)
    }

    fn from_set(set: &DemonstrationSet) -> Self {
        let demonstrations = set
            .demos
            .iter()
            .map(|d| RawDemo {
                id: d.id.clone(),
                context: d
                    .context
                    .iter()
                    .map(|(k, c)| {
                        let v = match c {
                            Coord::Real(x) => serde_json::json!(x),
                            Coord::Int(s) => serde_json::json!(s),
                            Coord::Cat(l) => serde_json::json!(l),
                        };
                        (k.clone(), v)
                    })
                    .collect(),
                samples: d
                    .times
                    .iter()
                    .zip(&d.outputs)
                    .map(|(t, y)| std::iter::once(*t).chain(y.iter().copied()).collect())
                    .collect(),
            })
            .collect();
        DemoFile {
            schema: set.schema.clone(),
            demonstrations,
        }
    }
}

/// Replicate counts and per-location sufficient statistics.
///
/// `means[i][o]` and `sq_dev[i][o]` hold the mean and the summed squared
/// deviation of output `o` over the `counts[i]` samples observed at
/// `unique_points[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedDataset {
    pub unique_points: Vec<TaskPoint>,
    pub counts: Vec<usize>,
    pub means: Vec<Vec<f64>>,
    pub sq_dev: Vec<Vec<f64>>,
    pub total_count: usize,
}

impl CompressedDataset {
    pub fn len(&self) -> usize {
        self.unique_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unique_points.is_empty()
    }

    pub fn output_dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    /// Single-output view of column `o`.
    pub fn column(&self, o: usize) -> CompressedDataset {
        CompressedDataset {
            unique_points: self.unique_points.clone(),
            counts: self.counts.clone(),
            means: self.means.iter().map(|m| vec![m[o]]).collect(),
            sq_dev: self.sq_dev.iter().map(|s| vec![s[o]]).collect(),
            total_count: self.total_count,
        }
    }

    /// Count-weighted mean of output `o` over all N samples.
    pub fn global_mean(&self, o: usize) -> f64 {
        let s: f64 = self
            .means
            .iter()
            .zip(&self.counts)
            .map(|(m, &a)| a as f64 * m[o])
            .sum();
        s / self.total_count as f64
    }
}

/// Raw samples kept alongside a compressed dataset; `membership[k]` is the
/// unique-location index of sample `k` (the row structure of the N×n
/// replication map).
#[derive(Debug, Clone, PartialEq)]
pub struct RawSamples {
    pub membership: Vec<usize>,
    pub outputs: Vec<Vec<f64>>,
}

/// Groups samples by exact coordinate equality, in first-appearance order.
pub fn build_compressed(points: &[TaskPoint], outputs: &[Vec<f64>]) -> Result<CompressedDataset> {
    build_compressed_indexed(points, outputs).map(|(c, _)| c)
}

/// [`build_compressed`] that also returns the raw samples with their
/// unique-location membership.
pub fn build_compressed_indexed(
    points: &[TaskPoint],
    outputs: &[Vec<f64>],
) -> Result<(CompressedDataset, RawSamples)> {
    if points.is_empty() || points.len() != outputs.len() {
        return Err(Error::Schema(format!(
            "need matching nonempty points and outputs, got {} and {}",
            points.len(),
            outputs.len()
        )));
    }
    let dim = outputs[0].len();
    if dim == 0 || outputs.iter().any(|y| y.len() != dim) {
        return Err(Error::Schema("output vectors differ in dimension".into()));
    }

    let mut index: HashMap<Vec<CoordKey>, usize> = HashMap::new();
    let mut unique_points = Vec::new();
    let mut membership = Vec::with_capacity(points.len());
    for p in points {
        let next = unique_points.len();
        let i = *index.entry(p.key()).or_insert(next);
        if i == next {
            unique_points.push(p.clone());
        }
        membership.push(i);
    }

    let n = unique_points.len();
    let mut counts = vec![0usize; n];
    let mut sums = vec![vec![0.0; dim]; n];
    for (&i, y) in membership.iter().zip(outputs) {
        counts[i] += 1;
        for (s, v) in sums[i].iter_mut().zip(y) {
            *s += v;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &a)| s.iter().map(|v| v / a as f64).collect())
        .collect();
    let mut sq_dev = vec![vec![0.0; dim]; n];
    for (&i, y) in membership.iter().zip(outputs) {
        for o in 0..dim {
            let d = y[o] - means[i][o];
            sq_dev[i][o] += d * d;
        }
    }

    Ok((
        CompressedDataset {
            unique_points,
            counts,
            means,
            sq_dev,
            total_count: points.len(),
        },
        RawSamples {
            membership,
            outputs: outputs.to_vec(),
        },
    ))
}
