//! Instance files, point-set generators and result documents.
//!
//! Instances are JSON (`{"name": …, "points": [[x, y, z], …]}`) or CSV with
//! one `x,y,z` row per point. Coordinates are written with 17 significant
//! digits so a save/load round trip is bit-exact.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::geometry::{check_points, GeometryError, Point3, Vec3};
use crate::solver::DipoleResult;

#[derive(Error, Debug)]
pub enum IoError {
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{}: {message}", path.display())]
    Validation { path: PathBuf, message: String },
    #[error("cannot tell the format of {}; pass it explicitly", .0.display())]
    UnknownFormat(PathBuf),
    #[error("cannot serialize: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl IoError {
    /// Malformed or invalid input, as opposed to an environment failure.
    pub fn is_input_error(&self) -> bool {
        matches!(self, IoError::Parse { .. } | IoError::Validation { .. } | IoError::UnknownFormat(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "json" => Some(Format::Json),
            "csv" | "txt" => Some(Format::Csv),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: String,
    pub points: Vec<Point3>,
    pub seed: Option<u64>,
}

#[derive(Deserialize)]
struct InstanceFile {
    #[serde(default)]
    name: Option<String>,
    points: Vec<[f64; 3]>,
    #[serde(default)]
    seed: Option<u64>,
}

/// Parses and validates an instance. `format = None` infers it from the
/// extension.
pub fn load_instance(path: &Path, format: Option<Format>, eps: f64) -> Result<Instance, IoError> {
    let format = format.or_else(|| Format::from_path(path)).ok_or_else(|| IoError::UnknownFormat(path.into()))?;
    let text = fs::read_to_string(path).map_err(|source| IoError::Io { path: path.into(), source })?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
    let inst = parse_instance(&text, format, stem).map_err(|e| e.at(path))?;
    validate(&inst, eps).map_err(|message| IoError::Validation { path: path.into(), message })?;
    Ok(inst)
}

/// Position-tagged parse failure, before a path is attached.
#[derive(Debug)]
pub struct ParseFailure {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseFailure {
    fn at(self, path: &Path) -> IoError {
        IoError::Parse { path: path.into(), line: self.line, column: self.column, message: self.message }
    }
}

pub fn parse_instance(text: &str, format: Format, default_name: &str) -> Result<Instance, ParseFailure> {
    match format {
        Format::Json => {
            let f: InstanceFile = serde_json::from_str(text).map_err(|e| ParseFailure {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
            Ok(Instance {
                name: f.name.unwrap_or_else(|| default_name.to_string()),
                points: f.points.into_iter().map(Vec3::from).collect(),
                seed: f.seed,
            })
        }
        Format::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .trim(csv::Trim::All)
                .comment(Some(b'#'))
                .from_reader(text.as_bytes());
            let mut points = Vec::new();
            for row in rdr.deserialize::<[f64; 3]>() {
                let row = row.map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line() as usize);
                    ParseFailure { line, column: 1, message: e.to_string() }
                })?;
                points.push(Vec3::from(row));
            }
            Ok(Instance { name: default_name.to_string(), points, seed: None })
        }
    }
}

fn validate(inst: &Instance, eps: f64) -> Result<(), String> {
    if inst.points.len() < 2 {
        return Err(format!("need at least two points, got {}", inst.points.len()));
    }
    check_points(&inst.points, eps).map_err(|e| match e {
        GeometryError::DuplicatePoints { first, second } => {
            format!("duplicate point: points {first} and {second} coincide")
        }
        GeometryError::NonFinite { index } => format!("point {index} has a non-finite coordinate"),
        other => other.to_string(),
    })
}

/// A float written with 17 significant digits.
fn fixed(x: f64) -> Box<RawValue> {
    let s = if x.is_finite() { format!("{x:.16e}") } else { "null".to_string() };
    RawValue::from_string(s).expect("formatted float is valid JSON")
}

fn fixed_point(p: &Point3) -> [Box<RawValue>; 3] {
    [fixed(p.x), fixed(p.y), fixed(p.z)]
}

#[derive(Serialize)]
struct InstanceOut<'a> {
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    points: Vec<[Box<RawValue>; 3]>,
}

pub fn instance_to_string(inst: &Instance, format: Format) -> Result<String, IoError> {
    Ok(match format {
        Format::Json => {
            let out = InstanceOut {
                name: &inst.name,
                seed: inst.seed,
                points: inst.points.iter().map(fixed_point).collect(),
            };
            let mut s = serde_json::to_string(&out)?;
            s.push('\n');
            s
        }
        Format::Csv => inst.points.iter().map(|p| format!("{:.16e},{:.16e},{:.16e}\n", p.x, p.y, p.z)).collect(),
    })
}

pub fn save_instance(inst: &Instance, path: &Path, format: Option<Format>) -> Result<(), IoError> {
    let format = format.or_else(|| Format::from_path(path)).ok_or_else(|| IoError::UnknownFormat(path.into()))?;
    write_text(path, &instance_to_string(inst, format)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io { path: path.into(), source })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointDistribution {
    /// Uniform in the unit cube.
    Cube,
    /// Uniform on the unit sphere.
    Sphere,
    /// Two Gaussian blobs.
    Clusters,
    /// `(i, 0, 0)` for `i = 0..n`.
    Collinear,
}

impl PointDistribution {
    pub const ALL: [PointDistribution; 4] =
        [PointDistribution::Cube, PointDistribution::Sphere, PointDistribution::Clusters, PointDistribution::Collinear];

    pub fn as_str(self) -> &'static str {
        match self {
            PointDistribution::Cube => "cube",
            PointDistribution::Sphere => "sphere",
            PointDistribution::Clusters => "clusters",
            PointDistribution::Collinear => "collinear",
        }
    }
}

impl fmt::Display for PointDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PointDistribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PointDistribution::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown distribution {s:?}"))
    }
}

/// Deterministic for a fixed `(n, dist, seed)`.
pub fn generate(n: usize, dist: PointDistribution, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = match dist {
        PointDistribution::Cube => {
            (0..n).map(|_| Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>())).collect()
        }
        PointDistribution::Sphere => (0..n).map(|_| Vec3::from(UnitSphere.sample(&mut rng))).collect(),
        PointDistribution::Clusters => {
            let spread = Normal::new(0.0, 0.1).expect("valid deviation");
            let centers = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.5, 0.25)];
            (0..n)
                .map(|i| {
                    let c = centers[i % 2];
                    c + Vec3::new(spread.sample(&mut rng), spread.sample(&mut rng), spread.sample(&mut rng))
                })
                .collect()
        }
        PointDistribution::Collinear => (0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect(),
    };
    Instance { name: format!("{dist}-{n}-{seed}"), points, seed: Some(seed) }
}

/// Which objective a result document reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Msst,
    TwoCenter,
}

/// Result document for one objective. Everything outside the `timing`
/// section depends only on the input and flags.
#[derive(Serialize)]
pub struct ResultDocument<'a> {
    objective: Objective,
    instance: &'a str,
    n: usize,
    poles: [usize; 2],
    msst_cost: Box<RawValue>,
    two_center_cost: Box<RawValue>,
    r_x: Box<RawValue>,
    r_y: Box<RawValue>,
    edges: &'a [[usize; 2]],
    mode: &'a str,
    eps: Box<RawValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timing: Option<Timing>,
}

#[derive(Serialize)]
struct Timing {
    wall_ms: f64,
}

impl Timing {
    fn new(wall: Option<Duration>) -> Option<Timing> {
        wall.map(|w| Timing { wall_ms: w.as_secs_f64() * 1e3 })
    }
}

impl<'a> ResultDocument<'a> {
    pub fn new(inst: &'a Instance, r: &'a DipoleResult, objective: Objective, mode: &'a str, eps: f64) -> Self {
        ResultDocument {
            objective,
            instance: &inst.name,
            n: inst.points.len(),
            poles: [r.pole_x, r.pole_y],
            msst_cost: fixed(r.msst_cost),
            two_center_cost: fixed(r.two_center_cost),
            r_x: fixed(r.r_x),
            r_y: fixed(r.r_y),
            edges: &r.edges,
            mode,
            eps: fixed(eps),
            timing: None,
        }
    }

    pub fn with_wall_time(mut self, wall: Option<Duration>) -> Self {
        self.timing = Timing::new(wall);
        self
    }
}

#[derive(Serialize)]
struct OracleDocument<'a> {
    msst: ResultDocument<'a>,
    two_center: ResultDocument<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timing: Option<Timing>,
}

fn pretty<T: Serialize>(doc: &T) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

pub fn result_to_string(
    inst: &Instance,
    r: &DipoleResult,
    objective: Objective,
    mode: &str,
    eps: f64,
    wall: Option<Duration>,
) -> Result<String, IoError> {
    pretty(&ResultDocument::new(inst, r, objective, mode, eps).with_wall_time(wall))
}

/// Both objectives side by side, as computed by the brute-force oracles.
pub fn oracle_to_string(
    inst: &Instance,
    msst: &DipoleResult,
    two_center: &DipoleResult,
    eps: f64,
    wall: Option<Duration>,
) -> Result<String, IoError> {
    pretty(&OracleDocument {
        msst: ResultDocument::new(inst, msst, Objective::Msst, "bruteforce", eps),
        two_center: ResultDocument::new(inst, two_center, Objective::TwoCenter, "bruteforce", eps),
        timing: Timing::new(wall),
    })
}
