//! Farthest-point matrix, minimum-sum dipolar spanning tree and discrete
//! 2-center.
//!
//! For poles `p ≠ q`, `f_pq` is the point farthest from `p` among those on
//! `p`'s (closed) side of the bisector of `p` and `q`. A point `x` qualifies
//! iff `q ∉ Σ(x, p)`, so `f_pq` is the first ball in `p`'s sorted order that
//! excludes `q`. One exclusion tree per pole fills a row of the matrix; every
//! dipole cost then takes constant time.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exclusion_tree::{ExclusionTree, QueryStats, TreeError, DEFAULT_SCAN_LIMIT};
use crate::geometry::{check_points, dist, strictly_inside_ball, Ball, GeometryError, Point3, DEFAULT_EPS};

#[derive(Error, Debug)]
pub enum SolveError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// How the farthest matrix is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One exclusion tree per pole.
    Tree,
    /// Direct scan per entry, cubic overall.
    Bruteforce,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Tree => "tree",
            Mode::Bruteforce => "bruteforce",
        }
    }
}

/// `n × n` table of farthest-point indices; entry `(p, q)` is `f_pq`.
/// The diagonal holds the row index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FarthestMatrix {
    n: usize,
    entries: Vec<u32>,
}

impl FarthestMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, p: usize, q: usize) -> usize {
        self.entries[p * self.n + q] as usize
    }

    pub fn row(&self, p: usize) -> &[u32] {
        &self.entries[p * self.n..(p + 1) * self.n]
    }

    fn from_rows(n: usize, rows: Vec<Vec<u32>>) -> Self {
        let entries = rows.into_iter().flatten().collect();
        FarthestMatrix { n, entries }
    }
}

/// Instrumentation gathered while computing a matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MatrixStats {
    pub sort: Duration,
    pub build: Duration,
    pub query: Duration,
    pub membership_queries: u64,
    pub plane_tests: u64,
    pub facet_tests: u64,
    pub nodes_built: u64,
    pub facets_built: u64,
    pub max_node_visits: u64,
    pub max_tests_per_visit: u64,
}

impl MatrixStats {
    fn merge(&mut self, o: &MatrixStats) {
        self.sort += o.sort;
        self.build += o.build;
        self.query += o.query;
        self.membership_queries += o.membership_queries;
        self.plane_tests += o.plane_tests;
        self.facet_tests += o.facet_tests;
        self.nodes_built += o.nodes_built;
        self.facets_built += o.facets_built;
        self.max_node_visits = self.max_node_visits.max(o.max_node_visits);
        self.max_tests_per_visit = self.max_tests_per_visit.max(o.max_tests_per_visit);
    }
}

/// Row `p` of the matrix via an exclusion tree, which is dropped afterwards.
pub fn label_row(points: &[Point3], p: usize, eps: f64) -> Result<Vec<u32>, SolveError> {
    if points.len() < 2 {
        return Err(SolveError::TooFewPoints(points.len()));
    }
    check_points(points, eps)?;
    Ok(label_row_counted(points, p, eps, DEFAULT_SCAN_LIMIT, &mut MatrixStats::default())?)
}

fn label_row_counted(
    points: &[Point3],
    p: usize,
    eps: f64,
    scan_limit: usize,
    stats: &mut MatrixStats,
) -> Result<Vec<u32>, TreeError> {
    let start = Instant::now();
    let tree = ExclusionTree::build_unchecked(points, p, eps)?.with_scan_limit(scan_limit);
    let built = start.elapsed();
    let mut row = vec![p as u32; points.len()];
    let mut agg = QueryStats::default();
    for (q, slot) in row.iter_mut().enumerate() {
        if q == p {
            continue;
        }
        let mut s = QueryStats::default();
        let pos = tree.first_excluded_counted(points[q], &mut s)?;
        *slot = tree.order()[pos] as u32;
        stats.membership_queries += s.node_visits;
        agg.merge(&s);
    }
    let total = start.elapsed();
    stats.sort += built;
    stats.build += tree.build_time();
    stats.query += total.saturating_sub(built).saturating_sub(tree.build_time());
    stats.plane_tests += agg.tests.plane_tests;
    stats.facet_tests += agg.tests.facet_tests;
    stats.nodes_built += tree.nodes_built();
    stats.facets_built += tree.facets_built();
    stats.max_node_visits = stats.max_node_visits.max(agg.node_visits);
    stats.max_tests_per_visit = stats.max_tests_per_visit.max(agg.max_tests_per_visit);
    Ok(row)
}

/// `f_pq` by direct scan: the point farthest from `p` with `q ∉ Σ(x, p)`,
/// ties to the smaller index (the earlier position in `p`'s sorted order).
pub fn brute_force_label(points: &[Point3], p: usize, q: usize, eps: f64) -> usize {
    let (pp, qq) = (points[p], points[q]);
    let mut best = p;
    let mut best_d2 = 0.0;
    for (x, &px) in points.iter().enumerate() {
        let d2 = px.dist2(pp);
        if d2 > best_d2 && !strictly_inside_ball(qq, &Ball::new(px, pp), eps) {
            best = x;
            best_d2 = d2;
        }
    }
    best
}

fn brute_force_row(points: &[Point3], p: usize, eps: f64) -> Vec<u32> {
    (0..points.len()).map(|q| if q == p { p as u32 } else { brute_force_label(points, p, q, eps) as u32 }).collect()
}

/// How to fill the matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixConfig {
    pub eps: f64,
    pub mode: Mode,
    /// Worker threads; 0 uses the machine's parallelism.
    pub workers: usize,
    /// Leaf ranges this short are scanned directly (tree mode).
    pub scan_limit: usize,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig { eps: DEFAULT_EPS, mode: Mode::Tree, workers: 0, scan_limit: DEFAULT_SCAN_LIMIT }
    }
}

/// Fills the whole matrix. `workers = 0` uses the machine's parallelism.
pub fn compute_matrix(points: &[Point3], eps: f64, mode: Mode, workers: usize) -> Result<FarthestMatrix, SolveError> {
    let cfg = MatrixConfig { eps, mode, workers, ..MatrixConfig::default() };
    compute_matrix_with_stats(points, &cfg).map(|(m, _)| m)
}

pub fn compute_matrix_with_stats(
    points: &[Point3],
    cfg: &MatrixConfig,
) -> Result<(FarthestMatrix, MatrixStats), SolveError> {
    let n = points.len();
    if n < 2 {
        return Err(SolveError::TooFewPoints(n));
    }
    let eps = cfg.eps;
    check_points(points, eps)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| SolveError::Pool(e.to_string()))?;
    let rows: Vec<Result<(Vec<u32>, MatrixStats), TreeError>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|p| match cfg.mode {
                Mode::Tree => {
                    let mut s = MatrixStats::default();
                    label_row_counted(points, p, eps, cfg.scan_limit, &mut s).map(|r| (r, s))
                }
                Mode::Bruteforce => {
                    let start = Instant::now();
                    let row = brute_force_row(points, p, eps);
                    Ok((row, MatrixStats { query: start.elapsed(), ..MatrixStats::default() }))
                }
            })
            .collect()
    });
    let mut stats = MatrixStats::default();
    let mut out = Vec::with_capacity(n);
    for r in rows {
        let (row, s) = r?;
        stats.merge(&s);
        out.push(row);
    }
    Ok((FarthestMatrix::from_rows(n, out), stats))
}

/// Costs of the dipole with poles `x` and `y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DipoleCost {
    pub msst_cost: f64,
    pub two_center_cost: f64,
    pub r_x: f64,
    pub r_y: f64,
}

pub fn dipole_cost(points: &[Point3], m: &FarthestMatrix, x: usize, y: usize) -> DipoleCost {
    let r_x = dist(points[x], points[m.get(x, y)]);
    let r_y = dist(points[y], points[m.get(y, x)]);
    let r = r_x.max(r_y);
    DipoleCost { msst_cost: dist(points[x], points[y]) + r, two_center_cost: r, r_x, r_y }
}

/// An optimal dipole and its spanning tree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DipoleResult {
    pub pole_x: usize,
    pub pole_y: usize,
    pub r_x: f64,
    pub r_y: f64,
    pub msst_cost: f64,
    pub two_center_cost: f64,
    pub edges: Vec<[usize; 2]>,
}

impl DipoleResult {
    fn new(points: &[Point3], x: usize, y: usize, c: DipoleCost) -> Self {
        DipoleResult {
            pole_x: x,
            pole_y: y,
            r_x: c.r_x,
            r_y: c.r_y,
            msst_cost: c.msst_cost,
            two_center_cost: c.two_center_cost,
            edges: dipolar_edges(points, x, y),
        }
    }
}

/// Edge `(x, y)` plus every other point attached to its nearer pole;
/// equidistant points go to the smaller pole index.
pub fn dipolar_edges(points: &[Point3], x: usize, y: usize) -> Vec<[usize; 2]> {
    let (lo, hi) = (x.min(y), x.max(y));
    let mut edges = Vec::with_capacity(points.len() - 1);
    edges.push([lo, hi]);
    for (i, &pt) in points.iter().enumerate() {
        if i == lo || i == hi {
            continue;
        }
        let pole = if pt.dist2(points[hi]) < pt.dist2(points[lo]) { hi } else { lo };
        edges.push([pole, i]);
    }
    edges
}

/// Pair `(x, y)`, `x < y`, minimizing `key`; ties to the lexicographically
/// smallest pair.
fn best_pair(n: usize, mut key: impl FnMut(usize, usize) -> f64) -> (usize, usize) {
    let mut best = (0, 1);
    let mut best_key = f64::INFINITY;
    for x in 0..n {
        for y in x + 1..n {
            let k = key(x, y);
            if k < best_key {
                best_key = k;
                best = (x, y);
            }
        }
    }
    best
}

/// Minimum-sum dipolar spanning tree from a precomputed matrix.
pub fn msst_from_matrix(points: &[Point3], m: &FarthestMatrix) -> DipoleResult {
    let (x, y) = best_pair(points.len(), |x, y| dipole_cost(points, m, x, y).msst_cost);
    DipoleResult::new(points, x, y, dipole_cost(points, m, x, y))
}

/// Discrete 2-center from the same matrix.
pub fn solve_two_center(points: &[Point3], m: &FarthestMatrix) -> DipoleResult {
    let (x, y) = best_pair(points.len(), |x, y| dipole_cost(points, m, x, y).two_center_cost);
    DipoleResult::new(points, x, y, dipole_cost(points, m, x, y))
}

pub fn solve_msst(points: &[Point3], eps: f64, mode: Mode) -> Result<DipoleResult, SolveError> {
    let m = compute_matrix(points, eps, mode, 1)?;
    Ok(msst_from_matrix(points, &m))
}

/// Radii of the dipole `(x, y)` computed directly: each point is charged to
/// every pole it is not strictly closer to the other one of.
fn brute_force_radii(points: &[Point3], x: usize, y: usize, eps: f64) -> (f64, f64) {
    let (px, py) = (points[x], points[y]);
    let (mut rx, mut ry) = (0.0f64, 0.0f64);
    for &z in points {
        let (dx2, dy2) = (z.dist2(px), z.dist2(py));
        let tol = eps * dx2.max(dy2);
        if dx2 <= dy2 + tol {
            rx = rx.max(dist(z, px));
        }
        if dy2 <= dx2 + tol {
            ry = ry.max(dist(z, py));
        }
    }
    (rx, ry)
}

fn brute_force_cost(points: &[Point3], x: usize, y: usize, eps: f64) -> DipoleCost {
    let (r_x, r_y) = brute_force_radii(points, x, y, eps);
    let r = r_x.max(r_y);
    DipoleCost { msst_cost: dist(points[x], points[y]) + r, two_center_cost: r, r_x, r_y }
}

/// Cubic-time MSST without the matrix.
pub fn brute_force_msst(points: &[Point3], eps: f64) -> Result<DipoleResult, SolveError> {
    if points.len() < 2 {
        return Err(SolveError::TooFewPoints(points.len()));
    }
    check_points(points, eps)?;
    let (x, y) = best_pair(points.len(), |x, y| brute_force_cost(points, x, y, eps).msst_cost);
    Ok(DipoleResult::new(points, x, y, brute_force_cost(points, x, y, eps)))
}

/// Cubic-time discrete 2-center without the matrix.
pub fn brute_force_two_center(points: &[Point3], eps: f64) -> Result<DipoleResult, SolveError> {
    if points.len() < 2 {
        return Err(SolveError::TooFewPoints(points.len()));
    }
    check_points(points, eps)?;
    let (x, y) = best_pair(points.len(), |x, y| brute_force_cost(points, x, y, eps).two_center_cost);
    Ok(DipoleResult::new(points, x, y, brute_force_cost(points, x, y, eps)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Vec3, DEFAULT_EPS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> Vec<Point3> {
        xs.iter().map(|&x| Vec3::new(x, 0.0, 0.0)).collect()
    }

    fn cube_points(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect()
    }

    #[test]
    fn hand_instance_labels() {
        let pts = line(&[0.0, 1.0, 3.0, 4.0]);
        assert_eq!(brute_force_label(&pts, 0, 3, DEFAULT_EPS), 1);
        assert_eq!(brute_force_label(&pts, 1, 2, DEFAULT_EPS), 0);
        let row = label_row(&pts, 0, DEFAULT_EPS).unwrap();
        assert_eq!(row[3], 1);
        let row = label_row(&pts, 1, DEFAULT_EPS).unwrap();
        assert_eq!(row[2], 0);
    }

    #[test]
    fn hand_instance_costs() {
        let pts = line(&[0.0, 1.0, 3.0, 4.0]);
        let m = compute_matrix(&pts, DEFAULT_EPS, Mode::Tree, 1).unwrap();
        let c = dipole_cost(&pts, &m, 1, 2);
        assert_eq!((c.r_x, c.r_y, c.msst_cost), (1.0, 1.0, 3.0));
        assert_eq!(dipole_cost(&pts, &m, 0, 3).msst_cost, 5.0);
        let r = msst_from_matrix(&pts, &m);
        assert_eq!((r.pole_x, r.pole_y, r.msst_cost), (1, 2, 3.0));
        let b = brute_force_msst(&pts, DEFAULT_EPS).unwrap();
        assert_eq!((b.pole_x, b.pole_y, b.msst_cost), (1, 2, 3.0));
        let t = solve_two_center(&pts, &m);
        assert_eq!(t.two_center_cost, 1.0);
        assert_eq!(brute_force_two_center(&pts, DEFAULT_EPS).unwrap().two_center_cost, 1.0);
    }

    #[test]
    fn two_points() {
        let pts = line(&[0.0, 2.0]);
        let m = compute_matrix(&pts, DEFAULT_EPS, Mode::Tree, 1).unwrap();
        assert_eq!((m.get(0, 1), m.get(1, 0)), (0, 1));
        let r = msst_from_matrix(&pts, &m);
        assert_eq!((r.pole_x, r.pole_y, r.msst_cost), (0, 1, 2.0));
        assert_eq!(solve_two_center(&pts, &m).two_center_cost, 0.0);
        assert_eq!(r.edges, vec![[0, 1]]);
    }

    #[test]
    fn one_sided_dipole() {
        // y far away covers only itself
        let pts = line(&[0.0, 1.0, 2.0, 100.0]);
        let m = compute_matrix(&pts, DEFAULT_EPS, Mode::Tree, 1).unwrap();
        let c = dipole_cost(&pts, &m, 1, 3);
        assert_eq!(c.r_y, 0.0);
        assert_eq!(c.msst_cost, 99.0 + c.r_x);
    }

    #[test]
    fn modes_agree_entrywise() {
        for seed in 0..5 {
            let pts = cube_points(40 + seed as usize * 10, seed);
            let a = compute_matrix(&pts, DEFAULT_EPS, Mode::Tree, 1).unwrap();
            let b = compute_matrix(&pts, DEFAULT_EPS, Mode::Bruteforce, 2).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn matches_cubic_oracle() {
        for seed in 0..8 {
            let pts = cube_points(30, seed);
            let m = compute_matrix(&pts, DEFAULT_EPS, Mode::Tree, 1).unwrap();
            let fast = msst_from_matrix(&pts, &m);
            let slow = brute_force_msst(&pts, DEFAULT_EPS).unwrap();
            assert!((fast.msst_cost - slow.msst_cost).abs() <= 1e-9 * slow.msst_cost);
            let fast = solve_two_center(&pts, &m);
            let slow = brute_force_two_center(&pts, DEFAULT_EPS).unwrap();
            assert!((fast.two_center_cost - slow.two_center_cost).abs() <= 1e-9 * slow.two_center_cost);
        }
    }

    #[test]
    fn result_is_a_dipolar_tree_with_coverage() {
        let pts = cube_points(50, 77);
        let m = compute_matrix(&pts, DEFAULT_EPS, Mode::Tree, 1).unwrap();
        for r in [msst_from_matrix(&pts, &m), solve_two_center(&pts, &m)] {
            assert_eq!(r.edges.len(), pts.len() - 1);
            let mut degree = vec![0usize; pts.len()];
            for e in &r.edges {
                degree[e[0]] += 1;
                degree[e[1]] += 1;
            }
            assert!(degree.iter().all(|&d| d >= 1));
            let hubs: Vec<usize> = (0..pts.len()).filter(|&i| degree[i] > 1).collect();
            assert!(hubs.iter().all(|&h| h == r.pole_x || h == r.pole_y));
            let radius = r.r_x.max(r.r_y);
            for e in &r.edges[1..] {
                assert!(dist(pts[e[0]], pts[e[1]]) <= radius * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn msst_is_no_worse_than_any_dipole() {
        let pts = cube_points(60, 5);
        let m = compute_matrix(&pts, DEFAULT_EPS, Mode::Tree, 1).unwrap();
        let best = msst_from_matrix(&pts, &m);
        let tc = solve_two_center(&pts, &m);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = rng.random_range(0..pts.len());
            let y = rng.random_range(0..pts.len());
            if x != y {
                assert!(best.msst_cost <= dipole_cost(&pts, &m, x, y).msst_cost);
                assert!(tc.two_center_cost <= dipole_cost(&pts, &m, x, y).two_center_cost);
            }
        }
        assert!(tc.two_center_cost <= dipole_cost(&pts, &m, best.pole_x, best.pole_y).two_center_cost);
        assert!(best.msst_cost <= dipole_cost(&pts, &m, tc.pole_x, tc.pole_y).msst_cost);
    }

    #[test]
    fn rejects_duplicates() {
        let pts = line(&[0.0, 1.0, 1.0]);
        assert!(matches!(
            compute_matrix(&pts, DEFAULT_EPS, Mode::Tree, 1),
            Err(SolveError::Geometry(GeometryError::DuplicatePoints { .. }))
        ));
    }
}
