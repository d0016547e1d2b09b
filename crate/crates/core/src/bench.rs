//! Benchmark harness: per-phase wall times and operation counters for the
//! matrix computation, with per-size medians and log–log slopes.

use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::geometry::Point3;
use crate::io::{generate, PointDistribution};
use crate::solver::{compute_matrix_with_stats, msst_from_matrix, solve_two_center, MatrixConfig, Mode, SolveError};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub n: usize,
    pub seed: u64,
    pub mode: Mode,
    pub sort_ms: f64,
    pub build_ms: f64,
    pub query_ms: f64,
    pub scan_ms: f64,
    pub total_ms: f64,
    /// Internal nodes visited over all descents.
    pub membership_tests: u64,
    pub plane_tests: u64,
    pub facet_tests: u64,
    pub facets_built: u64,
    pub nodes_built: u64,
    pub max_node_visits: u64,
    pub max_tests_per_visit: u64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Solves both objectives on `points` and records where the time went.
pub fn measure(points: &[Point3], seed: u64, cfg: &MatrixConfig) -> Result<BenchRecord, SolveError> {
    let start = Instant::now();
    let (m, stats) = compute_matrix_with_stats(points, cfg)?;
    let scan = Instant::now();
    let a = msst_from_matrix(points, &m);
    let b = solve_two_center(points, &m);
    let scan = scan.elapsed();
    let total = start.elapsed();
    std::hint::black_box((a, b));
    Ok(BenchRecord {
        n: points.len(),
        seed,
        mode: cfg.mode,
        sort_ms: ms(stats.sort),
        build_ms: ms(stats.build),
        query_ms: ms(stats.query),
        scan_ms: ms(scan),
        total_ms: ms(total),
        membership_tests: stats.membership_queries,
        plane_tests: stats.plane_tests,
        facet_tests: stats.facet_tests,
        facets_built: stats.facets_built,
        nodes_built: stats.nodes_built,
        max_node_visits: stats.max_node_visits,
        max_tests_per_visit: stats.max_tests_per_visit,
    })
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub seeds: u64,
    pub dist: PointDistribution,
    pub matrix: MatrixConfig,
}

/// One record per `(n, seed)`, seeds `0..seeds`.
pub fn run_bench(cfg: &BenchConfig, mut progress: impl FnMut(&BenchRecord)) -> Result<Vec<BenchRecord>, SolveError> {
    let mut out = Vec::with_capacity(cfg.sizes.len() * cfg.seeds as usize);
    for &n in &cfg.sizes {
        for seed in 0..cfg.seeds {
            let inst = generate(n, cfg.dist, seed);
            let r = measure(&inst.points, seed, &cfg.matrix)?;
            progress(&r);
            out.push(r);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MedianRow {
    pub n: usize,
    pub runs: usize,
    pub sort_ms: f64,
    pub build_ms: f64,
    pub query_ms: f64,
    pub scan_ms: f64,
    pub total_ms: f64,
    /// Log–log slope of `total_ms` against the previous size.
    pub slope: Option<f64>,
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

pub fn loglog_slope(n0: usize, t0: f64, n1: usize, t1: f64) -> f64 {
    (t1 / t0).ln() / (n1 as f64 / n0 as f64).ln()
}

/// Per-size medians in increasing `n`.
pub fn medians(records: &[BenchRecord]) -> Vec<MedianRow> {
    let mut sizes: Vec<usize> = records.iter().map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut rows: Vec<MedianRow> = Vec::with_capacity(sizes.len());
    for n in sizes {
        let group: Vec<&BenchRecord> = records.iter().filter(|r| r.n == n).collect();
        let med = |f: fn(&BenchRecord) -> f64| median(&mut group.iter().map(|r| f(r)).collect::<Vec<_>>());
        let total_ms = med(|r| r.total_ms);
        let slope = rows.last().map(|p| loglog_slope(p.n, p.total_ms, n, total_ms));
        rows.push(MedianRow {
            n,
            runs: group.len(),
            sort_ms: med(|r| r.sort_ms),
            build_ms: med(|r| r.build_ms),
            query_ms: med(|r| r.query_ms),
            scan_ms: med(|r| r.scan_ms),
            total_ms,
            slope,
        });
    }
    rows
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_slope() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((loglog_slope(100, 1.0, 200, 4.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_bench() {
        let cfg = BenchConfig {
            sizes: vec![96, 192],
            seeds: 3,
            dist: PointDistribution::Cube,
            matrix: MatrixConfig { workers: 1, ..MatrixConfig::default() },
        };
        let recs = run_bench(&cfg, |_| {}).unwrap();
        assert_eq!(recs.len(), 6);
        for r in &recs {
            assert!(r.membership_tests > 0 && r.facets_built > 0);
            let phases = r.sort_ms + r.build_ms + r.query_ms + r.scan_ms;
            assert!(phases <= r.total_ms * 1.05 + 0.05, "{r:?}");
            assert!(r.max_node_visits <= 9);
        }
        let rows = medians(&recs);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].slope.is_none() && rows[1].slope.is_some());
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,runs,sort_ms"));
        assert_eq!(text.lines().count(), 3);
    }
}
