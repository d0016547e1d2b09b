use msst_core::geometry::Vec3;
use msst_core::polytope::{
    build_membership, contains_linear, facet_count, query_membership, ConvexPolytope3, HalfSpace, MembershipStructure,
    QueryCounter, Source, Strictness,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-9;

/// Halfspaces of balls tangent at the origin with centers in a cone around
/// `+z`, so their common intersection is a proper polytope.
fn tangent_ball_halfspaces(m: usize, rng: &mut ChaCha8Rng) -> Vec<HalfSpace> {
    (0..m)
        .map(|i| {
            let c = Vec3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(0.3..1.0));
            HalfSpace::new(c, 0.5, Source::Ball(i))
        })
        .collect()
}

/// Balls centered on the lower half of a sphere around `(0, 0, 2)`; nearly
/// every constraint is a facet.
fn rounded_halfspaces(m: usize, rng: &mut ChaCha8Rng) -> Vec<HalfSpace> {
    (0..m)
        .map(|i| {
            let u = loop {
                let u =
                    Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..-0.3));
                if u.norm2() <= 1.0 {
                    break u.normalized();
                }
            };
            HalfSpace::new(Vec3::new(0.0, 0.0, 2.0) + u, 0.5, Source::Ball(i))
        })
        .collect()
}

fn halfwidth(hs: &[HalfSpace]) -> f64 {
    2.0 * hs.iter().map(|h| 1.0 / h.normal.norm()).fold(0.0, f64::max)
}

fn box_planes(w: f64) -> Vec<(Vec3, f64)> {
    let mut out = Vec::new();
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut n = [0.0; 3];
            n[axis] = -sign;
            out.push((Vec3::from(n), -w));
        }
    }
    out
}

fn solve3(p: [(Vec3, f64); 3]) -> Option<Vec3> {
    let [(a, x), (b, y), (c, z)] = p;
    let det = a.dot(b.cross(c));
    if det.abs() < 1e-12 * a.norm() * b.norm() * c.norm() {
        return None;
    }
    Some((b.cross(c) * x + c.cross(a) * y + a.cross(b) * z) / det)
}

/// Vertices of `{x : n·x ≥ b for all planes}` by trying every plane triple.
fn triple_enumeration(planes: &[(Vec3, f64)], tol: f64) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::new();
    for i in 0..planes.len() {
        for j in i + 1..planes.len() {
            for k in j + 1..planes.len() {
                let Some(v) = solve3([planes[i], planes[j], planes[k]]) else { continue };
                let feasible = planes.iter().all(|(n, b)| (v.dot(*n) - b) / n.norm() >= -tol);
                if feasible && !out.iter().any(|u| u.dist2(v).sqrt() <= tol) {
                    out.push(v);
                }
            }
        }
    }
    out
}

#[test]
fn vertices_match_triple_enumeration() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hs = tangent_ball_halfspaces(20, &mut rng);
        let w = halfwidth(&hs);
        let poly = ConvexPolytope3::clip_box(&hs, w);
        assert!(!poly.is_empty());
        let mut planes = box_planes(w);
        planes.extend(hs.iter().map(|h| (h.normal, h.offset)));
        let tol = 1e-8 * w;
        let oracle = triple_enumeration(&planes, tol);
        let near = |v: &Vec3, set: &[Vec3]| set.iter().any(|u| u.dist2(*v).sqrt() <= 10.0 * tol);
        for v in poly.vertices() {
            assert!(near(v, &oracle), "seed {seed}: clipped vertex {v:?} is not a vertex");
        }
        for v in &oracle {
            assert!(near(v, poly.vertices()), "seed {seed}: vertex {v:?} missing");
        }
        for v in poly.vertices() {
            assert!(contains_linear(&hs, *v, Strictness::Closed, EPS));
        }
    }
}

#[test]
fn facet_count_is_linear() {
    assert_eq!(facet_count(&ConvexPolytope3::clip_box(&[], 1.0)), 6);
    let one = [HalfSpace::new(Vec3::new(0.3, 0.2, 1.0), 0.5, Source::Ball(0))];
    assert!(facet_count(&ConvexPolytope3::clip_box(&one, 4.0)) <= 7);
    for m in [16, 64, 256] {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * m as u64 + seed);
            let hs = tangent_ball_halfspaces(m, &mut rng);
            let poly = ConvexPolytope3::clip_box(&hs, halfwidth(&hs));
            assert!(facet_count(&poly) <= m + 6, "m = {m}, seed {seed}: {} facets", facet_count(&poly));
            let mut sources: Vec<Source> = poly.facets().iter().map(|f| f.halfspace.source).collect();
            let k = sources.len();
            sources.sort_by_key(|s| format!("{s:?}"));
            sources.dedup();
            assert_eq!(sources.len(), k, "a halfspace contributed two facets");
        }
    }
}

#[test]
fn cube_and_empty_queries() {
    let w = 3.0;
    let cube = ConvexPolytope3::clip_box(&[], w);
    let ms = build_membership(&cube);
    assert!(query_membership(&ms, Vec3::ZERO));
    assert!(!query_membership(&ms, Vec3::new(2.0 * w, 0.0, 0.0)));
    let empty = ConvexPolytope3::clip_box(
        &[
            HalfSpace::new(Vec3::new(1.0, 0.0, 0.0), 0.5, Source::Ball(0)),
            HalfSpace::new(Vec3::new(-1.0, 0.0, 0.0), 0.5, Source::Ball(1)),
        ],
        w,
    );
    let ms = build_membership(&empty);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let x = Vec3::new(rng.random_range(-w..w), rng.random_range(-w..w), rng.random_range(-w..w));
        assert!(!query_membership(&ms, x));
    }
}

fn boundary_distance(hs: &[HalfSpace], x: Vec3) -> f64 {
    hs.iter().map(|h| (h.slack(x) / h.normal.norm()).abs()).fold(f64::INFINITY, f64::min)
}

#[test]
fn membership_matches_linear_scan() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hs = rounded_halfspaces(64, &mut rng);
        let w = halfwidth(&hs);
        let poly = ConvexPolytope3::clip_box(&hs, w);
        let ms = build_membership(&poly);
        assert!(poly.ball_facet_count() > 16);
        assert!(matches!(ms, MembershipStructure::Hierarchy { .. }));
        let all: Vec<HalfSpace> = poly.halfspaces().copied().collect();
        let c = poly.centroid();
        let (mut inside, mut checked) = (0, 0);
        for i in 0..10_000 {
            let x = if i % 2 == 0 {
                Vec3::new(rng.random_range(-w..w), rng.random_range(-w..w), rng.random_range(-w..w))
            } else {
                let v = poly.vertices()[rng.random_range(0..poly.vertices().len())];
                c + (v - c) * rng.random_range(0.0..1.3)
            };
            if boundary_distance(&all, x) <= 1e-7 * w {
                continue;
            }
            let expect = contains_linear(&hs, x, Strictness::Strict, EPS) && x.max_abs() < w;
            assert_eq!(query_membership(&ms, x), expect, "seed {seed}, query {x:?}");
            checked += 1;
            inside += expect as usize;
        }
        assert!(checked > 9_000 && inside > 1_000 && inside < checked - 1_000, "{checked} {inside}");
    }
}

#[test]
fn query_tests_grow_logarithmically() {
    let c = 16.0;
    for m in [8, 32, 128, 512, 2048, 4096] {
        let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
        let hs = rounded_halfspaces(m, &mut rng);
        let w = halfwidth(&hs);
        let poly = ConvexPolytope3::clip_box(&hs, w);
        let ms = build_membership(&poly);
        assert!(poly.ball_facet_count() * 2 >= m, "m = {m}: only {} facets", poly.ball_facet_count());
        let bound = c * (poly.facet_count() as f64).log2() + c;
        let mut worst = 0;
        for _ in 0..2_000 {
            let x = Vec3::new(rng.random_range(-w..w), rng.random_range(-w..w), rng.random_range(-w..w));
            let mut counter = QueryCounter::default();
            ms.contains(x, &mut counter);
            worst = worst.max(counter.total());
        }
        assert!(worst as f64 <= bound, "m = {m}: {worst} tests > {bound}");
    }
}
