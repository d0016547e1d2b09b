//! Per-pole ball exclusion tree.
//!
//! Points are sorted by non-increasing distance from the pole `p`; leaf `i`
//! holds the ball Σ(q_i, p) and the last leaf is the sentinel Σ(p, p), which
//! excludes everything. An internal node stands for the intersection of the
//! balls below it. After inversion about `p` that intersection is a convex
//! polytope, so "is q inside every ball of this range" becomes a point
//! location query.
//!
//! [`ExclusionTree::first_excluded`] descends from the root: if `q` lies inside
//! the left child's intersection the answer is to the right, otherwise to the
//! left. Only left children are ever tested, and their geometry is built the
//! first time a query reaches them. Once the remaining range is short enough
//! the descent finishes with a direct scan.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;
use std::time::Instant;

use thiserror::Error;

use crate::geometry::{check_points, order_by_distance, Ball, GeometryError, InversionFrame, Point3, Vec3};
use crate::polytope::{ConvexPolytope3, HalfSpace, Location, MembershipStructure, QueryCounter, Source};

/// Ranges of at most this many leaves are scanned directly.
pub const DEFAULT_SCAN_LIMIT: usize = 64;

#[derive(Error, Debug)]
pub enum TreeError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("query point coincides with the pole")]
    PoleQuery,
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid node path {path:?}: {reason}")]
    InvalidPath { path: String, reason: &'static str },
    #[error("cannot write polytope: {0}")]
    Io(#[from] std::io::Error),
}

/// Geometry cached at a left child.
#[derive(Debug)]
struct NodeGeometry {
    membership: MembershipStructure,
}

/// Work done by one [`ExclusionTree::first_excluded_counted`] call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueryStats {
    /// Internal nodes visited on the way down.
    pub node_visits: u64,
    /// Elementary tests summed over all visits.
    pub tests: QueryCounter,
    /// Largest number of elementary tests spent at a single node.
    pub max_tests_per_visit: u64,
}

impl QueryStats {
    pub fn merge(&mut self, other: &QueryStats) {
        self.node_visits = self.node_visits.max(other.node_visits);
        self.tests.add(&other.tests);
        self.max_tests_per_visit = self.max_tests_per_visit.max(other.max_tests_per_visit);
    }
}

/// Facet totals from a full build of every internal node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FacetAudit {
    pub internal_nodes: usize,
    pub empty_nodes: usize,
    pub total_facets: usize,
    pub left_child_facets: usize,
}

#[derive(Debug)]
pub struct ExclusionTree {
    pole: usize,
    eps: f64,
    frame: InversionFrame,
    /// Sorted order; `order[i]` is the point at leaf `i`, the pole last.
    order: Vec<usize>,
    /// Halfspace of every non-sentinel leaf.
    leaves: Vec<HalfSpace>,
    /// Ball centers and squared radii in sorted order.
    centers: Vec<Point3>,
    radii2: Vec<f64>,
    halfwidth: f64,
    scan_limit: usize,
    /// Left-child geometry, keyed by the node's split position.
    nodes: Vec<OnceLock<NodeGeometry>>,
    nodes_built: AtomicU64,
    facets_built: AtomicU64,
    build_nanos: AtomicU64,
}

impl ExclusionTree {
    /// Validates the points and builds the tree for `points[pole]`.
    pub fn build(points: &[Point3], pole: usize, eps: f64) -> Result<Self, TreeError> {
        if pole >= points.len() {
            return Err(GeometryError::PoleOutOfRange { pole, len: points.len() }.into());
        }
        check_points(points, eps)?;
        Self::build_unchecked(points, pole, eps)
    }

    /// Like [`build`](Self::build) but trusts the caller to have validated the points.
    pub fn build_unchecked(points: &[Point3], pole: usize, eps: f64) -> Result<Self, TreeError> {
        let n = points.len();
        if n < 2 {
            return Err(TreeError::TooFewPoints(n));
        }
        let p = points[pole];
        let frame = InversionFrame::with_eps(p, eps);
        let order = order_by_distance(pole, points);
        debug_assert_eq!(order[n - 1], pole);
        let mut leaves = Vec::with_capacity(n - 1);
        let mut max_inverted = 0.0f64;
        for (pos, &i) in order[..n - 1].iter().enumerate() {
            // Validated points are distinct from the pole, so the ball is proper.
            let c = points[i] - p;
            leaves.push(HalfSpace::new(c, 0.5, Source::Ball(pos)));
            max_inverted = max_inverted.max(1.0 / c.norm());
        }
        let centers: Vec<Point3> = order.iter().map(|&i| points[i]).collect();
        let radii2 = centers.iter().map(|c| Ball::new(*c, p).radius2()).collect();
        let nodes = (0..n).map(|_| OnceLock::new()).collect();
        Ok(ExclusionTree {
            pole,
            eps,
            frame,
            order,
            leaves,
            centers,
            radii2,
            halfwidth: 2.0 * max_inverted,
            scan_limit: DEFAULT_SCAN_LIMIT,
            nodes,
            nodes_built: AtomicU64::new(0),
            facets_built: AtomicU64::new(0),
            build_nanos: AtomicU64::new(0),
        })
    }

    /// Sets the range length below which queries scan instead of using
    /// geometry (at least 1).
    pub fn with_scan_limit(mut self, limit: usize) -> Self {
        self.scan_limit = limit.max(1);
        self
    }

    pub fn pole(&self) -> usize {
        self.pole
    }

    pub fn leaf_count(&self) -> usize {
        self.order.len()
    }

    pub fn internal_node_count(&self) -> usize {
        self.order.len() - 1
    }

    /// Sorted order of point indices; position `i` is leaf `i`.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn sentinel_position(&self) -> usize {
        self.order.len() - 1
    }

    pub fn box_halfwidth(&self) -> f64 {
        self.halfwidth
    }

    /// Halfspace of leaf `pos`, `None` for the sentinel.
    pub fn leaf_halfspace(&self, pos: usize) -> Option<&HalfSpace> {
        self.leaves.get(pos)
    }

    /// Height of the tree: the most internal nodes on any root-to-leaf path.
    pub fn height(&self) -> usize {
        fn h(len: usize) -> usize {
            if len <= 1 {
                0
            } else {
                1 + h(len - len / 2)
            }
        }
        h(self.order.len())
    }

    pub fn nodes_built(&self) -> u64 {
        self.nodes_built.load(Ordering::Relaxed)
    }

    pub fn facets_built(&self) -> u64 {
        self.facets_built.load(Ordering::Relaxed)
    }

    /// Time spent building node geometry so far.
    pub fn build_time(&self) -> std::time::Duration {
        std::time::Duration::from_nanos(self.build_nanos.load(Ordering::Relaxed))
    }

    /// [`strictly_inside_ball`] for leaf `pos`, with the radius precomputed.
    #[inline]
    fn inside(&self, q: Point3, pos: usize) -> bool {
        let r2 = self.radii2[pos];
        let d2 = self.centers[pos].dist2(q);
        d2 < r2 - self.eps * r2.max(d2)
    }

    /// Polytope of the leaf range `[lo, hi)`, clipping the smallest balls first.
    fn range_polytope(&self, lo: usize, hi: usize) -> ConvexPolytope3 {
        let real_hi = hi.min(self.leaves.len());
        ConvexPolytope3::cube(self.halfwidth).clipped_rev(&self.leaves[lo.min(real_hi)..real_hi])
    }

    fn geometry(&self, lo: usize, hi: usize) -> &NodeGeometry {
        self.nodes[split(lo, hi)].get_or_init(|| {
            let start = Instant::now();
            let poly = self.range_polytope(lo, hi);
            let geom = NodeGeometry { membership: MembershipStructure::build(&poly) };
            self.nodes_built.fetch_add(1, Ordering::Relaxed);
            self.facets_built.fetch_add(poly.facet_count() as u64, Ordering::Relaxed);
            self.build_nanos.fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
            geom
        })
    }

    /// Is `q` strictly inside every ball of the left child `[lo, hi)`?
    fn left_contains(&self, lo: usize, hi: usize, q: Point3, x: Option<Vec3>, c: &mut QueryCounter) -> bool {
        if hi - lo == 1 {
            c.facet_tests += 1;
            return self.inside(q, lo);
        }
        let Some(x) = x else {
            c.facet_tests += (hi - lo) as u64;
            return (lo..hi).all(|pos| self.inside(q, pos));
        };
        let ms = &self.geometry(lo, hi).membership;
        let facets = ms.facets();
        let ball_of = |h: &HalfSpace| match h.source {
            Source::Ball(pos) => Some(pos),
            _ => None,
        };
        match ms.locate(x, c) {
            Location::Empty => false,
            Location::All => {
                c.facet_tests += facets.len() as u64;
                facets.iter().filter_map(ball_of).all(|pos| self.inside(q, pos))
            }
            loc => {
                let ids = loc.ids().unwrap_or(&[]);
                c.facet_tests += ids.len() as u64;
                ids.iter().filter_map(|&i| ball_of(&facets[i as usize])).all(|pos| self.inside(q, pos))
            }
        }
    }

    /// Smallest sorted position `j` with `q ∉ Σ(q_j, p)`; the sentinel
    /// position when `q` is strictly inside every real ball.
    pub fn first_excluded(&self, q: Point3) -> Result<usize, TreeError> {
        self.first_excluded_counted(q, &mut QueryStats::default())
    }

    pub fn first_excluded_counted(&self, q: Point3, stats: &mut QueryStats) -> Result<usize, TreeError> {
        let x = match self.frame.invert_relative(q) {
            Ok(x) => x,
            Err(GeometryError::PoleInversion) => return Err(TreeError::PoleQuery),
            Err(e) => return Err(e.into()),
        };
        let in_box = (x.max_abs() <= self.halfwidth).then_some(x);
        let (mut lo, mut hi) = (0usize, self.order.len());
        while hi - lo > 1 {
            let mut c = QueryCounter::default();
            stats.node_visits += 1;
            if hi - lo <= self.scan_limit {
                // The answer is in [lo, hi) and the last position there needs no test.
                let pos = (lo..hi - 1).find(|&pos| !self.inside(q, pos)).unwrap_or(hi - 1);
                c.facet_tests = (pos - lo + 1).min(hi - 1 - lo) as u64;
                stats.max_tests_per_visit = stats.max_tests_per_visit.max(c.total());
                stats.tests.add(&c);
                return Ok(pos);
            }
            let mid = split(lo, hi);
            let inside = self.left_contains(lo, mid, q, in_box, &mut c);
            stats.max_tests_per_visit = stats.max_tests_per_visit.max(c.total());
            stats.tests.add(&c);
            if inside {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Reference scan over sorted positions in problem space.
    pub fn first_excluded_linear(&self, q: Point3) -> Result<usize, TreeError> {
        if self.frame.invert_relative(q).is_err() {
            return Err(TreeError::PoleQuery);
        }
        Ok((0..self.leaves.len()).find(|&pos| !self.inside(q, pos)).unwrap_or(self.sentinel_position()))
    }

    /// Builds every internal node (right children and the root included) by
    /// merging children bottom-up, and totals their facets. Left-child
    /// membership structures are cached as a side effect.
    pub fn audit(&self) -> FacetAudit {
        let mut audit = FacetAudit::default();
        self.audit_node(0, self.order.len(), false, &mut audit);
        audit
    }

    fn audit_node(&self, lo: usize, hi: usize, is_left: bool, audit: &mut FacetAudit) -> ConvexPolytope3 {
        if hi - lo == 1 {
            return self.range_polytope(lo, hi);
        }
        let mid = split(lo, hi);
        let left = self.audit_node(lo, mid, true, audit);
        let right = self.audit_node(mid, hi, false, audit);
        let poly = if left.is_empty() || right.is_empty() {
            ConvexPolytope3::empty(self.halfwidth)
        } else {
            let cuts: Vec<HalfSpace> = right.halfspaces().filter(|h| !h.is_box()).copied().collect();
            left.clipped_rev(&cuts)
        };
        audit.internal_nodes += 1;
        audit.empty_nodes += poly.is_empty() as usize;
        audit.total_facets += poly.facet_count();
        if is_left {
            audit.left_child_facets += poly.facet_count();
            let _ = self.nodes[mid].set(NodeGeometry { membership: MembershipStructure::build(&poly) });
        }
        poly
    }

    /// Leaf range of the node reached by a path of `L`/`R` steps from the root.
    pub fn node_range(&self, path: &str) -> Result<(usize, usize), TreeError> {
        let (mut lo, mut hi) = (0usize, self.order.len());
        for ch in path.chars() {
            if hi - lo <= 1 {
                return Err(TreeError::InvalidPath { path: path.to_string(), reason: "descends below a leaf" });
            }
            let mid = split(lo, hi);
            match ch.to_ascii_uppercase() {
                'L' => hi = mid,
                'R' => lo = mid,
                _ => return Err(TreeError::InvalidPath { path: path.to_string(), reason: "steps must be L or R" }),
            }
        }
        Ok((lo, hi))
    }

    /// Polytope of the node at `path` (empty path = root).
    pub fn node_polytope(&self, path: &str) -> Result<ConvexPolytope3, TreeError> {
        let (lo, hi) = self.node_range(path)?;
        Ok(self.range_polytope(lo, hi))
    }

    pub fn export_polytope_off(&self, path: &str, file: &Path) -> Result<(), TreeError> {
        self.node_polytope(path)?.export_off(file)?;
        Ok(())
    }
}

/// Split position of the node over `[lo, hi)`; distinct for every internal node.
#[inline]
fn split(lo: usize, hi: usize) -> usize {
    lo + (hi - lo) / 2
}
