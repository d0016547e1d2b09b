//! Inversion-space geometry.
//!
//! A ball tangent at the pole becomes a halfspace `x·c ≥ 1/2` (pole-relative
//! coordinates). Intersections of such halfspaces are unbounded, so every
//! polytope here is additionally clipped to an axis-aligned cube `[-w, w]³`.
//!
//! [`ConvexPolytope3`] is built by clipping that cube one halfspace at a time.
//! [`MembershipStructure`] answers strict-interior queries with a number of
//! plane tests logarithmic in the facet count.

mod membership;

pub use membership::{Location, MembershipStructure, QueryCounter, FLAT_LIMIT};

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use crate::geometry::Vec3;

/// Relative tolerance (against the box half-width) for classifying a vertex
/// as on a cutting plane.
pub const CLIP_TOL: f64 = 1e-12;

/// Where a halfspace came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    /// Inverted image of Σ(q, p) for the point with this index.
    Ball(usize),
    /// One of the six faces of the bounding cube, `2·axis + (positive side)`.
    Box(u8),
    Unlabeled,
}

/// The constraint `x·normal ≥ offset`, with `x` relative to the pole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec3,
    pub offset: f64,
    pub source: Source,
}

impl HalfSpace {
    pub fn new(normal: Vec3, offset: f64, source: Source) -> Self {
        debug_assert!(normal.norm2() > 0.0, "halfspace normal must be nonzero");
        HalfSpace { normal, offset, source }
    }

    /// `x·normal − offset`; positive inside.
    #[inline]
    pub fn slack(&self, x: Vec3) -> f64 {
        x.dot(self.normal) - self.offset
    }

    pub fn is_box(&self) -> bool {
        matches!(self.source, Source::Box(_))
    }

    fn box_face(axis: usize, positive: bool, halfwidth: f64) -> Self {
        let mut n = [0.0; 3];
        n[axis] = if positive { -1.0 } else { 1.0 };
        // `positive` is the face at +w: x_axis ≤ w, i.e. −x_axis ≥ −w.
        HalfSpace::new(Vec3::from(n), -halfwidth, Source::Box((2 * axis + positive as usize) as u8))
    }

    /// Strict test with the tolerance scaled by the operand magnitudes.
    /// Box faces are always tested closed.
    #[inline]
    pub fn admits(&self, x: Vec3, strictness: Strictness, eps: f64) -> bool {
        let lhs = x.dot(self.normal);
        let scale = (x.norm() * self.normal.norm()).max(self.offset.abs());
        match (strictness, self.is_box()) {
            (Strictness::Strict, false) => lhs - self.offset > eps * scale,
            _ => lhs - self.offset >= -eps * scale,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strictness {
    /// Strict interior of every ball-derived constraint.
    Strict,
    Closed,
}

/// Reference membership test: a linear scan over all constraints.
pub fn contains_linear(halfspaces: &[HalfSpace], x: Vec3, strictness: Strictness, eps: f64) -> bool {
    halfspaces.iter().all(|h| h.admits(x, strictness, eps))
}

/// One facet: its supporting halfspace and a vertex ring, counter-clockwise
/// when seen from outside the polytope.
#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub halfspace: HalfSpace,
    pub ring: Vec<usize>,
}

/// Bounded intersection of halfspaces with the cube `[-w, w]³`.
#[derive(Clone, Debug)]
pub struct ConvexPolytope3 {
    vertices: Vec<Vec3>,
    facets: Vec<Facet>,
    halfwidth: f64,
    empty: bool,
}

impl ConvexPolytope3 {
    /// The bare cube `[-w, w]³`.
    pub fn cube(halfwidth: f64) -> Self {
        assert!(halfwidth > 0.0 && halfwidth.is_finite(), "box half-width must be positive");
        let w = halfwidth;
        let vertices: Vec<Vec3> = (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 != 0 { w } else { -w },
                    if i & 2 != 0 { w } else { -w },
                    if i & 4 != 0 { w } else { -w },
                )
            })
            .collect();
        static RINGS: OnceLock<Vec<Vec<usize>>> = OnceLock::new();
        let rings = RINGS.get_or_init(|| {
            let unit: Vec<Vec3> = (0..8)
                .map(|i| {
                    Vec3::new(
                        (i & 1) as f64 * 2.0 - 1.0,
                        ((i >> 1) & 1) as f64 * 2.0 - 1.0,
                        ((i >> 2) & 1) as f64 * 2.0 - 1.0,
                    )
                })
                .collect();
            let mut rings = Vec::with_capacity(6);
            for axis in 0..3 {
                for positive in [false, true] {
                    let ids: Vec<usize> = (0..8).filter(|&i| ((i >> axis) & 1 == 1) == positive).collect();
                    let mut outward = [0.0; 3];
                    outward[axis] = if positive { 1.0 } else { -1.0 };
                    rings.push(order_ring(&unit, &ids, Vec3::from(outward)));
                }
            }
            rings
        });
        let facets = (0..6)
            .map(|k| Facet { halfspace: HalfSpace::box_face(k / 2, k % 2 == 1, w), ring: rings[k].clone() })
            .collect();
        ConvexPolytope3 { vertices, facets, halfwidth: w, empty: false }
    }

    pub fn empty(halfwidth: f64) -> Self {
        ConvexPolytope3 { vertices: Vec::new(), facets: Vec::new(), halfwidth, empty: true }
    }

    /// Intersection of `[-w, w]³` with every halfspace.
    pub fn clip_box(halfspaces: &[HalfSpace], halfwidth: f64) -> Self {
        let mut poly = Self::cube(halfwidth);
        poly.clip_all(halfspaces.iter());
        poly
    }

    /// This polytope intersected with further halfspaces.
    pub fn clipped(&self, halfspaces: &[HalfSpace]) -> Self {
        let mut poly = self.clone();
        poly.clip_all(halfspaces.iter());
        poly
    }

    /// Like [`clipped`](Self::clipped), applying the halfspaces last to first.
    pub fn clipped_rev(&self, halfspaces: &[HalfSpace]) -> Self {
        let mut poly = self.clone();
        poly.clip_all(halfspaces.iter().rev());
        poly
    }

    pub(crate) fn clip_all<'a>(&mut self, halfspaces: impl Iterator<Item = &'a HalfSpace>) {
        let mut scratch = Scratch::default();
        for h in halfspaces {
            if self.empty {
                return;
            }
            self.clip_in_place(h, &mut scratch);
        }
        if !self.empty && self.is_thin() {
            self.make_empty();
        }
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn halfwidth(&self) -> f64 {
        self.halfwidth
    }

    pub fn facet_count(&self) -> usize {
        self.facets.len()
    }

    /// Facets contributed by ball-derived halfspaces (box faces excluded).
    pub fn ball_facet_count(&self) -> usize {
        self.facets.iter().filter(|f| !f.halfspace.is_box()).count()
    }

    /// Supporting halfspaces of all facets.
    pub fn halfspaces(&self) -> impl Iterator<Item = &HalfSpace> {
        self.facets.iter().map(|f| &f.halfspace)
    }

    pub fn volume(&self) -> f64 {
        if self.empty || self.vertices.is_empty() {
            return 0.0;
        }
        let c = self.centroid();
        let mut vol = 0.0;
        for f in &self.facets {
            let a = self.vertices[f.ring[0]] - c;
            for w in f.ring[1..].windows(2) {
                let b = self.vertices[w[0]] - c;
                let d = self.vertices[w[1]] - c;
                vol += a.dot(b.cross(d));
            }
        }
        vol / 6.0
    }

    pub fn surface_area(&self) -> f64 {
        let mut area = 0.0;
        for f in &self.facets {
            let a = self.vertices[f.ring[0]];
            for w in f.ring[1..].windows(2) {
                area += (self.vertices[w[0]] - a).cross(self.vertices[w[1]] - a).norm() * 0.5;
            }
        }
        area
    }

    /// Average of the vertices; strictly interior for a full-dimensional polytope.
    pub fn centroid(&self) -> Vec3 {
        let sum = self.vertices.iter().fold(Vec3::ZERO, |acc, &v| acc + v);
        sum / self.vertices.len() as f64
    }

    fn tol(&self) -> f64 {
        CLIP_TOL * self.halfwidth
    }

    fn make_empty(&mut self) {
        self.vertices.clear();
        self.facets.clear();
        self.empty = true;
    }

    /// Lower-dimensional up to tolerance: `3·volume / area` is a thickness
    /// measure (the inradius for tangential polytopes).
    fn is_thin(&self) -> bool {
        let area = self.surface_area();
        area <= 0.0 || 3.0 * self.volume() / area <= self.tol()
    }

    /// Clips against one halfspace. Returns whether anything changed.
    fn clip_in_place(&mut self, h: &HalfSpace, scratch: &mut Scratch) -> bool {
        let nn = h.normal.norm();
        let tol = self.tol();
        // Most halfspaces are redundant; reject them before doing any work.
        let cutoff = h.offset - tol * nn;
        if self.vertices.iter().all(|v| v.dot(h.normal) >= cutoff) {
            return false;
        }
        let Scratch { signed, cut_vertex, cap_edges, ring, keep, remap, vertices: spare } = scratch;
        signed.clear();
        signed.extend(self.vertices.iter().map(|&v| h.slack(v) / nn));
        if signed.iter().all(|&s| s <= tol) {
            self.make_empty();
            return true;
        }
        // 1 inside, 0 on the plane, -1 cut away
        let class = |s: f64| -> i8 {
            if s > tol {
                1
            } else if s < -tol {
                -1
            } else {
                0
            }
        };
        let old_count = self.vertices.len();
        let vertices = &mut self.vertices;
        let on_plane = |v: usize| v >= old_count || class(signed[v]) == 0;
        // (lower endpoint, upper endpoint, new vertex) for every cut edge
        cut_vertex.clear();
        // edges of the new facet, in its ring direction
        cap_edges.clear();
        keep.clear();

        for facet in self.facets.iter_mut() {
            if facet.ring.iter().any(|&v| class(signed[v]) < 0) {
                let k = facet.ring.len();
                ring.clear();
                for i in 0..k {
                    let u = facet.ring[i];
                    let w = facet.ring[(i + 1) % k];
                    let (cu, cw) = (class(signed[u]), class(signed[w]));
                    if cu >= 0 {
                        ring.push(u);
                    }
                    if cu * cw < 0 {
                        let key = (u.min(w), u.max(w));
                        let idx = match cut_vertex.iter().find(|c| (c.0, c.1) == key) {
                            Some(c) => c.2,
                            None => {
                                let (a, b) = if cu > 0 { (u, w) } else { (w, u) };
                                let t = signed[a] / (signed[a] - signed[b]);
                                vertices.push(vertices[a] + (vertices[b] - vertices[a]) * t);
                                cut_vertex.push((key.0, key.1, vertices.len() - 1));
                                vertices.len() - 1
                            }
                        };
                        ring.push(idx);
                    }
                }
                if ring.len() < 3 {
                    keep.push(false);
                    continue;
                }
                std::mem::swap(&mut facet.ring, ring);
            }
            if facet.ring.iter().all(|&v| on_plane(v)) {
                keep.push(false);
                continue;
            }
            keep.push(true);
            let m = facet.ring.len();
            for i in 0..m {
                let (a, b) = (facet.ring[i], facet.ring[(i + 1) % m]);
                if on_plane(a) && on_plane(b) {
                    // The new facet traverses this edge in the opposite direction.
                    cap_edges.push((b, a));
                }
            }
        }
        let mut kept = keep.iter();
        self.facets.retain(|_| *kept.next().unwrap_or(&false));

        let cap_ring = chain_ring(cap_edges).unwrap_or_else(|| {
            let mut ids: Vec<usize> = cap_edges.iter().map(|e| e.0).collect();
            ids.sort_unstable();
            ids.dedup();
            order_ring(vertices, &ids, -h.normal)
        });
        if cap_ring.len() >= 3 {
            self.facets.push(Facet { halfspace: *h, ring: cap_ring });
        }
        self.compact(remap, spare);
        if self.facets.len() < 4 {
            self.make_empty();
        }
        true
    }

    /// Drops unreferenced vertices and renumbers rings.
    fn compact(&mut self, remap: &mut Vec<usize>, spare: &mut Vec<Vec3>) {
        remap.clear();
        remap.resize(self.vertices.len(), usize::MAX);
        spare.clear();
        for f in &mut self.facets {
            for v in &mut f.ring {
                if remap[*v] == usize::MAX {
                    remap[*v] = spare.len();
                    spare.push(self.vertices[*v]);
                }
                *v = remap[*v];
            }
        }
        std::mem::swap(&mut self.vertices, spare);
    }

    /// Writes the polytope in ASCII OFF format.
    pub fn write_off<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "OFF")?;
        writeln!(out, "{} {} 0", self.vertices.len(), self.facets.len())?;
        for v in &self.vertices {
            writeln!(out, "{} {} {}", v.x, v.y, v.z)?;
        }
        for f in &self.facets {
            write!(out, "{}", f.ring.len())?;
            for i in &f.ring {
                write!(out, " {i}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn export_off<P: AsRef<Path>>(&self, path: P) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_off(&mut w)?;
        w.flush()
    }
}

/// Buffers reused across the cuts of one clipping pass.
#[derive(Default)]
struct Scratch {
    signed: Vec<f64>,
    cut_vertex: Vec<(usize, usize, usize)>,
    cap_edges: Vec<(usize, usize)>,
    ring: Vec<usize>,
    keep: Vec<bool>,
    remap: Vec<usize>,
    vertices: Vec<Vec3>,
}

/// Chains directed edges into one cycle; `None` unless every edge is used
/// exactly once and each vertex has a single successor.
fn chain_ring(edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let start = edges.iter().map(|e| e.0).min()?;
    let mut ring = Vec::with_capacity(edges.len());
    let mut cur = start;
    loop {
        ring.push(cur);
        let mut succ = edges.iter().filter(|e| e.0 == cur);
        let next = succ.next()?.1;
        if succ.next().is_some() || ring.len() > edges.len() {
            return None;
        }
        cur = next;
        if cur == start {
            break;
        }
    }
    (ring.len() == edges.len()).then_some(ring)
}

/// Sorts coplanar points counter-clockwise around `outward`.
fn order_ring(vertices: &[Vec3], ids: &[usize], outward: Vec3) -> Vec<usize> {
    if ids.is_empty() {
        return Vec::new();
    }
    let c = ids.iter().fold(Vec3::ZERO, |acc, &i| acc + vertices[i]) / ids.len() as f64;
    let n = outward.normalized();
    // any direction orthogonal to n
    let helper = if n.x.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    let e1 = n.cross(helper).normalized();
    let e2 = n.cross(e1);
    let mut keyed: Vec<(f64, usize)> = ids
        .iter()
        .map(|&i| {
            let d = vertices[i] - c;
            (d.dot(e2).atan2(d.dot(e1)), i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Facet count of `[-w, w]³ ∩ halfspaces`.
pub fn facet_count(poly: &ConvexPolytope3) -> usize {
    poly.facet_count()
}

/// Builds the logarithmic-time membership structure for `poly`.
pub fn build_membership(poly: &ConvexPolytope3) -> MembershipStructure {
    MembershipStructure::build(poly)
}

/// Strict-interior query against a membership structure.
pub fn query_membership(ms: &MembershipStructure, x: Vec3) -> bool {
    ms.contains(x, &mut QueryCounter::default())
}
