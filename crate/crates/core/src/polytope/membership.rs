//! Point location in a convex polytope.
//!
//! The boundary is triangulated and coarsened repeatedly by removing an
//! independent set of low-degree vertices and re-triangulating each hole with
//! the hull of its link (a Dobkin–Kirkpatrick hierarchy). Levels shrink
//! geometrically, the coarsest has a handful of triangles, and every new
//! triangle remembers the star it replaced.
//!
//! A query shoots a ray from a fixed interior point `o` towards `x` and finds
//! the triangle where the ray leaves the polytope, level by level. `x` lies
//! inside iff it lies beneath that exit facet.

use std::collections::HashMap;

use super::{ConvexPolytope3, HalfSpace, Strictness, CLIP_TOL};
use crate::geometry::Vec3;

/// Polytopes with at most this many ball facets are tested by a linear scan.
pub const FLAT_LIMIT: usize = 16;

/// Vertices of higher degree are never removed.
const MAX_DEGREE: usize = 9;

/// Coarsening stops once this few vertices remain.
const TOP_VERTICES: usize = 8;

const MAX_LEVELS: usize = 96;

/// Elementary operations spent on queries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueryCounter {
    /// Ray/plane evaluations while descending the hierarchy.
    pub plane_tests: u64,
    /// Final halfspace (or ball) tests against candidate facets.
    pub facet_tests: u64,
}

impl QueryCounter {
    pub fn total(&self) -> u64 {
        self.plane_tests + self.facet_tests
    }

    pub fn add(&mut self, other: &QueryCounter) {
        self.plane_tests += other.plane_tests;
        self.facet_tests += other.facet_tests;
    }
}

/// Result of locating a point: the facets that decide membership.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Location {
    /// The polytope is empty; nothing is inside.
    Empty,
    /// Every facet must be tested.
    All,
    /// Indices of the exit facet and its neighbours.
    Near { ids: [u32; 4], len: u8 },
}

impl Location {
    /// Candidate facet indices; `None` for [`Location::All`] and [`Location::Empty`].
    pub fn ids(&self) -> Option<&[u32]> {
        match self {
            Location::Near { ids, len } => Some(&ids[..*len as usize]),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Tri {
    v: [u32; 3],
    normal: Vec3,
    beta: f64,
    /// `beta − normal·o`, positive for the interior point.
    gap: f64,
}

#[derive(Clone, Debug)]
enum Down {
    Same(u32),
    Pocket(Vec<u32>),
}

#[derive(Clone, Debug)]
struct Level {
    tris: Vec<Tri>,
    /// Parallel to `tris`; links into the next finer level. Empty at level 0.
    down: Vec<Down>,
}

#[derive(Clone, Debug)]
pub struct Hierarchy {
    levels: Vec<Level>,
    interior: Vec3,
    /// Facet of every level-0 triangle.
    facet_of: Vec<u32>,
    /// Edge-adjacent triangles of every level-0 triangle.
    adjacent: Vec<[u32; 3]>,
}

#[derive(Clone, Debug)]
pub enum MembershipStructure {
    Empty,
    Flat { facets: Vec<HalfSpace> },
    Hierarchy { facets: Vec<HalfSpace>, hierarchy: Box<Hierarchy> },
}

impl MembershipStructure {
    pub fn build(poly: &ConvexPolytope3) -> Self {
        if poly.is_empty() {
            return MembershipStructure::Empty;
        }
        let facets: Vec<HalfSpace> = poly.halfspaces().copied().collect();
        if poly.ball_facet_count() <= FLAT_LIMIT {
            return MembershipStructure::Flat { facets };
        }
        match Hierarchy::build(poly) {
            Some(h) => MembershipStructure::Hierarchy { facets, hierarchy: Box::new(h) },
            None => MembershipStructure::Flat { facets },
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, MembershipStructure::Empty)
    }

    pub fn facets(&self) -> &[HalfSpace] {
        match self {
            MembershipStructure::Empty => &[],
            MembershipStructure::Flat { facets } | MembershipStructure::Hierarchy { facets, .. } => facets,
        }
    }

    /// Number of hierarchy levels (1 for a flat scan, 0 when empty).
    pub fn depth(&self) -> usize {
        match self {
            MembershipStructure::Empty => 0,
            MembershipStructure::Flat { .. } => 1,
            MembershipStructure::Hierarchy { hierarchy, .. } => hierarchy.levels.len(),
        }
    }

    /// Triangles per level, finest first.
    pub fn level_sizes(&self) -> Vec<usize> {
        match self {
            MembershipStructure::Hierarchy { hierarchy, .. } => hierarchy.levels.iter().map(|l| l.tris.len()).collect(),
            _ => Vec::new(),
        }
    }

    /// Finds the facets that decide whether `x` is inside.
    pub fn locate(&self, x: Vec3, counter: &mut QueryCounter) -> Location {
        match self {
            MembershipStructure::Empty => Location::Empty,
            MembershipStructure::Flat { .. } => Location::All,
            MembershipStructure::Hierarchy { hierarchy, .. } => hierarchy.locate(x, counter),
        }
    }

    /// Strict membership in inversion space (box faces closed).
    pub fn contains(&self, x: Vec3, counter: &mut QueryCounter) -> bool {
        self.contains_with(x, Strictness::Strict, counter)
    }

    pub fn contains_with(&self, x: Vec3, strictness: Strictness, counter: &mut QueryCounter) -> bool {
        let eps = crate::geometry::DEFAULT_EPS;
        let facets = self.facets();
        match self.locate(x, counter) {
            Location::Empty => false,
            Location::All => {
                counter.facet_tests += facets.len() as u64;
                facets.iter().all(|h| h.admits(x, strictness, eps))
            }
            loc @ Location::Near { .. } => {
                let ids = loc.ids().unwrap_or(&[]);
                counter.facet_tests += ids.len() as u64;
                ids.iter().all(|&i| facets[i as usize].admits(x, strictness, eps))
            }
        }
    }
}

fn plane_of(a: Vec3, b: Vec3, c: Vec3) -> Option<(Vec3, f64)> {
    let n = (b - a).cross(c - a);
    let len = n.norm();
    if len.is_nan() || len <= 0.0 {
        return None;
    }
    let n = n / len;
    Some((n, n.dot(a)))
}

impl Hierarchy {
    fn build(poly: &ConvexPolytope3) -> Option<Self> {
        let vertices = poly.vertices().to_vec();
        let w = poly.halfwidth();
        let tol = 10.0 * CLIP_TOL * w;

        let mut tris = Vec::new();
        let mut facet_of = Vec::new();
        for (fi, f) in poly.facets().iter().enumerate() {
            let c = f.halfspace.normal;
            let len = c.norm();
            let normal = -c / len;
            let beta = -f.halfspace.offset / len;
            for k in 1..f.ring.len() - 1 {
                let v = [f.ring[0] as u32, f.ring[k] as u32, f.ring[k + 1] as u32];
                tris.push(Tri { v, normal, beta, gap: 0.0 });
                facet_of.push(fi as u32);
            }
        }
        let adjacent = adjacency(&tris)?;

        let mut levels = vec![Level { tris, down: Vec::new() }];
        let mut alive = vertices.len();
        while alive > TOP_VERTICES && levels.len() < MAX_LEVELS {
            let current = levels.last().expect("at least one level");
            let Some((next, removed)) = coarsen(&vertices, current, tol) else { break };
            if removed == 0 {
                break;
            }
            alive -= removed;
            levels.push(next);
        }

        // The interior point must be strictly inside the coarsest level.
        while let Some(top) = levels.last() {
            let mut used = vec![false; vertices.len()];
            for t in &top.tris {
                for &v in &t.v {
                    used[v as usize] = true;
                }
            }
            let (sum, count) = used
                .iter()
                .zip(&vertices)
                .filter(|(u, _)| **u)
                .fold((Vec3::ZERO, 0usize), |(s, c), (_, &p)| (s + p, c + 1));
            let o = sum / count.max(1) as f64;
            if top.tris.iter().all(|t| t.beta - t.normal.dot(o) > tol) {
                let mut h = Hierarchy { levels, interior: o, facet_of, adjacent };
                for level in &mut h.levels {
                    for t in &mut level.tris {
                        t.gap = t.beta - t.normal.dot(o);
                    }
                }
                return Some(h);
            }
            levels.pop();
        }
        None
    }

    /// Exit parameter of the ray `o + t·d` through `tri`, if it points outward.
    #[inline]
    fn exit_t(tri: &Tri, d: Vec3) -> Option<f64> {
        let nd = tri.normal.dot(d);
        (nd > 0.0).then(|| tri.gap / nd)
    }

    fn best_of<I: Iterator<Item = u32>>(level: &Level, ids: I, d: Vec3, counter: &mut QueryCounter) -> Option<u32> {
        let mut best: Option<(f64, u32)> = None;
        for i in ids {
            counter.plane_tests += 1;
            if let Some(t) = Self::exit_t(&level.tris[i as usize], d) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
        }
        best.map(|(_, i)| i)
    }

    fn locate(&self, x: Vec3, counter: &mut QueryCounter) -> Location {
        let d = x - self.interior;
        if d.norm2() == 0.0 {
            return Location::All;
        }
        let top = self.levels.len() - 1;
        let Some(mut cur) = Self::best_of(&self.levels[top], 0..self.levels[top].tris.len() as u32, d, counter) else {
            return Location::All;
        };
        for lvl in (1..=top).rev() {
            let finer = &self.levels[lvl - 1];
            cur = match &self.levels[lvl].down[cur as usize] {
                Down::Same(j) => *j,
                Down::Pocket(star) => match Self::best_of(finer, star.iter().copied(), d, counter) {
                    Some(j) => j,
                    None => match Self::best_of(finer, 0..finer.tris.len() as u32, d, counter) {
                        Some(j) => j,
                        None => return Location::All,
                    },
                },
            };
        }
        let mut ids = [0u32; 4];
        let mut len = 0usize;
        for t in std::iter::once(cur).chain(self.adjacent[cur as usize]) {
            let f = self.facet_of[t as usize];
            if !ids[..len].contains(&f) {
                ids[len] = f;
                len += 1;
            }
        }
        Location::Near { ids, len: len as u8 }
    }
}

/// Edge-adjacent triangles; `None` unless the mesh is a closed 2-manifold.
fn adjacency(tris: &[Tri]) -> Option<Vec<[u32; 3]>> {
    let mut edge: HashMap<(u32, u32), u32> = HashMap::with_capacity(tris.len() * 3);
    for (i, t) in tris.iter().enumerate() {
        for k in 0..3 {
            if edge.insert((t.v[k], t.v[(k + 1) % 3]), i as u32).is_some() {
                return None;
            }
        }
    }
    tris.iter()
        .map(|t| {
            let mut adj = [0u32; 3];
            for (k, slot) in adj.iter_mut().enumerate() {
                *slot = *edge.get(&(t.v[(k + 1) % 3], t.v[k]))?;
            }
            Some(adj)
        })
        .collect()
}

/// One coarsening step. Returns the next level and how many vertices it lost.
fn coarsen(vertices: &[Vec3], level: &Level, tol: f64) -> Option<(Level, usize)> {
    let nv = vertices.len();
    let mut incident: Vec<Vec<u32>> = vec![Vec::new(); nv];
    let mut edge: HashMap<(u32, u32), u32> = HashMap::with_capacity(level.tris.len() * 3);
    for (i, t) in level.tris.iter().enumerate() {
        for k in 0..3 {
            incident[t.v[k] as usize].push(i as u32);
            edge.insert((t.v[k], t.v[(k + 1) % 3]), i as u32);
        }
    }

    let mut blocked = vec![false; nv];
    let mut removed_tri = vec![false; level.tris.len()];
    let mut new_tris: Vec<Tri> = Vec::new();
    let mut new_down: Vec<Down> = Vec::new();
    let mut removed = 0usize;

    for v in 0..nv {
        let star = &incident[v];
        if star.is_empty() || blocked[v] || star.len() > MAX_DEGREE {
            continue;
        }
        let Some(link) = link_cycle(v as u32, star, &level.tris) else { continue };
        let outer: Vec<u32> = link
            .iter()
            .zip(link.iter().cycle().skip(1))
            .filter_map(|(&a, &b)| edge.get(&(b, a)).map(|&t| third(&level.tris[t as usize], a, b)))
            .collect();
        let Some(patch) = fill_hole(vertices, v as u32, &link, &outer, tol) else { continue };

        blocked[v] = true;
        for &u in &link {
            blocked[u as usize] = true;
        }
        for &t in star {
            removed_tri[t as usize] = true;
        }
        for tri in patch {
            new_tris.push(tri);
            new_down.push(Down::Pocket(star.clone()));
        }
        removed += 1;
    }
    if removed == 0 {
        return Some((Level { tris: Vec::new(), down: Vec::new() }, 0));
    }

    let mut tris = Vec::with_capacity(level.tris.len());
    let mut down = Vec::with_capacity(level.tris.len());
    for (i, t) in level.tris.iter().enumerate() {
        if !removed_tri[i] {
            tris.push(*t);
            down.push(Down::Same(i as u32));
        }
    }
    tris.extend(new_tris);
    down.extend(new_down);
    Some((Level { tris, down }, removed))
}

fn third(t: &Tri, a: u32, b: u32) -> u32 {
    *t.v.iter().find(|&&x| x != a && x != b).expect("triangle has three distinct vertices")
}

/// Link of `v` as a cycle, counter-clockwise seen from outside.
fn link_cycle(v: u32, star: &[u32], tris: &[Tri]) -> Option<Vec<u32>> {
    let mut next: HashMap<u32, u32> = HashMap::with_capacity(star.len());
    for &t in star {
        let tv = tris[t as usize].v;
        let k = tv.iter().position(|&x| x == v)?;
        next.insert(tv[(k + 1) % 3], tv[(k + 2) % 3]);
    }
    let start = *next.keys().next()?;
    let mut cycle = vec![start];
    let mut cur = start;
    loop {
        cur = *next.get(&cur)?;
        if cur == start {
            break;
        }
        if cycle.len() >= star.len() {
            return None;
        }
        cycle.push(cur);
    }
    (cycle.len() == star.len() && cycle.len() >= 3).then_some(cycle)
}

/// Triangulates the hole left by `v` with hull faces of its link, by ear clipping.
fn fill_hole(vertices: &[Vec3], v: u32, link: &[u32], outer: &[u32], tol: f64) -> Option<Vec<Tri>> {
    let apex = vertices[v as usize];
    let valid = |a: u32, b: u32, c: u32| -> Option<Tri> {
        let (pa, pb, pc) = (vertices[a as usize], vertices[b as usize], vertices[c as usize]);
        let (normal, beta) = plane_of(pa, pb, pc)?;
        if normal.dot(apex) - beta < -tol {
            return None;
        }
        let beneath = link.iter().chain(outer).all(|&u| normal.dot(vertices[u as usize]) - beta <= tol);
        beneath.then_some(Tri { v: [a, b, c], normal, beta, gap: 0.0 })
    };

    let mut poly: Vec<u32> = link.to_vec();
    let mut out = Vec::with_capacity(link.len() - 2);
    while poly.len() > 3 {
        let k = poly.len();
        let ear = (0..k).find_map(|i| {
            let (a, b, c) = (poly[(i + k - 1) % k], poly[i], poly[(i + 1) % k]);
            valid(a, b, c).map(|t| (i, t))
        });
        let (i, t) = ear?;
        out.push(t);
        poly.remove(i);
    }
    out.push(valid(poly[0], poly[1], poly[2])?);
    Some(out)
}
