//! Incremental Delaunay triangulation (Bowyer–Watson) in the plane.
//!
//! Insertion follows a Hilbert-curve order and locates each point by a
//! visibility walk from the last created triangle. The convex hull is closed
//! with "ghost" triangles that share a symbolic vertex at infinity; a ghost
//! triangle `(a, b, inf)` conflicts with `p` when `p` lies strictly outside the
//! hull edge `a -> b` or in its relative interior. Orientation and in-circle
//! tests use adaptive exact predicates, so cocircular ties are resolved by
//! insertion order and never produce an invalid triangulation.

use std::collections::HashMap;

use robust::{incircle, orient2d, Coord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{circumcircle, GeometryError, Point, Triangle, Window};
use crate::sampling::CountingMeasure;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelaunayError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("all points are collinear")]
    DegenerateConfiguration,
    #[error("duplicate point {0:?}")]
    DuplicatePoint(Point),
    #[error("vertex index {0} out of range")]
    BadIndex(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Delaunay triangles of a point set, with adjacency.
///
/// `vertices[t]` lists counter-clockwise indices into `points`;
/// `neighbors[t][k]` is the triangle across the edge opposite `vertices[t][k]`
/// (`None` on the convex hull).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Triangulation {
    pub points: Vec<Point>,
    pub vertices: Vec<[usize; 3]>,
    pub neighbors: Vec<[Option<usize>; 3]>,
    pub triangles: Vec<Triangle>,
}

impl Triangulation {
    /// Builds a triangulation record from explicit vertex triples. No
    /// Delaunay property is implied; pair with [`verify_empty_circumdisk`].
    pub fn from_triangles(points: Vec<Point>, triples: &[[usize; 3]]) -> Result<Self, DelaunayError> {
        let mut vertices = Vec::with_capacity(triples.len());
        let mut triangles = Vec::with_capacity(triples.len());
        for &[a, b, c] in triples {
            for i in [a, b, c] {
                if i >= points.len() {
                    return Err(DelaunayError::BadIndex(i));
                }
            }
            let (pa, pb, pc) = (points[a], points[b], points[c]);
            let ccw = if crate::geometry::signed_area2(pa, pb, pc) > 0.0 {
                [a, b, c]
            } else {
                [a, c, b]
            };
            triangles.push(Triangle::new(points[ccw[0]], points[ccw[1]], points[ccw[2]])?);
            vertices.push(ccw);
        }
        let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        let mut neighbors = vec![[None; 3]; vertices.len()];
        for (t, v) in vertices.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (v[(k + 1) % 3], v[(k + 2) % 3]);
                if let Some(&(u, j)) = edges.get(&(b, a)) {
                    neighbors[t][k] = Some(u);
                    neighbors[u][j] = Some(t);
                } else {
                    edges.insert((a, b), (t, k));
                }
            }
        }
        Ok(Triangulation {
            points,
            vertices,
            neighbors,
            triangles,
        })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Number of hull edges (equal to the number of hull vertices).
    pub fn hull_edges(&self) -> usize {
        self.neighbors.iter().flatten().filter(|n| n.is_none()).count()
    }

    /// Vertex index sets, each sorted, in sorted order.
    pub fn canonical_triples(&self) -> Vec<[usize; 3]> {
        let mut out: Vec<[usize; 3]> = self
            .vertices
            .iter()
            .map(|v| {
                let mut s = *v;
                s.sort_unstable();
                s
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Structural self-check: counter-clockwise triangles, symmetric adjacency,
    /// each edge used at most twice.
    pub fn check_structure(&self) -> Result<(), String> {
        let mut edge_use: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, v) in self.vertices.iter().enumerate() {
            let [a, b, c] = v.map(|i| self.points[i]);
            if orient(a, b, c) <= 0.0 {
                return Err(format!("triangle {t} is not counter-clockwise"));
            }
            for k in 0..3 {
                let (x, y) = (v[(k + 1) % 3], v[(k + 2) % 3]);
                *edge_use.entry((x.min(y), x.max(y))).or_default() += 1;
                if let Some(u) = self.neighbors[t][k] {
                    let back = self.neighbors[u].iter().filter(|n| **n == Some(t)).count();
                    if back != 1 || !self.vertices[u].contains(&x) || !self.vertices[u].contains(&y) {
                        return Err(format!("adjacency of triangles {t} and {u} is inconsistent"));
                    }
                }
            }
        }
        if let Some((e, n)) = edge_use.iter().find(|(_, n)| **n > 2) {
            return Err(format!("edge {e:?} used {n} times"));
        }
        Ok(())
    }
}

const GHOST: u32 = u32::MAX;
const NO_TRI: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Tri {
    v: [u32; 3],
    n: [u32; 3],
}

impl Tri {
    #[inline]
    fn is_ghost(&self) -> bool {
        self.v[2] == GHOST
    }
}

#[inline]
fn coord(p: Point) -> Coord<f64> {
    Coord { x: p.x, y: p.y }
}

#[inline]
fn orient(a: Point, b: Point, c: Point) -> f64 {
    orient2d(coord(a), coord(b), coord(c))
}

struct Builder<'a> {
    pts: &'a [Point],
    tris: Vec<Tri>,
    alive: Vec<bool>,
    free: Vec<u32>,
    stamp: Vec<u32>,
    epoch: u32,
    last: u32,
    stack: Vec<u32>,
    cavity: Vec<u32>,
    boundary: Vec<(u32, u32, u32)>,
    created: Vec<u32>,
}

impl<'a> Builder<'a> {
    fn new(pts: &'a [Point]) -> Self {
        let cap = 2 * pts.len() + 8;
        Builder {
            pts,
            tris: Vec::with_capacity(cap),
            alive: Vec::with_capacity(cap),
            free: Vec::new(),
            stamp: Vec::with_capacity(cap),
            epoch: 0,
            last: 0,
            stack: Vec::new(),
            cavity: Vec::new(),
            boundary: Vec::new(),
            created: Vec::new(),
        }
    }

    #[inline]
    fn p(&self, i: u32) -> Point {
        self.pts[i as usize]
    }

    fn alloc(&mut self, t: Tri) -> u32 {
        if let Some(id) = self.free.pop() {
            self.tris[id as usize] = t;
            self.alive[id as usize] = true;
            id
        } else {
            self.tris.push(t);
            self.alive.push(true);
            self.stamp.push(0);
            (self.tris.len() - 1) as u32
        }
    }

    /// Seeds the structure with one counter-clockwise triangle and its three ghosts.
    fn init(&mut self, a: u32, b: u32, c: u32) {
        let (a, b, c) = if orient(self.p(a), self.p(b), self.p(c)) > 0.0 {
            (a, b, c)
        } else {
            (a, c, b)
        };
        let t = self.alloc(Tri {
            v: [a, b, c],
            n: [NO_TRI; 3],
        });
        // Ghost across edge (b, c) is (c, b, inf), etc.
        let g0 = self.alloc(Tri {
            v: [c, b, GHOST],
            n: [NO_TRI; 3],
        });
        let g1 = self.alloc(Tri {
            v: [a, c, GHOST],
            n: [NO_TRI; 3],
        });
        let g2 = self.alloc(Tri {
            v: [b, a, GHOST],
            n: [NO_TRI; 3],
        });
        self.tris[t as usize].n = [g0, g1, g2];
        // Ghost (c, b, inf): opposite c is edge (b, inf) shared with g2 = (b, a, inf);
        // opposite b is edge (inf, c) shared with g1 = (a, c, inf).
        self.tris[g0 as usize].n = [g2, g1, t];
        self.tris[g1 as usize].n = [g0, g2, t];
        self.tris[g2 as usize].n = [g1, g0, t];
        self.last = t;
    }

    #[inline]
    fn conflicts(&self, t: u32, p: Point) -> bool {
        let tri = &self.tris[t as usize];
        let a = self.p(tri.v[0]);
        let b = self.p(tri.v[1]);
        if tri.is_ghost() {
            let o = orient(a, b, p);
            if o > 0.0 {
                return true;
            }
            if o < 0.0 {
                return false;
            }
            // Collinear with the hull edge: conflict only strictly inside the segment.
            let dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
            let len2 = (b.x - a.x).powi(2) + (b.y - a.y).powi(2);
            return dot > 0.0 && dot < len2;
        }
        let c = self.p(tri.v[2]);
        incircle(coord(a), coord(b), coord(c), coord(p)) > 0.0
    }

    fn locate(&self, p: Point) -> u32 {
        let mut cur = self.last;
        if self.tris[cur as usize].is_ghost() {
            cur = self.tris[cur as usize].n[2];
        }
        let mut steps = 0usize;
        'walk: loop {
            let t = &self.tris[cur as usize];
            if t.is_ghost() {
                return cur;
            }
            // Rotate the starting edge to avoid systematic bias.
            let start = steps % 3;
            for j in 0..3 {
                let k = (start + j) % 3;
                let a = self.p(t.v[(k + 1) % 3]);
                let b = self.p(t.v[(k + 2) % 3]);
                if orient(a, b, p) < 0.0 {
                    cur = t.n[k];
                    steps += 1;
                    continue 'walk;
                }
            }
            return cur;
        }
    }

    fn insert(&mut self, pi: u32) -> Result<(), DelaunayError> {
        let p = self.p(pi);
        let start = self.locate(p);
        if !self.conflicts(start, p) {
            return Err(DelaunayError::DuplicatePoint(p));
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        let epoch = self.epoch;
        self.cavity.clear();
        self.boundary.clear();
        self.stack.clear();
        self.stack.push(start);
        self.stamp[start as usize] = epoch;
        self.cavity.push(start);
        while let Some(t) = self.stack.pop() {
            let tri = self.tris[t as usize];
            for k in 0..3 {
                let nb = tri.n[k];
                if self.stamp[nb as usize] == epoch {
                    continue;
                }
                if self.conflicts(nb, p) {
                    self.stamp[nb as usize] = epoch;
                    self.stack.push(nb);
                    self.cavity.push(nb);
                } else {
                    self.boundary.push((tri.v[(k + 1) % 3], tri.v[(k + 2) % 3], nb));
                }
            }
        }

        for &t in &self.cavity {
            self.alive[t as usize] = false;
            self.free.push(t);
        }
        self.created.clear();
        for bi in 0..self.boundary.len() {
            let (u, w, outside) = self.boundary[bi];
            let id = self.alloc(Tri {
                v: [u, w, pi],
                n: [NO_TRI, NO_TRI, outside],
            });
            self.created.push(id);
            // Re-point the outside triangle's edge (w, u) to the new triangle.
            let o = &mut self.tris[outside as usize];
            for k in 0..3 {
                let (x, y) = (o.v[(k + 1) % 3], o.v[(k + 2) % 3]);
                if x == w && y == u {
                    o.n[k] = id;
                    break;
                }
            }
        }
        // Fan adjacency: (u, w, p) meets (w, *, p) across (w, p) and (*, u, p) across (p, u).
        for i in 0..self.created.len() {
            let ti = self.created[i];
            let [u, w, _] = self.tris[ti as usize].v;
            for j in 0..self.created.len() {
                let tj = self.created[j];
                let vj = self.tris[tj as usize].v;
                if vj[0] == w {
                    self.tris[ti as usize].n[0] = tj;
                }
                if vj[1] == u {
                    self.tris[ti as usize].n[1] = tj;
                }
            }
        }
        for i in 0..self.created.len() {
            let ti = self.created[i] as usize;
            let t = self.tris[ti];
            // Keep the ghost vertex in the last slot.
            if t.v[0] == GHOST {
                self.tris[ti] = Tri {
                    v: [t.v[1], t.v[2], t.v[0]],
                    n: [t.n[1], t.n[2], t.n[0]],
                };
            } else if t.v[1] == GHOST {
                self.tris[ti] = Tri {
                    v: [t.v[2], t.v[0], t.v[1]],
                    n: [t.n[2], t.n[0], t.n[1]],
                };
            }
        }
        self.last = self
            .created
            .iter()
            .copied()
            .find(|&t| !self.tris[t as usize].is_ghost())
            .unwrap_or(self.created[0]);
        Ok(())
    }
}

/// Hilbert-curve index of `(x, y)` on a `2^order` grid.
fn hilbert_index(mut x: u32, mut y: u32, order: u32) -> u64 {
    let mut d: u64 = 0;
    let full = (1u32 << order) - 1;
    let mut s = 1u32 << (order - 1);
    while s > 0 {
        let rx = ((x & s) > 0) as u32;
        let ry = ((y & s) > 0) as u32;
        d += (s as u64) * (s as u64) * ((3 * rx) ^ ry) as u64;
        if ry == 0 {
            if rx == 1 {
                x = full - x;
                y = full - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s >>= 1;
    }
    d
}

fn insertion_order(points: &[Point]) -> Vec<u32> {
    const ORDER: u32 = 16;
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        lo_x = lo_x.min(p.x);
        lo_y = lo_y.min(p.y);
        hi_x = hi_x.max(p.x);
        hi_y = hi_y.max(p.y);
    }
    let span = (hi_x - lo_x).max(hi_y - lo_y).max(f64::MIN_POSITIVE);
    let cells = ((1u32 << ORDER) - 1) as f64;
    let mut keyed: Vec<(u64, u32)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let gx = ((p.x - lo_x) / span * cells) as u32;
            let gy = ((p.y - lo_y) / span * cells) as u32;
            (hilbert_index(gx, gy, ORDER), i as u32)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Delaunay triangulation of a finite planar point set.
pub fn triangulate(points: &CountingMeasure) -> Result<Triangulation, DelaunayError> {
    triangulate_points(points.points())
}

pub fn triangulate_points(points: &[Point]) -> Result<Triangulation, DelaunayError> {
    if points.len() < 3 {
        return Err(DelaunayError::TooFewPoints(points.len()));
    }
    for p in points {
        Point::try_new(p.x, p.y)?;
    }
    let mut order = insertion_order(points);
    // First two distinct points, then the first point off their line.
    let first = order[0];
    let second_pos = order[1..]
        .iter()
        .position(|&i| points[i as usize] != points[first as usize])
        .map(|k| k + 1)
        .ok_or(DelaunayError::DuplicatePoint(points[first as usize]))?;
    order.swap(1, second_pos);
    let (a, b) = (points[order[0] as usize], points[order[1] as usize]);
    let third_pos = order[2..]
        .iter()
        .position(|&i| orient(a, b, points[i as usize]) != 0.0)
        .map(|k| k + 2)
        .ok_or(DelaunayError::DegenerateConfiguration)?;
    order.swap(2, third_pos);

    let mut builder = Builder::new(points);
    builder.init(order[0], order[1], order[2]);
    for &i in &order[3..] {
        builder.insert(i)?;
    }
    finish(builder, points)
}

fn finish(b: Builder<'_>, points: &[Point]) -> Result<Triangulation, DelaunayError> {
    let mut remap = vec![usize::MAX; b.tris.len()];
    let mut vertices = Vec::with_capacity(2 * points.len());
    for (id, t) in b.tris.iter().enumerate() {
        if b.alive[id] && !t.is_ghost() {
            remap[id] = vertices.len();
            vertices.push(t.v.map(|i| i as usize));
        }
    }
    let mut neighbors = Vec::with_capacity(vertices.len());
    let mut triangles = Vec::with_capacity(vertices.len());
    for (id, t) in b.tris.iter().enumerate() {
        if remap[id] == usize::MAX {
            continue;
        }
        neighbors.push(t.n.map(|n| {
            let r = remap[n as usize];
            (r != usize::MAX).then_some(r)
        }));
        let [pa, pb, pc] = t.v.map(|i| points[i as usize]);
        triangles.push(Triangle::new(pa, pb, pc)?);
    }
    Ok(Triangulation {
        points: points.to_vec(),
        vertices,
        neighbors,
        triangles,
    })
}

/// Relative slack of the empty-circumdisk oracle.
pub const EMPTY_DISK_TOL: f64 = 1e-9;

/// Brute-force check that no point lies strictly inside any circumdisk.
pub fn verify_empty_circumdisk(tri: &Triangulation, points: &CountingMeasure) -> bool {
    let pts = points.points();
    tri.vertices.iter().all(|v| {
        let [a, b, c] = v.map(|i| tri.points[i]);
        let Ok((z, r)) = circumcircle(a, b, c) else {
            return false;
        };
        let limit = r - EMPTY_DISK_TOL * r;
        let limit2 = limit * limit;
        pts.iter()
            .all(|p| *p == a || *p == b || *p == c || z.dist2(p) >= limit2)
    })
}

/// Triangles whose circumcentre lies in `window` and, when `guard > 0`, whose
/// circumdisk lies inside `window` dilated by `guard`. Those triangles are
/// unaffected by points outside the dilated window.
pub fn interior_triangles(tri: &Triangulation, window: &Window, guard: f64) -> Vec<Triangle> {
    let region = (guard > 0.0).then(|| window.dilate(guard).expect("positive guard"));
    tri.triangles
        .iter()
        .filter(|t| window.contains(&t.circumcenter))
        .filter(|t| region.is_none_or(|r| r.contains_disk(&t.circumcenter, t.circumradius)))
        .copied()
        .collect()
}
