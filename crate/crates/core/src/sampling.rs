//! Seeded samplers: Poisson, Gauss-Poisson (and its Palm version), compound
//! Poisson, and the typical Poisson-Delaunay triangle.
//!
//! Every sampler takes a [`Seed`]. The `*_with` variants take an `Rng` so that
//! several draws can share one stream inside a replication.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError, Point, Triangle, Window};
use crate::metrics::Pmf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("intensity must be positive and finite, got {0}")]
    InvalidIntensity(f64),
    #[error("invalid Gauss-Poisson probabilities: {0}")]
    InvalidGaussPoisson(String),
    #[error("cluster size law must put no mass on 0")]
    ZeroSizeCluster,
    #[error("window does not contain the origin")]
    WindowExcludesOrigin,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// 64-bit finaliser from SplitMix64.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Master seed plus replication index.
///
/// The stream seed is `splitmix64(value ^ splitmix64(replication_index))`,
/// which feeds a ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub value: u64,
    pub replication_index: u64,
}

impl Seed {
    pub const fn new(value: u64, replication_index: u64) -> Self {
        Seed {
            value,
            replication_index,
        }
    }

    pub fn mixed(&self) -> u64 {
        splitmix64(self.value ^ splitmix64(self.replication_index))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.mixed())
    }

    /// Independent sub-stream, e.g. for auxiliary draws of a study.
    pub fn substream(&self, tag: u64) -> Seed {
        Seed::new(splitmix64(self.value ^ tag.rotate_left(17)), self.replication_index)
    }
}

impl From<u64> for Seed {
    fn from(value: u64) -> Self {
        Seed::new(value, 0)
    }
}

/// Finite list of planar points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountingMeasure {
    points: Vec<Point>,
}

impl CountingMeasure {
    pub fn new(points: Vec<Point>) -> Self {
        CountingMeasure { points }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: Point) {
        self.points.push(p);
    }

    pub fn count_in(&self, w: &Window) -> usize {
        self.points.iter().filter(|p| w.contains(p)).count()
    }

    pub fn restrict(&self, w: &Window) -> CountingMeasure {
        CountingMeasure::new(self.points.iter().copied().filter(|p| w.contains(p)).collect())
    }

    pub fn union(mut self, other: CountingMeasure) -> CountingMeasure {
        self.points.extend(other.points);
        self
    }
}

impl FromIterator<Point> for CountingMeasure {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        CountingMeasure::new(iter.into_iter().collect())
    }
}

/// Probabilities of a parent producing 0, 1 or 2 points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussPoissonParams {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

impl GaussPoissonParams {
    pub fn new(p0: f64, p1: f64, p2: f64) -> Result<Self, SamplingError> {
        let bad = |m: &str| Err(SamplingError::InvalidGaussPoisson(m.to_string()));
        if ![p0, p1, p2].iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]");
        }
        // p0 = 0 is admitted as the pure-Poisson boundary (p1 = 1, p2 = 0 and the like).
        if p1 <= 0.0 {
            return bad("p1 must be positive");
        }
        if (p0 + p1 + p2 - 1.0).abs() > 1e-12 {
            return bad("p0 + p1 + p2 must equal 1");
        }
        Ok(GaussPoissonParams { p0, p1, p2 })
    }

    /// `p0` is implied as `1 - p1 - p2`.
    pub fn from_p1_p2(p1: f64, p2: f64) -> Result<Self, SamplingError> {
        let p0 = 1.0 - p1 - p2;
        Self::new(if p0.abs() < 1e-12 { 0.0 } else { p0 }, p1, p2)
    }

    /// Point intensity `p1 + 2 p2`.
    pub fn intensity(&self) -> f64 {
        self.p1 + 2.0 * self.p2
    }

    /// Probability that a typical point sits in a two-point cluster.
    pub fn palm_pair_probability(&self) -> f64 {
        2.0 * self.p2 / (self.p1 + 2.0 * self.p2)
    }
}

/// Cluster-centre intensity and cluster-size law of a compound Poisson process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundParams {
    pub intensity: f64,
    pub cluster_law: Pmf,
}

impl CompoundParams {
    pub fn new(intensity: f64, cluster_law: Pmf) -> Result<Self, SamplingError> {
        if !(intensity > 0.0 && intensity.is_finite()) {
            return Err(SamplingError::InvalidIntensity(intensity));
        }
        if cluster_law.get(0) > 0.0 {
            return Err(SamplingError::ZeroSizeCluster);
        }
        Ok(CompoundParams { intensity, cluster_law })
    }

    pub fn mean_cluster_size(&self) -> f64 {
        self.cluster_law.mean()
    }
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, w: &Window) -> Point {
    let o = w.min_corner();
    let s = w.side();
    Point::new(o.x + s * rng.random::<f64>(), o.y + s * rng.random::<f64>())
}

fn poisson_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive Poisson mean");
    let k: f64 = d.sample(rng);
    k as usize
}

pub fn poisson_with<R: Rng + ?Sized>(
    rng: &mut R,
    intensity: f64,
    window: &Window,
) -> Result<CountingMeasure, SamplingError> {
    if !(intensity > 0.0 && intensity.is_finite()) {
        return Err(SamplingError::InvalidIntensity(intensity));
    }
    let n = poisson_count(rng, intensity * window.area());
    Ok((0..n).map(|_| uniform_in(rng, window)).collect())
}

/// Homogeneous Poisson process of the given intensity on `window`.
pub fn sample_poisson(intensity: f64, window: &Window, seed: Seed) -> Result<CountingMeasure, SamplingError> {
    poisson_with(&mut seed.rng(), intensity, window)
}

/// Half the cluster diameter: parents farther than this from the window
/// cannot contribute points to it.
pub const GAUSS_POISSON_GUARD: f64 = 0.5;

pub fn gauss_poisson_with<R: Rng + ?Sized>(
    rng: &mut R,
    params: &GaussPoissonParams,
    window: &Window,
    parent_guard: f64,
) -> CountingMeasure {
    let parents = window.dilate(parent_guard).expect("non-negative guard");
    let n = poisson_count(rng, parents.area());
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = uniform_in(rng, &parents);
        let u: f64 = rng.random();
        if u < params.p0 {
            continue;
        }
        if u < params.p0 + params.p1 {
            if window.contains(&x) {
                out.push(x);
            }
            continue;
        }
        let (s, c) = (TAU * rng.random::<f64>()).sin_cos();
        for sign in [0.5, -0.5] {
            let y = x.translate(sign * c, sign * s);
            if window.contains(&y) {
                out.push(y);
            }
        }
    }
    CountingMeasure::new(out)
}

/// Stationary Gauss-Poisson process (parents of intensity 1) restricted to `window`.
pub fn sample_gauss_poisson(params: &GaussPoissonParams, window: &Window, seed: Seed) -> CountingMeasure {
    gauss_poisson_with(&mut seed.rng(), params, window, GAUSS_POISSON_GUARD)
}

pub fn gp_palm_cluster_with<R: Rng + ?Sized>(rng: &mut R, params: &GaussPoissonParams) -> CountingMeasure {
    let mut pts = vec![Point::ORIGIN];
    if rng.random::<f64>() < params.palm_pair_probability() {
        let (s, c) = (TAU * rng.random::<f64>()).sin_cos();
        pts.push(Point::new(c, s));
    }
    CountingMeasure::new(pts)
}

/// The cluster containing the typical point: `{o}` or `{o, o + e_theta}`.
pub fn gp_palm_cluster(params: &GaussPoissonParams, seed: Seed) -> CountingMeasure {
    gp_palm_cluster_with(&mut seed.rng(), params)
}

/// Palm version at the origin: an independent stationary sample plus the
/// origin's own cluster, restricted to `window`.
pub fn sample_palm_gauss_poisson(
    params: &GaussPoissonParams,
    window: &Window,
    seed: Seed,
) -> Result<CountingMeasure, SamplingError> {
    if !window.contains(&Point::ORIGIN) {
        return Err(SamplingError::WindowExcludesOrigin);
    }
    let mut rng = seed.rng();
    let cluster = gp_palm_cluster_with(&mut rng, params).restrict(window);
    let rest = gauss_poisson_with(&mut rng, params, window, GAUSS_POISSON_GUARD);
    Ok(cluster.union(rest))
}

pub fn compound_poisson_with<R: Rng + ?Sized>(
    rng: &mut R,
    params: &CompoundParams,
    window: &Window,
) -> Vec<(Point, usize)> {
    let n = poisson_count(rng, params.intensity * window.area());
    (0..n)
        .map(|_| {
            let x = uniform_in(rng, window);
            let m = params.cluster_law.quantile(rng.random());
            (x, m.max(1))
        })
        .collect()
}

/// Marked cluster centres `(x_k, m_k)` of a compound Poisson process.
pub fn sample_compound_poisson(params: &CompoundParams, window: &Window, seed: Seed) -> Vec<(Point, usize)> {
    compound_poisson_with(&mut seed.rng(), params, window)
}

/// Expands marked centres into a counting measure with repeated points.
pub fn expand_clusters(clusters: &[(Point, usize)]) -> CountingMeasure {
    clusters.iter().flat_map(|&(p, m)| std::iter::repeat_n(p, m)).collect()
}

/// Circumradius and the three vertex directions of a typical triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypicalTriangle {
    pub radius: f64,
    pub directions: [Point; 3],
}

impl TypicalTriangle {
    pub fn vertices(&self) -> [Point; 3] {
        self.directions.map(|u| u.scale(self.radius))
    }

    pub fn triangle(&self) -> Result<Triangle, GeometryError> {
        let [a, b, c] = self.vertices();
        Triangle::new(a, b, c)
    }

    pub fn min_angle(&self) -> Result<f64, GeometryError> {
        let [a, b, c] = self.vertices();
        geometry::min_angle(a, b, c)
    }
}

/// Area of the equilateral triangle inscribed in the unit circle; the maximum
/// over all inscribed triangles.
pub const MAX_INSCRIBED_AREA: f64 = 1.299_038_105_676_658; // 3 sqrt(3) / 4

/// Unit-circle triangle area `|Delta(u)|`.
pub fn inscribed_area(u: &[Point; 3]) -> f64 {
    0.5 * geometry::signed_area2(u[0], u[1], u[2]).abs()
}

pub fn typical_directions_with<R: Rng + ?Sized>(rng: &mut R) -> [Point; 3] {
    loop {
        let u = [0, 1, 2].map(|_| {
            let (s, c) = (TAU * rng.random::<f64>()).sin_cos();
            Point::new(c, s)
        });
        if rng.random::<f64>() * MAX_INSCRIBED_AREA < inscribed_area(&u) {
            return u;
        }
    }
}

pub fn typical_triangle_with<R: Rng + ?Sized>(rng: &mut R) -> TypicalTriangle {
    // R^2 ~ Gamma(shape 2, rate pi) at unit intensity.
    let gamma = Gamma::new(2.0, 1.0 / PI).expect("valid gamma");
    let r2: f64 = gamma.sample(rng);
    let directions = typical_directions_with(rng);
    TypicalTriangle {
        radius: r2.sqrt(),
        directions,
    }
}

/// Typical triangle of the unit-intensity Poisson-Delaunay tessellation.
pub fn sample_typical_triangle(seed: Seed) -> TypicalTriangle {
    typical_triangle_with(&mut seed.rng())
}
