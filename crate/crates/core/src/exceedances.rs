//! Exceedance processes for nearest-neighbour distances and small Delaunay
//! angles, thresholds, and their cluster decomposition.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{gp_void_prob, gp_void_prob_one_sided};
use crate::delaunay::{triangulate, DelaunayError, Triangulation};
use crate::geometry::{GeometryError, Point, Window};
use crate::metrics::Pmf;
use crate::sampling::{CountingMeasure, GaussPoissonParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExceedanceError {
    #[error("tau must be positive and finite, got {0}")]
    InvalidTau(f64),
    #[error("window scale n must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("radicand of the closed-form threshold is negative ({0})")]
    RadicandNegative(f64),
    #[error("closed-form threshold {0} is below 1, outside its validity regime")]
    BelowFormulaRegime(f64),
    #[error("no root of n * P(void) = tau: {0}")]
    NoRootInBracket(String),
    #[error("sampled region too small: needs half side {required}, has {available}")]
    GuardTooSmall { required: f64, available: f64 },
    #[error("order k must be at least 1")]
    InvalidOrder,
    #[error("cluster radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error(transparent)]
    Delaunay(#[from] DelaunayError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Exceedance atoms of one sample: raw centres in `W_n` and their images in
/// the unit window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceProcess {
    pub n: f64,
    pub threshold: f64,
    pub atoms_rescaled: Vec<Point>,
    pub centers_raw: Vec<Point>,
}

impl ExceedanceProcess {
    pub fn from_centers(n: f64, threshold: f64, centers_raw: Vec<Point>) -> Self {
        let s = 1.0 / n.sqrt();
        let atoms_rescaled = centers_raw.iter().map(|c| c.scale(s)).collect();
        ExceedanceProcess {
            n,
            threshold,
            atoms_rescaled,
            centers_raw,
        }
    }

    pub fn count(&self) -> usize {
        self.centers_raw.len()
    }
}

fn check_scale(n: f64) -> Result<(), ExceedanceError> {
    if n > 0.0 && n.is_finite() {
        Ok(())
    } else {
        Err(ExceedanceError::InvalidScale(n))
    }
}

fn check_tau(tau: f64) -> Result<(), ExceedanceError> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(ExceedanceError::InvalidTau(tau))
    }
}

/// Small-angle threshold `v_n = sqrt(tau / n) / 2`.
pub fn angle_threshold(n: f64, tau: f64) -> Result<f64, ExceedanceError> {
    check_scale(n)?;
    check_tau(tau)?;
    Ok(0.5 * (tau / n).sqrt())
}

/// The printed closed-form nearest-neighbour threshold
/// `[4 p2 + sqrt(8 p2^2 + 8 pi (p1 + p2)(log(p1/(p1 + 2 p2)) + log n - log tau))] / (4 pi (p1 + p2))`.
pub fn nn_threshold_closed_form(n: f64, tau: f64, params: &GaussPoissonParams) -> Result<f64, ExceedanceError> {
    check_scale(n)?;
    check_tau(tau)?;
    let (p1, p2) = (params.p1, params.p2);
    let logs = (p1 / (p1 + 2.0 * p2)).ln() + n.ln() - tau.ln();
    let radicand = 8.0 * p2 * p2 + 8.0 * PI * (p1 + p2) * logs;
    if radicand < 0.0 {
        return Err(ExceedanceError::RadicandNegative(radicand));
    }
    let v = (4.0 * p2 + radicand.sqrt()) / (4.0 * PI * (p1 + p2));
    if v < 1.0 {
        return Err(ExceedanceError::BelowFormulaRegime(v));
    }
    Ok(v)
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    // f(lo) > 0 >= f(hi); stop when the bracket cannot shrink further.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return if f(hi).abs() < f(lo).abs() { hi } else { lo };
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Root of `n * gp_void_prob(v) = tau`, bisected to machine precision.
///
/// The void probability jumps down at `v = 1`; if `tau` falls in that gap
/// there is no root.
pub fn nn_threshold_numeric(n: f64, tau: f64, params: &GaussPoissonParams) -> Result<f64, ExceedanceError> {
    check_scale(n)?;
    check_tau(tau)?;
    if n <= tau {
        return Err(ExceedanceError::NoRootInBracket(format!(
            "n = {n} does not exceed tau = {tau}"
        )));
    }
    let f = |v: f64| n * gp_void_prob(v, params) - tau;
    let (left, right) = gp_void_prob_one_sided(1.0, params);
    if n * right >= tau {
        let mut hi = 2.0;
        while f(hi) > 0.0 {
            hi *= 2.0;
            if hi > 1e8 {
                return Err(ExceedanceError::NoRootInBracket("upper bracket diverged".into()));
            }
        }
        Ok(bisect(f, 1.0, hi))
    } else if n * left < tau {
        Ok(bisect(f, 0.0, 1.0))
    } else {
        Err(ExceedanceError::NoRootInBracket(format!(
            "tau / n = {} lies in the jump of the void probability at v = 1, [{right}, {left}]",
            tau / n
        )))
    }
}

fn check_guard(w_n: &Window, sampled: &Window, reach: f64) -> Result<(), ExceedanceError> {
    let offset = (sampled.center.x - w_n.center.x)
        .abs()
        .max((sampled.center.y - w_n.center.y).abs());
    let required = offset + w_n.half_side + reach;
    if sampled.half_side < required {
        return Err(ExceedanceError::GuardTooSmall {
            required,
            available: sampled.half_side,
        });
    }
    Ok(())
}

/// Upper bound on grid cells per axis; larger cells keep neighbour search exact.
const MAX_GRID_CELLS: f64 = 4096.0;

/// Nearest-neighbour exceedances: one atom per point of `xi` in `W_n` whose
/// nearest other point of `xi` is farther than `v`. A point with no other
/// point has infinite nearest-neighbour distance.
///
/// `sampled` is the region `xi` was drawn on; it must contain `W_n`
/// dilated by `v`. Points outside `sampled` are ignored.
pub fn nn_exceedances(
    xi: &CountingMeasure,
    sampled: &Window,
    n: f64,
    v: f64,
) -> Result<ExceedanceProcess, ExceedanceError> {
    check_scale(n)?;
    let w_n = Window::from_scale(n)?;
    check_guard(&w_n, sampled, v.max(0.0))?;
    let pts: Vec<Point> = xi.points().iter().copied().filter(|p| sampled.contains(p)).collect();

    if !(v > 0.0) {
        let centers = pts.iter().copied().filter(|p| w_n.contains(p)).collect();
        return Ok(ExceedanceProcess::from_centers(n, v, centers));
    }

    let side = sampled.side();
    let cell = v.max(side / MAX_GRID_CELLS);
    let dim = ((side / cell).ceil() as usize).max(1);
    let origin = sampled.min_corner();
    let cell_of = |p: &Point| -> (usize, usize) {
        let cx = (((p.x - origin.x) / cell) as usize).min(dim - 1);
        let cy = (((p.y - origin.y) / cell) as usize).min(dim - 1);
        (cx, cy)
    };
    // Counting sort of points into cells.
    let mut start = vec![0usize; dim * dim + 1];
    let keys: Vec<usize> = pts
        .iter()
        .map(|p| {
            let (cx, cy) = cell_of(p);
            cy * dim + cx
        })
        .collect();
    for &k in &keys {
        start[k + 1] += 1;
    }
    for k in 0..dim * dim {
        start[k + 1] += start[k];
    }
    let mut fill = start.clone();
    let mut sorted = vec![0usize; pts.len()];
    for (i, &k) in keys.iter().enumerate() {
        sorted[fill[k]] = i;
        fill[k] += 1;
    }

    let v2 = v * v;
    let mut centers = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        if !w_n.contains(p) {
            continue;
        }
        let (cx, cy) = cell_of(p);
        let mut isolated = true;
        'search: for gy in cy.saturating_sub(1)..=(cy + 1).min(dim - 1) {
            for gx in cx.saturating_sub(1)..=(cx + 1).min(dim - 1) {
                let k = gy * dim + gx;
                for &j in &sorted[start[k]..start[k + 1]] {
                    if j != i && p.dist2(&pts[j]) <= v2 {
                        isolated = false;
                        break 'search;
                    }
                }
            }
        }
        if isolated {
            centers.push(*p);
        }
    }
    Ok(ExceedanceProcess::from_centers(n, v, centers))
}

/// Small-angle exceedances: one atom per Delaunay triangle with circumcentre
/// in `W_n` and smallest angle below `v`. `points` must be drawn on `sampled`.
pub fn angle_exceedances(
    points: &CountingMeasure,
    sampled: &Window,
    n: f64,
    v: f64,
) -> Result<ExceedanceProcess, ExceedanceError> {
    let tri = triangulate(points)?;
    angle_exceedances_in(&tri, sampled, n, v)
}

/// As [`angle_exceedances`] for a precomputed triangulation of the sample.
///
/// Fails with `GuardTooSmall` when a qualifying circumdisk leaves `sampled`,
/// since such a triangle may not be Delaunay for the stationary process.
pub fn angle_exceedances_in(
    tri: &Triangulation,
    sampled: &Window,
    n: f64,
    v: f64,
) -> Result<ExceedanceProcess, ExceedanceError> {
    check_scale(n)?;
    let w_n = Window::from_scale(n)?;
    check_guard(&w_n, sampled, 0.0)?;
    let mut centers = Vec::new();
    for t in &tri.triangles {
        if t.min_angle < v && w_n.contains(&t.circumcenter) {
            if !sampled.contains_disk(&t.circumcenter, t.circumradius) {
                let c = t.circumcenter;
                let offset = (c.x - sampled.center.x).abs().max((c.y - sampled.center.y).abs());
                return Err(ExceedanceError::GuardTooSmall {
                    required: offset + t.circumradius,
                    available: sampled.half_side,
                });
            }
            centers.push(t.circumcenter);
        }
    }
    Ok(ExceedanceProcess::from_centers(n, v, centers))
}

/// Per-sample cluster summary of an exceedance process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub c_n: f64,
    /// Atoms within raw distance `c_n` of each atom, itself included.
    pub multiplicities: Vec<usize>,
    /// `counts_by_i[i]` atoms have multiplicity `i`.
    pub counts_by_i: Vec<usize>,
    /// `component_size_counts[s]` connected components have `s` atoms.
    pub component_size_counts: Vec<usize>,
    pub p_hat: Option<Pmf>,
    pub q_hat: Option<Pmf>,
    pub theta_hat: Option<f64>,
}

impl ClusterStats {
    pub fn atoms(&self) -> usize {
        self.multiplicities.len()
    }

    pub fn clusters(&self) -> usize {
        self.component_size_counts.iter().sum()
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn histogram(values: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut h = Vec::new();
    for v in values {
        if v >= h.len() {
            h.resize(v + 1, 0);
        }
        h[v] += 1;
    }
    h
}

fn normalized(h: &[usize]) -> Option<Pmf> {
    let total: usize = h.iter().sum();
    if total == 0 {
        return None;
    }
    Some(Pmf::new(h.iter().map(|&c| c as f64 / total as f64).collect()).expect("normalised histogram"))
}

/// Clusters atoms by raw centre distance `<= c_n`: per-atom multiplicities and
/// connected components of the distance graph.
pub fn cluster_decompose(proc: &ExceedanceProcess, c_n: f64) -> Result<ClusterStats, ExceedanceError> {
    if !(c_n > 0.0) {
        return Err(ExceedanceError::InvalidRadius(c_n));
    }
    let z = &proc.centers_raw;
    let k = z.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| z[a].x.total_cmp(&z[b].x).then(a.cmp(&b)));
    let mut multiplicities = vec![1usize; k];
    let mut parent: Vec<usize> = (0..k).collect();
    let c2 = c_n * c_n;
    for (pos, &a) in order.iter().enumerate() {
        for &b in &order[pos + 1..] {
            if z[b].x - z[a].x > c_n {
                break;
            }
            if z[a].dist2(&z[b]) <= c2 {
                multiplicities[a] += 1;
                multiplicities[b] += 1;
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut sizes = vec![0usize; k];
    for i in 0..k {
        let r = find(&mut parent, i);
        sizes[r] += 1;
    }
    let counts_by_i = histogram(multiplicities.iter().copied());
    let component_size_counts = histogram(sizes.iter().copied().filter(|&s| s > 0));
    let clusters: usize = component_size_counts.iter().sum();
    Ok(ClusterStats {
        c_n,
        p_hat: normalized(&counts_by_i),
        q_hat: normalized(&component_size_counts),
        theta_hat: (k > 0).then(|| clusters as f64 / k as f64),
        multiplicities,
        counts_by_i,
        component_size_counts,
    })
}

/// `M^(k) <= v_n` holds iff at most `k - 1` atoms exceed the threshold.
pub fn order_statistic_test(proc: &ExceedanceProcess, k: usize) -> Result<bool, ExceedanceError> {
    if k == 0 {
        return Err(ExceedanceError::InvalidOrder);
    }
    Ok(proc.count() < k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_gauss_poisson, sample_poisson, Seed};
    use proptest::prelude::*;

    fn cm(pts: &[(f64, f64)]) -> CountingMeasure {
        CountingMeasure::new(pts.iter().map(|&p| Point::from(p)).collect())
    }

    fn gp(p1: f64, p2: f64) -> GaussPoissonParams {
        GaussPoissonParams::from_p1_p2(p1, p2).unwrap()
    }

    #[test]
    fn angle_thresholds() {
        assert_eq!(angle_threshold(1e4, 1.0).unwrap(), 0.005);
        assert_eq!(angle_threshold(1.0, 4.0).unwrap(), 1.0);
        assert_eq!(angle_threshold(1.0, 0.0), Err(ExceedanceError::InvalidTau(0.0)));
        assert!(angle_threshold(0.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_thresholds() {
        let v = nn_threshold_closed_form(1e4, 1.0, &gp(1.0, 0.0)).unwrap();
        assert!((v - 1.210_731_678_679_820_2).abs() < 1e-14);
        assert!((v - (1e4f64.ln() / (2.0 * PI)).sqrt()).abs() < 1e-14);
        let v = nn_threshold_closed_form(1e6, 1.0, &gp(0.5, 0.25)).unwrap();
        assert!((v - 1.776_516_702_327_964_3).abs() < 1e-14);
        assert!(matches!(
            nn_threshold_closed_form(10.0, 10.0, &gp(0.5, 0.25)),
            Err(ExceedanceError::RadicandNegative(_)) | Err(ExceedanceError::BelowFormulaRegime(_))
        ));
        assert!(matches!(
            nn_threshold_closed_form(2.0, 1.0, &gp(1.0, 0.0)),
            Err(ExceedanceError::BelowFormulaRegime(_))
        ));
    }

    #[test]
    fn numeric_threshold_pure_poisson() {
        let v = nn_threshold_numeric(1e4, 1.0, &gp(1.0, 0.0)).unwrap();
        assert!((v - (1e4f64.ln() / PI).sqrt()).abs() < 1e-12);
        assert!((v - 1.712_233_160_383_746).abs() < 1e-12);
        let ratio = v / nn_threshold_closed_form(1e4, 1.0, &gp(1.0, 0.0)).unwrap();
        assert!((ratio - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn numeric_threshold_residual() {
        for (n, tau, p1, p2) in [(1e5, 1.0, 0.6, 0.2), (1e6, 3.0, 0.3, 0.5), (50.0, 10.0, 0.4, 0.1)] {
            let params = gp(p1, p2);
            let v = nn_threshold_numeric(n, tau, &params).unwrap();
            let resid = n * gp_void_prob(v, &params) / tau - 1.0;
            assert!(resid.abs() < 1e-10, "n={n} tau={tau}: {resid}");
        }
        assert!(matches!(
            nn_threshold_numeric(1.0, 2.0, &gp(0.5, 0.2)),
            Err(ExceedanceError::NoRootInBracket(_))
        ));
    }

    #[test]
    fn numeric_threshold_jump_gap() {
        let params = gp(0.5, 0.25);
        let (left, right) = gp_void_prob_one_sided(1.0, &params);
        let n = 1000.0;
        let tau = n * 0.5 * (left + right);
        assert!(matches!(
            nn_threshold_numeric(n, tau, &params),
            Err(ExceedanceError::NoRootInBracket(_))
        ));
        // Just below the gap the root is on the long-range branch at v >= 1.
        let v = nn_threshold_numeric(n, n * right * 0.999, &params).unwrap();
        assert!(v >= 1.0);
    }

    #[test]
    fn nn_examples() {
        let xi = cm(&[(0.0, 0.0), (10.0, 0.0)]);
        let sampled = Window::centered(30.0).unwrap();
        assert_eq!(nn_exceedances(&xi, &sampled, 400.0, 5.0).unwrap().count(), 2);
        assert_eq!(nn_exceedances(&xi, &sampled, 400.0, 15.0).unwrap().count(), 0);
        let single = cm(&[(1.0, 1.0)]);
        assert_eq!(nn_exceedances(&single, &sampled, 400.0, 3.0).unwrap().count(), 1);
        assert!(matches!(
            nn_exceedances(&xi, &Window::centered(10.0).unwrap(), 400.0, 5.0),
            Err(ExceedanceError::GuardTooSmall { .. })
        ));
    }

    #[test]
    fn nn_matches_brute_force() {
        let sampled = Window::centered(12.0).unwrap();
        for seed in 0..20 {
            let xi = sample_gauss_poisson(&gp(0.5, 0.3), &sampled, Seed::new(seed, 0));
            let v = 0.3 + 0.1 * seed as f64;
            let fast = nn_exceedances(&xi, &sampled, 100.0, v).unwrap();
            let w = Window::from_scale(100.0).unwrap();
            let pts = xi.points();
            let slow: Vec<Point> = pts
                .iter()
                .enumerate()
                .filter(|(i, p)| w.contains(p) && pts.iter().enumerate().all(|(j, q)| j == *i || p.dist(q) > v))
                .map(|(_, p)| *p)
                .collect();
            assert_eq!(fast.centers_raw, slow);
        }
    }

    #[test]
    fn rescaling_is_single_multiplication() {
        let xi = cm(&[(1.0, 2.0), (-3.0, 4.5)]);
        let p = nn_exceedances(&xi, &Window::centered(20.0).unwrap(), 144.0, 1.0).unwrap();
        let s = 1.0 / 12.0;
        for (a, c) in p.atoms_rescaled.iter().zip(&p.centers_raw) {
            assert_eq!(a.x, c.x * s);
            assert_eq!(a.y, c.y * s);
            assert!(Window::from_scale(1.0).unwrap().contains(a));
        }
    }

    #[test]
    fn angle_examples() {
        let sampled = Window::centered(13.0).unwrap();
        let pts = sample_poisson(1.0, &sampled, Seed::new(5, 0)).unwrap();
        let tri = triangulate(&pts).unwrap();
        assert_eq!(angle_exceedances_in(&tri, &sampled, 100.0, 0.0).unwrap().count(), 0);
        let all = angle_exceedances_in(&tri, &sampled, 100.0, PI / 3.0 + 1e-9).unwrap();
        let w = Window::from_scale(100.0).unwrap();
        assert_eq!(
            all.count(),
            tri.triangles.iter().filter(|t| w.contains(&t.circumcenter)).count()
        );
        // Without a guard, boundary triangles have circumdisks leaving the region.
        let tight = Window::from_scale(100.0).unwrap();
        let pts = sample_poisson(1.0, &tight, Seed::new(5, 1)).unwrap();
        assert!(matches!(
            angle_exceedances(&pts, &tight, 100.0, PI / 3.0 + 1e-9),
            Err(ExceedanceError::GuardTooSmall { .. })
        ));
    }

    #[test]
    fn monotone_in_threshold() {
        let sampled = Window::centered(13.0).unwrap();
        let pts = sample_poisson(1.0, &sampled, Seed::new(9, 0)).unwrap();
        let tri = triangulate(&pts).unwrap();
        let mut prev: Vec<Point> = Vec::new();
        for k in 1..=10 {
            let cur = angle_exceedances_in(&tri, &sampled, 100.0, 0.1 * k as f64)
                .unwrap()
                .centers_raw;
            assert!(prev.iter().all(|p| cur.contains(p)));
            prev = cur;
        }
        let xi = sample_gauss_poisson(&gp(0.5, 0.3), &sampled, Seed::new(9, 1));
        let mut prev: Option<Vec<Point>> = None;
        for k in 1..=10 {
            let cur = nn_exceedances(&xi, &sampled, 100.0, 0.2 * k as f64)
                .unwrap()
                .centers_raw;
            if let Some(prev) = prev {
                assert!(cur.iter().all(|p| prev.contains(p)));
            }
            prev = Some(cur);
        }
    }

    fn proc_of(pts: &[(f64, f64)]) -> ExceedanceProcess {
        ExceedanceProcess::from_centers(1e4, 0.01, pts.iter().map(|&p| Point::from(p)).collect())
    }

    #[test]
    fn cluster_examples() {
        let one = cluster_decompose(&proc_of(&[(1.0, 1.0)]), 2.0).unwrap();
        assert_eq!(one.multiplicities, vec![1]);
        assert_eq!(one.q_hat.as_ref().unwrap().get(1), 1.0);
        assert_eq!(one.theta_hat, Some(1.0));

        let near = cluster_decompose(&proc_of(&[(0.0, 0.0), (1.0, 0.0)]), 2.0).unwrap();
        assert_eq!(near.multiplicities, vec![2, 2]);
        assert_eq!(near.component_size_counts, vec![0, 0, 1]);
        assert_eq!(near.theta_hat, Some(0.5));

        let far = cluster_decompose(&proc_of(&[(0.0, 0.0), (4.0, 0.0)]), 2.0).unwrap();
        assert_eq!(far.multiplicities, vec![1, 1]);
        assert_eq!(far.theta_hat, Some(1.0));

        let empty = cluster_decompose(&proc_of(&[]), 2.0).unwrap();
        assert_eq!(empty.theta_hat, None);
        assert!(empty.p_hat.is_none());
        assert!(cluster_decompose(&proc_of(&[]), 0.0).is_err());
    }

    #[test]
    fn chain_forms_one_component() {
        // Multiplicities are local, components are transitive.
        let s = cluster_decompose(&proc_of(&[(0.0, 0.0), (1.5, 0.0), (3.0, 0.0)]), 2.0).unwrap();
        assert_eq!(s.multiplicities, vec![2, 3, 2]);
        assert_eq!(s.clusters(), 1);
        assert_eq!(s.counts_by_i, vec![0, 0, 2, 1]);
    }

    #[test]
    fn order_statistics() {
        assert!(order_statistic_test(&proc_of(&[]), 1).unwrap());
        assert!(!order_statistic_test(&proc_of(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]), 3).unwrap());
        assert!(order_statistic_test(&proc_of(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]), 4).unwrap());
        assert_eq!(
            order_statistic_test(&proc_of(&[]), 0),
            Err(ExceedanceError::InvalidOrder)
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn cluster_limits(raw in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..30)) {
            let p = proc_of(&raw);
            let tiny = cluster_decompose(&p, 1e-12).unwrap();
            let distinct = {
                let mut v = raw.clone();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v.dedup();
                v.len() == raw.len()
            };
            if distinct {
                prop_assert!(tiny.multiplicities.iter().all(|&m| m == 1));
                prop_assert_eq!(tiny.theta_hat, Some(1.0));
            }
            let huge = cluster_decompose(&p, 1e6).unwrap();
            prop_assert!(huge.multiplicities.iter().all(|&m| m == raw.len()));
            prop_assert_eq!(huge.clusters(), 1);
        }

        #[test]
        fn cluster_invariants(raw in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 1..40), c in 0.1f64..10.0) {
            let s = cluster_decompose(&proc_of(&raw), c).unwrap();
            prop_assert_eq!(s.counts_by_i.iter().sum::<usize>(), raw.len());
            let comp_atoms: usize = s.component_size_counts.iter().enumerate().map(|(k, n)| k * n).sum();
            prop_assert_eq!(comp_atoms, raw.len());
            let theta = s.theta_hat.unwrap();
            prop_assert!(theta > 0.0 && theta <= 1.0);
            let total: f64 = s.p_hat.unwrap().probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
