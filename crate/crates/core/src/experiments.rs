//! Seeded Monte Carlo studies with replication-level parallelism and a
//! deterministic reducer.
//!
//! Replication `r` of a study draws from `Seed::new(master_seed, r)`, so the
//! per-replication records do not depend on scheduling. Aggregates are pure
//! functions of the configuration and the records ([`aggregate`]), summed in
//! replication order, and therefore identical between serial and parallel runs.

use std::f64::consts::PI;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::analytic::{cp_limit_params, gp_void_prob, mardia_cdf, mardia_quantile, poisson_partial_sum};
use crate::delaunay::{interior_triangles, triangulate, DelaunayError};
use crate::exceedances::{
    angle_exceedances_in, angle_threshold, cluster_decompose, nn_exceedances, nn_threshold_closed_form,
    nn_threshold_numeric, ExceedanceError, ExceedanceProcess,
};
use crate::geometry::{GeometryError, Point, Window};
use crate::metrics::{cp_count_pmf_auto, empirical_count_pmf, empirical_d2, tv, MetricsError};
use crate::sampling::{
    compound_poisson_with, expand_clusters, poisson_with, sample_gauss_poisson, sample_poisson, typical_triangle_with,
    CompoundParams, CountingMeasure, GaussPoissonParams, SamplingError, Seed,
};
use crate::stats::{ks_one_sample, ks_two_sample, mean_se, proportion_se};

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable capping the worker threads of parallel studies.
pub const THREADS_ENV: &str = "CPGEOM_THREADS";
pub const DEFAULT_DELAUNAY_GUARD: f64 = 3.0;
/// Extra margin beyond `v_n` for nearest-neighbour studies.
pub const DEFAULT_NN_GUARD_MARGIN: f64 = 0.5;
pub const MARDIA_BINS: usize = 30;
/// Angles at which the small-angle CDF is probed in the Mardia study.
pub const MARDIA_PROBES: [f64; 2] = [0.02, 0.1];
pub const DEFAULT_CP_COMPARE_SAMPLES: usize = 500;
pub const ORDER_STATISTICS: usize = 3;

const D2_LIMIT_STREAM: u64 = 0xd2;
const D2_POISSON_STREAM: u64 = 0xd3;
const TESSELLATION_STREAM: u64 = 0x7e55;
const TYPICAL_STREAM: u64 = 0x7e56;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Exceedance(#[from] ExceedanceError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Delaunay(#[from] DelaunayError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NnGp,
    DelaunayAngles,
    Mardia,
    CpCompare,
    Thresholds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpParamsConfig {
    pub p1: f64,
    pub p2: f64,
}

impl Default for GpParamsConfig {
    fn default() -> Self {
        GpParamsConfig { p1: 0.6, p2: 0.2 }
    }
}

fn default_n() -> f64 {
    1e4
}

fn default_tau() -> f64 {
    1.0
}

fn default_draws() -> u64 {
    100_000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    #[serde(default = "default_n")]
    pub n: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub params: Option<GpParamsConfig>,
    pub replications: u64,
    pub master_seed: u64,
    /// Dilation of `W_n` used as the sampling region; default depends on kind.
    #[serde(default)]
    pub guard: Option<f64>,
    /// Cluster radius; default `ln n`.
    #[serde(default)]
    pub c_n: Option<f64>,
    /// Output directory used by the command-line front end.
    #[serde(default)]
    pub output: Option<String>,
    /// Patterns per side of the empirical d2 estimate (0 disables it).
    #[serde(default)]
    pub d2_samples: usize,
    /// Typical triangles per replication in the Mardia study.
    #[serde(default = "default_draws")]
    pub draws_per_replication: u64,
    #[serde(default = "default_true")]
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, n: f64, tau: f64, replications: u64, master_seed: u64) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            kind,
            n,
            tau,
            params: None,
            replications,
            master_seed,
            guard: None,
            c_n: None,
            output: None,
            d2_samples: 0,
            draws_per_replication: default_draws(),
            parallel: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version must be {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        if self.replications < 1 {
            return bad("replications must be at least 1".into());
        }
        if !(self.n > 0.0 && self.n.is_finite()) {
            return bad(format!("n must be positive and finite, got {}", self.n));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive and finite, got {}", self.tau));
        }
        if let Some(g) = self.guard {
            if !(g >= 0.0 && g.is_finite()) {
                return bad(format!("guard must be non-negative and finite, got {g}"));
            }
        }
        if let Some(c) = self.c_n {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("c_n must be positive and finite, got {c}"));
            }
        }
        self.gp_params()?;
        if self.kind == ExperimentKind::Mardia && self.draws_per_replication < 1 {
            return bad("draws_per_replication must be at least 1".into());
        }
        if self.kind == ExperimentKind::DelaunayAngles && self.d2_samples as u64 > self.replications {
            return bad("d2_samples cannot exceed replications".into());
        }
        Ok(())
    }

    pub fn gp_params(&self) -> Result<GaussPoissonParams, ExperimentError> {
        let p = self.params.unwrap_or_default();
        GaussPoissonParams::from_p1_p2(p.p1, p.p2).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))
    }

    pub fn cluster_radius(&self) -> f64 {
        self.c_n.unwrap_or_else(|| self.n.ln().max(f64::MIN_POSITIVE))
    }

    /// Guard for the study, given its threshold `v` (used by nearest-neighbour studies).
    pub fn resolved_guard(&self, v: f64) -> f64 {
        self.guard.unwrap_or(match self.kind {
            ExperimentKind::NnGp => v + DEFAULT_NN_GUARD_MARGIN,
            _ => DEFAULT_DELAUNAY_GUARD,
        })
    }

    pub fn cp_compare_samples(&self) -> usize {
        if self.d2_samples == 0 {
            DEFAULT_CP_COMPARE_SAMPLES
        } else {
            self.d2_samples
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceRecord {
    pub index: u64,
    pub points: usize,
    pub count: usize,
    pub counts_by_i: Vec<usize>,
    pub component_size_counts: Vec<usize>,
    pub atoms: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MardiaBatchRecord {
    pub index: u64,
    pub draws: u64,
    pub bin_counts: Vec<u64>,
    /// Draws below each angle of [`MARDIA_PROBES`].
    pub below: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TessellationRecord {
    pub points: usize,
    pub triangles: usize,
    pub ks_typical_statistic: f64,
    pub ks_typical_p_value: f64,
    pub ks_density_statistic: f64,
    pub ks_density_p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpCompareRecord {
    pub index: u64,
    pub samples: usize,
    pub self_d2: f64,
    pub cross_d2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Record {
    Exceedance(ExceedanceRecord),
    MardiaBatch(MardiaBatchRecord),
    Tessellation(TessellationRecord),
    CpCompare(CpCompareRecord),
}

/// One summary row: estimate, its standard error, and the limit value it is
/// compared with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub name: String,
    pub value: f64,
    pub se: Option<f64>,
    pub reference: Option<f64>,
}

impl Aggregate {
    fn new(name: impl Into<String>, value: f64, se: Option<f64>, reference: Option<f64>) -> Self {
        Aggregate {
            name: name.into(),
            value,
            se: se.filter(|s| s.is_finite()),
            reference,
        }
    }
}

/// Closed-form and numeric nearest-neighbour thresholds side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub n: f64,
    pub tau: f64,
    pub p1: f64,
    pub p2: f64,
    pub nn_numeric: Option<f64>,
    pub nn_numeric_error: Option<String>,
    pub nn_closed_form: Option<f64>,
    pub nn_closed_form_error: Option<String>,
    pub ratio_numeric_to_closed: Option<f64>,
    pub angle: f64,
}

pub fn threshold_table(n: f64, tau: f64, params: &GaussPoissonParams) -> Result<ThresholdTable, ExperimentError> {
    let numeric = nn_threshold_numeric(n, tau, params);
    let closed = nn_threshold_closed_form(n, tau, params);
    let ratio = match (&numeric, &closed) {
        (Ok(a), Ok(b)) => Some(a / b),
        _ => None,
    };
    Ok(ThresholdTable {
        n,
        tau,
        p1: params.p1,
        p2: params.p2,
        nn_numeric: numeric.as_ref().ok().copied(),
        nn_numeric_error: numeric.err().map(|e| e.to_string()),
        nn_closed_form: closed.as_ref().ok().copied(),
        nn_closed_form_error: closed.err().map(|e| e.to_string()),
        ratio_numeric_to_closed: ratio,
        angle: angle_threshold(n, tau)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub master_seed: u64,
    pub scheme: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub complete: bool,
    pub failures: Vec<Failure>,
}

/// Everything that legitimately differs between identical reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub timestamp_unix: u64,
    pub wall_clock_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub software: Software,
    pub config: ExperimentConfig,
    pub seeds: SeedInfo,
    pub status: RunStatus,
    pub records: Vec<Record>,
    pub aggregates: Vec<Aggregate>,
    pub thresholds: Option<ThresholdTable>,
    pub run_info: RunInfo,
}

impl ExperimentReport {
    pub fn aggregate(&self, name: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.name == name)
    }
}

/// Worker count from [`THREADS_ENV`], or the hardware default.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

fn replicate<T, F>(cfg: &ExperimentConfig, count: u64, f: F) -> Result<Vec<Result<T, String>>, ExperimentError>
where
    T: Send,
    F: Fn(u64) -> Result<T, ExperimentError> + Sync + Send,
{
    let wrap = |i: u64| f(i).map_err(|e| e.to_string());
    if !cfg.parallel {
        return Ok((0..count).map(wrap).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(wrap).collect()))
}

fn split<T>(results: Vec<Result<T, String>>, failures: &mut Vec<Failure>) -> Vec<T> {
    let mut ok = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push(v),
            Err(error) => failures.push(Failure { index: i as u64, error }),
        }
    }
    ok
}

fn exceedance_record(
    index: u64,
    points: usize,
    proc: &ExceedanceProcess,
    c_n: f64,
) -> Result<ExceedanceRecord, ExperimentError> {
    let stats = cluster_decompose(proc, c_n)?;
    Ok(ExceedanceRecord {
        index,
        points,
        count: proc.count(),
        counts_by_i: stats.counts_by_i,
        component_size_counts: stats.component_size_counts,
        atoms: proc.atoms_rescaled.clone(),
    })
}

/// One delaunay-angles replication.
pub fn delaunay_replication(cfg: &ExperimentConfig, index: u64) -> Result<ExceedanceRecord, ExperimentError> {
    let v = angle_threshold(cfg.n, cfg.tau)?;
    let sampled = Window::from_scale(cfg.n)?.dilate(cfg.resolved_guard(v))?;
    let pts = sample_poisson(1.0, &sampled, Seed::new(cfg.master_seed, index))?;
    let tri = triangulate(&pts)?;
    let proc = angle_exceedances_in(&tri, &sampled, cfg.n, v)?;
    exceedance_record(index, pts.len(), &proc, cfg.cluster_radius())
}

/// One nn-gp replication at the numeric threshold.
pub fn nn_replication(cfg: &ExperimentConfig, v: f64, index: u64) -> Result<ExceedanceRecord, ExperimentError> {
    let params = cfg.gp_params()?;
    let sampled = Window::from_scale(cfg.n)?.dilate(cfg.resolved_guard(v))?;
    let xi = sample_gauss_poisson(&params, &sampled, Seed::new(cfg.master_seed, index));
    let proc = nn_exceedances(&xi, &sampled, cfg.n, v)?;
    exceedance_record(index, xi.len(), &proc, cfg.cluster_radius())
}

/// Upper edges of equal-probability bins of the smallest-angle law.
pub fn mardia_bin_edges(bins: usize) -> Vec<f64> {
    (1..bins).map(|k| mardia_quantile(k as f64 / bins as f64)).collect()
}

pub fn mardia_batch(cfg: &ExperimentConfig, edges: &[f64], index: u64) -> Result<MardiaBatchRecord, ExperimentError> {
    let mut rng = Seed::new(cfg.master_seed, index).rng();
    let mut bin_counts = vec![0u64; edges.len() + 1];
    let mut below = vec![0u64; MARDIA_PROBES.len()];
    for _ in 0..cfg.draws_per_replication {
        let a = typical_triangle_with(&mut rng).min_angle()?;
        bin_counts[edges.partition_point(|&e| e <= a)] += 1;
        for (k, &t) in MARDIA_PROBES.iter().enumerate() {
            if a < t {
                below[k] += 1;
            }
        }
    }
    Ok(MardiaBatchRecord {
        index,
        draws: cfg.draws_per_replication,
        bin_counts,
        below,
    })
}

/// Smallest angles of interior triangles of one tessellation against the
/// typical-triangle sampler and against the density.
pub fn tessellation_check(cfg: &ExperimentConfig) -> Result<TessellationRecord, ExperimentError> {
    let guard = cfg.resolved_guard(0.0);
    let w_n = Window::from_scale(cfg.n)?;
    let sampled = w_n.dilate(guard)?;
    let root = Seed::new(cfg.master_seed, 0);
    let pts = sample_poisson(1.0, &sampled, root.substream(TESSELLATION_STREAM))?;
    let tri = triangulate(&pts)?;
    let angles: Vec<f64> = interior_triangles(&tri, &w_n, guard)
        .iter()
        .map(|t| t.min_angle)
        .collect();
    if angles.is_empty() {
        return Err(ExperimentError::InvalidConfig(
            "tessellation window holds no interior triangle".into(),
        ));
    }
    let mut rng = root.substream(TYPICAL_STREAM).rng();
    let typical = (0..angles.len())
        .map(|_| typical_triangle_with(&mut rng).min_angle())
        .collect::<Result<Vec<f64>, _>>()?;
    let (d_typ, p_typ) = ks_two_sample(&angles, &typical);
    let (d_den, p_den) = ks_one_sample(&angles, mardia_cdf);
    Ok(TessellationRecord {
        points: pts.len(),
        triangles: angles.len(),
        ks_typical_statistic: d_typ,
        ks_typical_p_value: p_typ,
        ks_density_statistic: d_den,
        ks_density_p_value: p_den,
    })
}

fn sample_patterns<F>(count: usize, seed: Seed, mut draw: F) -> Vec<CountingMeasure>
where
    F: FnMut(&mut rand_chacha::ChaCha8Rng) -> CountingMeasure,
{
    let mut rng = seed.rng();
    (0..count).map(|_| draw(&mut rng)).collect()
}

fn limit_compound(tau: f64) -> Result<CompoundParams, ExperimentError> {
    let c = cp_limit_params(tau);
    Ok(CompoundParams::new(c.gamma, c.cluster_law)?)
}

fn limit_patterns(tau: f64, count: usize, seed: Seed) -> Result<Vec<CountingMeasure>, ExperimentError> {
    let cp = limit_compound(tau)?;
    let w1 = Window::from_scale(1.0)?;
    Ok(sample_patterns(count, seed, |rng| {
        expand_clusters(&compound_poisson_with(rng, &cp, &w1))
    }))
}

fn poisson_patterns(mean: f64, count: usize, seed: Seed) -> Result<Vec<CountingMeasure>, ExperimentError> {
    let w1 = Window::from_scale(1.0)?;
    if !(mean > 0.0) {
        return Err(SamplingError::InvalidIntensity(mean).into());
    }
    Ok(sample_patterns(count, seed, |rng| {
        poisson_with(rng, mean, &w1).expect("positive intensity")
    }))
}

pub fn cp_compare_replication(cfg: &ExperimentConfig, index: u64) -> Result<CpCompareRecord, ExperimentError> {
    let m = cfg.cp_compare_samples();
    let root = Seed::new(cfg.master_seed, index);
    let a = limit_patterns(cfg.tau, m, root.substream(1))?;
    let b = limit_patterns(cfg.tau, m, root.substream(2))?;
    // Mean-matched Poisson: gamma * E[cluster size] = tau.
    let c = poisson_patterns(cfg.tau, m, root.substream(3))?;
    Ok(CpCompareRecord {
        index,
        samples: m,
        self_d2: empirical_d2(&a, &b)?,
        cross_d2: empirical_d2(&a, &c)?,
    })
}

/// Standard error of a ratio of sums `sum(num) / sum(den)` over replications.
fn ratio_se(num: &[f64], den: &[f64]) -> Option<f64> {
    let k = num.len();
    let total: f64 = den.iter().sum();
    if k < 2 || total <= 0.0 {
        return None;
    }
    let r = num.iter().sum::<f64>() / total;
    let s2 = num.iter().zip(den).map(|(a, b)| (a - r * b).powi(2)).sum::<f64>() / (k - 1) as f64;
    Some((k as f64 * s2).sqrt() / total)
}

fn histogram_column(records: &[&ExceedanceRecord], pick: impl Fn(&ExceedanceRecord) -> &[usize], i: usize) -> Vec<f64> {
    records
        .iter()
        .map(|r| pick(r).get(i).copied().unwrap_or(0) as f64)
        .collect()
}

fn exceedance_aggregates(
    cfg: &ExperimentConfig,
    records: &[&ExceedanceRecord],
    v: f64,
) -> Result<Vec<Aggregate>, ExperimentError> {
    let mut out = vec![
        Aggregate::new("v_n", v, None, None),
        Aggregate::new("c_n", cfg.cluster_radius(), None, None),
    ];
    if records.is_empty() {
        return Ok(out);
    }
    let reps = records.len();
    let angles = cfg.kind == ExperimentKind::DelaunayAngles;
    let counts: Vec<usize> = records.iter().map(|r| r.count).collect();
    let countf: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let m = mean_se(&countf);
    out.push(Aggregate::new("mean_count", m.mean, Some(m.se), Some(cfg.tau)));
    if !angles {
        let params = cfg.gp_params()?;
        out.push(Aggregate::new(
            "expected_count_exact",
            params.intensity() * cfg.n * gp_void_prob(v, &params),
            None,
            Some(cfg.tau),
        ));
    }

    let limit = cp_limit_params(cfg.tau);
    let p_zero = counts.iter().filter(|&&c| c == 0).count() as f64 / reps as f64;
    let zero_ref = if angles { (-limit.gamma).exp() } else { (-cfg.tau).exp() };
    out.push(Aggregate::new(
        "p_zero",
        p_zero,
        Some(proportion_se(p_zero, reps)),
        Some(zero_ref),
    ));

    if !angles {
        for k in 1..=ORDER_STATISTICS {
            let f = counts.iter().filter(|&&c| c < k).count() as f64 / reps as f64;
            out.push(Aggregate::new(
                format!("order_statistic_{k}"),
                f,
                Some(proportion_se(f, reps)),
                Some(poisson_partial_sum(cfg.tau, k)),
            ));
        }
    }

    let empirical = empirical_count_pmf(&counts)?;
    let model = if angles {
        cp_count_pmf_auto(&limit.cluster_masses())?
    } else {
        cp_count_pmf_auto(&[(1, cfg.tau)])?
    };
    for k in 0..empirical.support_len() {
        out.push(Aggregate::new(
            format!("count_pmf_{k}"),
            empirical.get(k),
            Some(proportion_se(empirical.get(k), reps)),
            Some(model.get(k)),
        ));
    }
    out.push(Aggregate::new("tv_limit", tv(&empirical, &model), None, Some(0.0)));
    if angles {
        let poisson = cp_count_pmf_auto(&[(1, cfg.tau)])?;
        out.push(Aggregate::new("tv_poisson", tv(&empirical, &poisson), None, None));
    }

    if angles {
        let atoms: Vec<f64> = countf.clone();
        let max_i = records.iter().map(|r| r.counts_by_i.len()).max().unwrap_or(0);
        let mut ge3 = vec![0.0; reps];
        for i in 1..max_i {
            let col = histogram_column(records, |r| &r.counts_by_i, i);
            if i >= 3 {
                for (g, c) in ge3.iter_mut().zip(&col) {
                    *g += c;
                }
            }
            let value = col.iter().sum::<f64>() / atoms.iter().sum::<f64>();
            let reference = match i {
                1 | 2 => Some(0.5),
                _ => None,
            };
            out.push(Aggregate::new(
                format!("p_hat_{i}"),
                value,
                ratio_se(&col, &atoms),
                reference,
            ));
        }
        let total_atoms: f64 = atoms.iter().sum();
        if total_atoms > 0.0 {
            out.push(Aggregate::new(
                "p_hat_ge3",
                ge3.iter().sum::<f64>() / total_atoms,
                ratio_se(&ge3, &atoms),
                Some(0.0),
            ));
            let clusters: Vec<f64> = records
                .iter()
                .map(|r| r.component_size_counts.iter().sum::<usize>() as f64)
                .collect();
            out.push(Aggregate::new(
                "theta_hat",
                clusters.iter().sum::<f64>() / total_atoms,
                ratio_se(&clusters, &atoms),
                Some(limit.extremal_index()),
            ));
            let max_s = records.iter().map(|r| r.component_size_counts.len()).max().unwrap_or(0);
            let total_clusters: f64 = clusters.iter().sum();
            for s in 1..max_s {
                let col = histogram_column(records, |r| &r.component_size_counts, s);
                out.push(Aggregate::new(
                    format!("q_hat_{s}"),
                    col.iter().sum::<f64>() / total_clusters,
                    ratio_se(&col, &clusters),
                    (s <= 2).then(|| limit.cluster_law.get(s)),
                ));
            }
        }
    }

    let d2 = cfg.d2_samples.min(reps);
    if d2 > 0 {
        let patterns: Vec<CountingMeasure> = records[..d2]
            .iter()
            .map(|r| CountingMeasure::new(r.atoms.clone()))
            .collect();
        let root = Seed::new(cfg.master_seed, 0);
        let poisson = poisson_patterns(cfg.tau, d2, root.substream(D2_POISSON_STREAM))?;
        out.push(Aggregate::new(
            "d2_poisson",
            empirical_d2(&patterns, &poisson)?,
            None,
            None,
        ));
        if angles {
            let cp = limit_patterns(cfg.tau, d2, root.substream(D2_LIMIT_STREAM))?;
            out.push(Aggregate::new(
                "d2_compound_limit",
                empirical_d2(&patterns, &cp)?,
                None,
                None,
            ));
        }
    }
    Ok(out)
}

fn mardia_aggregates(
    records: &[&MardiaBatchRecord],
    tess: Option<&TessellationRecord>,
) -> Result<Vec<Aggregate>, ExperimentError> {
    let mut out = vec![Aggregate::new("pdf_integral", mardia_cdf(PI / 3.0), None, Some(1.0))];
    if !records.is_empty() {
        let draws: u64 = records.iter().map(|r| r.draws).sum();
        let bins = records[0].bin_counts.len();
        let mut observed = vec![0u64; bins];
        for r in records {
            for (o, c) in observed.iter_mut().zip(&r.bin_counts) {
                *o += c;
            }
        }
        let expected = draws as f64 / bins as f64;
        let chi2: f64 = observed.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        let dist = ChiSquared::new((bins - 1) as f64).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        out.push(Aggregate::new("draws", draws as f64, None, None));
        out.push(Aggregate::new("chi2_statistic", chi2, None, Some((bins - 1) as f64)));
        out.push(Aggregate::new("chi2_p_value", 1.0 - dist.cdf(chi2), None, None));
        for (k, &t) in MARDIA_PROBES.iter().enumerate() {
            let hits: u64 = records.iter().map(|r| r.below[k]).sum();
            let p = hits as f64 / draws as f64;
            let se = proportion_se(p, draws as usize);
            out.push(Aggregate::new(format!("p_below_{t}"), p, Some(se), Some(mardia_cdf(t))));
            let scale = 2.0 * t * t;
            out.push(Aggregate::new(
                format!("small_angle_ratio_{t}"),
                p / scale,
                Some(se / scale),
                Some(1.0),
            ));
        }
    }
    if let Some(t) = tess {
        out.push(Aggregate::new("tessellation_triangles", t.triangles as f64, None, None));
        out.push(Aggregate::new(
            "tessellation_ks_typical_p_value",
            t.ks_typical_p_value,
            None,
            None,
        ));
        out.push(Aggregate::new(
            "tessellation_ks_density_p_value",
            t.ks_density_p_value,
            None,
            None,
        ));
    }
    Ok(out)
}

fn cp_compare_aggregates(records: &[&CpCompareRecord]) -> Vec<Aggregate> {
    let selfs: Vec<f64> = records.iter().map(|r| r.self_d2).collect();
    let cross: Vec<f64> = records.iter().map(|r| r.cross_d2).collect();
    let diff: Vec<f64> = records.iter().map(|r| r.cross_d2 - r.self_d2).collect();
    let (s, c, d) = (mean_se(&selfs), mean_se(&cross), mean_se(&diff));
    let mut out = vec![
        Aggregate::new("samples", records.first().map_or(0.0, |r| r.samples as f64), None, None),
        Aggregate::new("d2_self", s.mean, Some(s.se), None),
        Aggregate::new("d2_cross_poisson", c.mean, Some(c.se), None),
        Aggregate::new("d2_separation", d.mean, Some(d.se), Some(0.0)),
    ];
    if d.se.is_finite() && d.se > 0.0 {
        out.push(Aggregate::new("d2_separation_in_se", d.mean / d.se, None, Some(3.0)));
    }
    out
}

fn threshold_aggregates(t: &ThresholdTable) -> Vec<Aggregate> {
    let mut out = vec![Aggregate::new("v_angle", t.angle, None, None)];
    if let Some(v) = t.nn_numeric {
        out.push(Aggregate::new("v_nn_numeric", v, None, None));
    }
    if let Some(v) = t.nn_closed_form {
        out.push(Aggregate::new("v_nn_closed_form", v, None, None));
    }
    if let Some(r) = t.ratio_numeric_to_closed {
        out.push(Aggregate::new("v_nn_ratio", r, None, None));
    }
    out
}

/// Recomputes every aggregate from the configuration and the records.
pub fn aggregate(
    cfg: &ExperimentConfig,
    records: &[Record],
) -> Result<(Vec<Aggregate>, Option<ThresholdTable>), ExperimentError> {
    let params = cfg.gp_params()?;
    match cfg.kind {
        ExperimentKind::DelaunayAngles | ExperimentKind::NnGp => {
            let ex: Vec<&ExceedanceRecord> = records
                .iter()
                .filter_map(|r| if let Record::Exceedance(e) = r { Some(e) } else { None })
                .collect();
            if cfg.kind == ExperimentKind::DelaunayAngles {
                Ok((exceedance_aggregates(cfg, &ex, angle_threshold(cfg.n, cfg.tau)?)?, None))
            } else {
                let table = threshold_table(cfg.n, cfg.tau, &params)?;
                let v = nn_threshold_numeric(cfg.n, cfg.tau, &params)?;
                Ok((exceedance_aggregates(cfg, &ex, v)?, Some(table)))
            }
        }
        ExperimentKind::Mardia => {
            let batches: Vec<&MardiaBatchRecord> = records
                .iter()
                .filter_map(|r| if let Record::MardiaBatch(b) = r { Some(b) } else { None })
                .collect();
            let tess = records
                .iter()
                .find_map(|r| if let Record::Tessellation(t) = r { Some(t) } else { None });
            Ok((mardia_aggregates(&batches, tess)?, None))
        }
        ExperimentKind::CpCompare => {
            let recs: Vec<&CpCompareRecord> = records
                .iter()
                .filter_map(|r| if let Record::CpCompare(c) = r { Some(c) } else { None })
                .collect();
            Ok((cp_compare_aggregates(&recs), None))
        }
        ExperimentKind::Thresholds => {
            let table = threshold_table(cfg.n, cfg.tau, &params)?;
            Ok((threshold_aggregates(&table), Some(table)))
        }
    }
}

fn finish(
    cfg: &ExperimentConfig,
    records: Vec<Record>,
    failures: Vec<Failure>,
    started: Instant,
) -> Result<ExperimentReport, ExperimentError> {
    let (aggregates, thresholds) = aggregate(cfg, &records)?;
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        software: Software {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        config: cfg.clone(),
        seeds: SeedInfo {
            master_seed: cfg.master_seed,
            scheme: "ChaCha8 seeded with splitmix64(master_seed ^ splitmix64(replication_index))".into(),
        },
        status: RunStatus {
            complete: failures.is_empty(),
            failures,
        },
        records,
        aggregates,
        thresholds,
        run_info: RunInfo {
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            threads: if cfg.parallel { thread_count() } else { 1 },
        },
    })
}

fn expect_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<(), ExperimentError> {
    cfg.validate()?;
    if cfg.kind != kind {
        return Err(ExperimentError::InvalidConfig(format!(
            "expected kind {kind:?}, got {:?}",
            cfg.kind
        )));
    }
    Ok(())
}

pub fn run_delaunay_angle_study(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    expect_kind(cfg, ExperimentKind::DelaunayAngles)?;
    let started = Instant::now();
    let mut failures = Vec::new();
    let results = replicate(cfg, cfg.replications, |i| delaunay_replication(cfg, i))?;
    let records = split(results, &mut failures)
        .into_iter()
        .map(Record::Exceedance)
        .collect();
    finish(cfg, records, failures, started)
}

pub fn run_nn_gp_study(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    expect_kind(cfg, ExperimentKind::NnGp)?;
    let started = Instant::now();
    let v = nn_threshold_numeric(cfg.n, cfg.tau, &cfg.gp_params()?)?;
    let mut failures = Vec::new();
    let results = replicate(cfg, cfg.replications, |i| nn_replication(cfg, v, i))?;
    let records = split(results, &mut failures)
        .into_iter()
        .map(Record::Exceedance)
        .collect();
    finish(cfg, records, failures, started)
}

pub fn run_mardia_study(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    expect_kind(cfg, ExperimentKind::Mardia)?;
    let started = Instant::now();
    let edges = mardia_bin_edges(MARDIA_BINS);
    let mut failures = Vec::new();
    let results = replicate(cfg, cfg.replications, |i| mardia_batch(cfg, &edges, i))?;
    let mut records: Vec<Record> = split(results, &mut failures)
        .into_iter()
        .map(Record::MardiaBatch)
        .collect();
    match tessellation_check(cfg) {
        Ok(t) => records.push(Record::Tessellation(t)),
        Err(e) => failures.push(Failure {
            index: cfg.replications,
            error: e.to_string(),
        }),
    }
    finish(cfg, records, failures, started)
}

pub fn run_cp_compare_study(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    expect_kind(cfg, ExperimentKind::CpCompare)?;
    let started = Instant::now();
    let mut failures = Vec::new();
    // Each replication already parallelises its cost matrices.
    let serial = ExperimentConfig {
        parallel: false,
        ..cfg.clone()
    };
    let results = replicate(&serial, cfg.replications, |i| cp_compare_replication(cfg, i))?;
    let records = split(results, &mut failures)
        .into_iter()
        .map(Record::CpCompare)
        .collect();
    finish(cfg, records, failures, started)
}

pub fn run_threshold_study(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    expect_kind(cfg, ExperimentKind::Thresholds)?;
    finish(cfg, Vec::new(), Vec::new(), Instant::now())
}

/// Dispatches on `cfg.kind`.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    match cfg.kind {
        ExperimentKind::DelaunayAngles => run_delaunay_angle_study(cfg),
        ExperimentKind::NnGp => run_nn_gp_study(cfg),
        ExperimentKind::Mardia => run_mardia_study(cfg),
        ExperimentKind::CpCompare => run_cp_compare_study(cfg),
        ExperimentKind::Thresholds => run_threshold_study(cfg),
    }
}

/// Empirical void probability of the reduced Palm Gauss-Poisson process in
/// the ball of radius `v`, with its binomial standard error.
pub fn palm_void_frequency(
    params: &GaussPoissonParams,
    v: f64,
    draws: u64,
    seed: Seed,
) -> Result<(f64, f64), ExperimentError> {
    // The sampled window must contain B_v around the origin.
    let window = Window::centered(v + 1.0)?;
    let mut rng = seed.rng();
    let mut hits = 0u64;
    let v2 = v * v;
    for _ in 0..draws {
        let sub = Seed::new(rng.random(), 0);
        let xi = crate::sampling::sample_palm_gauss_poisson(params, &window, sub)?;
        let mut origin_seen = false;
        let empty = xi.points().iter().all(|p| {
            if *p == Point::ORIGIN && !origin_seen {
                origin_seen = true;
                return true;
            }
            p.dist2(&Point::ORIGIN) > v2
        });
        if empty {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    Ok((p, proportion_se(p, draws as usize)))
}
