//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use cpgeom::analytic::{gp_void_prob, mardia_cdf, pn2_integral};
use cpgeom::delaunay::{triangulate, verify_empty_circumdisk};
use cpgeom::exceedances::nn_threshold_numeric;
use cpgeom::experiments::{
    palm_void_frequency, run, ExperimentConfig, ExperimentKind, ExperimentReport, GpParamsConfig, THREADS_ENV,
};
use cpgeom::geometry::Point;
use cpgeom::metrics::{d1, d1_bruteforce};
use cpgeom::sampling::{CountingMeasure, GaussPoissonParams, Seed};
use rand::Rng;

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn agg(report: &ExperimentReport, name: &str) -> (f64, f64) {
    let a = report
        .aggregate(name)
        .unwrap_or_else(|| panic!("missing aggregate {name}"));
    (a.value, a.se.unwrap_or(f64::NAN))
}

fn within_se(value: f64, se: f64, reference: f64, k: f64) -> bool {
    (value - reference).abs() <= k * se
}

fn uniform_points(n: usize, seed: u64) -> CountingMeasure {
    let mut rng = Seed::new(seed, n as u64).rng();
    (0..n).map(|_| Point::new(rng.random(), rng.random())).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    for &n in &[10usize, 100, 2000] {
        for seed in 0..50 {
            let pts = uniform_points(n, seed);
            match triangulate(&pts) {
                Ok(t) => {
                    if !verify_empty_circumdisk(&t, &pts) {
                        failures.push(format!("oracle N={n} seed={seed}"));
                    }
                    if t.len() != 2 * n - t.hull_edges() - 2 {
                        failures.push(format!("Euler N={n} seed={seed}"));
                    }
                }
                Err(e) => failures.push(format!("N={n} seed={seed}: {e}")),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        title: "Delaunay validity (oracle + Euler count, 150 inputs)",
        pass: failures.is_empty() && secs < 60.0,
        detail: format!("failures={failures:?} runtime={secs:.1}s"),
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::new(ExperimentKind::Mardia, 1e4, 1.0, 10, 2002);
    cfg.draws_per_replication = 100_000;
    let report = run(&cfg).expect("mardia study");
    let (p, _) = agg(&report, "chi2_p_value");
    let (chi2, _) = agg(&report, "chi2_statistic");
    let (draws, _) = agg(&report, "draws");
    let integral = mardia_cdf(PI / 3.0);
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 2,
        title: "Mardia density (chi2 over 30 bins, 1e6 draws; integral = 1)",
        pass: report.status.complete && draws == 1e6 && p > 0.01 && (integral - 1.0).abs() < 1e-9 && secs < 120.0,
        detail: format!(
            "chi2={chi2:.3} p={p:.4} |int-1|={:.2e} runtime={secs:.1}s",
            (integral - 1.0).abs()
        ),
    }
}

fn criterion_3() -> Outcome {
    let value = mardia_cdf(0.01);
    let target = 1.99999995e-4;
    Outcome {
        id: 3,
        title: "small-angle CDF expansion at 0.01",
        pass: (value - target).abs() <= 1e-9,
        detail: format!(
            "cdf(0.01)={value:.10e} target={target:e} diff={:.3e}",
            (value - target).abs()
        ),
    }
}

fn delaunay_study(tau: f64, seed: u64) -> ExperimentReport {
    let cfg = ExperimentConfig::new(ExperimentKind::DelaunayAngles, 1e4, tau, 10_000, seed);
    let start = Instant::now();
    let report = run(&cfg).expect("delaunay study");
    eprintln!("delaunay-angles tau={tau}: {:.1}s", start.elapsed().as_secs_f64());
    report
}

fn criterion_4(study: &ExperimentReport, secs: f64) -> Outcome {
    let (mean, se) = agg(study, "mean_count");
    Outcome {
        id: 4,
        title: "mean angle-exceedance count (n=1e4, tau=1, 1e4 reps)",
        pass: study.status.complete && within_se(mean, se, 1.0, 3.0) && (mean - 1.0).abs() < 0.03 && secs < 1800.0,
        detail: format!("mean={mean:.5} se={se:.5} runtime={secs:.1}s"),
    }
}

fn criterion_5(study: &ExperimentReport) -> Outcome {
    let (theta, _) = agg(study, "theta_hat");
    let (q1, _) = agg(study, "q_hat_1");
    let (q2, _) = agg(study, "q_hat_2");
    let (p1, _) = agg(study, "p_hat_1");
    let (p2, _) = agg(study, "p_hat_2");
    let (ge3, _) = agg(study, "p_hat_ge3");
    let checks = [
        ("theta", (0.70..=0.80).contains(&theta)),
        ("Q1", (0.61..=0.72).contains(&q1)),
        ("Q2", (0.28..=0.39).contains(&q2)),
        ("p1", (p1 - 0.5).abs() <= 0.05),
        ("p2", (p2 - 0.5).abs() <= 0.05),
        ("p>=3", ge3 < 0.02),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Outcome {
        id: 5,
        title: "extremal index and cluster law (tau=5)",
        pass: study.status.complete && failed.is_empty(),
        detail: format!(
            "theta={theta:.4} Q1={q1:.4} Q2={q2:.4} p1={p1:.4} p2={p2:.4} sum_p>=3={ge3:.4} failed={failed:?}"
        ),
    }
}

fn criterion_6(tau1: &ExperimentReport, tau5: &ExperimentReport) -> Outcome {
    let mut pass = true;
    let mut detail = String::new();
    for (tau, study) in [(1.0, tau1), (5.0, tau5)] {
        let (p, se) = agg(study, "p_zero");
        let target = (-0.75f64 * tau).exp();
        let ok = within_se(p, se, target, 3.0);
        pass &= ok;
        detail += &format!(
            "tau={tau}: P0={p:.5} se={se:.5} target={target:.5} z={:.2}; ",
            (p - target) / se
        );
    }
    Outcome {
        id: 6,
        title: "void-of-exceedances limit exp(-3 tau/4)",
        pass,
        detail,
    }
}

fn criterion_7(study: &ExperimentReport) -> Outcome {
    let (tv, _) = agg(study, "tv_limit");
    Outcome {
        id: 7,
        title: "compound count law (TV to CP count pmf, tau=1)",
        pass: tv < 0.03,
        detail: format!("tv={tv:.5}"),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = Seed::new(88, 0).rng();
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let m = 2 + k % 6;
        let pat = |rng: &mut rand_chacha::ChaCha8Rng| -> CountingMeasure {
            (0..m)
                .map(|_| Point::new(2.0 * rng.random::<f64>(), 2.0 * rng.random::<f64>()))
                .collect()
        };
        let (a, b) = (pat(&mut rng), pat(&mut rng));
        let fast = d1(&a, &b).value;
        let slow = d1_bruteforce(&a, &b).expect("m <= 8");
        worst = worst.max((fast - slow).abs());
    }
    let two: CountingMeasure = [Point::new(0.0, 0.0), Point::new(1.0, 0.0)].into_iter().collect();
    let three: CountingMeasure = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.5, 0.5)]
        .into_iter()
        .collect();
    let mismatch = d1(&two, &three).value;
    Outcome {
        id: 8,
        title: "d1 exactness (Hungarian vs brute force, 1000 pairs)",
        pass: worst <= 1e-12 && mismatch == 1.0,
        detail: format!("max|diff|={worst:.2e} mismatch={mismatch}"),
    }
}

fn criterion_9() -> Outcome {
    let mut cfg = ExperimentConfig::new(ExperimentKind::CpCompare, 1.0, 1.0, 10, 909);
    cfg.d2_samples = 500;
    let report = run(&cfg).expect("cp-compare study");
    let (self_d2, self_se) = agg(&report, "d2_self");
    let (cross, _) = agg(&report, "d2_cross_poisson");
    let (sep, sep_se) = agg(&report, "d2_separation");
    Outcome {
        id: 9,
        title: "empirical d2 calibration (m=500, tau=1)",
        pass: report.status.complete && self_d2 < 0.05 && sep >= 3.0 * sep_se,
        detail: format!(
            "self={self_d2:.4} (se {self_se:.4}) cross={cross:.4} separation={sep:.4} = {:.1} se",
            sep / sep_se
        ),
    }
}

fn criterion_10() -> Outcome {
    let mut rng = Seed::new(1010, 0).rng();
    let mut worst = 0.0f64;
    let mut errors = Vec::new();
    for _ in 0..20 {
        let n = 10f64.powf(rng.random_range(3.0..7.0));
        let tau = rng.random_range(0.1..10.0);
        let p1 = rng.random_range(0.05..0.9);
        let p2 = rng.random_range(0.0..(1.0 - p1) * 0.999);
        let params = GaussPoissonParams::from_p1_p2(p1, p2).expect("valid params");
        match nn_threshold_numeric(n, tau, &params) {
            Ok(v) => worst = worst.max((n * gp_void_prob(v, &params) / tau - 1.0).abs()),
            Err(e) => errors.push(e.to_string()),
        }
    }
    let params = GaussPoissonParams::from_p1_p2(0.5, 0.25).expect("valid params");
    let mut mc = String::new();
    let mut mc_ok = true;
    for (k, v) in [0.5, 1.5].into_iter().enumerate() {
        let (p, se) = palm_void_frequency(&params, v, 200_000, Seed::new(1011, k as u64)).expect("palm sampler");
        let exact = gp_void_prob(v, &params);
        mc_ok &= within_se(p, se, exact, 3.0);
        mc += &format!("v={v}: mc={p:.5} se={se:.5} exact={exact:.5}; ");
    }
    Outcome {
        id: 10,
        title: "GP void probability round trip and Palm Monte Carlo",
        pass: errors.is_empty() && worst <= 1e-10 && mc_ok,
        detail: format!("max rel residual={worst:.2e} errors={errors:?} {mc}"),
    }
}

fn criterion_11() -> Outcome {
    let mut cfg = ExperimentConfig::new(ExperimentKind::NnGp, 1e5, 1.0, 1000, 1111);
    cfg.params = Some(GpParamsConfig { p1: 0.6, p2: 0.2 });
    let start = Instant::now();
    let report = run(&cfg).expect("nn-gp study");
    let (k1, _) = agg(&report, "order_statistic_1");
    let (k2, _) = agg(&report, "order_statistic_2");
    let (mean, se) = agg(&report, "mean_count");
    let e1 = (-1f64).exp();
    Outcome {
        id: 11,
        title: "GP order statistics (n=1e5, tau=1, 1e3 reps)",
        pass: report.status.complete && (k1 - e1).abs() < 0.05 && (k2 - 2.0 * e1).abs() < 0.05,
        detail: format!(
            "P(M1<=v)={k1:.4} (e^-1={e1:.4}) P(M2<=v)={k2:.4} (2e^-1={:.4}) mean={mean:.4}+-{se:.4} runtime={:.1}s",
            2.0 * e1,
            start.elapsed().as_secs_f64()
        ),
    }
}

fn criterion_12() -> Outcome {
    let i1 = pn2_integral(1.0);
    let i2 = pn2_integral(2.0);
    Outcome {
        id: 12,
        title: "pn2 integral identity",
        pass: (i1 - 0.0625).abs() <= 1e-6 && (i2 - 4.0 * i1).abs() <= 1e-6,
        detail: format!("I(1)={i1:.12} I(2)={i2:.12}"),
    }
}

fn without_run_info(report: &ExperimentReport) -> String {
    let mut v = serde_json::to_value(report).expect("serialisable");
    v.as_object_mut().expect("object").remove("run_info");
    serde_json::to_string_pretty(&v).expect("serialisable")
}

fn criterion_13() -> Outcome {
    std::env::set_var(THREADS_ENV, "4");
    let mut detail = String::new();
    let mut pass = true;
    for kind in [
        ExperimentKind::DelaunayAngles,
        ExperimentKind::NnGp,
        ExperimentKind::Mardia,
        ExperimentKind::CpCompare,
        ExperimentKind::Thresholds,
    ] {
        let mut cfg = ExperimentConfig::new(kind, 2500.0, 3.0, 40, 1313);
        cfg.draws_per_replication = 5000;
        cfg.d2_samples = 20;
        if kind == ExperimentKind::CpCompare {
            cfg.replications = 3;
        }
        let a = run(&cfg).expect("study");
        let b = run(&cfg).expect("study");
        let rerun_ok = without_run_info(&a) == without_run_info(&b);
        cfg.parallel = false;
        let s = run(&cfg).expect("study");
        let bits = |r: &ExperimentReport| -> Vec<(String, u64)> {
            r.aggregates
                .iter()
                .map(|g| (g.name.clone(), g.value.to_bits()))
                .collect()
        };
        let serial_ok = bits(&a) == bits(&s) && a.records == s.records;
        pass &= rerun_ok && serial_ok;
        detail += &format!("{kind:?}: rerun={rerun_ok} serial={serial_ok}; ");
    }
    std::env::remove_var(THREADS_ENV);
    Outcome {
        id: 13,
        title: "reproducibility (rerun and serial vs parallel)",
        pass,
        detail,
    }
}

fn report(o: &Outcome) {
    println!(
        "[{}] criterion {:>2}: {} :: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.id,
        o.title,
        o.detail
    );
}

fn main() {
    let mut outcomes = Vec::new();
    let mut push = |o: Outcome| {
        report(&o);
        outcomes.push(o);
    };
    push(criterion_1());
    push(criterion_2());
    push(criterion_3());
    push(criterion_8());
    push(criterion_10());
    push(criterion_12());
    push(criterion_13());
    push(criterion_9());
    push(criterion_11());
    let t = Instant::now();
    let tau1 = delaunay_study(1.0, 404);
    let secs = t.elapsed().as_secs_f64();
    push(criterion_4(&tau1, secs));
    push(criterion_7(&tau1));
    let tau5 = delaunay_study(5.0, 505);
    push(criterion_5(&tau5));
    push(criterion_6(&tau1, &tau5));

    outcomes.sort_by_key(|o| o.id);
    println!("\nacceptance summary:");
    for o in &outcomes {
        report(o);
    }
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "{} of {} criteria passed; failing: {failed:?}",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
