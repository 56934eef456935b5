//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and exits non-zero
//! if any failed.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use cvqkd_core::config::{ConfigMap, RunConfig};
use cvqkd_core::driver::{evaluate_point, max_secure_distance, sweep, Axis};
use cvqkd_core::estimation::{confidence_bounds, mle_estimate, SampleSet};
use cvqkd_core::finite_size::finite_key_rate;
use cvqkd_core::gaussian::{channel_output_covariance, qfunction_coefficients};
use cvqkd_core::info::{gaussian_mutual_information, holevo_bound, nongaussian_mutual_information};
use cvqkd_core::mc::{simulate, SimConfig};
use cvqkd_core::nla::{effective_covariance, effective_parameters};
use cvqkd_core::postselection::{postselect, resolve_cutoff, FilterConfig, Regime};

const FIXTURE: &str = "
channel.distance_km = 43
channel.loss_db_per_km = 0.2
channel.excess_noise = 0.1
protocol.chi = 0.8379
protocol.gain = 1.1
protocol.cutoff_multiple = 3
protocol.beta = 0.95
security.epsilon = 1e-6
security.n = 1e12
security.d = 5
";

/// The fixture with `key = value` lines of `extra` overriding it.
fn fixture(extra: &str) -> RunConfig {
    let mut map = ConfigMap::parse(FIXTURE).expect("fixture parses");
    for line in extra.lines().map(str::trim).filter(|l| !l.is_empty()) {
        map.apply_override(line).expect("override applies");
    }
    RunConfig::from_map(&map).expect("fixture is valid")
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(x: f64, target: f64) -> f64 {
    (x - target) / target
}

fn criterion_1() -> Outcome {
    let r = evaluate_point(&fixture("")).unwrap();
    let k = r.key.k_fs;
    check(
        rel(k, 3.4e-6).abs() <= 0.15,
        format!("K_fs = {k:.4e} ({:+.1}% vs 3.4e-6), P_s = {:.5}", 100.0 * rel(k, 3.4e-6), r.key.success_probability),
    )
}

fn criterion_2() -> Outcome {
    let cfg = fixture("");
    let m = channel_output_covariance(cfg.chi, &cfg.channel.model().unwrap()).unwrap();
    let g = resolve_cutoff(&cfg.filter, &m);
    check((g - 4.26).abs() <= 0.01, format!("gamma_c = {g:.5}"))
}

fn criterion_3() -> Outcome {
    let rows = sweep(&fixture(""), Axis::Cutoff, 2.5, 4.5, 21, &[], false).unwrap();
    let (best, k) = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|p| (r.value, p.key.k_fs)))
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    check(
        (best - 3.4).abs() <= 0.2 && rel(k, 4.3e-5).abs() <= 0.15,
        format!("max K_fs = {k:.4e} ({:+.1}% vs 4.3e-5) at gamma_c = {best:.2}", 100.0 * rel(k, 4.3e-5)),
    )
}

fn criterion_4() -> Outcome {
    let cfg = fixture("");
    let m = channel_output_covariance(cfg.chi, &cfg.channel.model().unwrap()).unwrap();
    let q = qfunction_coefficients(&m).unwrap();
    let gaps: Vec<(f64, f64)> = [3.0, 3.25, 3.5, 3.75, 4.0]
        .par_iter()
        .map(|&kappa| {
            let f = FilterConfig::multiple(1.1, kappa);
            let ps = postselect(&m, &f, &cfg.quadrature).unwrap();
            let g = gaussian_mutual_information(&ps.covariance).unwrap();
            let n = nongaussian_mutual_information(&q, &f, &cfg.quadrature).unwrap();
            (kappa, (g - n).abs() / n)
        })
        .collect();
    let worst = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    let list: Vec<String> = gaps.iter().map(|(k, g)| format!("{k}:{g:.2e}")).collect();
    check(worst < 0.008, format!("m = {}, gaps {}", cfg.quadrature.m, list.join(" ")))
}

fn criterion_5() -> Outcome {
    let base = "protocol.direction = direct\nsecurity.n = 1e10\nsearch.optimize = true\nsearch.max_km = 50\n";
    let plain = fixture(&format!("{base}protocol.gain = 1\nprotocol.cutoff_multiple = 0\noptimize.vary = chi\n"));
    let ps = fixture(&format!("{base}protocol.cutoff_multiple = 2\noptimize.vary = chi,gain\n"));
    let a = max_secure_distance(&plain).unwrap();
    let b = max_secure_distance(&ps).unwrap();
    check(
        (a.km - 3.7).abs() <= 0.3 && (b.km - 4.7).abs() <= 0.3,
        format!(
            "no PS {:.2} km (chi {:.4}), kappa=2 {:.2} km (chi {:.4}, g {:.4})",
            a.km, a.report.chi, b.km, b.report.chi, b.report.filter.gain
        ),
    )
}

fn criterion_6() -> Outcome {
    let at = |km: f64, kappa: f64| {
        let c = fixture(&format!("security.n = 1e11\nprotocol.cutoff_multiple = {kappa}")).at_distance(km);
        evaluate_point(&c).map(|r| r.key.k_fs).unwrap_or(f64::NAN)
    };
    let grid: Vec<f64> = (0..=120).map(|i| 39.0 + 0.05 * i as f64).collect();
    let hits: Vec<f64> = grid
        .par_iter()
        .copied()
        .filter(|&d| at(d, 3.0) <= 0.0 && at(d, 2.5) > 0.0)
        .collect();
    match hits.first() {
        Some(&d) => check(
            true,
            format!(
                "{} km..{} km: K_fs(kappa=3) = {:.3e}, K_fs(kappa=2.5) = {:.3e} at {d:.2} km",
                hits[0],
                hits[hits.len() - 1],
                at(d, 3.0),
                at(d, 2.5)
            ),
        ),
        None => check(false, "no distance in 39..45 km separates kappa=3 from kappa=2.5".into()),
    }
}

fn criterion_7() -> Outcome {
    let cfg = fixture("");
    let m = channel_output_covariance(cfg.chi, &cfg.channel.model().unwrap()).unwrap();
    let unit = 1.1 * m.b.sqrt();
    let grid = [2.0, 3.0, 3.4, 4.26, 4.0 * unit];
    let mut worst = 0.0f64;
    for (i, &gc) in grid.iter().enumerate() {
        let f = FilterConfig::absolute(1.1, gc);
        let quad = postselect(&m, &f, &cfg.quadrature).unwrap();
        let sim = simulate(
            &m,
            &SimConfig {
                shards: 8,
                ..SimConfig::new(1_000_000, 1000 + i as u64, f)
            },
        )
        .unwrap();
        let se = &sim.moments.std_error;
        let zs = [
            (sim.success_probability - quad.success_probability) / sim.success_probability_se,
            (sim.moments.covariance.a - quad.covariance.a) / se[0],
            (sim.moments.covariance.b - quad.covariance.b) / se[1],
            (sim.moments.covariance.c - quad.covariance.c) / se[2],
        ];
        worst = zs.iter().fold(worst, |w, z| w.max(z.abs()));
    }
    check(worst <= 3.0, format!("largest deviation {worst:.2} standard errors over gamma_c {grid:.2?}"))
}

fn criterion_8() -> Outcome {
    let cfg = fixture("");
    let ch = cfg.channel.model().unwrap();
    let m = channel_output_covariance(cfg.chi, &ch).unwrap();
    let plain = {
        let i = gaussian_mutual_information(&m).unwrap();
        let x = holevo_bound(&m, cfg.direction).unwrap();
        finite_key_rate(i, x, 1.0, cfg.beta, &cfg.budget, Regime::Gaussian).unwrap().k_fs
    };
    let unit_gain = evaluate_point(&fixture("protocol.gain = 1")).unwrap().key.k_fs;
    let zero_cut = evaluate_point(&fixture("protocol.cutoff_multiple = 0")).unwrap().key.k_fs;
    let e1 = rel(unit_gain, plain).abs().max(rel(zero_cut, plain).abs());

    let ps = postselect(&m, &FilterConfig::multiple(1.1, 4.0), &cfg.quadrature).unwrap();
    let eff = effective_covariance(&effective_parameters(cfg.chi, ch.transmissivity, ch.excess_noise, 1.1).unwrap()).unwrap();
    let e2 = ps.covariance.max_rel_diff(&eff);
    check(
        e1 <= 1e-10 && e2 <= 1e-3,
        format!("no-PS reduction rel err {e1:.1e}; kappa=4 vs effective covariance rel err {e2:.2e}"),
    )
}

fn coverage(k: usize, trials: usize, eps_pe: f64) -> [f64; 3] {
    let (t, va, sigma2): (f64, f64, f64) = (0.2627, 2.365, 1.0138);
    let covered: Vec<[bool; 3]> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha20Rng::seed_from_u64(trial as u64);
            let mut xs = Vec::with_capacity(k);
            let mut ys = Vec::with_capacity(k);
            for _ in 0..k {
                let (u, v): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                let x = va.sqrt() * u;
                xs.push(x);
                ys.push(t * x + sigma2.sqrt() * v);
            }
            let est = mle_estimate(&SampleSet::new(xs, ys).unwrap()).unwrap();
            let b = confidence_bounds(&est, k, eps_pe).unwrap();
            [
                (est.t - t).abs() <= b.dt,
                (est.sigma2 - sigma2).abs() <= b.dsigma2,
                (est.va - va).abs() <= b.dva,
            ]
        })
        .collect();
    let mut out = [0.0; 3];
    for (j, o) in out.iter_mut().enumerate() {
        *o = covered.iter().filter(|c| c[j]).count() as f64 / trials as f64;
    }
    out
}

fn criterion_9() -> Outcome {
    let trials = 10_000;
    let mut pass = true;
    let mut parts = Vec::new();
    // The budget's eps_PE, then a loose level where the interval width actually binds.
    for eps in [2e-7, 0.05] {
        let cov = coverage(10_000, trials, eps);
        let floor = 1.0 - eps - 3.0 * (eps * (1.0 - eps) / trials as f64).sqrt();
        pass &= cov.iter().all(|&c| c >= floor);
        parts.push(format!("eps_PE={eps}: t {:.4} sigma2 {:.4} V_A {:.4} (floor {floor:.5})", cov[0], cov[1], cov[2]));
    }
    check(pass, parts.join("; "))
}

/// Open question, not a gate: no-PS distance at xi = 0.05 with optimised chi.
fn no_ps_distance_report() -> String {
    let mut out = Vec::new();
    for n in ["1e12", "inf"] {
        let c = fixture(&format!(
            "channel.excess_noise = 0.05\nprotocol.gain = 1\nprotocol.cutoff_multiple = 0\nsecurity.n = {n}\n\
             optimize.vary = chi\nsearch.optimize = true\nsearch.max_km = 400"
        ));
        match max_secure_distance(&c) {
            Ok(d) => out.push(format!("n={n}: {:.2} km", d.km)),
            Err(e) => out.push(format!("n={n}: {e}")),
        }
    }
    out.join(", ")
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("fixture finite-size rate", criterion_1, Duration::from_secs(60)),
        ("cut-off anchor", criterion_2, Duration::from_secs(1)),
        ("cut-off optimisation", criterion_3, Duration::from_secs(600)),
        ("entropy-integral mutual information", criterion_4, Duration::from_secs(600)),
        ("direct-reconciliation distances", criterion_5, Duration::from_secs(900)),
        ("reduced cut-off extends range", criterion_6, Duration::from_secs(600)),
        ("quadrature vs Monte Carlo", criterion_7, Duration::from_secs(300)),
        ("limit suite", criterion_8, Duration::from_secs(600)),
        ("estimation coverage", criterion_9, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let pass = o.pass && took <= *budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} [{}] {name}: {} ({:.1} s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
    }
    println!("info: no post-selection distance at xi=0.05: {}", no_ps_distance_report());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
