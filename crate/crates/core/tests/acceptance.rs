//! End-to-end acceptance checks. Runs as a plain binary (`harness = false`)
//! printing one PASS/FAIL line per criterion; exits nonzero on any failure.
//! Build with optimizations (the dev profile already is); the Monte Carlo
//! criteria take several minutes on a single core.

mod common;

use common::*;
use kmon_core::harness::{Generator, KStar};
use kmon_core::limits::{
    calibrate, gamma_bar_functional, gamma_functional, gamma_process, Calibration, LimitKind, WienerPaths,
};
use kmon_core::retro::{retro_statistic_with, retro_test};
use kmon_core::rng::stream_rng;
use kmon_core::spectrum::estimate_spectrum;
use kmon_core::*;
use rand::Rng;
use rayon::prelude::*;
use std::time::Instant;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn in_band(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn table(scenario: ScenarioSpec, kernels: Vec<KernelSpec>, schemes: Vec<Scheme>) -> TableConfig {
    TableConfig {
        scenario,
        kernels,
        schemes,
        betas: vec![0.0],
        baselines: vec![],
        alpha: 0.05,
        calibration: Calibration {
            reps: 2000,
            top_l: Some(200),
            ..Calibration::default()
        },
        size_adjusted: false,
        pilot_m: None,
    }
}

fn study_kernels() -> Vec<KernelSpec> {
    vec![KernelSpec::sqrt_l1(), KernelSpec::euclidean(), KernelSpec::gaussian_median()]
}

fn all_schemes() -> Vec<Scheme> {
    vec![Scheme::D1, Scheme::D2, Scheme::D3(WindowParams::default())]
}

fn null_size() -> Outcome {
    let mut scen = ScenarioSpec::study(200, Alternative::Null, Strength::Strong);
    scen.seed = 101;
    let report = run_table(&table(scen, study_kernels(), all_schemes())).unwrap();
    let cells: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{}/{}={:.3}", r.detector, r.kernel, r.rejection_rate))
        .collect();
    let ok = report.rows.iter().all(|r| in_band(r.rejection_rate, 0.03, 0.07));
    (ok, format!("rejection in [0.03, 0.07]: {}", cells.join(" ")))
}

fn delay_ordering() -> Outcome {
    let mut scen = ScenarioSpec::study(200, Alternative::Location, Strength::Strong);
    scen.reps = 500;
    scen.seed = 202;
    let mut cfg = table(scen, vec![KernelSpec::sqrt_l1()], all_schemes());
    // delays are compared at equal empirical size
    cfg.size_adjusted = true;
    let report = run_table(&cfg).unwrap();
    let med = |d: &str| report.rows.iter().find(|r| r.detector == d).unwrap().median_delay;
    let (d1, d2, d3) = (med("D1"), med("D2"), med("D3"));
    (d3 < d1 && d2 <= d1, format!("median delays D1 {d1:.1}, D2 {d2:.1}, D3 {d3:.1}"))
}

fn baseline_blindness() -> Outcome {
    let mut scen = ScenarioSpec::study(200, Alternative::Scale, Strength::Strong);
    scen.reps = 500;
    scen.seed = 303;
    let mut cfg = table(scen, vec![], vec![]);
    cfg.baselines = vec![CusumVariant::Mean, CusumVariant::Vech];
    let report = run_table(&cfg).unwrap();
    let power = |d: &str| report.rows.iter().find(|r| r.detector == d).unwrap().rejection_rate;
    let (mean, vech) = (power(CusumVariant::Mean.label()), power(CusumVariant::Vech.label()));
    (
        in_band(mean, 0.02, 0.10) && vech >= 0.95,
        format!("mean-CUSUM power {mean:.3} (want [0.02, 0.10]), vech-CUSUM power {vech:.3} (want >= 0.95)"),
    )
}

fn oracle_equivalence() -> Outcome {
    let specs = all_kernels();
    let mut rng = stream_rng(404, &[]);
    let (instances, mut checks, mut worst) = (250, 0usize, 0.0f64);
    for i in 0..instances {
        let m = rng.random_range(3..=20);
        let k = rng.random_range(2..=15);
        let d = rng.random_range(1..=4);
        let window = WindowParams {
            cw: rng.random_range(0.1..1.5),
            bw: rng.random_range(0.0..=1.0),
        };
        let spec = &specs[i % specs.len()];
        let tr = gaussian(m, d, rng.random());
        let st = gaussian(k, d, rng.random());
        let h = spec.resolve(Some(&tr)).unwrap();
        let mut state = DetectorState::new(&h, &tr).unwrap();
        let mut rel = |got: f64, want: f64| {
            checks += 1;
            worst = worst.max((got - want).abs() / got.abs().max(want.abs()).max(1e-12));
        };
        for (j, obs) in st.iter().enumerate() {
            state.update(obs).unwrap();
            let kk = j + 1;
            if kk < 2 {
                continue;
            }
            rel(state.d1().unwrap(), oracle_d1(&h, &tr, &st, kk));
            rel(state.d2().unwrap(), oracle_d2(&h, &tr, &st, kk));
            if window.length(kk, m) >= 2 {
                rel(state.d3(&window).unwrap(), oracle_d3(&h, &tr, &st, kk, window.cw, window.bw));
            }
        }
    }
    (
        worst <= 1e-9,
        format!("{instances} instances, {checks} comparisons, max relative error {worst:.2e}"),
    )
}

fn additive_annihilation() -> Outcome {
    let mut rng = stream_rng(505, &[]);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let m = rng.random_range(5..=50);
        let k = rng.random_range(2..=50);
        let d = rng.random_range(1..=4);
        let tr = gaussian(m, d, rng.random());
        let st = gaussian(k, d, rng.random());
        let window = WindowParams {
            cw: rng.random_range(0.1..1.5),
            bw: rng.random_range(0.0..=1.0),
        };
        let mut state = DetectorState::new(Additive, &tr).unwrap();
        for obs in &st {
            state.update(obs).unwrap();
            if state.k() < 2 {
                continue;
            }
            worst = worst.max(state.d1().unwrap().abs()).max(state.d2().unwrap().abs());
            if window.length(state.k(), m) >= 2 {
                worst = worst.max(state.d3(&window).unwrap().abs());
            }
        }
        let zeta = rng.random_range(0.0..0.9);
        worst = worst.max(retro_statistic_with(&Additive, &tr, zeta).unwrap().statistic);
    }
    (worst <= 1e-12, format!("300 random instances, max |statistic| {worst:.2e}"))
}

fn product_kernel_spectrum() -> Outcome {
    // z-scored so the sample itself has unit variance
    let raw = gaussian(2000, 1, 606);
    let n = raw.len() as f64;
    let mean = raw.iter().map(|v| v[0]).sum::<f64>() / n;
    let sd = (raw.iter().map(|v| (v[0] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let x: Vec<Vec<f64>> = raw.iter().map(|v| vec![(v[0] - mean) / sd]).collect();
    let h = FnKernel(|a: &[f64], b: &[f64]| a[0] * b[0]);
    let s = estimate_spectrum(&h, &x).unwrap();
    let (l1, l2) = (s.lambdas[0], s.lambdas[1]);
    (
        in_band(l1, 0.9, 1.1) && l2.abs() <= 0.1,
        format!("lambda1 {l1:.4} (want [0.9, 1.1]), |lambda2| {:.4} (want <= 0.1)", l2.abs()),
    )
}

fn limit_variance() -> Outcome {
    let x = gaussian(200, 5, 707);
    let h = KernelSpec::euclidean().resolve(Some(&x)).unwrap();
    let lambdas = estimate_spectrum(&h, &x).unwrap().lambdas;
    let reps = 10_000;
    let vals: Vec<f64> = (0..reps)
        .map(|i| {
            let mut rng = stream_rng(708, &[i]);
            let paths = WienerPaths::simulate(vec![0.25, 0.5], lambdas.len(), &mut rng);
            gamma_process(&paths, &lambdas)[1]
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / reps as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let theory = 2.0 * 0.25 * lambdas.iter().map(|l| l * l).sum::<f64>();
    let var_ok = (var / theory - 1.0).abs() <= 0.10;

    let times: Vec<f64> = (1..=256).map(|j| j as f64 / 256.0).collect();
    let mut dominated = true;
    for i in 0..500 {
        let mut rng = stream_rng(709, &[i]);
        let paths = WienerPaths::simulate(times.clone(), lambdas.len(), &mut rng);
        for beta in [0.0, 0.45] {
            let (g, gb) = (gamma_functional(&paths, &lambdas, beta), gamma_bar_functional(&paths, &lambdas, beta));
            dominated &= gb >= g * (1.0 - 1e-12);
        }
    }
    (
        var_ok && dominated,
        format!(
            "Var Gamma(0.5) {var:.5} vs theory {theory:.5} (ratio {:.3}); GammaBar >= Gamma on 1000 coupled paths: {dominated}",
            var / theory
        ),
    )
}

fn median_delay(m: usize) -> f64 {
    let mut scen = ScenarioSpec::study(m, Alternative::Location, Strength::Strong);
    scen.k_star = KStar::Fixed(10);
    let gen = Generator::new(&scen).unwrap();
    let pilot = gen.generate(&mut stream_rng(808, &[m as u64])).training;
    let spec = KernelSpec::euclidean();
    let spectrum = estimate_spectrum(&spec.resolve(Some(&pilot)).unwrap(), &pilot).unwrap();
    let cal = Calibration {
        reps: 1000,
        seed: 809,
        ..Calibration::default()
    };
    let cv = calibrate(LimitKind::Gamma, &spectrum, scen.span(), 0.0, None, None, 0.05, &cal).unwrap();
    let cfg = MonitorConfig {
        scheme: Scheme::D1,
        boundary: BoundaryParams::standard(0.0),
        horizon: Horizon::Closed(scen.horizon),
        critical_value: cv,
        kernel: spec,
        max_page_lag: None,
    };
    empirical_delay_distribution(&cfg, |rng| gen.generate(rng), 300, 810 + m as u64)
        .unwrap()
        .median
}

fn delay_scaling() -> Outcome {
    let (small, large) = (median_delay(200), median_delay(800));
    let ratio = large / small;
    (
        in_band(ratio, 1.4, 2.8),
        format!("median delay m=200 {small:.1}, m=800 {large:.1}, ratio {ratio:.3} (want [1.4, 2.8])"),
    )
}

/// The full test per replication: spectrum of the sample itself, bridge
/// limit over the sample's split times.
fn retro_size() -> Outcome {
    let scen = ScenarioSpec {
        horizon: 3,
        ..ScenarioSpec::study(200, Alternative::Null, Strength::Strong)
    };
    let gen = Generator::new(&scen).unwrap();
    let reps = 1000u64;
    let rejections = (0..reps)
        .into_par_iter()
        .filter(|i| {
            let x = gen.generate(&mut stream_rng(909, &[*i])).training;
            let cal = Calibration {
                reps: 1000,
                seed: 910 + i,
                ..Calibration::default()
            };
            retro_test(&KernelSpec::euclidean(), &x, 0.0, 0.05, &cal).unwrap().reject
        })
        .count();
    let rate = rejections as f64 / reps as f64;
    (in_band(rate, 0.03, 0.07), format!("rejection {rate:.3} over {reps} samples (want [0.03, 0.07])"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("null size", null_size),
        ("delay ordering", delay_ordering),
        ("baseline blindness", baseline_blindness),
        ("oracle equivalence", oracle_equivalence),
        ("additive annihilation", additive_annihilation),
        ("product-kernel spectrum", product_kernel_spectrum),
        ("limit variance", limit_variance),
        ("delay scaling", delay_scaling),
        ("retro size", retro_size),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = check();
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {n} ({name}): {} - {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
