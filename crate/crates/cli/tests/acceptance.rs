//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use sigtest::glm::{cox_fit, logistic_fit, BinaryDataset, SurvivalDataset};
use sigtest::montecarlo::{gen_design, replication_rng, run_scenario_with_threads, Design, Scenario};
use sigtest::sig_tests::covariance_statistic;
use sigtest::{
    covariance_test, gumbel_cdf, gumbel_correction, gumbel_quantile, lars_path, lasso_solve,
    least_squares, stepwise_path, Dataset, Selector,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> (Verdict, Duration) {
    let start = Instant::now();
    let mut v = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            v.pass = false;
            v.detail.push_str(&format!("; runtime {:.1}s exceeds {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()));
        }
    }
    (v, elapsed)
}

fn identity_sweep() -> Verdict {
    let (mut worst, mut tested, mut skipped) = (0.0f64, 0, 0);
    for idx in 0..100u64 {
        let p = if idx % 2 == 0 { 5 } else { 10 };
        let rho = if idx % 4 < 2 { 0.0 } else { 0.5 };
        let data = common::random_dataset(1001, idx, 30, p, rho, &[]);
        let path = lars_path(&data, p).unwrap();
        for k in 1..p {
            match covariance_statistic(&path, &data, k) {
                Ok(s) => {
                    worst = worst.max((s.inner_product_form - s.decomposition_form).abs());
                    tested += 1;
                }
                Err(_) => skipped += 1,
            }
        }
    }
    verdict(
        worst < 1e-8 && tested > 0,
        format!("{tested} steps, worst gap {worst:.2e}, {skipped} steps without a following entry"),
    )
}

fn orthogonal_closed_forms() -> Verdict {
    let sigma2 = 2.0;
    let mut worst = 0.0f64;
    let mut order_ok = true;
    for idx in 0..20 {
        let mut rng = replication_rng(1002, idx);
        let x = gen_design(Design::Orthogonal, 60, 20, &mut rng).unwrap();
        let y = common::normal_vec(60, &mut rng) * 2.5;
        let data = Dataset::new(x, y, Some(sigma2)).unwrap();
        let z = data.x().tr_mul(data.y());
        let mut sorted: Vec<(usize, f64)> = z.iter().map(|v| v.abs()).enumerate().collect();
        sorted.sort_by(|a, b| b.1.total_cmp(&a.1));

        let path = lars_path(&data, 20).unwrap();
        for (knot, (m, lam)) in path.knots.iter().zip(&sorted) {
            order_ok &= knot.variable == *m;
            worst = worst.max((knot.lambda - lam).abs());
        }
        for t in [0.1, 0.5, 1.0, 2.0] {
            let beta = lasso_solve(&data, t, None).unwrap().beta;
            let soft = z.map(|v| v.signum() * (v.abs() - t).max(0.0));
            worst = worst.max((beta - soft).amax());
        }
        for k in 1..20 {
            let (lk, lk1) = (sorted[k - 1].1, sorted[k].1);
            let t = covariance_test(&path, &data, k, 0.05).unwrap().statistic;
            worst = worst.max((t - lk * (lk - lk1) / sigma2).abs());
        }
    }
    verdict(order_ok && worst < 1e-8, format!("worst deviation {worst:.2e}, entry order matches: {order_ok}"))
}

fn gumbel_utilities() -> Verdict {
    let at_loc = (gumbel_cdf(-std::f64::consts::PI.ln()) - (-1.0f64).exp()).abs();
    let round_trip = (1..=1000)
        .map(|i| {
            let p = i as f64 / 1001.0;
            (gumbel_cdf(gumbel_quantile(p).unwrap()) - p).abs()
        })
        .fold(0.0, f64::max);
    let c50 = gumbel_correction(50).unwrap();
    let c47 = gumbel_correction(47).unwrap();
    let pass = at_loc < 1e-12 && round_trip < 1e-10 && (c50 - 6.45999).abs() < 1e-4 && (c47 - 6.35222).abs() < 1e-4;
    verdict(
        pass,
        format!("cdf(loc) error {at_loc:.1e}, round trip {round_trip:.1e}, c(50) = {c50:.5}, c(47) = {c47:.5}"),
    )
}

fn preset(name: &str) -> Scenario {
    Scenario::preset(name).expect("preset exists")
}

fn fig1_left() -> Verdict {
    let s = run_scenario_with_threads(&preset("fig1-left"), 1).unwrap();
    let pass = s.ks < 0.08 && (0.02..=0.09).contains(&s.rejection_rate_05);
    verdict(pass, format!("KS {:.4}, type-I error {:.3}", s.ks, s.rejection_rate_05))
}

fn signal_presets() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["fig1-right", "fig2-left", "fig2-right"] {
        let s = run_scenario_with_threads(&preset(name), 0).unwrap();
        pass &= s.ks < 0.12;
        parts.push(format!("{name} KS {:.4} ({} of {} outside the null)", s.ks, s.outside_null, s.statistics.len()));
    }
    verdict(pass, parts.join(", "))
}

fn covariance_calibration() -> Verdict {
    let s = run_scenario_with_threads(&preset("cov-null"), 0).unwrap();
    let ar = Scenario {
        name: "cov-null-ar0.8".into(),
        design: Design::Ar1 { rho: 0.8 },
        ..preset("cov-null")
    };
    let a = run_scenario_with_threads(&ar, 0).unwrap();
    let mean = s.mean();
    let pass = (0.75..=1.30).contains(&mean) && s.rejection_rate_05 <= 0.09 && a.rejection_rate_05 <= 0.06;
    verdict(
        pass,
        format!(
            "orthogonal mean T1 {mean:.3}, rejection {:.3}; AR(0.8) rejection {:.3}",
            s.rejection_rate_05, a.rejection_rate_05
        ),
    )
}

fn glm_presets() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["fig3-left", "fig3-right"] {
        let s = run_scenario_with_threads(&preset(name), 0).unwrap();
        let fail_rate = s.failures as f64 / s.reps as f64;
        pass &= s.ks < 0.10 && fail_rate < 0.02;
        parts.push(format!("{name} KS {:.4}, failures {}/{}", s.ks, s.failures, s.reps));
    }
    verdict(pass, parts.join(", "))
}

fn oracle_equivalences() -> Verdict {
    let mut stepwise_ok = true;
    for idx in 0..50 {
        let data = common::random_dataset(1008, idx, 50, 10, 0.5, &[0.7]);
        let step = &stepwise_path(&data, 1, Selector::Stepwise).unwrap().steps[0];
        let tss = data.y().norm_squared();
        let drops: Vec<f64> = (0..10).map(|m| tss - least_squares(&data, &[m]).unwrap().rss).collect();
        let best = (0..10).fold(0, |b, m| if drops[m] > drops[b] { m } else { b });
        stepwise_ok &= step.entering == best && (step.r_j - drops[best]).abs() <= 1e-9 * drops[best].max(1.0);
    }

    let mut lasso_gap = f64::NEG_INFINITY;
    for idx in 0..100 {
        let data = common::random_dataset(1009, idx, 20, 6, if idx % 2 == 0 { 0.0 } else { 0.6 }, &[1.0, -1.0]);
        let lam = data.x().tr_mul(data.y()).amax() * (0.05 + 0.009 * (idx * 37 % 100) as f64);
        let ours = lasso_solve(&data, lam, None).unwrap().beta;
        let cd = common::cd_lasso(data.x(), data.y(), lam, None);
        let gap = common::lasso_objective(data.x(), data.y(), &ours, lam)
            - common::lasso_objective(data.x(), data.y(), &cd, lam);
        lasso_gap = lasso_gap.max(gap);
    }

    let mut rng = replication_rng(1010, 0);
    let xl = common::normal_vec(50, &mut rng);
    let yl = DVector::from_fn(50, |i, _| f64::from((xl[i] + 0.3 * (i as f64).sin()) > 0.0));
    let bin = BinaryDataset::new(DMatrix::from_column_slice(50, 1, xl.as_slice()), yl.clone(), false).unwrap();
    let logit_ll = |b: f64| -> f64 {
        xl.iter().zip(yl.iter()).map(|(&x, &y)| y * b * x - (1.0 + (b * x).exp()).ln()).sum()
    };
    let logit_gap = (logistic_fit(&bin, &[0]).unwrap().loglik - common::grid_scan_max(logit_ll, -20.0, 20.0, 200_000)).abs();

    let xc = [0.4, -1.1, 0.7, 0.2];
    let time = [2.0, 0.5, 1.3, 3.1];
    let status = [true, true, false, true];
    let surv = SurvivalDataset::new(
        DMatrix::from_column_slice(4, 1, &xc),
        DVector::from_column_slice(&time),
        status.to_vec(),
    )
    .unwrap();
    let cox_ll = |b: f64| -> f64 {
        (0..4)
            .filter(|&i| status[i])
            .map(|i| {
                let risk: f64 = (0..4).filter(|&r| time[r] >= time[i]).map(|r| (b * xc[r]).exp()).sum();
                b * xc[i] - risk.ln()
            })
            .sum()
    };
    let cox_gap = (cox_fit(&surv, &[0]).unwrap().loglik - common::grid_scan_max(cox_ll, -20.0, 20.0, 200_000)).abs();

    let pass = stepwise_ok && lasso_gap <= 1e-8 && logit_gap < 1e-6 && cox_gap < 1e-6;
    verdict(
        pass,
        format!(
            "stepwise exhaustive match: {stepwise_ok}, lasso objective excess {lasso_gap:.1e}, \
             logistic loglik gap {logit_gap:.1e}, Cox loglik gap {cox_gap:.1e}"
        ),
    )
}

fn simulate_into(dir: &Path, threads: &str) -> Vec<Vec<u8>> {
    let status = Command::new(env!("CARGO_BIN_EXE_sigtest"))
        .args(["simulate", "fig1-left", "--seed", "17", "--out"])
        .arg(dir)
        .env("SIGTEST_THREADS", threads)
        .status()
        .expect("binary runs");
    assert!(status.success());
    ["statistics.csv", "qq.csv", "summary.json"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap())
        .collect()
}

fn cli_determinism() -> Verdict {
    let root = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<Vec<u8>>> = [("a", "1"), ("b", "1"), ("c", "4"), ("d", "4")]
        .iter()
        .map(|(sub, threads)| simulate_into(&root.path().join(sub), threads))
        .collect();
    let identical = runs.iter().all(|r| *r == runs[0]);
    verdict(identical, format!("4 runs (SIGTEST_THREADS 1, 1, 4, 4), outputs identical: {identical}"))
}

fn main() {
    type Check = fn() -> Verdict;
    let criteria: [(&str, Option<u64>, Check); 9] = [
        ("covariance statistic identity", Some(10), identity_sweep),
        ("orthogonal closed forms", Some(1), orthogonal_closed_forms),
        ("Gumbel utilities", None, gumbel_utilities),
        ("fig1-left null calibration", Some(60), fig1_left),
        ("signal presets under correlation", Some(300), signal_presets),
        ("covariance test calibration", None, covariance_calibration),
        ("logistic and Cox null calibration", Some(600), glm_presets),
        ("oracle equivalences", None, oracle_equivalences),
        ("simulate determinism", None, cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let (v, elapsed) = timed(limit.map(Duration::from_secs), check);
        failed += usize::from(!v.pass);
        println!(
            "{} {:>2} {name}: {} ({:.2}s)",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
