//! Scenario generators, the replication driver, and Q-Q / Kolmogorov-Smirnov
//! diagnostics of empirical null distributions.
//!
//! Replication `r` of a scenario with seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `r`, so every
//! replication owns an independent, platform-stable stream and results do
//! not depend on how replications are scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{glm_forward, gumbel_test_glm, BinaryDataset, Family, GlmData, SurvivalDataset};
use crate::lasso_path::lars_path;
use crate::linmodel::{standardize, Dataset};
use crate::selection::{lasso_steps, stepwise_path, Selector};
use crate::sig_tests::{covariance_test, gumbel_test, Reference, TestKind};

/// Failure share above which a summary is flagged unreliable.
pub const UNRELIABLE_FAILURE_FRAC: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    Orthogonal,
    Ar1 { rho: f64 },
    IidGaussian,
}

fn default_name() -> String {
    "inline".into()
}

fn default_sigma() -> f64 {
    1.0
}

/// A simulation experiment. `beta` lists the leading nonzero coefficients;
/// the remaining `p - beta.len()` are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub family: Family,
    pub design: Design,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub censor_frac: f64,
    pub test: TestKind,
    pub k: usize,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub selector: Selector,
}

pub const PRESET_NAMES: [&str; 7] = [
    "fig1-left",
    "fig1-right",
    "fig2-left",
    "fig2-right",
    "fig3-left",
    "fig3-right",
    "cov-null",
];

const DEFAULT_SEED: u64 = 2014;

impl Scenario {
    /// Built-in experiments: n = 100, p = 50, 500 replications.
    pub fn preset(name: &str) -> Option<Scenario> {
        let base = Scenario {
            name: name.to_string(),
            family: Family::Gaussian,
            design: Design::Orthogonal,
            n: 100,
            p: 50,
            beta: Vec::new(),
            sigma: 1.0,
            censor_frac: 0.0,
            test: TestKind::Gumbel,
            k: 1,
            reps: 500,
            seed: DEFAULT_SEED,
            selector: Selector::MaxR,
        };
        let signal = vec![6.0, 6.0, 6.0];
        let s = match name {
            "fig1-left" => base,
            "fig1-right" => Scenario { beta: signal, k: 4, ..base },
            "fig2-left" => Scenario {
                design: Design::Ar1 { rho: 0.2 },
                beta: signal,
                k: 4,
                ..base
            },
            "fig2-right" => Scenario {
                design: Design::Ar1 { rho: 0.8 },
                beta: signal,
                k: 4,
                ..base
            },
            "fig3-left" => Scenario {
                family: Family::Logistic,
                design: Design::IidGaussian,
                test: TestKind::GumbelGlm,
                ..base
            },
            "fig3-right" => Scenario {
                family: Family::Cox,
                design: Design::IidGaussian,
                censor_frac: 0.10,
                test: TestKind::GumbelGlm,
                ..base
            },
            "cov-null" => Scenario {
                test: TestKind::Covariance,
                selector: Selector::Lasso,
                ..base
            },
            _ => return None,
        };
        Some(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.n < 2 || self.p < 1 {
            return bad(format!("need n >= 2 and p >= 1 (n = {}, p = {})", self.n, self.p));
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.k == 0 {
            return bad("k is 1-based and must be at least 1".into());
        }
        if self.beta.len() > self.p || self.beta.iter().any(|b| !b.is_finite()) {
            return bad("beta must list at most p finite coefficients".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.censor_frac) {
            return bad(format!("censor_frac must lie in [0, 1), got {}", self.censor_frac));
        }
        match self.design {
            Design::Ar1 { rho } if !(rho > -1.0 && rho < 1.0) => {
                return bad(format!("rho must lie in (-1, 1), got {rho}"));
            }
            Design::Orthogonal if self.n < self.p => {
                return Err(Error::Infeasible { n: self.n, p: self.p });
            }
            _ => {}
        }
        match (self.test, self.family) {
            (TestKind::Gumbel | TestKind::Covariance, Family::Gaussian) => {}
            (TestKind::GumbelGlm, _) => {}
            (t, f) => {
                return bad(format!("test {t:?} is not defined for the {} family", f.as_str()));
            }
        }
        if self.test != TestKind::Covariance && self.p < self.k + 2 {
            return bad(format!(
                "step k = {} leaves fewer than 3 candidates out of p = {}",
                self.k, self.p
            ));
        }
        if self.test == TestKind::Covariance && self.k + 1 > self.p.min(self.n) {
            return bad("covariance test at step k needs k + 1 entries".into());
        }
        Ok(())
    }

    pub fn reference(&self) -> Reference {
        match self.test {
            TestKind::Covariance => Reference::Exp1,
            TestKind::Gumbel | TestKind::GumbelGlm => Reference::Gumbel,
        }
    }

    fn beta_vector(&self) -> DVector<f64> {
        DVector::from_fn(self.p, |i, _| self.beta.get(i).copied().unwrap_or(0.0))
    }

    fn support(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// RNG for replication `rep` of a scenario seeded with `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Draw a design. Rows are generated one at a time; the AR(1) recursion
/// `x_j = rho x_{j-1} + sqrt(1 - rho²) z_j` gives coordinate covariance
/// `rho^|i-j|`, and `rho = 0` reduces to the iid design draw for draw.
pub fn gen_design<R: Rng + ?Sized>(design: Design, n: usize, p: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let rho = match design {
        Design::Orthogonal => {
            if n < p {
                return Err(Error::Infeasible { n, p });
            }
            0.0
        }
        Design::Ar1 { rho } => rho,
        Design::IidGaussian => 0.0,
    };
    let innov = (1.0 - rho * rho).sqrt();
    let mut raw = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            let v = if j == 0 { z } else { rho * prev + innov * z };
            raw[(i, j)] = v;
            prev = v;
        }
    }
    match design {
        Design::Orthogonal => Ok(raw.qr().q()),
        _ => standardize(&raw, false),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Gaussian(DVector<f64>),
    Binary(DVector<f64>),
    Survival { time: DVector<f64>, status: Vec<bool> },
}

/// Draw a response for design `x` under the scenario's model.
///
/// Cox event times are exponential with rate `exp(x'beta)`; censoring times
/// are independent exponentials with rate `f / (1 - f)`, which censors a
/// fraction `f` of observations when `beta = 0`.
pub fn gen_response<R: Rng + ?Sized>(scenario: &Scenario, x: &DMatrix<f64>, rng: &mut R) -> Result<Response> {
    if x.shape() != (scenario.n, scenario.p) {
        return Err(Error::InvalidInput(format!(
            "design is {}x{} but the scenario needs {}x{}",
            x.nrows(),
            x.ncols(),
            scenario.n,
            scenario.p
        )));
    }
    let eta = x * scenario.beta_vector();
    let n = scenario.n;
    Ok(match scenario.family {
        Family::Gaussian => {
            let noise = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
            Response::Gaussian(eta + noise * scenario.sigma)
        }
        Family::Logistic => Response::Binary(eta.map(|e| {
            let prob = 1.0 / (1.0 + (-e).exp());
            if rng.random::<f64>() < prob {
                1.0
            } else {
                0.0
            }
        })),
        Family::Cox => {
            let unit = Exp::new(1.0).expect("rate 1 is valid");
            let events: Vec<f64> = eta.iter().map(|e| unit.sample(rng) / e.exp()).collect();
            let f = scenario.censor_frac;
            let censor: Vec<f64> = if f > 0.0 {
                let rate = f / (1.0 - f);
                (0..n).map(|_| unit.sample(rng) / rate).collect()
            } else {
                vec![f64::INFINITY; n]
            };
            let time = DVector::from_fn(n, |i, _| events[i].min(censor[i]));
            let status = (0..n).map(|i| events[i] <= censor[i]).collect();
            Response::Survival { time, status }
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
struct RepOutcome {
    statistic: f64,
    outside_null: bool,
}

fn run_replication(s: &Scenario, rep: usize) -> Result<RepOutcome> {
    let mut rng = replication_rng(s.seed, rep as u64);
    let x = gen_design(s.design, s.n, s.p, &mut rng)?;
    let response = gen_response(s, &x, &mut rng)?;
    let support = s.support();
    let outside = |active: &[usize]| support.iter().any(|m| !active.contains(m));

    match (s.test, response) {
        (TestKind::Gumbel, Response::Gaussian(y)) => {
            let data = Dataset::new(x, y, Some(s.sigma * s.sigma))?;
            let steps = match s.selector {
                Selector::Lasso => lasso_steps(&lars_path(&data, s.k)?, &data)?,
                sel => stepwise_path(&data, s.k, sel)?,
            };
            let step = steps
                .steps
                .get(s.k - 1)
                .ok_or_else(|| Error::InvalidInput(format!("selection stopped before step {}", s.k)))?;
            let out = gumbel_test(step, 0.05)?;
            Ok(RepOutcome {
                statistic: out.statistic,
                outside_null: outside(&step.active),
            })
        }
        (TestKind::Covariance, Response::Gaussian(y)) => {
            let data = Dataset::new(x, y, Some(s.sigma * s.sigma))?;
            let path = lars_path(&data, s.k + 1)?;
            let out = covariance_test(&path, &data, s.k, 0.05)?;
            Ok(RepOutcome {
                statistic: out.statistic,
                outside_null: outside(&out.active),
            })
        }
        (TestKind::GumbelGlm, response) => {
            let (gaussian, binary, survival);
            let data = match response {
                Response::Gaussian(y) => {
                    gaussian = Dataset::new(x, y, Some(s.sigma * s.sigma))?;
                    GlmData::Gaussian(&gaussian)
                }
                Response::Binary(y) => {
                    binary = BinaryDataset::new(x, y, true)?;
                    GlmData::Logistic(&binary)
                }
                Response::Survival { time, status } => {
                    survival = SurvivalDataset::new(x, time, status)?;
                    GlmData::Cox(&survival)
                }
            };
            let active = glm_forward(data, s.k - 1)?;
            let out = gumbel_test_glm(data, &active, 0.05)?;
            Ok(RepOutcome {
                statistic: out.statistic,
                outside_null: outside(&active),
            })
        }
        (t, _) => Err(Error::InvalidInput(format!("test {t:?} does not match the response family"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub scenario: String,
    pub reps: usize,
    pub reference: Reference,
    /// One statistic per successful replication, in replication order.
    pub statistics: Vec<f64>,
    pub qq: Vec<(f64, f64)>,
    pub ks: f64,
    pub rejection_rate_05: f64,
    pub failures: usize,
    /// `(replication, reason)` for each failed replication.
    pub failure_reasons: Vec<(usize, String)>,
    /// Successful replications whose tested model did not contain the true support.
    pub outside_null: usize,
    pub unreliable: bool,
}

/// JSON summary export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub scenario: String,
    pub reps: usize,
    pub ks: f64,
    pub rejection_rate_05: f64,
    pub failures: usize,
    pub unreliable: bool,
}

impl MonteCarloSummary {
    pub fn record(&self) -> SummaryRecord {
        SummaryRecord {
            scenario: self.scenario.clone(),
            reps: self.reps,
            ks: self.ks,
            rejection_rate_05: self.rejection_rate_05,
            failures: self.failures,
            unreliable: self.unreliable,
        }
    }

    pub fn mean(&self) -> f64 {
        self.statistics.iter().sum::<f64>() / self.statistics.len() as f64
    }
}

/// Run every replication of `scenario` with the default thread count.
pub fn run_scenario(scenario: &Scenario) -> Result<MonteCarloSummary> {
    run_scenario_with_threads(scenario, 0)
}

/// Run every replication on a pool of `threads` workers (0 = one per core).
/// Results are assembled in replication order, so the summary does not
/// depend on `threads`.
pub fn run_scenario_with_threads(scenario: &Scenario, threads: usize) -> Result<MonteCarloSummary> {
    scenario.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<RepOutcome>> = pool.install(|| {
        (0..scenario.reps)
            .into_par_iter()
            .map(|r| run_replication(scenario, r))
            .collect()
    });

    let reference = scenario.reference();
    let mut statistics = Vec::with_capacity(outcomes.len());
    let mut failure_reasons = Vec::new();
    let mut outside_null = 0;
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(rep) => {
                statistics.push(rep.statistic);
                outside_null += usize::from(rep.outside_null);
            }
            Err(e) => failure_reasons.push((r, e.to_string())),
        }
    }
    let failures = failure_reasons.len();
    let (qq, ks, rejection_rate_05) = if statistics.is_empty() {
        (Vec::new(), 1.0, 0.0)
    } else {
        let rejected = statistics.iter().filter(|&&t| reference.sf(t) <= 0.05).count();
        (
            qq_points(&statistics, reference)?,
            ks_distance(&statistics, reference)?,
            rejected as f64 / statistics.len() as f64,
        )
    };
    Ok(MonteCarloSummary {
        scenario: scenario.name.clone(),
        reps: scenario.reps,
        reference,
        statistics,
        qq,
        ks,
        rejection_rate_05,
        failures,
        failure_reasons,
        outside_null,
        unreliable: failures as f64 > UNRELIABLE_FAILURE_FRAC * scenario.reps as f64,
    })
}

fn sorted(statistics: &[f64]) -> Result<Vec<f64>> {
    if statistics.is_empty() {
        return Err(Error::InvalidInput("no statistics".into()));
    }
    if statistics.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite statistic".into()));
    }
    let mut v = statistics.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `(reference quantile at (i - 0.5)/N, i-th order statistic)` for i = 1..N.
pub fn qq_points(statistics: &[f64], reference: Reference) -> Result<Vec<(f64, f64)>> {
    let v = sorted(statistics)?;
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| Ok((reference.quantile((i as f64 + 0.5) / n)?, x)))
        .collect()
}

/// One-sample Kolmogorov-Smirnov distance to the reference CDF.
pub fn ks_distance(statistics: &[f64], reference: Reference) -> Result<f64> {
    let v = sorted(statistics)?;
    let n = v.len() as f64;
    Ok(v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = reference.cdf(x);
            ((i as f64 + 1.0) / n - f).abs().max((f - i as f64 / n).abs())
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sig_tests::gumbel_quantile;

    #[test]
    fn orthogonal_design_is_orthonormal() {
        let mut rng = replication_rng(1, 0);
        let x = gen_design(Design::Orthogonal, 100, 50, &mut rng).unwrap();
        let gram = x.tr_mul(&x) - DMatrix::identity(50, 50);
        assert!(gram.amax() < 1e-10);
        assert_eq!(
            gen_design(Design::Orthogonal, 10, 20, &mut rng),
            Err(Error::Infeasible { n: 10, p: 20 })
        );
    }

    #[test]
    fn ar1_zero_matches_iid() {
        let a = gen_design(Design::Ar1 { rho: 0.0 }, 20, 5, &mut replication_rng(3, 7)).unwrap();
        let b = gen_design(Design::IidGaussian, 20, 5, &mut replication_rng(3, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn qq_three_points() {
        let qq = qq_points(&[5.0, -1.0, 0.0], Reference::Gumbel).unwrap();
        assert!((qq[1].0 + 0.41170).abs() < 1e-4);
        assert_eq!(qq.iter().map(|p| p.1).collect::<Vec<_>>(), vec![-1.0, 0.0, 5.0]);
        assert!((qq[0].0 - gumbel_quantile(1.0 / 6.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn ks_single_median() {
        let med = gumbel_quantile(0.5).unwrap();
        assert!((ks_distance(&[med], Reference::Gumbel).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ks_at_plotting_positions() {
        let n = 40;
        let stats: Vec<f64> = (0..n)
            .map(|i| gumbel_quantile((i as f64 + 0.5) / n as f64).unwrap())
            .collect();
        let ks = ks_distance(&stats, Reference::Gumbel).unwrap();
        assert!((ks - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            let s = Scenario::preset(name).unwrap();
            s.validate().unwrap();
            assert_eq!((s.n, s.p, s.reps), (100, 50, 500));
        }
        assert!(Scenario::preset("fig4").is_none());
    }

    #[test]
    fn zero_reps_invalid() {
        let s = Scenario {
            reps: 0,
            ..Scenario::preset("fig1-left").unwrap()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn single_replication_summary() {
        let s = Scenario {
            reps: 1,
            ..Scenario::preset("fig1-left").unwrap()
        };
        let sum = run_scenario_with_threads(&s, 1).unwrap();
        assert_eq!(sum.qq.len(), 1);
        let f = Reference::Gumbel.cdf(sum.statistics[0]);
        assert!((sum.ks - f.max(1.0 - f)).abs() < 1e-15);
    }
}
