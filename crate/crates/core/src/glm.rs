//! Likelihood-ratio analogue of the maximum-drop test for logistic and Cox
//! proportional hazards regression.
//!
//! Each candidate `m` outside the current model `A` is scored by the
//! likelihood-ratio drop `D_m = 2 (l_{A ∪ {m}} - l_A)`; the largest drop then
//! receives the same Gumbel centring as the Gaussian `R_j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::{check_rank, least_squares, Dataset, OrthoBasis, RANK_TOL};
use crate::sig_tests::{check_alpha, gumbel_correction, GumbelRef, TestKind, TestOutcome};

const GRAD_TOL: f64 = 1e-8;
/// Gradient norm accepted when no damped step can raise the likelihood any
/// further in floating point.
const GRAD_FLOOR: f64 = 1e-6;
const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 20;
const DIVERGENCE_NORM: f64 = 1e3;
/// Linear predictors this large mean fitted probabilities are saturated.
const SATURATED_ETA: f64 = 35.0;
/// Share of failed candidate fits above which the maximum is unreliable.
const MAX_EXCLUDED_FRAC: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Logistic,
    Cox,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Logistic => "logistic",
            Family::Cox => "cox",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "logistic" => Ok(Family::Logistic),
            "cox" => Ok(Family::Cox),
            other => Err(Error::InvalidInput(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    include_intercept: bool,
}

impl BinaryDataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, include_intercept: bool) -> Result<Self> {
        if y.len() != x.nrows() || x.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "binary data: {} responses for a {}x{} design",
                y.len(),
                x.nrows(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite covariate".into()));
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput("binary response must be 0 or 1".into()));
        }
        let ones = y.sum();
        if ones == 0.0 || ones == y.len() as f64 {
            return Err(Error::InvalidInput(
                "binary response needs at least one 0 and one 1".into(),
            ));
        }
        Ok(Self {
            x,
            y,
            include_intercept,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn include_intercept(&self) -> bool {
        self.include_intercept
    }

    fn design(&self, subset: &[usize]) -> DMatrix<f64> {
        let xm = self.x.select_columns(subset);
        if self.include_intercept {
            xm.insert_column(0, 1.0)
        } else {
            xm
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    x: DMatrix<f64>,
    time: DVector<f64>,
    status: Vec<bool>,
}

impl SurvivalDataset {
    pub fn new(x: DMatrix<f64>, time: DVector<f64>, status: Vec<bool>) -> Result<Self> {
        let n = x.nrows();
        if time.len() != n || status.len() != n || x.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "survival data: {} times and {} statuses for a {}x{} design",
                time.len(),
                status.len(),
                n,
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite covariate".into()));
        }
        if time.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidInput("survival times must be positive".into()));
        }
        if !status.iter().any(|&s| s) {
            return Err(Error::NoEvents);
        }
        Ok(Self { x, time, status })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn time(&self) -> &DVector<f64> {
        &self.time
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }
}

/// Data for one of the supported likelihood families.
#[derive(Debug, Clone, Copy)]
pub enum GlmData<'a> {
    Gaussian(&'a Dataset),
    Logistic(&'a BinaryDataset),
    Cox(&'a SurvivalDataset),
}

impl GlmData<'_> {
    pub fn family(&self) -> Family {
        match self {
            GlmData::Gaussian(_) => Family::Gaussian,
            GlmData::Logistic(_) => Family::Logistic,
            GlmData::Cox(_) => Family::Cox,
        }
    }

    pub fn x(&self) -> &DMatrix<f64> {
        match self {
            GlmData::Gaussian(d) => d.x(),
            GlmData::Logistic(d) => d.x(),
            GlmData::Cox(d) => d.x(),
        }
    }

    pub fn p(&self) -> usize {
        self.x().ncols()
    }

    pub fn fit(&self, subset: &[usize]) -> Result<FitResult> {
        match self {
            GlmData::Gaussian(d) => gaussian_fit(d, subset),
            GlmData::Logistic(d) => logistic_fit(d, subset),
            GlmData::Cox(d) => cox_fit(d, subset),
        }
    }

    /// Columns always present in the model besides the covariates.
    fn has_constant(&self) -> bool {
        match self {
            GlmData::Gaussian(_) => false,
            GlmData::Logistic(d) => d.include_intercept,
            // the partial likelihood is blind to a constant shift
            GlmData::Cox(_) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub subset: Vec<usize>,
    /// Intercept first (logistic with intercept), then one entry per subset column.
    pub coefficients: DVector<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn check_subset(p: usize, subset: &[usize]) -> Result<()> {
    let mut seen = vec![false; p];
    for &m in subset {
        if m >= p {
            return Err(Error::InvalidInput(format!("column index {m} out of range for p = {p}")));
        }
        if std::mem::replace(&mut seen[m], true) {
            return Err(Error::InvalidInput(format!("column index {m} repeated")));
        }
    }
    Ok(())
}

fn require_full_rank(z: &DMatrix<f64>) -> Result<()> {
    if z.ncols() == 0 {
        return Ok(());
    }
    if z.ncols() > z.nrows() {
        return Err(Error::SingularDesign);
    }
    check_rank(&z.clone().qr().r())
}

/// Gaussian log-likelihood with the declared noise variance.
pub fn gaussian_fit(data: &Dataset, subset: &[usize]) -> Result<FitResult> {
    let sigma2 = data.known_sigma2()?;
    let fit = least_squares(data, subset)?;
    let n = data.n() as f64;
    let loglik = -0.5 * n * (2.0 * std::f64::consts::PI * sigma2).ln() - fit.rss / (2.0 * sigma2);
    Ok(FitResult {
        subset: fit.subset,
        coefficients: fit.coefficients,
        loglik,
        converged: true,
        iterations: 0,
    })
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn logistic_loglik(z: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = z * beta;
    eta.iter().zip(y.iter()).map(|(&e, &t)| t * e - softplus(e)).sum()
}

/// Bernoulli maximum likelihood by damped Newton (IRLS) iterations.
pub fn logistic_fit(data: &BinaryDataset, subset: &[usize]) -> Result<FitResult> {
    check_subset(data.x.ncols(), subset)?;
    let z = data.design(subset);
    require_full_rank(&z)?;
    let y = &data.y;
    let q = z.ncols();
    let mut beta = DVector::zeros(q);
    let mut loglik = logistic_loglik(&z, y, &beta);
    if q == 0 {
        return Ok(FitResult {
            subset: subset.to_vec(),
            coefficients: beta,
            loglik,
            converged: true,
            iterations: 0,
        });
    }

    for iter in 0..MAX_ITER {
        let eta = &z * &beta;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let grad = z.tr_mul(&(y - &mu));
        if grad.norm() < GRAD_TOL {
            return Ok(FitResult {
                subset: subset.to_vec(),
                coefficients: beta,
                loglik,
                converged: true,
                iterations: iter,
            });
        }
        let w = mu.map(|m| m * (1.0 - m));
        let mut zw = z.clone();
        for (mut row, &wi) in zw.row_iter_mut().zip(w.iter()) {
            row *= wi;
        }
        let hess = z.tr_mul(&zw);
        let step = hess.cholesky().ok_or(Error::Separation)?.solve(&grad);

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &beta + &step * t;
            let ll = logistic_loglik(&z, y, &trial);
            if ll >= loglik {
                beta = trial;
                loglik = ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            if grad.norm() < GRAD_FLOOR {
                return Ok(FitResult {
                    subset: subset.to_vec(),
                    coefficients: beta,
                    loglik,
                    converged: true,
                    iterations: iter + 1,
                });
            }
            return Err(Error::Convergence(iter + 1));
        }
        if beta.norm() > DIVERGENCE_NORM || (&z * &beta).amax() > SATURATED_ETA {
            return Err(Error::Separation);
        }
    }
    Err(Error::Convergence(MAX_ITER))
}

/// Breslow partial log-likelihood, score and information at `beta`.
struct CoxEval {
    loglik: f64,
    grad: DVector<f64>,
    info: DMatrix<f64>,
}

fn cox_order(time: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[b].total_cmp(&time[a]).then(a.cmp(&b)));
    order
}

fn cox_eval(xm: &DMatrix<f64>, data: &SurvivalDataset, order: &[usize], beta: &DVector<f64>, derivs: bool) -> CoxEval {
    let q = xm.ncols();
    let eta = xm * beta;
    let shift = eta.max();
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(q);
    let mut s2 = DMatrix::zeros(q, q);
    let mut loglik = 0.0;
    let mut grad = DVector::zeros(q);
    let mut info = DMatrix::zeros(q, q);

    let mut pos = 0;
    while pos < order.len() {
        let t = data.time[order[pos]];
        let mut end = pos;
        while end < order.len() && data.time[order[end]] == t {
            let i = order[end];
            let w = (eta[i] - shift).exp();
            s0 += w;
            if derivs {
                let xi = xm.row(i).transpose();
                s1.axpy(w, &xi, 1.0);
                s2.ger(w, &xi, &xi, 1.0);
            }
            end += 1;
        }
        for &i in &order[pos..end] {
            if !data.status[i] {
                continue;
            }
            loglik += eta[i] - shift - s0.ln();
            if derivs {
                let mean = &s1 / s0;
                grad += xm.row(i).transpose() - &mean;
                info += &s2 / s0 - &mean * mean.transpose();
            }
        }
        pos = end;
    }
    CoxEval { loglik, grad, info }
}

/// Cox proportional hazards fit by damped Newton on the Breslow partial
/// likelihood.
pub fn cox_fit(data: &SurvivalDataset, subset: &[usize]) -> Result<FitResult> {
    check_subset(data.x.ncols(), subset)?;
    let xm = data.x.select_columns(subset);
    require_full_rank(&xm.clone().insert_column(0, 1.0))?;
    let order = cox_order(&data.time);
    let q = xm.ncols();
    let mut beta = DVector::zeros(q);
    let mut eval = cox_eval(&xm, data, &order, &beta, q > 0);
    if q == 0 {
        return Ok(FitResult {
            subset: subset.to_vec(),
            coefficients: beta,
            loglik: eval.loglik,
            converged: true,
            iterations: 0,
        });
    }

    for iter in 0..MAX_ITER {
        if eval.grad.norm() < GRAD_TOL {
            return Ok(FitResult {
                subset: subset.to_vec(),
                coefficients: beta,
                loglik: eval.loglik,
                converged: true,
                iterations: iter,
            });
        }
        let step = eval
            .info
            .clone()
            .cholesky()
            .ok_or(Error::Separation)?
            .solve(&eval.grad);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &beta + &step * t;
            let ll = cox_eval(&xm, data, &order, &trial, false).loglik;
            if ll >= eval.loglik {
                accepted = Some(trial);
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some(b) => {
                beta = b;
                eval = cox_eval(&xm, data, &order, &beta, true);
            }
            None if eval.grad.norm() < GRAD_FLOOR => {
                return Ok(FitResult {
                    subset: subset.to_vec(),
                    coefficients: beta,
                    loglik: eval.loglik,
                    converged: true,
                    iterations: iter + 1,
                });
            }
            None => return Err(Error::Convergence(iter + 1)),
        }
        if beta.norm() > DIVERGENCE_NORM {
            return Err(Error::Separation);
        }
    }
    Err(Error::Convergence(MAX_ITER))
}

/// True when column `m` adds nothing to the span of the base model.
fn in_base_span(data: GlmData<'_>, base: &[usize], m: usize) -> bool {
    let x = data.x();
    let mut basis = OrthoBasis::new();
    if data.has_constant() {
        basis.push(&DVector::from_element(x.nrows(), 1.0));
    }
    for &a in base {
        basis.push(&x.column(a).into_owned());
    }
    let col = x.column(m).into_owned();
    let norm = col.norm();
    norm == 0.0 || basis.residual(&col).norm() <= RANK_TOL * norm
}

fn drop_from_fits(base: &FitResult, grown: &FitResult) -> f64 {
    (2.0 * (grown.loglik - base.loglik)).max(0.0)
}

/// Likelihood-ratio drop `2 (l_{A ∪ {m}} - l_A)`, clamped at zero.
pub fn lrt_drop(data: GlmData<'_>, active: &[usize], m: usize) -> Result<f64> {
    check_subset(data.p(), active)?;
    if m >= data.p() || active.contains(&m) {
        return Err(Error::InvalidInput(format!("candidate {m} is not outside the model")));
    }
    if in_base_span(data, active, m) {
        return Ok(0.0);
    }
    let base = data.fit(active)?;
    let mut grown = active.to_vec();
    grown.push(m);
    Ok(drop_from_fits(&base, &data.fit(&grown)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmDrops {
    /// `(m, D_m)` for every candidate whose fit succeeded.
    pub drops: Vec<(usize, f64)>,
    /// Candidates outside the model, including excluded ones.
    pub remaining: usize,
    pub excluded: Vec<usize>,
    pub warnings: Vec<String>,
}

impl GlmDrops {
    /// Largest drop and its column, ties to the lowest index.
    pub fn max(&self) -> Option<(usize, f64)> {
        self.drops
            .iter()
            .copied()
            .fold(None, |best, (m, d)| match best {
                Some((_, bd)) if d <= bd => best,
                _ => Some((m, d)),
            })
    }
}

/// `D_m` for every `m` outside `active`. Failed candidate fits are excluded
/// with a warning; more than 10% exclusions is an error.
pub fn glm_drops(data: GlmData<'_>, active: &[usize]) -> Result<GlmDrops> {
    check_subset(data.p(), active)?;
    let base = data.fit(active)?;
    let candidates: Vec<usize> = (0..data.p()).filter(|m| !active.contains(m)).collect();
    let mut out = GlmDrops {
        drops: Vec::with_capacity(candidates.len()),
        remaining: candidates.len(),
        excluded: Vec::new(),
        warnings: Vec::new(),
    };
    let mut grown = active.to_vec();
    grown.push(0);
    for &m in &candidates {
        if in_base_span(data, active, m) {
            out.drops.push((m, 0.0));
            continue;
        }
        *grown.last_mut().expect("nonempty") = m;
        match data.fit(&grown) {
            Ok(fit) => out.drops.push((m, drop_from_fits(&base, &fit))),
            Err(e) => {
                out.excluded.push(m);
                out.warnings.push(format!("candidate {} excluded: {e}", m + 1));
            }
        }
    }
    let total = candidates.len();
    if out.excluded.len() as f64 > MAX_EXCLUDED_FRAC * total as f64 {
        return Err(Error::UnreliableMax {
            excluded: out.excluded.len(),
            total,
        });
    }
    Ok(out)
}

/// Gumbel-corrected test on the largest likelihood-ratio drop over the
/// candidates outside `active`.
pub fn gumbel_test_glm(data: GlmData<'_>, active: &[usize], alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let remaining = data.p().saturating_sub(active.len());
    let correction = gumbel_correction(remaining)?;
    let drops = glm_drops(data, active)?;
    let (j, d_max) = drops.max().ok_or(Error::UnreliableMax {
        excluded: drops.excluded.len(),
        total: remaining,
    })?;
    let statistic = d_max - correction;
    let p_value = GumbelRef::new().sf(statistic);
    Ok(TestOutcome {
        kind: TestKind::GumbelGlm,
        k: active.len() + 1,
        active: active.to_vec(),
        j,
        statistic,
        p_value,
        alpha,
        reject: p_value <= alpha,
        correction: Some(correction),
        conservative: false,
        warnings: drops.warnings,
    })
}

/// Greedy forward selection by the largest likelihood-ratio drop; returns
/// the first `steps` selected columns.
pub fn glm_forward(data: GlmData<'_>, steps: usize) -> Result<Vec<usize>> {
    let mut active = Vec::with_capacity(steps);
    for _ in 0..steps {
        let drops = glm_drops(data, &active)?;
        let (j, _) = drops.max().ok_or(Error::UnreliableMax {
            excluded: drops.excluded.len(),
            total: drops.remaining,
        })?;
        active.push(j);
    }
    Ok(active)
}
