//! Lasso solution paths by least angle regression with the lasso
//! modification, exact lasso solutions at arbitrary `lambda`, and a KKT
//! optimality check.
//!
//! The objective is `0.5 * ‖y - X b‖² + lambda * ‖b‖₁` with no intercept.
//! Knots are the values of `lambda` at which the active set changes.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linmodel::Dataset;

/// Absolute tolerance for comparisons between `lambda` values.
pub const LAMBDA_TOL: f64 = 1e-10;

const KKT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnotAction {
    Enter,
    Leave,
}

impl KnotAction {
    pub fn as_str(self) -> &'static str {
        match self {
            KnotAction::Enter => "enter",
            KnotAction::Leave => "leave",
        }
    }
}

/// One event on the path.
#[derive(Debug, Clone, PartialEq)]
pub struct Knot {
    /// Event counter, 1-based; entries and deletions both count.
    pub k: usize,
    pub lambda: f64,
    /// Variable entering (or leaving) at this knot.
    pub variable: usize,
    pub action: KnotAction,
    pub active_before: Vec<usize>,
    pub active_after: Vec<usize>,
    /// Signs of the active coefficients just after the event, aligned with
    /// `active_after`.
    pub signs_after: Vec<f64>,
    /// Lasso solution at `lambda` (full length p).
    pub beta: DVector<f64>,
}

impl Knot {
    pub fn is_entry(&self) -> bool {
        self.action == KnotAction::Enter
    }

    /// Sign of `m` just after the event, if it is active.
    pub fn sign_of(&self, m: usize) -> Option<f64> {
        self.active_after
            .iter()
            .position(|&a| a == m)
            .map(|i| self.signs_after[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    pub knots: Vec<Knot>,
    pub data_digest: u64,
    pub warnings: Vec<String>,
    /// Solution at `lambda = 0` when the path was traced all the way down.
    terminal: Option<DVector<f64>>,
    p: usize,
}

impl LassoPath {
    pub fn entries(&self) -> impl Iterator<Item = &Knot> {
        self.knots.iter().filter(|k| k.is_entry())
    }

    /// Position in `knots` of the `k`th entry event (1-based `k`).
    pub fn entry_position(&self, k: usize) -> Option<usize> {
        if k == 0 {
            return None;
        }
        self.knots
            .iter()
            .enumerate()
            .filter(|(_, kn)| kn.is_entry())
            .nth(k - 1)
            .map(|(i, _)| i)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.knots.iter().map(|k| k.lambda).collect()
    }

    pub fn has_deletions(&self) -> bool {
        self.knots.iter().any(|k| !k.is_entry())
    }

    /// Solution on the traced path at `lambda`, interpolating linearly between
    /// breakpoints. `None` when `lambda` lies below the traced range.
    pub fn beta_at(&self, lambda: f64) -> Option<DVector<f64>> {
        let Some(first) = self.knots.first() else {
            return Some(DVector::zeros(self.p));
        };
        if lambda >= first.lambda {
            return Some(DVector::zeros(self.p));
        }
        let mut points: Vec<(f64, &DVector<f64>)> =
            self.knots.iter().map(|k| (k.lambda, &k.beta)).collect();
        if let Some(t) = &self.terminal {
            points.push((0.0, t));
        }
        for w in points.windows(2) {
            let (hi, bh) = w[0];
            let (lo, bl) = w[1];
            if lambda <= hi && lambda >= lo {
                if hi - lo <= 0.0 {
                    return Some(bl.clone());
                }
                let t = (hi - lambda) / (hi - lo);
                return Some(bh * (1.0 - t) + bl * t);
            }
        }
        None
    }
}

/// SHA-256 of the IEEE bit patterns of `X` (column-major) and `y`, truncated
/// to 64 bits.
pub fn data_digest(data: &Dataset) -> u64 {
    let mut h = Sha256::new();
    h.update((data.n() as u64).to_le_bytes());
    h.update((data.p() as u64).to_le_bytes());
    for v in data.x().iter().chain(data.y().iter()) {
        h.update(v.to_bits().to_le_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}

fn check_duplicates(x: &DMatrix<f64>) -> Result<()> {
    let p = x.ncols();
    for a in 0..p {
        let ca = x.column(a);
        let scale = ca.amax();
        for b in (a + 1)..p {
            let cb = x.column(b);
            let same = (ca - cb).amax() <= 1e-12 * scale;
            let negated = (ca + cb).amax() <= 1e-12 * scale;
            if same || negated {
                return Err(Error::DuplicateColumn(a, b));
            }
        }
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Trace the path. Stops after `max_entries` entry events, or runs down to
/// `lambda = 0` when `max_entries` is `None`.
fn trace(data: &Dataset, max_entries: Option<usize>) -> Result<LassoPath> {
    let x = data.x();
    let y = data.y();
    let (n, p) = (data.n(), data.p());
    check_duplicates(x)?;

    let digest = data_digest(data);
    let mut knots: Vec<Knot> = Vec::new();
    let mut warnings = Vec::new();
    let mut terminal = None;

    let mut beta = DVector::<f64>::zeros(p);
    let mut corr = x.tr_mul(y);

    let mut best: Option<usize> = None;
    for m in 0..p {
        let v = corr[m].abs();
        match best {
            Some(b) if v > corr[b].abs() + LAMBDA_TOL => best = Some(m),
            Some(b) if (v - corr[b].abs()).abs() <= LAMBDA_TOL => {
                warnings.push(format!(
                    "tie at the first knot between columns {} and {}; kept {}",
                    b + 1,
                    m + 1,
                    b + 1
                ));
            }
            None => best = Some(m),
            _ => {}
        }
    }
    let first = best.expect("p >= 1");
    let mut lambda = corr[first].abs();
    if lambda <= LAMBDA_TOL {
        // y orthogonal to every column: empty path, ties are meaningless
        return Ok(LassoPath {
            knots,
            data_digest: digest,
            warnings: Vec::new(),
            terminal: Some(beta),
            p,
        });
    }

    let mut active = vec![first];
    let mut signs = vec![sign(corr[first])];
    knots.push(Knot {
        k: 1,
        lambda,
        variable: first,
        action: KnotAction::Enter,
        active_before: Vec::new(),
        active_after: active.clone(),
        signs_after: signs.clone(),
        beta: beta.clone(),
    });
    let mut entries = 1usize;
    let mut just_dropped: Option<usize> = None;
    let max_events = 8 * (p + n) + 16;

    loop {
        if max_entries.is_some_and(|m| entries >= m) {
            break;
        }
        if knots.len() >= max_events {
            warnings.push("event limit reached; path truncated".into());
            break;
        }

        let xa = x.select_columns(&active);
        let gram = xa.tr_mul(&xa);
        let s = DVector::from_vec(signs.clone());
        let Some(chol) = gram.cholesky() else {
            warnings.push(format!(
                "active Gram matrix singular at lambda = {lambda}; solution not unique below this knot"
            ));
            break;
        };
        let d = chol.solve(&s);
        let u = &xa * &d;
        let a = x.tr_mul(&u);

        let saturated = active.len() >= n.min(p);
        let mut entry: Option<(f64, usize)> = None;
        if !saturated {
            for m in 0..p {
                if active.contains(&m) || just_dropped == Some(m) {
                    continue;
                }
                let mut g = f64::INFINITY;
                for (num, den) in [(lambda - corr[m], 1.0 - a[m]), (lambda + corr[m], 1.0 + a[m])] {
                    if den > 1e-14 {
                        // Ties with the last entry give a zero step; allow it.
                        let cand = num / den;
                        if cand >= -LAMBDA_TOL && cand.max(0.0) < g {
                            g = cand.max(0.0);
                        }
                    }
                }
                if !g.is_finite() {
                    continue;
                }
                match entry {
                    Some((bg, bm)) if (g - bg).abs() <= LAMBDA_TOL => {
                        warnings.push(format!(
                            "tie at lambda = {:.6e} between columns {} and {}; kept {}",
                            lambda - bg,
                            bm + 1,
                            m + 1,
                            bm + 1
                        ));
                    }
                    Some((bg, _)) if g < bg => entry = Some((g, m)),
                    None => entry = Some((g, m)),
                    _ => {}
                }
            }
        }

        let mut deletion: Option<(f64, usize)> = None;
        for (i, &m) in active.iter().enumerate() {
            if d[i] == 0.0 {
                continue;
            }
            let g = -beta[m] / d[i];
            if g > LAMBDA_TOL && deletion.is_none_or(|(bg, _)| g < bg) {
                deletion = Some((g, i));
            }
        }

        let gamma_entry = entry.map_or(f64::INFINITY, |e| e.0);
        let gamma_delete = deletion.map_or(f64::INFINITY, |e| e.0);
        let gamma = gamma_entry.min(gamma_delete);

        if gamma >= lambda - LAMBDA_TOL {
            for (i, &m) in active.iter().enumerate() {
                beta[m] += lambda * d[i];
            }
            terminal = Some(beta);
            break;
        }

        for (i, &m) in active.iter().enumerate() {
            beta[m] += gamma * d[i];
        }
        lambda -= gamma;
        corr = x.tr_mul(&(y - x * &beta));

        let before = active.clone();
        if gamma_delete <= gamma_entry {
            let (_, i) = deletion.expect("finite deletion step");
            let m = active.remove(i);
            signs.remove(i);
            beta[m] = 0.0;
            just_dropped = Some(m);
            knots.push(Knot {
                k: knots.len() + 1,
                lambda,
                variable: m,
                action: KnotAction::Leave,
                active_before: before,
                active_after: active.clone(),
                signs_after: signs.clone(),
                beta: beta.clone(),
            });
        } else {
            let (_, m) = entry.expect("finite entry step");
            active.push(m);
            signs.push(sign(corr[m]));
            just_dropped = None;
            entries += 1;
            knots.push(Knot {
                k: knots.len() + 1,
                lambda,
                variable: m,
                action: KnotAction::Enter,
                active_before: before,
                active_after: active.clone(),
                signs_after: signs.clone(),
                beta: beta.clone(),
            });
        }
    }

    Ok(LassoPath {
        knots,
        data_digest: digest,
        warnings,
        terminal,
        p,
    })
}

/// LARS/lasso path with at most `max_steps` entry events.
pub fn lars_path(data: &Dataset, max_steps: usize) -> Result<LassoPath> {
    if max_steps == 0 {
        return Err(Error::InvalidInput("max_steps must be positive".into()));
    }
    trace(data, Some(max_steps))
}

/// Path traced down to `lambda = 0` (or until the solution stops being unique).
pub fn full_path(data: &Dataset) -> Result<LassoPath> {
    trace(data, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    /// Coefficients aligned with the requested subset.
    pub beta: DVector<f64>,
    pub warnings: Vec<String>,
}

/// Exact lasso minimizer over the columns in `subset` (`None` = all columns).
pub fn lasso_solve(data: &Dataset, lambda: f64, subset: Option<&[usize]>) -> Result<LassoSolution> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let restricted;
    let target = match subset {
        Some(s) => {
            data.check_indices(s)?;
            if s.is_empty() {
                return Ok(LassoSolution {
                    beta: DVector::zeros(0),
                    warnings: Vec::new(),
                });
            }
            restricted = data.restrict(s);
            &restricted
        }
        None => data,
    };
    let path = full_path(target)?;
    let mut warnings = path.warnings.clone();
    let beta = match path.beta_at(lambda) {
        Some(b) => b,
        None => {
            warnings.push(format!(
                "lambda = {lambda} lies below the unique part of the path; returning the last traced solution"
            ));
            path.knots.last().map(|k| k.beta.clone()).unwrap_or_else(|| DVector::zeros(target.p()))
        }
    };
    Ok(LassoSolution { beta, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub pass: bool,
    /// Per coordinate: stationarity error for nonzero coefficients, or
    /// `|gradient| - lambda` for zero coefficients (negative is slack).
    pub slack: Vec<f64>,
    /// Subset positions that violate the conditions.
    pub violations: Vec<usize>,
}

/// KKT conditions of the lasso restricted to `subset` (`None` = all columns).
pub fn kkt_check(data: &Dataset, beta: &DVector<f64>, lambda: f64, subset: Option<&[usize]>) -> Result<KktReport> {
    let cols: Vec<usize> = match subset {
        Some(s) => {
            data.check_indices(s)?;
            s.to_vec()
        }
        None => (0..data.p()).collect(),
    };
    if beta.len() != cols.len() {
        return Err(Error::InvalidInput(format!(
            "beta has length {} but the subset has {} columns",
            beta.len(),
            cols.len()
        )));
    }
    let xs = data.x().select_columns(&cols);
    let resid = data.y() - &xs * beta;
    let grad = xs.tr_mul(&resid);
    let mut slack = Vec::with_capacity(cols.len());
    let mut violations = Vec::new();
    for i in 0..cols.len() {
        let (value, ok) = if beta[i] != 0.0 {
            let e = (grad[i] - lambda * sign(beta[i])).abs();
            (e, e <= KKT_TOL)
        } else {
            let e = grad[i].abs() - lambda;
            (e, e <= KKT_TOL)
        };
        slack.push(value);
        if !ok {
            violations.push(i);
        }
    }
    Ok(KktReport {
        pass: violations.is_empty(),
        slack,
        violations,
    })
}
