//! Selector-agnostic step records `(A, j, R_j)` for forward stepwise
//! regression and for the order in which variables enter the lasso path.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso_path::{data_digest, LassoPath};
use crate::linmodel::{Dataset, OrthoBasis, RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Stepwise,
    Lasso,
    #[default]
    MaxR,
}

impl Selector {
    pub fn as_str(self) -> &'static str {
        match self {
            Selector::Stepwise => "stepwise",
            Selector::Lasso => "lasso",
            Selector::MaxR => "max_r",
        }
    }
}

impl std::str::FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stepwise" => Ok(Selector::Stepwise),
            "lasso" => Ok(Selector::Lasso),
            "max_r" | "max-r" => Ok(Selector::MaxR),
            other => Err(Error::InvalidInput(format!("unknown selector '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStep {
    /// 1-based step index.
    pub k: usize,
    /// Model before this step.
    pub active: Vec<usize>,
    pub entering: usize,
    pub r_j: f64,
    /// `(m, R_m)` for every `m` outside `active`, ascending in `m`.
    pub r_all: Vec<(usize, f64)>,
    pub selector: Selector,
}

impl SelectionStep {
    /// `|A^c|`, the number of candidates at this step.
    pub fn remaining(&self) -> usize {
        self.r_all.len()
    }

    pub fn max_r(&self) -> f64 {
        self.r_all.iter().map(|&(_, r)| r).fold(0.0, f64::max)
    }

    /// True when the entering variable did not attain the maximal `R_m`.
    pub fn is_conservative(&self) -> bool {
        let max = self.max_r();
        self.r_j < max - 1e-9 * max.max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionPath {
    pub steps: Vec<SelectionStep>,
    pub notes: Vec<String>,
}

/// `R_m` for every column outside the span already held in `basis`.
fn drops(data: &Dataset, basis: &OrthoBasis, active: &[usize], sigma2: f64) -> (Vec<(usize, f64)>, DVector<f64>) {
    let resid = basis.residual(data.y());
    let out = (0..data.p())
        .filter(|m| !active.contains(m))
        .map(|m| {
            let col = data.x().column(m).into_owned();
            let z = basis.residual(&col);
            let nz2 = z.norm_squared();
            let floor = RANK_TOL * col.norm();
            let r = if nz2 <= floor * floor {
                0.0
            } else {
                z.dot(&resid).powi(2) / nz2 / sigma2
            };
            (m, r)
        })
        .collect();
    (out, resid)
}

/// Forward stepwise regression: each step adds the candidate with the largest
/// RSS drop, ties to the lowest index.
pub fn stepwise_path(data: &Dataset, max_steps: usize, selector: Selector) -> Result<SelectionPath> {
    if selector == Selector::Lasso {
        return Err(Error::InvalidInput(
            "stepwise_path takes the stepwise or max_r selector".into(),
        ));
    }
    let sigma2 = data.known_sigma2()?;
    let limit = max_steps.min(data.n().min(data.p()));
    let mut out = SelectionPath::default();
    if limit < max_steps {
        out.notes.push(format!("max_steps clamped to {limit}"));
    }
    let mut basis = OrthoBasis::new();
    let mut active = Vec::new();
    let scale = data.y().norm_squared() / sigma2;

    for k in 1..=limit {
        let (r_all, _) = drops(data, &basis, &active, sigma2);
        let mut best: Option<(usize, f64)> = None;
        for &(m, r) in &r_all {
            if best.is_none_or(|(_, b)| r > b) {
                best = Some((m, r));
            }
        }
        let Some((j, r_j)) = best else { break };
        if r_j <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            out.notes.push(format!(
                "stopped before step {k}: residual is orthogonal to every remaining column"
            ));
            break;
        }
        out.steps.push(SelectionStep {
            k,
            active: active.clone(),
            entering: j,
            r_j,
            r_all,
            selector,
        });
        basis.push(&data.x().column(j).into_owned());
        active.push(j);
    }
    Ok(out)
}

/// One step per entry event of a lasso path, with `R_j` for the variable the
/// lasso chose.
pub fn lasso_steps(path: &LassoPath, data: &Dataset) -> Result<SelectionPath> {
    if path.data_digest != data_digest(data) {
        return Err(Error::StalePath);
    }
    let sigma2 = data.known_sigma2()?;
    let mut out = SelectionPath::default();
    if path.has_deletions() {
        out.notes
            .push("path contains deletion events; steps follow entry events only".into());
    }
    for (idx, knot) in path.entries().enumerate() {
        let mut basis = OrthoBasis::new();
        for &a in &knot.active_before {
            basis.push(&data.x().column(a).into_owned());
        }
        let (r_all, _) = drops(data, &basis, &knot.active_before, sigma2);
        let r_j = r_all
            .iter()
            .find(|&&(m, _)| m == knot.variable)
            .map(|&(_, r)| r)
            .ok_or(Error::StalePath)?;
        out.steps.push(SelectionStep {
            k: idx + 1,
            active: knot.active_before.clone(),
            entering: knot.variable,
            r_j,
            r_all,
            selector: Selector::Lasso,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lasso_path::lars_path;
    use nalgebra::DMatrix;

    fn identity_example() -> Dataset {
        Dataset::new(
            DMatrix::identity(3, 3),
            DVector::from_vec(vec![3.0, -1.0, 2.0]),
            Some(1.0),
        )
        .unwrap()
    }

    #[test]
    fn stepwise_orthonormal_ranking() {
        let path = stepwise_path(&identity_example(), 3, Selector::Stepwise).unwrap();
        let got: Vec<(usize, f64)> = path.steps.iter().map(|s| (s.entering, s.r_j)).collect();
        let want = [(0, 9.0), (2, 4.0), (1, 1.0)];
        assert_eq!(got.len(), 3);
        for ((j, r), (wj, wr)) in got.iter().zip(want) {
            assert_eq!(*j, wj);
            assert!((r - wr).abs() < 1e-12);
        }
        assert_eq!(path.steps[2].active, vec![0, 2]);
    }

    #[test]
    fn stepwise_zero_response_is_empty() {
        let data = Dataset::new(DMatrix::identity(3, 3), DVector::zeros(3), Some(1.0)).unwrap();
        let path = stepwise_path(&data, 3, Selector::MaxR).unwrap();
        assert!(path.steps.is_empty());
        assert!(!path.notes.is_empty());
    }

    #[test]
    fn lasso_steps_match_stepwise_on_orthonormal_design() {
        let data = identity_example();
        let path = lars_path(&data, 3).unwrap();
        let lasso = lasso_steps(&path, &data).unwrap();
        let step = stepwise_path(&data, 3, Selector::Stepwise).unwrap();
        for (a, b) in lasso.steps.iter().zip(&step.steps) {
            assert_eq!((a.k, &a.active, a.entering), (b.k, &b.active, b.entering));
            assert!((a.r_j - b.r_j).abs() < 1e-12);
            assert!(!a.is_conservative());
        }
    }

    #[test]
    fn stale_path_detected() {
        let data = identity_example();
        let path = lars_path(&data, 2).unwrap();
        let other = Dataset::new(
            DMatrix::identity(3, 3),
            DVector::from_vec(vec![3.0, -1.0, 2.5]),
            Some(1.0),
        )
        .unwrap();
        assert_eq!(lasso_steps(&path, &other), Err(Error::StalePath));
    }

    #[test]
    fn empty_path_gives_no_steps() {
        let data = Dataset::new(DMatrix::identity(3, 3), DVector::zeros(3), Some(1.0)).unwrap();
        let path = lars_path(&data, 3).unwrap();
        assert!(lasso_steps(&path, &data).unwrap().steps.is_empty());
    }
}
