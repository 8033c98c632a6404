//! Dense linear-model primitives: standardization, subset least squares,
//! residual sums of squares and the scaled RSS drops `R_m`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance on the triangular-factor diagonal below which a subset
/// is declared rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Design matrix, response and (optionally) the known noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    sigma2: Option<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, sigma2: Option<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 || p < 1 {
            return Err(Error::InvalidInput(format!(
                "need n >= 2 and p >= 1, got n = {n}, p = {p}"
            )));
        }
        if y.len() != n {
            return Err(Error::InvalidInput(format!(
                "response has length {} but design has {n} rows",
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in data".into()));
        }
        if let Some(s) = sigma2 {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "sigma2 must be positive, got {s}"
                )));
            }
        }
        Ok(Self { x, y, sigma2 })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn sigma2(&self) -> Option<f64> {
        self.sigma2
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn with_sigma2(mut self, sigma2: Option<f64>) -> Result<Self> {
        if let Some(s) = sigma2 {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "sigma2 must be positive, got {s}"
                )));
            }
        }
        self.sigma2 = sigma2;
        Ok(self)
    }

    /// `sigma2`, or `MissingVariance` when it was not declared.
    pub fn known_sigma2(&self) -> Result<f64> {
        self.sigma2.ok_or(Error::MissingVariance)
    }

    /// True when every column has unit squared norm within 1e-8.
    pub fn is_standardized(&self) -> bool {
        self.x
            .column_iter()
            .all(|c| (c.norm_squared() - 1.0).abs() <= 1e-8)
    }

    /// Copy of the dataset keeping only the listed columns, in that order.
    pub fn restrict(&self, subset: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_columns(subset),
            y: self.y.clone(),
            sigma2: self.sigma2,
        }
    }

    pub(crate) fn check_indices(&self, indices: &[usize]) -> Result<()> {
        let p = self.p();
        if let Some(&bad) = indices.iter().find(|&&m| m >= p) {
            return Err(Error::InvalidInput(format!(
                "column index {bad} out of range for p = {p}"
            )));
        }
        let mut seen = vec![false; p];
        for &m in indices {
            if std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidInput(format!("column index {m} repeated")));
            }
        }
        Ok(())
    }
}

/// Scale every column to unit squared Euclidean norm, optionally centering first.
pub fn standardize(x: &DMatrix<f64>, center: bool) -> Result<DMatrix<f64>> {
    let mut out = x.clone();
    for (idx, mut col) in out.column_iter_mut().enumerate() {
        if center {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let norm = col.norm();
        let scale = x.column(idx).amax().max(f64::MIN_POSITIVE);
        if !(norm > 1e-12 * scale) || !norm.is_finite() {
            return Err(Error::DegenerateColumn(idx));
        }
        col /= norm;
    }
    Ok(out)
}

/// Least-squares fit restricted to a column subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetFit {
    pub subset: Vec<usize>,
    pub coefficients: DVector<f64>,
    pub rss: f64,
    pub fitted: DVector<f64>,
}

/// Least squares of `y` on the columns in `subset` via Householder QR.
pub fn least_squares(data: &Dataset, subset: &[usize]) -> Result<SubsetFit> {
    data.check_indices(subset)?;
    let n = data.n();
    if subset.is_empty() {
        return Ok(SubsetFit {
            subset: Vec::new(),
            coefficients: DVector::zeros(0),
            rss: data.y.norm_squared(),
            fitted: DVector::zeros(n),
        });
    }
    if subset.len() > n {
        return Err(Error::SingularDesign);
    }
    let xm = data.x.select_columns(subset);
    let coefficients = qr_solve(&xm, &data.y)?;
    let fitted = &xm * &coefficients;
    let rss = (&data.y - &fitted).norm_squared();
    Ok(SubsetFit {
        subset: subset.to_vec(),
        coefficients,
        rss,
        fitted,
    })
}

/// Solve `min ‖b - A x‖` for a tall, full-column-rank `A`.
pub(crate) fn qr_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = a.clone().qr();
    let r = qr.r();
    check_rank(&r)?;
    let qtb = qr.q().tr_mul(b);
    r.solve_upper_triangular(&qtb).ok_or(Error::SingularDesign)
}

/// Rank check on the diagonal of a triangular factor.
pub(crate) fn check_rank(r: &DMatrix<f64>) -> Result<()> {
    let diag = r.diagonal().map(f64::abs);
    let largest = diag.max();
    if !(largest > 0.0) || diag.iter().any(|&d| d < RANK_TOL * largest) {
        return Err(Error::SingularDesign);
    }
    Ok(())
}

/// Scaled RSS drop `(RSS_A - RSS_{A ∪ {m}}) / sigma2`, clamped at zero.
pub fn r_stat(data: &Dataset, active: &[usize], m: usize) -> Result<f64> {
    let sigma2 = data.known_sigma2()?;
    if active.contains(&m) {
        return Err(Error::InvalidInput(format!(
            "candidate {m} already in the active set"
        )));
    }
    let base = least_squares(data, active)?;
    let mut grown = active.to_vec();
    grown.push(m);
    let bigger = least_squares(data, &grown)?;
    Ok(((base.rss - bigger.rss) / sigma2).max(0.0))
}

/// Plug-in noise variance `RSS_full / (n - p)`.
pub fn estimate_sigma2(data: &Dataset) -> Result<f64> {
    let (n, p) = (data.n(), data.p());
    if n <= p {
        return Err(Error::NotEstimable { n, p });
    }
    let all: Vec<usize> = (0..p).collect();
    let fit = least_squares(data, &all)?;
    let s2 = fit.rss / (n - p) as f64;
    if s2 <= f64::EPSILON * data.y.norm_squared() {
        return Err(Error::DegenerateVariance);
    }
    Ok(s2)
}

/// Orthonormal basis of a growing column span, kept by modified Gram-Schmidt
/// with one reorthogonalization pass.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    q: Vec<DVector<f64>>,
}

impl OrthoBasis {
    pub fn new() -> Self {
        Self { q: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Component of `v` orthogonal to the current span.
    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &self.q {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        r
    }

    /// Add `v` to the span. Returns false (and leaves the basis unchanged)
    /// when `v` is numerically inside the current span.
    pub fn push(&mut self, v: &DVector<f64>) -> bool {
        let r = self.residual(v);
        let norm = r.norm();
        if !(norm > RANK_TOL * v.norm()) {
            return false;
        }
        self.q.push(r / norm);
        true
    }
}

impl Default for OrthoBasis {
    fn default() -> Self {
        Self::new()
    }
}
