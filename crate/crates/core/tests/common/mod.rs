#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sigtest::montecarlo::{gen_design, replication_rng, Design};
use sigtest::Dataset;

pub fn normal_vec<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Random unit-norm design with a standard normal response plus an optional
/// sparse signal on the first columns.
pub fn random_dataset(seed: u64, idx: u64, n: usize, p: usize, rho: f64, signal: &[f64]) -> Dataset {
    let mut rng = replication_rng(seed, idx);
    let x = gen_design(Design::Ar1 { rho }, n, p, &mut rng).unwrap();
    let beta = DVector::from_fn(p, |i, _| signal.get(i).copied().unwrap_or(0.0));
    let y = &x * beta + normal_vec(n, &mut rng);
    Dataset::new(x, y, Some(1.0)).unwrap()
}

pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * (y - x * beta).norm_squared() + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for the lasso, run to a tight fixed point.
pub fn cd_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, warm: Option<&DVector<f64>>) -> DVector<f64> {
    let p = x.ncols();
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
    let mut beta = warm.cloned().unwrap_or_else(|| DVector::zeros(p));
    let mut resid = y - x * &beta;
    for _ in 0..200_000 {
        let mut delta: f64 = 0.0;
        for j in 0..p {
            let col = x.column(j);
            let old = beta[j];
            let z = col.dot(&resid) + norms[j] * old;
            let new = soft(z, lambda) / norms[j];
            if new != old {
                resid.axpy(old - new, &col.into_owned(), 1.0);
                beta[j] = new;
                delta = delta.max((new - old).abs());
            }
        }
        if delta < 1e-15 {
            break;
        }
    }
    beta
}

pub fn support(beta: &DVector<f64>) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Values of lambda in `[lo, hi]` where the coordinate-descent solution changes
/// support, found on a uniform grid and refined by bisection.
pub fn support_changes(x: &DMatrix<f64>, y: &DVector<f64>, lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let lambdas: Vec<f64> = (0..=grid)
        .map(|i| hi - (hi - lo) * i as f64 / grid as f64)
        .collect();
    let mut prev = cd_lasso(x, y, lambdas[0], None);
    for w in lambdas.windows(2) {
        let next = cd_lasso(x, y, w[1], Some(&prev));
        if support(&prev) != support(&next) {
            bisect(x, y, w[0], w[1], &prev, &next, &mut out);
        }
        prev = next;
    }
    out
}

fn bisect(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    hi: f64,
    lo: f64,
    b_hi: &DVector<f64>,
    b_lo: &DVector<f64>,
    out: &mut Vec<f64>,
) {
    if hi - lo < 1e-9 {
        out.push(0.5 * (hi + lo));
        return;
    }
    let mid = 0.5 * (hi + lo);
    let b_mid = cd_lasso(x, y, mid, Some(b_hi));
    let (s_hi, s_mid, s_lo) = (support(b_hi), support(&b_mid), support(b_lo));
    if s_hi != s_mid {
        bisect(x, y, hi, mid, b_hi, &b_mid, out);
    }
    if s_mid != s_lo {
        bisect(x, y, mid, lo, &b_mid, b_lo, out);
    }
}

/// Golden-section maximisation of a unimodal function on `[a, b]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b))
}

/// Maximum of `f` over a uniform grid on `[a, b]`, refined by golden section
/// around the best grid point.
pub fn grid_scan_max(f: impl Fn(f64) -> f64, a: f64, b: f64, points: usize) -> f64 {
    let h = (b - a) / points as f64;
    let (mut best_t, mut best) = (a, f64::NEG_INFINITY);
    for i in 0..=points {
        let t = a + h * i as f64;
        let v = f(t);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    golden_max(&f, best_t - h, best_t + h).max(best)
}
