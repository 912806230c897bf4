#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use regtr::EvalPoint;

/// `J = U diag(s) V^T` with known factors, so step norms have closed forms
/// that do not depend on any solver in the crate.
pub struct Instance {
    pub point: EvalPoint,
    pub s: Vec<f64>,
    /// `U^T r`
    pub ur: Vec<f64>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    a.qr().q()
}

/// `zeros` trailing singular values are set to exactly zero.
pub fn instance(rng: &mut ChaCha8Rng, n: usize, zeros: usize) -> Instance {
    let u = orthogonal(rng, n);
    let v = orthogonal(rng, n);
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let mut s: Vec<f64> = (0..n).map(|_| scale * 10f64.powf(rng.random_range(-3.0..0.0))).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    for v in s.iter_mut().skip(n - zeros) {
        *v = 0.0;
    }
    let j = &u * DMatrix::from_diagonal(&DVector::from_vec(s.clone())) * v.transpose();
    let r = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let ur: Vec<f64> = (0..n).map(|i| u.column(i).dot(&r)).collect();
    let point = EvalPoint::from_parts(DVector::zeros(n), r, j).unwrap();
    Instance { point, s, ur }
}

impl Instance {
    pub fn p_norm(&self, lambda: f64) -> f64 {
        self.s
            .iter()
            .zip(&self.ur)
            .filter(|(s, _)| **s > 0.0)
            .map(|(s, r)| (s * r / (s * s + lambda)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn model_norm(&self, lambda: f64) -> f64 {
        self.s
            .iter()
            .zip(&self.ur)
            .map(|(s, r)| if *s > 0.0 { (lambda * r / (s * s + lambda)).powi(2) } else { r * r })
            .sum::<f64>()
            .sqrt()
    }

    pub fn null_residual(&self) -> f64 {
        self.s.iter().zip(&self.ur).filter(|(s, _)| **s == 0.0).map(|(_, r)| r * r).sum::<f64>().sqrt()
    }

    pub fn b_norm(&self) -> f64 {
        self.s[0] * self.s[0]
    }
}

/// Root of a monotone function on `[lo, hi]` by bisection.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = f(lo);
    assert!(f_lo * f(hi) <= 0.0, "root not bracketed");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Radius-equation root for `radius`: `||p(lambda)|| = radius`.
pub fn tr_root(inst: &Instance, radius: f64) -> f64 {
    let mut hi = 1.0;
    while inst.p_norm(hi) > radius {
        hi *= 2.0;
    }
    bisect(|l| inst.p_norm(l) - radius, 0.0, hi)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
