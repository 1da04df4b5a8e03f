use nalgebra::{DMatrix, SymmetricEigen};

use super::{wrap_bound, HeatKernelSlice, JumpKernel};
use crate::error::{RcmError, Result};

pub const SPECTRAL_LIMIT: usize = 10_000;

/// `e^{t(P − I)}` from the source `x`, through the eigendecomposition of
/// `S(x, y) = ω(x, y) / √(μ(x) μ(y))`.
pub fn spectral_oracle(kernel: &JumpKernel, t: f64, x: usize) -> Result<HeatKernelSlice> {
    let n = kernel.vertex_count();
    if n > SPECTRAL_LIMIT {
        return Err(RcmError::TooLarge {
            limit: SPECTRAL_LIMIT,
            got: n,
        });
    }
    if !(t >= 0.0 && t.is_finite()) || x >= n {
        return Err(RcmError::Precondition(format!(
            "bad time {t} or source {x}"
        )));
    }
    let mu = kernel.mu();
    let sq: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
    let mut s = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        for (b, p) in kernel.row(a) {
            // μ(a) P(a, b) = ω(a, b)
            s[(a, b)] += mu[a] * p / (sq[a] * sq[b]);
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    if let Some(bad) = eig.eigenvalues.iter().find(|l| l.abs() > 1.0 + 1e-10) {
        return Err(RcmError::Numerical(format!(
            "eigenvalue {bad} outside [-1, 1]"
        )));
    }
    let decay: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|l| (t * (l - 1.0)).exp())
        .collect();
    let phi = &eig.eigenvectors;
    let mut hk = vec![0.0; n];
    for (y, h) in hk.iter_mut().enumerate() {
        let v: f64 = (0..n).map(|k| decay[k] * phi[(x, k)] * phi[(y, k)]).sum();
        *h = v / (sq[x] * sq[y]);
    }
    let prob = hk.iter().zip(mu).map(|(h, m)| h * m).collect();
    Ok(HeatKernelSlice {
        t,
        source: x,
        prob,
        hk,
        trunc_error: 0.0,
        wrap_error: wrap_bound(kernel, t),
    })
}
