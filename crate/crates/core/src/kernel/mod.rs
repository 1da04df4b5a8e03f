//! The constant-speed walk: jump kernel, heat kernel by uniformization,
//! a dense spectral oracle and a Monte Carlo walker.

mod poisson;
mod spectral;
mod walk;

pub use poisson::{
    chernoff_check, cutoff, poisson_pmf, poisson_tail, torus_size_for, truncated_weights,
};
pub use spectral::spectral_oracle;
pub use walk::{simulate_walk, simulate_walk_counted};

use serde::{Deserialize, Serialize};

use crate::environment::ConductanceField;
use crate::error::{RcmError, Result};
use crate::lattice::TorusGeometry;
use crate::par;
use crate::report::fmt_f64;

pub const DEFAULT_TOL: f64 = 1e-10;

/// Row-stochastic jump matrix of the embedded chain in compressed-row layout.
///
/// Row `x` lists its neighbours `y` with `P(x, y)`, and alongside each entry
/// the reverse probability `P(y, x)`, so that `v ↦ vP` can be evaluated by
/// pulling along the same row.
#[derive(Debug, Clone)]
pub struct JumpKernel {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    forward: Vec<f64>,
    backward: Vec<f64>,
    mu: Vec<f64>,
    geometry: Option<TorusGeometry>,
}

impl JumpKernel {
    pub fn new(field: &ConductanceField) -> Result<Self> {
        let g = field.geometry();
        let n = g.vertex_count();
        let rows: Vec<Vec<(usize, f64)>> = par::map_range(n, |v| {
            g.incident(v)
                .map(|(e, y)| (y, field.edge_value(e)))
                .collect()
        });
        let mut k = Self::from_symmetric_weights(rows)?;
        k.geometry = Some(*g);
        Ok(k)
    }

    /// Kernel of a weighted graph given as adjacency rows `(neighbour, weight)`.
    /// Weights must be symmetric and every vertex must have positive total weight.
    pub fn from_symmetric_weights(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mu: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().map(|&(_, w)| w).sum())
            .collect();
        if let Some(v) = mu.iter().position(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(RcmError::Precondition(format!(
                "vertex {v} has total weight {}",
                mu[v]
            )));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut forward = Vec::new();
        let mut backward = Vec::new();
        row_ptr.push(0);
        for (x, row) in rows.iter().enumerate() {
            for &(y, w) in row {
                let back = rows
                    .get(y)
                    .and_then(|r| r.iter().find(|&&(z, _)| z == x))
                    .map(|&(_, w)| w)
                    .ok_or_else(|| {
                        RcmError::Precondition(format!("edge {x}->{y} has no reverse"))
                    })?;
                if (back - w).abs() > 1e-12 * w.abs().max(1.0) {
                    return Err(RcmError::Precondition(format!(
                        "asymmetric weight on {x}-{y}: {w} vs {back}"
                    )));
                }
                cols.push(y);
                forward.push(w / mu[x]);
                backward.push(w / mu[y]);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            row_ptr,
            cols,
            forward,
            backward,
            mu,
            geometry: None,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn geometry(&self) -> Option<&TorusGeometry> {
        self.geometry.as_ref()
    }

    /// Entries `(y, P(x, y))` of row `x`.
    pub fn row(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[x]..self.row_ptr[x + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.forward[r].iter().copied())
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.row(x).filter(|&(z, _)| z == y).map(|(_, p)| p).sum()
    }

    /// Row vector times `P`: `(vP)(y) = Σ_x v(x) P(x, y)`.
    pub fn step_into(&self, v: &[f64], out: &mut [f64]) {
        par::fill(out, |y| {
            let r = self.row_ptr[y]..self.row_ptr[y + 1];
            self.cols[r.clone()]
                .iter()
                .zip(&self.backward[r])
                .map(|(&x, &p)| v[x] * p)
                .sum()
        });
    }

    pub fn step(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.step_into(v, &mut out);
        out
    }

    /// `Σ_n weights[j][n] · v Pⁿ` for every weight sequence `j`, in one sweep.
    pub fn power_sums(&self, v: &[f64], weights: &[&[f64]]) -> Vec<Vec<f64>> {
        let n_max = weights.iter().map(|w| w.len()).max().unwrap_or(0);
        let mut acc = vec![vec![0.0; v.len()]; weights.len()];
        let mut cur = v.to_vec();
        let mut next = vec![0.0; v.len()];
        for n in 0..n_max {
            for (a, w) in acc.iter_mut().zip(weights) {
                if let Some(&c) = w.get(n) {
                    if c != 0.0 {
                        a.iter_mut().zip(&cur).for_each(|(a, b)| *a += c * b);
                    }
                }
            }
            if n + 1 < n_max {
                self.step_into(&cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
        }
        acc
    }

    /// Like [`power_sums`](Self::power_sums) but only accumulates at `targets`;
    /// result is indexed `[weight set][target]`.
    pub fn power_sums_at(&self, v: &[f64], weights: &[&[f64]], targets: &[usize]) -> Vec<Vec<f64>> {
        let n_max = weights.iter().map(|w| w.len()).max().unwrap_or(0);
        let mut acc = vec![vec![0.0; targets.len()]; weights.len()];
        let mut cur = v.to_vec();
        let mut next = vec![0.0; v.len()];
        for n in 0..n_max {
            for (a, w) in acc.iter_mut().zip(weights) {
                if let Some(&c) = w.get(n) {
                    for (slot, &y) in a.iter_mut().zip(targets) {
                        *slot += c * cur[y];
                    }
                }
            }
            if n + 1 < n_max {
                self.step_into(&cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
        }
        acc
    }

    /// `v e^{t(P − I)}` with the omitted Poisson mass as error bound (for
    /// nonnegative `v` of total mass at most one this bounds every entry).
    pub fn propagate(&self, v: &[f64], t: f64, tol: f64) -> (Vec<f64>, f64) {
        let (w, omitted) = truncated_weights(t, tol);
        let mut out = self.power_sums(v, &[&w]);
        (out.pop().expect("one weight set"), omitted)
    }

    /// Largest deviation from detailed balance `μ(x) P(x,y) = μ(y) P(y,x)`.
    pub fn detailed_balance_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..self.vertex_count() {
            for (y, p) in self.row(x) {
                worst = worst.max((self.mu[x] * p - self.mu[y] * self.prob(y, x)).abs());
            }
        }
        worst
    }
}

pub fn jump_kernel(field: &ConductanceField) -> Result<JumpKernel> {
    JumpKernel::new(field)
}

/// What to do when the torus is too small for the requested time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WrapPolicy {
    /// Refuse when the wrap bound exceeds the tolerance.
    #[default]
    Strict,
    /// Compute anyway and report the wrap bound in the slice.
    Report,
}

/// Heat kernel from one source at one time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatKernelSlice {
    pub t: f64,
    pub source: usize,
    /// `P_x[X_t = ·]`
    pub prob: Vec<f64>,
    /// `p(t, x, ·) = prob / μ`
    pub hk: Vec<f64>,
    pub trunc_error: f64,
    pub wrap_error: f64,
}

impl HeatKernelSlice {
    pub fn total_mass(&self) -> f64 {
        self.prob.iter().sum()
    }
}

/// Max-norm bound on the difference between the torus walk and the walk on
/// ℤ^d: reaching a periodic image needs at least `L/2` jumps.
pub fn wrap_bound(kernel: &JumpKernel, t: f64) -> f64 {
    match kernel.geometry() {
        Some(g) => poisson_tail(t, (g.side() / 2) as i64),
        None => 0.0,
    }
}

pub fn heat_kernel(kernel: &JumpKernel, t: f64, x: usize, tol: f64) -> Result<HeatKernelSlice> {
    heat_kernel_with(kernel, t, x, tol, WrapPolicy::Strict)
}

pub fn heat_kernel_with(
    kernel: &JumpKernel,
    t: f64,
    x: usize,
    tol: f64,
    wrap: WrapPolicy,
) -> Result<HeatKernelSlice> {
    Ok(heat_kernel_times(kernel, x, &[t], tol, wrap)?
        .pop()
        .expect("one time"))
}

/// Slices at several times from one source, sharing a single sweep of `Pⁿ`.
pub fn heat_kernel_times(
    kernel: &JumpKernel,
    x: usize,
    times: &[f64],
    tol: f64,
    wrap: WrapPolicy,
) -> Result<Vec<HeatKernelSlice>> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(RcmError::Precondition(format!(
            "tolerance must lie in (0, 1), got {tol}"
        )));
    }
    if x >= kernel.vertex_count() {
        return Err(RcmError::Precondition(format!("source {x} out of range")));
    }
    let mut wraps = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(RcmError::Precondition(format!(
                "time must be finite and >= 0, got {t}"
            )));
        }
        let w = wrap_bound(kernel, t);
        if wrap == WrapPolicy::Strict && w > tol {
            return Err(RcmError::TorusTooSmall { t, bound: w, tol });
        }
        wraps.push(w);
    }
    let weights: Vec<(Vec<f64>, f64)> = times.iter().map(|&t| truncated_weights(t, tol)).collect();
    let refs: Vec<&[f64]> = weights.iter().map(|(w, _)| w.as_slice()).collect();
    let mut delta = vec![0.0; kernel.vertex_count()];
    delta[x] = 1.0;
    let probs = kernel.power_sums(&delta, &refs);
    Ok(probs
        .into_iter()
        .zip(times)
        .zip(weights)
        .zip(wraps)
        .map(|(((prob, &t), (_, omitted)), wrap_error)| {
            let hk = prob.iter().zip(kernel.mu()).map(|(p, m)| p / m).collect();
            HeatKernelSlice {
                t,
                source: x,
                prob,
                hk,
                trunc_error: omitted,
                wrap_error,
            }
        })
        .collect())
}

/// Slices for many sources at the given times; sources run in parallel.
pub fn heat_kernel_sources(
    kernel: &JumpKernel,
    sources: &[usize],
    times: &[f64],
    tol: f64,
    wrap: WrapPolicy,
) -> Result<Vec<Vec<HeatKernelSlice>>> {
    par::map_slice(sources, |&x| heat_kernel_times(kernel, x, times, tol, wrap))
        .into_iter()
        .collect()
}

/// CSV rows `t,x,y,prob,hk`; points are written as `;`-separated coordinates.
pub fn slices_csv(geometry: &TorusGeometry, slices: &[HeatKernelSlice]) -> String {
    let coords = |v: usize| {
        geometry
            .point(v)
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut out = String::from("t,x,y,prob,hk\n");
    for s in slices {
        let x = coords(s.source);
        for (y, (p, h)) in s.prob.iter().zip(&s.hk).enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_f64(s.t),
                x,
                coords(y),
                fmt_f64(*p),
                fmt_f64(*h)
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, EnvironmentSpec};

    fn field(d: usize, l: usize, seed: u64) -> ConductanceField {
        let g = TorusGeometry::new(d, l).unwrap();
        sample_environment(
            &EnvironmentSpec::UniformEllipticIid {
                lower: 0.2,
                upper: 3.0,
            },
            g,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn toy_row() {
        // a path 1 - 0 - 2 with weights 1 and 3
        let rows = vec![vec![(1, 1.0), (2, 3.0)], vec![(0, 1.0)], vec![(0, 3.0)]];
        let k = JumpKernel::from_symmetric_weights(rows).unwrap();
        let row: Vec<(usize, f64)> = k.row(0).collect();
        assert_eq!(row, vec![(1, 0.25), (2, 0.75)]);
        assert!(JumpKernel::from_symmetric_weights(vec![vec![(1, 1.0)], vec![(0, 2.0)]]).is_err());
    }

    #[test]
    fn rows_and_balance() {
        let k = JumpKernel::new(&field(2, 8, 3)).unwrap();
        for x in 0..k.vertex_count() {
            let s: f64 = k.row(x).map(|(_, p)| p).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(k.detailed_balance_defect() < 1e-12);
        let c = JumpKernel::new(
            &ConductanceField::constant(TorusGeometry::new(3, 4).unwrap(), 2.0).unwrap(),
        )
        .unwrap();
        assert!(c.row(5).all(|(_, p)| (p - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn time_zero_is_delta() {
        let f = field(2, 8, 1);
        let k = JumpKernel::new(&f).unwrap();
        let s = heat_kernel(&k, 0.0, 9, 1e-10).unwrap();
        assert_eq!(s.prob[9], 1.0);
        assert_eq!(s.total_mass(), 1.0);
        assert!((s.hk[9] - 1.0 / f.mu(9)).abs() < 1e-15);
    }

    #[test]
    fn wrap_refusal() {
        let k = JumpKernel::new(&field(2, 8, 1)).unwrap();
        assert!(matches!(
            heat_kernel(&k, 10.0, 0, 1e-10),
            Err(RcmError::TorusTooSmall { .. })
        ));
        let s = heat_kernel_with(&k, 10.0, 0, 1e-10, WrapPolicy::Report).unwrap();
        assert!(s.wrap_error > 0.5);
    }

    #[test]
    fn reversibility_and_conservation() {
        let f = field(2, 24, 7);
        let k = JumpKernel::new(&f).unwrap();
        let tol = 1e-10;
        let (x, y) = (0, 3 * 24 + 5);
        let a = heat_kernel_with(&k, 1.5, x, tol, WrapPolicy::Report).unwrap();
        let b = heat_kernel_with(&k, 1.5, y, tol, WrapPolicy::Report).unwrap();
        // p is symmetric; equivalently μ(x) P_x[X_t = y] = μ(y) P_y[X_t = x]
        assert!((a.hk[y] - b.hk[x]).abs() <= 2.0 * tol);
        assert!(
            (f.mu(x) * a.prob[y] - f.mu(y) * b.prob[x]).abs() <= 2.0 * tol * f.mu(x).max(f.mu(y))
        );
        let m = a.total_mass();
        assert!(m <= 1.0 + 1e-12 && m >= 1.0 - tol);
    }

    #[test]
    fn semigroup() {
        let f = field(2, 32, 11);
        let k = JumpKernel::new(&f).unwrap();
        let tol = 1e-10;
        let a = heat_kernel(&k, 1.0, 0, tol).unwrap();
        let (ab, _) = k.propagate(&a.prob, 1.5, tol);
        let c = heat_kernel_with(&k, 2.5, 0, tol, WrapPolicy::Report).unwrap();
        let err = ab
            .iter()
            .zip(&c.prob)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        assert!(err <= 3.0 * tol, "{err}");
    }

    #[test]
    fn truncation_is_monotone() {
        let k = JumpKernel::new(&field(2, 40, 5)).unwrap();
        let a = heat_kernel(&k, 3.0, 0, 1e-8).unwrap();
        let b = heat_kernel_with(&k, 3.0, 0, 1e-12, WrapPolicy::Report).unwrap();
        assert!(b.trunc_error <= a.trunc_error);
        let err = a
            .prob
            .iter()
            .zip(&b.prob)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-8);
    }

    #[test]
    fn on_diagonal_decays_along_doubling() {
        let f = field(2, 16, 2);
        let k = JumpKernel::new(&f).unwrap();
        let times = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
        let s = heat_kernel_times(&k, 17, &times, 1e-12, WrapPolicy::Report).unwrap();
        for w in s.windows(2) {
            assert!(w[1].hk[17] <= w[0].hk[17] + 1e-12);
        }
    }

    #[test]
    fn multi_time_matches_single() {
        let k = JumpKernel::new(&field(2, 16, 4)).unwrap();
        let many = heat_kernel_times(&k, 0, &[0.5, 2.0], 1e-12, WrapPolicy::Report).unwrap();
        let one = heat_kernel_with(&k, 2.0, 0, 1e-12, WrapPolicy::Report).unwrap();
        assert_eq!(many[1].prob, one.prob);
    }

    #[test]
    fn csv_shape() {
        let f = ConductanceField::constant(TorusGeometry::new(2, 4).unwrap(), 1.0).unwrap();
        let k = JumpKernel::new(&f).unwrap();
        let s = heat_kernel_with(&k, 0.0, 0, 1e-10, WrapPolicy::Report).unwrap();
        let csv = slices_csv(f.geometry(), &[s]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 17);
        assert_eq!(lines[1], "0.0,0;0,0;0,1.0,0.25");
    }
}
