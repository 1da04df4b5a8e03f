//! Green kernel `g(x, y) = ∫₀^∞ p(t, x, y) dt` in transient dimensions, its
//! three-term decomposition and quenched and annealed power-law checks.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_li;

use crate::environment::{sample_environment, ConductanceField, EnvironmentSpec};
use crate::error::{RcmError, Result};
use crate::kernel::{poisson_tail, truncated_weights, JumpKernel};
use crate::lattice::TorusGeometry;
use crate::par;
use crate::report::fmt_f64;
use crate::seed;
use crate::stats::{bootstrap_interval, linear_fit, mean_stderr};

pub use crate::kernel::chernoff_check;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenOptions {
    /// Relative tolerance for the certified part of the error.
    pub tol: f64,
    /// Fixed split time instead of the adaptive choice.
    pub t0: Option<f64>,
    /// Number of fit times on `[T₀/2, T₀]`.
    pub fit_points: usize,
}

impl Default for GreenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            t0: None,
            fit_points: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenEstimate {
    pub x: usize,
    pub y: usize,
    pub distance: u64,
    pub value: f64,
    /// `∫₀^{T₀} p(t, x, y) dt`
    pub head: f64,
    /// Integral beyond `T₀` of the Gaussian form fitted on `[T₀/2, T₀]`.
    /// An extrapolation, not a certified bound.
    pub tail_bound: f64,
    pub t0: f64,
    /// Certified bound on the head: series truncation plus torus wrap.
    pub head_error: f64,
    /// Whether `tail_bound <= tol · value`.
    pub tail_within_tol: bool,
    /// Fitted form `c₂ t^{−d/2} e^{−a/t}` on `[T₀/2, T₀]`.
    pub tail_c2: f64,
    pub tail_exponent: f64,
}

/// `∫_T^∞ c₂ t^{−d/2} e^{−c₃ r²/t} dt`.
pub fn envelope_tail(d: usize, c2: f64, c3: f64, r: f64, t: f64) -> f64 {
    tail_integral(d, c2, c3 * r * r, t)
}

/// `∫_T^∞ c₂ t^{−d/2} e^{−a/t} dt` for any real `a`. For `a > 0` this is
/// `c₂ a^{1−d/2} γ(d/2 − 1, a/T)`; small or negative `a` use the series in `a/T`.
pub fn tail_integral(d: usize, c2: f64, a: f64, t: f64) -> f64 {
    let s = d as f64 / 2.0 - 1.0;
    let z = a / t;
    if z > 1.0 {
        return c2 * a.powf(-s) * gamma_li(s, z);
    }
    // Σ_k (−z)^k / (k! (s + k)), times T^{−s}
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 0..200 {
        let add = term / (s + k as f64);
        sum += add;
        if add.abs() < 1e-17 * sum.abs() {
            break;
        }
        term *= -z / (k + 1) as f64;
    }
    c2 * t.powf(-s) * sum
}

/// Carne–Varopoulos bound on the wrap-around part of `Pⁿ(x, y)`: the torus
/// kernel is the sum of the periodic lift over images `y + kL`, and each
/// image with `k ≠ 0` contributes at most `2 √(μ(y)/μ(x)) e^{−|y+kL−x|²/(2n)}`.
fn wrap_terms(geometry: &TorusGeometry, delta: &[i64], mu_ratio: f64, n_max: usize) -> Vec<f64> {
    let l = geometry.side() as f64;
    (0..=n_max)
        .map(|n| {
            if n == 0 {
                return 0.0;
            }
            let two_n = 2.0 * n as f64;
            // (Σ a_i)² >= Σ a_i², so the image sum factorizes over coordinates
            let prod: f64 = delta
                .iter()
                .map(|&di| {
                    let mut s = 1.0;
                    for m in 1..64 {
                        let mf = m as f64;
                        let a = (di as f64 + mf * l).abs();
                        let b = (di as f64 - mf * l).abs();
                        let term = (-a * a / two_n).exp() + (-b * b / two_n).exp();
                        s += term;
                        if term < 1e-300 {
                            break;
                        }
                    }
                    s
                })
                .product();
            (2.0 * mu_ratio.sqrt() * (prod - 1.0)).min(1.0)
        })
        .collect()
}

/// `∫₀^T` weights: `∫₀^T Pois(t)(n) dt = Pois(T)([n+1, ∞))`, up to the index
/// where the remaining weight `E[(N_T − n − 1)^+]` drops below `tol`.
fn head_weights(t: f64, tol: f64) -> (Vec<f64>, f64) {
    let mut w = Vec::new();
    let mut n = 0usize;
    loop {
        let tail = poisson_tail(t, n as i64 + 1);
        w.push(tail);
        n += 1;
        // remaining Σ_{m>=n} tail(m+1) <= tail(n+1) · t / (n + 1 − t) once n + 1 > t
        let next = poisson_tail(t, n as i64 + 1);
        if (n as f64 + 1.0) > t + 1.0 {
            let rem = next * (n as f64 + 1.0) / (n as f64 + 1.0 - t);
            if rem <= tol {
                return (w, rem);
            }
        }
    }
}

fn candidate_times(geometry: &TorusGeometry) -> Vec<f64> {
    let cap = (geometry.side() * geometry.side()) as f64 / 4.0;
    let mut out = Vec::new();
    let mut t = 4.0;
    while t <= cap {
        out.push(t);
        t *= 2.0;
    }
    out
}

struct Candidate {
    t0: f64,
    head_w: Vec<f64>,
    head_omitted: f64,
    fit_times: Vec<f64>,
    fit_w: Vec<(Vec<f64>, f64)>,
}

/// Green kernel from `x` to each target, sharing one sweep of `Pⁿ`.
pub fn green_row(
    kernel: &JumpKernel,
    x: usize,
    targets: &[usize],
    opts: &GreenOptions,
) -> Result<Vec<GreenEstimate>> {
    let geometry = kernel
        .geometry()
        .ok_or_else(|| RcmError::Precondition("green kernel needs a torus geometry".into()))?;
    let d = geometry.dim();
    if d < 3 {
        return Err(RcmError::TransientDimensionRequired(d));
    }
    let abs_tol = opts.tol * 1e-3;
    let times = match opts.t0 {
        Some(t) => vec![t],
        None => candidate_times(geometry),
    };
    let mu = kernel.mu();
    // certified wrap integrals per target and candidate
    let wraps: Vec<Vec<f64>> = targets
        .iter()
        .map(|&y| {
            let delta = geometry.displacement(x, y);
            let n_cap = crate::kernel::cutoff(*times.last().unwrap_or(&1.0), 1e-16);
            let terms = wrap_terms(geometry, &delta, mu[y] / mu[x], n_cap);
            times
                .iter()
                .map(|&t| {
                    let (hw, _) = head_weights(t, abs_tol);
                    hw.iter().zip(&terms).map(|(a, b)| a * b).sum::<f64>()
                        + poisson_tail(t, terms.len() as i64) * t
                })
                .collect()
        })
        .collect();
    // keep candidates whose wrap could still be small next to any possible head (at most T)
    let usable: Vec<usize> = (0..times.len())
        .filter(|&i| opts.t0.is_some() || wraps.iter().all(|w| w[i] <= opts.tol * times[i]))
        .collect();
    if usable.is_empty() {
        return Err(RcmError::TorusTooSmall {
            t: times[0],
            bound: wraps.iter().map(|w| w[0]).fold(0.0, f64::max),
            tol: opts.tol,
        });
    }
    let m = opts.fit_points.max(2);
    let candidates: Vec<Candidate> = usable
        .iter()
        .map(|&i| {
            let t0 = times[i];
            let (head_w, head_omitted) = head_weights(t0, abs_tol);
            let fit_times: Vec<f64> = (0..m)
                .map(|j| t0 / 2.0 * 2f64.powf(j as f64 / (m - 1) as f64))
                .collect();
            let fit_w = fit_times
                .iter()
                .map(|&t| truncated_weights(t, 1e-14))
                .collect();
            Candidate {
                t0,
                head_w,
                head_omitted,
                fit_times,
                fit_w,
            }
        })
        .collect();
    let mut refs: Vec<&[f64]> = Vec::new();
    for c in &candidates {
        refs.push(&c.head_w);
        for (w, _) in &c.fit_w {
            refs.push(w);
        }
    }
    let mut delta = vec![0.0; kernel.vertex_count()];
    delta[x] = 1.0;
    // the source itself is appended to pin the diagonal constant
    let mut at: Vec<usize> = targets.to_vec();
    at.push(x);
    let sums = kernel.power_sums_at(&delta, &refs, &at);
    let diag = targets.len();

    let stride = 1 + m;
    // on-diagonal constant at the largest split time the diagonal wrap allows
    let wrap_x: Vec<f64> = {
        let terms = wrap_terms(
            geometry,
            &vec![0; d],
            1.0,
            crate::kernel::cutoff(*times.last().unwrap_or(&1.0), 1e-16),
        );
        usable
            .iter()
            .map(|&i| {
                let (hw, _) = head_weights(times[i], abs_tol);
                hw.iter().zip(&terms).map(|(a, b)| a * b).sum::<f64>()
                    + poisson_tail(times[i], terms.len() as i64) * times[i]
            })
            .collect()
    };
    let c2_diag = candidates
        .iter()
        .enumerate()
        .rfind(|&(ci, _)| opts.t0.is_some() || wrap_x[ci] <= opts.tol * sums[ci * stride][diag])
        .map(|(ci, c)| {
            let fit: Vec<(f64, f64)> = c
                .fit_times
                .iter()
                .enumerate()
                .map(|(j, &t)| (t, sums[ci * stride + 1 + j][diag] / mu[x]))
                .collect();
            fit_tail(d, &fit).0
        });
    let out = targets
        .iter()
        .enumerate()
        .map(|(ti, &y)| {
            let r = geometry.distance(x, y) as f64;
            // each candidate's estimate: exact head plus extrapolated tail
            let estimate = |ci: usize, c: &Candidate| {
                let fit: Vec<(f64, f64)> = c
                    .fit_times
                    .iter()
                    .enumerate()
                    .map(|(j, &t)| (t, sums[ci * stride + 1 + j][ti] / mu[y]))
                    .collect();
                let (c2, a) = match c2_diag {
                    Some(c2) if y != x => (c2, fit_decay(d, c2, &fit)),
                    _ => fit_tail(d, &fit),
                };
                (
                    sums[ci * stride][ti],
                    c2,
                    a,
                    tail_integral(d, c2, a, c.t0).max(0.0),
                )
            };
            // adaptive choice: the largest candidate whose wrap is within tol of its estimate
            let mut chosen = None;
            for (ci, c) in candidates.iter().enumerate() {
                let (head_prob, c2, a, tail) = estimate(ci, c);
                let wrap = wraps[ti][usable[ci]];
                if opts.t0.is_some() || wrap <= opts.tol * (head_prob + tail * mu[y]) {
                    chosen = Some((c, head_prob, wrap, c2, a, tail));
                }
            }
            let (c, head_prob, wrap, c2, a, tail) = chosen.ok_or_else(|| {
                let (h, _, _, tail) = estimate(0, &candidates[0]);
                RcmError::TorusTooSmall {
                    t: candidates[0].t0,
                    bound: wraps[ti][usable[0]],
                    tol: opts.tol * (h + tail * mu[y]),
                }
            })?;
            let head = head_prob / mu[y];
            let value = head + tail;
            Ok(GreenEstimate {
                x,
                y,
                distance: r as u64,
                value,
                head,
                tail_bound: tail,
                t0: c.t0,
                head_error: (c.head_omitted + wrap) / mu[y],
                tail_within_tol: tail <= opts.tol * value,
                tail_c2: c2,
                tail_exponent: a,
            })
        })
        .collect();
    out
}

/// Least-squares fit of `log(p t^{d/2}) = log c₂ − a/t` over the samples.
/// On the diagonal `a` is typically negative, capturing the first correction
/// to the Gaussian decay.
fn fit_tail(d: usize, fit: &[(f64, f64)]) -> (f64, f64) {
    let half_d = d as f64 / 2.0;
    let xs: Vec<f64> = fit.iter().map(|&(t, _)| t.recip()).collect();
    let ys: Vec<f64> = fit
        .iter()
        .map(|&(t, p)| (p * t.powf(half_d)).ln())
        .collect();
    let (slope, intercept) = linear_fit(&xs, &ys);
    (intercept.exp(), -slope)
}

/// Least-squares `a` in `log(p t^{d/2}) = log c₂ − a/t` at a given `c₂`.
fn fit_decay(d: usize, c2: f64, fit: &[(f64, f64)]) -> f64 {
    let half_d = d as f64 / 2.0;
    let (num, den) = fit.iter().fold((0.0, 0.0), |(n, m), &(t, p)| {
        let u = t.recip();
        (n + u * (c2.ln() - (p * t.powf(half_d)).ln()), m + u * u)
    });
    num / den
}

pub fn green_kernel(
    kernel: &JumpKernel,
    x: usize,
    y: usize,
    opts: &GreenOptions,
) -> Result<GreenEstimate> {
    Ok(green_row(kernel, x, &[y], opts)?.pop().expect("one target"))
}

/// The three pieces of `∫₀^∞ p(t, x, y) dt` split at `λ = N₁(x)²` and
/// `N_{x,y} = λ ∨ |x − y|/c₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenDecomposition {
    pub lambda: f64,
    pub n_xy: f64,
    pub terms: [f64; 3],
    pub total: f64,
    pub direct: GreenEstimate,
}

pub fn green_decomposition(
    kernel: &JumpKernel,
    x: usize,
    y: usize,
    n1: usize,
    c1: f64,
    opts: &GreenOptions,
) -> Result<GreenDecomposition> {
    let geometry = kernel
        .geometry()
        .ok_or_else(|| RcmError::Precondition("green kernel needs a torus geometry".into()))?;
    let direct = green_kernel(kernel, x, y, opts)?;
    let lambda = (n1 * n1) as f64;
    let r = geometry.distance(x, y) as f64;
    let n_xy = lambda.max(r / c1);
    let abs_tol = opts.tol * 1e-3;
    let mu_y = kernel.mu()[y];
    // head integrals up to each split point that falls before T₀
    let splits: Vec<f64> = [lambda, n_xy].iter().map(|&t| t.min(direct.t0)).collect();
    let weights: Vec<Vec<f64>> = splits.iter().map(|&t| head_weights(t, abs_tol).0).collect();
    let refs: Vec<&[f64]> = weights.iter().map(Vec::as_slice).collect();
    let mut delta = vec![0.0; kernel.vertex_count()];
    delta[x] = 1.0;
    let sums = kernel.power_sums_at(&delta, &refs, &[y]);
    let d = geometry.dim();
    let cumulative = |t: f64, head: f64| -> f64 {
        if t <= direct.t0 {
            head
        } else {
            let tail_from = |t| tail_integral(d, direct.tail_c2, direct.tail_exponent, t);
            direct.head + tail_from(direct.t0) - tail_from(t)
        }
    };
    let upto_lambda = cumulative(lambda, sums[0][0] / mu_y);
    let upto_nxy = cumulative(n_xy, sums[1][0] / mu_y);
    let terms = [upto_lambda, upto_nxy - upto_lambda, direct.value - upto_nxy];
    Ok(GreenDecomposition {
        lambda,
        n_xy,
        terms,
        total: terms.iter().sum(),
        direct,
    })
}

/// Smallest integer `r >= 1` with `(λ/μ(x)) Pois(λ)([r, ∞)) <= r^{2−d}`, `λ = N₁(x)²`.
pub fn compute_n2(n1: usize, mu_x: f64, d: usize) -> u64 {
    let lambda = (n1 * n1) as f64;
    let mut r = 1u64;
    while lambda / mu_x * poisson_tail(lambda, r as i64) > (r as f64).powf(2.0 - d as f64) {
        r += 1;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchedReport {
    /// `(distance, g, g · |x−y|^{d−2})` for pairs at or above the threshold.
    pub scaled: Vec<(u64, f64, f64)>,
    pub excluded: usize,
    pub threshold: u64,
    pub min: f64,
    pub max: f64,
    pub window: (f64, f64),
    pub within_window: bool,
}

/// `g · |x−y|^{d−2}` over the pairs at distance `>= threshold`, against `[c₉, c₈]`.
pub fn quenched_bound_check(
    estimates: &[GreenEstimate],
    d: usize,
    threshold: u64,
    window: (f64, f64),
) -> QuenchedReport {
    let scaled: Vec<(u64, f64, f64)> = estimates
        .iter()
        .filter(|e| e.distance >= threshold.max(1))
        .map(|e| {
            (
                e.distance,
                e.value,
                e.value * (e.distance as f64).powi(d as i32 - 2),
            )
        })
        .collect();
    let min = scaled.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
    let max = scaled.iter().map(|s| s.2).fold(0.0, f64::max);
    QuenchedReport {
        excluded: estimates.len() - scaled.len(),
        within_window: !scaled.is_empty() && min >= window.0 && max <= window.1,
        scaled,
        threshold,
        min,
        max,
        window,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealedGreen {
    pub distances: Vec<u64>,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub slope: f64,
    pub slope_ci: (f64, f64),
    pub replicas: usize,
}

/// Monte Carlo mean of `g(0, r e₁)` over fields, with the log–log slope in `r`.
pub fn annealed_green(
    spec: &EnvironmentSpec,
    geometry: &TorusGeometry,
    distances: &[u64],
    n_samples: usize,
    seed: u64,
    opts: &GreenOptions,
) -> Result<AnnealedGreen> {
    let d = geometry.dim();
    if d < 3 {
        return Err(RcmError::TransientDimensionRequired(d));
    }
    if n_samples < 50 {
        return Err(RcmError::Precondition(format!(
            "annealed average needs at least 50 fields, got {n_samples}"
        )));
    }
    let origin = geometry.index(&vec![0; d]);
    let targets: Vec<usize> = distances
        .iter()
        .map(|&r| {
            let mut p = vec![0i64; d];
            p[0] = r as i64;
            geometry.index(&p)
        })
        .collect();
    // replicas run one after another; each green row is itself parallel
    let mut rows = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let field = sample_environment(spec, *geometry, seed::child_seed(seed, i as u64))?;
        let kernel = JumpKernel::new(&field)?;
        rows.push(
            green_row(&kernel, origin, &targets, opts)?
                .into_iter()
                .map(|e| e.value)
                .collect::<Vec<f64>>(),
        );
    }
    let (mut means, mut stderrs) = (Vec::new(), Vec::new());
    for j in 0..targets.len() {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let (m, s) = mean_stderr(&col);
        means.push(m);
        stderrs.push(s);
    }
    let lx: Vec<f64> = distances.iter().map(|&r| (r as f64).ln()).collect();
    let slope_of = |ms: &[f64]| linear_fit(&lx, &ms.iter().map(|m| m.ln()).collect::<Vec<_>>()).0;
    let slope = slope_of(&means);
    let mut rng = seed::rng(seed::stream_seed(seed, "annealed-bootstrap"));
    let slope_ci = bootstrap_interval(&mut rng, 400, 0.95, |rng| {
        let picks: Vec<usize> = (0..rows.len())
            .map(|_| rand::Rng::random_range(rng, 0..rows.len()))
            .collect();
        let ms: Vec<f64> = (0..targets.len())
            .map(|j| picks.iter().map(|&i| rows[i][j]).sum::<f64>() / picks.len() as f64)
            .collect();
        slope_of(&ms)
    });
    Ok(AnnealedGreen {
        distances: distances.to_vec(),
        means,
        stderrs,
        slope,
        slope_ci,
        replicas: n_samples,
    })
}

/// CSV rows `x,y,dist,g,g_scaled,tail_bound`.
pub fn green_csv(geometry: &TorusGeometry, estimates: &[GreenEstimate]) -> String {
    let coords = |v: usize| {
        geometry
            .point(v)
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut out = String::from("x,y,dist,g,g_scaled,tail_bound\n");
    for e in estimates {
        let scaled = e.value * (e.distance as f64).powi(geometry.dim() as i32 - 2);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            coords(e.x),
            coords(e.y),
            e.distance,
            fmt_f64(e.value),
            fmt_f64(scaled),
            fmt_f64(e.tail_bound)
        ));
    }
    out
}

/// Green rows for many sources in parallel.
pub fn green_rows(
    kernel: &JumpKernel,
    pairs: &[(usize, Vec<usize>)],
    opts: &GreenOptions,
) -> Result<Vec<Vec<GreenEstimate>>> {
    par::map_slice(pairs, |(x, ys)| green_row(kernel, *x, ys, opts))
        .into_iter()
        .collect()
}

pub fn field_green(
    field: &ConductanceField,
    x: usize,
    y: usize,
    opts: &GreenOptions,
) -> Result<GreenEstimate> {
    green_kernel(&JumpKernel::new(field)?, x, y, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `∫₀^∞ (e^{−x} I₀(x))³ ds` with `x = s/3`, `e^{−x}I₀(x)` by trapezoid
    /// quadrature of `(1/π)∫₀^π e^{x(cos θ − 1)} dθ`, plus the asymptotic tail.
    fn srw_green_origin() -> f64 {
        fn i0e(x: f64) -> f64 {
            let n = 4000;
            let h = std::f64::consts::PI / n as f64;
            let mut s = 0.5 * (1.0 + (-2.0 * x).exp());
            for k in 1..n {
                s += (x * ((k as f64 * h).cos() - 1.0)).exp();
            }
            s * h / std::f64::consts::PI
        }
        let f = |s: f64| i0e(s / 3.0).powi(3);
        let mut total = 0.0;
        let (mut a, cap) = (0.0, 20000.0);
        let mut width = 0.25;
        while a < cap {
            let b = a + width;
            // Simpson on [a, b] with 16 sub-panels
            let m = 16;
            let h = (b - a) / m as f64;
            let mut s = f(a) + f(b);
            for k in 1..m {
                s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            total += s * h / 3.0;
            a = b;
            if a >= 4.0 * width {
                width *= 2.0;
            }
        }
        // (2πx)^{-3/2}(1 + 3/(8x)) with x = s/3, integrated from where the panels stopped
        let c = (3.0 / (2.0 * std::f64::consts::PI)).powf(1.5);
        total + c * (2.0 / a.sqrt() + 0.75 * a.powf(-1.5))
    }

    #[test]
    fn oracle_value() {
        assert!((srw_green_origin() - 1.516386059151978).abs() < 1e-6);
    }

    #[test]
    fn envelope_tail_matches_quadrature() {
        for &(r, c3) in &[(0.0, 0.5), (3.0, 0.4), (10.0, 1.0)] {
            let (c2, t) = (0.7, 20.0);
            let direct = {
                // substitute t = T / u² to map [T, ∞) onto (0, 1]
                let n = 200000;
                let h = 1.0 / n as f64;
                (0..n)
                    .map(|k| {
                        let u = (k as f64 + 0.5) * h;
                        let s = t / (u * u);
                        c2 * s.powf(-1.5) * (-c3 * r * r / s).exp() * 2.0 * t / (u * u * u)
                    })
                    .sum::<f64>()
                    * h
            };
            let closed = envelope_tail(3, c2, c3, r, t);
            assert!(
                (closed - direct).abs() < 1e-6 * direct,
                "{closed} vs {direct}"
            );
        }
    }

    #[test]
    fn negative_exponent_tail() {
        let (c2, a, t) = (1.3, -4.0, 30.0);
        let n = 400000;
        let h = 1.0 / n as f64;
        let direct: f64 = (0..n)
            .map(|k| {
                let u = (k as f64 + 0.5) * h;
                let s = t / (u * u);
                c2 * s.powf(-1.5) * (-a / s).exp() * 2.0 * t / (u * u * u)
            })
            .sum::<f64>()
            * h;
        assert!((tail_integral(3, c2, a, t) - direct).abs() < 1e-6 * direct);
        assert!((tail_integral(3, c2, 40.0, t) - envelope_tail(3, c2, 10.0, 2.0, t)).abs() < 1e-15);
    }

    #[test]
    fn doubling_split_time_stays_within_tail() {
        let g = TorusGeometry::new(3, 48).unwrap();
        let k = JumpKernel::new(&ConductanceField::constant(g, 1.0).unwrap()).unwrap();
        let y = g.index(&[2, 1, 0]);
        let a = green_kernel(
            &k,
            0,
            y,
            &GreenOptions {
                t0: Some(32.0),
                ..Default::default()
            },
        )
        .unwrap();
        let b = green_kernel(
            &k,
            0,
            y,
            &GreenOptions {
                t0: Some(64.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            (a.value - b.value).abs() < a.tail_bound,
            "{} {} {}",
            a.value,
            b.value,
            a.tail_bound
        );
    }

    #[test]
    fn rejects_two_dimensions() {
        let f = ConductanceField::constant(TorusGeometry::new(2, 16).unwrap(), 1.0).unwrap();
        let k = JumpKernel::new(&f).unwrap();
        assert!(matches!(
            green_kernel(&k, 0, 0, &GreenOptions::default()),
            Err(RcmError::TransientDimensionRequired(2))
        ));
    }

    #[test]
    fn constant_field_origin_matches_oracle() {
        let g = TorusGeometry::new(3, 48).unwrap();
        let k = JumpKernel::new(&ConductanceField::constant(g, 1.0).unwrap()).unwrap();
        let e = green_kernel(&k, 0, 0, &GreenOptions::default()).unwrap();
        let oracle = srw_green_origin() / 6.0;
        let rel = (e.value - oracle).abs() / oracle;
        eprintln!("green origin: rel err {rel:e}, T0 = {}", e.t0);
        assert!(
            rel < 1e-3,
            "g = {} oracle = {oracle} rel = {rel} t0 = {} tail = {}",
            e.value,
            e.t0,
            e.tail_bound
        );
    }

    #[test]
    fn scaling_and_symmetry() {
        let g = TorusGeometry::new(3, 16).unwrap();
        let spec = EnvironmentSpec::UniformEllipticIid {
            lower: 0.5,
            upper: 2.0,
        };
        let f = sample_environment(&spec, g, 3).unwrap();
        let opts = GreenOptions {
            tol: 1e-2,
            t0: Some(16.0),
            fit_points: 9,
        };
        let (x, y) = (0, g.index(&[2, 1, 0]));
        let a = field_green(&f, x, y, &opts).unwrap();
        let b = field_green(&f.scaled(2.0).unwrap(), x, y, &opts).unwrap();
        assert!((b.value - a.value / 2.0).abs() <= 1e-12 * a.value);
        let back = field_green(&f, y, x, &opts).unwrap();
        // p is symmetric, so the head is too
        assert!((a.head - back.head).abs() <= a.head_error + back.head_error + 1e-12);
    }

    #[test]
    fn quenched_constant_field_within_factor_two() {
        let g = TorusGeometry::new(3, 32).unwrap();
        let k = JumpKernel::new(&ConductanceField::constant(g, 1.0).unwrap()).unwrap();
        let targets: Vec<usize> = (4..=12).map(|r| g.index(&[r, 0, 0])).collect();
        let row = green_row(&k, 0, &targets, &GreenOptions::default()).unwrap();
        let rep = quenched_bound_check(&row, 3, 4, (0.0, f64::MAX));
        assert_eq!(rep.scaled.len(), 9);
        assert!(rep.max / rep.min < 2.0, "{} .. {}", rep.min, rep.max);
        let rep = quenched_bound_check(&row, 3, 8, (0.0, f64::MAX));
        assert_eq!(rep.excluded, 4);
    }

    #[test]
    fn annealed_constant_equals_quenched() {
        let g = TorusGeometry::new(3, 16).unwrap();
        let spec = EnvironmentSpec::Constant { level: 1.0 };
        let opts = GreenOptions::default();
        assert!(annealed_green(&spec, &g, &[1, 2, 3], 10, 1, &opts).is_err());
        let ann = annealed_green(&spec, &g, &[1, 2, 3], 50, 1, &opts).unwrap();
        let k = JumpKernel::new(&ConductanceField::constant(g, 1.0).unwrap()).unwrap();
        for (j, r) in [1i64, 2, 3].into_iter().enumerate() {
            let q = green_kernel(&k, 0, g.index(&[r, 0, 0]), &opts).unwrap();
            assert!((ann.means[j] - q.value).abs() <= 1e-14 * q.value);
            assert!(ann.stderrs[j] <= 1e-14 * q.value);
        }
    }

    #[test]
    fn decomposition_sums() {
        let g = TorusGeometry::new(3, 24).unwrap();
        let k = JumpKernel::new(&ConductanceField::constant(g, 1.0).unwrap()).unwrap();
        let opts = GreenOptions {
            tol: 1e-2,
            ..Default::default()
        };
        let y = g.index(&[3, 0, 0]);
        let dec = green_decomposition(&k, 0, y, 1, 1.0, &opts).unwrap();
        assert!(dec.terms.iter().all(|&t| t >= 0.0));
        assert!((dec.total - dec.direct.value).abs() < 1e-12);
        assert!(dec.terms[0] <= poisson_tail(1.0, 2) / 6.0 + 1e-15);
        let diag = green_decomposition(&k, 0, 0, 1, 1.0, &opts).unwrap();
        assert!(diag.terms[0] >= (-1.0f64).exp() / 6.0);
    }

    #[test]
    fn n2_is_literal() {
        let r = compute_n2(2, 6.0, 3);
        let f = |r: u64| 4.0 / 6.0 * poisson_tail(4.0, r as i64) <= (r as f64).recip();
        assert!(f(r));
        assert!(r == 1 || !f(r - 1));
    }

    #[test]
    fn chernoff() {
        assert!(poisson_tail(2.0, 15) <= (-1.0f64).exp());
        assert!(chernoff_check(2.0, 15.0));
    }
}
