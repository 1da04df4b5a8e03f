//! Concentration diagnostics for the environment: centred moments over
//! hyper-rectangles, the N₁ tail, association and mixing checks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envelopes::compute_n1;
use crate::environment::{
    sample_environment, Association, ConductanceField, EnvironmentSpec, MomentSummary, Quantity,
};
use crate::error::{RcmError, Result};
use crate::lattice::{HyperRectangle, TorusGeometry};
use crate::par;
use crate::report::{fmt_f64, svg_scatter, Series};
use crate::seed;
use crate::stats::{bootstrap_interval, linear_fit, mean_stderr, wilson_interval};

/// `μ(x)^p − bar μ_p`
pub fn delta_mu(field: &ConductanceField, p: f64, x: usize, bar_mu_p: f64) -> f64 {
    field.mu(x).powf(p) - bar_mu_p
}

/// `ν(x)^q − bar ν_q`
pub fn delta_nu(field: &ConductanceField, q: f64, x: usize, bar_nu_q: f64) -> f64 {
    field.nu(x).powf(q) - bar_nu_q
}

/// `E[φ(0)^exponent]` by averaging over all vertices of independent fields;
/// the standard error is taken across fields.
pub fn centering_constant(
    spec: &EnvironmentSpec,
    geometry: &TorusGeometry,
    quantity: Quantity,
    exponent: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let means = par::map_range(n_samples, |i| -> Result<f64> {
        let f = sample_environment(spec, *geometry, seed::child_seed(seed, i as u64))?;
        let v = f.quantity_vec(quantity);
        Ok(v.iter().map(|x| x.powf(exponent)).sum::<f64>() / v.len() as f64)
    });
    let means: Vec<f64> = means.into_iter().collect::<Result<_>>()?;
    Ok(mean_stderr(&means))
}

/// Near-cubic rectangles `(l+1) × (2m+1)^{d−1}` with vertex counts close to
/// `min_size · 2^i`, the first at most `min_size` and the last at least `max_size`.
pub fn rectangle_ladder(d: usize, min_size: usize, max_size: usize) -> Vec<HyperRectangle> {
    let mut out: Vec<HyperRectangle> = Vec::new();
    let mut target = min_size;
    loop {
        let m = (((target as f64).powf(1.0 / d as f64) - 1.0) / 2.0)
            .floor()
            .max(0.0) as u64;
        let cross = (2 * m + 1).pow(d as u32 - 1);
        let mut len = ((target as f64 / cross as f64).round() as u64).max(1);
        if out.is_empty() {
            while len > 1 && len * cross > min_size as u64 {
                len -= 1;
            }
        }
        if target >= max_size {
            while (len * cross) < max_size as u64 {
                len += 1;
            }
        }
        let rect = HyperRectangle::new(vec![0; d], 0, len - 1, m);
        if out
            .last()
            .is_none_or(|r| r.vertex_count() < rect.vertex_count())
        {
            out.push(rect);
        }
        if target >= max_size {
            return out;
        }
        target *= 2;
    }
}

/// Default `η` with `ζ = d`: `η = dζ` for the mixing (FKG) Gaussian field and
/// `η = 2ζ` otherwise.
pub fn default_eta(spec: &EnvironmentSpec, d: usize) -> f64 {
    let zeta = d as f64;
    match spec {
        EnvironmentSpec::GaussianFkg { .. } => d as f64 * zeta,
        _ => 2.0 * zeta,
    }
}

/// Per-replica values `|Σ_{x∈R} Δφ(x)|^η` for each rectangle.
pub fn replica_sums(
    spec: &EnvironmentSpec,
    geometry: &TorusGeometry,
    quantity: Quantity,
    exponent: f64,
    eta: f64,
    bar: f64,
    rects: &[HyperRectangle],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    for r in rects {
        if r.bounds()
            .iter()
            .any(|(lo, hi)| (hi - lo + 1) as usize > geometry.side())
        {
            return Err(RcmError::Precondition(format!(
                "rectangle of {} vertices does not fit the torus",
                r.vertex_count()
            )));
        }
    }
    let members: Vec<Vec<usize>> = rects
        .iter()
        .map(|r| r.vertices().iter().map(|v| geometry.index(v)).collect())
        .collect();
    let rows = par::map_range(n_samples, |i| -> Result<Vec<f64>> {
        let f = sample_environment(spec, *geometry, seed::child_seed(seed, i as u64))?;
        let phi = f.quantity_vec(quantity);
        members
            .iter()
            .map(|m| {
                let s: f64 = m.iter().map(|&x| phi[x].powf(exponent) - bar).sum();
                let v = s.abs().powf(eta);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(RcmError::NonFinite {
                        index: i,
                        detail: format!("|Σ Δ|^{eta} overflowed; try a smaller exponent"),
                    })
                }
            })
            .collect()
    });
    rows.into_iter().collect()
}

/// Monte Carlo estimate and standard error of `E|Σ_{x∈R} Δφ(x)|^η`.
pub fn rectangle_sum_moment(
    spec: &EnvironmentSpec,
    geometry: &TorusGeometry,
    quantity: Quantity,
    exponent: f64,
    eta: f64,
    bar: f64,
    rect: &HyperRectangle,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples < 100 {
        return Err(RcmError::Precondition(format!(
            "need at least 100 samples, got {n_samples}"
        )));
    }
    let rows = replica_sums(
        spec,
        geometry,
        quantity,
        exponent,
        eta,
        bar,
        std::slice::from_ref(rect),
        n_samples,
        seed,
    )?;
    Ok(mean_stderr(&rows.iter().map(|r| r[0]).collect::<Vec<_>>()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFit {
    pub theta: f64,
    pub intercept: f64,
    pub ci: (f64, f64),
}

/// Log–log slope of estimate against `|R|`. With replica rows the interval
/// resamples replicas; otherwise it resamples fit residuals.
pub fn fit_theta(
    sizes: &[f64],
    estimates: &[f64],
    replicas: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<ThetaFit> {
    if sizes.len() < 4 {
        return Err(RcmError::Precondition(format!(
            "need at least 4 ladder sizes, got {}",
            sizes.len()
        )));
    }
    let span = sizes.iter().copied().fold(0.0, f64::max)
        / sizes.iter().copied().fold(f64::INFINITY, f64::min);
    if span < 10.0 {
        return Err(RcmError::Precondition(format!(
            "ladder spans a factor {span}, need a decade"
        )));
    }
    if estimates.iter().any(|&e| !(e > 0.0)) {
        return Err(RcmError::Precondition(
            "nonpositive estimate in ladder".into(),
        ));
    }
    let lx: Vec<f64> = sizes.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = estimates.iter().map(|e| e.ln()).collect();
    let (theta, intercept) = linear_fit(&lx, &ly);
    let mut rng = seed::rng(seed::stream_seed(seed, "theta-bootstrap"));
    let ci = match replicas {
        Some(rows) if !rows.is_empty() => bootstrap_interval(&mut rng, 500, 0.95, |rng| {
            let picks: Vec<usize> = (0..rows.len())
                .map(|_| rng.random_range(0..rows.len()))
                .collect();
            let means: Vec<f64> = (0..sizes.len())
                .map(|j| (picks.iter().map(|&i| rows[i][j]).sum::<f64>() / picks.len() as f64).ln())
                .collect();
            linear_fit(&lx, &means).0
        }),
        _ => {
            let resid: Vec<f64> = lx
                .iter()
                .zip(&ly)
                .map(|(x, y)| y - (intercept + theta * x))
                .collect();
            bootstrap_interval(&mut rng, 500, 0.95, |rng| {
                let ys: Vec<f64> = lx
                    .iter()
                    .map(|x| intercept + theta * x + resid[rng.random_range(0..resid.len())])
                    .collect();
                linear_fit(&lx, &ys).0
            })
        }
    };
    Ok(ThetaFit {
        theta,
        intercept,
        ci,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentBoundReport {
    pub quantity: Quantity,
    pub exponent: f64,
    pub eta: f64,
    pub centering: f64,
    pub sizes: Vec<usize>,
    pub estimates: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub fit: ThetaFit,
    /// `η − θ`
    pub zeta: f64,
    pub replicas: usize,
}

impl MomentBoundReport {
    /// `max/min` of `estimate / |R|^power` across the ladder.
    pub fn ratio_spread(&self, power: f64) -> f64 {
        let r: Vec<f64> = self
            .sizes
            .iter()
            .zip(&self.estimates)
            .map(|(&s, &e)| e / (s as f64).powf(power))
            .collect();
        r.iter().copied().fold(0.0, f64::max) / r.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Ladder estimates of `E|Σ_R Δφ|^η` and the fitted exponent.
pub fn moment_bound_report(
    spec: &EnvironmentSpec,
    geometry: &TorusGeometry,
    quantity: Quantity,
    exponent: f64,
    eta: f64,
    centering: f64,
    rects: &[HyperRectangle],
    n_samples: usize,
    seed: u64,
) -> Result<MomentBoundReport> {
    let rows = replica_sums(
        spec, geometry, quantity, exponent, eta, centering, rects, n_samples, seed,
    )?;
    let (mut estimates, mut stderrs) = (Vec::new(), Vec::new());
    for j in 0..rects.len() {
        let (m, s) = mean_stderr(&rows.iter().map(|r| r[j]).collect::<Vec<_>>());
        estimates.push(m);
        stderrs.push(s);
    }
    let sizes: Vec<usize> = rects.iter().map(HyperRectangle::vertex_count).collect();
    let fs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let fit = fit_theta(&fs, &estimates, Some(&rows), seed)?;
    Ok(MomentBoundReport {
        quantity,
        exponent,
        eta,
        centering,
        sizes,
        zeta: eta - fit.theta,
        estimates,
        stderrs,
        fit,
        replicas: n_samples,
    })
}

/// CSV rows `size,estimate,stderr`.
pub fn ladder_csv(report: &MomentBoundReport) -> String {
    let mut out = String::from("size,estimate,stderr\n");
    for ((s, e), se) in report
        .sizes
        .iter()
        .zip(&report.estimates)
        .zip(&report.stderrs)
    {
        out.push_str(&format!("{s},{},{}\n", fmt_f64(*e), fmt_f64(*se)));
    }
    out
}

pub fn ladder_svg(report: &MomentBoundReport) -> String {
    let pts: Vec<(f64, f64)> = report
        .sizes
        .iter()
        .zip(&report.estimates)
        .map(|(&s, &e)| ((s as f64).ln(), e.ln()))
        .collect();
    let line = Series {
        label: format!("slope {:.3}", report.fit.theta),
        points: pts
            .iter()
            .map(|&(x, _)| (x, report.fit.intercept + report.fit.theta * x))
            .collect(),
        color: "firebrick",
    };
    svg_scatter(
        "rectangle moments",
        "log |R|",
        "log estimate",
        &pts,
        &[line],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub n: usize,
    pub survival: f64,
    pub ci: (f64, f64),
}

/// Empirical `P(N₁(0) > n)` over independent fields. Fields where N₁ does not
/// stabilize within `max_window` count as exceeding every grid point.
pub fn n1_tail(
    spec: &EnvironmentSpec,
    geometry: &TorusGeometry,
    moments: &MomentSummary,
    max_window: usize,
    n_samples: usize,
    grid: &[usize],
    seed: u64,
) -> Result<Vec<SurvivalPoint>> {
    let origin = geometry.index(&vec![0; geometry.dim()]);
    let values = par::map_range(n_samples, |i| -> Result<usize> {
        let f = sample_environment(spec, *geometry, seed::child_seed(seed, i as u64))?;
        match compute_n1(&f, origin, moments, max_window) {
            Ok(n) => Ok(n),
            Err(RcmError::NotStabilized(_)) => Ok(usize::MAX),
            Err(e) => Err(e),
        }
    });
    let values: Vec<usize> = values.into_iter().collect::<Result<_>>()?;
    Ok(grid
        .iter()
        .map(|&n| {
            let k = values.iter().filter(|&&v| v > n).count();
            SurvivalPoint {
                n,
                survival: k as f64 / n_samples as f64,
                ci: wilson_interval(k, n_samples, 1.96),
            }
        })
        .collect())
}

/// Nondecreasing test functions of a few edge values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    Sum,
    Min,
    Max,
    Product,
    /// Number of edges above a fixed level.
    ThresholdCount,
}

impl TestFunction {
    fn eval(self, values: &[f64], level: f64) -> f64 {
        match self {
            Self::Sum => values.iter().sum(),
            Self::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            Self::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Self::Product => values.iter().product(),
            Self::ThresholdCount => values.iter().filter(|&&v| v > level).count() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    pub name: String,
    pub disjoint: bool,
    pub covariance: f64,
    pub stderr: f64,
    /// `None` when the environment spec certifies nothing for this pair.
    pub pass: Option<bool>,
}

/// Built-in family of `(name, f-edges, g-edges, function)`.
fn association_family(
    geometry: &TorusGeometry,
) -> Vec<(String, Vec<usize>, Vec<usize>, TestFunction)> {
    let d = geometry.dim();
    let at = |p: &[i64], axis: usize| geometry.edge_index(geometry.index(p), axis);
    let o = vec![0i64; d];
    let mut e1 = o.clone();
    e1[0] = 1;
    let mut far = o.clone();
    far[0] = 4;
    let a = vec![at(&o, 0), at(&o, 1)];
    let b = vec![at(&e1, 0), at(&e1, 1)];
    let c = vec![at(&far, 0), at(&far, 1)];
    let mut out = vec![
        (
            "variance".to_string(),
            vec![a[0]],
            vec![a[0]],
            TestFunction::Sum,
        ),
        (
            "adjacent".to_string(),
            vec![a[0]],
            vec![a[1]],
            TestFunction::Sum,
        ),
    ];
    for f in [
        TestFunction::Sum,
        TestFunction::Min,
        TestFunction::Max,
        TestFunction::Product,
        TestFunction::ThresholdCount,
    ] {
        let tag = serde_json::to_value(f)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        out.push((format!("{tag}-near"), a.clone(), b.clone(), f));
        out.push((format!("{tag}-far"), a.clone(), c.clone(), f));
    }
    out
}

/// Covariances of the built-in test pairs with verdicts against the
/// association the environment spec is certified to satisfy (3σ).
pub fn association_check(
    spec: &EnvironmentSpec,
    geometry: &TorusGeometry,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<AssociationResult>> {
    let family = association_family(geometry);
    // threshold level fixed from an independent calibration field
    let calib = sample_environment(
        spec,
        *geometry,
        seed::stream_seed(seed, "association-level"),
    )?;
    let mut sorted = calib.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let level = sorted[sorted.len() / 2];
    let rows = par::map_range(n_samples, |i| -> Result<Vec<(f64, f64)>> {
        let f = sample_environment(spec, *geometry, seed::child_seed(seed, i as u64))?;
        let vals = |edges: &[usize]| edges.iter().map(|&e| f.edge_value(e)).collect::<Vec<_>>();
        Ok(family
            .iter()
            .map(|(_, a, b, tf)| (tf.eval(&vals(a), level), tf.eval(&vals(b), level)))
            .collect())
    });
    let rows: Vec<Vec<(f64, f64)>> = rows.into_iter().collect::<Result<_>>()?;
    let assoc = spec.association();
    Ok(family
        .iter()
        .enumerate()
        .map(|(j, (name, a, b, _))| {
            let fs: Vec<f64> = rows.iter().map(|r| r[j].0).collect();
            let gs: Vec<f64> = rows.iter().map(|r| r[j].1).collect();
            let (mf, _) = mean_stderr(&fs);
            let (mg, _) = mean_stderr(&gs);
            let prods: Vec<f64> = fs
                .iter()
                .zip(&gs)
                .map(|(f, g)| (f - mf) * (g - mg))
                .collect();
            let (cov, se) = mean_stderr(&prods);
            let disjoint = a.iter().all(|e| !b.contains(e));
            let pass = match (assoc, disjoint) {
                (_, false) => Some(cov >= -3.0 * se),
                (Association::Positive, true) => Some(cov >= -3.0 * se),
                (Association::Negative, true) => Some(cov <= 3.0 * se),
                (Association::Independent, true) => Some(cov.abs() <= 3.0 * se),
                (Association::Unknown, true) => None,
            };
            AssociationResult {
                name: name.clone(),
                disjoint,
                covariance: cov,
                stderr: se,
                pass,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub distances: Vec<u64>,
    pub covariances: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Log–log slope over the distances with positive covariance.
    pub slope: Option<f64>,
}

/// `cov(μ(0), μ(r e₁))` on a distance grid, averaged over all base points of
/// independent fields.
pub fn mixing_decay(
    spec: &EnvironmentSpec,
    geometry: &TorusGeometry,
    distances: &[u64],
    n_samples: usize,
    seed: u64,
) -> Result<MixingReport> {
    let d = geometry.dim();
    let rows = par::map_range(n_samples, |i| -> Result<(f64, Vec<f64>)> {
        let f = sample_environment(spec, *geometry, seed::child_seed(seed, i as u64))?;
        let mu = f.mu_vec();
        let n = mu.len() as f64;
        let mean = mu.iter().sum::<f64>() / n;
        let prods = distances
            .iter()
            .map(|&r| {
                let mut shift = vec![0i64; d];
                shift[0] = r as i64;
                (0..mu.len())
                    .map(|v| {
                        let p: Vec<i64> = geometry
                            .point(v)
                            .iter()
                            .zip(&shift)
                            .map(|(a, b)| a + b)
                            .collect();
                        mu[v] * mu[geometry.index(&p)]
                    })
                    .sum::<f64>()
                    / n
            })
            .collect();
        Ok((mean, prods))
    });
    let rows: Vec<(f64, Vec<f64>)> = rows.into_iter().collect::<Result<_>>()?;
    let grand = rows.iter().map(|r| r.0).sum::<f64>() / rows.len() as f64;
    let (mut covariances, mut stderrs) = (Vec::new(), Vec::new());
    for j in 0..distances.len() {
        let per: Vec<f64> = rows.iter().map(|r| r.1[j] - grand * grand).collect();
        let (m, s) = mean_stderr(&per);
        covariances.push(m);
        stderrs.push(s);
    }
    let pos: Vec<(f64, f64)> = distances
        .iter()
        .zip(&covariances)
        .filter(|(&r, &c)| r > 0 && c > 0.0)
        .map(|(&r, &c)| ((r as f64).ln(), c.ln()))
        .collect();
    let slope = (pos.len() >= 2).then(|| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pos.into_iter().unzip();
        linear_fit(&xs, &ys).0
    });
    Ok(MixingReport {
        distances: distances.to_vec(),
        covariances,
        stderrs,
        slope,
    })
}
