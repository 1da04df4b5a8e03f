//! Chaining lower bound: a path of small balls from the origin to `x`,
//! near-diagonal Harnack steps along it, and the sum conditions that control
//! the number of bad balls.

use serde::{Deserialize, Serialize};

use crate::environment::{avg_norm, ConductanceField};
use crate::error::{RcmError, Result};
use crate::kernel::{heat_kernel_times, JumpKernel, WrapPolicy};
use crate::lattice::{corner_points, l1_norm, TorusGeometry};
use crate::par;

/// Geometry of one chain from the origin to `x` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainingPlan {
    pub x: Vec<i64>,
    /// `D = |x|`
    pub length: u64,
    pub t: f64,
    /// `r = t / D`
    pub r: f64,
    pub k: usize,
    /// `s = t / k`
    pub s: f64,
    /// Points at arclength `j D / k` along the segment path.
    pub waypoints: Vec<Vec<f64>>,
    /// Nearest lattice point to each waypoint.
    pub anchors: Vec<Vec<i64>>,
    pub ball_radius: f64,
    pub corners: Vec<Vec<i64>>,
}

/// Point at arclength `a` along the segment path through `corners`.
fn path_point(corners: &[Vec<i64>], a: f64) -> Vec<f64> {
    let mut left = a;
    for w in corners.windows(2) {
        let seg = l1_norm(
            &w[1]
                .iter()
                .zip(&w[0])
                .map(|(p, q)| p - q)
                .collect::<Vec<_>>(),
        ) as f64;
        if left <= seg && seg > 0.0 {
            let frac = left / seg;
            return w[0]
                .iter()
                .zip(&w[1])
                .map(|(&p, &q)| p as f64 + frac * (q - p) as f64)
                .collect();
        }
        left -= seg;
    }
    corners
        .last()
        .expect("at least one corner")
        .iter()
        .map(|&c| c as f64)
        .collect()
}

/// Chain plan with `r = t/D` and `k = ⌈12D/r⌉` equal steps of length `D/k <= r/12`.
pub fn build_chain(x: &[i64], t: f64) -> Result<ChainingPlan> {
    let length = l1_norm(x);
    if length == 0 {
        return Err(RcmError::DegenerateChain);
    }
    let dd = length as f64;
    let ratio = dd * dd / t;
    if !(ratio > 0.25) {
        return Err(RcmError::UseNearDiagonal { ratio });
    }
    if t < dd {
        return Err(RcmError::Precondition(format!(
            "need t >= |x| so that r >= 1, got t = {t}, |x| = {length}"
        )));
    }
    let r = t / dd;
    let k = ((12.0 * dd / r) - 1e-9).ceil().max(3.0) as usize;
    let s = t / k as f64;
    let corners = corner_points(x);
    let waypoints: Vec<Vec<f64>> = (0..=k)
        .map(|j| path_point(&corners, dd * j as f64 / k as f64))
        .collect();
    let anchors = waypoints
        .iter()
        .map(|z| z.iter().map(|c| c.round() as i64).collect())
        .collect();
    Ok(ChainingPlan {
        x: x.to_vec(),
        length,
        t,
        r,
        k,
        s,
        waypoints,
        anchors,
        ball_radius: r / 48.0,
        corners,
    })
}

impl ChainingPlan {
    /// Lattice points of `B_j`, falling back to the anchor when the ball
    /// around the real waypoint holds no lattice point.
    pub fn ball(&self, geometry: &TorusGeometry, j: usize) -> Result<Vec<usize>> {
        if j == 0 {
            return Ok(vec![geometry.index(&vec![0; self.x.len()])]);
        }
        if j == self.k {
            return Ok(vec![geometry.index(&self.x)]);
        }
        let b = geometry.ball_real(&self.waypoints[j], self.ball_radius)?;
        Ok(if b.is_empty() {
            vec![geometry.index(&self.anchors[j])]
        } else {
            b
        })
    }

    /// Largest number of waypoints inside any `B(z_j, r)`.
    pub fn multiplicity(&self) -> usize {
        self.waypoints
            .iter()
            .map(|z| {
                self.waypoints
                    .iter()
                    .filter(|w| dist_real(z, w) < self.r)
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    /// Largest gap between consecutive waypoints.
    pub fn max_gap(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| dist_real(&w[0], &w[1]))
            .fold(0.0, f64::max)
    }
}

fn dist_real(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum()
}

/// Constants of the near-diagonal Harnack bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackConstants {
    pub c14: f64,
    pub c: f64,
    pub kappa: f64,
    pub p: f64,
    pub q: f64,
}

impl Default for HarnackConstants {
    fn default() -> Self {
        Self {
            c14: 1.0,
            c: 1.0,
            kappa: 1.0,
            p: 2.0,
            q: 2.0,
        }
    }
}

/// `C_PH = c · exp(c (1 ∨ ‖μ‖)^κ (1 ∨ ‖ν‖)^κ)`
pub fn c_ph(norm_mu: f64, norm_nu: f64, c: f64, kappa: f64) -> f64 {
    c * (c * norm_mu.max(1.0).powf(kappa) * norm_nu.max(1.0).powf(kappa)).exp()
}

/// `(‖μ‖_{p,B(y,ρ)}, ‖ν‖_{q,B(y,ρ)})`
pub fn ball_norms(
    field: &ConductanceField,
    y: usize,
    radius: f64,
    p: f64,
    q: f64,
) -> Result<(f64, f64)> {
    let g = field.geometry();
    let ball = g.ball(&g.point(y), radius)?;
    let m = avg_norm(ball.iter().map(|&v| field.mu(v)), p)?;
    let n = avg_norm(ball.iter().map(|&v| field.nu(v)), q)?;
    Ok((m, n))
}

/// `C_PH` with norms taken over `B(y, √t)`.
pub fn c_ph_at(
    field: &ConductanceField,
    y: usize,
    t: f64,
    consts: &HarnackConstants,
) -> Result<f64> {
    let (m, n) = ball_norms(field, y, t.sqrt(), consts.p, consts.q)?;
    Ok(c_ph(m, n, consts.c, consts.kappa))
}

/// `(c₁₄ / C_PH) t^{−d/2}`, a lower bound for `p(t, x₁, x₂)` when `x₂ ∈ B(x₁, √t/2)`.
pub fn harnack_lower(
    field: &ConductanceField,
    t: f64,
    x1: usize,
    x2: usize,
    consts: &HarnackConstants,
) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(RcmError::Precondition(format!("need t >= 1, got {t}")));
    }
    let g = field.geometry();
    let dist = g.distance(x1, x2) as f64;
    if dist >= t.sqrt() / 2.0 {
        return Err(RcmError::Precondition(format!(
            "target at distance {dist} outside B(x1, √t/2)"
        )));
    }
    let cph = c_ph_at(field, x1, t, consts)?;
    Ok(consts.c14 / cph * t.powf(-(g.dim() as f64) / 2.0))
}

/// How the intermediate points `y_j ∈ B_j` are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaypointChoice {
    /// The first lattice point of each ball (the anchor when the ball is a single point).
    Default,
    /// Per ball, the point maximizing the summand.
    Adversarial,
    /// Explicit vertex indices for `j = 1..k−1`.
    Explicit(Vec<usize>),
}

/// Summand `(1 ∨ ‖μ‖_{p,B(y,√s)})^κ (1 ∨ ‖ν‖_{q,B(y,√s)})^κ`.
fn chain_term(
    field: &ConductanceField,
    y: usize,
    s: f64,
    consts: &HarnackConstants,
) -> Result<f64> {
    let (m, n) = ball_norms(field, y, s.sqrt(), consts.p, consts.q)?;
    Ok(m.max(1.0).powf(consts.kappa) * n.max(1.0).powf(consts.kappa))
}

/// `Σ_{j<k} (1 ∨ ‖μ‖_{p,B(y_j,√s)})^κ (1 ∨ ‖ν‖_{q,B(y_j,√s)})^κ`
pub fn chain_sum(
    field: &ConductanceField,
    plan: &ChainingPlan,
    consts: &HarnackConstants,
    choice: &WaypointChoice,
) -> Result<f64> {
    let g = field.geometry();
    if let WaypointChoice::Explicit(ys) = choice {
        if ys.len() + 1 != plan.k {
            return Err(RcmError::Precondition(format!(
                "expected {} explicit waypoints, got {}",
                plan.k - 1,
                ys.len()
            )));
        }
    }
    let terms = par::map_range(plan.k, |j| -> Result<f64> {
        let ball = plan.ball(g, j)?;
        match choice {
            WaypointChoice::Default => chain_term(field, ball[0], plan.s, consts),
            WaypointChoice::Adversarial => {
                let mut best: f64 = 0.0;
                for &y in &ball {
                    best = best.max(chain_term(field, y, plan.s, consts)?);
                }
                Ok(best)
            }
            WaypointChoice::Explicit(ys) => {
                let y = if j == 0 { ball[0] } else { ys[j - 1] };
                if !ball.contains(&y) {
                    return Err(RcmError::Precondition(format!(
                        "waypoint {j} outside its ball"
                    )));
                }
                chain_term(field, y, plan.s, consts)
            }
        }
    });
    terms.into_iter().sum()
}

/// Smallest grid radius from which `chain_sum <= budget · k` holds at every
/// larger grid radius, for every target and both waypoint choices.
pub fn estimate_n3(
    field: &ConductanceField,
    consts: &HarnackConstants,
    budget: f64,
    targets: &[Vec<i64>],
    r_grid: &[f64],
) -> Result<f64> {
    let mut grid = r_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut holds = Vec::with_capacity(grid.len());
    for &r in &grid {
        let mut ok = true;
        for x in targets {
            let dd = l1_norm(x) as f64;
            let plan = match build_chain(x, r * dd) {
                Ok(plan) => plan,
                Err(RcmError::UseNearDiagonal { .. }) | Err(RcmError::Precondition(_)) => continue,
                Err(e) => return Err(e),
            };
            for choice in [WaypointChoice::Default, WaypointChoice::Adversarial] {
                if chain_sum(field, &plan, consts, &choice)?
                    > budget * plan.k as f64 * (1.0 + 1e-12)
                {
                    ok = false;
                }
            }
        }
        holds.push(ok);
    }
    let mut answer = None;
    for (i, &r) in grid.iter().enumerate().rev() {
        if !holds[i] {
            break;
        }
        answer = Some(r);
    }
    answer.ok_or(RcmError::ExceedsGrid(
        grid.last().copied().unwrap_or(f64::NAN),
    ))
}

/// One Harnack step `y → y'` compared with the true heat kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCheck {
    pub j: usize,
    pub from: usize,
    pub to: usize,
    pub heat_kernel: f64,
    pub harnack: f64,
    /// Whether `to` lies in `B(from, √s/2)`.
    pub in_half_ball: bool,
}

/// Heat kernel `p(s, y, y')` for every consecutive pair of ball points,
/// alongside the Harnack value for the given constants.
pub fn check_steps(
    kernel: &JumpKernel,
    field: &ConductanceField,
    plan: &ChainingPlan,
    consts: &HarnackConstants,
    tol: f64,
) -> Result<Vec<StepCheck>> {
    let g = field.geometry();
    let half_d = g.dim() as f64 / 2.0;
    let balls: Vec<Vec<usize>> = (0..=plan.k)
        .map(|j| plan.ball(g, j))
        .collect::<Result<_>>()?;
    let per_step = par::map_range(plan.k, |j| -> Result<Vec<StepCheck>> {
        let mut out = Vec::new();
        for &y in &balls[j] {
            let slice = heat_kernel_times(kernel, y, &[plan.s], tol, WrapPolicy::Report)?
                .pop()
                .expect("one time");
            let harnack = consts.c14 / c_ph_at(field, y, plan.s, consts)? * plan.s.powf(-half_d);
            for &y2 in &balls[j + 1] {
                let in_half_ball = (g.distance(y, y2) as f64) < plan.s.sqrt() / 2.0;
                out.push(StepCheck {
                    j,
                    from: y,
                    to: y2,
                    heat_kernel: slice.hk[y2],
                    harnack,
                    in_half_ball,
                });
            }
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for r in per_step {
        all.extend(r?);
    }
    Ok(all)
}

/// Largest `c₁₄` (at fixed `c`, `κ`) making every step bound true.
pub fn calibrate_c14(steps: &[StepCheck], consts: &HarnackConstants) -> f64 {
    steps
        .iter()
        .map(|s| s.heat_kernel / s.harnack * consts.c14)
        .fold(f64::INFINITY, f64::min)
}

/// Assembled chained lower bound with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainedBound {
    pub plan_k: usize,
    pub s: f64,
    pub r: f64,
    pub constants: HarnackConstants,
    /// Per-step factors: `h(0)` then `Σ_{y∈B_j} μ(y) h(y)` for `j >= 1`,
    /// with `h(y) = (c₁₄/C_PH(y)) s^{−d/2}`.
    pub step_factors: Vec<f64>,
    /// Lower bound on `p(t, 0, x)` from summing over all paths through the balls.
    pub value: f64,
    /// Product form `∏_j min_{B_j} h · ∏_{j>=1} |B_j| ‖μ‖_{1,B_j}`, never above `value`.
    pub product_form: f64,
    pub ball_sizes: Vec<usize>,
    /// `‖μ‖_{1,B_j}` and `‖ν‖_{1,B_j}` for `j = 1..k−1`.
    pub ball_mu: Vec<f64>,
    pub ball_nu: Vec<f64>,
    pub geometric_mean: f64,
    pub harmonic_mean: f64,
    /// `(k−1) / Σ ‖ν‖_{1,B_j}`
    pub nu_harmonic: f64,
    pub half_ball_ok: bool,
}

impl ChainedBound {
    pub fn harmonic_geometric_holds(&self) -> bool {
        let eps = 1e-12 * self.geometric_mean.abs().max(1.0);
        self.geometric_mean + eps >= self.harmonic_mean
            && self.geometric_mean + eps >= self.nu_harmonic
    }
}

/// Lower bound on `p(t, 0, x)` assembled from per-step Harnack bounds via the
/// Markov property. Each intermediate position ranges over its ball, so the
/// path sum factorizes into one factor per step.
pub fn chained_lower_bound(
    field: &ConductanceField,
    t: f64,
    x: &[i64],
    consts: &HarnackConstants,
) -> Result<ChainedBound> {
    let plan = build_chain(x, t)?;
    let g = field.geometry();
    let half_d = g.dim() as f64 / 2.0;
    let balls: Vec<Vec<usize>> = (0..=plan.k)
        .map(|j| plan.ball(g, j))
        .collect::<Result<_>>()?;
    let h_of = |y: usize| -> Result<f64> {
        Ok(consts.c14 / c_ph_at(field, y, plan.s, consts)? * plan.s.powf(-half_d))
    };
    let per_ball = par::map_range(plan.k, |j| -> Result<(f64, f64)> {
        let mut sum = 0.0;
        let mut hmin = f64::INFINITY;
        for &y in &balls[j] {
            let h = h_of(y)?;
            hmin = hmin.min(h);
            sum += if j == 0 { h } else { field.mu(y) * h };
        }
        Ok((sum, hmin))
    });
    let mut step_factors = Vec::with_capacity(plan.k);
    let mut hmins = Vec::with_capacity(plan.k);
    for r in per_ball {
        let (f, h) = r?;
        step_factors.push(f);
        hmins.push(h);
    }
    let mut ball_mu = Vec::new();
    let mut ball_nu = Vec::new();
    for b in &balls[1..plan.k] {
        ball_mu.push(avg_norm(b.iter().map(|&v| field.mu(v)), 1.0)?);
        ball_nu.push(avg_norm(b.iter().map(|&v| field.nu(v)), 1.0)?);
    }
    // work in logs: the product of many small factors underflows quickly
    let value = step_factors.iter().map(|f| f.ln()).sum::<f64>().exp();
    let log_product = hmins.iter().map(|h| h.ln()).sum::<f64>()
        + balls[1..plan.k]
            .iter()
            .zip(&ball_mu)
            .map(|(b, m)| (b.len() as f64 * m).ln())
            .sum::<f64>();
    let m = ball_mu.len() as f64;
    let geometric_mean = (ball_mu.iter().map(|v| v.ln()).sum::<f64>() / m).exp();
    let harmonic_mean = m / ball_mu.iter().map(|v| v.recip()).sum::<f64>();
    let nu_harmonic = m / ball_nu.iter().sum::<f64>();
    let half_ball_ok = (0..plan.k).all(|j| {
        balls[j].iter().all(|&y| {
            balls[j + 1]
                .iter()
                .all(|&y2| (g.distance(y, y2) as f64) < plan.s.sqrt() / 2.0)
        })
    });
    Ok(ChainedBound {
        plan_k: plan.k,
        s: plan.s,
        r: plan.r,
        constants: *consts,
        step_factors,
        value,
        product_form: log_product.exp(),
        ball_sizes: balls.iter().map(Vec::len).collect(),
        ball_mu,
        ball_nu,
        geometric_mean,
        harmonic_mean,
        nu_harmonic,
        half_ball_ok,
    })
}

/// Distance from each waypoint to the segment path, for invariant checks.
pub fn off_path_distance(plan: &ChainingPlan) -> f64 {
    plan.waypoints
        .iter()
        .map(|z| {
            plan.corners
                .windows(2)
                .map(|w| {
                    let lo: Vec<f64> = w[0]
                        .iter()
                        .zip(&w[1])
                        .map(|(&a, &b)| a.min(b) as f64)
                        .collect();
                    let hi: Vec<f64> = w[0]
                        .iter()
                        .zip(&w[1])
                        .map(|(&a, &b)| a.max(b) as f64)
                        .collect();
                    z.iter()
                        .zip(lo.iter().zip(&hi))
                        .map(|(&c, (&l, &h))| (l - c).max(c - h).max(0.0))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// CSV of per-ball norms: `j,size,mu_1,nu_1`.
pub fn ball_norms_csv(bound: &ChainedBound) -> String {
    let mut out = String::from("j,size,mu_1,nu_1\n");
    for (i, (m, n)) in bound.ball_mu.iter().zip(&bound.ball_nu).enumerate() {
        out.push_str(&format!(
            "{},{},{:?},{:?}\n",
            i + 1,
            bound.ball_sizes[i + 1],
            m,
            n
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, EnvironmentSpec};

    fn constant(d: usize, l: usize) -> ConductanceField {
        ConductanceField::constant(TorusGeometry::new(d, l).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn plan_arithmetic() {
        let plan = build_chain(&[8, 0], 32.0).unwrap();
        assert_eq!((plan.length, plan.r), (8, 4.0));
        assert!((24..=32).contains(&plan.k));
        assert!(plan.s >= 1.0 - 1e-12 && plan.s <= 4.0 / 3.0 + 1e-12);
        assert!((plan.k as f64 * plan.s - plan.t).abs() < 1e-9);
        assert!(plan.max_gap() <= plan.r / 12.0 + 1e-12);
        assert_eq!(plan.waypoints[0], vec![0.0, 0.0]);
        assert_eq!(plan.waypoints[plan.k], vec![8.0, 0.0]);
    }

    #[test]
    fn plan_along_second_axis() {
        let plan = build_chain(&[0, 8], 32.0).unwrap();
        assert_eq!(plan.corners[1], vec![0, 0]);
        assert!(plan.waypoints.iter().all(|z| z[0] == 0.0));
        assert!(off_path_distance(&plan) < 1e-12);
    }

    #[test]
    fn case_one_signals() {
        assert!(matches!(
            build_chain(&[2, 0], 16.0),
            Err(RcmError::UseNearDiagonal { .. })
        ));
        assert!(matches!(
            build_chain(&[0, 0], 4.0),
            Err(RcmError::DegenerateChain)
        ));
    }

    #[test]
    fn c_ph_values() {
        assert!((c_ph(0.5, 1.0, 1.0, 1.0) - std::f64::consts::E).abs() < 1e-15);
        assert!((c_ph(4.0, 4.0, 1.0, 1.0) - 16f64.exp()).abs() < 1e-6);
        assert!(c_ph(5.0, 4.0, 1.0, 1.0) >= c_ph(4.0, 4.0, 1.0, 1.0));
    }

    #[test]
    fn harnack_constant_field() {
        let f = constant(2, 16);
        let consts = HarnackConstants {
            c14: 2.0,
            ..Default::default()
        };
        let v = harnack_lower(&f, 4.0, 0, 0, &consts).unwrap();
        assert!((v - 2.0 / c_ph(4.0, 4.0, 1.0, 1.0) / 4.0).abs() < 1e-18);
        assert!(harnack_lower(&f, 0.5, 0, 0, &consts).is_err());
        assert!(harnack_lower(&f, 4.0, 0, 2, &consts).is_err());
    }

    #[test]
    fn chain_sum_constant_and_elliptic() {
        let f = constant(2, 64);
        let plan = build_chain(&[8, 0], 32.0).unwrap();
        let consts = HarnackConstants::default();
        let s = chain_sum(&f, &plan, &consts, &WaypointChoice::Default).unwrap();
        assert!((s - 16.0 * plan.k as f64).abs() < 1e-9);
        assert_eq!(
            estimate_n3(&f, &consts, 16.0, &[vec![8, 0]], &[2.0, 4.0, 8.0]).unwrap(),
            2.0
        );
        assert!(matches!(
            estimate_n3(&f, &consts, 15.0, &[vec![8, 0]], &[2.0, 4.0, 8.0]),
            Err(RcmError::ExceedsGrid(_))
        ));
        let g = TorusGeometry::new(2, 64).unwrap();
        let e = sample_environment(
            &EnvironmentSpec::UniformEllipticIid {
                lower: 0.5,
                upper: 2.0,
            },
            g,
            5,
        )
        .unwrap();
        assert_eq!(
            estimate_n3(
                &e,
                &consts,
                64.0,
                &[vec![8, 0], vec![5, 6]],
                &[2.0, 4.0, 8.0]
            )
            .unwrap(),
            2.0
        );
        let adv = chain_sum(&e, &plan, &consts, &WaypointChoice::Adversarial).unwrap();
        assert!(adv / plan.k as f64 <= 64.0);
    }

    #[test]
    fn chained_bound_below_heat_kernel() {
        let f = constant(2, 64);
        let k = JumpKernel::new(&f).unwrap();
        let plan = build_chain(&[8, 0], 32.0).unwrap();
        let base = HarnackConstants::default();
        let steps = check_steps(&k, &f, &plan, &base, 1e-12).unwrap();
        let c14 = calibrate_c14(&steps, &base);
        let consts = HarnackConstants { c14, ..base };
        let bound = chained_lower_bound(&f, 32.0, &[8, 0], &consts).unwrap();
        let g = f.geometry();
        let truth = crate::kernel::heat_kernel_with(&k, 32.0, 0, 1e-12, WrapPolicy::Report)
            .unwrap()
            .hk[g.index(&[8, 0])];
        assert!(bound.value <= truth, "{} vs {truth}", bound.value);
        assert!(bound.product_form <= bound.value * (1.0 + 1e-9));
        assert!(bound.harmonic_geometric_holds());
    }

    #[test]
    fn log_affine_in_k_on_constant_field() {
        let f = constant(2, 64);
        let consts = HarnackConstants::default();
        let b = chained_lower_bound(&f, 32.0, &[8, 0], &consts).unwrap();
        // identical interior factors: each is μ · h with μ = 4
        let inner = &b.step_factors[1..];
        assert!(inner
            .iter()
            .all(|v| (v - inner[0]).abs() <= 1e-12 * inner[0]));
    }

    #[test]
    fn multiplicity_is_bounded() {
        let mut worst = 0;
        for x in [[8i64, 0], [5, 6], [12, 3], [20, 20]] {
            let d = l1_norm(&x) as f64;
            for r in [1.0, 2.0, 4.0] {
                if let Ok(plan) = build_chain(&x, r * d) {
                    worst = worst.max(plan.multiplicity());
                }
            }
        }
        assert!(worst <= 25, "{worst}");
    }
}
