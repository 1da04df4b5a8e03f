use serde::{Deserialize, Serialize};

use crate::error::{RcmError, Result};
use crate::lattice::TorusGeometry;

/// Marginal law of a single conductance for the i.i.d. kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Marginal {
    Uniform {
        lower: f64,
        upper: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    /// `ω = U^{1/exponent}` on (0, 1]: `P(ω < ε) = ε^exponent`, fat tail at zero.
    PowerLaw {
        exponent: f64,
    },
}

/// Positive increasing map applied to a smoothed or Gaussian input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Link {
    /// `v ↦ exp(beta · v)`
    Exp { beta: f64 },
    /// `v ↦ lower + (upper − lower) · v`, for inputs in [0, 1]
    Affine { lower: f64, upper: f64 },
}

impl Link {
    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            Link::Exp { beta } => (beta * v).exp(),
            Link::Affine { lower, upper } => lower + (upper - lower) * v,
        }
    }

    fn validate(&self, bounded_input: bool) -> Result<()> {
        match *self {
            Link::Exp { beta } if beta > 0.0 && beta.is_finite() => Ok(()),
            Link::Affine { lower, upper }
                if bounded_input && lower > 0.0 && upper >= lower && upper.is_finite() =>
            {
                Ok(())
            }
            other => Err(RcmError::Spec(format!(
                "link {other:?} is not positive and increasing here"
            ))),
        }
    }
}

/// Association property a sampler is certified to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Association {
    /// Independent edges: both FKG and negative association hold.
    Independent,
    Positive,
    Negative,
    Unknown,
}

/// Law of a conductance field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Constant {
        level: f64,
    },
    /// i.i.d. Uniform[lower, upper] with `0 < lower <= upper`.
    UniformEllipticIid {
        lower: f64,
        upper: f64,
    },
    Iid {
        marginal: Marginal,
    },
    /// Per-vertex uniforms averaged over an ℓ¹ window, linked, then averaged
    /// over edge endpoints. Edges at base points ℓ¹-distance `>= range` apart
    /// are independent.
    FiniteRange {
        range: usize,
        link: Link,
    },
    /// `ω({x,y}) = exp(beta (φ(x) + φ(y)))` with φ the centered Gaussian field
    /// of covariance `(−Δ + mass²)^{-1}` on the torus.
    GaussianFkg {
        mass: f64,
        beta: f64,
    },
    /// Edges grouped into cubic blocks of side `block`; each block receives a
    /// uniformly random permutation of the evenly spaced values in
    /// `[lower, upper]`.
    NaPermutation {
        block: usize,
        lower: f64,
        upper: f64,
    },
}

impl EnvironmentSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::UniformEllipticIid { .. } => "uniform-elliptic-iid",
            Self::Iid { .. } => "iid",
            Self::FiniteRange { .. } => "finite-range",
            Self::GaussianFkg { .. } => "gaussian-fkg",
            Self::NaPermutation { .. } => "na-permutation",
        }
    }

    pub fn validate(&self, geometry: &TorusGeometry) -> Result<()> {
        let bad = |msg: String| Err(RcmError::Spec(msg));
        match *self {
            Self::Constant { level } => {
                if !(level > 0.0 && level.is_finite()) {
                    return bad(format!("constant level must be positive, got {level}"));
                }
            }
            Self::UniformEllipticIid { lower, upper } => {
                if !(lower > 0.0 && upper >= lower && upper.is_finite()) {
                    return bad(format!(
                        "elliptic bounds need 0 < a <= b, got [{lower}, {upper}]"
                    ));
                }
            }
            Self::Iid { marginal } => match marginal {
                Marginal::Uniform { lower, upper }
                    if lower > 0.0 && upper >= lower && upper.is_finite() => {}
                Marginal::LogNormal { mu, sigma }
                    if mu.is_finite() && sigma >= 0.0 && sigma.is_finite() => {}
                Marginal::Gamma { shape, scale } if shape > 0.0 && scale > 0.0 => {}
                Marginal::PowerLaw { exponent } if exponent > 0.0 && exponent.is_finite() => {}
                m => return bad(format!("invalid marginal {m:?}")),
            },
            Self::FiniteRange { range, link } => {
                if range < 3 {
                    return bad(format!("finite range must be >= 3 (edges sharing a vertex are dependent), got {range}"));
                }
                if geometry.side() < 2 * range {
                    return bad(format!(
                        "torus side {} too small for finite range {range} (need L >= 2R)",
                        geometry.side()
                    ));
                }
                link.validate(true)?;
            }
            Self::GaussianFkg { mass, beta } => {
                if !(mass > 0.0 && mass.is_finite()) {
                    return bad(format!("mass must be positive, got {mass}"));
                }
                Link::Exp { beta }.validate(false)?;
            }
            Self::NaPermutation {
                block,
                lower,
                upper,
            } => {
                if block == 0 || !geometry.side().is_multiple_of(block) {
                    return bad(format!(
                        "block side {block} must divide torus side {}",
                        geometry.side()
                    ));
                }
                if !(lower > 0.0 && upper >= lower && upper.is_finite()) {
                    return bad(format!(
                        "permutation values need 0 < lower <= upper, got [{lower}, {upper}]"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Association property certified by construction.
    pub fn association(&self) -> Association {
        match self {
            Self::Constant { .. } | Self::UniformEllipticIid { .. } | Self::Iid { .. } => {
                Association::Independent
            }
            // increasing maps of independent inputs are associated
            Self::FiniteRange { .. } | Self::GaussianFkg { .. } => Association::Positive,
            Self::NaPermutation { .. } => Association::Negative,
        }
    }

    /// Dependence range in the sense of base-point ℓ¹ distance, when finite.
    pub fn dependence_range(&self) -> Option<usize> {
        match *self {
            Self::Constant { .. } | Self::UniformEllipticIid { .. } | Self::Iid { .. } => Some(2),
            Self::FiniteRange { range, .. } => Some(range),
            Self::GaussianFkg { .. } => None,
            Self::NaPermutation { .. } => None,
        }
    }

    /// Radius of the inclusive ℓ¹ smoothing window for the finite-range kind.
    ///
    /// Edges at `x` read vertex inputs within `h + 1` of `x`, so independence
    /// at base distance `R` needs `2(h + 1) < R`.
    pub fn smoothing_radius(range: usize) -> usize {
        range.saturating_sub(3) / 2
    }

    /// Exact `(E[μ(0)^p], E[ν(0)^q])` when available in closed form: constant
    /// fields, and i.i.d. uniform marginals with integer exponents.
    pub fn exact_moments(&self, d: usize, p: f64, q: f64) -> Option<(f64, f64)> {
        let two_d = 2 * d;
        match *self {
            Self::Constant { level } => Some((
                (two_d as f64 * level).powf(p),
                (two_d as f64 / level).powf(q),
            )),
            Self::UniformEllipticIid { lower, upper }
            | Self::Iid {
                marginal: Marginal::Uniform { lower, upper },
            } => {
                let pi = integer_exponent(p)?;
                let qi = integer_exponent(q)?;
                let raw_mu: Vec<f64> = (0..=pi)
                    .map(|k| uniform_raw_moment(lower, upper, k as i32))
                    .collect();
                let raw_nu: Vec<f64> = (0..=qi)
                    .map(|k| uniform_raw_moment(lower, upper, -(k as i32)))
                    .collect();
                Some((
                    sum_power_moment(&raw_mu, two_d, pi),
                    sum_power_moment(&raw_nu, two_d, qi),
                ))
            }
            _ => None,
        }
    }
}

fn integer_exponent(p: f64) -> Option<usize> {
    (p >= 0.0 && p.fract() == 0.0 && p <= 64.0).then_some(p as usize)
}

/// `E[X^k]` for `X ~ Uniform[a, b]`, any integer `k` (negative allowed).
fn uniform_raw_moment(a: f64, b: f64, k: i32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if b == a {
        return a.powi(k);
    }
    if k == -1 {
        return (b / a).ln() / (b - a);
    }
    let k1 = f64::from(k + 1);
    (b.powf(k1) - a.powf(k1)) / (k1 * (b - a))
}

/// `E[(X_1 + ... + X_n)^p]` for i.i.d. `X_i` with raw moments `raw[0..=p]`.
fn sum_power_moment(raw: &[f64], n: usize, p: usize) -> f64 {
    // moments of the partial sum, built up one summand at a time
    let mut acc = vec![0.0; p + 1];
    acc[0] = 1.0;
    for _ in 0..n {
        let mut next = vec![0.0; p + 1];
        for (m, slot) in next.iter_mut().enumerate() {
            let mut binom = 1.0;
            for j in 0..=m {
                *slot += binom * acc[j] * raw[m - j];
                binom = binom * (m - j) as f64 / (j + 1) as f64;
            }
        }
        acc = next;
    }
    acc[p]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_moments_match_hand_values() {
        let spec = EnvironmentSpec::Iid {
            marginal: Marginal::Uniform {
                lower: 1.0,
                upper: 2.0,
            },
        };
        let (m1, _) = spec.exact_moments(2, 1.0, 1.0).unwrap();
        assert!((m1 - 6.0).abs() < 1e-12);
        let c = EnvironmentSpec::Constant { level: 1.0 };
        assert_eq!(c.exact_moments(2, 3.0, 1.0).unwrap(), (64.0, 4.0));
        // E[(X+Y)^2] for X,Y ~ U[0.5,2]: 2 E X^2 + 2 (E X)^2
        let e = EnvironmentSpec::UniformEllipticIid {
            lower: 0.5,
            upper: 2.0,
        };
        let ex = 1.25;
        let ex2 = (8.0 - 0.125) / (3.0 * 1.5);
        let (m2, n1) = e.exact_moments(1, 2.0, 1.0).unwrap();
        assert!((m2 - (2.0 * ex2 + 2.0 * ex * ex)).abs() < 1e-12);
        assert!((n1 - 2.0 * 4f64.ln() / 1.5).abs() < 1e-12);
        assert!(e.exact_moments(2, 1.5, 1.0).is_none());
    }

    #[test]
    fn smoothing_radius_keeps_range() {
        for range in 3..12 {
            let h = EnvironmentSpec::smoothing_radius(range);
            assert!(2 * (h + 1) < range, "range {range} h {h}");
        }
    }

    #[test]
    fn validation() {
        let g = TorusGeometry::new(2, 8).unwrap();
        assert!(EnvironmentSpec::FiniteRange {
            range: 5,
            link: Link::Exp { beta: 1.0 }
        }
        .validate(&g)
        .is_err());
        assert!(EnvironmentSpec::FiniteRange {
            range: 4,
            link: Link::Exp { beta: 1.0 }
        }
        .validate(&g)
        .is_ok());
        assert!(EnvironmentSpec::NaPermutation {
            block: 3,
            lower: 1.0,
            upper: 2.0
        }
        .validate(&g)
        .is_err());
        assert!(EnvironmentSpec::UniformEllipticIid {
            lower: 0.0,
            upper: 2.0
        }
        .validate(&g)
        .is_err());
    }

    #[test]
    fn json_shape() {
        let s = EnvironmentSpec::UniformEllipticIid {
            lower: 0.5,
            upper: 2.0,
        };
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(
            j,
            r#"{"kind":"uniform-elliptic-iid","lower":0.5,"upper":2.0}"#
        );
        assert!(
            serde_json::from_str::<EnvironmentSpec>(r#"{"kind":"constant","level":1,"x":2}"#)
                .is_err()
        );
    }
}
