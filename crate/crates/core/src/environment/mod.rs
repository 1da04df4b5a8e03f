//! Random conductance fields on a torus and the per-vertex quantities built
//! from them: μ(x) = Σ_{y~x} ω(x,y), ν(x) = Σ_{y~x} 1/ω(x,y), shifts and
//! space-averaged norms.

mod gaussian;
pub mod io;
mod sampler;
mod spec;

pub use sampler::sample_environment;
pub use spec::{Association, EnvironmentSpec, Link, Marginal};

use serde::{Deserialize, Serialize};

use crate::error::{RcmError, Result};
use crate::lattice::TorusGeometry;
use crate::par;
use crate::seed;
use crate::stats::mean_stderr;

/// Which vertex quantity an average or moment refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Mu,
    Nu,
}

/// Positive symmetric edge weights on a torus, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceField {
    geometry: TorusGeometry,
    values: Vec<f64>,
    spec: EnvironmentSpec,
    seed: u64,
}

impl ConductanceField {
    /// Wrap raw edge values (indexed by [`TorusGeometry::edge_index`]).
    pub fn from_values(
        geometry: TorusGeometry,
        values: Vec<f64>,
        spec: EnvironmentSpec,
        seed: u64,
    ) -> Result<Self> {
        if values.len() != geometry.edge_count() {
            return Err(RcmError::Spec(format!(
                "expected {} edge values, got {}",
                geometry.edge_count(),
                values.len()
            )));
        }
        if let Some((e, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(RcmError::Spec(format!(
                "edge {e} has non-positive or non-finite value {v}"
            )));
        }
        Ok(Self {
            geometry,
            values,
            spec,
            seed,
        })
    }

    /// Constant field with every conductance equal to `level`.
    pub fn constant(geometry: TorusGeometry, level: f64) -> Result<Self> {
        Self::from_values(
            geometry,
            vec![level; geometry.edge_count()],
            EnvironmentSpec::Constant { level },
            0,
        )
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn edge_value(&self, e: usize) -> f64 {
        self.values[e]
    }

    /// ω(a, b) for adjacent vertices.
    pub fn conductance(&self, a: usize, b: usize) -> Option<f64> {
        self.geometry.edge_between(a, b).map(|e| self.values[e])
    }

    pub fn mu(&self, x: usize) -> f64 {
        self.geometry.incident(x).map(|(e, _)| self.values[e]).sum()
    }

    pub fn nu(&self, x: usize) -> f64 {
        self.geometry
            .incident(x)
            .map(|(e, _)| self.values[e].recip())
            .sum()
    }

    pub fn quantity(&self, q: Quantity, x: usize) -> f64 {
        match q {
            Quantity::Mu => self.mu(x),
            Quantity::Nu => self.nu(x),
        }
    }

    pub fn quantity_vec(&self, q: Quantity) -> Vec<f64> {
        let mut out = vec![0.0; self.geometry.vertex_count()];
        par::fill(&mut out, |x| self.quantity(q, x));
        out
    }

    pub fn mu_vec(&self) -> Vec<f64> {
        self.quantity_vec(Quantity::Mu)
    }

    pub fn nu_vec(&self) -> Vec<f64> {
        self.quantity_vec(Quantity::Nu)
    }

    /// τ_z ω: `(τ_z ω)({x, y}) = ω({x + z, y + z})`.
    pub fn shift(&self, z: &[i64]) -> Self {
        let g = &self.geometry;
        let d = g.dim();
        let mut values = vec![0.0; self.values.len()];
        for v in 0..g.vertex_count() {
            let p: Vec<i64> = g.point(v).iter().zip(z).map(|(a, b)| a + b).collect();
            let src = g.index(&p);
            for axis in 0..d {
                values[g.edge_index(v, axis)] = self.values[g.edge_index(src, axis)];
            }
        }
        Self {
            values,
            ..self.clone()
        }
    }

    /// Every conductance multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(RcmError::Precondition(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        Ok(Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        })
    }

    /// ‖φ‖_{p,A} for φ ∈ {μ, ν}; `exponent = f64::INFINITY` gives the max.
    pub fn avg_norm(&self, q: Quantity, exponent: f64, region: &[usize]) -> Result<f64> {
        avg_norm(region.iter().map(|&x| self.quantity(q, x)), exponent)
    }
}

/// `(|A|^{-1} Σ |φ(x)|^p)^{1/p}`, or `max |φ|` for `p = ∞`.
pub fn avg_norm(values: impl Iterator<Item = f64>, exponent: f64) -> Result<f64> {
    if !(exponent >= 1.0) {
        return Err(RcmError::Precondition(format!(
            "exponent must be >= 1, got {exponent}"
        )));
    }
    let mut n = 0usize;
    let mut acc = 0.0f64;
    for v in values {
        n += 1;
        if exponent.is_infinite() {
            acc = acc.max(v.abs());
        } else {
            acc += v.abs().powf(exponent);
        }
    }
    if n == 0 {
        return Err(RcmError::EmptyRegion("norm over empty region".into()));
    }
    Ok(if exponent.is_infinite() {
        acc
    } else {
        (acc / n as f64).powf(exponent.recip())
    })
}

/// Monte Carlo estimates of E[μ(0)^p] and E[ν(0)^q].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub p: f64,
    pub q: f64,
    pub bar_mu_p: f64,
    pub bar_mu_p_stderr: f64,
    pub bar_nu_q: f64,
    pub bar_nu_q_stderr: f64,
}

impl MomentSummary {
    pub fn exact(p: f64, q: f64, bar_mu_p: f64, bar_nu_q: f64) -> Self {
        Self {
            p,
            q,
            bar_mu_p,
            bar_mu_p_stderr: 0.0,
            bar_nu_q,
            bar_nu_q_stderr: 0.0,
        }
    }

    /// Centering constant for `quantity`.
    pub fn bar(&self, quantity: Quantity) -> f64 {
        match quantity {
            Quantity::Mu => self.bar_mu_p,
            Quantity::Nu => self.bar_nu_q,
        }
    }

    pub fn exponent(&self, quantity: Quantity) -> f64 {
        match quantity {
            Quantity::Mu => self.p,
            Quantity::Nu => self.q,
        }
    }
}

/// Annealed moments at the origin over `n_samples` independent fields.
pub fn estimate_moments(
    spec: &EnvironmentSpec,
    geometry: TorusGeometry,
    p: f64,
    q: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MomentSummary> {
    if n_samples < 2 {
        return Err(RcmError::Precondition(
            "estimate_moments needs at least 2 samples".into(),
        ));
    }
    spec.validate(&geometry)?;
    let samples = par::map_range(n_samples, |i| -> Result<(f64, f64)> {
        let field = sample_environment(spec, geometry, seed::child_seed(seed, i as u64))?;
        let m = field.mu(0).powf(p);
        let v = field.nu(0).powf(q);
        if !(m.is_finite() && v.is_finite()) {
            return Err(RcmError::NonFinite {
                index: i,
                detail: format!("mu^p = {m}, nu^q = {v}"),
            });
        }
        Ok((m, v))
    });
    let samples: Vec<(f64, f64)> = samples.into_iter().collect::<Result<_>>()?;
    let mus: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let nus: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (bar_mu_p, bar_mu_p_stderr) = mean_stderr(&mus);
    let (bar_nu_q, bar_nu_q_stderr) = mean_stderr(&nus);
    Ok(MomentSummary {
        p,
        q,
        bar_mu_p,
        bar_mu_p_stderr,
        bar_nu_q,
        bar_nu_q_stderr,
    })
}
