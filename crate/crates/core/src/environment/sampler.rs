use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal};

use super::gaussian::massive_gaussian_field;
use super::spec::{EnvironmentSpec, Marginal};
use super::ConductanceField;
use crate::error::{RcmError, Result};
use crate::lattice::{ball_offsets, TorusGeometry};
use crate::seed;

/// Draw a field. Deterministic in `(spec, geometry, seed)`.
pub fn sample_environment(
    spec: &EnvironmentSpec,
    geometry: TorusGeometry,
    seed: u64,
) -> Result<ConductanceField> {
    spec.validate(&geometry)?;
    let mut rng = seed::rng(seed);
    let values = match *spec {
        EnvironmentSpec::Constant { level } => vec![level; geometry.edge_count()],
        EnvironmentSpec::UniformEllipticIid { lower, upper } => (0..geometry.edge_count())
            .map(|_| lower + (upper - lower) * rng.random::<f64>())
            .collect(),
        EnvironmentSpec::Iid { marginal } => iid(marginal, geometry.edge_count(), &mut rng)?,
        EnvironmentSpec::FiniteRange { range, link } => {
            let h = EnvironmentSpec::smoothing_radius(range);
            let raw: Vec<f64> = (0..geometry.vertex_count())
                .map(|_| rng.random::<f64>())
                .collect();
            let window = ball_offsets(geometry.dim(), h as f64 + 1.0);
            let smoothed: Vec<f64> = (0..geometry.vertex_count())
                .map(|v| {
                    let p = geometry.point(v);
                    let s: f64 = window
                        .iter()
                        .map(|off| {
                            let q: Vec<i64> = p.iter().zip(off).map(|(a, b)| a + b).collect();
                            raw[geometry.index(&q)]
                        })
                        .sum();
                    s / window.len() as f64
                })
                .collect();
            edge_map(&geometry, |a, b| {
                link.apply(0.5 * (smoothed[a] + smoothed[b]))
            })
        }
        EnvironmentSpec::GaussianFkg { mass, beta } => {
            let phi = massive_gaussian_field(&geometry, mass, &mut rng);
            edge_map(&geometry, |a, b| (beta * (phi[a] + phi[b])).exp())
        }
        EnvironmentSpec::NaPermutation {
            block,
            lower,
            upper,
        } => permutation_blocks(&geometry, block, lower, upper, &mut rng),
    };
    ConductanceField::from_values(geometry, values, spec.clone(), seed)
}

fn iid(marginal: Marginal, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let err = |e: &dyn std::fmt::Display| RcmError::Spec(e.to_string());
    Ok(match marginal {
        Marginal::Uniform { lower, upper } => (0..n)
            .map(|_| lower + (upper - lower) * rng.random::<f64>())
            .collect(),
        Marginal::LogNormal { mu, sigma } => {
            let dist = LogNormal::new(mu, sigma).map_err(|e| err(&e))?;
            (0..n).map(|_| dist.sample(rng)).collect()
        }
        Marginal::Gamma { shape, scale } => {
            let dist = Gamma::new(shape, scale).map_err(|e| err(&e))?;
            // Gamma draws can underflow to exactly zero for tiny shapes
            (0..n)
                .map(|_| dist.sample(rng).max(f64::MIN_POSITIVE))
                .collect()
        }
        Marginal::PowerLaw { exponent } => (0..n)
            .map(|_| {
                (1.0 - rng.random::<f64>())
                    .powf(exponent.recip())
                    .max(f64::MIN_POSITIVE)
            })
            .collect(),
    })
}

fn edge_map(geometry: &TorusGeometry, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    (0..geometry.edge_count())
        .map(|e| {
            let (a, b) = geometry.edge_endpoints(e);
            f(a, b)
        })
        .collect()
}

fn permutation_blocks(
    geometry: &TorusGeometry,
    block: usize,
    lower: f64,
    upper: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let d = geometry.dim();
    let per_side = geometry.side() / block;
    let n_blocks = per_side.pow(d as u32);
    let block_edges = block.pow(d as u32) * d;
    let multiset: Vec<f64> = (0..block_edges)
        .map(|i| lower + (upper - lower) * (i as f64 + 0.5) / block_edges as f64)
        .collect();

    // edges of each block, in edge-index order
    let mut members: Vec<Vec<usize>> = vec![Vec::with_capacity(block_edges); n_blocks];
    for v in 0..geometry.vertex_count() {
        let b = geometry
            .point(v)
            .iter()
            .fold(0usize, |acc, &c| acc * per_side + c as usize / block);
        for axis in 0..d {
            members[b].push(geometry.edge_index(v, axis));
        }
    }
    let mut values = vec![0.0; geometry.edge_count()];
    let mut perm = multiset.clone();
    for edges in &members {
        perm.copy_from_slice(&multiset);
        perm.shuffle(rng);
        for (&e, &v) in edges.iter().zip(&perm) {
            values[e] = v;
        }
    }
    values
}
