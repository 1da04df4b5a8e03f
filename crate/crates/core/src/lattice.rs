//! Geometry of Z^d and its periodic approximations.
//!
//! Points are plain coordinate vectors (`Vec<i64>` / `&[i64]`); vertices of a
//! torus are addressed by a dense index in lexicographic coordinate order
//! (first coordinate most significant). Undirected edges are indexed by
//! `(vertex, axis)` for the edge `{v, v + e_axis}`.

use serde::{Deserialize, Serialize};

use crate::error::{RcmError, Result};

/// ℓ¹ norm of a lattice point.
pub fn l1_norm(x: &[i64]) -> u64 {
    x.iter().map(|c| c.unsigned_abs()).sum()
}

pub fn l1_distance(x: &[i64], y: &[i64]) -> u64 {
    x.iter().zip(y).map(|(a, b)| (a - b).unsigned_abs()).sum()
}

/// ℓ¹ distance from a lattice point to an arbitrary real point.
pub fn l1_distance_real(x: &[i64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(&a, b)| (a as f64 - b).abs()).sum()
}

/// Offsets `v` in Z^d with `|v| < radius` (strict, as for balls B(x, r)).
pub fn ball_offsets(d: usize, radius: f64) -> Vec<Vec<i64>> {
    ball_points_real(&vec![0.0; d], radius)
}

/// Lattice points `y` with `Σ|y_i − c_i| < radius` for a real center `c`.
pub fn ball_points_real(center: &[f64], radius: f64) -> Vec<Vec<i64>> {
    fn rec(center: &[f64], budget: f64, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        let i = prefix.len();
        if i == center.len() {
            out.push(prefix.clone());
            return;
        }
        let c = center[i];
        let lo = (c - budget).floor() as i64;
        let hi = (c + budget).ceil() as i64;
        for v in lo..=hi {
            let used = (v as f64 - c).abs();
            if used < budget {
                prefix.push(v);
                rec(center, budget - used, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    if radius > 0.0 {
        rec(
            center,
            radius,
            &mut Vec::with_capacity(center.len()),
            &mut out,
        );
    }
    out
}

/// Periodic box (Z / L Z)^d.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGeometry {
    d: usize,
    side: usize,
}

impl TorusGeometry {
    pub fn new(d: usize, side: usize) -> Result<Self> {
        if d < 2 {
            return Err(RcmError::Geometry(format!(
                "dimension must be >= 2, got {d}"
            )));
        }
        if side < 4 || !side.is_multiple_of(2) {
            return Err(RcmError::Geometry(format!(
                "side length must be an even integer >= 4, got {side}"
            )));
        }
        side.checked_pow(d as u32)
            .ok_or_else(|| RcmError::Geometry("vertex count overflows".into()))?;
        Ok(Self { d, side })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn vertex_count(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    pub fn edge_count(&self) -> usize {
        self.vertex_count() * self.d
    }

    /// Vertex index of a point; coordinates are reduced modulo L.
    pub fn index(&self, x: &[i64]) -> usize {
        debug_assert_eq!(x.len(), self.d);
        let l = self.side as i64;
        x.iter()
            .fold(0usize, |acc, &c| acc * self.side + c.rem_euclid(l) as usize)
    }

    /// Canonical coordinates in `[0, L)^d`.
    pub fn point(&self, mut idx: usize) -> Vec<i64> {
        let mut p = vec![0i64; self.d];
        for slot in p.iter_mut().rev() {
            *slot = (idx % self.side) as i64;
            idx /= self.side;
        }
        p
    }

    fn stride(&self, axis: usize) -> usize {
        self.side.pow((self.d - 1 - axis) as u32)
    }

    fn coord(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.side
    }

    /// Neighbour of `idx` one step along `axis` in direction `+1` (`forward`)
    /// or `-1`.
    pub fn neighbor(&self, idx: usize, axis: usize, forward: bool) -> usize {
        let stride = self.stride(axis);
        let c = self.coord(idx, axis);
        if forward {
            if c + 1 == self.side {
                idx + stride - self.side * stride
            } else {
                idx + stride
            }
        } else if c == 0 {
            idx + (self.side - 1) * stride
        } else {
            idx - stride
        }
    }

    /// Index of the undirected edge `{v, v + e_axis}`.
    pub fn edge_index(&self, v: usize, axis: usize) -> usize {
        v * self.d + axis
    }

    /// The `2d` incident edges of `v` as `(edge index, neighbour)`, ordered
    /// `+e_0, −e_0, +e_1, −e_1, ...`.
    pub fn incident(&self, v: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.d).flat_map(move |axis| {
            let fwd = self.neighbor(v, axis, true);
            let bwd = self.neighbor(v, axis, false);
            [
                (self.edge_index(v, axis), fwd),
                (self.edge_index(bwd, axis), bwd),
            ]
        })
    }

    /// Edge between two adjacent vertices, if they are adjacent.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.incident(a).find(|&(_, n)| n == b).map(|(e, _)| e)
    }

    /// Endpoints `(v, v + e_axis)` of an edge.
    pub fn edge_endpoints(&self, e: usize) -> (usize, usize) {
        let v = e / self.d;
        (v, self.neighbor(v, e % self.d, true))
    }

    /// Minimal signed displacement from `a` to `b` (each component in
    /// `(-L/2, L/2]`).
    pub fn displacement(&self, a: usize, b: usize) -> Vec<i64> {
        let l = self.side as i64;
        let pa = self.point(a);
        let pb = self.point(b);
        pa.iter()
            .zip(&pb)
            .map(|(x, y)| {
                let mut dlt = (y - x).rem_euclid(l);
                if dlt > l / 2 {
                    dlt -= l;
                }
                dlt
            })
            .collect()
    }

    /// Torus ℓ¹ distance.
    pub fn distance(&self, a: usize, b: usize) -> u64 {
        l1_norm(&self.displacement(a, b))
    }

    /// `B(center, radius) = {y : |center − y| < radius}` on the torus.
    pub fn ball(&self, center: &[i64], radius: f64) -> Result<Vec<usize>> {
        if !(radius > 0.0) {
            return Err(RcmError::Precondition(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        let half = self.side / 2;
        if radius > half as f64 {
            return Err(RcmError::BallWraps { radius, half });
        }
        Ok(ball_offsets(self.d, radius)
            .into_iter()
            .map(|off| {
                let p: Vec<i64> = center.iter().zip(&off).map(|(c, o)| c + o).collect();
                self.index(&p)
            })
            .collect())
    }

    /// Ball around a real-valued center; only lattice points strictly inside.
    pub fn ball_real(&self, center: &[f64], radius: f64) -> Result<Vec<usize>> {
        let half = self.side / 2;
        if radius > half as f64 {
            return Err(RcmError::BallWraps { radius, half });
        }
        Ok(ball_points_real(center, radius)
            .into_iter()
            .map(|p| self.index(&p))
            .collect())
    }
}

/// `R_i(u, m, l) = u + {v : 0 ≤ v_i ≤ l, |v_j| ≤ m for j ≠ i}`.
///
/// `axis` is zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperRectangle {
    pub base: Vec<i64>,
    pub axis: usize,
    pub length: u64,
    pub half_width: u64,
}

impl HyperRectangle {
    pub fn new(base: Vec<i64>, axis: usize, length: u64, half_width: u64) -> Self {
        assert!(
            axis < base.len(),
            "axis {axis} out of range for d = {}",
            base.len()
        );
        Self {
            base,
            axis,
            length,
            half_width,
        }
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn vertex_count(&self) -> usize {
        (self.length as usize + 1) * (2 * self.half_width as usize + 1).pow(self.dim() as u32 - 1)
    }

    /// Per-axis inclusive bounds.
    pub fn bounds(&self) -> Vec<(i64, i64)> {
        let m = self.half_width as i64;
        self.base
            .iter()
            .enumerate()
            .map(|(j, &u)| {
                if j == self.axis {
                    (u, u + self.length as i64)
                } else {
                    (u - m, u + m)
                }
            })
            .collect()
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        self.bounds()
            .iter()
            .zip(x)
            .all(|(&(lo, hi), &c)| lo <= c && c <= hi)
    }

    /// Vertices in lexicographic order.
    pub fn vertices(&self) -> Vec<Vec<i64>> {
        let bounds = self.bounds();
        let mut out = Vec::with_capacity(self.vertex_count());
        let mut cur: Vec<i64> = bounds.iter().map(|b| b.0).collect();
        loop {
            out.push(cur.clone());
            let mut j = bounds.len();
            loop {
                if j == 0 {
                    return out;
                }
                j -= 1;
                if cur[j] < bounds[j].1 {
                    cur[j] += 1;
                    for (k, slot) in cur.iter_mut().enumerate().skip(j + 1) {
                        *slot = bounds[k].0;
                    }
                    break;
                }
            }
        }
    }
}

/// Corner points `p_0(x) = 0`, `p_i(x) = (x_1, ..., x_i, 0, ..., 0)`.
pub fn corner_points(x: &[i64]) -> Vec<Vec<i64>> {
    let d = x.len();
    (0..=d)
        .map(|i| (0..d).map(|j| if j < i { x[j] } else { 0 }).collect())
        .collect()
}

/// The d+1 hyper-rectangles covering the neighbourhood of the segment path
/// from 0 to `x` at scale `r`.
///
/// For `x` in the closed positive orthant: `R_0 = R_1(−r e_1, r, r)` guards the
/// region behind the origin, and `R_i = R_i(p_{i−1}(x), r, x_i + r)`. Other
/// orthants are handled by mirroring negative coordinates.
pub fn covering_rectangles(x: &[i64], r: u64) -> Result<Vec<HyperRectangle>> {
    if l1_norm(x) == 0 {
        return Err(RcmError::DegenerateChain);
    }
    let d = x.len();
    let signs: Vec<i64> = x.iter().map(|&c| if c < 0 { -1 } else { 1 }).collect();
    let abs: Vec<i64> = x.iter().map(|c| c.abs()).collect();
    let corners = corner_points(&abs);
    let ri = r as i64;

    let mut base0 = vec![0i64; d];
    base0[0] = -ri;
    let mut rects = vec![HyperRectangle::new(base0, 0, r, r)];
    for i in 0..d {
        rects.push(HyperRectangle::new(
            corners[i].clone(),
            i,
            (abs[i] + ri) as u64,
            r,
        ));
    }
    Ok(rects.into_iter().map(|rect| mirror(rect, &signs)).collect())
}

fn mirror(rect: HyperRectangle, signs: &[i64]) -> HyperRectangle {
    if signs.iter().all(|&s| s > 0) {
        return rect;
    }
    let axis = rect.axis;
    let mut base: Vec<i64> = rect.base.iter().zip(signs).map(|(b, s)| b * s).collect();
    if signs[axis] < 0 {
        // the long side now extends towards negative values
        base[axis] -= rect.length as i64;
    }
    HyperRectangle { base, ..rect }
}
