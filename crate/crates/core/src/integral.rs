//! Rough integrals `∫ Z dX` of controlled paths `Z` with values in `L(V;U)`.
//!
//! A `Z` block at level `r` has target `m·d` (index `u·d + v`) and acts on
//! words of length `r`. Pairing `Z^{k-1}` with `X^k` uses the word `(ξ, v)`,
//! so the integration letter `v` is the last letter of `X^k`.

use serde::Serialize;

use crate::controlled::{l1, ControlledPath};
use crate::error::{Error, Result};
use crate::rough_path::GeometricRoughPath;
use crate::tensor::{pow, TensorSeries};

/// A strictly increasing list of grid indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    indices: Vec<usize>,
}

impl Partition {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::InvalidInput("partition needs at least two points".into()));
        }
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("partition must be strictly increasing".into()));
        }
        Ok(Partition { indices })
    }

    /// All grid indices from `s` to `t`.
    pub fn full(s: usize, t: usize) -> Result<Self> {
        Self::new((s..=t).collect())
    }

    /// Every `stride`-th index from `s`, always ending at `t`.
    pub fn strided(s: usize, t: usize, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidInput("stride must be positive".into()));
        }
        let mut idx: Vec<usize> = (s..t).step_by(stride).collect();
        idx.push(t);
        Self::new(idx)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn mesh(&self, times: &[f64]) -> f64 {
        self.indices
            .windows(2)
            .map(|w| times[w[1]] - times[w[0]])
            .fold(0.0, f64::max)
    }

    /// The partition with its `j`-th point removed.
    pub fn without(&self, j: usize) -> Result<Self> {
        if j == 0 || j + 1 >= self.indices.len() {
            return Err(Error::InvalidInput(format!(
                "point {j} is not interior to the partition"
            )));
        }
        let mut idx = self.indices.clone();
        idx.remove(j);
        Self::new(idx)
    }
}

fn check_integrand(z: &ControlledPath, x: &GeometricRoughPath) -> Result<usize> {
    if z.dim() != x.dim() || z.depth() != x.depth() || z.times() != x.times() {
        return Err(Error::DimensionMismatch(
            "integrand and driver must share grid, d and N".into(),
        ));
    }
    if z.target() % z.dim() != 0 {
        return Err(Error::DimensionMismatch(format!(
            "integrand target {} is not a multiple of d = {}",
            z.target(),
            z.dim()
        )));
    }
    Ok(z.target() / z.dim())
}

/// `Σ_{ξ,v} b[(u·d+v)·d^{k-1} + ξ] · x[ξ·d + v]` for every `u`.
pub(crate) fn pair_level(b: &[f64], m: usize, d: usize, k: usize, x: &[f64]) -> Vec<f64> {
    let inner = pow(d, k - 1);
    let mut out = vec![0.0; m];
    for (u, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for v in 0..d {
            let row = &b[(u * d + v) * inner..(u * d + v + 1) * inner];
            for (xi, &c) in row.iter().enumerate() {
                acc += c * x[xi * d + v];
            }
        }
        *o = acc;
    }
    out
}

/// `Σ_{k=1}^{N} Z^{k-1}_s X^k_{s,t}`.
fn local_term(z: &ControlledPath, m: usize, s: usize, x: &TensorSeries) -> Vec<f64> {
    let (d, n) = (z.dim(), z.depth());
    let mut out = vec![0.0; m];
    for k in 1..=n {
        let p = pair_level(z.value(k - 1, s), m, d, k, x.level(k));
        out.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    out
}

/// The compensated Riemann sum over `P`, reduced left to right.
pub fn compensated_sum(z: &ControlledPath, x: &GeometricRoughPath, p: &Partition) -> Result<Vec<f64>> {
    let m = check_integrand(z, x)?;
    if *p.indices.last().unwrap() >= x.len() {
        return Err(Error::OutOfRange("partition leaves the grid".into()));
    }
    let mut acc = vec![0.0; m];
    for w in p.indices.windows(2) {
        let inc = x.increment(w[0], w[1])?;
        let term = local_term(z, m, w[0], &inc);
        acc.iter_mut().zip(term).for_each(|(a, b)| *a += b);
    }
    Ok(acc)
}

/// One row of a dyadic refinement table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    /// 0 for the single interval `{s, t}`, increasing towards the native grid.
    pub depth: usize,
    pub mesh: f64,
    pub value_norm: f64,
    /// `|S_depth - S_{depth-1}|`; zero on the coarsest row.
    pub cauchy_increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralEstimate {
    /// Compensated sum on the native grid.
    pub value: Vec<f64>,
    /// Cauchy increment between the native grid and its first coarsening.
    pub error_estimate: f64,
    pub rows: Vec<RateRow>,
}

/// Evaluate `∫_s^t Z dX` on the native grid and on its dyadic coarsenings.
pub fn rough_integral(z: &ControlledPath, x: &GeometricRoughPath, s: usize, t: usize) -> Result<IntegralEstimate> {
    let m = check_integrand(z, x)?;
    if s > t || t >= x.len() {
        return Err(Error::OutOfRange(format!("integral over ({s}, {t})")));
    }
    if s == t {
        return Ok(IntegralEstimate {
            value: vec![0.0; m],
            error_estimate: 0.0,
            rows: Vec::new(),
        });
    }
    let mut strides = vec![1usize];
    while *strides.last().unwrap() < t - s {
        strides.push(strides.last().unwrap() * 2);
    }
    strides.reverse();
    let mut rows = Vec::with_capacity(strides.len());
    let mut prev: Option<Vec<f64>> = None;
    let mut value = Vec::new();
    for (depth, &stride) in strides.iter().enumerate() {
        let p = Partition::strided(s, t, stride)?;
        let v = compensated_sum(z, x, &p)?;
        let inc = prev
            .as_ref()
            .map_or(0.0, |q| l1(&v.iter().zip(q).map(|(a, b)| a - b).collect::<Vec<_>>()));
        rows.push(RateRow {
            depth,
            mesh: p.mesh(x.times()),
            value_norm: l1(&v),
            cauchy_increment: inc,
        });
        prev = Some(v.clone());
        value = v;
    }
    Ok(IntegralEstimate {
        error_estimate: rows.last().unwrap().cauchy_increment,
        value,
        rows,
    })
}

/// `(I^0, I^1, …, I^{N-1}) = (Y_0 + ∫_0^· Z dX, Z^0, …, Z^{N-2})`, with each
/// `Z^{k-1}` uncurried into a map on `V^{⊗k}`.
pub fn integral_controlled(z: &ControlledPath, x: &GeometricRoughPath, offset: &[f64]) -> Result<ControlledPath> {
    let m = check_integrand(z, x)?;
    if offset.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "offset of length {}, expected {m}",
            offset.len()
        )));
    }
    let (d, n) = (z.dim(), z.depth());
    let len = z.len();
    let mut levels: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
    let mut path = Vec::with_capacity(len);
    let mut acc = offset.to_vec();
    path.push(acc.clone());
    for i in 0..len - 1 {
        let term = local_term(z, m, i, x.step(i));
        acc.iter_mut().zip(term).for_each(|(a, b)| *a += b);
        path.push(acc.clone());
    }
    levels.push(path);
    for k in 1..n {
        levels.push(
            (0..len)
                .map(|i| uncurry(z.value(k - 1, i), m, d, k - 1))
                .collect(),
        );
    }
    ControlledPath::new(z.times().to_vec(), d, n, m, z.alpha(), levels)
}

/// Level-`r` block of an `L(V;U)`-valued path as a level-`(r+1)` block of a
/// `U`-valued one: `out[u·d^{r+1} + ξ·d + v] = b[(u·d+v)·d^r + ξ]`.
pub fn uncurry(b: &[f64], m: usize, d: usize, r: usize) -> Vec<f64> {
    let inner = pow(d, r);
    let mut out = vec![0.0; m * inner * d];
    for u in 0..m {
        for v in 0..d {
            for xi in 0..inner {
                out[u * inner * d + xi * d + v] = b[(u * d + v) * inner + xi];
            }
        }
    }
    out
}

/// `(∫_P - ∫_{P∖t_j}) - Σ_k RZ^{k-1}_{t_{j-1},t_j} X^k_{t_j,t_{j+1}}`, largest entry.
pub fn removal_identity_check(z: &ControlledPath, x: &GeometricRoughPath, p: &Partition, j: usize) -> Result<f64> {
    let m = check_integrand(z, x)?;
    let (d, n) = (z.dim(), z.depth());
    let reduced = p.without(j)?;
    let full = compensated_sum(z, x, p)?;
    let less = compensated_sum(z, x, &reduced)?;
    let (a, b, c) = (p.indices[j - 1], p.indices[j], p.indices[j + 1]);
    let left = x.increment(a, b)?;
    let right = x.increment(b, c)?;
    let mut rhs = vec![0.0; m];
    for k in 1..=n {
        let rem = z.remainder_with(k - 1, a, b, &left);
        let term = pair_level(&rem, m, d, k, right.level(k));
        rhs.iter_mut().zip(term).for_each(|(s, t)| *s += t);
    }
    Ok(full
        .iter()
        .zip(&less)
        .zip(&rhs)
        .fold(0.0, |acc, ((f, l), r)| acc.max((f - l - r).abs())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateProbe {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `log(increment)` against `log(mesh)`.
    pub exponent: Option<f64>,
    pub depths_used: usize,
    pub applicable: bool,
}

/// Fit the decay of Cauchy increments over the finest `depths` refinements.
pub fn convergence_rate_probe(
    z: &ControlledPath,
    x: &GeometricRoughPath,
    s: usize,
    t: usize,
    depths: usize,
) -> Result<RateProbe> {
    let est = rough_integral(z, x, s, t)?;
    let rows = est.rows;
    let scale = rows.iter().map(|r| r.value_norm).fold(1.0, f64::max);
    let usable: Vec<&RateRow> = rows
        .iter()
        .filter(|r| r.depth > 0)
        .rev()
        .take(depths)
        .collect();
    let applicable = usable.len() >= depths.max(2)
        && usable.iter().all(|r| r.cauchy_increment > 1e-13 * scale);
    let exponent = applicable.then(|| {
        let pts: Vec<(f64, f64)> = usable
            .iter()
            .map(|r| (r.mesh.ln(), r.cauchy_increment.ln()))
            .collect();
        least_squares_slope(&pts)
    });
    Ok(RateProbe {
        depths_used: usable.len(),
        rows,
        exponent,
        applicable,
    })
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// `C_{N,α} = Σ_{n≥3} (2/(n-1))^{(N+1)α} = 2^θ (ζ(θ) - 1)` with `θ = (N+1)α`.
pub fn c_n_alpha(depth: usize, alpha: f64) -> Result<f64> {
    let theta = (depth as f64 + 1.0) * alpha;
    if !(theta > 1.0) {
        return Err(Error::InvalidInput(format!(
            "(N+1)α = {theta} must exceed 1"
        )));
    }
    // partial sum plus an Euler–Maclaurin tail for Σ_{k≥K} k^{-θ}
    let big_k = 2000.0f64;
    let head: f64 = (2..2000).map(|k| (k as f64).powf(-theta)).sum();
    let tail = big_k.powf(1.0 - theta) / (theta - 1.0) + 0.5 * big_k.powf(-theta)
        + theta * big_k.powf(-theta - 1.0) / 12.0
        - theta * (theta + 1.0) * (theta + 2.0) * big_k.powf(-theta - 3.0) / 720.0;
    Ok(2f64.powf(theta) * (head + tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rough_path::{lift_path, PiecewiseLinearPath};

    /// d=1, x_t = t, Z = (x, 1, 0).
    fn smooth_case(m: usize) -> (GeometricRoughPath, ControlledPath) {
        let p = PiecewiseLinearPath::linear(&[0.0], &[1.0], 1.0, m).unwrap();
        let x = lift_path(&p, 3, 1.0 / 3.0).unwrap();
        let z = ControlledPath::canonical_lift(&x, 0.3).unwrap();
        (x, z)
    }

    #[test]
    fn telescoping_half() {
        let (x, z) = smooth_case(8);
        for p in [Partition::full(0, 8).unwrap(), Partition::new(vec![0, 3, 8]).unwrap(), Partition::new(vec![0, 8]).unwrap()] {
            let v = compensated_sum(&z, &x, &p).unwrap();
            assert!((v[0] - 0.5).abs() < 1e-15);
        }
        let est = rough_integral(&z, &x, 0, 8).unwrap();
        assert!(est.error_estimate < 1e-15);
        assert_eq!(est.rows.len(), 4);
        assert_eq!(rough_integral(&z, &x, 3, 3).unwrap().value, vec![0.0]);
        let probe = convergence_rate_probe(&z, &x, 0, 8, 3).unwrap();
        assert!(!probe.applicable);
    }

    #[test]
    fn controlled_integral_smooth() {
        let (x, z) = smooth_case(4);
        let i = integral_controlled(&z, &x, &[0.0]).unwrap();
        for k in 0..5 {
            let t = x.times()[k];
            assert!((i.value(0, k)[0] - t * t / 2.0).abs() < 1e-15);
            assert_eq!(i.value(1, k)[0], t);
            assert_eq!(i.value(2, k)[0], 1.0);
        }
        let zero = ControlledPath::zeros(x.times().to_vec(), 1, 3, 1, 0.3).unwrap();
        let c = integral_controlled(&zero, &x, &[2.5]).unwrap();
        assert!(c.level_path(0).iter().all(|v| v == &[2.5]));
    }

    #[test]
    fn constant_integrand_telescopes() {
        let p = PiecewiseLinearPath::new(
            vec![0.0, 0.5, 1.0, 1.5],
            vec![vec![0.0, 0.0], vec![0.4, -0.3], vec![0.1, 0.2], vec![1.0, 1.0]],
        )
        .unwrap();
        let x = lift_path(&p, 2, 0.5).unwrap();
        let mut z = ControlledPath::zeros(x.times().to_vec(), 2, 2, 2, 0.3).unwrap();
        for k in 0..4 {
            z.value_mut(0, k).copy_from_slice(&[2.0, -1.0]);
        }
        let v = compensated_sum(&z, &x, &Partition::full(0, 3).unwrap()).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uncurry_layout() {
        // m=1, d=2, r=1: b[(v)*2 + ξ]
        let b = [1.0, 2.0, 3.0, 4.0];
        // out[ξ*2 + v] = b[v*2 + ξ]
        assert_eq!(uncurry(&b, 1, 2, 1), vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn removal_three_points() {
        let p = PiecewiseLinearPath::new(
            vec![0.0, 0.5, 1.0],
            vec![vec![0.0, 0.0], vec![0.4, -0.3], vec![0.1, 0.2]],
        )
        .unwrap();
        let x = lift_path(&p, 3, 1.0 / 3.0).unwrap();
        let mut z = ControlledPath::zeros(x.times().to_vec(), 2, 3, 2, 0.3).unwrap();
        let mut seed = 0.1;
        for i in 0..3 {
            for k in 0..3 {
                for v in z.value_mut(i, k) {
                    seed = (seed * 7.3 + 0.11) % 1.0;
                    *v = seed - 0.5;
                }
            }
        }
        let part = Partition::full(0, 2).unwrap();
        assert!(removal_identity_check(&z, &x, &part, 1).unwrap() < 1e-15);
        assert!(removal_identity_check(&z, &x, &part, 2).is_err());
    }

    #[test]
    fn c_n_alpha_against_zeta() {
        let v = c_n_alpha(1, 1.0).unwrap();
        let exact = 4.0 * (std::f64::consts::PI.powi(2) / 6.0 - 1.0);
        assert!((v - exact).abs() < 1e-12 * exact);
        assert!(c_n_alpha(3, 0.25).is_err());
        assert!(c_n_alpha(3, 0.28).unwrap() > c_n_alpha(3, 0.3).unwrap());
    }

    #[test]
    fn partitions() {
        let p = Partition::strided(2, 9, 3).unwrap();
        assert_eq!(p.indices(), &[2, 5, 8, 9]);
        assert!(Partition::new(vec![1]).is_err());
        assert!(Partition::new(vec![1, 1]).is_err());
        assert_eq!(p.without(1).unwrap().indices(), &[2, 8, 9]);
    }
}
