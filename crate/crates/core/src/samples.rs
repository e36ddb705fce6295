//! Seeded random inputs for tests, verification suites and benchmarks.

use rand::Rng;

use crate::controlled::{apply_leading_level, ControlledPath};
use crate::error::Result;
use crate::rough_path::{GeometricRoughPath, PiecewiseLinearPath};
use crate::tensor::pow;

/// Uniform with unit variance.
fn unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen_range(-1.0..1.0) * 3f64.sqrt()
}

/// Random walk with `segments` equal steps on `[0, horizon]`, increments of
/// size `scale·sqrt(h)`.
pub fn random_polyline<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    segments: usize,
    horizon: f64,
    scale: f64,
) -> Result<PiecewiseLinearPath> {
    let h = horizon / segments as f64;
    let times = (0..=segments).map(|i| i as f64 * h).collect();
    let mut points = vec![vec![0.0; dim]];
    for _ in 0..segments {
        let prev = points.last().unwrap();
        let next = prev.iter().map(|p| p + scale * h.sqrt() * unit(rng)).collect();
        points.push(next);
    }
    PiecewiseLinearPath::new(times, points)
}

/// Midpoint displacement on `2^levels` segments: displacements at depth `k`
/// have size `scale·2^{-k·hurst}`, so the path looks `hurst`-Hölder down to
/// the finest scale.
pub fn rough_polyline<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    levels: u32,
    hurst: f64,
    horizon: f64,
    scale: f64,
) -> Result<PiecewiseLinearPath> {
    let n = 1usize << levels;
    let mut pts = vec![vec![0.0; dim]; n + 1];
    pts[n] = (0..dim).map(|_| scale * unit(rng)).collect();
    let mut step = n;
    for k in 1..=levels {
        let half = step / 2;
        let amp = scale * 2f64.powf(-(k as f64) * hurst);
        for left in (0..n).step_by(step) {
            let mid: Vec<f64> = pts[left]
                .iter()
                .zip(&pts[left + step])
                .map(|(a, b)| 0.5 * (a + b) + amp * unit(rng))
                .collect();
            pts[left + half] = mid;
        }
        step = half;
    }
    let times = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
    PiecewiseLinearPath::new(times, pts)
}

/// A controlled path with random jet at `t_0` and zero remainders:
/// `Y^i_t(ξ) = Σ_{j≥i} A^j(X^{j-i}_{0,t} ⊗ ξ)`.
pub fn random_controlled<R: Rng + ?Sized>(
    rng: &mut R,
    x: &GeometricRoughPath,
    target: usize,
    alpha: f64,
) -> Result<ControlledPath> {
    let (d, n) = (x.dim(), x.depth());
    let jet: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..target * pow(d, i)).map(|_| unit(rng)).collect())
        .collect();
    let mut levels = vec![Vec::with_capacity(x.len()); n];
    for g in x.values() {
        for (i, lvl) in levels.iter_mut().enumerate() {
            let mut acc = jet[i].clone();
            for (j, a) in jet.iter().enumerate().skip(i + 1) {
                let term = apply_leading_level(a, target, d, j, j - i, g.level(j - i));
                acc.iter_mut().zip(term).for_each(|(p, q)| *p += q);
            }
            lvl.push(acc);
        }
    }
    ControlledPath::new(x.times().to_vec(), d, n, target, alpha, levels)
}

/// Independent random values at every time and level; not controlled.
pub fn random_blocks<R: Rng + ?Sized>(
    rng: &mut R,
    x: &GeometricRoughPath,
    target: usize,
    alpha: f64,
) -> Result<ControlledPath> {
    let (d, n) = (x.dim(), x.depth());
    let levels = (0..n)
        .map(|i| {
            (0..x.len())
                .map(|_| (0..target * pow(d, i)).map(|_| unit(rng)).collect())
                .collect()
        })
        .collect();
    ControlledPath::new(x.times().to_vec(), d, n, target, alpha, levels)
}
