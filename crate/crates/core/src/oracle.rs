//! Brute-force references: classical RK4 integration, left-point
//! Riemann–Stieltjes sums and explicit enumeration of subset partitions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rough_path::PiecewiseLinearPath;
use crate::tensor::{BoxTensor, TensorSeries, Word};

/// A reference value together with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub value: Vec<Vec<f64>>,
    pub method: &'static str,
    pub resolution: usize,
}

/// `out[u] = Σ_v a[u·d + v] dx[v]`.
fn apply_map(a: &[f64], dx: &[f64]) -> Vec<f64> {
    let d = dx.len();
    a.chunks(d)
        .map(|row| row.iter().zip(dx).map(|(p, q)| p * q).sum())
        .collect()
}

/// Classical RK4 for `dy = F(y) dx` along each segment of `x`, with
/// `substeps` equal steps per segment. Returns `y` at every grid point.
pub fn ode_rk4(
    field: &dyn Fn(&[f64]) -> Vec<f64>,
    x: &PiecewiseLinearPath,
    y0: &[f64],
    substeps: usize,
) -> Result<OracleResult> {
    if substeps == 0 {
        return Err(Error::InvalidInput("substeps must be positive".into()));
    }
    let m = y0.len();
    let probe = field(y0);
    if probe.len() != m * x.dim() {
        return Err(Error::DimensionMismatch(format!(
            "field returns {} entries, expected {}",
            probe.len(),
            m * x.dim()
        )));
    }
    let mut y = y0.to_vec();
    let mut out = vec![y.clone()];
    let axpy = |y: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        y.iter().zip(k).map(|(a, b)| a + c * b).collect()
    };
    for i in 0..x.segments() {
        let dx: Vec<f64> = x.increment(i).iter().map(|v| v / substeps as f64).collect();
        for _ in 0..substeps {
            let k1 = apply_map(&field(&y), &dx);
            let k2 = apply_map(&field(&axpy(&y, &k1, 0.5)), &dx);
            let k3 = apply_map(&field(&axpy(&y, &k2, 0.5)), &dx);
            let k4 = apply_map(&field(&axpy(&y, &k3, 1.0)), &dx);
            for c in 0..m {
                y[c] += (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) / 6.0;
            }
        }
        out.push(y.clone());
    }
    Ok(OracleResult {
        value: out,
        method: "rk4",
        resolution: substeps,
    })
}

/// Left-point sum `Σ f(τ_k)(x_{τ_{k+1}} - x_{τ_k})` with `refinement` equal
/// sub-steps per segment; `f(t)` returns a flattened map `V → U`.
pub fn riemann_stieltjes(
    f: &dyn Fn(f64) -> Vec<f64>,
    x: &PiecewiseLinearPath,
    refinement: usize,
) -> Result<OracleResult> {
    if refinement == 0 {
        return Err(Error::InvalidInput("refinement must be positive".into()));
    }
    let d = x.dim();
    let first = f(x.times()[0]);
    if first.len() % d != 0 {
        return Err(Error::DimensionMismatch("integrand is not a map V → U".into()));
    }
    let mut acc = vec![0.0; first.len() / d];
    for i in 0..x.segments() {
        let (t0, t1) = (x.times()[i], x.times()[i + 1]);
        let dx: Vec<f64> = x.increment(i).iter().map(|v| v / refinement as f64).collect();
        for k in 0..refinement {
            let t = t0 + (t1 - t0) * k as f64 / refinement as f64;
            let a = f(t);
            for (o, v) in acc.iter_mut().zip(apply_map(&a, &dx)) {
                *o += v;
            }
        }
    }
    Ok(OracleResult {
        value: vec![acc],
        method: "left-riemann-stieltjes",
        resolution: refinement,
    })
}

/// All ordered `k`-tuples of disjoint subsets of `{1, …, r}` whose union is
/// everything; empty parts are allowed only when `allow_empty` is set.
pub fn enumerate_partitions(r: usize, k: usize, allow_empty: bool) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut parts = vec![Vec::new(); k];
    place(1, r, &mut parts, allow_empty, &mut out);
    out
}

fn place(
    next: usize,
    r: usize,
    parts: &mut Vec<Vec<usize>>,
    allow_empty: bool,
    out: &mut Vec<Vec<Vec<usize>>>,
) {
    if next > r {
        if allow_empty || parts.iter().all(|p| !p.is_empty()) {
            out.push(parts.clone());
        }
        return;
    }
    for b in 0..parts.len() {
        parts[b].push(next);
        place(next + 1, r, parts, allow_empty, out);
        parts[b].pop();
    }
}

/// `δ_k(ξ)` assembled directly from the partition sum, word by word.
pub fn delta_k_by_partitions(xi: &TensorSeries, k: usize) -> Result<BoxTensor> {
    let (d, n) = (xi.dim(), xi.depth());
    let mut out = BoxTensor::zero(d, n, k)?;
    for r in 0..=n {
        let partitions = enumerate_partitions(r, k, true);
        for word in Word::all(d, r) {
            let c = xi.coeff(&word);
            if c == 0.0 {
                continue;
            }
            for parts in &partitions {
                let slots: Vec<Word> = parts
                    .iter()
                    .map(|p| {
                        let zero_based: Vec<usize> = p.iter().map(|i| i - 1).collect();
                        word.restrict(&zero_based)
                    })
                    .collect();
                out.add_term(&slots, c)?;
            }
        }
    }
    Ok(out)
}
