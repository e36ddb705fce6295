//! Controlled rough paths `(Y^0, …, Y^{N-1})` with respect to a geometric
//! rough path, their remainders, seminorms and distances.
//!
//! Level `i` at each grid time is a dense block of `m·d^i` numbers laid out
//! as `[target][word]`, i.e. the linear map `V^{⊗i} → U` in row-major form.
//! Applying `Y^{i+j}` to `X^j` produces the level-`i` map `ξ ↦ Y^{i+j}(X^j ⊗ ξ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rough_path::GeometricRoughPath;
use crate::tensor::{check_caps, pow, TensorSeries};

/// `ξ ↦ y(x ⊗ ξ)`: contract the leading `j` letters of a level-`l` block.
pub fn apply_leading_level(
    y: &[f64],
    target: usize,
    dim: usize,
    l: usize,
    j: usize,
    x: &[f64],
) -> Vec<f64> {
    let rest = pow(dim, l - j);
    let full = pow(dim, l);
    let mut out = vec![0.0; target * rest];
    for u in 0..target {
        let row = &y[u * full..(u + 1) * full];
        let dst = &mut out[u * rest..(u + 1) * rest];
        for (w, &c) in x.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, &v) in dst.iter_mut().zip(&row[w * rest..(w + 1) * rest]) {
                *o += c * v;
            }
        }
    }
    out
}

pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Check `1/(N+1) < α < β ≤ 1/N`. Returns a warning when `α` is within
/// `1e-3` of the lower end, where `C_{N,α}` becomes very large.
pub fn validate_exponents(depth: usize, alpha: f64, beta: f64) -> Result<Option<String>> {
    let lo = 1.0 / (depth as f64 + 1.0);
    let hi = 1.0 / depth as f64;
    if !(alpha.is_finite() && beta.is_finite()) {
        return Err(Error::InvalidInput("exponents must be finite".into()));
    }
    if (alpha - lo).abs() <= 1e-12 {
        return Err(Error::InvalidInput(format!(
            "α = {alpha} sits on the boundary 1/(N+1); the compensated sums need (N+1)α > 1"
        )));
    }
    if !(alpha > lo && alpha < beta && beta <= hi + 1e-15) {
        return Err(Error::InvalidInput(format!(
            "need 1/(N+1) < α < β ≤ 1/N, got N={depth}, α={alpha}, β={beta}"
        )));
    }
    if alpha - lo < 1e-3 {
        return Ok(Some(format!("α = {alpha} is very close to 1/(N+1) = {lo}")));
    }
    Ok(None)
}

/// Midpoint of `(1/(N+1), β)`.
pub fn default_alpha(depth: usize, beta: f64) -> f64 {
    0.5 * (1.0 / (depth as f64 + 1.0) + beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledPath {
    times: Vec<f64>,
    dim: usize,
    depth: usize,
    target: usize,
    alpha: f64,
    /// `levels[i][k]` is the level-`i` block at grid index `k`.
    levels: Vec<Vec<Vec<f64>>>,
}

impl ControlledPath {
    pub fn new(
        times: Vec<f64>,
        dim: usize,
        depth: usize,
        target: usize,
        alpha: f64,
        levels: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        check_caps(dim, depth)?;
        if target == 0 {
            return Err(Error::InvalidInput("target dimension 0".into()));
        }
        if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("grid must be non-empty and increasing".into()));
        }
        if levels.len() != depth {
            return Err(Error::DimensionMismatch(format!(
                "{} levels for depth {depth} (expected N levels 0..N-1)",
                levels.len()
            )));
        }
        for (i, lvl) in levels.iter().enumerate() {
            if lvl.len() != times.len() {
                return Err(Error::DimensionMismatch(format!(
                    "level {i} has {} samples for {} grid points",
                    lvl.len(),
                    times.len()
                )));
            }
            let size = target * pow(dim, i);
            if lvl.iter().any(|b| b.len() != size) {
                return Err(Error::DimensionMismatch(format!(
                    "level {i} blocks must have {size} entries"
                )));
            }
        }
        Ok(ControlledPath {
            times,
            dim,
            depth,
            target,
            alpha,
            levels,
        })
    }

    pub fn zeros(times: Vec<f64>, dim: usize, depth: usize, target: usize, alpha: f64) -> Result<Self> {
        let n = times.len();
        let levels = (0..depth)
            .map(|i| vec![vec![0.0; target * pow(dim, i)]; n])
            .collect();
        Self::new(times, dim, depth, target, alpha, levels)
    }

    /// `Y^0 = x0 + X^1_{0,t}`, `Y^1 = id`, higher levels zero.
    pub fn canonical_lift(x: &GeometricRoughPath, alpha: f64) -> Result<Self> {
        let (d, n) = (x.dim(), x.depth());
        if n < 2 {
            return Err(Error::InvalidInput("canonical lift needs N ≥ 2".into()));
        }
        let mut y = Self::zeros(x.times().to_vec(), d, n, d, alpha)?;
        for (k, g) in x.values().iter().enumerate() {
            y.levels[0][k] = x.x0().iter().zip(g.level(1)).map(|(a, b)| a + b).collect();
            for u in 0..d {
                y.levels[1][k][u * d + u] = 1.0;
            }
        }
        Ok(y)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn value(&self, level: usize, k: usize) -> &[f64] {
        &self.levels[level][k]
    }

    pub fn value_mut(&mut self, level: usize, k: usize) -> &mut [f64] {
        &mut self.levels[level][k]
    }

    pub fn level_path(&self, level: usize) -> &[Vec<f64>] {
        &self.levels[level]
    }

    pub fn endpoint(&self) -> &[f64] {
        self.levels[0].last().unwrap()
    }

    fn check_driver(&self, x: &GeometricRoughPath) -> Result<()> {
        if x.dim() != self.dim || x.depth() != self.depth {
            return Err(Error::DimensionMismatch(format!(
                "driver (d={}, N={}) vs controlled path (d={}, N={})",
                x.dim(),
                x.depth(),
                self.dim,
                self.depth
            )));
        }
        if x.times() != self.times.as_slice() {
            return Err(Error::DimensionMismatch(
                "controlled path and driver must share the grid".into(),
            ));
        }
        Ok(())
    }

    fn same_shape(&self, other: &ControlledPath) -> Result<()> {
        if self.times != other.times
            || self.dim != other.dim
            || self.depth != other.depth
            || self.target != other.target
        {
            return Err(Error::DimensionMismatch("controlled paths differ in shape".into()));
        }
        Ok(())
    }

    /// `RY^i_{s,t}` given the increment `X_{s,t}`.
    pub fn remainder_with(&self, level: usize, s: usize, t: usize, x: &TensorSeries) -> Vec<f64> {
        let ys = &self.levels[level][s];
        let mut r: Vec<f64> = self.levels[level][t]
            .iter()
            .zip(ys)
            .map(|(a, b)| a - b)
            .collect();
        for j in 1..self.depth - level {
            let term = apply_leading_level(
                &self.levels[level + j][s],
                self.target,
                self.dim,
                level + j,
                j,
                x.level(j),
            );
            r.iter_mut().zip(term).for_each(|(a, b)| *a -= b);
        }
        r
    }

    pub fn remainder(&self, x: &GeometricRoughPath, level: usize, s: usize, t: usize) -> Result<Vec<f64>> {
        self.check_driver(x)?;
        if level >= self.depth {
            return Err(Error::OutOfRange(format!(
                "remainder level {level} outside 0..{}",
                self.depth
            )));
        }
        Ok(self.remainder_with(level, s, t, &x.increment(s, t)?))
    }

    /// `max_{s<t} ‖RY^i_{s,t}‖ / (t-s)^{(N-i)α}` for every level `i`.
    pub fn remainder_norms(&self, x: &GeometricRoughPath, alpha: f64) -> Result<Vec<f64>> {
        self.check_driver(x)?;
        let mut best = vec![0.0f64; self.depth];
        if self.len() < 2 {
            return Ok(best);
        }
        x.for_each_pair(0, self.len() - 1, |s, t, inc| {
            let h = self.times[t] - self.times[s];
            for (i, b) in best.iter_mut().enumerate() {
                let r = l1(&self.remainder_with(i, s, t, inc));
                *b = b.max(r / h.powf((self.depth - i) as f64 * alpha));
            }
        });
        Ok(best)
    }

    /// `‖Y‖_{X;α}`.
    pub fn seminorm(&self, x: &GeometricRoughPath, alpha: f64) -> Result<f64> {
        Ok(self.remainder_norms(x, alpha)?.iter().sum())
    }

    /// `⦀Y⦀ = ‖Y‖_{X;α} + Σ_i |Y^i_0|`.
    pub fn triple_norm(&self, x: &GeometricRoughPath, alpha: f64) -> Result<f64> {
        let start: f64 = (0..self.depth).map(|i| l1(&self.levels[i][0])).sum();
        Ok(self.seminorm(x, alpha)? + start)
    }

    /// `max_{s<t} ‖Y^i_t - Y^i_s‖ / (t-s)^exponent`.
    pub fn holder_norm_level(&self, level: usize, exponent: f64) -> Result<f64> {
        if level >= self.depth {
            return Err(Error::OutOfRange(format!("level {level}")));
        }
        let lvl = &self.levels[level];
        let mut best: f64 = 0.0;
        for s in 0..self.len() {
            for t in s + 1..self.len() {
                let diff: f64 = lvl[t].iter().zip(&lvl[s]).map(|(a, b)| (a - b).abs()).sum();
                best = best.max(diff / (self.times[t] - self.times[s]).powf(exponent));
            }
        }
        Ok(best)
    }

    pub fn scale(&self, c: f64) -> ControlledPath {
        let mut out = self.clone();
        out.levels
            .iter_mut()
            .flatten()
            .flatten()
            .for_each(|v| *v *= c);
        out
    }

    pub fn add(&self, other: &ControlledPath) -> Result<ControlledPath> {
        self.same_shape(other)?;
        let mut out = self.clone();
        for (a, b) in out.levels.iter_mut().flatten().zip(other.levels.iter().flatten()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &ControlledPath) -> Result<ControlledPath> {
        self.add(&other.scale(-1.0))
    }

    /// Largest absolute entry difference over all levels and times.
    pub fn max_abs_diff(&self, other: &ControlledPath) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .levels
            .iter()
            .flatten()
            .flatten()
            .zip(other.levels.iter().flatten().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// The sub-path on grid indices `a..=b`.
    pub fn restrict(&self, a: usize, b: usize) -> Result<ControlledPath> {
        if a > b || b >= self.len() {
            return Err(Error::OutOfRange(format!("restrict({a}, {b})")));
        }
        Ok(ControlledPath {
            times: self.times[a..=b].to_vec(),
            levels: self
                .levels
                .iter()
                .map(|l| l[a..=b].to_vec())
                .collect(),
            ..*self
        })
    }

    /// Level-0 path as CSV `t,y1,…,ym`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("t");
        for i in 1..=self.target {
            s.push_str(&format!(",y{i}"));
        }
        s.push('\n');
        for (t, y) in self.times.iter().zip(&self.levels[0]) {
            s.push_str(&t.to_string());
            for v in y {
                s.push(',');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("controlled path serializes")
    }
}

/// `d_{X,X̃;α}(Y, Ỹ) = Σ_i ‖RY^i - RỸ^i‖_{(N-i)α}` over a shared grid.
pub fn ctrl_distance(
    y: &ControlledPath,
    yt: &ControlledPath,
    x: &GeometricRoughPath,
    xt: &GeometricRoughPath,
    alpha: f64,
) -> Result<f64> {
    y.check_driver(x)?;
    yt.check_driver(xt)?;
    y.same_shape(yt)?;
    let n = y.depth;
    let mut best = vec![0.0f64; n];
    let hi = y.len() - 1;
    for s in 0..hi {
        let mut a = x.step(s).clone();
        let mut b = xt.step(s).clone();
        for t in s + 1..=hi {
            if t > s + 1 {
                a = a.mul_unchecked(x.step(t - 1));
                b = b.mul_unchecked(xt.step(t - 1));
            }
            let h = y.times[t] - y.times[s];
            for (i, slot) in best.iter_mut().enumerate() {
                let ra = y.remainder_with(i, s, t, &a);
                let rb = yt.remainder_with(i, s, t, &b);
                let diff: f64 = ra.iter().zip(&rb).map(|(p, q)| (p - q).abs()).sum();
                *slot = slot.max(diff / h.powf((n - i) as f64 * alpha));
            }
        }
    }
    Ok(best.iter().sum())
}

pub fn ctrl_seminorm(y: &ControlledPath, x: &GeometricRoughPath, alpha: f64) -> Result<f64> {
    y.seminorm(x, alpha)
}

pub fn triple_norm(y: &ControlledPath, x: &GeometricRoughPath, alpha: f64) -> Result<f64> {
    y.triple_norm(x, alpha)
}

/// Join `left` on `[a,u]` and `right` on `[u,b]`; the combined grid must be a
/// contiguous run of the driver's grid and all levels must agree at `u`.
pub fn concatenate(
    left: &ControlledPath,
    right: &ControlledPath,
    x: &GeometricRoughPath,
) -> Result<ControlledPath> {
    if left.dim != right.dim || left.depth != right.depth || left.target != right.target {
        return Err(Error::DimensionMismatch("pieces differ in shape".into()));
    }
    let u_left = *left.times.last().unwrap();
    if u_left != right.times[0] {
        return Err(Error::InvalidInput(format!(
            "pieces do not meet: left ends at {u_left}, right starts at {}",
            right.times[0]
        )));
    }
    let last = left.len() - 1;
    for i in 0..left.depth {
        let gap = left.levels[i][last]
            .iter()
            .zip(&right.levels[i][0])
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if gap > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "level {i} mismatch {gap:e} at the junction t={u_left}"
            )));
        }
    }
    let mut times = left.times.clone();
    times.extend_from_slice(&right.times[1..]);
    let start = x
        .times()
        .iter()
        .position(|&t| t == times[0])
        .ok_or_else(|| Error::InvalidInput("joined grid not on the driver grid".into()))?;
    if x.times().get(start..start + times.len()) != Some(times.as_slice()) {
        return Err(Error::InvalidInput("joined grid not a run of the driver grid".into()));
    }
    let levels = left
        .levels
        .iter()
        .zip(&right.levels)
        .map(|(l, r)| {
            let mut v = l.clone();
            v.extend_from_slice(&r[1..]);
            v
        })
        .collect();
    Ok(ControlledPath {
        times,
        levels,
        ..*left
    })
}
