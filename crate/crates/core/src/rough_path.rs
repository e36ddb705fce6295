//! Piecewise-linear paths and their level-`N` lifts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{check_caps, is_group_like, TensorSeries};

/// A continuous path given by its values on a strictly increasing grid,
/// interpolated linearly between grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearPath {
    times: Vec<f64>,
    points: Vec<Vec<f64>>,
}

pub(crate) fn check_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::InvalidInput("grid needs at least two points".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("grid contains non-finite times".into()));
    }
    if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!(
            "grid not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

impl PiecewiseLinearPath {
    pub fn new(times: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        check_grid(&times)?;
        if points.len() != times.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} times but {} points",
                times.len(),
                points.len()
            )));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::InvalidInput("points have dimension 0".into()));
        }
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::DimensionMismatch("points of differing dimension".into()));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite path value".into()));
        }
        Ok(PiecewiseLinearPath { times, points })
    }

    /// `x_t = x0 + t·w` sampled on `m` equal steps of `[0, horizon]`.
    pub fn linear(x0: &[f64], w: &[f64], horizon: f64, m: usize) -> Result<Self> {
        if x0.len() != w.len() {
            return Err(Error::DimensionMismatch("x0 and w differ in length".into()));
        }
        let times: Vec<f64> = (0..=m).map(|i| horizon * i as f64 / m as f64).collect();
        let points = times
            .iter()
            .map(|&t| x0.iter().zip(w).map(|(a, b)| a + t * b).collect())
            .collect();
        Self::new(times, points)
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn increment(&self, i: usize) -> Vec<f64> {
        self.points[i + 1]
            .iter()
            .zip(&self.points[i])
            .map(|(b, a)| b - a)
            .collect()
    }

    /// Value at an arbitrary time by linear interpolation (clamped at the ends).
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.points[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.points[n - 1].clone();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let lam = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        self.points[i]
            .iter()
            .zip(&self.points[i + 1])
            .map(|(a, b)| a + lam * (b - a))
            .collect()
    }

    /// Insert the midpoint of every segment. The geometric path is unchanged.
    pub fn refine(&self) -> PiecewiseLinearPath {
        let mut times = Vec::with_capacity(2 * self.times.len() - 1);
        let mut points = Vec::with_capacity(times.capacity());
        for i in 0..self.segments() {
            times.push(self.times[i]);
            points.push(self.points[i].clone());
            times.push(0.5 * (self.times[i] + self.times[i + 1]));
            points.push(
                self.points[i]
                    .iter()
                    .zip(&self.points[i + 1])
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect(),
            );
        }
        times.push(*self.times.last().unwrap());
        points.push(self.points.last().unwrap().clone());
        PiecewiseLinearPath { times, points }
    }

    /// Add `eps·g(t_i)` to every sample.
    pub fn perturbed(&self, eps: f64, g: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let points = self
            .times
            .iter()
            .zip(&self.points)
            .map(|(&t, p)| {
                let dp = g(t);
                if dp.len() != p.len() {
                    return Err(Error::DimensionMismatch("perturbation dimension".into()));
                }
                Ok(p.iter().zip(dp).map(|(a, b)| a + eps * b).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.times.clone(), points)
    }

    /// Parse CSV with header `t,x1,…,xd`.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "t" {
            return Err(Error::InvalidInput(
                "path CSV header must be `t,x1,...,xd`".into(),
            ));
        }
        for (i, h) in headers.iter().enumerate().skip(1) {
            if h != format!("x{i}") {
                return Err(Error::InvalidInput(format!(
                    "unexpected column `{h}`, expected `x{i}`"
                )));
            }
        }
        let d = headers.len() - 1;
        let mut times = Vec::new();
        let mut points = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(Error::InvalidInput(format!(
                    "row {} has {} columns, expected {}",
                    line + 1,
                    rec.len(),
                    d + 1
                )));
            }
            let vals = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|e| {
                        Error::InvalidInput(format!("row {}: `{f}`: {e}", line + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            times.push(vals[0]);
            points.push(vals[1..].to_vec());
        }
        Self::new(times, points)
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("t");
        for i in 1..=self.dim() {
            s.push_str(&format!(",x{i}"));
        }
        s.push('\n');
        for (t, p) in self.times.iter().zip(&self.points) {
            s.push_str(&t.to_string());
            for x in p {
                s.push(',');
                s.push_str(&x.to_string());
            }
            s.push('\n');
        }
        s
    }
}

/// A grid-sampled geometric rough path `t ↦ X_{0,t}` of depth `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricRoughPath {
    times: Vec<f64>,
    /// Starting point of the underlying path (used by the canonical lift).
    x0: Vec<f64>,
    beta: f64,
    values: Vec<TensorSeries>,
    #[serde(skip)]
    steps: Vec<TensorSeries>,
}

fn step_increments(values: &[TensorSeries]) -> Vec<TensorSeries> {
    values
        .windows(2)
        .map(|w| w[0].inverse_unchecked().mul_unchecked(&w[1]))
        .collect()
}

impl GeometricRoughPath {
    /// Build from precomputed group values `G_i = X_{0,t_i}`; checks that
    /// `G_0` is the unit and every value is group-like within `1e-10`.
    pub fn from_values(
        times: Vec<f64>,
        values: Vec<TensorSeries>,
        x0: Vec<f64>,
        beta: f64,
    ) -> Result<Self> {
        check_grid(&times)?;
        if values.len() != times.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} times but {} group values",
                times.len(),
                values.len()
            )));
        }
        let (d, n) = (values[0].dim(), values[0].depth());
        check_caps(d, n)?;
        if x0.len() != d {
            return Err(Error::DimensionMismatch("origin point dimension".into()));
        }
        if values.iter().any(|g| g.dim() != d || g.depth() != n) {
            return Err(Error::DimensionMismatch("group values of mixed shape".into()));
        }
        let unit = TensorSeries::unit_unchecked(d, n);
        if values[0].max_abs_diff(&unit)? > 1e-12 {
            return Err(Error::InvalidInput("G_0 must be the unit".into()));
        }
        for (i, g) in values.iter().enumerate() {
            let rep = is_group_like(g, 1e-10)?;
            if !rep.group_like {
                return Err(Error::InvalidInput(format!(
                    "value at grid index {i} is not group-like (deviation {:e})",
                    rep.max_deviation
                )));
            }
        }
        Ok(Self::assemble(times, values, x0, beta))
    }

    fn assemble(times: Vec<f64>, values: Vec<TensorSeries>, x0: Vec<f64>, beta: f64) -> Self {
        let steps = step_increments(&values);
        GeometricRoughPath {
            times,
            x0,
            beta,
            values,
            steps,
        }
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    pub fn depth(&self) -> usize {
        self.values[0].depth()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
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

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn value(&self, i: usize) -> &TensorSeries {
        &self.values[i]
    }

    pub fn values(&self) -> &[TensorSeries] {
        &self.values
    }

    /// `X_{t_i, t_{i+1}}`.
    pub fn step(&self, i: usize) -> &TensorSeries {
        &self.steps[i]
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.times.len() {
            return Err(Error::OutOfRange(format!(
                "grid index {i} outside 0..{}",
                self.times.len()
            )));
        }
        Ok(())
    }

    /// `X_{s,t} = G_s^{-1} ⊗ G_t`.
    pub fn increment(&self, s: usize, t: usize) -> Result<TensorSeries> {
        self.check_index(s)?;
        self.check_index(t)?;
        if s > t {
            return Err(Error::InvalidInput(format!("increment({s}, {t}) with s > t")));
        }
        if s == t {
            return Ok(TensorSeries::unit_unchecked(self.dim(), self.depth()));
        }
        if s + 1 == t {
            return Ok(self.steps[s].clone());
        }
        Ok(self.values[s].inverse_unchecked().mul_unchecked(&self.values[t]))
    }

    /// Visit `X_{s,t}` for every grid pair `lo ≤ s < t ≤ hi`, row by row.
    pub fn for_each_pair(&self, lo: usize, hi: usize, mut f: impl FnMut(usize, usize, &TensorSeries)) {
        for s in lo..hi {
            let mut cur = self.steps[s].clone();
            f(s, s + 1, &cur);
            for t in s + 2..=hi {
                cur = cur.mul_unchecked(&self.steps[t - 1]);
                f(s, t, &cur);
            }
        }
    }

    /// `max_{s<t} ‖X^i_{s,t}‖ / (t-s)^{iβ}` over the grid.
    pub fn holder_norm(&self, level: usize, beta: f64) -> Result<f64> {
        if level == 0 || level > self.depth() {
            return Err(Error::OutOfRange(format!(
                "level {level} outside 1..={}",
                self.depth()
            )));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidInput(format!("exponent {beta} outside (0, 1]")));
        }
        let mut best: f64 = 0.0;
        let exp = level as f64 * beta;
        self.for_each_pair(0, self.len() - 1, |s, t, x| {
            let h = self.times[t] - self.times[s];
            best = best.max(x.norm(level) / h.powf(exp));
        });
        Ok(best)
    }

    /// `ρ_β(X, X̃) = Σ_i ‖X^i - X̃^i‖_{iβ}`.
    pub fn rho_beta(&self, other: &GeometricRoughPath, beta: f64) -> Result<f64> {
        if self.times != other.times {
            return Err(Error::DimensionMismatch("rough paths on different grids".into()));
        }
        if self.dim() != other.dim() || self.depth() != other.depth() {
            return Err(Error::DimensionMismatch("rough paths of different shape".into()));
        }
        let n = self.depth();
        let mut best = vec![0.0f64; n + 1];
        let hi = self.len() - 1;
        for s in 0..hi {
            let mut a = self.steps[s].clone();
            let mut b = other.steps[s].clone();
            for t in s + 1..=hi {
                if t > s + 1 {
                    a = a.mul_unchecked(&self.steps[t - 1]);
                    b = b.mul_unchecked(&other.steps[t - 1]);
                }
                let h = self.times[t] - self.times[s];
                for (i, slot) in best.iter_mut().enumerate().skip(1) {
                    let diff: f64 = a.level(i).iter().zip(b.level(i)).map(|(x, y)| (x - y).abs()).sum();
                    *slot = slot.max(diff / h.powf(i as f64 * beta));
                }
            }
        }
        Ok(best.iter().sum())
    }

    /// `‖X‖_β = ρ_β(X, 𝟏)`.
    pub fn norm(&self, beta: f64) -> Result<f64> {
        (1..=self.depth())
            .map(|i| self.holder_norm(i, beta))
            .sum()
    }

    /// The same path seen on the sub-grid `t_a..=t_b`, rebased at `t_a`.
    pub fn restrict(&self, a: usize, b: usize) -> Result<GeometricRoughPath> {
        self.check_index(b)?;
        if a >= b {
            return Err(Error::InvalidInput(format!("restrict({a}, {b}) needs a < b")));
        }
        let inv = self.values[a].inverse_unchecked();
        let values: Vec<TensorSeries> = self.values[a..=b]
            .iter()
            .map(|g| inv.mul_unchecked(g))
            .collect();
        let x0 = self
            .x0
            .iter()
            .zip(self.values[a].level(1))
            .map(|(x, dx)| x + dx)
            .collect();
        Ok(GeometricRoughPath {
            times: self.times[a..=b].to_vec(),
            x0,
            beta: self.beta,
            values,
            steps: self.steps[a..b].to_vec(),
        })
    }

    /// Grid index of time `t`, if `t` is a grid point (within `1e-12`).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let scale = 1e-12 * self.times.last().unwrap().abs().max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= scale)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("rough path serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: GeometricRoughPath = serde_json::from_str(s)?;
        Self::from_values(raw.times, raw.values, raw.x0, raw.beta)
    }
}

/// Lift a piecewise-linear path by Chen products of segment exponentials.
pub fn lift_path(p: &PiecewiseLinearPath, depth: usize, beta: f64) -> Result<GeometricRoughPath> {
    check_caps(p.dim(), depth)?;
    let mut values = Vec::with_capacity(p.times.len());
    let mut steps = Vec::with_capacity(p.segments());
    let mut cur = TensorSeries::unit_unchecked(p.dim(), depth);
    values.push(cur.clone());
    for i in 0..p.segments() {
        let step = TensorSeries::exp_segment(&p.increment(i), depth)?;
        cur = cur.mul_unchecked(&step);
        values.push(cur.clone());
        steps.push(step);
    }
    Ok(GeometricRoughPath {
        times: p.times.clone(),
        x0: p.points[0].clone(),
        beta,
        values,
        steps,
    })
}
