//! Lip-γ functions `F = (F^0, …, F^N)` from `W = R^m` into `R^p`, and their
//! composition with controlled paths.
//!
//! `F^j(y)` is returned as a block of `p·m^j` numbers laid out
//! `[out][c_1 … c_j]`. For an RDE vector field `F: U → L(V;U)` we have
//! `W = U` and `p = m·d`, output index `u·d + v`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controlled::{apply_leading_level, l1, ControlledPath};
use crate::error::{Error, Result};
use crate::rough_path::GeometricRoughPath;
use crate::tensor::{blocks_of, delta_k, factorial, pow, surjections, SymTensor, TensorSeries, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Sin,
    Cos,
    Exp,
}

impl Builtin {
    fn deriv(self, j: usize, x: f64) -> f64 {
        let shift = j as f64 * std::f64::consts::FRAC_PI_2;
        match self {
            Builtin::Sin => (x + shift).sin(),
            Builtin::Cos => (x + shift).cos(),
            Builtin::Exp => x.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub exponents: Vec<u32>,
    /// One coefficient per output component.
    pub coeffs: Vec<f64>,
}

/// Vector-field description as it appears in scenario configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldSpec {
    Constant {
        input_dim: usize,
        value: Vec<f64>,
    },
    /// `F^0(y) = A y + b`.
    Linear {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        bias: Option<Vec<f64>>,
    },
    /// `F^0_o(y) = Σ_terms c_o Π_k y_k^{e_k}`.
    Polynomial {
        input_dim: usize,
        output_dim: usize,
        terms: Vec<PolyTerm>,
    },
    /// `F^0_o(y) = b_o + Σ_c A[o][c] g(y_c)` with `g ∈ {sin, cos, exp}`.
    Builtin {
        function: Builtin,
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        bias: Option<Vec<f64>>,
    },
}

fn matrix_shape(matrix: &[Vec<f64>]) -> Result<(usize, usize)> {
    let p = matrix.len();
    if p == 0 || matrix[0].is_empty() {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    let m = matrix[0].len();
    if matrix.iter().any(|r| r.len() != m) {
        return Err(Error::DimensionMismatch("ragged matrix".into()));
    }
    Ok((p, m))
}

impl FieldSpec {
    /// `(input_dim, output_dim)`, after validating the coefficients.
    pub fn shape(&self) -> Result<(usize, usize)> {
        match self {
            FieldSpec::Constant { input_dim, value } => {
                if *input_dim == 0 || value.is_empty() {
                    return Err(Error::InvalidInput("constant field with empty shape".into()));
                }
                Ok((*input_dim, value.len()))
            }
            FieldSpec::Linear { matrix, bias } | FieldSpec::Builtin { matrix, bias, .. } => {
                let (p, m) = matrix_shape(matrix)?;
                if let Some(b) = bias {
                    if b.len() != p {
                        return Err(Error::DimensionMismatch("bias length".into()));
                    }
                }
                Ok((m, p))
            }
            FieldSpec::Polynomial {
                input_dim,
                output_dim,
                terms,
            } => {
                if *input_dim == 0 || *output_dim == 0 {
                    return Err(Error::InvalidInput("polynomial with empty shape".into()));
                }
                for t in terms {
                    if t.exponents.len() != *input_dim || t.coeffs.len() != *output_dim {
                        return Err(Error::DimensionMismatch(
                            "polynomial term does not match declared dimensions".into(),
                        ));
                    }
                }
                Ok((*input_dim, *output_dim))
            }
        }
    }
}

#[derive(Deserialize)]
struct LipRaw {
    spec: FieldSpec,
    degree: usize,
    /// Defaults to `degree + 1`.
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(default)]
    lip_norm: Option<f64>,
}

impl TryFrom<LipRaw> for LipFunction {
    type Error = Error;

    fn try_from(raw: LipRaw) -> Result<Self> {
        LipFunction::new(raw.spec, raw.degree, raw.gamma.unwrap_or(raw.degree as f64 + 1.0), raw.lip_norm)
    }
}

/// A Lip-γ function with `degree` derivative levels and a declared bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LipRaw")]
pub struct LipFunction {
    spec: FieldSpec,
    degree: usize,
    gamma: f64,
    /// Declared `‖F‖_{Lip-γ}`; `None` means no bound is claimed.
    lip_norm: Option<f64>,
    #[serde(skip)]
    input_dim: usize,
    #[serde(skip)]
    output_dim: usize,
}

impl LipFunction {
    pub fn new(spec: FieldSpec, degree: usize, gamma: f64, lip_norm: Option<f64>) -> Result<Self> {
        let (m, p) = spec.shape()?;
        if degree == 0 {
            return Err(Error::InvalidInput("degree must be at least 1".into()));
        }
        if !(gamma > degree as f64 && gamma <= degree as f64 + 1.0) {
            return Err(Error::InvalidInput(format!(
                "γ = {gamma} outside ({degree}, {}]",
                degree + 1
            )));
        }
        Ok(LipFunction {
            spec,
            degree,
            gamma,
            lip_norm,
            input_dim: m,
            output_dim: p,
        })
    }

    /// Degree `N` with `γ = N + 1`.
    pub fn smooth(spec: FieldSpec, degree: usize) -> Result<Self> {
        Self::new(spec, degree, degree as f64 + 1.0, None)
    }

    pub fn zero(input_dim: usize, output_dim: usize, degree: usize) -> Result<Self> {
        Self::smooth(
            FieldSpec::Constant {
                input_dim,
                value: vec![0.0; output_dim],
            },
            degree,
        )
    }

    /// The RDE field `y ↦ (v ↦ A_v y)`, i.e. `F^0(y)[u·d+v] = Σ_c A_v[u][c] y_c`.
    pub fn linear_rde(mats: &[Vec<Vec<f64>>], degree: usize) -> Result<Self> {
        let d = mats.len();
        if d == 0 {
            return Err(Error::InvalidInput("no matrices".into()));
        }
        let (m, _) = matrix_shape(&mats[0])?;
        let mut matrix = vec![vec![0.0; m]; m * d];
        for (v, a) in mats.iter().enumerate() {
            let (r, c) = matrix_shape(a)?;
            if r != m || c != m {
                return Err(Error::DimensionMismatch("matrices must be m×m".into()));
            }
            for u in 0..m {
                matrix[u * d + v] = a[u].clone();
            }
        }
        Self::smooth(FieldSpec::Linear { matrix, bias: None }, degree)
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lip_norm(&self) -> Option<f64> {
        self.lip_norm
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// `F^j(y)` as a `p·m^j` block.
    pub fn eval(&self, j: usize, y: &[f64]) -> Result<Vec<f64>> {
        if j > self.degree {
            return Err(Error::OutOfRange(format!(
                "derivative {j} above degree {}",
                self.degree
            )));
        }
        if y.len() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "argument of length {}, expected {}",
                y.len(),
                self.input_dim
            )));
        }
        Ok(self.eval_unchecked(j, y))
    }

    pub(crate) fn eval_unchecked(&self, j: usize, y: &[f64]) -> Vec<f64> {
        let (m, p) = (self.input_dim, self.output_dim);
        let size = pow(m, j);
        let mut out = vec![0.0; p * size];
        match &self.spec {
            FieldSpec::Constant { value, .. } => {
                if j == 0 {
                    out.copy_from_slice(value);
                }
            }
            FieldSpec::Linear { matrix, bias } => match j {
                0 => {
                    for (o, row) in matrix.iter().enumerate() {
                        out[o] = row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
                            + bias.as_ref().map_or(0.0, |b| b[o]);
                    }
                }
                1 => {
                    for (o, row) in matrix.iter().enumerate() {
                        out[o * m..(o + 1) * m].copy_from_slice(row);
                    }
                }
                _ => {}
            },
            FieldSpec::Builtin {
                function,
                matrix,
                bias,
            } => {
                for (o, row) in matrix.iter().enumerate() {
                    if j == 0 {
                        out[o] = bias.as_ref().map_or(0.0, |b| b[o])
                            + row
                                .iter()
                                .zip(y)
                                .map(|(a, &yc)| a * function.deriv(0, yc))
                                .sum::<f64>();
                    } else {
                        // only the diagonal multi-index (c, …, c) survives
                        let diag: usize = (0..j).map(|q| pow(m, q)).sum();
                        for (c, a) in row.iter().enumerate() {
                            out[o * size + c * diag] = a * function.deriv(j, y[c]);
                        }
                    }
                }
            }
            FieldSpec::Polynomial { terms, .. } => {
                let mut digits = vec![0usize; j];
                let mut counts = vec![0u32; m];
                for idx in 0..size {
                    crate::tensor::unflatten(idx, m, &mut digits);
                    counts.iter_mut().for_each(|c| *c = 0);
                    digits.iter().for_each(|&c| counts[c] += 1);
                    for term in terms {
                        let mut val = 1.0;
                        for k in 0..m {
                            let (e, n) = (term.exponents[k], counts[k]);
                            if n > e {
                                val = 0.0;
                                break;
                            }
                            let falling: f64 = (0..n).map(|q| (e - q) as f64).product();
                            val *= falling * y[k].powi((e - n) as i32);
                        }
                        if val != 0.0 {
                            for o in 0..p {
                                out[o * size + idx] += term.coeffs[o] * val;
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Dense `v^{⊗l}`.
fn tensor_power(v: &[f64], l: usize) -> Vec<f64> {
    let mut acc = vec![1.0];
    for _ in 0..l {
        acc = outer(&acc, v);
    }
    acc
}

fn outer(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|y| x * y));
    }
    out
}

fn outer_all(vs: &[&[f64]]) -> Vec<f64> {
    vs.iter().fold(vec![1.0], |acc, v| outer(&acc, v))
}

/// `R_j(x,y) = F^j(y) - Σ_{l=0}^{N-j} F^{j+l}(x)((y-x)^{⊠l} ⊠ ·)/l!`, as a
/// `p·m^j` block.
pub fn taylor_remainder(f: &LipFunction, j: usize, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let mut r = f.eval(j, y)?;
    f.eval(j, x)?;
    let h: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let (m, p) = (f.input_dim, f.output_dim);
    for l in 0..=f.degree - j {
        let block = f.eval_unchecked(j + l, x);
        let term = apply_leading_level(&block, p, m, j + l, l, &tensor_power(&h, l));
        let c = 1.0 / factorial(l);
        r.iter_mut().zip(term).for_each(|(a, b)| *a -= c * b);
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipReport {
    pub samples: usize,
    /// `max |F^j(x)|` per level `j`.
    pub max_derivative: Vec<f64>,
    /// `max |R_j(x,y)| / |x-y|^{γ-j}` per level `j`.
    pub max_ratio: Vec<f64>,
    /// Smallest `M` consistent with every sampled quantity.
    pub empirical_norm: f64,
    pub declared: Option<f64>,
    pub violation: bool,
}

/// Sample `samples` pairs uniformly from the box `[lo, hi]` and estimate the
/// Lip-γ constant. Report-only: a sample can falsify a bound, never prove it.
pub fn lip_norm_check(
    f: &LipFunction,
    samples: usize,
    lo: &[f64],
    hi: &[f64],
    seed: u64,
) -> Result<LipReport> {
    let m = f.input_dim;
    if lo.len() != m || hi.len() != m {
        return Err(Error::DimensionMismatch("sampling box dimension".into()));
    }
    if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
        return Err(Error::InvalidInput("sampling box has lo > hi".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        lo.iter().zip(hi).map(|(&a, &b)| if a == b { a } else { rng.gen_range(a..b) }).collect()
    };
    let n = f.degree;
    let mut max_derivative = vec![0.0f64; n + 1];
    let mut max_ratio = vec![0.0f64; n + 1];
    for _ in 0..samples {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let dist = l1(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        for j in 0..=n {
            max_derivative[j] = max_derivative[j].max(l1(&f.eval_unchecked(j, &x)));
            if dist > 0.0 {
                let r = l1(&taylor_remainder(f, j, &x, &y)?);
                max_ratio[j] = max_ratio[j].max(r / dist.powf(f.gamma - j as f64));
            }
        }
    }
    let empirical_norm = max_derivative
        .iter()
        .chain(&max_ratio)
        .fold(0.0f64, |a, &b| a.max(b));
    let violation = f.lip_norm.is_some_and(|mdecl| empirical_norm > mdecl * (1.0 + 1e-12));
    Ok(LipReport {
        samples,
        max_derivative,
        max_ratio,
        empirical_norm,
        declared: f.lip_norm,
        violation,
    })
}

/// Contract the `j` leading W-slots of `F^j(y)` with a dense `m^j` tensor.
fn apply_full(block: &[f64], p: usize, t: &[f64]) -> Vec<f64> {
    let size = t.len();
    (0..p)
        .map(|o| block[o * size..(o + 1) * size].iter().zip(t).map(|(a, b)| a * b).sum())
        .collect()
}

/// Column `Y^l(w)` of a level-`l` block (a `W`-vector).
fn column(y: &[f64], target: usize, word_idx: usize, stride: usize) -> Vec<f64> {
    (0..target).map(|u| y[u * stride + word_idx]).collect()
}

fn check_compose(f: &LipFunction, y: &ControlledPath, min_degree: usize) -> Result<()> {
    if f.degree < min_degree {
        return Err(Error::InvalidInput(format!(
            "F has degree {} but {min_degree} is required",
            f.degree
        )));
    }
    if f.input_dim != y.target() {
        return Err(Error::DimensionMismatch(format!(
            "F acts on R^{} but Y takes values in R^{}",
            f.input_dim,
            y.target()
        )));
    }
    Ok(())
}

/// `Z^r_s` for one time from the values `Y^0_s, …, Y^{N-1}_s`, all `r < N`.
pub(crate) fn compose_at(
    f: &LipFunction,
    ylev: &[&[f64]],
    dim: usize,
    depth: usize,
    surj: &[Vec<Vec<Vec<usize>>>],
) -> Vec<Vec<f64>> {
    let (m, p) = (f.input_dim, f.output_dim);
    let derivs: Vec<Vec<f64>> = (0..depth).map(|j| f.eval_unchecked(j, ylev[0])).collect();
    let mut z = Vec::with_capacity(depth);
    z.push(derivs[0].clone());
    for r in 1..depth {
        let dr = pow(dim, r);
        let mut block = vec![0.0; p * dr];
        for (xi_idx, word) in Word::all(dim, r).enumerate() {
            for j in 1..=r {
                let inv = 1.0 / factorial(j);
                let mut acc = vec![0.0; pow(m, j)];
                for assign in &surj[r][j] {
                    let cols: Vec<Vec<f64>> = blocks_of(assign, j)
                        .iter()
                        .map(|b| {
                            let w = word.restrict(b);
                            column(ylev[b.len()], m, w.index(dim), pow(dim, b.len()))
                        })
                        .collect();
                    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
                    acc.iter_mut().zip(outer_all(&refs)).for_each(|(a, b)| *a += b);
                }
                for (o, v) in apply_full(&derivs[j], p, &acc).into_iter().enumerate() {
                    block[o * dr + xi_idx] += inv * v;
                }
            }
        }
        z.push(block);
    }
    z
}

pub(crate) fn surjection_table(depth: usize) -> Vec<Vec<Vec<Vec<usize>>>> {
    (0..depth)
        .map(|r| (0..=r).map(|j| surjections(r, j)).collect())
        .collect()
}

/// The controlled path `F(Y)`: `Z^0 = F^0(Y^0)` and, for `r ≥ 1`,
/// `Z^r(ξ) = Σ_j (1/j!) Σ_{(I_1,…,I_j)} F^j(Y^0)(Y^{|I_1|}(ξ|I_1) ⊠ ⋯ ⊠ Y^{|I_j|}(ξ|I_j))`
/// over ordered partitions of the letters of `ξ` into non-empty blocks.
pub fn compose(f: &LipFunction, y: &ControlledPath, x: &GeometricRoughPath) -> Result<ControlledPath> {
    check_compose(f, y, y.depth())?;
    if x.times() != y.times() || x.dim() != y.dim() || x.depth() != y.depth() {
        return Err(Error::DimensionMismatch("Y and X must share grid and shape".into()));
    }
    compose_unchecked(f, y)
}

pub(crate) fn compose_unchecked(f: &LipFunction, y: &ControlledPath) -> Result<ControlledPath> {
    let (d, n) = (y.dim(), y.depth());
    let surj = surjection_table(n);
    let mut levels: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(y.len()); n];
    for k in 0..y.len() {
        let ylev: Vec<&[f64]> = (0..n).map(|i| y.value(i, k)).collect();
        for (i, b) in compose_at(f, &ylev, d, n, &surj).into_iter().enumerate() {
            levels[i].push(b);
        }
    }
    ControlledPath::new(y.times().to_vec(), d, n, f.output_dim, y.alpha(), levels)
}

/// `Y^h_s(X^{h-|w|} ⊗ w)`.
fn ey_level(y: &ControlledPath, s: usize, h: usize, x: &TensorSeries, w: &Word) -> Vec<f64> {
    let d = y.dim();
    let q = h - w.len();
    let reduced = apply_leading_level(y.value(h, s), y.target(), d, h, q, x.level(q));
    column(&reduced, y.target(), w.index(d), pow(d, w.len()))
}

fn check_word(y: &ControlledPath, xi: &Word) -> Result<()> {
    let r = xi.len();
    if r == 0 || r >= y.depth() {
        return Err(Error::OutOfRange(format!(
            "word length {r} outside 1..={}",
            y.depth() - 1
        )));
    }
    if xi.letters().iter().any(|&l| l == 0 || l as usize > y.dim()) {
        return Err(Error::InvalidInput(format!("word {xi} has letters outside 1..={}", y.dim())));
    }
    Ok(())
}

/// `Δ₃^k(ξ) = (1/k!) Σ_{1≤i_a≤N-1, Σi_a≥N} (Y^{i_1}⊠⋯⊠Y^{i_k})((X⊠⋯⊠X) * δ_k(ξ))`,
/// as a dense `m^k` block. `x` is the increment `X_{s,t}`.
pub fn delta3_term(
    k: usize,
    y: &ControlledPath,
    s: usize,
    x: &TensorSeries,
    xi: &Word,
) -> Result<Vec<f64>> {
    check_word(y, xi)?;
    let n = y.depth();
    if k == 0 || k >= n {
        return Err(Error::OutOfRange(format!("k = {k} outside 1..={}", n - 1)));
    }
    let m = y.target();
    let r = xi.len();
    let mut out = vec![0.0; pow(m, k)];
    // all maps positions -> slots, empty slots allowed
    let mut assign = vec![0usize; r];
    loop {
        let blocks = blocks_of(&assign, k);
        let words: Vec<Word> = blocks.iter().map(|b| xi.restrict(b)).collect();
        let lows: Vec<usize> = words.iter().map(|w| w.len().max(1)).collect();
        if lows.iter().all(|&l| l < n) {
            let mut h = lows.clone();
            'levels: loop {
                if h.iter().sum::<usize>() >= n {
                    let cols: Vec<Vec<f64>> = (0..k).map(|a| ey_level(y, s, h[a], x, &words[a])).collect();
                    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
                    out.iter_mut().zip(outer_all(&refs)).for_each(|(o, v)| *o += v);
                }
                for a in (0..k).rev() {
                    h[a] += 1;
                    if h[a] < n {
                        continue 'levels;
                    }
                    h[a] = lows[a];
                }
                break;
            }
        }
        let mut p = r;
        loop {
            if p == 0 {
                let c = 1.0 / factorial(k);
                out.iter_mut().for_each(|v| *v *= c);
                return Ok(out);
            }
            p -= 1;
            assign[p] += 1;
            if assign[p] < k {
                break;
            }
            assign[p] = 0;
        }
    }
}

/// Both sides of the algebraic lemma for one `k` and basis word `ξ`, after
/// symmetrization; returns `(lhs, rhs)` as `m^k` blocks.
pub fn alg_lemma_sides(
    k: usize,
    y: &ControlledPath,
    s: usize,
    x: &TensorSeries,
    xi: &Word,
) -> Result<(SymTensor, SymTensor)> {
    check_word(y, xi)?;
    let (d, n, m) = (y.dim(), y.depth(), y.target());
    if k == 0 || k >= n {
        return Err(Error::OutOfRange(format!("k = {k} outside 1..={}", n - 1)));
    }
    if x.dim() != d || x.depth() != n {
        return Err(Error::DimensionMismatch("increment shape".into()));
    }
    let r = xi.len();

    // Ŷ⁰ = Σ_{l=1}^{N-1} Y^l(X^l)
    let mut y_hat = vec![0.0; m];
    for l in 1..n {
        let v = apply_leading_level(y.value(l, s), m, d, l, l, x.level(l));
        y_hat.iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
    // EY(w) = Σ_{l=|w|}^{N-1} Y^l(X^{l-|w|} ⊗ w)
    let ey = |w: &Word| -> Vec<f64> {
        let mut acc = vec![0.0; m];
        for l in w.len()..n {
            acc.iter_mut()
                .zip(ey_level(y, s, l, x, w))
                .for_each(|(a, b)| *a += b);
        }
        acc
    };

    let mut lhs = vec![0.0; pow(m, k)];
    for j in 1..=k.min(r) {
        let mut eta = vec![0.0; pow(m, j)];
        for assign in surjections(r, j) {
            let cols: Vec<Vec<f64>> = blocks_of(&assign, j).iter().map(|b| ey(&xi.restrict(b))).collect();
            let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
            eta.iter_mut().zip(outer_all(&refs)).for_each(|(a, b)| *a += b);
        }
        let full = outer(&tensor_power(&y_hat, k - j), &eta);
        let c = 1.0 / (factorial(j) * factorial(k - j));
        lhs.iter_mut().zip(full).for_each(|(a, b)| *a += c * b);
    }

    // (1/k!) Σ_{Σ i_a ≤ N-1, i_a ≥ 1} (Y^{i_1}⊠⋯⊠Y^{i_k}) δ_k(X ⊗ ξ)
    let mut word_series = TensorSeries::zero(d, n)?;
    word_series.level_mut(r)[xi.index(d)] = 1.0;
    let image = delta_k(&x.mul(&word_series)?, k)?;
    let mut rhs = vec![0.0; pow(m, k)];
    for (slots, c) in image.raw_terms() {
        let total: usize = slots.iter().map(|&(l, _)| l).sum();
        if total >= n || slots.iter().any(|&(l, _)| l == 0) {
            continue;
        }
        let cols: Vec<Vec<f64>> = slots
            .iter()
            .map(|&(l, idx)| column(y.value(l, s), m, idx, pow(d, l)))
            .collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        rhs.iter_mut().zip(outer_all(&refs)).for_each(|(a, b)| *a += c * b);
    }
    let inv = 1.0 / factorial(k);
    rhs.iter_mut().for_each(|v| *v *= inv);
    let d3 = delta3_term(k, y, s, x, xi)?;
    rhs.iter_mut().zip(d3).for_each(|(a, b)| *a += b);

    Ok((
        SymTensor::new(m, k, lhs)?.symmetrize(),
        SymTensor::new(m, k, rhs)?.symmetrize(),
    ))
}

/// Largest coefficient deviation between the symmetrized sides of the lemma.
pub fn alg_lemma_check(
    k: usize,
    y: &ControlledPath,
    s: usize,
    x: &TensorSeries,
    xi: &Word,
) -> Result<f64> {
    let (l, r) = alg_lemma_sides(k, y, s, x, xi)?;
    Ok(l.max_abs_diff(&r))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemainderProbe {
    pub level: usize,
    /// `max ‖RZ^r_{s,t}‖ / (t-s)^{(N-r)α}` over grid pairs.
    pub max_ratio: f64,
    pub argmax: (usize, usize),
    pub remainder_at_argmax: f64,
    /// `‖Σ_k F^k(Y^0_s)(Δ₃^k)‖ / ‖RZ^r_{s,t}‖` at the maximizing pair.
    pub delta3_share: f64,
}

/// Measure the regularity of `RZ^r` for `Z = F(Y)`.
pub fn remainder_decomposition_probe(
    f: &LipFunction,
    y: &ControlledPath,
    x: &GeometricRoughPath,
    r: usize,
    alpha: f64,
) -> Result<RemainderProbe> {
    let n = y.depth();
    if r >= n {
        return Err(Error::OutOfRange(format!("level {r} outside 0..{n}")));
    }
    let z = compose(f, y, x)?;
    let mut best = (0.0f64, (0, 0), 0.0f64);
    x.for_each_pair(0, y.len() - 1, |s, t, inc| {
        let h = x.times()[t] - x.times()[s];
        let norm = l1(&z.remainder_with(r, s, t, inc));
        let ratio = norm / h.powf((n - r) as f64 * alpha);
        if ratio > best.0 {
            best = (ratio, (s, t), norm);
        }
    });
    let (s, t) = best.1;
    let mut share = 0.0;
    if r >= 1 && best.2 > 0.0 {
        let (d, m, p) = (y.dim(), y.target(), f.output_dim);
        let inc = x.increment(s, t)?;
        let mut acc = vec![0.0; p * pow(d, r)];
        for (xi_idx, word) in Word::all(d, r).enumerate() {
            for k in 1..n {
                let d3 = delta3_term(k, y, s, &inc, &word)?;
                let fk = f.eval_unchecked(k, y.value(0, s));
                debug_assert_eq!(fk.len(), p * pow(m, k));
                for (o, v) in apply_full(&fk, p, &d3).into_iter().enumerate() {
                    acc[o * pow(d, r) + xi_idx] += v;
                }
            }
        }
        share = l1(&acc) / best.2;
    }
    Ok(RemainderProbe {
        level: r,
        max_ratio: best.0,
        argmax: best.1,
        remainder_at_argmax: best.2,
        delta3_share: share,
    })
}
