//! Truncated tensor algebra `T^(N)(R^d)`, the slotwise box algebra
//! `T^(N)(R^d)^{⊠k}`, the coproducts `δ_k`, shuffles and symmetrization.
//!
//! Level `i` of a [`TensorSeries`] is stored densely with `d^i` entries. A
//! word `(i_1, …, i_r)` with letters in `1..=d` sits at offset
//! `Σ (i_p - 1) d^{r-1-p}`, so concatenating words multiplies offsets by a
//! power of `d`. The norm on every level is the ℓ1 norm of the coefficient
//! block, which is a permutation-invariant cross norm.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension of the driving space.
pub const MAX_DIM: usize = 4;
/// Largest supported truncation depth.
pub const MAX_DEPTH: usize = 5;
/// Largest arity of box tensors (slots are packed into a `u128`).
pub const MAX_ARITY: usize = 8;

#[inline]
pub(crate) fn pow(d: usize, i: usize) -> usize {
    d.pow(i as u32)
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub(crate) fn check_caps(dim: usize, depth: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "dimension {dim} outside 1..={MAX_DIM}"
        )));
    }
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::InvalidInput(format!(
            "depth {depth} outside 1..={MAX_DEPTH}"
        )));
    }
    Ok(())
}

/// A word over the alphabet `1..=d`, i.e. a basis element of `V^{⊗r}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn new(letters: Vec<u8>, dim: usize) -> Result<Self> {
        if let Some(bad) = letters.iter().find(|&&l| l == 0 || l as usize > dim) {
            return Err(Error::InvalidInput(format!(
                "letter {bad} outside 1..={dim}"
            )));
        }
        Ok(Word(letters))
    }

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn letter(l: u8) -> Self {
        Word(vec![l])
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Offset of this word inside its level block.
    pub fn index(&self, dim: usize) -> usize {
        self.0
            .iter()
            .fold(0, |acc, &l| acc * dim + (l as usize - 1))
    }

    pub fn from_index(len: usize, mut idx: usize, dim: usize) -> Self {
        let mut letters = vec![0u8; len];
        for slot in letters.iter_mut().rev() {
            *slot = (idx % dim) as u8 + 1;
            idx /= dim;
        }
        Word(letters)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.0.clone();
        letters.extend_from_slice(&other.0);
        Word(letters)
    }

    /// `ξ|_I` for a sorted set of positions.
    pub fn restrict(&self, positions: &[usize]) -> Word {
        Word(positions.iter().map(|&p| self.0[p]).collect())
    }

    /// All words of length `len` in block order.
    pub fn all(dim: usize, len: usize) -> impl Iterator<Item = Word> {
        (0..pow(dim, len)).map(move |i| Word::from_index(len, i, dim))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        for l in &self.0 {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawSeries {
    d: usize,
    #[serde(rename = "N")]
    n: usize,
    levels: Vec<Vec<f64>>,
}

/// An element `(ξ^0, …, ξ^N)` of the truncated tensor algebra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries")]
pub struct TensorSeries {
    #[serde(rename = "d")]
    dim: usize,
    #[serde(rename = "N")]
    depth: usize,
    levels: Vec<Vec<f64>>,
}

impl TryFrom<RawSeries> for TensorSeries {
    type Error = Error;

    fn try_from(raw: RawSeries) -> Result<Self> {
        TensorSeries::from_levels(raw.d, raw.n, raw.levels)
    }
}

impl TensorSeries {
    pub fn zero(dim: usize, depth: usize) -> Result<Self> {
        check_caps(dim, depth)?;
        Ok(Self::zero_unchecked(dim, depth))
    }

    pub(crate) fn zero_unchecked(dim: usize, depth: usize) -> Self {
        TensorSeries {
            dim,
            depth,
            levels: (0..=depth).map(|i| vec![0.0; pow(dim, i)]).collect(),
        }
    }

    pub fn unit(dim: usize, depth: usize) -> Result<Self> {
        let mut out = Self::zero(dim, depth)?;
        out.levels[0][0] = 1.0;
        Ok(out)
    }

    pub(crate) fn unit_unchecked(dim: usize, depth: usize) -> Self {
        let mut out = Self::zero_unchecked(dim, depth);
        out.levels[0][0] = 1.0;
        out
    }

    pub fn from_levels(dim: usize, depth: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        check_caps(dim, depth)?;
        if levels.len() != depth + 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} levels, got {}",
                depth + 1,
                levels.len()
            )));
        }
        for (i, block) in levels.iter().enumerate() {
            if block.len() != pow(dim, i) {
                return Err(Error::DimensionMismatch(format!(
                    "level {i} has {} entries, expected {}",
                    block.len(),
                    pow(dim, i)
                )));
            }
        }
        Ok(TensorSeries { dim, depth, levels })
    }

    /// Signature of the straight segment with increment `v`: level `k` is `v^{⊗k}/k!`.
    pub fn exp_segment(v: &[f64], depth: usize) -> Result<Self> {
        let dim = v.len();
        let mut out = Self::unit(dim, depth)?;
        for k in 1..=depth {
            let prev = std::mem::take(&mut out.levels[k - 1]);
            let mut cur = vec![0.0; prev.len() * dim];
            for (i, &p) in prev.iter().enumerate() {
                for (j, &x) in v.iter().enumerate() {
                    cur[i * dim + j] = p * x / k as f64;
                }
            }
            out.levels[k - 1] = prev;
            out.levels[k] = cur;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn level(&self, i: usize) -> &[f64] {
        &self.levels[i]
    }

    pub fn level_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.levels[i]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn scalar(&self) -> f64 {
        self.levels[0][0]
    }

    pub fn coeff(&self, word: &Word) -> f64 {
        if word.len() > self.depth {
            return 0.0;
        }
        self.levels[word.len()][word.index(self.dim)]
    }

    fn check_same_shape(&self, other: &TensorSeries) -> Result<()> {
        if self.dim != other.dim || self.depth != other.depth {
            return Err(Error::DimensionMismatch(format!(
                "(d={}, N={}) vs (d={}, N={})",
                self.dim, self.depth, other.dim, other.depth
            )));
        }
        Ok(())
    }

    /// Truncated tensor product.
    pub fn mul(&self, other: &TensorSeries) -> Result<TensorSeries> {
        self.check_same_shape(other)?;
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &TensorSeries) -> TensorSeries {
        let d = self.dim;
        let mut out = Self::zero_unchecked(d, self.depth);
        for r in 0..=self.depth {
            let dst = &mut out.levels[r];
            for i in 0..=r {
                let a = &self.levels[i];
                let b = &other.levels[r - i];
                let stride = b.len();
                for (ia, &ca) in a.iter().enumerate() {
                    if ca == 0.0 {
                        continue;
                    }
                    let row = &mut dst[ia * stride..(ia + 1) * stride];
                    for (o, &cb) in row.iter_mut().zip(b) {
                        *o += ca * cb;
                    }
                }
            }
        }
        out
    }

    /// Inverse of a group-like element through the finite Neumann series
    /// `Σ_{n=0}^{N} (1 - g)^{⊗n}`, exact in the truncated algebra.
    pub fn inverse(&self) -> Result<TensorSeries> {
        if (self.scalar() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "level-0 coefficient is {}, expected 1",
                self.scalar()
            )));
        }
        Ok(self.inverse_unchecked())
    }

    pub(crate) fn inverse_unchecked(&self) -> TensorSeries {
        let unit = Self::unit_unchecked(self.dim, self.depth);
        let m = unit.sub_unchecked(self);
        let mut acc = unit.clone();
        let mut power = unit;
        for _ in 1..=self.depth {
            power = power.mul_unchecked(&m);
            acc.add_assign_unchecked(&power);
        }
        acc
    }

    pub fn add(&self, other: &TensorSeries) -> Result<TensorSeries> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.add_assign_unchecked(other);
        Ok(out)
    }

    pub fn sub(&self, other: &TensorSeries) -> Result<TensorSeries> {
        self.check_same_shape(other)?;
        Ok(self.sub_unchecked(other))
    }

    pub(crate) fn sub_unchecked(&self, other: &TensorSeries) -> TensorSeries {
        let mut out = self.clone();
        for (a, b) in out.levels.iter_mut().zip(&other.levels) {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= y;
            }
        }
        out
    }

    fn add_assign_unchecked(&mut self, other: &TensorSeries) {
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&self, c: f64) -> TensorSeries {
        let mut out = self.clone();
        out.levels
            .iter_mut()
            .flat_map(|l| l.iter_mut())
            .for_each(|x| *x *= c);
        out
    }

    /// The admissible (ℓ1) norm of level `i`.
    pub fn norm(&self, i: usize) -> f64 {
        self.levels[i].iter().map(|x| x.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.levels
            .iter()
            .flat_map(|l| l.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &TensorSeries) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.sub_unchecked(other).max_abs())
    }

    /// Keep only level `i`.
    pub fn project(&self, i: usize) -> TensorSeries {
        let mut out = Self::zero_unchecked(self.dim, self.depth);
        out.levels[i] = self.levels[i].clone();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tensor series serializes")
    }
}

/// ℓ1 norm of level `i`.
pub fn admissible_norm(xi: &TensorSeries, level: usize) -> Result<f64> {
    if level > xi.depth() {
        return Err(Error::OutOfRange(format!(
            "level {level} above depth {}",
            xi.depth()
        )));
    }
    Ok(xi.norm(level))
}

pub fn tensor_mul(a: &TensorSeries, b: &TensorSeries) -> Result<TensorSeries> {
    a.mul(b)
}

pub fn group_inverse(g: &TensorSeries) -> Result<TensorSeries> {
    g.inverse()
}

pub fn exp_segment(v: &[f64], depth: usize) -> Result<TensorSeries> {
    TensorSeries::exp_segment(v, depth)
}

// A slot of a box tensor key: 4 bits of length, 12 bits of in-level offset.
const SLOT_BITS: u32 = 16;

#[inline]
fn slot_get(key: u128, a: usize) -> (usize, usize) {
    let raw = (key >> (SLOT_BITS * a as u32)) as u16;
    ((raw >> 12) as usize, (raw & 0x0fff) as usize)
}

#[inline]
fn slot_set(key: u128, a: usize, len: usize, idx: usize) -> u128 {
    let shift = SLOT_BITS * a as u32;
    let cleared = key & !(0xffffu128 << shift);
    cleared | (((len as u128) << 12 | idx as u128) << shift)
}

/// An element of `T^(N)(V)^{⊠k}`, stored sparsely by `k`-tuples of words.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxTensor {
    dim: usize,
    depth: usize,
    arity: usize,
    coeffs: BTreeMap<u128, f64>,
}

impl BoxTensor {
    pub fn zero(dim: usize, depth: usize, arity: usize) -> Result<Self> {
        check_caps(dim, depth)?;
        if arity == 0 || arity > MAX_ARITY {
            return Err(Error::InvalidInput(format!(
                "arity {arity} outside 1..={MAX_ARITY}"
            )));
        }
        Ok(BoxTensor {
            dim,
            depth,
            arity,
            coeffs: BTreeMap::new(),
        })
    }

    /// `𝟏 ⊠ ⋯ ⊠ 𝟏`.
    pub fn unit(dim: usize, depth: usize, arity: usize) -> Result<Self> {
        let mut out = Self::zero(dim, depth, arity)?;
        out.coeffs.insert(0, 1.0);
        Ok(out)
    }

    /// The pure tensor `w_1 ⊠ ⋯ ⊠ w_k` with coefficient `c`.
    pub fn pure(dim: usize, depth: usize, slots: &[Word], c: f64) -> Result<Self> {
        let mut out = Self::zero(dim, depth, slots.len())?;
        out.add_term(slots, c)?;
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn encode(&self, slots: &[Word]) -> Result<u128> {
        if slots.len() != self.arity {
            return Err(Error::DimensionMismatch(format!(
                "{} slots for arity {}",
                slots.len(),
                self.arity
            )));
        }
        let mut key = 0u128;
        for (a, w) in slots.iter().enumerate() {
            if w.len() > self.depth {
                return Err(Error::InvalidInput(format!(
                    "slot word {w} longer than depth {}",
                    self.depth
                )));
            }
            if w.letters().iter().any(|&l| l == 0 || l as usize > self.dim) {
                return Err(Error::InvalidInput(format!("slot word {w} has bad letters")));
            }
            key = slot_set(key, a, w.len(), w.index(self.dim));
        }
        Ok(key)
    }

    fn decode(&self, key: u128) -> Vec<Word> {
        (0..self.arity)
            .map(|a| {
                let (len, idx) = slot_get(key, a);
                Word::from_index(len, idx, self.dim)
            })
            .collect()
    }

    pub fn add_term(&mut self, slots: &[Word], c: f64) -> Result<()> {
        let key = self.encode(slots)?;
        *self.coeffs.entry(key).or_insert(0.0) += c;
        Ok(())
    }

    pub fn get(&self, slots: &[Word]) -> f64 {
        self.encode(slots)
            .ok()
            .and_then(|k| self.coeffs.get(&k).copied())
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<Word>, f64)> + '_ {
        self.coeffs.iter().map(|(&k, &c)| (self.decode(k), c))
    }

    /// Slot lengths and in-level offsets of every stored term.
    pub(crate) fn raw_terms(&self) -> impl Iterator<Item = (Vec<(usize, usize)>, f64)> + '_ {
        self.coeffs
            .iter()
            .map(|(&k, &c)| ((0..self.arity).map(|a| slot_get(k, a)).collect(), c))
    }

    /// The product `*`: slotwise truncated tensor product.
    pub fn mul(&self, other: &BoxTensor) -> Result<BoxTensor> {
        if self.dim != other.dim || self.depth != other.depth || self.arity != other.arity {
            return Err(Error::DimensionMismatch(format!(
                "box tensors (d={}, N={}, k={}) vs (d={}, N={}, k={})",
                self.dim, self.depth, self.arity, other.dim, other.depth, other.arity
            )));
        }
        let mut out = BoxTensor {
            coeffs: BTreeMap::new(),
            ..*self
        };
        for (&ka, &ca) in &self.coeffs {
            'terms: for (&kb, &cb) in &other.coeffs {
                let mut key = 0u128;
                for a in 0..self.arity {
                    let (la, ia) = slot_get(ka, a);
                    let (lb, ib) = slot_get(kb, a);
                    if la + lb > self.depth {
                        continue 'terms;
                    }
                    key = slot_set(key, a, la + lb, ia * pow(self.dim, lb) + ib);
                }
                *out.coeffs.entry(key).or_insert(0.0) += ca * cb;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &BoxTensor) -> Result<BoxTensor> {
        if self.dim != other.dim || self.depth != other.depth || self.arity != other.arity {
            return Err(Error::DimensionMismatch("box tensor shapes differ".into()));
        }
        let mut out = self.clone();
        for (&k, &c) in &other.coeffs {
            *out.coeffs.entry(k).or_insert(0.0) += c;
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> BoxTensor {
        let mut out = self.clone();
        out.coeffs.values_mut().for_each(|x| *x *= c);
        out
    }

    /// Largest coefficientwise deviation over the union of supports.
    pub fn max_abs_diff(&self, other: &BoxTensor) -> Result<f64> {
        let diff = self.add(&other.scale(-1.0))?;
        Ok(diff.coeffs.values().fold(0.0, |m, x| m.max(x.abs())))
    }
}

pub fn box_mul(a: &BoxTensor, b: &BoxTensor) -> Result<BoxTensor> {
    a.mul(b)
}

/// `δ_k(v) = v⊠𝟏⊠⋯⊠𝟏 + ⋯ + 𝟏⊠⋯⊠𝟏⊠v` for a single letter.
fn delta_letter(dim: usize, depth: usize, k: usize, letter: u8) -> Result<BoxTensor> {
    let mut out = BoxTensor::zero(dim, depth, k)?;
    for a in 0..k {
        let key = slot_set(0, a, 1, letter as usize - 1);
        *out.coeffs.entry(key).or_insert(0.0) += 1.0;
    }
    Ok(out)
}

/// `δ_k` of a single word, built multiplicatively from its letters.
pub fn delta_k_word(word: &Word, dim: usize, depth: usize, k: usize) -> Result<BoxTensor> {
    if word.len() > depth {
        return Err(Error::InvalidInput(format!(
            "word {word} longer than depth {depth}"
        )));
    }
    let mut acc = BoxTensor::unit(dim, depth, k)?;
    for &l in word.letters() {
        acc = acc.mul(&delta_letter(dim, depth, k, l)?)?;
    }
    Ok(acc)
}

/// The coproduct `δ_k`, extended linearly over every level of `xi`.
///
/// Each word is expanded as the `*`-product of the images of its letters,
/// which is the algebra-homomorphism definition of `δ_k`.
pub fn delta_k(xi: &TensorSeries, k: usize) -> Result<BoxTensor> {
    if k == 0 {
        return Err(Error::InvalidInput("δ_k needs k ≥ 1".into()));
    }
    let (dim, depth) = (xi.dim(), xi.depth());
    let mut out = BoxTensor::zero(dim, depth, k)?;
    for r in 0..=depth {
        for (idx, &c) in xi.level(r).iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let image = delta_k_word(&Word::from_index(r, idx, dim), dim, depth, k)?;
            for (&key, &v) in &image.coeffs {
                *out.coeffs.entry(key).or_insert(0.0) += c * v;
            }
        }
    }
    Ok(out)
}

/// `Σ_{l_1+⋯+l_k ≤ N} ξ^{l_1} ⊠ ⋯ ⊠ ξ^{l_k}`.
pub fn box_power_truncated(xi: &TensorSeries, k: usize) -> Result<BoxTensor> {
    let (dim, depth) = (xi.dim(), xi.depth());
    let mut out = BoxTensor::zero(dim, depth, k)?;
    let mut lens = vec![0usize; k];
    loop {
        let total: usize = lens.iter().sum();
        if total <= depth {
            // iterate over all index tuples of the chosen levels
            let sizes: Vec<usize> = lens.iter().map(|&l| pow(dim, l)).collect();
            let mut idx = vec![0usize; k];
            'tuples: loop {
                let mut c = 1.0;
                let mut key = 0u128;
                for a in 0..k {
                    c *= xi.level(lens[a])[idx[a]];
                    key = slot_set(key, a, lens[a], idx[a]);
                }
                if c != 0.0 {
                    *out.coeffs.entry(key).or_insert(0.0) += c;
                }
                for a in (0..k).rev() {
                    idx[a] += 1;
                    if idx[a] < sizes[a] {
                        continue 'tuples;
                    }
                    idx[a] = 0;
                }
                break;
            }
        }
        // next composition in lexicographic order, bounded by depth per slot
        let mut a = k;
        loop {
            if a == 0 {
                return Ok(out);
            }
            a -= 1;
            lens[a] += 1;
            if lens.iter().sum::<usize>() <= depth {
                break;
            }
            lens[a] = 0;
        }
    }
}

/// Outcome of the free-nilpotent-group membership test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupLikeReport {
    pub group_like: bool,
    pub max_deviation: f64,
    /// The `k` at which the worst deviation occurred (0 when none).
    pub worst_k: usize,
}

/// Tests `δ_k(ξ) = Σ ξ^{l_1}⊠⋯⊠ξ^{l_k}` for every `k` in `2..=N`.
///
/// The tolerance is scaled by `max(1, max |ξ|)`.
pub fn is_group_like(xi: &TensorSeries, tol: f64) -> Result<GroupLikeReport> {
    if (xi.scalar() - 1.0).abs() > tol {
        return Err(Error::InvalidInput(format!(
            "level-0 coefficient is {}, expected 1",
            xi.scalar()
        )));
    }
    let mut worst = 0.0;
    let mut worst_k = 0;
    for k in 2..=xi.depth() {
        let dev = delta_k(xi, k)?.max_abs_diff(&box_power_truncated(xi, k)?)?;
        if dev > worst {
            worst = dev;
            worst_k = k;
        }
    }
    let scale = xi.max_abs().max(1.0);
    Ok(GroupLikeReport {
        group_like: worst <= tol * scale,
        max_deviation: worst,
        worst_k,
    })
}

/// Shuffle product `u ⧢ w`; coefficients are interleaving multiplicities.
pub fn shuffle_product(u: &Word, w: &Word, depth: usize) -> Result<BTreeMap<Word, f64>> {
    if u.len() + w.len() > depth {
        return Err(Error::InvalidInput(format!(
            "|{u}| + |{w}| exceeds depth {depth}"
        )));
    }
    let mut out = BTreeMap::new();
    shuffle_into(u.letters(), w.letters(), &mut Vec::new(), &mut out);
    Ok(out)
}

fn shuffle_into(u: &[u8], w: &[u8], prefix: &mut Vec<u8>, out: &mut BTreeMap<Word, f64>) {
    if u.is_empty() || w.is_empty() {
        let mut letters = prefix.clone();
        letters.extend_from_slice(u);
        letters.extend_from_slice(w);
        *out.entry(Word(letters)).or_insert(0.0) += 1.0;
        return;
    }
    prefix.push(u[0]);
    shuffle_into(&u[1..], w, prefix, out);
    prefix.pop();
    prefix.push(w[0]);
    shuffle_into(u, &w[1..], prefix, out);
    prefix.pop();
}

/// A dense homogeneous `k`-tensor over a space of dimension `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTensor {
    pub dim: usize,
    pub arity: usize,
    pub data: Vec<f64>,
}

impl SymTensor {
    pub fn new(dim: usize, arity: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != pow(dim, arity) {
            return Err(Error::DimensionMismatch(format!(
                "block of {} entries for dim {dim}, arity {arity}",
                data.len()
            )));
        }
        Ok(SymTensor { dim, arity, data })
    }

    pub fn zeros(dim: usize, arity: usize) -> Self {
        SymTensor {
            dim,
            arity,
            data: vec![0.0; pow(dim, arity)],
        }
    }

    /// Read with coordinate indices permuted: entry `(i_{σ(1)}, …, i_{σ(k)})`.
    pub fn permuted(&self, perm: &[usize]) -> SymTensor {
        let mut out = SymTensor::zeros(self.dim, self.arity);
        let mut digits = vec![0usize; self.arity];
        for (idx, o) in out.data.iter_mut().enumerate() {
            unflatten(idx, self.dim, &mut digits);
            let src = perm.iter().fold(0, |acc, &p| acc * self.dim + digits[p]);
            *o = self.data[src];
        }
        out
    }

    /// The symmetrization operator `S_k`: average over all `k!` permutations.
    pub fn symmetrize(&self) -> SymTensor {
        let perms = permutations(self.arity);
        let mut out = SymTensor::zeros(self.dim, self.arity);
        let mut digits = vec![0usize; self.arity];
        for (idx, o) in out.data.iter_mut().enumerate() {
            unflatten(idx, self.dim, &mut digits);
            let sum: f64 = perms
                .iter()
                .map(|p| self.data[p.iter().fold(0, |acc, &q| acc * self.dim + digits[q])])
                .sum();
            *o = sum / perms.len() as f64;
        }
        out
    }

    pub fn max_abs_diff(&self, other: &SymTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.symmetrize()) <= tol
    }
}

pub fn symmetrize(block: &[f64], dim: usize, k: usize) -> Result<SymTensor> {
    Ok(SymTensor::new(dim, k, block.to_vec())?.symmetrize())
}

pub(crate) fn unflatten(mut idx: usize, dim: usize, digits: &mut [usize]) {
    for slot in digits.iter_mut().rev() {
        *slot = idx % dim;
        idx /= dim;
    }
}

/// All permutations of `0..k` in lexicographic order.
pub(crate) fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (1..k).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

/// Ordered partitions of `0..r` into `j` non-empty blocks, as block-index
/// assignments (`assign[p]` is the block of position `p`).
pub(crate) fn surjections(r: usize, j: usize) -> Vec<Vec<usize>> {
    if j == 0 {
        return if r == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    let mut assign = vec![0usize; r];
    loop {
        let mut hit = vec![false; j];
        assign.iter().for_each(|&b| hit[b] = true);
        if hit.iter().all(|&h| h) {
            out.push(assign.clone());
        }
        let mut p = r;
        loop {
            if p == 0 {
                return out;
            }
            p -= 1;
            assign[p] += 1;
            if assign[p] < j {
                break;
            }
            assign[p] = 0;
        }
    }
}

/// Positions assigned to each block, in increasing order.
pub(crate) fn blocks_of(assign: &[usize], j: usize) -> Vec<Vec<usize>> {
    let mut blocks = vec![Vec::new(); j];
    for (p, &b) in assign.iter().enumerate() {
        blocks[b].push(p);
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(letters: &[u8]) -> Word {
        Word(letters.to_vec())
    }

    #[test]
    fn product_of_two_letters() {
        let a = TensorSeries::from_levels(2, 2, vec![vec![1.0], vec![1.0, 0.0], vec![0.0; 4]]).unwrap();
        let b = TensorSeries::from_levels(2, 2, vec![vec![1.0], vec![0.0, 1.0], vec![0.0; 4]]).unwrap();
        let c = a.mul(&b).unwrap();
        assert_eq!(c.level(1), &[1.0, 1.0]);
        // e1⊗e2 only
        assert_eq!(c.level(2), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_is_identity_and_truncation_kills_high_levels() {
        let a = TensorSeries::exp_segment(&[0.3, -1.2], 3).unwrap();
        let u = TensorSeries::unit(2, 3).unwrap();
        assert_eq!(u.mul(&a).unwrap(), a);
        let c = TensorSeries::from_levels(1, 2, vec![vec![0.0], vec![0.0], vec![2.5]]).unwrap();
        assert_eq!(c.mul(&c).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = TensorSeries::unit(2, 2).unwrap();
        let b = TensorSeries::unit(2, 3).unwrap();
        assert!(matches!(a.mul(&b), Err(Error::DimensionMismatch(_))));
        assert!(TensorSeries::unit(5, 2).is_err());
        assert!(TensorSeries::unit(2, 6).is_err());
    }

    #[test]
    fn inverse_of_level_two_series() {
        // (1, x1, x2)^{-1} = (1, -x1, x1⊗x1 - x2)
        let x1 = [0.5, -2.0];
        let x2 = [0.1, 0.2, 0.3, 0.4];
        let g = TensorSeries::from_levels(2, 2, vec![vec![1.0], x1.to_vec(), x2.to_vec()]).unwrap();
        let inv = g.inverse().unwrap();
        assert_eq!(inv.level(1), &[-0.5, 2.0]);
        let expected: Vec<f64> = (0..4).map(|i| x1[i / 2] * x1[i % 2] - x2[i]).collect();
        for (a, b) in inv.level(2).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let u = TensorSeries::unit(2, 2).unwrap();
        assert_eq!(u.inverse().unwrap(), u);
        let bad = TensorSeries::zero(2, 2).unwrap();
        assert!(bad.inverse().is_err());
    }

    #[test]
    fn exp_segment_values() {
        let e = TensorSeries::exp_segment(&[1.0], 3).unwrap();
        assert_eq!(e.levels(), &[vec![1.0], vec![1.0], vec![0.5], vec![1.0 / 6.0]]);
        let z = TensorSeries::exp_segment(&[0.0, 0.0], 3).unwrap();
        assert_eq!(z, TensorSeries::unit(2, 3).unwrap());
        let v = [0.4, -0.7, 1.1];
        let inv = TensorSeries::exp_segment(&v, 4).unwrap().inverse().unwrap();
        let neg = TensorSeries::exp_segment(&[-0.4, 0.7, -1.1], 4).unwrap();
        assert!(inv.max_abs_diff(&neg).unwrap() < 1e-14);
        let twice = TensorSeries::exp_segment(&[0.8, -1.4, 2.2], 4).unwrap();
        let sq = TensorSeries::exp_segment(&v, 4).unwrap();
        assert!(sq.mul(&sq).unwrap().max_abs_diff(&twice).unwrap() < 1e-14);
    }

    #[test]
    fn delta_two_of_two_letter_word() {
        let d2 = delta_k_word(&w(&[1, 2]), 2, 2, 2).unwrap();
        assert_eq!(d2.len(), 4);
        assert_eq!(d2.get(&[w(&[1, 2]), w(&[])]), 1.0);
        assert_eq!(d2.get(&[w(&[]), w(&[1, 2])]), 1.0);
        assert_eq!(d2.get(&[w(&[1]), w(&[2])]), 1.0);
        assert_eq!(d2.get(&[w(&[2]), w(&[1])]), 1.0);
        let d2v = delta_k_word(&w(&[2]), 2, 2, 2).unwrap();
        assert_eq!(d2v.len(), 2);
        assert_eq!(d2v.get(&[w(&[2]), w(&[])]), 1.0);
    }

    #[test]
    fn delta_one_is_identity_embedding() {
        let xi = TensorSeries::exp_segment(&[0.3, 0.9], 3).unwrap();
        let d1 = delta_k(&xi, 1).unwrap();
        for r in 0..=3 {
            for word in Word::all(2, r) {
                assert_eq!(d1.get(&[word.clone()]), xi.coeff(&word));
            }
        }
    }

    #[test]
    fn box_product_slotwise() {
        let u = BoxTensor::unit(2, 2, 2).unwrap();
        let ab = BoxTensor::pure(2, 2, &[w(&[1, 1]), w(&[2])], 3.0).unwrap();
        assert_eq!(u.mul(&ab).unwrap(), ab);
        let left = BoxTensor::pure(2, 2, &[w(&[1]), w(&[])], 1.0).unwrap();
        let right = BoxTensor::pure(2, 2, &[w(&[]), w(&[2])], 1.0).unwrap();
        let p = left.mul(&right).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.get(&[w(&[1]), w(&[2])]), 1.0);
        let three = BoxTensor::unit(2, 2, 3).unwrap();
        assert!(u.mul(&three).is_err());
    }

    #[test]
    fn non_group_like_counterexample() {
        let xi = TensorSeries::from_levels(2, 2, vec![vec![1.0], vec![1.0, 0.0], vec![0.0; 4]]).unwrap();
        let rep = is_group_like(&xi, 1e-12).unwrap();
        assert!(!rep.group_like);
        assert!((rep.max_deviation - 1.0).abs() < 1e-15);
        let lhs = delta_k(&xi, 2).unwrap();
        let rhs = box_power_truncated(&xi, 2).unwrap();
        // the missing e1⊠e1 term
        assert_eq!(rhs.get(&[w(&[1]), w(&[1])]), 1.0);
        assert_eq!(lhs.get(&[w(&[1]), w(&[1])]), 0.0);
        let g = TensorSeries::exp_segment(&[0.2, -0.4], 2).unwrap();
        assert!(is_group_like(&g, 1e-12).unwrap().group_like);
    }

    #[test]
    fn shuffle_examples() {
        let s = shuffle_product(&w(&[1]), &w(&[2]), 2).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[&w(&[1, 2])], 1.0);
        assert_eq!(s[&w(&[2, 1])], 1.0);
        let s = shuffle_product(&w(&[1]), &w(&[1]), 2).unwrap();
        assert_eq!(s[&w(&[1, 1])], 2.0);
        let s = shuffle_product(&Word::empty(), &w(&[2, 1]), 3).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[&w(&[2, 1])], 1.0);
        assert!(shuffle_product(&w(&[1, 2]), &w(&[1]), 2).is_err());
    }

    #[test]
    fn symmetrization_examples() {
        let e12 = SymTensor::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(e12.symmetrize().data, vec![0.0, 0.5, 0.5, 0.0]);
        let anti = SymTensor::new(2, 2, vec![0.0, 1.0, -1.0, 0.0]).unwrap();
        assert_eq!(anti.symmetrize().data, vec![0.0; 4]);
        let sym = SymTensor::new(2, 2, vec![1.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(sym.symmetrize(), sym);
        assert!(SymTensor::new(2, 3, vec![0.0; 4]).is_err());
    }

    #[test]
    fn norms() {
        let u = TensorSeries::unit(3, 2).unwrap();
        assert_eq!(admissible_norm(&u, 0).unwrap(), 1.0);
        assert!(admissible_norm(&u, 3).is_err());
    }

    #[test]
    fn helper_enumerations() {
        assert_eq!(permutations(3).len(), 6);
        // ordered set partitions of 3 elements into 2 non-empty blocks
        assert_eq!(surjections(3, 2).len(), 6);
        assert_eq!(surjections(4, 4).len(), 24);
        assert_eq!(surjections(0, 0).len(), 1);
        assert_eq!(surjections(2, 0).len(), 0);
    }

    #[test]
    fn series_json_shape() {
        let e = TensorSeries::exp_segment(&[2.0], 2).unwrap();
        let s = e.to_json();
        assert_eq!(s, r#"{"d":1,"N":2,"levels":[[1.0],[2.0],[2.0]]}"#);
        let back: TensorSeries = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<TensorSeries>(r#"{"d":1,"N":2,"levels":[[1.0]]}"#).is_err());
    }
}
