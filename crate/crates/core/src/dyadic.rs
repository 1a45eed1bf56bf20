//! Symbolic coding of the dyadic hierarchy on `B₁ = [-1, 1]^d`.
//!
//! A digit `a ∈ {0, …, 2^d - 1}` selects one of the `2^d` children of a cube:
//! bit `i` of `a` picks the upper half `[c, c + h]` in coordinate `i`, a clear
//! bit picks the lower half `[c - h, c)`. In dimension one a word therefore
//! reads as a binary expansion. Cubes are half-open except on the top face of
//! `B₁`, so every point of `B₁` has exactly one code at every depth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum word length accepted by [`Word`].
pub const MAX_DEPTH: usize = 32;

/// Maximum ambient dimension (digits are stored as `u8`).
pub const MAX_DIM: usize = 8;

/// Number of digits in the alphabet for dimension `dim`.
#[inline]
pub fn alphabet_size(dim: usize) -> usize {
    1usize << dim
}

/// Number of cubes at `level` in dimension `dim`, i.e. `2^(dim·level)`.
pub fn cube_count(dim: usize, level: usize) -> Result<usize> {
    let bits = dim * level;
    if bits >= usize::BITS as usize - 1 {
        return Err(Error::Shape(format!(
            "2^{bits} cubes (d={dim}, level={level}) do not fit in memory"
        )));
    }
    Ok(1usize << bits)
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::Domain(format!("dimension {dim} outside 1..={MAX_DIM}")));
    }
    Ok(())
}

/// A finite word over the alphabet `{0, …, 2^d - 1}`; the empty word names `B₁`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    dim: usize,
    digits: Vec<u8>,
}

impl Word {
    pub fn new(dim: usize, digits: Vec<u8>) -> Result<Self> {
        check_dim(dim)?;
        if digits.len() > MAX_DEPTH {
            return Err(Error::Shape(format!(
                "word length {} exceeds maximum depth {MAX_DEPTH}",
                digits.len()
            )));
        }
        let a = alphabet_size(dim);
        if let Some(bad) = digits.iter().find(|&&g| g as usize >= a) {
            return Err(Error::Domain(format!("digit {bad} outside alphabet of size {a}")));
        }
        Ok(Self { dim, digits })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    /// The word whose lexicographic rank among words of length `len` is `index`.
    pub fn from_index(dim: usize, len: usize, index: usize) -> Result<Self> {
        check_dim(dim)?;
        let a = alphabet_size(dim);
        let mut digits = vec![0u8; len];
        let mut rest = index;
        for slot in digits.iter_mut().rev() {
            *slot = (rest % a) as u8;
            rest /= a;
        }
        if rest != 0 {
            return Err(Error::Domain(format!("index {index} too large for length {len}")));
        }
        Self::new(dim, digits)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    /// Lexicographic rank among words of the same length.
    pub fn index(&self) -> usize {
        digits_index(self.dim, &self.digits)
    }

    /// `x|_k`, the first `k` digits.
    pub fn prefix(&self, k: usize) -> Word {
        Word { dim: self.dim, digits: self.digits[..k.min(self.len())].to_vec() }
    }

    /// `x_k^∞`, the word with its first `k` digits removed.
    pub fn shift(&self, k: usize) -> Word {
        Word { dim: self.dim, digits: self.digits[k.min(self.len())..].to_vec() }
    }

    /// `x_a^b`.
    pub fn slice(&self, a: usize, b: usize) -> Word {
        Word { dim: self.dim, digits: self.digits[a..b].to_vec() }
    }

    pub fn concat(&self, other: &Word) -> Result<Word> {
        if self.dim != other.dim {
            return Err(Error::Shape(format!(
                "cannot concatenate words of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let mut digits = self.digits.clone();
        digits.extend_from_slice(&other.digits);
        Word::new(self.dim, digits)
    }

    pub fn child(&self, digit: u8) -> Result<Word> {
        let mut digits = self.digits.clone();
        digits.push(digit);
        Word::new(self.dim, digits)
    }

    pub fn is_prefix_of(&self, other: &Word) -> bool {
        self.dim == other.dim && other.digits.starts_with(&self.digits)
    }
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.digits.is_empty() {
            return write!(f, "∅");
        }
        let parts: Vec<String> = self.digits.iter().map(|d| d.to_string()).collect();
        if self.dim == 1 {
            write!(f, "{}", parts.concat())
        } else {
            write!(f, "{}", parts.join("."))
        }
    }
}

/// Parse a word from its display form (`0110` in dimension one, `3.0.1` otherwise).
pub fn parse_word(dim: usize, text: &str) -> Result<Word> {
    let text = text.trim();
    if text.is_empty() || text == "∅" {
        return Word::empty(dim);
    }
    let parsed: Option<Vec<u8>> = if text.contains('.') || text.contains(',') {
        text.split(['.', ',']).map(|s| s.trim().parse::<u8>().ok()).collect()
    } else {
        text.chars().map(|c| c.to_digit(10).map(|v| v as u8)).collect()
    };
    let digits = parsed.ok_or_else(|| Error::Domain(format!("cannot parse word {text:?}")))?;
    Word::new(dim, digits)
}

/// Lexicographic rank of a digit sequence.
#[inline]
pub fn digits_index(dim: usize, digits: &[u8]) -> usize {
    digits.iter().fold(0usize, |acc, &g| (acc << dim) | g as usize)
}

/// Per-coordinate grid indices (each in `0..2^len`) of the cube named by `digits`.
pub fn digits_to_grid(dim: usize, digits: &[u8]) -> Vec<u64> {
    let mut grid = vec![0u64; dim];
    for &g in digits {
        for (i, slot) in grid.iter_mut().enumerate() {
            *slot = (*slot << 1) | ((g >> i) & 1) as u64;
        }
    }
    grid
}

/// Inverse of [`digits_to_grid`] for a word of length `len`.
pub fn grid_to_digits(dim: usize, len: usize, grid: &[u64]) -> Vec<u8> {
    (0..len)
        .map(|level| {
            let shift = len - 1 - level;
            (0..dim).fold(0u8, |acc, i| acc | ((((grid[i] >> shift) & 1) as u8) << i))
        })
        .collect()
}

/// Leaf index of the grid cell with per-coordinate indices `grid` at depth `len`.
pub fn grid_to_index(dim: usize, len: usize, grid: &[u64]) -> usize {
    digits_index(dim, &grid_to_digits(dim, len, grid))
}

/// A geometric dyadic cube: `center ± half_width` in every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeRef {
    pub word: Word,
    pub center: Vec<f64>,
    pub half_width: f64,
}

impl CubeRef {
    /// Half-open membership with the top face of `B₁·scale` closed.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_scaled(x, 1.0)
    }

    /// Membership for cubes inside `[-outer, outer]^d`.
    pub fn contains_scaled(&self, x: &[f64], outer: f64) -> bool {
        self.center.iter().zip(x).all(|(&c, &xi)| {
            let lo = c - self.half_width;
            let hi = c + self.half_width;
            xi >= lo && (xi < hi || (hi == outer && xi <= hi))
        })
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().map(|c| c - self.half_width).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().map(|c| c + self.half_width).collect()
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.center.len();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|i| {
                        let sign = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                        self.center[i] + sign * self.half_width
                    })
                    .collect()
            })
            .collect()
    }

    /// True when the cube touches the boundary of `B₁`.
    pub fn touches_boundary(&self) -> bool {
        self.center.iter().any(|c| c.abs() + self.half_width >= 1.0)
    }
}

/// The geometric cube named by `w` inside `B₁`.
pub fn word_to_cube(w: &Word) -> CubeRef {
    word_to_cube_scaled(w, 1.0)
}

/// The cube named by `w` inside `[-outer, outer]^d` (`outer = 2` for `B₂`).
pub fn word_to_cube_scaled(w: &Word, outer: f64) -> CubeRef {
    let (center, half_width) = digits_to_center(w.dim(), w.digits(), outer);
    CubeRef { word: w.clone(), center, half_width }
}

/// Center and half-width of the cube named by a raw digit slice.
pub fn digits_to_center(dim: usize, digits: &[u8], outer: f64) -> (Vec<f64>, f64) {
    let mut center = vec![0.0; dim];
    let mut h = outer;
    for &g in digits {
        h *= 0.5;
        for (i, c) in center.iter_mut().enumerate() {
            if (g >> i) & 1 == 1 {
                *c += h;
            } else {
                *c -= h;
            }
        }
    }
    (center, h)
}

/// The affine map `z ↦ scale · z + offset` (a homothety when applied coordinate-wise).
#[derive(Debug, Clone, PartialEq)]
pub struct Homothety {
    pub scale: f64,
    pub offset: Vec<f64>,
}

impl Homothety {
    pub fn identity(dim: usize) -> Self {
        Self { scale: 1.0, offset: vec![0.0; dim] }
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.offset).map(|(zi, oi)| self.scale * zi + oi).collect()
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Homothety) -> Homothety {
        Homothety {
            scale: self.scale * inner.scale,
            offset: inner
                .offset
                .iter()
                .zip(&self.offset)
                .map(|(oi, so)| self.scale * oi + so)
                .collect(),
        }
    }

    pub fn inverse(&self) -> Homothety {
        Homothety {
            scale: 1.0 / self.scale,
            offset: self.offset.iter().map(|o| -o / self.scale).collect(),
        }
    }
}

/// `T_{B_w}`: the orientation-preserving homothety taking the cube of `w` onto `B₁`.
pub fn cube_homothety(w: &Word) -> Homothety {
    let cube = word_to_cube(w);
    let scale = 1.0 / cube.half_width;
    Homothety { scale, offset: cube.center.iter().map(|c| -scale * c).collect() }
}

/// The length-`depth` code of the dyadic cube containing `x ∈ B₁`.
pub fn point_to_word(x: &[f64], depth: usize) -> Result<Word> {
    let dim = x.len();
    check_dim(dim)?;
    if depth > MAX_DEPTH {
        return Err(Error::Shape(format!("depth {depth} exceeds {MAX_DEPTH}")));
    }
    Word::new(dim, point_to_digits(x, depth, 1.0)?)
}

/// Digits of the cube containing `x ∈ [-outer, outer]^d`, without a length cap.
pub fn point_to_digits(x: &[f64], depth: usize, outer: f64) -> Result<Vec<u8>> {
    if let Some(bad) = x.iter().find(|v| !v.is_finite() || v.abs() > outer) {
        return Err(Error::Domain(format!("coordinate {bad} outside [-{outer}, {outer}]")));
    }
    let mut center = vec![0.0; x.len()];
    let mut h = outer;
    let mut digits = Vec::with_capacity(depth);
    for _ in 0..depth {
        h *= 0.5;
        let mut g = 0u8;
        for (i, c) in center.iter_mut().enumerate() {
            if x[i] >= *c {
                g |= 1 << i;
                *c += h;
            } else {
                *c -= h;
            }
        }
        digits.push(g);
    }
    Ok(digits)
}
