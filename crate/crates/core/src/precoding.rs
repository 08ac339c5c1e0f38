//! Mod-4 symbol grouping and rotated-lattice precoding for PCIOD.
//!
//! Each of the four groups holds `R/2` real symbols. A group's symbols take
//! values `G a` where `a` ranges over `alphabet^n` and `G` is an `n x n` real
//! rotation with non-zero minimum product distance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type RMatrix = DMatrix<f64>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub groups: Vec<Vec<usize>>,
}

/// Group `g` holds every index `i < k` with `i = g (mod 4)`.
pub fn partition_mod4(k: usize) -> Result<GroupPartition> {
    if k == 0 || !k.is_multiple_of(4) {
        return Err(Error::Partition(format!("mod-4 partition needs K divisible by 4, got {k}")));
    }
    let groups = (0..4).map(|g| (g..k).step_by(4).collect()).collect();
    Ok(GroupPartition { groups })
}

/// Finite set of real levels used on every coordinate of a group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alphabet {
    pub levels: Vec<f64>,
}

impl Alphabet {
    pub fn new(mut levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("empty alphabet".into()));
        }
        levels.sort_by(f64::total_cmp);
        Ok(Alphabet { levels })
    }

    /// Centred integer PAM `{-(M-1), .., -1, 1, .., M-1}`.
    pub fn pam_integer(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("PAM needs at least 2 levels, got {m}")));
        }
        Self::new((0..m).map(|j| (2 * j) as f64 - (m - 1) as f64).collect())
    }

    /// Centred PAM scaled to unit average energy.
    pub fn pam(m: usize) -> Result<Self> {
        let base = Self::pam_integer(m)?;
        let energy = ((m * m - 1) as f64) / 3.0;
        Ok(Alphabet { levels: base.levels.iter().map(|v| v / energy.sqrt()).collect() })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Index of the level nearest `v` (ties to the lower level).
    pub fn nearest(&self, v: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &l) in self.levels.iter().enumerate() {
            let d = (v - l).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// Built-in rotation for `n` in `1..=4`.
pub fn rotation(n: usize) -> Result<RMatrix> {
    match n {
        1 => Ok(RMatrix::identity(1, 1)),
        2 => {
            let angle = 0.5 * 2f64.atan();
            let (s, c) = angle.sin_cos();
            Ok(RMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
        }
        3 => Ok(RMatrix::from_row_slice(3, 3, &ROTATION_3)),
        4 => Ok(RMatrix::from_row_slice(4, 4, &ROTATION_4)),
        _ => Err(Error::InvalidArgument(format!(
            "no built-in rotation for n = {n}; supply a rotation file"
        ))),
    }
}

pub fn rotation_provenance(n: usize) -> &'static str {
    match n {
        1 => "identity",
        2 => "planar rotation by (1/2) arctan 2",
        3 => "cyclotomic rotation over Q(cos 2pi/7), full-diversity rotation catalog",
        4 => "cyclotomic rotation over Q(cos pi/8), sqrt(1/2) cos((4k-1)(2l-1) pi/16)",
        _ => "user supplied",
    }
}

// Z[2cos(2pi/7)] rotation, minimum product distance 1/7.
const ROTATION_3: [f64; 9] = [
    -0.327985277605681, 0.591009048506103, 0.736976229099578,
    0.736976229099578, -0.327985277605681, 0.591009048506103,
    0.591009048506103, 0.736976229099578, -0.327985277605681,
];

// sqrt(2/4) cos((4k-1)(2l-1) pi/16), k, l = 1..4; minimum product distance 1/sqrt(2048).
const ROTATION_4: [f64; 16] = [
    0.5879378012096794, -0.13794968964147147, -0.6935199226610738, -0.39284747919355106,
    0.13794968964147156, -0.39284747919355106, 0.5879378012096795, -0.6935199226610739,
    -0.39284747919355095, 0.6935199226610738, -0.13794968964147133, -0.5879378012096792,
    -0.6935199226610738, -0.5879378012096793, -0.3928474791935506, -0.13794968964147172,
];

/// Parses a rotation file: `n` followed by `n^2` row-major numbers.
pub fn parse_rotation(text: &str) -> Result<RMatrix> {
    let mut tokens = text.split_whitespace();
    let n: usize = tokens
        .next()
        .ok_or_else(|| Error::Config("empty rotation file".into()))?
        .parse()
        .map_err(|e| Error::Config(format!("rotation dimension: {e}")))?;
    let values = tokens
        .map(|t| t.parse::<f64>().map_err(|e| Error::Config(format!("rotation entry {t:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if n == 0 || values.len() != n * n {
        return Err(Error::Config(format!("rotation file needs {} entries, found {}", n * n, values.len())));
    }
    let g = RMatrix::from_row_slice(n, n, &values);
    let defect = (g.transpose() * &g - RMatrix::identity(n, n)).amax();
    if defect > 1e-9 {
        return Err(Error::Config(format!("rotation is not orthogonal (defect {defect:e})")));
    }
    Ok(g)
}

pub fn format_rotation(g: &RMatrix) -> String {
    let mut out = format!("{}\n", g.nrows());
    for row in g.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Minimum over non-zero difference vectors `d` of `prod_i |(G d)_i|`,
/// with the witness `d` (in alphabet-level units).
pub fn min_product_distance(g: &RMatrix, alphabet: &Alphabet) -> Result<(f64, Vec<f64>)> {
    if alphabet.is_empty() {
        return Err(Error::InvalidArgument("empty alphabet".into()));
    }
    let n = g.nrows();
    let mut diffs: Vec<f64> = Vec::new();
    for &a in &alphabet.levels {
        for &b in &alphabet.levels {
            let d = a - b;
            if !diffs.contains(&d) {
                diffs.push(d);
            }
        }
    }
    diffs.sort_by(f64::total_cmp);
    let mut best = f64::INFINITY;
    let mut witness = vec![0.0; n];
    let mut digits = vec![0usize; n];
    let mut d = DVector::<f64>::zeros(n);
    loop {
        for (slot, &i) in d.iter_mut().zip(&digits) {
            *slot = diffs[i];
        }
        if d.iter().any(|v| *v != 0.0) {
            let prod: f64 = (g * &d).iter().map(|v| v.abs()).product();
            if prod < best {
                best = prod;
                witness = d.iter().copied().collect();
            }
        }
        if !advance(&mut digits, diffs.len()) {
            break;
        }
    }
    Ok((best, witness))
}

/// Odometer increment over `0..base` digits; false once it wraps.
pub(crate) fn advance(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

#[derive(Clone, Debug, PartialEq)]
pub struct RotatedLattice {
    pub generator: RMatrix,
    pub alphabet: Alphabet,
}

impl RotatedLattice {
    pub fn new(generator: RMatrix, alphabet: Alphabet) -> Result<Self> {
        if !generator.is_square() || generator.nrows() == 0 {
            return Err(Error::Dimension("rotation must be square and non-empty".into()));
        }
        if alphabet.is_empty() {
            return Err(Error::InvalidArgument("empty alphabet".into()));
        }
        Ok(RotatedLattice { generator, alphabet })
    }

    pub fn builtin(n: usize, alphabet: Alphabet) -> Result<Self> {
        Self::new(rotation(n)?, alphabet)
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    /// `G a` for per-coordinate alphabet indices.
    pub fn point(&self, indices: &[usize]) -> Result<Vec<f64>> {
        if indices.len() != self.dim() {
            return Err(Error::Dimension(format!("expected {} indices, got {}", self.dim(), indices.len())));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.alphabet.len()) {
            return Err(Error::InvalidArgument(format!(
                "alphabet index {bad} out of range 0..{}",
                self.alphabet.len()
            )));
        }
        let a = DVector::from_iterator(self.dim(), indices.iter().map(|&i| self.alphabet.levels[i]));
        Ok((&self.generator * a).iter().copied().collect())
    }

    /// Every lattice point, enumerated with coordinate 0 varying fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut digits = vec![0usize; n];
        let mut out = Vec::with_capacity(self.alphabet.len().pow(n as u32));
        loop {
            out.push(self.point(&digits).expect("indices in range"));
            if !advance(&mut digits, self.alphabet.len()) {
                return out;
            }
        }
    }

    /// Nearest point: undo the rotation, round each coordinate to the nearest
    /// level. Exact for orthogonal `G` since the alphabet is a product set.
    pub fn slice(&self, y: &[f64]) -> Vec<usize> {
        let v = DVector::from_column_slice(y);
        let back = self.generator.transpose() * v;
        back.iter().map(|&b| self.alphabet.nearest(b)).collect()
    }

    /// Flat index (coordinate 0 fastest) of a per-coordinate index tuple.
    pub fn flat_index(&self, indices: &[usize]) -> usize {
        indices.iter().rev().fold(0, |acc, &i| acc * self.alphabet.len() + i)
    }
}

/// Places `G a_g` onto the symbol positions of every group `g`.
pub fn encode_groups(
    indices: &[Vec<usize>],
    lattice: &RotatedLattice,
    partition: &GroupPartition,
) -> Result<Vec<f64>> {
    if indices.len() != partition.groups.len() {
        return Err(Error::Dimension(format!(
            "{} index tuples for {} groups",
            indices.len(),
            partition.groups.len()
        )));
    }
    let k = partition.groups.iter().map(Vec::len).sum();
    let mut x = vec![0.0; k];
    for (group, idx) in partition.groups.iter().zip(indices) {
        if group.len() != lattice.dim() {
            return Err(Error::Dimension(format!(
                "group of size {} with a {}-dimensional lattice",
                group.len(),
                lattice.dim()
            )));
        }
        for (&pos, v) in group.iter().zip(lattice.point(idx)?) {
            x[pos] = v;
        }
    }
    Ok(x)
}
