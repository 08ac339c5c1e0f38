//! Detection at the destination.
//!
//! All receivers work on a whitened real-linear model `y = F x + n`, where
//! column `k` of `F` is the received image of the unit symbol vector `e_k`
//! (whitening and channel already folded in, once per channel draw) and `n`
//! is unit-variance circular complex noise.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::designs::Design;
use crate::error::{Error, Result};
use crate::matkernel::{c, is_zero, CMatrix, CVector};
use crate::precoding::{rotation, Alphabet, RMatrix, RotatedLattice};

/// Exhaustive joint search refuses codebooks larger than this.
pub const JOINT_ML_LIMIT: u128 = 1_000_000;

/// Independent block of real symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct SubCodebook {
    pub positions: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    /// When set, `points` is exactly `lattice.points()` and slicing uses it.
    pub lattice: Option<RotatedLattice>,
}

impl SubCodebook {
    pub fn from_lattice(positions: Vec<usize>, lattice: RotatedLattice) -> Result<Self> {
        if positions.len() != lattice.dim() {
            return Err(Error::Dimension(format!(
                "{} positions for a {}-dimensional lattice",
                positions.len(),
                lattice.dim()
            )));
        }
        Ok(SubCodebook { positions, points: lattice.points(), lattice: Some(lattice) })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the point nearest `v` in Euclidean distance, ties to the
    /// lowest index.
    pub fn nearest(&self, v: &[f64]) -> usize {
        if let Some(lattice) = &self.lattice {
            return lattice.flat_index(&lattice.slice(v));
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d: f64 = p.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// Product codebook: every group picks a point independently.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub k: usize,
    pub groups: Vec<SubCodebook>,
}

impl Codebook {
    pub fn new(k: usize, groups: Vec<SubCodebook>) -> Result<Self> {
        let positions: Vec<Vec<usize>> = groups.iter().map(|g| g.positions.clone()).collect();
        crate::designs::validate_partition(&positions, k)?;
        for g in &groups {
            if g.points.is_empty() {
                return Err(Error::InvalidArgument("empty sub-codebook".into()));
            }
            if g.points.iter().any(|p| p.len() != g.positions.len()) {
                return Err(Error::Dimension("sub-codebook point of wrong dimension".into()));
            }
        }
        Ok(Codebook { k, groups })
    }

    pub fn size(&self) -> u128 {
        self.groups.iter().map(|g| g.len() as u128).product()
    }

    pub fn partition(&self) -> Vec<Vec<usize>> {
        self.groups.iter().map(|g| g.positions.clone()).collect()
    }

    pub fn encode(&self, indices: &[usize]) -> Vec<f64> {
        let mut x = vec![0.0; self.k];
        for (g, &i) in self.groups.iter().zip(indices) {
            for (&pos, &v) in g.positions.iter().zip(&g.points[i]) {
                x[pos] = v;
            }
        }
        x
    }

    /// Mixed-radix split of a joint index, group 0 varying fastest.
    pub fn split_index(&self, mut joint: u128) -> Vec<usize> {
        self.groups
            .iter()
            .map(|g| {
                let n = g.len() as u128;
                let i = (joint % n) as usize;
                joint /= n;
                i
            })
            .collect()
    }

    pub fn joint_index(&self, indices: &[usize]) -> u128 {
        self.groups
            .iter()
            .zip(indices)
            .rev()
            .fold(0u128, |acc, (g, &i)| acc * g.len() as u128 + i as u128)
    }

    /// All symbols collapsed into one group (the `g = 1` view).
    pub fn merged(&self) -> Result<Codebook> {
        let size = self.size();
        if size > JOINT_ML_LIMIT {
            return Err(Error::ResourceGuard { what: "merged codebook", needed: size, limit: JOINT_ML_LIMIT });
        }
        let positions: Vec<usize> = (0..self.k).collect();
        let points = (0..size).map(|j| self.encode(&self.split_index(j))).collect();
        Codebook::new(self.k, vec![SubCodebook { positions, points, lattice: None }])
    }

    /// Merges sub-codebooks into the groups of `partition`. Every existing
    /// group must sit inside a single partition group.
    pub fn regroup(&self, partition: &[Vec<usize>]) -> Result<Codebook> {
        crate::designs::validate_partition(partition, self.k)?;
        let mut owner = vec![0; self.k];
        for (g, members) in partition.iter().enumerate() {
            for &i in members {
                owner[i] = g;
            }
        }
        let mut parts: Vec<Vec<&SubCodebook>> = vec![Vec::new(); partition.len()];
        for sub in &self.groups {
            let g = owner[sub.positions[0]];
            if sub.positions.iter().any(|&p| owner[p] != g) {
                return Err(Error::Partition(format!(
                    "symbols {:?} are coded jointly but split by the partition",
                    sub.positions
                )));
            }
            parts[g].push(sub);
        }
        let groups = parts
            .into_iter()
            .map(|subs| {
                if let [single] = subs.as_slice() {
                    return Ok((*single).clone());
                }
                let size: u128 = subs.iter().map(|s| s.len() as u128).product();
                if size > JOINT_ML_LIMIT {
                    return Err(Error::ResourceGuard { what: "group sub-codebook", needed: size, limit: JOINT_ML_LIMIT });
                }
                let positions: Vec<usize> = subs.iter().flat_map(|s| s.positions.iter().copied()).collect();
                let radix: Vec<usize> = subs.iter().map(|s| s.len()).collect();
                let mut digits = vec![0; subs.len()];
                let mut points = Vec::with_capacity(size as usize);
                loop {
                    points.push(subs.iter().zip(&digits).flat_map(|(s, &d)| s.points[d].iter().copied()).collect());
                    if !mixed_advance(&mut digits, &radix) {
                        break;
                    }
                }
                Ok(SubCodebook { positions, points, lattice: None })
            })
            .collect::<Result<Vec<_>>>()?;
        Codebook::new(self.k, groups)
    }

    /// Average of `x_k^2` over the codebook and coordinates.
    pub fn energy_per_coordinate(&self) -> f64 {
        let total: f64 = self
            .groups
            .iter()
            .map(|g| g.points.iter().flatten().map(|v| v * v).sum::<f64>() / g.len() as f64)
            .sum();
        total / self.k as f64
    }

    pub fn random_indices<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.groups.iter().map(|g| rng.random_range(0..g.len())).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationKind {
    /// Square QAM on every complex symbol `(x_{2m}, x_{2m+1})`.
    Qam,
    /// Independent PAM on every real coordinate.
    Pam,
    /// Rotated PAM lattice on every group of the design's partition.
    Lattice,
}

/// Symbol alphabet selector, written `qam4`, `pam2`, `lattice2`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Constellation {
    pub kind: ConstellationKind,
    /// Points per complex symbol for QAM, levels per coordinate otherwise.
    pub size: usize,
}

impl Constellation {
    pub fn qam(size: usize) -> Self {
        Constellation { kind: ConstellationKind::Qam, size }
    }

    pub fn pam(size: usize) -> Self {
        Constellation { kind: ConstellationKind::Pam, size }
    }

    pub fn lattice(size: usize) -> Self {
        Constellation { kind: ConstellationKind::Lattice, size }
    }

    fn levels(&self, normalized: bool) -> Result<Alphabet> {
        let m = match self.kind {
            ConstellationKind::Qam => {
                let side = (self.size as f64).sqrt().round() as usize;
                if side < 2 || side * side != self.size {
                    return Err(Error::InvalidArgument(format!(
                        "QAM size must be a perfect square >= 4, got {}",
                        self.size
                    )));
                }
                side
            }
            _ => self.size,
        };
        if normalized {
            Alphabet::pam(m)
        } else {
            Alphabet::pam_integer(m)
        }
    }

    /// Codebook for `design`. `normalized` scales levels to unit energy per
    /// real coordinate; otherwise integer levels `+-1, +-3, ..` are used.
    pub fn codebook(&self, design: &Design, normalized: bool) -> Result<Codebook> {
        self.codebook_with_rotation(design, normalized, None)
    }

    /// As [`Constellation::codebook`], with `rotation` replacing the built-in
    /// rotation for lattice groups of matching dimension.
    pub fn codebook_with_rotation(
        &self,
        design: &Design,
        normalized: bool,
        custom: Option<&RMatrix>,
    ) -> Result<Codebook> {
        let alphabet = self.levels(normalized)?;
        let groups = match self.kind {
            ConstellationKind::Qam => (0..design.k / 2)
                .map(|m| {
                    let lattice = RotatedLattice::new(DMatrix::identity(2, 2), alphabet.clone())?;
                    SubCodebook::from_lattice(vec![2 * m, 2 * m + 1], lattice)
                })
                .collect::<Result<Vec<_>>>()?,
            ConstellationKind::Pam => (0..design.k)
                .map(|k| {
                    let lattice = RotatedLattice::new(DMatrix::identity(1, 1), alphabet.clone())?;
                    SubCodebook::from_lattice(vec![k], lattice)
                })
                .collect::<Result<Vec<_>>>()?,
            ConstellationKind::Lattice => design
                .partition
                .iter()
                .map(|group| {
                    let generator = match custom {
                        Some(g) if g.nrows() == group.len() => g.clone(),
                        _ => rotation(group.len())?,
                    };
                    let lattice = RotatedLattice::new(generator, alphabet.clone())?;
                    SubCodebook::from_lattice(group.clone(), lattice)
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Codebook::new(design.k, groups)
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            ConstellationKind::Qam => "qam",
            ConstellationKind::Pam => "pam",
            ConstellationKind::Lattice => "lattice",
        };
        write!(f, "{name}{}", self.size)
    }
}

impl From<Constellation> for String {
    fn from(c: Constellation) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for Constellation {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let split = s.find(|c: char| c.is_ascii_digit()).unwrap_or(s.len());
        let (name, digits) = s.split_at(split);
        let size: usize = digits
            .parse()
            .map_err(|_| Error::Config(format!("constellation {s:?} needs a size, e.g. qam4")))?;
        let kind = match name {
            "qam" => ConstellationKind::Qam,
            "pam" => ConstellationKind::Pam,
            "lattice" => ConstellationKind::Lattice,
            _ => return Err(Error::Config(format!("unknown constellation {s:?}"))),
        };
        Ok(Constellation { kind, size })
    }
}

/// Whitened real-linear receive model.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    /// `N x K`; column `k` is the noiseless observation of `e_k`.
    pub f: CMatrix,
}

impl LinearModel {
    pub fn new(f: CMatrix) -> Self {
        LinearModel { f }
    }

    pub fn observe(&self, x: &[f64]) -> CVector {
        let mut y = CVector::zeros(self.f.nrows());
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                y += self.f.column(k) * c(xk, 0.0);
            }
        }
        y
    }

    /// `||y - F x||^2`.
    pub fn metric(&self, y: &CVector, x: &[f64]) -> f64 {
        (y - self.observe(x)).norm_squared()
    }

    /// Largest `|Re(f_i^H f_j)|` over pairs in different groups, and the
    /// largest column energy for scale.
    pub fn cross_group_margin(&self, partition: &[Vec<usize>]) -> (f64, f64) {
        let k = self.f.ncols();
        let mut group_of = vec![usize::MAX; k];
        for (g, members) in partition.iter().enumerate() {
            for &i in members {
                group_of[i] = g;
            }
        }
        let scale = (0..k).map(|i| self.f.column(i).norm_squared()).fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                if group_of[i] != group_of[j] {
                    worst = worst.max(self.f.column(i).dotc(&self.f.column(j)).re.abs());
                }
            }
        }
        (worst, scale)
    }

    pub fn is_group_orthogonal(&self, partition: &[Vec<usize>]) -> bool {
        let (margin, scale) = self.cross_group_margin(partition);
        is_zero(margin, scale)
    }

    /// `[Re F; Im F]` and `[Re y; Im y]`.
    fn real_stack(&self, y: &CVector) -> (DMatrix<f64>, DVector<f64>) {
        let (n, k) = self.f.shape();
        let a = DMatrix::from_fn(2 * n, k, |r, col| {
            if r < n {
                self.f[(r, col)].re
            } else {
                self.f[(r - n, col)].im
            }
        });
        let b = DVector::from_fn(2 * n, |r, _| if r < n { y[r].re } else { y[r - n].im });
        (a, b)
    }
}

/// Per-group received images `F_g x_p` for every point of every group.
fn group_images(model: &LinearModel, codebook: &Codebook) -> Vec<Vec<CVector>> {
    codebook
        .groups
        .iter()
        .map(|g| {
            g.points
                .iter()
                .map(|p| {
                    let mut v = CVector::zeros(model.f.nrows());
                    for (&pos, &val) in g.positions.iter().zip(p) {
                        if val != 0.0 {
                            v += model.f.column(pos) * c(val, 0.0);
                        }
                    }
                    v
                })
                .collect()
        })
        .collect()
}

/// Exhaustive ML over the product codebook; ties go to the lowest joint index.
pub fn ml_joint(y: &CVector, model: &LinearModel, codebook: &Codebook) -> Result<Vec<usize>> {
    let size = codebook.size();
    if size > JOINT_ML_LIMIT {
        return Err(Error::ResourceGuard { what: "joint ML search", needed: size, limit: JOINT_ML_LIMIT });
    }
    let images = group_images(model, codebook);
    let radix: Vec<usize> = codebook.groups.iter().map(SubCodebook::len).collect();
    let mut digits = vec![0usize; radix.len()];
    let mut best = digits.clone();
    let mut best_metric = f64::INFINITY;
    let mut residual = CVector::zeros(y.len());
    loop {
        residual.copy_from(y);
        for (g, &d) in digits.iter().enumerate() {
            residual -= &images[g][d];
        }
        let m = residual.norm_squared();
        if m < best_metric {
            best_metric = m;
            best.copy_from_slice(&digits);
        }
        if !mixed_advance(&mut digits, &radix) {
            return Ok(best);
        }
    }
}

fn mixed_advance(digits: &mut [usize], radix: &[usize]) -> bool {
    for (d, &r) in digits.iter_mut().zip(radix) {
        *d += 1;
        if *d < r {
            return true;
        }
        *d = 0;
    }
    false
}

/// Independent per-group ML. Refuses when the model's groups are not mutually
/// orthogonal, since the decomposition of the metric would not hold.
pub fn ml_grouped(y: &CVector, model: &LinearModel, codebook: &Codebook) -> Result<Vec<usize>> {
    let partition = codebook.partition();
    let (margin, scale) = model.cross_group_margin(&partition);
    if !is_zero(margin, scale) {
        return Err(Error::Verification(format!(
            "groups are not orthogonal for this channel (margin {margin:e})"
        )));
    }
    Ok(ml_grouped_unchecked(y, model, codebook))
}

/// Per-group minimization without the orthogonality check. Exact ML only when
/// the groups are orthogonal; otherwise a heuristic.
pub fn ml_grouped_unchecked(y: &CVector, model: &LinearModel, codebook: &Codebook) -> Vec<usize> {
    let images = group_images(model, codebook);
    images
        .iter()
        .map(|imgs| {
            let mut best = 0;
            let mut best_metric = f64::INFINITY;
            for (i, v) in imgs.iter().enumerate() {
                let m = (y - v).norm_squared();
                if m < best_metric {
                    best = i;
                    best_metric = m;
                }
            }
            best
        })
        .collect()
}

/// `||y - F_g x_g||^2` for every group at the given indices.
pub fn group_metrics(y: &CVector, model: &LinearModel, codebook: &Codebook, indices: &[usize]) -> Vec<f64> {
    codebook
        .groups
        .iter()
        .zip(indices)
        .map(|(g, &i)| {
            let mut x = vec![0.0; codebook.k];
            for (&pos, &v) in g.positions.iter().zip(&g.points[i]) {
                x[pos] = v;
            }
            model.metric(y, &x)
        })
        .collect()
}

fn slice_estimate(estimate: &DVector<f64>, codebook: &Codebook) -> Vec<usize> {
    codebook
        .groups
        .iter()
        .map(|g| {
            let v: Vec<f64> = g.positions.iter().map(|&p| estimate[p]).collect();
            g.nearest(&v)
        })
        .collect()
}

/// Least-squares inversion followed by per-group slicing. `None` marks an
/// erasure: the stacked real channel does not have full column rank.
pub fn zf_detect(y: &CVector, model: &LinearModel, codebook: &Codebook) -> Option<Vec<usize>> {
    let (a, b) = model.real_stack(y);
    let k = a.ncols();
    let svd = a.svd(true, true);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let rank = svd.singular_values.iter().filter(|&&s| !is_zero(s, top)).count();
    if rank < k || top == 0.0 {
        return None;
    }
    let estimate = svd.solve(&b, 0.0).ok()?;
    Some(slice_estimate(&estimate, codebook))
}

/// Linear MMSE estimate then slicing. `noise_var` is the complex noise
/// variance per observation; infinity gives the all-zero estimate.
pub fn mmse_detect(y: &CVector, model: &LinearModel, codebook: &Codebook, noise_var: f64) -> Vec<usize> {
    let k = codebook.k;
    if noise_var.is_infinite() {
        return slice_estimate(&DVector::zeros(k), codebook);
    }
    let (a, b) = model.real_stack(y);
    let energy = codebook.energy_per_coordinate().max(f64::MIN_POSITIVE);
    let reg = 0.5 * noise_var / energy;
    let gram = a.transpose() * &a + DMatrix::identity(k, k) * reg;
    let rhs = a.transpose() * b;
    let estimate = gram
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(k));
    slice_estimate(&estimate, codebook)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReceiverKind {
    #[serde(rename = "joint-ml")]
    JointMl,
    #[serde(rename = "grouped-ml")]
    GroupedMl,
    #[serde(rename = "zf")]
    Zf,
    #[serde(rename = "mmse")]
    Mmse,
}

impl ReceiverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReceiverKind::JointMl => "joint-ml",
            ReceiverKind::GroupedMl => "grouped-ml",
            ReceiverKind::Zf => "zf",
            ReceiverKind::Mmse => "mmse",
        }
    }
}

impl FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint-ml" => Ok(ReceiverKind::JointMl),
            "grouped-ml" => Ok(ReceiverKind::GroupedMl),
            "zf" => Ok(ReceiverKind::Zf),
            "mmse" => Ok(ReceiverKind::Mmse),
            _ => Err(Error::Config(format!("unknown receiver {s:?} (joint-ml|grouped-ml|zf|mmse)"))),
        }
    }
}
