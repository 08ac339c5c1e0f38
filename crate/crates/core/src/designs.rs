//! Linear dispersion designs used as distributed space-time codes.
//!
//! A [`Design`] is a `T x R` matrix function of `K` real symbols
//! `S(X) = sum_k x_k W_k`. Real symbols are paired into complex information
//! symbols `u_m = x_{2m} + i x_{2m+1}`, so every design has `K / 2` complex
//! inputs. The source broadcasts either `u` itself or, when a
//! [`PrecodePair`] is attached, `P u + Q u*`. Column (relay) structure is
//! always stated relative to that broadcast vector.
//!
//! Symbol indexing is 0-based throughout. For the Toeplitz family the complex
//! symbol `x_1 .. x_{T1}` of the usual presentation is `u_0 .. u_{T1-1}` here.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkernel::{c, conj, is_zero, max_abs, CMatrix, CVector, I};
use crate::precoding::partition_mod4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Pciod,
    Ciod4,
    Toeplitz,
    Cda,
    Custom,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Pciod => "pciod",
            Family::Ciod4 => "ciod4",
            Family::Toeplitz => "toeplitz",
            Family::Cda => "cda",
            Family::Custom => "custom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Plain,
    Conjugated,
}

/// Real-linear precoder `s~ = P s + Q s*`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecodePair {
    pub p: CMatrix,
    pub q: CMatrix,
}

impl PrecodePair {
    pub fn apply(&self, s: &CVector) -> CVector {
        &self.p * s + &self.q * s.map(|z| z.conj())
    }
}

/// Which variables a column-structure question is asked about.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariableLevel {
    /// The complex information symbols `u`.
    Raw,
    /// The broadcast vector (`P u + Q u*` when a precoder is attached, else `u`).
    Declared,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub family: Family,
    pub t: usize,
    pub r: usize,
    pub k: usize,
    pub weights: Vec<CMatrix>,
    pub col_conj: Option<Vec<ColumnKind>>,
    pub partition: Vec<Vec<usize>>,
    pub precode: Option<PrecodePair>,
}

impl Design {
    /// Builds a design from weight matrices, checking shapes and the partition.
    pub fn new(
        family: Family,
        weights: Vec<CMatrix>,
        partition: Vec<Vec<usize>>,
        precode: Option<PrecodePair>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || !k.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "a design needs a positive even number of real symbols, got {k}"
            )));
        }
        let (t, r) = weights[0].shape();
        if t == 0 || r == 0 {
            return Err(Error::Dimension("empty weight matrix".into()));
        }
        if let Some(bad) = weights.iter().position(|w| w.shape() != (t, r)) {
            return Err(Error::Dimension(format!(
                "weight {bad} is {:?}, expected {:?}",
                weights[bad].shape(),
                (t, r)
            )));
        }
        validate_partition(&partition, k)?;
        if let Some(pc) = &precode {
            let n = k / 2;
            if pc.p.shape() != (n, n) || pc.q.shape() != (n, n) {
                return Err(Error::Dimension(format!("precode pair must be {n}x{n}")));
            }
        }
        let mut d = Design { family, t, r, k, weights, col_conj: None, partition, precode };
        d.col_conj = d.resolve_columns();
        Ok(d)
    }

    /// Number of complex symbols the source broadcasts (`T1`).
    pub fn t1(&self) -> usize {
        self.k / 2
    }

    /// `S(X) = sum_k x_k W_k`.
    pub fn codeword(&self, x: &[f64]) -> CMatrix {
        assert_eq!(x.len(), self.k, "symbol vector length");
        let mut s = CMatrix::zeros(self.t, self.r);
        for (xk, w) in x.iter().zip(&self.weights) {
            if *xk != 0.0 {
                s += w.scale(*xk);
            }
        }
        s
    }

    /// `u_m = x_{2m} + i x_{2m+1}`.
    pub fn info_symbols(&self, x: &[f64]) -> CVector {
        CVector::from_fn(self.k / 2, |m, _| c(x[2 * m], x[2 * m + 1]))
    }

    /// Vector broadcast by the source in the first phase.
    pub fn source_vector(&self, x: &[f64]) -> CVector {
        self.level_vector(x, VariableLevel::Declared)
    }

    pub fn level_vector(&self, x: &[f64], level: VariableLevel) -> CVector {
        let u = self.info_symbols(x);
        match (level, &self.precode) {
            (VariableLevel::Declared, Some(pc)) => pc.apply(&u),
            _ => u,
        }
    }

    /// `T1 x K` matrix whose column k is the level vector at the unit vector e_k.
    fn level_map(&self, level: VariableLevel) -> CMatrix {
        let n = self.k / 2;
        let mut v = CMatrix::zeros(n, self.k);
        let mut e = vec![0.0; self.k];
        for k in 0..self.k {
            e[k] = 1.0;
            v.set_column(k, &self.level_vector(&e, level));
            e[k] = 0.0;
        }
        v
    }

    /// Column `col` of every weight matrix, stacked as a `T x K` matrix.
    fn column_weights(&self, col: usize) -> CMatrix {
        CMatrix::from_fn(self.t, self.k, |r, k| self.weights[k][(r, col)])
    }

    /// Decides whether column `col` is a linear function of the level vector
    /// or of its conjugate.
    pub fn column_form(&self, col: usize, level: VariableLevel) -> Result<ColumnForm> {
        let v = self.level_map(level);
        let w = self.column_weights(col);
        let scale = max_abs(&w).max(max_abs(&v));
        let plain = solve_row_space(&w, &v);
        let conjugated = solve_row_space(&w, &conj(&v));
        let residual = |m: &Option<CMatrix>, basis: &CMatrix| match m {
            Some(a) => max_abs(&(a * basis - &w)),
            None => f64::INFINITY,
        };
        let plain_res = residual(&plain, &v);
        if let Some(a) = plain.as_ref().filter(|_| is_zero(plain_res, scale)) {
            return Ok(ColumnForm::Plain(snap(a.clone(), scale)));
        }
        let conj_res = residual(&conjugated, &conj(&v));
        if let Some(b) = conjugated.as_ref().filter(|_| is_zero(conj_res, scale)) {
            return Ok(ColumnForm::Conjugated(snap(b.clone(), scale)));
        }
        if plain.is_none() && conjugated.is_none() {
            return Err(Error::Dimension("symbol map is not of full rank".into()));
        }
        Ok(ColumnForm::Mixed { plain_residual: plain_res, conj_residual: conj_res })
    }

    fn resolve_columns(&self) -> Option<Vec<ColumnKind>> {
        (0..self.r)
            .map(|col| match self.column_form(col, VariableLevel::Declared) {
                Ok(ColumnForm::Plain(_)) => Some(ColumnKind::Plain),
                Ok(ColumnForm::Conjugated(_)) => Some(ColumnKind::Conjugated),
                _ => None,
            })
            .collect()
    }

    /// Returns a copy with a different symbol partition.
    pub fn with_partition(mut self, partition: Vec<Vec<usize>>) -> Result<Self> {
        validate_partition(&partition, self.k)?;
        self.partition = partition;
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&DesignFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DesignFile = serde_json::from_str(text)?;
        file.into_design()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnForm {
    Plain(CMatrix),
    Conjugated(CMatrix),
    Mixed { plain_residual: f64, conj_residual: f64 },
}

/// Solves `A V = W` for `A` assuming `V` has full row rank.
fn solve_row_space(w: &CMatrix, v: &CMatrix) -> Option<CMatrix> {
    let gram = v * v.adjoint();
    let inv = gram.try_inverse()?;
    Some(w * v.adjoint() * inv)
}

fn snap(m: CMatrix, scale: f64) -> CMatrix {
    let floor = 1e-15 * (1.0 + scale);
    m.map(|z| {
        let re = if z.re.abs() < floor { 0.0 } else { z.re };
        let im = if z.im.abs() < floor { 0.0 } else { z.im };
        c(re, im)
    })
}

pub fn validate_partition(partition: &[Vec<usize>], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    for group in partition {
        if group.is_empty() {
            return Err(Error::Partition("empty group".into()));
        }
        for &i in group {
            if i >= k {
                return Err(Error::Partition(format!("index {i} outside 0..{k}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Partition(format!("index {i} appears twice")));
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Partition(format!("index {missing} not covered")));
    }
    Ok(())
}

fn single_group(k: usize) -> Vec<Vec<usize>> {
    vec![(0..k).collect()]
}

/// Rate-one `R x R` precoded CIOD: `R/2` Alamouti-form blocks on the diagonal,
/// block `j` carrying `x_{4j} .. x_{4j+3}` as
/// `[[x_{4j} + i x_{4j+1}, -x_{4j+2} + i x_{4j+3}], [x_{4j+2} + i x_{4j+3}, x_{4j} - i x_{4j+1}]]`.
pub fn build_pciod(r: usize) -> Result<Design> {
    if r < 2 || !r.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "pciod needs an even relay count >= 2, got {r}; use pciod-rect for odd counts"
        )));
    }
    let k = 2 * r;
    let one = c(1.0, 0.0);
    let mut weights = vec![CMatrix::zeros(r, r); k];
    for j in 0..r / 2 {
        let (a, b) = (2 * j, 2 * j + 1);
        let base = 4 * j;
        weights[base][(a, a)] = one;
        weights[base][(b, b)] = one;
        weights[base + 1][(a, a)] = I;
        weights[base + 1][(b, b)] = -I;
        weights[base + 2][(a, b)] = -one;
        weights[base + 2][(b, a)] = one;
        weights[base + 3][(a, b)] = I;
        weights[base + 3][(b, a)] = I;
    }
    Design::new(Family::Pciod, weights, partition_mod4(k)?.groups, None)
}

/// Odd relay counts: the `R + 1` PCIOD with its last column dropped.
pub fn build_pciod_rect(r: usize) -> Result<Design> {
    if r.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "pciod-rect needs an odd relay count, got {r}; use pciod"
        )));
    }
    let full = build_pciod(r + 1)?;
    let weights = full.weights.iter().map(|w| w.columns(0, r).into_owned()).collect();
    Design::new(Family::Pciod, weights, full.partition, None)
}

/// Dispatches to [`build_pciod`] or [`build_pciod_rect`] by parity.
pub fn build_pciod_any(r: usize) -> Result<Design> {
    if r.is_multiple_of(2) {
        build_pciod(r)
    } else {
        build_pciod_rect(r)
    }
}

/// Interleaving permutation of the 4x4 CIOD: `x~_m = Re(u_m) + i Im(u_{PAIR[m]})`.
const CIOD4_PAIR: [usize; 4] = [2, 3, 0, 1];

fn alamouti_block(m: &mut CMatrix, at: usize, a: Complex64, b: Complex64) {
    m[(at, at)] = a;
    m[(at, at + 1)] = -b.conj();
    m[(at + 1, at)] = b;
    m[(at + 1, at + 1)] = a.conj();
}

/// 4x4 coordinate interleaved orthogonal design over the tilde variables
/// `x~_m = x_{mI} + i x_{(m+2 mod 4)Q}`, together with the precoder the
/// source applies.
///
/// The source broadcasts `s~ = sqrt(2) x~` (so `P`, `Q` have entries
/// `+-1/sqrt(2)`), and every relay matrix carries the matching `1/sqrt(2)`.
/// Real symbols are ordered `[x_{1I}, x_{1Q}, x_{2I}, x_{2Q}, ...]`.
pub fn build_ciod4() -> Result<(Design, PrecodePair)> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut p = CMatrix::zeros(4, 4);
    let mut q = CMatrix::zeros(4, 4);
    for (m, &other) in CIOD4_PAIR.iter().enumerate() {
        // Re(u_m) = (u_m + u_m*)/2, i Im(u_o) = (u_o - u_o*)/2, both scaled by sqrt(2)
        p[(m, m)] += c(h, 0.0);
        q[(m, m)] += c(h, 0.0);
        p[(m, other)] += c(h, 0.0);
        q[(m, other)] -= c(h, 0.0);
    }
    let tilde = |x: &[f64]| -> Vec<Complex64> {
        (0..4).map(|m| c(x[2 * m], x[2 * CIOD4_PAIR[m] + 1])).collect()
    };
    let weights = (0..8)
        .map(|k| {
            let mut x = [0.0; 8];
            x[k] = 1.0;
            let xt = tilde(&x);
            let mut w = CMatrix::zeros(4, 4);
            alamouti_block(&mut w, 0, xt[0], xt[1]);
            alamouti_block(&mut w, 2, xt[2], xt[3]);
            w
        })
        .collect();
    let partition = (0..4).map(|m| vec![2 * m, 2 * m + 1]).collect();
    let pair = PrecodePair { p, q };
    let design = Design::new(Family::Ciod4, weights, partition, Some(pair.clone()))?;
    Ok((design, pair))
}

/// Toeplitz design: column `j` is `(u_0 .. u_{T1-1})` shifted down by `j`.
pub fn build_toeplitz(t1: usize, r: usize) -> Result<Design> {
    if t1 == 0 || r == 0 {
        return Err(Error::InvalidArgument("toeplitz needs t1 >= 1 and r >= 1".into()));
    }
    let t = t1 + r - 1;
    let mut weights = Vec::with_capacity(2 * t1);
    for m in 0..t1 {
        for unit in [c(1.0, 0.0), I] {
            let mut w = CMatrix::zeros(t, r);
            for j in 0..r {
                w[(j + m, j)] = unit;
            }
            weights.push(w);
        }
    }
    Design::new(Family::Toeplitz, weights, single_group(2 * t1), None)
}

/// Numeric parameters of a cyclic-division-algebra design.
#[derive(Clone, Debug, PartialEq)]
pub struct CdaParams {
    pub delta: Complex64,
    /// Normalisation; entries are scaled by `1/sqrt(theta)`.
    pub theta: f64,
    /// `sigma_table[i][j] = sigma^j(t_i)` for basis element `t_i`.
    pub sigma_table: Vec<Vec<Complex64>>,
}

/// `R x R` design in `R^2` complex symbols `f_{a,i}` (symbol index `a R + i`):
/// entry `(k, j)` is `(1/sqrt(theta)) * (delta if k < j) * sum_i f_{(k-j) mod R, i} sigma^j(t_i)`.
pub fn build_cda(r: usize, params: &CdaParams) -> Result<Design> {
    if r == 0 {
        return Err(Error::InvalidArgument("cda needs r >= 1".into()));
    }
    if params.sigma_table.len() != r || params.sigma_table.iter().any(|row| row.len() != r) {
        return Err(Error::Dimension(format!("sigma table must be {r}x{r}")));
    }
    if params.theta.is_nan() || params.theta <= 0.0 || !params.theta.is_finite() {
        return Err(Error::InvalidArgument(format!("theta must be positive, got {}", params.theta)));
    }
    let norm = 1.0 / params.theta.sqrt();
    let mut weights = Vec::with_capacity(2 * r * r);
    for a in 0..r {
        for i in 0..r {
            for unit in [c(1.0, 0.0), I] {
                let w = CMatrix::from_fn(r, r, |row, col| {
                    if (row + r - col) % r != a {
                        return c(0.0, 0.0);
                    }
                    let wrap = if row < col { params.delta } else { c(1.0, 0.0) };
                    unit * wrap * params.sigma_table[i][col] * norm
                });
                weights.push(w);
            }
        }
    }
    Design::new(Family::Cda, weights, single_group(2 * r * r), None)
}

/// Golden-code parameters: `delta = i`, `theta = 5`, basis `{alpha, alpha phi}`
/// with `phi = (1 + sqrt 5)/2`, `alpha = 1 + i - i phi`, and `sigma` the
/// Galois automorphism `sqrt 5 -> -sqrt 5`.
pub fn golden_params() -> CdaParams {
    let s5 = 5f64.sqrt();
    let phi = (1.0 + s5) / 2.0;
    let phi_bar = (1.0 - s5) / 2.0;
    let alpha = c(1.0, 1.0 - phi);
    let alpha_bar = c(1.0, 1.0 - phi_bar);
    CdaParams {
        delta: I,
        theta: 5.0,
        sigma_table: vec![vec![alpha, alpha_bar], vec![alpha * phi, alpha_bar * phi_bar]],
    }
}

pub fn build_golden() -> Result<Design> {
    build_cda(2, &golden_params())
}

/// One relay's processing: `matrix * r` or `matrix * conj(r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelayMatrix {
    pub matrix: CMatrix,
    pub conjugated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelayMatrixSet {
    pub t1: usize,
    pub t2: usize,
    pub relays: Vec<RelayMatrix>,
}

impl RelayMatrixSet {
    /// Count of plain (non-conjugating) relays.
    pub fn q(&self) -> usize {
        self.relays.iter().filter(|r| !r.conjugated).count()
    }

    /// Relay indices with plain relays first, conjugating relays after, each in
    /// original order.
    pub fn canonical_order(&self) -> Vec<usize> {
        let plain = (0..self.relays.len()).filter(|&i| !self.relays[i].conjugated);
        let conjugated = (0..self.relays.len()).filter(|&i| self.relays[i].conjugated);
        plain.chain(conjugated).collect()
    }

    pub fn reordered(&self, order: &[usize]) -> Self {
        RelayMatrixSet {
            t1: self.t1,
            t2: self.t2,
            relays: order.iter().map(|&i| self.relays[i].clone()).collect(),
        }
    }

    /// What relay `i` transmits (before power scaling) given its input `s`.
    pub fn apply(&self, i: usize, s: &CVector) -> CVector {
        let relay = &self.relays[i];
        if relay.conjugated {
            &relay.matrix * s.map(|z| z.conj())
        } else {
            &relay.matrix * s
        }
    }

    /// `[M_1 s .. M_R s*]`.
    pub fn reassemble(&self, s: &CVector) -> CMatrix {
        let mut out = CMatrix::zeros(self.t2, self.relays.len());
        for i in 0..self.relays.len() {
            out.set_column(i, &self.apply(i, s));
        }
        out
    }
}

/// Extracts per-relay matrices relative to the broadcast vector.
pub fn relay_matrix_set(d: &Design) -> Result<RelayMatrixSet> {
    let mut relays = Vec::with_capacity(d.r);
    for col in 0..d.r {
        let relay = match d.column_form(col, VariableLevel::Declared)? {
            ColumnForm::Plain(m) => RelayMatrix { matrix: m, conjugated: false },
            ColumnForm::Conjugated(m) => RelayMatrix { matrix: m, conjugated: true },
            ColumnForm::Mixed { .. } => return Err(Error::Condition1 { column: col }),
        };
        relays.push(relay);
    }
    Ok(RelayMatrixSet { t1: d.t1(), t2: d.t, relays })
}

type MatrixRepr = Vec<Vec<[f64; 2]>>;

fn to_repr(m: &CMatrix) -> MatrixRepr {
    m.row_iter().map(|row| row.iter().map(|z| [z.re, z.im]).collect()).collect()
}

fn from_repr(rows: &MatrixRepr) -> Result<CMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix in design file".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, col| c(rows[r][col][0], rows[r][col][1])))
}

#[derive(Serialize, Deserialize)]
struct PrecodeFile {
    #[serde(rename = "P")]
    p: MatrixRepr,
    #[serde(rename = "Q")]
    q: MatrixRepr,
}

/// On-disk design layout. Matrices are row-major arrays of `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct DesignFile {
    family: Family,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "R")]
    r: usize,
    #[serde(rename = "K")]
    k: usize,
    weights: Vec<MatrixRepr>,
    col_conj: Option<Vec<ColumnKind>>,
    partition: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    precode: Option<PrecodeFile>,
}

impl From<&Design> for DesignFile {
    fn from(d: &Design) -> Self {
        DesignFile {
            family: d.family,
            t: d.t,
            r: d.r,
            k: d.k,
            weights: d.weights.iter().map(to_repr).collect(),
            col_conj: d.col_conj.clone(),
            partition: d.partition.clone(),
            precode: d.precode.as_ref().map(|pc| PrecodeFile { p: to_repr(&pc.p), q: to_repr(&pc.q) }),
        }
    }
}

impl DesignFile {
    fn into_design(self) -> Result<Design> {
        let weights = self.weights.iter().map(from_repr).collect::<Result<Vec<_>>>()?;
        let precode = match &self.precode {
            Some(pc) => Some(PrecodePair { p: from_repr(&pc.p)?, q: from_repr(&pc.q)? }),
            None => None,
        };
        let mut d = Design::new(self.family, weights, self.partition, precode)?;
        if (d.t, d.r, d.k) != (self.t, self.r, self.k) {
            return Err(Error::Dimension(format!(
                "header says T={} R={} K={}, weights give T={} R={} K={}",
                self.t, self.r, self.k, d.t, d.r, d.k
            )));
        }
        // declared flags are kept verbatim; the verifier re-derives them
        d.col_conj = self.col_conj;
        Ok(d)
    }
}
