//! Algebraic certification of designs.
//!
//! Failing verdicts always carry a witness. Every tolerance goes through
//! [`is_zero`], scaled by the magnitudes involved in the quantity tested.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::{ColumnForm, Design, RelayMatrixSet, VariableLevel};
use crate::error::{Error, Result};
use crate::matkernel::{c, det, hermitian_eigen, inv_sqrt_pd, is_zero, max_abs, off_diagonal_max, CMatrix};
use crate::receivers::{Codebook, Constellation};
use crate::rng::{stream_rng, STREAM_VERIFY};
use crate::sim::{sample_channel, ProtocolParams};

/// Exhaustive difference enumeration refuses beyond this many vectors.
pub const DIFFERENCE_LIMIT: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Column { column: usize },
    RelayRows { relay: usize, row_a: usize, row_b: usize },
    SymbolPair { i: usize, j: usize },
    ChannelDraw { draw: u64, seed: u64, i: usize, j: usize },
    Difference { delta: Vec<f64> },
    QamSize { size: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub check: String,
    pub passed: bool,
    /// Largest violation found; the quantity that must vanish for a pass.
    pub margin: f64,
    pub witness: Option<Witness>,
    pub notes: Vec<String>,
}

impl VerifierReport {
    fn new(check: &str, passed: bool, margin: f64, witness: Option<Witness>) -> Self {
        VerifierReport { check: check.into(), passed, margin, witness, notes: Vec::new() }
    }

    fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }
}

/// Every column uses only the level variables or only their conjugates.
pub fn check_condition1(d: &Design, level: VariableLevel) -> VerifierReport {
    let mut margin: f64 = 0.0;
    for col in 0..d.r {
        match d.column_form(col, level) {
            Ok(ColumnForm::Plain(_)) | Ok(ColumnForm::Conjugated(_)) => {}
            Ok(ColumnForm::Mixed { plain_residual, conj_residual }) => {
                margin = margin.max(plain_residual.min(conj_residual));
                return VerifierReport::new("condition1", false, margin, Some(Witness::Column { column: col }));
            }
            Err(e) => {
                return VerifierReport::new("condition1", false, f64::INFINITY, Some(Witness::Column { column: col }))
                    .note(e.to_string());
            }
        }
    }
    let level_name = match level {
        VariableLevel::Raw => "raw symbols",
        VariableLevel::Declared => "declared variables",
    };
    VerifierReport::new("condition1", true, margin, None).note(format!("checked against {level_name}"))
}

/// Every relay matrix has mutually orthogonal rows.
pub fn check_condition2(rs: &RelayMatrixSet) -> VerifierReport {
    let mut margin: f64 = 0.0;
    for (i, relay) in rs.relays.iter().enumerate() {
        let gram = &relay.matrix * relay.matrix.adjoint();
        let off = off_diagonal_max(&gram);
        margin = margin.max(off);
        if !is_zero(off, max_abs(&gram)) {
            let n = gram.nrows();
            let (a, b) = (0..n)
                .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
                .max_by(|&(a, b), &(x, y)| gram[(a, b)].norm().total_cmp(&gram[(x, y)].norm()))
                .unwrap_or((0, 0));
            let (row_a, row_b) = (a.min(b), a.max(b));
            return VerifierReport::new("condition2", false, off, Some(Witness::RelayRows { relay: i, row_a, row_b }));
        }
    }
    VerifierReport::new("condition2", true, margin, None)
}

fn group_labels(partition: &[Vec<usize>], k: usize) -> Result<Vec<usize>> {
    crate::designs::validate_partition(partition, k)?;
    let mut label = vec![0; k];
    for (g, members) in partition.iter().enumerate() {
        for &i in members {
            label[i] = g;
        }
    }
    Ok(label)
}

/// Largest `|A_i^H A_j + A_j^H A_i|` over cross-group pairs, with the first
/// pair that fails the zero test.
fn cross_group_violation(weights: &[CMatrix], label: &[usize]) -> (f64, Option<(usize, usize)>) {
    let scale = weights.iter().map(|w| max_abs(w).powi(2) * w.nrows() as f64).fold(0.0, f64::max);
    let mut margin: f64 = 0.0;
    let mut first = None;
    for i in 0..weights.len() {
        for j in i + 1..weights.len() {
            if label[i] == label[j] {
                continue;
            }
            let m = weights[i].adjoint() * &weights[j] + weights[j].adjoint() * &weights[i];
            let v = max_abs(&m);
            margin = margin.max(v);
            if first.is_none() && !is_zero(v, scale) {
                first = Some((i, j));
            }
        }
    }
    (margin, first)
}

/// Cross-group weight matrices satisfy `A_i^H A_j + A_j^H A_i = 0`.
pub fn check_group_decodable(weights: &[CMatrix], partition: &[Vec<usize>]) -> Result<VerifierReport> {
    let label = group_labels(partition, weights.len())?;
    let (margin, first) = cross_group_violation(weights, &label);
    let report = match first {
        None => VerifierReport::new("group", true, margin, None),
        Some((i, j)) => VerifierReport::new("group", false, margin, Some(Witness::SymbolPair { i, j })),
    };
    Ok(report.note(format!("{} groups", partition.len())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaMatrix {
    pub matrix: CMatrix,
    pub prefactor: f64,
}

/// `Gamma = [pi3 P / (pi1 P + 1)] sum_i |g_i|^2 M_i M_i^H`.
pub fn compute_gamma(rs: &RelayMatrixSet, g: &[Complex64], params: &ProtocolParams) -> Result<GammaMatrix> {
    if g.len() != rs.relays.len() {
        return Err(Error::Dimension(format!("{} gains for {} relays", g.len(), rs.relays.len())));
    }
    let prefactor = params.gamma_prefactor();
    let mut sum = CMatrix::zeros(rs.t2, rs.t2);
    for (relay, gi) in rs.relays.iter().zip(g) {
        sum += (&relay.matrix * relay.matrix.adjoint()) * c(gi.norm_sqr(), 0.0);
    }
    Ok(GammaMatrix { matrix: sum * c(prefactor, 0.0), prefactor })
}

/// Settings for the whitened check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WhitenedCheck {
    pub draws: u64,
    pub seed: u64,
    /// Draws whose `Gamma` has condition number above this are resampled.
    pub max_condition: f64,
}

impl WhitenedCheck {
    pub fn new(draws: u64, seed: u64) -> Self {
        WhitenedCheck { draws, seed, max_condition: 1e8 }
    }
}

/// The relay-part weights `Gamma^{-1/2} W_k` satisfy the group condition for
/// every accepted channel draw.
pub fn check_whitened_group_decodable(
    d: &Design,
    rs: &RelayMatrixSet,
    partition: &[Vec<usize>],
    params: &ProtocolParams,
    settings: WhitenedCheck,
) -> Result<VerifierReport> {
    if settings.draws == 0 {
        return Err(Error::InvalidArgument("the whitened check needs at least one draw".into()));
    }
    let label = group_labels(partition, d.k)?;
    let max_attempts = settings.draws.saturating_mul(100);
    let mut accepted = 0u64;
    let mut resampled = 0u64;
    let mut margin: f64 = 0.0;
    let mut attempt = 0u64;
    while accepted < settings.draws {
        if attempt >= max_attempts {
            return Err(Error::Verification(format!(
                "Gamma was near-singular on {resampled} of {attempt} draws"
            )));
        }
        let mut rng = stream_rng(settings.seed, STREAM_VERIFY, attempt);
        attempt += 1;
        let ch = sample_channel(rs.relays.len(), &mut rng);
        let gamma = compute_gamma(rs, &ch.g, params)?;
        let (eig, _) = hermitian_eigen(&gamma.matrix)?;
        let (lo, hi) = (eig[0], eig[eig.len() - 1]);
        if lo <= 0.0 || hi / lo > settings.max_condition {
            resampled += 1;
            continue;
        }
        let x = inv_sqrt_pd(&gamma.matrix)?;
        let weights: Vec<CMatrix> = d.weights.iter().map(|w| &x * w).collect();
        let (m, first) = cross_group_violation(&weights, &label);
        margin = margin.max(m);
        if let Some((i, j)) = first {
            return Ok(VerifierReport::new(
                "whitened",
                false,
                margin,
                Some(Witness::ChannelDraw { draw: attempt - 1, seed: settings.seed, i, j }),
            )
            .note(format!("{resampled} near-singular draws resampled")));
        }
        accepted += 1;
    }
    Ok(VerifierReport::new("whitened", true, margin, None)
        .note(format!("{accepted} draws, seed {}", settings.seed))
        .note(format!("{resampled} near-singular draws resampled")))
}

/// Outcome of an exhaustive determinant search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetSearch {
    /// Smallest `|det(dS^H dS)|`; infinite for a one-point codebook.
    pub min: f64,
    /// Difference vector achieving the minimum.
    pub witness: Option<Vec<f64>>,
    /// True when the minimum fails the zero test against its Hadamard bound.
    pub zero: bool,
    pub evaluated: u64,
}

/// Distinct differences `p - p'` within one sub-codebook, zero first.
fn difference_set(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.first().map_or(0, Vec::len);
    let mut diffs: Vec<Vec<f64>> = Vec::with_capacity(points.len() * points.len());
    for a in points {
        for b in points {
            diffs.push(a.iter().zip(b).map(|(x, y)| x - y).collect());
        }
    }
    diffs.sort_by(|a, b| {
        a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    diffs.dedup();
    let zero = vec![0.0; n];
    let mut out = vec![zero.clone()];
    out.extend(diffs.into_iter().filter(|d| d.iter().any(|v| *v != 0.0)));
    out
}

fn gram_det(d: &Design, delta: &[f64]) -> (f64, f64) {
    let ds = d.codeword(delta);
    let gram = ds.adjoint() * &ds;
    let value = det(&gram).map(|z| z.norm()).unwrap_or(f64::INFINITY);
    let hadamard: f64 = gram.diagonal().iter().map(|z| z.re.abs()).product();
    (value, hadamard)
}

/// Minimum of `|det(dS^H dS)|` over all distinct codeword pairs, enumerated as
/// the product of per-group difference sets. Deterministic: ties resolve to
/// the earliest difference in enumeration order.
pub fn min_delta_det(d: &Design, codebook: &Codebook) -> Result<DetSearch> {
    if codebook.k != d.k {
        return Err(Error::Dimension("codebook and design disagree on K".into()));
    }
    if codebook.size() < 2 {
        return Ok(DetSearch { min: f64::INFINITY, witness: None, zero: false, evaluated: 0 });
    }
    let sets: Vec<Vec<Vec<f64>>> = codebook.groups.iter().map(|g| difference_set(&g.points)).collect();
    let total: u128 = sets.iter().map(|s| s.len() as u128).product();
    if total > DIFFERENCE_LIMIT {
        return Err(Error::ResourceGuard { what: "difference enumeration", needed: total, limit: DIFFERENCE_LIMIT });
    }
    let total = total as u64;
    let delta_of = |mut idx: u64| {
        let mut delta = vec![0.0; d.k];
        for (g, set) in codebook.groups.iter().zip(&sets) {
            let n = set.len() as u64;
            let pick = &set[(idx % n) as usize];
            idx /= n;
            for (&pos, &v) in g.positions.iter().zip(pick) {
                delta[pos] = v;
            }
        }
        delta
    };
    const CHUNK: u64 = 4096;
    let chunks = total.div_ceil(CHUNK);
    // index 0 is the all-zero difference and is skipped
    let best = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut best: Option<(f64, f64, u64)> = None;
            for idx in (chunk * CHUNK).max(1)..((chunk + 1) * CHUNK).min(total) {
                let (value, hadamard) = gram_det(d, &delta_of(idx));
                if best.is_none_or(|(v, _, _)| value < v) {
                    best = Some((value, hadamard, idx));
                }
            }
            best
        })
        .reduce(
            || None,
            |a, b| match (a, b) {
                (Some(x), Some(y)) => Some(if y.0 < x.0 || (y.0 == x.0 && y.2 < x.2) { y } else { x }),
                (x, None) => x,
                (None, y) => y,
            },
        );
    let (min, hadamard, idx) = best.expect("at least one nonzero difference");
    Ok(DetSearch {
        min,
        witness: Some(delta_of(idx)),
        zero: is_zero(min, hadamard),
        evaluated: total - 1,
    })
}

pub fn full_diversity_report(d: &Design, codebook: &Codebook) -> Result<VerifierReport> {
    let search = min_delta_det(d, codebook)?;
    let passed = !search.zero;
    let witness = if passed { None } else { search.witness.clone().map(|delta| Witness::Difference { delta }) };
    Ok(VerifierReport::new("fulldiv", passed, search.min, witness)
        .note(format!("{} difference vectors", search.evaluated)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NvdEntry {
    pub size: usize,
    pub min_det: f64,
    pub zero: bool,
}

/// Minimum determinant per QAM size, unnormalized integer levels.
pub fn nvd_probe(d: &Design, qam_sizes: &[usize]) -> Result<Vec<NvdEntry>> {
    qam_sizes
        .iter()
        .map(|&size| {
            let cb = Constellation::qam(size).codebook(d, false)?;
            let s = min_delta_det(d, &cb)?;
            Ok(NvdEntry { size, min_det: s.min, zero: s.zero })
        })
        .collect()
}

/// Passes when no entry vanishes and the minimum across sizes stays within
/// `1e-6` (relative) of the value at the first size.
pub fn nvd_report(d: &Design, qam_sizes: &[usize]) -> Result<VerifierReport> {
    let entries = nvd_probe(d, qam_sizes)?;
    let Some(first) = entries.first() else {
        return Err(Error::InvalidArgument("no QAM sizes given".into()));
    };
    let lowest = entries.iter().map(|e| e.min_det).fold(f64::INFINITY, f64::min);
    let ratio = if first.min_det > 0.0 { lowest / first.min_det } else { 0.0 };
    let vanishing = entries.iter().find(|e| e.zero);
    let passed = vanishing.is_none() && ratio >= 1.0 - 1e-6;
    let witness = if passed {
        None
    } else {
        let worst = vanishing.unwrap_or_else(|| {
            entries.iter().min_by(|a, b| a.min_det.total_cmp(&b.min_det)).expect("non-empty")
        });
        Some(Witness::QamSize { size: worst.size })
    };
    let mut report = VerifierReport::new("nvd", passed, ratio, witness);
    for e in &entries {
        report = report.note(format!("qam{}: min det {:e}", e.size, e.min_det));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{
        build_ciod4, build_golden, build_pciod, build_pciod_any, build_toeplitz, relay_matrix_set, Family, RelayMatrix,
    };
    use crate::matkernel::{approx_eq, c, is_hermitian, min_eigenvalue};
    use crate::precoding::partition_mod4;
    use crate::receivers::SubCodebook;
    use crate::rng::complex_normal;
    use crate::sim::Variant;

    fn alamouti() -> Design {
        // [[x0 + i x1, -(x2 - i x3)], [x2 + i x3, x0 - i x1]]
        let mut w = vec![CMatrix::zeros(2, 2); 4];
        w[0][(0, 0)] = c(1.0, 0.0);
        w[0][(1, 1)] = c(1.0, 0.0);
        w[1][(0, 0)] = c(0.0, 1.0);
        w[1][(1, 1)] = c(0.0, -1.0);
        w[2][(0, 1)] = c(-1.0, 0.0);
        w[2][(1, 0)] = c(1.0, 0.0);
        w[3][(0, 1)] = c(0.0, 1.0);
        w[3][(1, 0)] = c(0.0, 1.0);
        Design::new(Family::Custom, w, vec![(0..4).collect()], None).unwrap()
    }

    #[test]
    fn condition1_cases() {
        assert!(check_condition1(&alamouti(), VariableLevel::Declared).passed);
        let (ciod, _) = build_ciod4().unwrap();
        assert!(check_condition1(&ciod, VariableLevel::Declared).passed);
        let raw = check_condition1(&ciod, VariableLevel::Raw);
        assert!(!raw.passed);
        assert!(matches!(raw.witness, Some(Witness::Column { .. })));

        // column 0 = [u0; conj(u1)]
        let mut w = vec![CMatrix::zeros(2, 1); 4];
        w[0][(0, 0)] = c(1.0, 0.0);
        w[1][(0, 0)] = c(0.0, 1.0);
        w[2][(1, 0)] = c(1.0, 0.0);
        w[3][(1, 0)] = c(0.0, -1.0);
        let mixed = Design::new(Family::Custom, w, vec![(0..4).collect()], None).unwrap();
        let report = check_condition1(&mixed, VariableLevel::Declared);
        assert!(!report.passed);
        assert_eq!(report.witness, Some(Witness::Column { column: 0 }));
    }

    #[test]
    fn constructors_satisfy_clro() {
        for r in [2, 3, 4, 6] {
            for d in [build_pciod_any(r).unwrap(), build_toeplitz(2, r).unwrap()] {
                assert!(check_condition1(&d, VariableLevel::Declared).passed);
                assert!(check_condition2(&relay_matrix_set(&d).unwrap()).passed);
            }
        }
        let golden = build_golden().unwrap();
        assert!(check_condition1(&golden, VariableLevel::Declared).passed);
        assert!(check_condition2(&relay_matrix_set(&golden).unwrap()).passed);
    }

    #[test]
    fn condition2_rejects_repeated_rows() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let rs = RelayMatrixSet { t1: 2, t2: 2, relays: vec![RelayMatrix { matrix: m, conjugated: false }] };
        let report = check_condition2(&rs);
        assert!(!report.passed);
        assert_eq!(report.witness, Some(Witness::RelayRows { relay: 0, row_a: 0, row_b: 1 }));
    }

    #[test]
    fn group_decodability_cases() {
        for r in [2, 4, 6] {
            let d = build_pciod(r).unwrap();
            let report = check_group_decodable(&d.weights, &partition_mod4(d.k).unwrap().groups).unwrap();
            assert!(report.passed && report.margin < 1e-12);
        }
        let d = build_toeplitz(2, 2).unwrap();
        assert!(check_group_decodable(&d.weights, &[(0..4).collect()]).unwrap().passed);
        let a = CMatrix::identity(2, 2);
        let report = check_group_decodable(&[a.clone(), a], &[vec![0], vec![1]]).unwrap();
        assert!(!report.passed);
        assert_eq!(report.witness, Some(Witness::SymbolPair { i: 0, j: 1 }));
        assert!(check_group_decodable(&d.weights, &[vec![0, 1]]).is_err());
    }

    fn params(rs: &RelayMatrixSet, p: f64) -> ProtocolParams {
        ProtocolParams::new(rs, Variant::GnafII, p).unwrap()
    }

    #[test]
    fn gamma_matches_term_by_term_sum() {
        let d = build_toeplitz(3, 3).unwrap();
        let rs = relay_matrix_set(&d).unwrap();
        let p = params(&rs, 12.0).with_fractions(0.6, 0.2, 0.9).unwrap();
        let mut rng = stream_rng(1, 0, 0);
        for _ in 0..50 {
            let g: Vec<Complex64> = (0..3).map(|_| complex_normal(&mut rng)).collect();
            let gamma = compute_gamma(&rs, &g, &p).unwrap();
            let pref = 0.9 * 12.0 / (0.6 * 12.0 + 1.0);
            let n = rs.t2;
            let mut want = CMatrix::zeros(n, n);
            for (relay, gi) in rs.relays.iter().zip(&g) {
                for a in 0..n {
                    for b in 0..n {
                        let mut acc = c(0.0, 0.0);
                        for t in 0..rs.t1 {
                            acc += relay.matrix[(a, t)] * relay.matrix[(b, t)].conj();
                        }
                        want[(a, b)] += acc * gi.norm_sqr() * pref;
                    }
                }
            }
            assert!(approx_eq(&gamma.matrix, &want, 1e-12));
            assert!(is_hermitian(&gamma.matrix));
            assert!(min_eigenvalue(&gamma.matrix).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn gamma_unitary_unit_gains() {
        let d = build_pciod(4).unwrap();
        let rs = relay_matrix_set(&d).unwrap();
        let p = params(&rs, 3.0);
        let gains = vec![c(1.0, 0.0); 4];
        let gamma = compute_gamma(&rs, &gains, &p).unwrap();
        // each PCIOD relay matrix is a 2-row partial permutation, so the sum
        // over the 4 relays gives 2 I rather than R I
        let want = CMatrix::identity(4, 4) * c(p.gamma_prefactor() * 2.0, 0.0);
        assert!(approx_eq(&gamma.matrix, &want, 1e-12));

        let unitary = RelayMatrixSet {
            t1: 2,
            t2: 2,
            relays: (0..3).map(|_| RelayMatrix { matrix: CMatrix::identity(2, 2), conjugated: false }).collect(),
        };
        let gamma = compute_gamma(&unitary, &gains[..3], &p).unwrap();
        let want = CMatrix::identity(2, 2) * c(p.gamma_prefactor() * 3.0, 0.0);
        assert!(approx_eq(&gamma.matrix, &want, 1e-12));
    }

    #[test]
    fn whitened_check_pciod_and_golden() {
        for r in [2, 4, 6] {
            let d = build_pciod(r).unwrap();
            let rs = relay_matrix_set(&d).unwrap();
            let p = params(&rs, 10.0);
            let report =
                check_whitened_group_decodable(&d, &rs, &d.partition, &p, WhitenedCheck::new(50, 3)).unwrap();
            assert!(report.passed, "{report:?}");
        }
        let golden = build_golden().unwrap();
        let rs = relay_matrix_set(&golden).unwrap();
        let p = params(&rs, 10.0);
        let four: Vec<Vec<usize>> = (0..4).map(|g| vec![2 * g, 2 * g + 1]).collect();
        let report = check_whitened_group_decodable(&golden, &rs, &four, &p, WhitenedCheck::new(20, 3)).unwrap();
        assert!(!report.passed);
        assert!(matches!(report.witness, Some(Witness::ChannelDraw { .. })));
    }

    #[test]
    fn min_delta_det_matches_pair_enumeration() {
        for d in [build_pciod(2).unwrap(), build_toeplitz(2, 2).unwrap(), build_golden().unwrap()] {
            let cb = Constellation::qam(4).codebook(&d, false).unwrap();
            let got = min_delta_det(&d, &cb).unwrap();
            let mut oracle = f64::INFINITY;
            let n = cb.size();
            for a in 0..n {
                for b in a + 1..n {
                    let xa = cb.encode(&cb.split_index(a));
                    let xb = cb.encode(&cb.split_index(b));
                    let ds = d.codeword(&xa) - d.codeword(&xb);
                    oracle = oracle.min(det(&(ds.adjoint() * &ds)).unwrap().norm());
                }
            }
            assert!((got.min - oracle).abs() <= 1e-9 * (1.0 + oracle), "{:?}: {} vs {oracle}", d.family, got.min);
        }
    }

    #[test]
    fn unprecoded_pciod4_is_not_fully_diverse() {
        let d = build_pciod(4).unwrap();
        let cb = Constellation::pam(2).codebook(&d, false).unwrap();
        let s = min_delta_det(&d, &cb).unwrap();
        assert!(s.zero && s.min == 0.0);
        let delta = s.witness.unwrap();
        let first = delta[..4].iter().any(|v| *v != 0.0);
        let second = delta[4..].iter().any(|v| *v != 0.0);
        assert!(first != second, "witness should live on one block: {delta:?}");
    }

    #[test]
    fn precoded_pciod_is_fully_diverse() {
        for r in [2, 4] {
            let d = build_pciod(r).unwrap();
            let cb = Constellation::lattice(2).codebook(&d, false).unwrap();
            let s = min_delta_det(&d, &cb).unwrap();
            assert!(!s.zero && s.min > 0.0, "R={r}: {s:?}");
        }
    }

    #[test]
    fn min_delta_det_edge_cases() {
        let d = build_pciod(2).unwrap();
        let single = Codebook::new(
            4,
            vec![SubCodebook { positions: (0..4).collect(), points: vec![vec![1.0; 4]], lattice: None }],
        )
        .unwrap();
        assert_eq!(min_delta_det(&d, &single).unwrap().min, f64::INFINITY);

        // translation and reordering leave the result unchanged
        let cb = Constellation::qam(4).codebook(&d, false).unwrap().merged().unwrap();
        let base = min_delta_det(&d, &cb).unwrap().min;
        let mut shifted = cb.clone();
        for p in &mut shifted.groups[0].points {
            p.iter_mut().for_each(|v| *v += 0.5);
        }
        shifted.groups[0].points.reverse();
        assert_eq!(min_delta_det(&d, &shifted).unwrap().min, base);
    }

    #[test]
    fn nvd_golden_and_pciod() {
        let golden = build_golden().unwrap();
        let entries = nvd_probe(&golden, &[4]).unwrap();
        let cb = Constellation::qam(4).codebook(&golden, false).unwrap();
        assert_eq!(entries[0].min_det, min_delta_det(&golden, &cb).unwrap().min);
        assert!((entries[0].min_det - 3.2).abs() < 1e-9);

        let pciod = build_pciod(4).unwrap();
        let report = nvd_report(&pciod, &[4]).unwrap();
        assert!(!report.passed);
        assert_eq!(report.witness, Some(Witness::QamSize { size: 4 }));
    }

    #[test]
    fn guard_refuses_huge_enumerations() {
        let d = build_pciod(6).unwrap();
        let cb = Constellation::qam(16).codebook(&d, false).unwrap();
        assert!(matches!(min_delta_det(&d, &cb), Err(Error::ResourceGuard { .. })));
    }
}
