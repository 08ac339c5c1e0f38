//! Seeded Monte Carlo symbol-error simulation.
//!
//! Trial `t` at grid point `j` draws everything (codeword, channel, noise)
//! from its own stream `(seed, SIM_BASE + j, t)`. Trials are processed in
//! fixed chunks and reduced by integer addition, so results do not depend on
//! the number of worker threads.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::Design;
use crate::error::{Error, Result};
use crate::receivers::{
    ml_grouped_unchecked, ml_joint, mmse_detect, zf_detect, Codebook, Constellation, ReceiverKind, JOINT_ML_LIMIT,
};
use crate::rng::{stream_rng, SIM_BASE};
use crate::sim::{sample_channel, GnafLink, TrialMode, Variant};
use crate::verifier::check_group_decodable;

/// Environment variable capping the worker count.
pub const WORKERS_ENV: &str = "GNAF_WORKERS";

const CHUNK: u64 = 1024;

/// Inclusive SNR grid in dB, written `start:step:stop`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrGrid {
    pub start: f64,
    pub step: f64,
    pub stop: f64,
}

impl SnrGrid {
    pub fn new(start: f64, step: f64, stop: f64) -> Result<Self> {
        if !(start.is_finite() && step.is_finite() && stop.is_finite()) || step <= 0.0 || stop < start {
            return Err(Error::Config(format!("invalid SNR grid {start}:{step}:{stop}")));
        }
        Ok(SnrGrid { start, step, stop })
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl fmt::Display for SnrGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.step, self.stop)
    }
}

impl FromStr for SnrGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("SNR grid {s:?} must look like start:step:stop"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        SnrGrid::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

impl Serialize for SnrGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SnrGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub variant: Variant,
    pub receiver: ReceiverKind,
    pub constellation: Constellation,
    pub snr_db: SnrGrid,
    pub trials: u64,
    pub seed: u64,
    pub pi1: f64,
    pub pi2: f64,
    pub pi3: f64,
}

impl SimSettings {
    pub fn new(variant: Variant, receiver: ReceiverKind, constellation: Constellation, snr_db: SnrGrid) -> Self {
        SimSettings { variant, receiver, constellation, snr_db, trials: 1000, seed: 0, pi1: 1.0, pi2: 1.0, pi3: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub snr_db: f64,
    pub trials: u64,
    pub errors: u64,
    pub ser: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Grouped-ML trials whose channel broke group orthogonality.
    pub fallbacks: u64,
    /// ZF trials with a rank-deficient channel (counted as errors).
    pub erasures: u64,
}

impl SimRow {
    fn new(snr_db: f64, trials: u64, counts: Counts) -> Self {
        let n = trials as f64;
        let ser = counts.errors as f64 / n;
        let half = 1.96 * (ser * (1.0 - ser) / n).sqrt();
        SimRow {
            snr_db,
            trials,
            errors: counts.errors,
            ser,
            ci_low: (ser - half).max(0.0),
            ci_high: (ser + half).min(1.0),
            fallbacks: counts.fallbacks,
            erasures: counts.erasures,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub design: String,
    pub settings: SimSettings,
    pub rows: Vec<SimRow>,
}

impl SimResult {
    /// CSV with `# key: json` metadata lines ahead of the header row.
    pub fn to_csv(&self, metadata: &serde_json::Value) -> Result<String> {
        let mut out = String::new();
        out.push_str(&format!("# config: {}\n", serde_json::to_string(metadata)?));
        let diagnostics: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| serde_json::json!({"snr_db": r.snr_db, "fallbacks": r.fallbacks, "erasures": r.erasures}))
            .collect();
        out.push_str(&format!("# diagnostics: {}\n", serde_json::to_string(&diagnostics)?));
        out.push_str("snr_db,trials,errors,ser,ci_low,ci_high\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.snr_db, r.trials, r.errors, r.ser, r.ci_low, r.ci_high
            ));
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Counts {
    errors: u64,
    fallbacks: u64,
    erasures: u64,
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            errors: self.errors + o.errors,
            fallbacks: self.fallbacks + o.fallbacks,
            erasures: self.erasures + o.erasures,
        }
    }
}

/// Worker count from the explicit setting, else the environment, else rayon's
/// default (0).
pub fn resolve_workers(explicit: Option<usize>) -> Result<usize> {
    if let Some(n) = explicit {
        return Ok(n);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::Config(format!("{WORKERS_ENV}={v:?} is not a count"))),
        Err(_) => Ok(0),
    }
}

/// Runs `f` on a dedicated pool with `workers` threads (0 for the default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

struct Prepared {
    link: GnafLink,
    codebook: Codebook,
    /// Codebook grouped as the receiver searches it.
    search: Codebook,
    joint_feasible: bool,
}

fn prepare(design: &Design, settings: &SimSettings, rotation: Option<&crate::precoding::RMatrix>) -> Result<Prepared> {
    let link = GnafLink::new(design.clone(), settings.variant, 1.0)?;
    let params = link.params.with_fractions(settings.pi1, settings.pi2, settings.pi3)?;
    let link = link.with_params(params)?;
    let codebook = settings.constellation.codebook_with_rotation(design, true, rotation)?;
    let joint_feasible = codebook.size() <= JOINT_ML_LIMIT;
    let search = match settings.receiver {
        ReceiverKind::JointMl => {
            if !joint_feasible {
                return Err(Error::ResourceGuard {
                    what: "joint ML search",
                    needed: codebook.size(),
                    limit: JOINT_ML_LIMIT,
                });
            }
            codebook.clone()
        }
        ReceiverKind::GroupedMl => {
            let report = check_group_decodable(&design.weights, &design.partition)?;
            if !report.passed {
                return Err(Error::Verification(format!(
                    "grouped-ml needs a group-decodable partition; witness {:?}",
                    report.witness
                )));
            }
            codebook.regroup(&design.partition)?
        }
        ReceiverKind::Zf | ReceiverKind::Mmse => codebook.clone(),
    };
    Ok(Prepared { link, codebook, search, joint_feasible })
}

fn run_trial(prep: &Prepared, settings: &SimSettings, snr_index: u64, trial: u64) -> Result<Counts> {
    let mut rng = stream_rng(settings.seed, SIM_BASE + snr_index, trial);
    let truth = prep.codebook.random_indices(&mut rng);
    let x = prep.codebook.encode(&truth);
    let ch = sample_channel(prep.link.params.r, &mut rng);
    let s = prep.link.design.source_vector(&x);
    let y = prep.link.simulate_trial(&ch, &s, &mut rng, TrialMode::Compact)?;
    let white = prep.link.whitened_model(&ch)?;
    let y = white.whiten(&y);
    let model = &white.model;
    let mut counts = Counts::default();
    let decided = match settings.receiver {
        ReceiverKind::JointMl => Some(prep.search.encode(&ml_joint(&y, model, &prep.search)?)),
        ReceiverKind::GroupedMl => {
            if model.is_group_orthogonal(&prep.search.partition()) {
                Some(prep.search.encode(&ml_grouped_unchecked(&y, model, &prep.search)))
            } else {
                counts.fallbacks = 1;
                if prep.joint_feasible {
                    Some(prep.codebook.encode(&ml_joint(&y, model, &prep.codebook)?))
                } else {
                    Some(prep.search.encode(&ml_grouped_unchecked(&y, model, &prep.search)))
                }
            }
        }
        ReceiverKind::Zf => zf_detect(&y, model, &prep.search).map(|i| prep.search.encode(&i)),
        ReceiverKind::Mmse => Some(prep.search.encode(&mmse_detect(&y, model, &prep.search, 1.0))),
    };
    match decided {
        Some(xh) => counts.errors = u64::from(xh != x),
        None => {
            counts.errors = 1;
            counts.erasures = 1;
        }
    }
    Ok(counts)
}

/// Symbol-error rate per SNR point. An error is a wrongly decided codeword.
/// Must be called inside the desired thread pool (see [`with_workers`]).
pub fn run_monte_carlo(
    design: &Design,
    settings: &SimSettings,
    rotation: Option<&crate::precoding::RMatrix>,
) -> Result<SimResult> {
    let mut prep = prepare(design, settings, rotation)?;
    let mut rows = Vec::new();
    if settings.trials > 0 {
        for (j, snr) in settings.snr_db.points().into_iter().enumerate() {
            prep.link.params = prep.link.params.with_snr_db(snr)?;
            let chunks = settings.trials.div_ceil(CHUNK);
            let prep_ref = &prep;
            let counts = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut acc = Counts::default();
                    for t in c * CHUNK..((c + 1) * CHUNK).min(settings.trials) {
                        acc = acc + run_trial(prep_ref, settings, j as u64, t)?;
                    }
                    Ok::<_, Error>(acc)
                })
                .try_reduce(Counts::default, |a, b| Ok(a + b))?;
            rows.push(SimRow::new(snr, settings.trials, counts));
        }
    }
    let tag = format!("{}:T{}xR{}:K{}", design.family.as_str(), design.t, design.r, design.k);
    Ok(SimResult { design: tag, settings: settings.clone(), rows })
}

/// Least-squares slope of `log10(SER)` against `log10(SNR)` (SNR linear).
/// Points without errors are skipped; `None` when fewer than two remain.
pub fn diversity_slope(rows: &[SimRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.errors > 0)
        .map(|r| (r.snr_db / 10.0, r.ser.log10()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{build_pciod, build_toeplitz};

    fn settings(receiver: ReceiverKind, trials: u64) -> SimSettings {
        let mut s = SimSettings::new(Variant::GnafII, receiver, Constellation::lattice(2), "0:10:20".parse().unwrap());
        s.trials = trials;
        s.seed = 7;
        s
    }

    #[test]
    fn snr_grid_parsing() {
        let g: SnrGrid = "0:5:30".parse().unwrap();
        assert_eq!(g.points(), vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        assert_eq!(g.to_string(), "0:5:30");
        assert!("0:0:3".parse::<SnrGrid>().is_err());
        assert!("3:1:0".parse::<SnrGrid>().is_err());
        assert!("1:2".parse::<SnrGrid>().is_err());
        assert_eq!("0:0.1:0.3".parse::<SnrGrid>().unwrap().points().len(), 4);
    }

    #[test]
    fn zero_trials_give_empty_table() {
        let r = run_monte_carlo(&build_pciod(2).unwrap(), &settings(ReceiverKind::JointMl, 0), None).unwrap();
        assert!(r.rows.is_empty());
    }

    #[test]
    fn deterministic_across_workers() {
        let d = build_pciod(2).unwrap();
        let s = settings(ReceiverKind::GroupedMl, 3000);
        let one = with_workers(1, || run_monte_carlo(&d, &s, None)).unwrap().unwrap();
        let four = with_workers(4, || run_monte_carlo(&d, &s, None)).unwrap().unwrap();
        assert_eq!(one, four);
        let meta = serde_json::json!({"seed": 7});
        assert_eq!(one.to_csv(&meta).unwrap(), four.to_csv(&meta).unwrap());
    }

    #[test]
    fn ser_decreases_with_snr() {
        let d = build_pciod(2).unwrap();
        let mut s = settings(ReceiverKind::GroupedMl, 20_000);
        s.snr_db = "0:10:30".parse().unwrap();
        let r = run_monte_carlo(&d, &s, None).unwrap();
        for w in r.rows.windows(2) {
            assert!(w[1].ser <= w[0].ser || w[1].ci_low <= w[0].ci_high, "{:?}", r.rows);
        }
        assert!(r.rows[0].ser > r.rows[3].ser);
        assert!(r.rows.iter().all(|row| row.fallbacks == 0));
    }

    #[test]
    fn grouped_ml_refused_without_decodable_partition() {
        let d = build_toeplitz(2, 2).unwrap().with_partition(vec![vec![0, 1], vec![2, 3]]).unwrap();
        let mut s = settings(ReceiverKind::GroupedMl, 10);
        s.constellation = Constellation::qam(4);
        assert!(matches!(run_monte_carlo(&d, &s, None), Err(Error::Verification(_))));
    }

    #[test]
    fn csv_layout() {
        let d = build_toeplitz(2, 2).unwrap();
        let mut s = settings(ReceiverKind::Zf, 100);
        s.constellation = Constellation::qam(4);
        let r = run_monte_carlo(&d, &s, None).unwrap();
        let csv = r.to_csv(&serde_json::json!({"k": 1})).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# config: "));
        assert_eq!(lines[2], "snr_db,trials,errors,ser,ci_low,ci_high");
        assert_eq!(lines.len(), 3 + 3);
        for row in &r.rows {
            assert_eq!(row.ser, row.errors as f64 / row.trials as f64);
            assert!(row.ci_low <= row.ser && row.ser <= row.ci_high);
        }
    }

    #[test]
    fn slope_fit() {
        let row = |snr_db: f64, ser: f64| SimRow {
            snr_db,
            trials: 1,
            errors: 1,
            ser,
            ci_low: 0.0,
            ci_high: 1.0,
            fallbacks: 0,
            erasures: 0,
        };
        let rows = vec![row(10.0, 1e-1), row(20.0, 1e-3), row(30.0, 1e-5)];
        assert!((diversity_slope(&rows).unwrap() + 2.0).abs() < 1e-12);
        assert!(diversity_slope(&rows[..1]).is_none());
    }
}
