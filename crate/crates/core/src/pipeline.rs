//! Run configuration and the verify, simulate, bundle pipeline.
//!
//! Configs are TOML. Relative paths inside a config resolve against the
//! config file's directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::designs::{
    build_cda, build_ciod4, build_golden, build_pciod, build_pciod_rect, build_toeplitz, relay_matrix_set, CdaParams,
    Design, VariableLevel,
};
use crate::error::{Error, Result};
use crate::matkernel::c;
use crate::montecarlo::{run_monte_carlo, with_workers, SimResult, SimSettings, SnrGrid};
use crate::precoding::{parse_rotation, rotation_provenance, RMatrix};
use crate::receivers::{Constellation, ConstellationKind, ReceiverKind};
use crate::sim::{ProtocolParams, Variant};
use crate::verifier::{
    check_condition1, check_condition2, check_group_decodable, check_whitened_group_decodable, full_diversity_report,
    nvd_report, VerifierReport, WhitenedCheck,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Clro,
    Group,
    Whitened,
    Fulldiv,
    Nvd,
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "clro" => Ok(Check::Clro),
            "group" => Ok(Check::Group),
            "whitened" => Ok(Check::Whitened),
            "fulldiv" => Ok(Check::Fulldiv),
            "nvd" => Ok(Check::Nvd),
            other => Err(Error::Config(format!("unknown check {other:?} (clro|group|whitened|fulldiv|nvd)"))),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Check::Clro => "clro",
            Check::Group => "group",
            Check::Whitened => "whitened",
            Check::Fulldiv => "fulldiv",
            Check::Nvd => "nvd",
        };
        f.write_str(s)
    }
}

pub fn parse_checks(list: &str) -> Result<Vec<Check>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// Where a design comes from: a built-in family or a design file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relays: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Parameter file for the `cda` family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
}

/// On-disk CDA parameters; complex numbers are `[re, im]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CdaParamsFile {
    pub delta: [f64; 2],
    pub theta: f64,
    pub sigma_table: Vec<Vec<[f64; 2]>>,
}

impl From<&CdaParamsFile> for CdaParams {
    fn from(f: &CdaParamsFile) -> Self {
        CdaParams {
            delta: c(f.delta[0], f.delta[1]),
            theta: f.theta,
            sigma_table: f.sigma_table.iter().map(|row| row.iter().map(|z| c(z[0], z[1])).collect()).collect(),
        }
    }
}

fn need<T: Copy>(v: Option<T>, what: &str, family: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("family {family} needs {what}")))
}

/// Builds a named family. `pciod` rejects odd relay counts and points to
/// `pciod-rect`.
pub fn build_family(family: &str, relays: Option<usize>, t1: Option<usize>, params: Option<&CdaParams>) -> Result<Design> {
    match family {
        "pciod" => {
            let r = need(relays, "relays", family)?;
            if r % 2 == 1 {
                return Err(Error::Config(format!(
                    "pciod needs an even relay count, got {r}; use family pciod-rect for odd R"
                )));
            }
            build_pciod(r)
        }
        "pciod-rect" => build_pciod_rect(need(relays, "relays", family)?),
        "ciod4" => Ok(build_ciod4()?.0),
        "toeplitz" => build_toeplitz(need(t1, "t1", family)?, need(relays, "relays", family)?),
        "golden" => build_golden(),
        "cda" => {
            let p = params.ok_or_else(|| Error::Config("family cda needs a parameter file".into()))?;
            build_cda(p.sigma_table.len(), p)
        }
        other => Err(Error::Config(format!(
            "unknown family {other:?} (pciod|pciod-rect|ciod4|toeplitz|golden|cda)"
        ))),
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl DesignSpec {
    pub fn build(&self, base: &Path) -> Result<Design> {
        match (&self.path, &self.family) {
            (Some(path), None) => Design::from_json(&fs::read_to_string(resolve(base, path))?),
            (None, Some(family)) => {
                let params = match &self.params {
                    Some(p) => {
                        let file: CdaParamsFile = serde_json::from_str(&fs::read_to_string(resolve(base, p))?)?;
                        Some(CdaParams::from(&file))
                    }
                    None => None,
                };
                build_family(family, self.relays, self.t1, params.as_ref())
            }
            _ => Err(Error::Config("design needs exactly one of `family` or `path`".into())),
        }
    }
}

fn default_pi() -> f64 {
    1.0
}

fn default_draws() -> u64 {
    50
}

fn default_nvd_sizes() -> Vec<usize> {
    vec![4, 16]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub design: DesignSpec,
    pub variant: Variant,
    pub receiver: ReceiverKind,
    pub constellation: Constellation,
    pub snr_db: SnrGrid,
    pub trials: u64,
    pub seed: u64,
    #[serde(default = "default_pi")]
    pub pi1: f64,
    #[serde(default = "default_pi")]
    pub pi2: f64,
    #[serde(default = "default_pi")]
    pub pi3: f64,
    #[serde(default)]
    pub checks: Vec<Check>,
    /// Channel draws for the whitened check.
    #[serde(default = "default_draws")]
    pub draws: u64,
    #[serde(default = "default_nvd_sizes")]
    pub nvd_sizes: Vec<usize>,
    /// Rotation file replacing the built-in lattice rotation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        for (name, v) in [("pi1", cfg.pi1), ("pi2", cfg.pi2), ("pi3", cfg.pi3)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_toml(&text)?, base))
    }

    pub fn settings(&self) -> SimSettings {
        SimSettings {
            variant: self.variant,
            receiver: self.receiver,
            constellation: self.constellation,
            snr_db: self.snr_db,
            trials: self.trials,
            seed: self.seed,
            pi1: self.pi1,
            pi2: self.pi2,
            pi3: self.pi3,
        }
    }

    pub fn load_rotation(&self, base: &Path) -> Result<Option<RMatrix>> {
        self.rotation.as_ref().map(|p| parse_rotation(&fs::read_to_string(resolve(base, p))?)).transpose()
    }
}


/// Inputs for [`run_checks`].
#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub constellation: Constellation,
    pub draws: u64,
    pub seed: u64,
    pub variant: Variant,
    /// Linear power used for `Gamma` in the whitened check.
    pub p: f64,
    pub pi: (f64, f64, f64),
    pub nvd_sizes: Vec<usize>,
    pub rotation: Option<RMatrix>,
}

pub fn run_checks(d: &Design, checks: &[Check], opts: &CheckOptions) -> Result<Vec<VerifierReport>> {
    let mut reports = Vec::new();
    for check in checks {
        match check {
            Check::Clro => {
                reports.push(check_condition1(d, VariableLevel::Declared));
                if let Ok(rs) = relay_matrix_set(d) {
                    reports.push(check_condition2(&rs));
                }
            }
            Check::Group => reports.push(check_group_decodable(&d.weights, &d.partition)?),
            Check::Whitened => {
                let rs = relay_matrix_set(d)?;
                let params = ProtocolParams::new(&rs, opts.variant, opts.p)?.with_fractions(
                    opts.pi.0,
                    opts.pi.1,
                    opts.pi.2,
                )?;
                let settings = WhitenedCheck::new(opts.draws, opts.seed);
                reports.push(check_whitened_group_decodable(d, &rs, &d.partition, &params, settings)?);
            }
            Check::Fulldiv => {
                let cb = opts.constellation.codebook_with_rotation(d, false, opts.rotation.as_ref())?;
                reports.push(full_diversity_report(d, &cb)?);
            }
            Check::Nvd => reports.push(nvd_report(d, &opts.nvd_sizes)?),
        }
    }
    Ok(reports)
}

/// Self-describing metadata embedded in every pipeline artifact.
pub fn metadata(cfg: &RunConfig, d: &Design) -> serde_json::Value {
    let dims: Vec<usize> = match cfg.constellation.kind {
        ConstellationKind::Lattice => {
            let mut v: Vec<usize> = d.partition.iter().map(Vec::len).collect();
            v.sort_unstable();
            v.dedup();
            v
        }
        _ => Vec::new(),
    };
    let rotations: Vec<serde_json::Value> = dims
        .iter()
        .map(|&n| {
            let source = if cfg.rotation.is_some() { "user supplied" } else { rotation_provenance(n) };
            serde_json::json!({"dim": n, "source": source})
        })
        .collect();
    serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "design": {"family": d.family.as_str(), "T": d.t, "R": d.r, "K": d.k, "partition": d.partition},
        "rotations": rotations,
        "alphabet": "PAM levels scaled to unit energy per real coordinate",
        "snr": "SNR = P (linear total power, unit noise variances), reported as 10 log10 P",
        "power_split": {"pi1": cfg.pi1, "pi2": cfg.pi2, "pi3": cfg.pi3},
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutcome {
    pub reports: Vec<VerifierReport>,
    pub result: Option<SimResult>,
    pub csv_path: Option<PathBuf>,
    pub report_path: PathBuf,
}

impl PipelineOutcome {
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }
}

/// Verifies, simulates and writes `report.json` and `results.csv` into
/// `out_dir`. A failed check stops before simulating unless `force` is set;
/// the caller decides the exit status from [`PipelineOutcome::all_passed`].
pub fn run_pipeline(cfg: &RunConfig, base: &Path, out_dir: &Path, force: bool, workers: usize) -> Result<PipelineOutcome> {
    let design = cfg.design.build(base)?;
    let rotation = cfg.load_rotation(base)?;
    let first_snr = cfg.snr_db.points()[0];
    let opts = CheckOptions {
        constellation: cfg.constellation,
        draws: cfg.draws,
        seed: cfg.seed,
        variant: cfg.variant,
        p: 10f64.powf(first_snr / 10.0),
        pi: (cfg.pi1, cfg.pi2, cfg.pi3),
        nvd_sizes: cfg.nvd_sizes.clone(),
        rotation: rotation.clone(),
    };
    let meta = metadata(cfg, &design);
    let reports = with_workers(workers, || run_checks(&design, &cfg.checks, &opts))??;
    fs::create_dir_all(out_dir)?;
    let report_path = out_dir.join("report.json");
    let report = serde_json::json!({"metadata": meta, "reports": reports});
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    let passed = reports.iter().all(|r| r.passed);
    if !passed && !force {
        return Ok(PipelineOutcome { reports, result: None, csv_path: None, report_path });
    }
    let settings = cfg.settings();
    let result = with_workers(workers, || run_monte_carlo(&design, &settings, rotation.as_ref()))??;
    let csv_path = out_dir.join("results.csv");
    fs::write(&csv_path, result.to_csv(&meta)?)?;
    Ok(PipelineOutcome { reports, result: Some(result), csv_path: Some(csv_path), report_path })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
variant = "gnaf-ii"
receiver = "grouped-ml"
constellation = "lattice2"
snr_db = "0:10:20"
trials = 500
seed = 7
checks = ["clro", "group", "whitened", "fulldiv"]
draws = 10

[design]
family = "pciod"
relays = 2
"#;

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg = RunConfig::from_toml(CONFIG).unwrap();
        assert_eq!(cfg.pi2, 1.0);
        assert_eq!(cfg.nvd_sizes, vec![4, 16]);
        assert_eq!(cfg.checks.len(), 4);
        let again = RunConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert!(RunConfig::from_toml(&CONFIG.replace("gnaf-ii", "gnaf-x")).is_err());
        assert!(RunConfig::from_toml(&format!("bogus = 1\n{CONFIG}")).is_err());
        assert!(RunConfig::from_toml(&CONFIG.replace("seed = 7", "seed = 7\npi1 = -1.0")).is_err());
    }

    #[test]
    fn family_builder_messages() {
        let err = build_family("pciod", Some(3), None, None).unwrap_err();
        assert!(err.to_string().contains("pciod-rect"));
        assert_eq!(build_family("toeplitz", Some(2), Some(2), None).unwrap().t, 3);
        assert!(build_family("toeplitz", Some(2), None, None).is_err());
        assert!(build_family("nope", None, None, None).is_err());
        assert_eq!(build_family("pciod-rect", Some(3), None, None).unwrap().t, 4);
    }

    #[test]
    fn check_list_parsing() {
        assert_eq!(parse_checks("clro,group").unwrap(), vec![Check::Clro, Check::Group]);
        assert!(parse_checks("clro,bad").is_err());
    }

    #[test]
    fn pipeline_writes_bundle_and_aborts_on_failure() {
        let dir = std::env::temp_dir().join(format!("gnaf-pipeline-{}", std::process::id()));
        let cfg = RunConfig::from_toml(CONFIG).unwrap();
        let out = run_pipeline(&cfg, Path::new("."), &dir.join("ok"), false, 1).unwrap();
        assert!(out.all_passed());
        let csv = fs::read_to_string(out.csv_path.unwrap()).unwrap();
        assert!(csv.starts_with("# config: "));
        assert!(csv.contains("\"seed\":7"));

        // unprecoded PCIOD R=4 is not fully diverse
        let mut bad = cfg.clone();
        bad.design.relays = Some(4);
        bad.constellation = "pam2".parse().unwrap();
        let out = run_pipeline(&bad, Path::new("."), &dir.join("bad"), false, 1).unwrap();
        assert!(!out.all_passed());
        assert!(out.result.is_none());
        let forced = run_pipeline(&bad, Path::new("."), &dir.join("forced"), true, 1).unwrap();
        assert!(forced.result.is_some());
        fs::remove_dir_all(&dir).unwrap();
    }
}
