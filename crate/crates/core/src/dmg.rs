//! Closed-form diversity-multiplexing tradeoff bounds for `R` relays.
//!
//! `(x)+` is `max(x, 0)` exactly.

use serde::Serialize;

use crate::error::{Error, Result};

fn check(r: f64, relays: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!("multiplexing gain {r} outside [0, 1]")));
    }
    if relays == 0 {
        return Err(Error::InvalidArgument("at least one relay is required".into()));
    }
    Ok(())
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// `R (1 - 2r)+ + (1 - r)+`.
pub fn d_naf(r: f64, relays: usize) -> Result<f64> {
    check(r, relays)?;
    Ok(relays as f64 * pos(1.0 - 2.0 * r) + pos(1.0 - r))
}

/// Two-product channel bound `(R + 1)(1 - r)`.
pub fn d_star(r: f64, relays: usize) -> Result<f64> {
    check(r, relays)?;
    Ok((relays as f64 + 1.0) * (1.0 - r))
}

/// `d_star` at the code's rate loss: `(R + 1)(1 - r (R + 1) / R)+`.
pub fn d_code(r: f64, relays: usize) -> Result<f64> {
    check(r, relays)?;
    let n = relays as f64;
    Ok((n + 1.0) * pos(1.0 - r * (n + 1.0) / n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerBranch {
    Code,
    NoCooperation,
}

/// `max(1 - r, d_code)` and which term attains it (the code on ties).
pub fn d_lower(r: f64, relays: usize) -> Result<(f64, LowerBranch)> {
    let code = d_code(r, relays)?;
    let direct = 1.0 - r;
    Ok(if code >= direct { (code, LowerBranch::Code) } else { (direct, LowerBranch::NoCooperation) })
}

/// Multiplexing gain above which direct transmission beats the code:
/// `R^2 / ((R + 1)^2 - R)`.
pub fn crossover(relays: usize) -> Result<f64> {
    if relays == 0 {
        return Err(Error::InvalidArgument("at least one relay is required".into()));
    }
    let n = relays as f64;
    Ok(n * n / ((n + 1.0).powi(2) - n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TradeoffSample {
    pub r: f64,
    pub d_naf: f64,
    pub d_star: f64,
    pub d_code: f64,
    pub d_lower: f64,
    pub no_coop: f64,
    pub lower_branch: LowerBranch,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TradeoffCurve {
    pub relays: usize,
    pub samples: Vec<TradeoffSample>,
}

/// All bounds on a uniform grid of `n_samples` points over `[0, 1]`.
pub fn curves(relays: usize, n_samples: usize) -> Result<TradeoffCurve> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("at least two samples are required".into()));
    }
    let samples = (0..n_samples)
        .map(|i| {
            let r = if i + 1 == n_samples { 1.0 } else { i as f64 / (n_samples - 1) as f64 };
            let (d_lower, lower_branch) = d_lower(r, relays)?;
            Ok(TradeoffSample {
                r,
                d_naf: d_naf(r, relays)?,
                d_star: d_star(r, relays)?,
                d_code: d_code(r, relays)?,
                d_lower,
                no_coop: 1.0 - r,
                lower_branch,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TradeoffCurve { relays, samples })
}

pub fn emit_curves(relays: usize, n_samples: usize) -> Result<String> {
    let curve = curves(relays, n_samples)?;
    let mut out = format!("# relays: {relays}\nr,d_naf,d_star,d_code,d_lower,no_coop\n");
    for s in &curve.samples {
        out.push_str(&format!("{},{},{},{},{},{}\n", s.r, s.d_naf, s.d_star, s.d_code, s.d_lower, s.no_coop));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        for n in 1..10 {
            assert_eq!(d_naf(0.0, n).unwrap(), n as f64 + 1.0);
            assert_eq!(d_naf(1.0, n).unwrap(), 0.0);
            assert_eq!(d_star(0.0, n).unwrap(), n as f64 + 1.0);
            assert_eq!(d_star(1.0, n).unwrap(), 0.0);
            assert_eq!(d_code(0.0, n).unwrap(), n as f64 + 1.0);
            assert_eq!(d_code(n as f64 / (n as f64 + 1.0), n).unwrap(), 0.0);
            assert_eq!(d_lower(0.0, n).unwrap(), (n as f64 + 1.0, LowerBranch::Code));
            assert_eq!(d_lower(1.0, n).unwrap().0, 0.0);
        }
        assert_eq!(d_naf(0.5, 2).unwrap(), 0.5);
        assert_eq!(d_star(0.25, 3).unwrap(), 3.0);
        assert_eq!(d_code(0.25, 2).unwrap(), 1.875);
        assert!((crossover(2).unwrap() - 4.0 / 7.0).abs() < 1e-15);
        assert!((crossover(1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(d_naf(1.5, 2).is_err());
        assert!(d_star(0.5, 0).is_err());
    }

    #[test]
    fn crossover_is_branch_intersection() {
        for n in 1..40 {
            let x = crossover(n).unwrap();
            assert!((1.0 - x - d_code(x, n).unwrap()).abs() < 1e-12);
            // bisection on 1 - r = d_code
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if d_code(mid, n).unwrap() > 1.0 - mid {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!((lo - x).abs() < 1e-12);
            assert_eq!(d_lower(x - 1e-9, n).unwrap().1, LowerBranch::Code);
            assert_eq!(d_lower(x + 1e-9, n).unwrap().1, LowerBranch::NoCooperation);
        }
    }

    #[test]
    fn gap_shrinks_with_relays() {
        let gap = |n| d_star(0.1, n).unwrap() - d_lower(0.1, n).unwrap().0;
        let gaps: Vec<f64> = [2, 4, 8, 16].into_iter().map(gap).collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }

    #[test]
    fn emitted_grid() {
        let csv = emit_curves(2, 2).unwrap();
        let rows: Vec<&str> = csv.lines().skip(2).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("0,"));
        assert!(rows[1].starts_with("1,"));
        for s in curves(5, 101).unwrap().samples {
            assert!(s.d_lower >= s.d_code && s.d_lower >= s.no_coop);
            assert!(s.d_lower <= s.d_star + 1e-15 && s.d_naf <= s.d_star + 1e-15);
        }
    }
}
