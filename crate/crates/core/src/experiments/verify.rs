use std::f64::consts::PI;

use rand::Rng;

use crate::latent::verify::{verify_degenerate_limit, verify_rotation_equivariance, verify_support, ROTATION_COV_TOL};
use crate::latent::GaussianLatentParams;
use crate::{rng_from_seed, Error, Result};

/// Distance from the support endpoints the extreme draws must reach.
pub const ENDPOINT_TOL: f64 = 0.02;
pub const SUPPORT_SAMPLES: usize = 100_000;
pub const DEGENERATE_SAMPLES: usize = 10_000;
pub const DEGENERATE_SCALE: f64 = 2.0;
pub const DEGENERATE_RESIDUAL: f64 = 1e-9;
pub const ROTATION_SAMPLES: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prop {
    /// Relaxed draws stay strictly inside the span of the nonzero categories.
    P1a,
    /// A nearly one-hot row collapses onto its grid point.
    P1b,
    /// Isotropic planes of a diagonal Gaussian are rotation invariant.
    P2,
}

impl Prop {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "p1a" => Ok(Prop::P1a),
            "p1b" => Ok(Prop::P1b),
            "p2" => Ok(Prop::P2),
            other => Err(Error::invalid(format!("unknown property `{other}` (p1a | p1b | p2)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Prop::P1a => "p1a",
            Prop::P1b => "p1b",
            Prop::P2 => "p2",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyRow {
    pub prop: Prop,
    pub case: String,
    pub passed: bool,
    pub detail: String,
}

fn p1a_case<R: Rng>(rng: &mut R, endpoint_tol: f64) -> Result<VerifyRow> {
    let m = rng.random_range(4..=16);
    let lo = rng.random_range(0..m - 1);
    let hi = rng.random_range(lo + 1..m);
    let weights: Vec<f64> =
        (0..m).map(|j| if (lo..=hi).contains(&j) { rng.random_range(0.2..1.0) } else { 0.0 }).collect();
    let r = verify_support(&weights, SUPPORT_SAMPLES, rng)?;
    Ok(VerifyRow {
        prop: Prop::P1a,
        case: format!("m={m} active={lo}..={hi}"),
        passed: r.all_inside() && r.reaches_endpoints(endpoint_tol),
        detail: format!(
            "interval ({:.4}, {:.4}) observed [{:.4}, {:.4}] inside {}/{}",
            r.lower, r.upper, r.observed_min, r.observed_max, r.inside, r.samples
        ),
    })
}

fn p1b_case<R: Rng>(rng: &mut R) -> Result<VerifyRow> {
    let m = rng.random_range(4..=64);
    let top = rng.random_range(0..m);
    let rest = DEGENERATE_RESIDUAL / (m - 1) as f64;
    let weights: Vec<f64> = (0..m).map(|j| if j == top { 1.0 - DEGENERATE_RESIDUAL } else { rest }).collect();
    let r = verify_degenerate_limit(&weights, DEGENERATE_SCALE, DEGENERATE_SAMPLES, rng)?;
    Ok(VerifyRow {
        prop: Prop::P1b,
        case: format!("m={m} top={top}"),
        passed: r.argmax_rate >= 0.999 && r.mean_abs_deviation < 1e-3,
        detail: format!("argmax rate {:.5}, mean |f - grid| {:.3e}", r.argmax_rate, r.mean_abs_deviation),
    })
}

fn p2_case<R: Rng>(rng: &mut R, isotropic: bool) -> Result<VerifyRow> {
    let n = rng.random_range(2..=4);
    let i = rng.random_range(0..n - 1);
    let j = rng.random_range(i + 1..n);
    let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let angle = if isotropic {
        sigma[j] = sigma[i];
        rng.random_range(0.0..2.0 * PI)
    } else {
        sigma[i] = rng.random_range(0.5..1.0);
        sigma[j] = sigma[i] + rng.random_range(1.0..1.5);
        rng.random_range(0.3..PI - 0.3)
    };
    let params = GaussianLatentParams::new(mu, sigma.clone())?;
    let r = verify_rotation_equivariance(&params, angle, (i, j), ROTATION_SAMPLES, rng)?;
    let passed = if isotropic { r.equivariant } else { !r.equivariant && r.closed_form_gap > ROTATION_COV_TOL };
    Ok(VerifyRow {
        prop: Prop::P2,
        case: format!(
            "{} n={n} plane=({i},{j}) sigma=({:.3},{:.3}) angle={angle:.3}",
            if isotropic { "equal" } else { "unequal" },
            sigma[i],
            sigma[j]
        ),
        passed,
        detail: format!(
            "mean err {:.4}, cov err {:.4}, closed-form gap {:.4}",
            r.mean_error, r.cov_error, r.closed_form_gap
        ),
    })
}

/// `trials` randomized cases per property (for p2, that many isotropic and
/// that many anisotropic ones). `endpoint_tol` is how close the p1a extremes
/// must come to the support bounds; [`ENDPOINT_TOL`] by default.
pub fn run_verify(props: &[Prop], trials: usize, seed: u64, endpoint_tol: f64) -> Result<Vec<VerifyRow>> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::new();
    for &p in props {
        for _ in 0..trials {
            match p {
                Prop::P1a => rows.push(p1a_case(&mut rng, endpoint_tol)?),
                Prop::P1b => rows.push(p1b_case(&mut rng)?),
                Prop::P2 => rows.push(p2_case(&mut rng, true)?),
            }
        }
        if p == Prop::P2 {
            for _ in 0..trials {
                rows.push(p2_case(&mut rng, false)?);
            }
        }
    }
    Ok(rows)
}

pub fn verify_table(rows: &[VerifyRow]) -> String {
    let mut s = String::from("prop\tresult\tcase\tdetail\n");
    for r in rows {
        s.push_str(&format!("{}\t{}\t{}\t{}\n", r.prop.name(), if r.passed { "pass" } else { "FAIL" }, r.case, r.detail));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_is_vacuous() {
        assert!(run_verify(&[], 3, 0, ENDPOINT_TOL).unwrap().is_empty());
    }

    #[test]
    fn degenerate_cases_pass() {
        let rows = run_verify(&[Prop::P1b], 3, 1, ENDPOINT_TOL).unwrap();
        assert!(rows.iter().all(|r| r.passed), "{}", verify_table(&rows));
    }
}
