//! Empirical checks of the support of the relaxed representation and of the
//! rotation behaviour of diagonal Gaussian latents.

use rand::Rng;

use super::{argmax, gaussian_reparam, grid_value, gumbel_softmax_with_noise, sample_gumbel};
use super::{DiscreteLatentParams, GaussianLatentParams};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Minimum draws for [`verify_support`] and [`verify_degenerate_limit`].
pub const MIN_SUPPORT_SAMPLES: usize = 10_000;
/// Minimum draws for [`verify_rotation_equivariance`].
pub const MIN_ROTATION_SAMPLES: usize = 100_000;
pub const ROTATION_MEAN_TOL: f64 = 0.02;
pub const ROTATION_COV_TOL: f64 = 0.05;

/// Closed interval `[j_min/(m-1), j_max/(m-1)]` spanned by the categories with
/// nonzero weight.
pub fn support_interval(weights: &[f64]) -> Result<(f64, f64)> {
    let m = weights.len();
    if m < 2 {
        return Err(Error::invalid("support needs at least two categories"));
    }
    let lo = weights.iter().position(|&a| a > 0.0);
    let hi = weights.iter().rposition(|&a| a > 0.0);
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok((grid_value(lo, m), grid_value(hi, m))),
        _ => Err(Error::invalid("at least one category weight must be positive")),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportReport {
    pub lower: f64,
    pub upper: f64,
    pub observed_min: f64,
    pub observed_max: f64,
    /// Draws inside the open support interval, or equal to it when degenerate.
    pub inside: usize,
    pub samples: usize,
}

impl SupportReport {
    pub fn all_inside(&self) -> bool {
        self.inside == self.samples
    }

    /// Whether the extremes came within `tol` of both endpoints.
    pub fn reaches_endpoints(&self, tol: f64) -> bool {
        self.observed_min - self.lower <= tol && self.upper - self.observed_max <= tol
    }
}

/// Draws `f(z)` with unit noise scale and temperature from one row of
/// nonnegative weights and records where the draws fall.
pub fn verify_support<R: Rng + ?Sized>(weights: &[f64], n_samples: usize, rng: &mut R) -> Result<SupportReport> {
    if n_samples < MIN_SUPPORT_SAMPLES {
        return Err(Error::invalid(format!("need at least {MIN_SUPPORT_SAMPLES} samples, got {n_samples}")));
    }
    let (lower, upper) = support_interval(weights)?;
    let params = DiscreteLatentParams::from_weights(&[weights.to_vec()])?;
    let draws = sample_mapped(&params, 1.0, n_samples, rng)?;
    let inside = draws
        .iter()
        .filter(|&&f| if lower == upper { (f - lower).abs() < 1e-12 } else { lower < f && f < upper })
        .count();
    let observed_min = draws.iter().copied().fold(f64::INFINITY, f64::min);
    let observed_max = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SupportReport { lower, upper, observed_min, observed_max, inside, samples: n_samples })
}

fn sample_mapped<R: Rng + ?Sized>(
    params: &DiscreteLatentParams,
    scale: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    (0..n_samples)
        .map(|_| {
            let noise = sample_gumbel(&[1, params.m()], scale, rng);
            Ok(gumbel_softmax_with_noise(params, 1.0, &noise)?.mapped()[0])
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegenerateReport {
    /// Zero-based category holding almost all weight.
    pub top: usize,
    pub grid_value: f64,
    /// Fraction of draws whose argmax is `top`.
    pub argmax_rate: f64,
    /// Mean of |f(z) - grid_value| over the draws.
    pub mean_abs_deviation: f64,
}

/// Samples a nearly one-hot row and measures how close the relaxed draws
/// stay to the grid point of its dominant category.
pub fn verify_degenerate_limit<R: Rng + ?Sized>(
    weights: &[f64],
    scale: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<DegenerateReport> {
    if n_samples < MIN_SUPPORT_SAMPLES {
        return Err(Error::invalid(format!("need at least {MIN_SUPPORT_SAMPLES} samples, got {n_samples}")));
    }
    let params = DiscreteLatentParams::from_weights(&[weights.to_vec()])?;
    let top = argmax(weights);
    let target = grid_value(top, weights.len());
    let mut hits = 0usize;
    let mut deviation = 0.0;
    for _ in 0..n_samples {
        let noise = sample_gumbel(&[1, params.m()], scale, rng);
        let z = gumbel_softmax_with_noise(&params, 1.0, &noise)?;
        if argmax(z.tensor().data()) == top {
            hits += 1;
        }
        deviation += (z.mapped()[0] - target).abs();
    }
    Ok(DegenerateReport {
        top,
        grid_value: target,
        argmax_rate: hits as f64 / n_samples as f64,
        mean_abs_deviation: deviation / n_samples as f64,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivarianceReport {
    /// Both empirical errors fell below their tolerances.
    pub equivariant: bool,
    /// Max |mean(Rz) - Rμ| over entries.
    pub mean_error: f64,
    /// Max |cov(Rz) - Σ| over entries.
    pub cov_error: f64,
    /// Max |RΣRᵀ - Σ| over entries, computed exactly.
    pub closed_form_gap: f64,
    pub samples: usize,
}

/// Rotates draws from `N(mu, diag sigma²)` by `angle` in the plane of
/// dimensions `(i, j)` and compares the result with `N(Rμ, Σ)`.
pub fn verify_rotation_equivariance<R: Rng + ?Sized>(
    params: &GaussianLatentParams,
    angle: f64,
    plane: (usize, usize),
    n_samples: usize,
    rng: &mut R,
) -> Result<EquivarianceReport> {
    let n = params.n();
    let (pi, pj) = plane;
    if pi >= n || pj >= n || pi == pj {
        return Err(Error::invalid(format!("rotation plane ({pi}, {pj}) invalid for {n} dimensions")));
    }
    if n_samples < MIN_ROTATION_SAMPLES {
        return Err(Error::invalid(format!("need at least {MIN_ROTATION_SAMPLES} samples, got {n_samples}")));
    }
    let rot = rotation(n, angle, plane);
    let rotated_mu = mat_vec(&rot, params.mu());

    let mut sum = vec![0.0; n];
    let mut draws = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let y = mat_vec(&rot, &gaussian_reparam(params, rng));
        for (s, v) in sum.iter_mut().zip(&y) {
            *s += v;
        }
        draws.push(y);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n_samples as f64).collect();
    let mut cov = vec![0.0; n * n];
    for y in &draws {
        for a in 0..n {
            for b in 0..n {
                cov[a * n + b] += (y[a] - mean[a]) * (y[b] - mean[b]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= (n_samples - 1) as f64);

    let target = diag_cov(params.sigma());
    let mean_error = mean.iter().zip(&rotated_mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let cov_error = cov.iter().zip(target.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let closed = sandwich(rot.data(), target.data(), n);
    let closed_form_gap = closed.iter().zip(target.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    Ok(EquivarianceReport {
        equivariant: mean_error < ROTATION_MEAN_TOL && cov_error < ROTATION_COV_TOL,
        mean_error,
        cov_error,
        closed_form_gap,
        samples: n_samples,
    })
}

/// Givens rotation `[[c, -s], [s, c]]` embedded in the identity.
pub fn rotation(n: usize, angle: f64, (i, j): (usize, usize)) -> Tensor {
    let mut r = Tensor::identity(n);
    let (s, c) = angle.sin_cos();
    let d = r.data_mut();
    d[i * n + i] = c;
    d[i * n + j] = -s;
    d[j * n + i] = s;
    d[j * n + j] = c;
    r
}

fn diag_cov(sigma: &[f64]) -> Tensor {
    let n = sigma.len();
    let mut t = Tensor::zeros(&[n, n]);
    for (k, s) in sigma.iter().enumerate() {
        t.data_mut()[k * n + k] = s * s;
    }
    t
}

fn mat_vec(m: &Tensor, v: &[f64]) -> Vec<f64> {
    m.rows().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// `R S Rᵀ` for square row-major matrices.
fn sandwich(r: &[f64], s: &[f64], n: usize) -> Vec<f64> {
    let mut rs = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            rs[a * n + b] = (0..n).map(|k| r[a * n + k] * s[k * n + b]).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            out[a * n + b] = (0..n).map(|k| rs[a * n + k] * r[b * n + k]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn support_of_interior_row() {
        let mut rng = rng_from_seed(1);
        let w = [0.0, 0.0, 1.0, 0.5, 2.0, 0.0];
        let report = verify_support(&w, 10_000, &mut rng).unwrap();
        assert_eq!((report.lower, report.upper), (0.4, 0.8));
        assert!(report.all_inside(), "{report:?}");
    }

    #[test]
    fn support_of_single_category() {
        let mut rng = rng_from_seed(2);
        let report = verify_support(&[0.0, 3.0, 0.0], 10_000, &mut rng).unwrap();
        assert_eq!((report.lower, report.upper), (0.5, 0.5));
        assert!(report.all_inside());
    }

    #[test]
    fn too_few_samples_rejected() {
        let mut rng = rng_from_seed(3);
        assert!(verify_support(&[1.0, 1.0], 10, &mut rng).is_err());
    }

    #[test]
    fn degenerate_row_stays_at_grid_point() {
        let mut rng = rng_from_seed(4);
        let m = 6;
        let mut w = vec![1e-9 / (m - 1) as f64; m];
        w[4] = 1.0 - 1e-9;
        let report = verify_degenerate_limit(&w, 2.0, 10_000, &mut rng).unwrap();
        assert_eq!(report.top, 4);
        assert!(report.argmax_rate >= 0.999);
        assert!(report.mean_abs_deviation < 0.01);
    }

    #[test]
    fn equal_sigmas_are_equivariant() {
        let mut rng = rng_from_seed(5);
        let p = GaussianLatentParams::new(vec![0.4, -0.2, 1.0], vec![0.8, 0.8, 1.3]).unwrap();
        let report = verify_rotation_equivariance(&p, 1.0, (0, 1), 100_000, &mut rng).unwrap();
        assert!(report.equivariant, "{report:?}");
        assert!(report.closed_form_gap < 1e-12);
    }

    #[test]
    fn unequal_sigmas_are_detected() {
        let mut rng = rng_from_seed(6);
        let p = GaussianLatentParams::new(vec![0.0, 0.0], vec![0.5, 1.5]).unwrap();
        let report = verify_rotation_equivariance(&p, std::f64::consts::FRAC_PI_2, (0, 1), 100_000, &mut rng).unwrap();
        assert!(!report.equivariant);
        assert!((report.closed_form_gap - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_plane_rejected() {
        let mut rng = rng_from_seed(7);
        let p = GaussianLatentParams::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(verify_rotation_equivariance(&p, 0.3, (1, 1), 100_000, &mut rng).is_err());
        assert!(verify_rotation_equivariance(&p, 0.3, (0, 2), 100_000, &mut rng).is_err());
    }
}
