//! Latent distributions: Gumbel-Softmax sampling over ordered categories,
//! the map onto the unit interval, KL terms against the priors,
//! straight-through rounding, category masking and the Gumbel scale
//! schedule.
//!
//! Categories `0..m` (zero-based here) sit on the equidistant grid
//! `j / (m - 1)`, so a one-hot sample on category `j` maps to that grid value.
//! A row of `n × m` log-weights describes one latent dimension; a log-weight
//! of `-inf` marks a category with zero weight.

pub mod verify;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Uniform draws are clamped to `[GUMBEL_EPS, 1 - GUMBEL_EPS]`.
pub const GUMBEL_EPS: f64 = 1e-12;

/// Per-sample weights of `n` categorical latents with `m` categories each,
/// stored as log-weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteLatentParams {
    log_alpha: Tensor,
}

impl DiscreteLatentParams {
    pub fn from_log_weights(log_alpha: Tensor) -> Result<Self> {
        let &[n, m] = log_alpha.shape() else {
            return Err(Error::invalid(format!("log-weights must be n×m, got {:?}", log_alpha.shape())));
        };
        if n < 1 || m < 2 {
            return Err(Error::invalid(format!("need n >= 1 and m >= 2, got n={n}, m={m}")));
        }
        for (i, row) in log_alpha.rows().enumerate() {
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::invalid(format!("row {i} has NaN or +inf log-weight")));
            }
            if !row.iter().any(|v| v.is_finite()) {
                return Err(Error::invalid(format!("row {i} has no positive weight")));
            }
        }
        Ok(DiscreteLatentParams { log_alpha })
    }

    /// From nonnegative weights; zero weights become `-inf` log-weights.
    pub fn from_weights(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.iter().flatten().any(|&a| a < 0.0 || a.is_nan()) {
            return Err(Error::invalid("category weights must be nonnegative"));
        }
        let logs: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|a| a.ln()).collect()).collect();
        Self::from_log_weights(Tensor::from_rows(&logs)?)
    }

    pub fn n(&self) -> usize {
        self.log_alpha.shape()[0]
    }

    pub fn m(&self) -> usize {
        self.log_alpha.shape()[1]
    }

    pub fn log_weights(&self) -> &Tensor {
        &self.log_alpha
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.log_alpha.data()[i * self.m()..(i + 1) * self.m()]
    }

    /// Row-wise `softmax(log α)`.
    pub fn probabilities(&self) -> Tensor {
        let data = self.log_alpha.rows().flat_map(softmax).collect();
        Tensor::from_parts(self.log_alpha.shape().to_vec(), data)
    }
}

/// Diagonal Gaussian with means `mu` and standard deviations `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianLatentParams {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl GaussianLatentParams {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() || mu.is_empty() {
            return Err(Error::invalid(format!("mu has {} entries, sigma {}", mu.len(), sigma.len())));
        }
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("standard deviations must be positive, got {s}")));
        }
        Ok(GaussianLatentParams { mu, sigma })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }
}

/// `n × m` matrix whose rows lie on the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexSample {
    z: Tensor,
}

impl SimplexSample {
    pub fn new(z: Tensor) -> Result<Self> {
        if z.rank() != 2 {
            return Err(Error::invalid(format!("simplex sample must be n×m, got {:?}", z.shape())));
        }
        for (i, row) in z.rows().enumerate() {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!("row {i} has entries outside [0, 1]")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("row {i} sums to {total}")));
            }
        }
        Ok(SimplexSample { z })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.z
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.z.rows()
    }

    /// Applies [`map_f`] to every row.
    pub fn mapped(&self) -> Vec<f64> {
        self.z.rows().map(map_f).collect()
    }
}

/// Cosine schedule of the Gumbel noise scale, with a fixed temperature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub initial_scale: f64,
    pub final_scale: f64,
    pub total_steps: usize,
    pub temperature: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule { initial_scale: 0.5, final_scale: 2.0, total_steps: 300_000, temperature: 1.0 }
    }
}

impl AnnealSchedule {
    /// Scale used by deterministic evaluation.
    pub const EVAL_SCALE: f64 = 0.0;

    pub fn with_steps(total_steps: usize) -> Self {
        AnnealSchedule { total_steps, ..Self::default() }
    }
}

/// Gumbel scale at `step`; steps outside `[0, total_steps]` clamp to the
/// endpoints.
pub fn anneal_scale(schedule: &AnnealSchedule, step: usize) -> f64 {
    if schedule.total_steps == 0 {
        return schedule.final_scale;
    }
    let t = step.min(schedule.total_steps) as f64 / schedule.total_steps as f64;
    let w = (1.0 - (std::f64::consts::PI * t).cos()) / 2.0;
    schedule.initial_scale + (schedule.final_scale - schedule.initial_scale) * w
}

/// Stable softmax of one row; `-inf` entries get probability exactly 0.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Grid value of zero-based category `j` out of `m`.
pub fn grid_value(j: usize, m: usize) -> f64 {
    j as f64 / (m - 1) as f64
}

/// Dot product of a simplex row with the equidistant grid on `[0, 1]`.
pub fn map_f(z_row: &[f64]) -> f64 {
    let m = z_row.len();
    z_row.iter().enumerate().map(|(j, z)| z * grid_value(j, m)).sum()
}

/// Affine map of a unit-interval representation onto `[-1, 1]`.
pub fn to_symmetric(r: f64) -> f64 {
    2.0 * r - 1.0
}

/// `scale * Gumbel(0, 1)` draws.
pub fn sample_gumbel<R: Rng + ?Sized>(shape: &[usize], scale: f64, rng: &mut R) -> Tensor {
    let mut t = Tensor::zeros(shape);
    if scale == 0.0 {
        return t;
    }
    for v in t.data_mut() {
        let u: f64 = rng.random::<f64>().clamp(GUMBEL_EPS, 1.0 - GUMBEL_EPS);
        *v = scale * -(-u.ln()).ln();
    }
    t
}

/// Gumbel-Softmax relaxation with pre-drawn, already scaled noise.
pub fn gumbel_softmax_with_noise(
    params: &DiscreteLatentParams,
    temperature: f64,
    noise: &Tensor,
) -> Result<SimplexSample> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    if noise.shape() != params.log_alpha.shape() {
        return Err(Error::shape("gumbel_softmax", format!("noise {:?}", noise.shape())));
    }
    let m = params.m();
    let mut data = Vec::with_capacity(noise.len());
    for (row, g) in params.log_alpha.rows().zip(noise.rows()) {
        let y: Vec<f64> = row.iter().zip(g).map(|(a, g)| (a + g) / temperature).collect();
        data.extend(softmax(&y));
    }
    Ok(SimplexSample { z: Tensor::from_parts(vec![params.n(), m], data) })
}

/// `z_i = softmax((log α_i + scale·g_i) / temperature)` with fresh Gumbel noise.
pub fn gumbel_softmax_sample<R: Rng + ?Sized>(
    params: &DiscreteLatentParams,
    temperature: f64,
    scale: f64,
    rng: &mut R,
) -> Result<SimplexSample> {
    let noise = sample_gumbel(params.log_alpha.shape(), scale, rng);
    gumbel_softmax_with_noise(params, temperature, &noise)
}

/// Deterministic representation `f(softmax(log α_i))` per dimension.
pub fn representation(params: &DiscreteLatentParams) -> Vec<f64> {
    params.log_alpha.rows().map(|r| map_f(&softmax(r))).collect()
}

/// Σ_i KL(Cat(softmax(log α_i)) ‖ Uniform{m}).
pub fn kl_categorical_uniform(params: &DiscreteLatentParams) -> f64 {
    let log_m = (params.m() as f64).ln();
    params
        .log_alpha
        .rows()
        .map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            row.iter()
                .map(|&v| {
                    let lp = v - lse;
                    let p = lp.exp();
                    if p == 0.0 { 0.0 } else { p * (lp + log_m) }
                })
                .sum::<f64>()
        })
        .sum::<f64>()
        .max(0.0)
}

/// KL(N(mu, diag sigma²) ‖ N(0, I)).
pub fn kl_gaussian_standard(params: &GaussianLatentParams) -> f64 {
    params
        .mu
        .iter()
        .zip(&params.sigma)
        .map(|(m, s)| 0.5 * (m * m + s * s - 1.0 - (s * s).ln()))
        .sum()
}

/// `mu + sigma ⊙ ε` with ε ~ N(0, I).
pub fn gaussian_reparam<R: Rng + ?Sized>(params: &GaussianLatentParams, rng: &mut R) -> Vec<f64> {
    params
        .mu
        .iter()
        .zip(&params.sigma)
        .map(|(m, s)| {
            let e: f64 = StandardNormal.sample(rng);
            m + s * e
        })
        .collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

/// One-hot rows at each row's argmax.
pub fn straight_through_round(z: &SimplexSample) -> SimplexSample {
    let m = z.z.last_dim();
    let mut data = vec![0.0; z.z.len()];
    for (i, row) in z.z.rows().enumerate() {
        data[i * m + argmax(row)] = 1.0;
    }
    SimplexSample { z: Tensor::from_parts(z.z.shape().to_vec(), data) }
}

/// `round(num / den)` with halves rounded up, for nonnegative integers.
fn div_round_half_up(num: usize, den: usize) -> usize {
    (2 * num + den) / (2 * den)
}

/// Zero-based active categories `{round(j (m-1)/(m'-1))}` for `j < m'`.
pub fn active_categories(m: usize, m_prime: usize) -> Result<Vec<usize>> {
    if m_prime < 2 || m_prime > m {
        return Err(Error::invalid(format!("active category count {m_prime} must lie in [2, {m}]")));
    }
    Ok((0..m_prime).map(|j| div_round_half_up(j * (m - 1), m_prime - 1)).collect())
}

/// Target category of zero-based value `index` of a factor with
/// `cardinality` values, placed on the same grid as [`active_categories`].
pub fn label_category(index: usize, cardinality: usize, m: usize) -> usize {
    if cardinality <= 1 {
        return 0;
    }
    div_round_half_up(index.min(cardinality - 1) * (m - 1), cardinality - 1)
}

/// Sets the log-weight of every inactive category of dimension `i` to
/// `-inf`, keeping `m_primes[i]` active categories.
pub fn mask_categories(params: &DiscreteLatentParams, m_primes: &[usize]) -> Result<DiscreteLatentParams> {
    if m_primes.len() != params.n() {
        return Err(Error::invalid(format!(
            "{} active-category counts for {} dimensions",
            m_primes.len(),
            params.n()
        )));
    }
    let m = params.m();
    let mut out = params.log_alpha.clone();
    for (i, &mp) in m_primes.iter().enumerate() {
        let active = active_categories(m, mp)?;
        let row = &mut out.data_mut()[i * m..(i + 1) * m];
        for (j, v) in row.iter_mut().enumerate() {
            if !active.contains(&j) {
                *v = f64::NEG_INFINITY;
            }
        }
    }
    DiscreteLatentParams::from_log_weights(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use proptest::prelude::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zero_scale_gumbel_is_zero() {
        let mut rng = rng_from_seed(0);
        assert_eq!(sample_gumbel(&[3, 4], 0.0, &mut rng), Tensor::zeros(&[3, 4]));
    }

    #[test]
    fn gumbel_mean_matches_euler_gamma() {
        let mut rng = rng_from_seed(11);
        let g = sample_gumbel(&[1_000_000], 1.0, &mut rng);
        let mean = g.sum() / g.len() as f64;
        assert!(close(mean, EULER_GAMMA, 0.01), "{mean}");
        let g2 = sample_gumbel(&[1_000_000], 2.0, &mut rng);
        let mean2 = g2.sum() / g2.len() as f64;
        assert!(close(mean2, 2.0 * EULER_GAMMA, 0.02), "{mean2}");
    }

    #[test]
    fn zero_scale_sample_is_softmax() {
        let params = DiscreteLatentParams::from_weights(&[vec![1.0; 4]]).unwrap();
        let mut rng = rng_from_seed(1);
        let z = gumbel_softmax_sample(&params, 1.0, 0.0, &mut rng).unwrap();
        assert_eq!(z.tensor().data(), &[0.25; 4]);
    }

    #[test]
    fn nonpositive_temperature_fails() {
        let params = DiscreteLatentParams::from_weights(&[vec![1.0, 1.0]]).unwrap();
        let mut rng = rng_from_seed(1);
        assert!(gumbel_softmax_sample(&params, 0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn binary_symmetric_sample_mean() {
        let params = DiscreteLatentParams::from_weights(&[vec![1.0, 1.0]]).unwrap();
        let mut rng = rng_from_seed(5);
        let draws = 100_000;
        let mut total = 0.0;
        for _ in 0..draws {
            total += gumbel_softmax_sample(&params, 1.0, 1.0, &mut rng).unwrap().tensor().data()[0];
        }
        assert!(close(total / draws as f64, 0.5, 0.01));
    }

    #[test]
    fn near_degenerate_row_wins_argmax() {
        let eps = 1e-9;
        let m = 5;
        let mut w = vec![eps / (m - 1) as f64; m];
        w[2] = 1.0 - eps;
        let params = DiscreteLatentParams::from_weights(&[w]).unwrap();
        let mut rng = rng_from_seed(9);
        let hits = (0..10_000)
            .filter(|_| {
                let z = gumbel_softmax_sample(&params, 1.0, 2.0, &mut rng).unwrap();
                argmax(z.tensor().data()) == 2
            })
            .count();
        assert!(hits as f64 >= 0.999 * 10_000.0, "{hits}");
    }

    #[test]
    fn map_f_examples() {
        let mut one_hot = vec![0.0; 5];
        one_hot[2] = 1.0;
        assert_eq!(map_f(&one_hot), 0.5);
        assert_eq!(map_f(&[0.2; 5]), 0.5);
        assert_eq!(map_f(&[0.5, 0.0, 0.0, 0.0, 0.5]), 0.5);
    }

    #[test]
    fn representation_examples() {
        let mut w = vec![1e-300; 6];
        w[5] = 1.0;
        let p = DiscreteLatentParams::from_weights(&[w]).unwrap();
        assert!(close(representation(&p)[0], 1.0, 1e-12));

        let uniform = DiscreteLatentParams::from_weights(&[vec![3.0; 7], vec![0.1; 7]]).unwrap();
        for r in representation(&uniform) {
            assert!(close(r, 0.5, 1e-15));
        }
        // softmax(log(2,1,1)) = (0.5, 0.25, 0.25); f = 0.25*0.5 + 0.25*1.
        let p = DiscreteLatentParams::from_weights(&[vec![2.0, 1.0, 1.0]]).unwrap();
        assert!(close(representation(&p)[0], 0.375, 1e-15));
    }

    #[test]
    fn categorical_kl_examples() {
        let uniform = DiscreteLatentParams::from_weights(&[vec![1.0; 4], vec![2.0; 4]]).unwrap();
        assert!(kl_categorical_uniform(&uniform).abs() < 1e-15);

        let degenerate = DiscreteLatentParams::from_weights(&[vec![1.0 - 1e-12, 1e-12]]).unwrap();
        assert!(close(kl_categorical_uniform(&degenerate), 2f64.ln(), 1e-9));

        let p = DiscreteLatentParams::from_weights(&[vec![0.7, 0.1, 0.1, 0.1]]).unwrap();
        let expected = 0.7 * 2.8f64.ln() + 3.0 * 0.1 * 0.4f64.ln();
        assert!(close(kl_categorical_uniform(&p), expected, 1e-12));
        assert!(close(expected, 0.4459, 1e-4));
    }

    #[test]
    fn gaussian_kl_examples() {
        let prior = GaussianLatentParams::new(vec![0.0; 3], vec![1.0; 3]).unwrap();
        assert_eq!(kl_gaussian_standard(&prior), 0.0);
        let shifted = GaussianLatentParams::new(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(kl_gaussian_standard(&shifted), 0.5);
        let wide = GaussianLatentParams::new(vec![0.0], vec![2.0]).unwrap();
        assert!(close(kl_gaussian_standard(&wide), 0.5 * (3.0 - 4f64.ln()), 1e-15));
        assert!(close(kl_gaussian_standard(&wide), 0.8069, 1e-4));
        assert!(GaussianLatentParams::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn reparam_moments() {
        let mut rng = rng_from_seed(21);
        let tiny = GaussianLatentParams::new(vec![0.3, -1.0], vec![1e-12; 2]).unwrap();
        let z = gaussian_reparam(&tiny, &mut rng);
        assert!(close(z[0], 0.3, 1e-9) && close(z[1], -1.0, 1e-9));

        let draws = 100_000;
        let unit = GaussianLatentParams::new(vec![0.0], vec![1.0]).unwrap();
        let xs: Vec<f64> = (0..draws).map(|_| gaussian_reparam(&unit, &mut rng)[0]).collect();
        let mean = xs.iter().sum::<f64>() / draws as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        assert!(close(var, 1.0, 0.02), "{var}");

        let shifted = GaussianLatentParams::new(vec![3.0, -3.0], vec![1.0, 1.0]).unwrap();
        let mut sums = [0.0; 2];
        for _ in 0..draws {
            let z = gaussian_reparam(&shifted, &mut rng);
            sums[0] += z[0];
            sums[1] += z[1];
        }
        assert!(close(sums[0] / draws as f64, 3.0, 0.02));
        assert!(close(sums[1] / draws as f64, -3.0, 0.02));
    }

    #[test]
    fn rounding_examples() {
        let z = SimplexSample::new(Tensor::from_rows(&[vec![0.2, 0.7, 0.1], vec![0.0, 0.0, 1.0]]).unwrap()).unwrap();
        let r = straight_through_round(&z);
        assert_eq!(r.tensor().data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(straight_through_round(&r), r);
        let tie = SimplexSample::new(Tensor::from_rows(&[vec![0.5, 0.5]]).unwrap()).unwrap();
        assert_eq!(straight_through_round(&tie).tensor().data(), &[1.0, 0.0]);
    }

    #[test]
    fn active_category_sets() {
        assert_eq!(active_categories(64, 2).unwrap(), vec![0, 63]);
        assert_eq!(active_categories(64, 64).unwrap(), (0..64).collect::<Vec<_>>());
        // 63/2 = 31.5 rounds up to 32, i.e. category 33 of 64.
        assert_eq!(active_categories(64, 3).unwrap(), vec![0, 32, 63]);
        assert!(active_categories(64, 1).is_err());
        assert_eq!(label_category(1, 2, 64), 63);
    }

    #[test]
    fn masked_categories_have_zero_probability() {
        let params = DiscreteLatentParams::from_weights(&[vec![1.0; 8], vec![1.0; 8]]).unwrap();
        let masked = mask_categories(&params, &[3, 8]).unwrap();
        let probs = masked.probabilities();
        let row0 = &probs.data()[..8];
        for (j, p) in row0.iter().enumerate() {
            if [0, 4, 7].contains(&j) {
                assert!(close(*p, 1.0 / 3.0, 1e-15));
            } else {
                assert_eq!(*p, 0.0);
            }
        }
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let z = gumbel_softmax_sample(&masked, 1.0, 2.0, &mut rng).unwrap();
            assert!(z.tensor().data()[1..4].iter().all(|&v| v == 0.0));
        }
        assert_eq!(mask_categories(&params, &[8, 8]).unwrap(), params);
        assert!(mask_categories(&params, &[1, 8]).is_err());
    }

    #[test]
    fn anneal_endpoints_and_midpoint() {
        let s = AnnealSchedule::with_steps(1000);
        assert_eq!(anneal_scale(&s, 0), 0.5);
        assert!(close(anneal_scale(&s, 1000), 2.0, 1e-15));
        assert!(close(anneal_scale(&s, 500), 1.25, 1e-15));
        assert!(close(anneal_scale(&s, 5000), 2.0, 1e-15));
    }

    #[test]
    fn row_validation() {
        assert!(DiscreteLatentParams::from_weights(&[vec![0.0, 0.0]]).is_err());
        assert!(DiscreteLatentParams::from_weights(&[vec![1.0]]).is_err());
        assert!(DiscreteLatentParams::from_weights(&[vec![-1.0, 1.0]]).is_err());
    }

    fn simplex_row(m: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, m).prop_filter_map("nonzero", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn map_f_is_linear_and_bounded(a in simplex_row(6), b in simplex_row(6), t in 0.0f64..1.0) {
            let fa = map_f(&a);
            let fb = map_f(&b);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&fa));
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            prop_assert!((map_f(&mix) - (t * fa + (1.0 - t) * fb)).abs() < 1e-12);
        }

        #[test]
        fn kl_is_permutation_invariant(
            logs in proptest::collection::vec(-5.0f64..5.0, 2..10),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let p = DiscreteLatentParams::from_log_weights(Tensor::from_rows(&[logs.clone()]).unwrap()).unwrap();
            let mut shuffled = logs;
            shuffled.shuffle(&mut rng_from_seed(seed));
            let q = DiscreteLatentParams::from_log_weights(Tensor::from_rows(&[shuffled]).unwrap()).unwrap();
            prop_assert!(kl_categorical_uniform(&p) >= 0.0);
            prop_assert!((kl_categorical_uniform(&p) - kl_categorical_uniform(&q)).abs() < 1e-12);
        }

        #[test]
        fn samples_stay_on_simplex(
            logs in proptest::collection::vec(-30.0f64..30.0, 2..12),
            scale in 0.0f64..3.0,
            temp in 0.05f64..5.0,
            seed in any::<u64>(),
        ) {
            let p = DiscreteLatentParams::from_log_weights(Tensor::from_rows(&[logs]).unwrap()).unwrap();
            let z = gumbel_softmax_sample(&p, temp, scale, &mut rng_from_seed(seed)).unwrap();
            let total: f64 = z.tensor().data().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(SimplexSample::new(z.tensor().clone()).is_ok());
        }
    }
}
