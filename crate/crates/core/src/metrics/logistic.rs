//! Multinomial logistic regression fitted by full-batch proximal gradient
//! descent on standardized features.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogisticOptions {
    pub iterations: usize,
    pub l2: f64,
    /// Soft-threshold weight; 0 disables the L1 penalty.
    pub l1: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions { iterations: 500, l2: 1e-4, l1: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticRegression {
    d: usize,
    classes: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
    /// `[(d + 1), classes]`, bias row last.
    weights: Vec<f64>,
}

fn standardize(x: &[f64], d: usize, mean: &[f64], std: &[f64]) -> Vec<f64> {
    let n = x.len() / d;
    let mut out = Vec::with_capacity(n * (d + 1));
    for row in x.chunks_exact(d) {
        out.extend(row.iter().zip(mean).zip(std).map(|((v, m), s)| (v - m) / s));
        out.push(1.0);
    }
    out
}

fn gemm(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, trans_a: bool) {
    // Row-major C[m, n] = op(A) B with op(A) = A or Aᵀ.
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl LogisticRegression {
    /// Fits `classes`-way softmax regression on rows of `x` (`d` features each).
    pub fn fit(x: &[f64], d: usize, y: &[usize], classes: usize, opts: LogisticOptions) -> Result<Self> {
        if d == 0 || x.len() != y.len() * d || y.is_empty() {
            return Err(Error::invalid(format!("{} features for {} labels of width {d}", x.len(), y.len())));
        }
        if let Some(bad) = y.iter().find(|&&c| c >= classes) {
            return Err(Error::invalid(format!("label {bad} outside {classes} classes")));
        }
        let n = y.len();
        let mut mean = vec![0.0; d];
        for row in x.chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let mut std = vec![0.0; d];
        for row in x.chunks_exact(d) {
            for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n as f64;
            }
        }
        std.iter_mut().for_each(|s| *s = if *s > 1e-24 { s.sqrt() } else { 1.0 });
        let xs = standardize(x, d, &mean, &std);
        let p = d + 1;

        // Softmax cross entropy has a Hessian bounded by ½ XᵀX / n; its trace
        // bounds the largest eigenvalue.
        let trace = xs.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let step = 1.0 / (0.5 * trace + opts.l2);

        let mut w = vec![0.0; p * classes];
        let mut logits = vec![0.0; n * classes];
        let mut grad = vec![0.0; p * classes];
        for _ in 0..opts.iterations {
            gemm(&xs, &w, &mut logits, n, p, classes, false);
            for (row, &label) in logits.chunks_exact_mut(classes).zip(y) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    total += *v;
                }
                for v in row.iter_mut() {
                    *v /= total;
                }
                row[label] -= 1.0;
            }
            gemm(&xs, &logits, &mut grad, p, n, classes, true);
            for (i, (wi, gi)) in w.iter_mut().zip(&grad).enumerate() {
                let is_bias = i / classes == d;
                let g = gi / n as f64 + if is_bias { 0.0 } else { opts.l2 * *wi };
                *wi -= step * g;
                if opts.l1 > 0.0 && !is_bias {
                    let shrink = step * opts.l1;
                    *wi = wi.signum() * (wi.abs() - shrink).max(0.0);
                }
            }
        }
        Ok(LogisticRegression { d, classes, mean, std, weights: w })
    }

    pub fn predict(&self, x: &[f64]) -> Vec<usize> {
        let xs = standardize(x, self.d, &self.mean, &self.std);
        let n = x.len() / self.d;
        let mut logits = vec![0.0; n * self.classes];
        gemm(&xs, &self.weights, &mut logits, n, self.d + 1, self.classes, false);
        logits.chunks_exact(self.classes).map(crate::latent::argmax).collect()
    }

    pub fn accuracy(&self, x: &[f64], y: &[usize]) -> f64 {
        let hits = self.predict(x).iter().zip(y).filter(|(a, b)| a == b).count();
        hits as f64 / y.len().max(1) as f64
    }

    /// `Σ_c |w[j, c]|` for every feature `j`, in standardized units.
    pub fn feature_importance(&self) -> Vec<f64> {
        self.weights.chunks_exact(self.classes).take(self.d).map(|r| r.iter().map(|v| v.abs()).sum()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use rand::Rng;

    #[test]
    fn separates_three_blobs() {
        let mut rng = rng_from_seed(1);
        let centres = [(0.0, 0.0), (3.0, 0.0), (0.0, 3.0)];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..600 {
            let c = i % 3;
            x.push(centres[c].0 + rng.random::<f64>() - 0.5);
            x.push(centres[c].1 + rng.random::<f64>() - 0.5);
            y.push(c);
        }
        let lr = LogisticRegression::fit(&x, 2, &y, 3, LogisticOptions::default()).unwrap();
        assert!(lr.accuracy(&x, &y) > 0.99);
    }

    #[test]
    fn l1_zeroes_irrelevant_features() {
        let mut rng = rng_from_seed(2);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..1000 {
            let signal: f64 = rng.random();
            x.push(signal);
            x.push(rng.random());
            y.push(usize::from(signal > 0.5));
        }
        let opts = LogisticOptions { l1: 0.01, ..LogisticOptions::default() };
        let lr = LogisticRegression::fit(&x, 2, &y, 2, opts).unwrap();
        let imp = lr.feature_importance();
        assert!(imp[0] > 1.0 && imp[1] < 0.05 * imp[0], "{imp:?}");
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(LogisticRegression::fit(&[0.0, 1.0], 1, &[0, 2], 2, LogisticOptions::default()).is_err());
    }
}
