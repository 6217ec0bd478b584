//! Disentanglement metrics, mutual-information estimation, downstream sample
//! efficiency and rank correlation.

mod downstream;
mod logistic;
mod scores;
mod voting;

pub use downstream::{downstream_efficiency, Efficiency, DOWNSTREAM_MIN_ROWS};
pub use logistic::{LogisticOptions, LogisticRegression};
pub use scores::{dci_disentanglement, dci_from_importance, dci_importance, mig, modularity, sap, sap_matrix};
pub use voting::{betavae_metric, factorvae_metric, FnSource, ModelSource, RepresentationSource, VoteOptions};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, FactorKind, FactorSpec, FactorValues};
use crate::models::{elbo_loss, st_gap, ElboMode, LatentKind, TrainedModel};
use crate::{rng_from_seed, Error, Result};

pub const DEFAULT_BINS: usize = 20;

/// Equal-width codes over `[min, max]` of the column.
pub fn discretize(column: &[f64], bins: usize) -> Vec<usize> {
    let bins = bins.max(2);
    let (lo, hi) = column.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    bin_range(column, lo, hi, bins)
}

fn bin_range(column: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let width = hi - lo;
    if !(width > 0.0 && width.is_finite()) {
        return vec![0; column.len()];
    }
    column.iter().map(|&v| (((v - lo) / width * bins as f64).floor().max(0.0) as usize).min(bins - 1)).collect()
}

fn counts(codes: &[usize]) -> Vec<usize> {
    let mut c = vec![0; codes.iter().max().map_or(0, |m| m + 1)];
    for &v in codes {
        c[v] += 1;
    }
    c
}

/// Plug-in entropy in nats.
pub fn entropy(codes: &[usize]) -> f64 {
    let n = codes.len() as f64;
    counts(codes).iter().filter(|&&c| c > 0).map(|&c| -(c as f64 / n) * (c as f64 / n).ln()).sum()
}

pub fn mutual_info(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "mutual_info on columns of different length");
    let n = a.len() as f64;
    let ca = counts(a);
    let cb = counts(b);
    let mut joint = vec![0usize; ca.len() * cb.len()];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * cb.len() + y] += 1;
    }
    let mut mi = 0.0;
    for (i, &na) in ca.iter().enumerate() {
        for (j, &nb) in cb.iter().enumerate() {
            let nab = joint[i * cb.len() + j];
            if nab > 0 {
                mi += nab as f64 / n * (nab as f64 * n / (na as f64 * nb as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// `[n][k]` matrix of `I(code_i; factor_j)`.
pub fn mutual_info_matrix(codes: &[Vec<usize>], factors: &[Vec<usize>]) -> Vec<Vec<f64>> {
    codes.iter().map(|c| factors.iter().map(|f| mutual_info(c, f)).collect()).collect()
}

/// Representations `r(x)` aligned with the factors that generated `x`.
#[derive(Clone, Debug)]
pub struct RepresentationTable {
    n: usize,
    reps: Vec<f64>,
    spec: FactorSpec,
    factors: Vec<FactorValues>,
}

impl RepresentationTable {
    /// `reps` is row-major `[N, n]`.
    pub fn new(reps: Vec<f64>, n: usize, spec: FactorSpec, factors: Vec<FactorValues>) -> Result<Self> {
        if n == 0 || factors.is_empty() || reps.len() != factors.len() * n {
            return Err(Error::invalid(format!(
                "{} representation values for {} rows of width {n}",
                reps.len(),
                factors.len()
            )));
        }
        for f in &factors {
            spec.check(f)?;
        }
        Ok(RepresentationTable { n, reps, spec, factors })
    }

    /// Draws `size` factor settings and represents them through `source`.
    pub fn sample(source: &dyn RepresentationSource, size: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let factors: Vec<FactorValues> = (0..size).map(|_| source.sample_factors(rng)).collect();
        let reps = source.represent(&factors, rng)?;
        Self::new(reps, source.n(), source.spec().clone(), factors)
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.spec.len()
    }

    pub fn spec(&self) -> &FactorSpec {
        &self.spec
    }

    pub fn reps(&self) -> &[f64] {
        &self.reps
    }

    pub fn factors(&self) -> &[FactorValues] {
        &self.factors
    }

    pub fn column(&self, dim: usize) -> Vec<f64> {
        self.reps.chunks_exact(self.n).map(|r| r[dim]).collect()
    }

    pub fn factor_values(&self, factor: usize) -> Vec<f64> {
        self.factors.iter().map(|f| f.0[factor].as_f64()).collect()
    }

    /// Zero-based class labels of a factor and their count. Continuous
    /// factors are binned over their declared range.
    pub fn factor_codes(&self, factor: usize) -> (Vec<usize>, usize) {
        match self.spec.factors()[factor].kind {
            FactorKind::Discrete { cardinality } => (
                self.factors.iter().map(|f| (f.0[factor].as_f64() as usize).saturating_sub(1)).collect(),
                cardinality,
            ),
            FactorKind::Continuous { lo, hi } => (bin_range(&self.factor_values(factor), lo, hi, DEFAULT_BINS), DEFAULT_BINS),
        }
    }

    pub fn rep_codes(&self, bins: usize) -> Vec<Vec<usize>> {
        (0..self.n).map(|d| discretize(&self.column(d), bins)).collect()
    }

    /// `[n][k]` mutual information between binned dims and factors.
    pub fn mutual_info(&self) -> Vec<Vec<f64>> {
        let factors: Vec<Vec<usize>> = (0..self.k()).map(|f| self.factor_codes(f).0).collect();
        mutual_info_matrix(&self.rep_codes(DEFAULT_BINS), &factors)
    }

    /// Rows `idx` as a new table.
    pub fn subset(&self, idx: &[usize]) -> RepresentationTable {
        let mut reps = Vec::with_capacity(idx.len() * self.n);
        for &i in idx {
            reps.extend_from_slice(&self.reps[i * self.n..(i + 1) * self.n]);
        }
        RepresentationTable {
            n: self.n,
            reps,
            spec: self.spec.clone(),
            factors: idx.iter().map(|&i| self.factors[i].clone()).collect(),
        }
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::invalid(format!("spearman needs two equal series of length ≥ 3, got {} and {}", xs.len(), ys.len())));
    }
    match pearson(&ranks(xs), &ranks(ys)) {
        Some(r) => Ok(r),
        None => {
            log::warn!("spearman: constant input, returning 0");
            Ok(0.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub betavae: f64,
    pub factorvae: f64,
    pub mig: f64,
    pub dci: f64,
    pub modularity: f64,
    pub sap: f64,
    pub st_gap: Option<f64>,
    pub recon: f64,
    pub kl: f64,
    pub neg_elbo: f64,
}

pub const METRIC_HEADER: &str = "betavae,factorvae,mig,dci,modularity,sap,st_gap,recon,kl,neg_elbo";

impl MetricReport {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.betavae,
            self.factorvae,
            self.mig,
            self.dci,
            self.modularity,
            self.sap,
            self.st_gap.map(|g| g.to_string()).unwrap_or_default(),
            self.recon,
            self.kl,
            self.neg_elbo
        )
    }

    pub fn scores(&self) -> [(&'static str, f64); 6] {
        [
            ("betavae", self.betavae),
            ("factorvae", self.factorvae),
            ("mig", self.mig),
            ("dci", self.dci),
            ("modularity", self.modularity),
            ("sap", self.sap),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub table_size: usize,
    pub votes: VoteOptions,
    pub probe_size: usize,
    pub probe_seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { table_size: 10_000, votes: VoteOptions::default(), probe_size: 64, probe_seed: 12345 }
    }
}

/// Full report for a trained model. The st_gap, reconstruction and KL terms
/// come from one probe batch drawn from `opts.probe_seed`.
pub fn evaluate(model: &TrainedModel, dataset: &dyn Dataset, opts: &EvalOptions, rng: &mut dyn RngCore) -> Result<MetricReport> {
    Ok(evaluate_with_table(model, dataset, opts, rng)?.0)
}

/// [`evaluate`], also returning the representation table the table-based
/// scores were computed on.
pub fn evaluate_with_table(
    model: &TrainedModel,
    dataset: &dyn Dataset,
    opts: &EvalOptions,
    rng: &mut dyn RngCore,
) -> Result<(MetricReport, RepresentationTable)> {
    let source = ModelSource::new(model, dataset)?;
    let table = RepresentationTable::sample(&source, opts.table_size, rng)?;
    let probe = crate::datasets::sample_batch(dataset, opts.probe_size.max(1), &mut rng_from_seed(opts.probe_seed))?;
    let terms = elbo_loss(model, &probe.images, &mut rng_from_seed(opts.probe_seed), ElboMode::Eval)?;
    let gap = match model.config.latent {
        LatentKind::Discrete => Some(st_gap(model, &probe.images, &mut rng_from_seed(opts.probe_seed))?),
        LatentKind::Gaussian => None,
    };
    let report = MetricReport {
        betavae: betavae_metric(&source, &opts.votes, rng)?,
        factorvae: factorvae_metric(&source, &opts.votes, rng)?,
        mig: mig(&table)?,
        dci: dci_disentanglement(&table)?,
        modularity: modularity(&table)?,
        sap: sap(&table)?,
        st_gap: gap,
        recon: terms.recon,
        kl: terms.kl,
        neg_elbo: terms.neg_elbo,
    };
    Ok((report, table))
}

#[cfg(test)]
mod tests;
