use rand::{Rng, RngCore};

use super::logistic::{LogisticOptions, LogisticRegression};
use crate::datasets::{render_batch, Dataset, FactorSpec, FactorValues};
use crate::models::TrainedModel;
use crate::{Error, Result};

/// Anything that can produce representations for chosen factor settings.
pub trait RepresentationSource {
    fn spec(&self) -> &FactorSpec;
    fn n(&self) -> usize;
    /// Row-major `[factors.len(), n]`.
    fn represent(&self, factors: &[FactorValues], rng: &mut dyn RngCore) -> Result<Vec<f64>>;
    fn sample_factors(&self, rng: &mut dyn RngCore) -> FactorValues {
        self.spec().sample(rng)
    }
}

/// Renders through a dataset and encodes with a trained model.
pub struct ModelSource<'a> {
    model: &'a TrainedModel,
    dataset: &'a dyn Dataset,
}

impl<'a> ModelSource<'a> {
    pub fn new(model: &'a TrainedModel, dataset: &'a dyn Dataset) -> Result<Self> {
        let c = &model.config;
        if dataset.image_dims() != (c.height, c.width, c.channels) {
            return Err(Error::invalid(format!(
                "dataset `{}` renders {:?}, model expects {}×{}×{}",
                dataset.name(),
                dataset.image_dims(),
                c.height,
                c.width,
                c.channels
            )));
        }
        Ok(ModelSource { model, dataset })
    }
}

impl RepresentationSource for ModelSource<'_> {
    fn spec(&self) -> &FactorSpec {
        self.dataset.spec()
    }

    fn n(&self) -> usize {
        self.model.n()
    }

    fn represent(&self, factors: &[FactorValues], _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(factors.len() * self.n());
        for chunk in factors.chunks(4096) {
            let batch = render_batch(self.dataset, chunk.to_vec())?;
            out.extend_from_slice(self.model.represent(&batch.images)?.data());
        }
        Ok(out)
    }

    fn sample_factors(&self, rng: &mut dyn RngCore) -> FactorValues {
        self.dataset.sample_factors(rng)
    }
}

/// Representations computed by a closure, for synthetic studies.
pub struct FnSource<F> {
    spec: FactorSpec,
    n: usize,
    f: F,
}

impl<F: Fn(&FactorValues, &mut dyn RngCore) -> Vec<f64>> FnSource<F> {
    pub fn new(spec: FactorSpec, n: usize, f: F) -> Self {
        FnSource { spec, n, f }
    }
}

impl<F: Fn(&FactorValues, &mut dyn RngCore) -> Vec<f64>> RepresentationSource for FnSource<F> {
    fn spec(&self) -> &FactorSpec {
        &self.spec
    }

    fn n(&self) -> usize {
        self.n
    }

    fn represent(&self, factors: &[FactorValues], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(factors.len() * self.n);
        for fv in factors {
            let r = (self.f)(fv, rng);
            if r.len() != self.n {
                return Err(Error::invalid(format!("representation of width {} from a source of width {}", r.len(), self.n)));
            }
            out.extend(r);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoteOptions {
    pub train: usize,
    pub eval: usize,
    /// Samples per vote.
    pub batch: usize,
    pub prune: usize,
    pub prune_threshold: f64,
}

impl Default for VoteOptions {
    fn default() -> Self {
        VoteOptions { train: 10_000, eval: 5_000, batch: 64, prune: 10_000, prune_threshold: 0.05 }
    }
}

impl VoteOptions {
    fn check(&self, source: &dyn RepresentationSource) -> Result<()> {
        if source.spec().len() < 2 {
            return Err(Error::invalid("vote-based metrics need at least two factors"));
        }
        if self.train == 0 || self.eval == 0 || self.batch == 0 {
            return Err(Error::invalid("vote counts and batch size must be positive"));
        }
        Ok(())
    }
}

const VOTE_CHUNK: usize = 32;

/// Draws `votes` groups of factor settings via `group`, represents them in
/// chunks and folds each group's representations into a vote with `reduce`.
fn collect_votes<T>(
    source: &dyn RepresentationSource,
    votes: usize,
    per_vote: usize,
    rng: &mut dyn RngCore,
    mut group: impl FnMut(&mut dyn RngCore) -> (usize, Vec<FactorValues>),
    mut reduce: impl FnMut(usize, &[f64]) -> T,
) -> Result<Vec<T>> {
    let n = source.n();
    let mut out = Vec::with_capacity(votes);
    let mut done = 0;
    while done < votes {
        let take = VOTE_CHUNK.min(votes - done);
        let mut labels = Vec::with_capacity(take);
        let mut factors = Vec::with_capacity(take * per_vote);
        for _ in 0..take {
            let (label, fs) = group(rng);
            labels.push(label);
            factors.extend(fs);
        }
        let reps = source.represent(&factors, rng)?;
        for (label, chunk) in labels.into_iter().zip(reps.chunks_exact(per_vote * n)) {
            out.push(reduce(label, chunk));
        }
        done += take;
    }
    Ok(out)
}

/// Held-out accuracy of a linear classifier that recovers which factor a set
/// of sample pairs had in common from their mean absolute differences.
pub fn betavae_metric(source: &dyn RepresentationSource, opts: &VoteOptions, rng: &mut dyn RngCore) -> Result<f64> {
    opts.check(source)?;
    let k = source.spec().len();
    let n = source.n();
    let b = opts.batch;
    let votes = collect_votes(
        source,
        opts.train + opts.eval,
        2 * b,
        rng,
        |rng| {
            let f = rng.random_range(0..k);
            let mut fs = Vec::with_capacity(2 * b);
            for _ in 0..b {
                let a = source.sample_factors(rng);
                let mut c = source.sample_factors(rng);
                c.set(f, a.get(f));
                fs.push(a);
                fs.push(c);
            }
            (f, fs)
        },
        |f, reps| {
            let mut feature = vec![0.0; n];
            for pair in reps.chunks_exact(2 * n) {
                for (d, slot) in feature.iter_mut().enumerate() {
                    *slot += (pair[d] - pair[n + d]).abs() / b as f64;
                }
            }
            (f, feature)
        },
    )?;
    let (train, eval) = votes.split_at(opts.train);
    let flat = |v: &[(usize, Vec<f64>)]| -> (Vec<f64>, Vec<usize>) {
        (v.iter().flat_map(|(_, x)| x.iter().copied()).collect(), v.iter().map(|(y, _)| *y).collect())
    };
    let (xt, yt) = flat(train);
    let (xe, ye) = flat(eval);
    let lr = LogisticRegression::fit(&xt, n, &yt, k, LogisticOptions::default())?;
    Ok(lr.accuracy(&xe, &ye))
}

/// Majority-vote accuracy of the map from the least-varying normalized dim to
/// the factor held fixed. Dims whose variance on a prune sample falls below
/// the threshold never receive votes.
pub fn factorvae_metric(source: &dyn RepresentationSource, opts: &VoteOptions, rng: &mut dyn RngCore) -> Result<f64> {
    opts.check(source)?;
    let k = source.spec().len();
    let n = source.n();
    let prune: Vec<FactorValues> = (0..opts.prune.max(2)).map(|_| source.sample_factors(rng)).collect();
    let reps = source.represent(&prune, rng)?;
    let variance = column_variance(&reps, n);
    let active: Vec<usize> = (0..n).filter(|&d| variance[d] >= opts.prune_threshold).collect();
    if active.is_empty() {
        log::warn!("factorvae: every dim falls below the prune threshold, scoring 0");
        return Ok(0.0);
    }
    let scale: Vec<f64> = variance.iter().map(|v| v.sqrt()).collect();
    let b = opts.batch;
    let votes = collect_votes(
        source,
        opts.train + opts.eval,
        b,
        rng,
        |rng| {
            let f = rng.random_range(0..k);
            let fixed = source.sample_factors(rng).get(f);
            let fs = (0..b)
                .map(|_| {
                    let mut s = source.sample_factors(rng);
                    s.set(f, fixed);
                    s
                })
                .collect();
            (f, fs)
        },
        |f, reps| {
            let var = column_variance(reps, n);
            let dim = active
                .iter()
                .copied()
                .min_by(|&a, &c| (var[a] / (scale[a] * scale[a])).total_cmp(&(var[c] / (scale[c] * scale[c]))))
                .expect("non-empty");
            (dim, f)
        },
    )?;
    let (train, eval) = votes.split_at(opts.train);
    let mut table = vec![vec![0usize; k]; n];
    for &(d, f) in train {
        table[d][f] += 1;
    }
    let majority: Vec<usize> = table
        .iter()
        .map(|row| {
            let best = row.iter().max().copied().unwrap_or(0);
            row.iter().position(|&v| v == best).unwrap_or(0)
        })
        .collect();
    let hits = eval.iter().filter(|&&(d, f)| majority[d] == f).count();
    Ok(hits as f64 / eval.len() as f64)
}

fn column_variance(reps: &[f64], n: usize) -> Vec<f64> {
    let rows = (reps.len() / n) as f64;
    let mut mean = vec![0.0; n];
    for r in reps.chunks_exact(n) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / rows;
        }
    }
    let mut var = vec![0.0; n];
    for r in reps.chunks_exact(n) {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m) / rows;
        }
    }
    var
}
