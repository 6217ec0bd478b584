//! Ground-truth-factor datasets: procedural renderers sampled straight from
//! their generative model, and a loader for exported record files.

mod circles;
mod external;
mod gridworld;

pub use circles::Circles;
pub use external::{export_records, load_external, read_external, write_external, ExternalDataset, DLDS_MAGIC, DLDS_VERSION};
pub use gridworld::{GridFactor, Gridworld};

use rand::Rng;

use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FactorKind {
    Discrete { cardinality: usize },
    Continuous { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub name: String,
    pub kind: FactorKind,
}

impl Factor {
    pub fn discrete(name: &str, cardinality: usize) -> Self {
        Factor { name: name.to_string(), kind: FactorKind::Discrete { cardinality } }
    }

    pub fn continuous(name: &str, lo: f64, hi: f64) -> Self {
        Factor { name: name.to_string(), kind: FactorKind::Continuous { lo, hi } }
    }

    pub fn cardinality(&self) -> Option<usize> {
        match self.kind {
            FactorKind::Discrete { cardinality } => Some(cardinality),
            FactorKind::Continuous { .. } => None,
        }
    }
}

/// Ordered list of named factors.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorSpec {
    factors: Vec<Factor>,
}

impl FactorSpec {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("a factor spec needs at least one factor"));
        }
        for (i, f) in factors.iter().enumerate() {
            if factors[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::invalid(format!("duplicate factor name `{}`", f.name)));
            }
            match f.kind {
                FactorKind::Discrete { cardinality } if cardinality < 1 => {
                    return Err(Error::invalid(format!("factor `{}` has cardinality 0", f.name)));
                }
                FactorKind::Continuous { lo, hi } if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                    return Err(Error::invalid(format!("factor `{}` has empty range [{lo}, {hi}]", f.name)));
                }
                _ => {}
            }
        }
        Ok(FactorSpec { factors })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn is_discrete(&self) -> bool {
        self.factors.iter().all(|f| f.cardinality().is_some())
    }

    /// Product of the cardinalities, or `None` with any continuous factor.
    pub fn grid_size(&self) -> Option<usize> {
        self.factors.iter().map(Factor::cardinality).product()
    }

    pub fn check(&self, values: &FactorValues) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::invalid(format!("{} factor values for {} factors", values.len(), self.len())));
        }
        for (f, v) in self.factors.iter().zip(values.values()) {
            match (f.kind, *v) {
                (FactorKind::Discrete { cardinality }, FactorValue::Index(i)) => {
                    if i < 1 || i > cardinality {
                        return Err(Error::invalid(format!(
                            "factor `{}` index {i} outside 1..={cardinality}",
                            f.name
                        )));
                    }
                }
                (FactorKind::Continuous { lo, hi }, FactorValue::Real(x)) => {
                    if !(lo..=hi).contains(&x) {
                        return Err(Error::invalid(format!("factor `{}` value {x} outside [{lo}, {hi}]", f.name)));
                    }
                }
                _ => return Err(Error::invalid(format!("factor `{}` has a value of the wrong kind", f.name))),
            }
        }
        Ok(())
    }

    /// Independent uniform draw of every factor.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FactorValues {
        FactorValues(self.factors.iter().map(|f| sample_factor(f, rng)).collect())
    }

    /// Every combination of a discrete spec, last factor varying fastest.
    pub fn enumerate(&self) -> Option<Vec<FactorValues>> {
        let cards: Vec<usize> = self.factors.iter().map(Factor::cardinality).collect::<Option<_>>()?;
        let total: usize = cards.iter().product();
        let mut out = Vec::with_capacity(total);
        for mut k in 0..total {
            let mut idx = vec![0; cards.len()];
            for (slot, &c) in idx.iter_mut().zip(&cards).rev() {
                *slot = k % c + 1;
                k /= c;
            }
            out.push(FactorValues::discrete(&idx));
        }
        Some(out)
    }
}

pub(crate) fn sample_factor<R: Rng + ?Sized>(f: &Factor, rng: &mut R) -> FactorValue {
    match f.kind {
        FactorKind::Discrete { cardinality } => FactorValue::Index(rng.random_range(1..=cardinality)),
        FactorKind::Continuous { lo, hi } => FactorValue::Real(rng.random_range(lo..=hi)),
    }
}

/// One factor value: a 1-based index or a real.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FactorValue {
    Index(usize),
    Real(f64),
}

impl FactorValue {
    pub fn as_f64(&self) -> f64 {
        match *self {
            FactorValue::Index(i) => i as f64,
            FactorValue::Real(x) => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorValues(pub Vec<FactorValue>);

impl FactorValues {
    pub fn discrete(indices: &[usize]) -> Self {
        FactorValues(indices.iter().map(|&i| FactorValue::Index(i)).collect())
    }

    pub fn values(&self) -> &[FactorValue] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, k: usize) -> FactorValue {
        self.0[k]
    }

    pub fn set(&mut self, k: usize, v: FactorValue) {
        self.0[k] = v;
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(FactorValue::as_f64).collect()
    }
}

/// A rendered image of shape `[H, W, C]` with its factors.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub image: Tensor,
    pub factors: FactorValues,
}

pub trait Dataset: Send + Sync {
    fn name(&self) -> &str;

    fn spec(&self) -> &FactorSpec;

    /// `(H, W, C)`.
    fn image_dims(&self) -> (usize, usize, usize);

    /// Image of shape `[H, W, C]` for the given factors.
    fn render(&self, factors: &FactorValues) -> Result<Tensor>;

    fn sample_factors(&self, rng: &mut dyn rand::RngCore) -> FactorValues {
        self.spec().sample(rng)
    }

    fn observe(&self, factors: FactorValues) -> Result<Observation> {
        let image = self.render(&factors)?;
        Ok(Observation { image, factors })
    }
}

/// Images as `[B, C, H, W]` plus their factors.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub factors: Vec<FactorValues>,
}

/// Draws `batch_size` observations and stacks them channel-first.
pub fn sample_batch(dataset: &dyn Dataset, batch_size: usize, rng: &mut dyn rand::RngCore) -> Result<Batch> {
    if batch_size < 1 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let factors: Vec<FactorValues> = (0..batch_size).map(|_| dataset.sample_factors(rng)).collect();
    render_batch(dataset, factors)
}

/// Renders the given factor tuples into a channel-first batch.
pub fn render_batch(dataset: &dyn Dataset, factors: Vec<FactorValues>) -> Result<Batch> {
    let (h, w, c) = dataset.image_dims();
    let mut data = Vec::with_capacity(factors.len() * h * w * c);
    for f in &factors {
        let img = dataset.render(f)?;
        data.extend(hwc_to_chw(img.data(), h, w, c));
    }
    Ok(Batch { images: Tensor::new(vec![factors.len(), c, h, w], data)?, factors })
}

pub(crate) fn hwc_to_chw(src: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    if c == 1 {
        return src.to_vec();
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out[(ch * h + y) * w + x] = src[(y * w + x) * c + ch];
            }
        }
    }
    out
}

/// Fraction of the 4×4 subpixel centres of every pixel for which `inside`
/// holds; coordinates are in pixel units with the origin at the top-left.
pub(crate) fn coverage(h: usize, w: usize, inside: impl Fn(f64, f64) -> bool) -> Vec<f64> {
    const SUB: usize = 4;
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut hits = 0;
            for sy in 0..SUB {
                for sx in 0..SUB {
                    let px = c as f64 + (sx as f64 + 0.5) / SUB as f64;
                    let py = r as f64 + (sy as f64 + 0.5) / SUB as f64;
                    if inside(px, py) {
                        hits += 1;
                    }
                }
            }
            out[r * w + c] = hits as f64 / (SUB * SUB) as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn spec_validation() {
        assert!(FactorSpec::new(vec![]).is_err());
        assert!(FactorSpec::new(vec![Factor::discrete("a", 2), Factor::discrete("a", 3)]).is_err());
        assert!(FactorSpec::new(vec![Factor::discrete("a", 0)]).is_err());
        assert!(FactorSpec::new(vec![Factor::continuous("a", 1.0, 1.0)]).is_err());
    }

    #[test]
    fn value_checks() {
        let spec = FactorSpec::new(vec![Factor::discrete("a", 3), Factor::continuous("b", 0.0, 1.0)]).unwrap();
        assert!(spec.check(&FactorValues(vec![FactorValue::Index(3), FactorValue::Real(0.5)])).is_ok());
        assert!(spec.check(&FactorValues(vec![FactorValue::Index(0), FactorValue::Real(0.5)])).is_err());
        assert!(spec.check(&FactorValues(vec![FactorValue::Index(1), FactorValue::Real(1.5)])).is_err());
        assert!(spec.check(&FactorValues(vec![FactorValue::Real(1.0), FactorValue::Real(0.5)])).is_err());
    }

    #[test]
    fn enumeration_order() {
        let spec = FactorSpec::new(vec![Factor::discrete("a", 2), Factor::discrete("b", 3)]).unwrap();
        let all = spec.enumerate().unwrap();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], FactorValues::discrete(&[1, 1]));
        assert_eq!(all[1], FactorValues::discrete(&[1, 2]));
        assert_eq!(all[5], FactorValues::discrete(&[2, 3]));
    }

    #[test]
    fn uniform_discrete_sampling() {
        let spec = FactorSpec::new(vec![Factor::discrete("a", 4)]).unwrap();
        let mut rng = rng_from_seed(8);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            if let FactorValue::Index(i) = spec.sample(&mut rng).get(0) {
                counts[i - 1] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn channel_reordering() {
        let src = [1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0];
        assert_eq!(hwc_to_chw(&src, 2, 2, 2), vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0]);
    }
}
