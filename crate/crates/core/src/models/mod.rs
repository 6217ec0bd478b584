//! Encoder/decoder models with Gaussian or ordered-categorical latents, their
//! training objectives and the training loop.

mod config;
mod discriminator;
mod network;
mod persist;
mod train;

pub use config::{Architecture, LatentKind, ModelConfig, Objective, SemiSupervision};
pub use discriminator::{discriminator_step, Discriminator};
pub use network::{build_networks, discriminator_network, Network};
pub use train::{train, train_logged, write_log_csv, LogRow, TrainOutput, LOG_HEADER};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{FactorKind, FactorSpec, FactorValue, FactorValues};
use crate::latent::{self, argmax, sample_gumbel};
use crate::tensor::{Graph, Tensor, Var};
use crate::{Error, Result};

/// Additive logit for masked categories. Finite, so that masked entries get
/// probability exactly 0 without `0 · -inf` in the KL term.
pub const MASK_LOGIT: f64 = -1e30;

/// Noise for one batch: scaled Gumbel draws `[B·n, m]` or standard normal
/// draws `[B, n]`.
#[derive(Clone, Debug, PartialEq)]
pub enum LatentNoise {
    Gumbel(Tensor),
    Normal(Tensor),
}

impl LatentNoise {
    pub fn draw<R: Rng + ?Sized>(config: &ModelConfig, batch: usize, scale: f64, rng: &mut R) -> Self {
        match config.latent {
            LatentKind::Discrete => LatentNoise::Gumbel(sample_gumbel(&[batch * config.n, config.m], scale, rng)),
            LatentKind::Gaussian => {
                let t = if scale == 0.0 {
                    Tensor::zeros(&[batch, config.n])
                } else {
                    Tensor::randn(&[batch, config.n], rng)
                };
                LatentNoise::Normal(t)
            }
        }
    }

    /// Zero noise: deterministic latents.
    pub fn zero(config: &ModelConfig, batch: usize) -> Self {
        match config.latent {
            LatentKind::Discrete => LatentNoise::Gumbel(Tensor::zeros(&[batch * config.n, config.m])),
            LatentKind::Gaussian => LatentNoise::Normal(Tensor::zeros(&[batch, config.n])),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElboMode {
    /// Sample with the given Gumbel scale; Gaussian noise is on for any
    /// nonzero scale.
    Train { scale: f64 },
    /// Deterministic latents.
    Eval,
}

impl ElboMode {
    pub fn scale(self) -> f64 {
        match self {
            ElboMode::Train { scale } => scale,
            ElboMode::Eval => 0.0,
        }
    }
}

/// Batch means of the loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub neg_elbo: f64,
    pub recon: f64,
    pub kl: f64,
    pub tc: f64,
    pub sup: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    pub neg_elbo: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Encoder, decoder and the configuration they were built from.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub encoder: Network,
    pub decoder: Network,
    pub steps_completed: usize,
    pub final_losses: Option<LossReport>,
}

/// Initializes a model with parameters drawn from `rng`.
pub fn build_model<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<TrainedModel> {
    config.validate()?;
    let (encoder, decoder) = build_networks(config, rng);
    Ok(TrainedModel { config: config.clone(), encoder, decoder, steps_completed: 0, final_losses: None })
}

/// Graph nodes of one ELBO evaluation.
pub(crate) struct ElboVars {
    pub neg_elbo: Var,
    pub recon: Var,
    pub kl: Var,
    /// Decoder input `[B, n]`.
    pub latent: Var,
    /// Relaxed sample `[B·n, m]` (discrete only).
    pub z: Option<Var>,
    /// Masked log-probabilities `[B·n, m]` (discrete only).
    pub log_probs: Option<Var>,
    /// Per-pixel Bernoulli negative log-likelihood `[B, C, H, W]`.
    pub recon_elem: Var,
}

fn check_pixels(images: &Tensor, config: &ModelConfig) -> Result<()> {
    let expected = [config.channels, config.height, config.width];
    if images.rank() != 4 || images.shape()[1..] != expected {
        return Err(Error::shape("elbo", format!("images {:?}, expected [B, {expected:?}]", images.shape())));
    }
    if let Some(v) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
    }
    Ok(())
}

impl TrainedModel {
    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    fn active(&self) -> Option<&[usize]> {
        match &self.config.objective.semi {
            Some(s) if s.masked && !s.active.is_empty() => Some(&s.active),
            _ => None,
        }
    }

    /// Additive mask `[B·n, m]` when masking is configured.
    fn mask_tensor(&self, batch: usize) -> Result<Option<Tensor>> {
        let Some(active) = self.active() else { return Ok(None) };
        let m = self.m();
        let mut row_block = Vec::with_capacity(self.n() * m);
        for &mp in active {
            let keep = latent::active_categories(m, mp)?;
            row_block.extend((0..m).map(|j| if keep.contains(&j) { 0.0 } else { MASK_LOGIT }));
        }
        let data = (0..batch).flat_map(|_| row_block.iter().copied()).collect();
        Ok(Some(Tensor::from_parts(vec![batch * self.n(), m], data)))
    }

    /// Encoder head `[B, head]`.
    pub(crate) fn encode_on(&self, g: &mut Graph, enc: &[Var], images: Var) -> Result<Var> {
        self.encoder.forward(g, enc, images)
    }

    /// Reshapes the head to `[B·n, m]` and applies the mask.
    pub(crate) fn discrete_logits_on(&self, g: &mut Graph, head: Var) -> Result<Var> {
        let batch = g.value(head).shape()[0];
        let rows = g.reshape(head, &[batch * self.n(), self.m()])?;
        match self.mask_tensor(batch)? {
            Some(mask) => {
                let mv = g.input(mask);
                g.add(rows, mv)
            }
            None => Ok(rows),
        }
    }

    /// Grid values fed to the decoder, `[m, 1]`.
    fn decoder_grid(&self) -> Tensor {
        let m = self.m();
        let data = (0..m)
            .map(|j| {
                let v = latent::grid_value(j, m);
                if self.config.symmetric { latent::to_symmetric(v) } else { v }
            })
            .collect();
        Tensor::from_parts(vec![m, 1], data)
    }

    /// Maps simplex rows `[B·n, m]` to decoder inputs `[B, n]`.
    fn map_on(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let rows = g.value(z).shape()[0];
        let grid = g.input(self.decoder_grid());
        let f = g.matmul(z, grid)?;
        g.reshape(f, &[rows / self.n(), self.n()])
    }

    fn selector(&self, offset: usize) -> Tensor {
        let n = self.n();
        let mut t = Tensor::zeros(&[2 * n, n]);
        for i in 0..n {
            t.data_mut()[(offset + i) * n + i] = 1.0;
        }
        t
    }

    pub(crate) fn elbo_on(
        &self,
        g: &mut Graph,
        enc: &[Var],
        dec: &[Var],
        images: &Tensor,
        noise: &LatentNoise,
    ) -> Result<ElboVars> {
        check_pixels(images, &self.config)?;
        let batch = images.shape()[0];
        let x = g.input(images.clone());
        let head = self.encode_on(g, enc, x)?;
        let (latent, kl, z, log_probs) = match (self.config.latent, noise) {
            (LatentKind::Discrete, LatentNoise::Gumbel(gn)) => {
                let logits = self.discrete_logits_on(g, head)?;
                let gv = g.input(gn.clone());
                let noisy = g.add(logits, gv)?;
                let y = g.scale(noisy, 1.0 / self.config.schedule.temperature);
                let z = g.softmax(y);
                let latent = self.map_on(g, z)?;
                let logp = g.log_softmax(logits);
                let p = g.exp(logp);
                let shifted = g.add_scalar(logp, (self.m() as f64).ln());
                let terms = g.mul(p, shifted)?;
                let total = g.sum(terms);
                let kl = g.scale(total, 1.0 / batch as f64);
                (latent, kl, Some(z), Some(logp))
            }
            (LatentKind::Gaussian, LatentNoise::Normal(eps)) => {
                let sel_mu = g.input(self.selector(0));
                let sel_lv = g.input(self.selector(self.n()));
                let mu = g.matmul(head, sel_mu)?;
                let logvar = g.matmul(head, sel_lv)?;
                let half = g.scale(logvar, 0.5);
                let sigma = g.exp(half);
                let ev = g.input(eps.clone());
                let spread = g.mul(sigma, ev)?;
                let latent = g.add(mu, spread)?;
                let mu2 = g.mul(mu, mu)?;
                let var = g.exp(logvar);
                let s = g.add(mu2, var)?;
                let s = g.sub(s, logvar)?;
                let s = g.add_scalar(s, -1.0);
                let total = g.sum(s);
                let kl = g.scale(total, 0.5 / batch as f64);
                (latent, kl, None, None)
            }
            _ => return Err(Error::invalid("noise kind does not match the latent kind")),
        };
        let (recon, recon_elem) = self.recon_on(g, dec, latent, x)?;
        let neg_elbo = g.add(recon, kl)?;
        Ok(ElboVars { neg_elbo, recon, kl, latent, z, log_probs, recon_elem })
    }

    fn recon_on(&self, g: &mut Graph, dec: &[Var], latent: Var, x: Var) -> Result<(Var, Var)> {
        let batch = g.value(latent).shape()[0];
        let logits = self.decoder.forward(g, dec, latent)?;
        let elem = g.bce_with_logits(logits, x)?;
        let total = g.sum(elem);
        Ok((g.scale(total, 1.0 / batch as f64), elem))
    }

    /// Deterministic representation `[B, n]`: `f(softmax(log α))` on the unit
    /// interval for categorical latents, the mean for Gaussian ones.
    pub fn represent(&self, images: &Tensor) -> Result<Tensor> {
        let mut out = Vec::with_capacity(images.shape()[0] * self.n());
        for chunk in batches(images, 256)? {
            let mut g = Graph::new();
            let enc = self.encoder.bind(&mut g, false);
            let x = g.input(chunk);
            let head = self.encode_on(&mut g, &enc, x)?;
            match self.config.latent {
                LatentKind::Discrete => {
                    let logits = self.discrete_logits_on(&mut g, head)?;
                    let p = g.softmax(logits);
                    out.extend(g.value(p).rows().map(latent::map_f));
                }
                LatentKind::Gaussian => {
                    let n = self.n();
                    out.extend(g.value(head).rows().flat_map(|r| r[..n].to_vec()));
                }
            }
        }
        Tensor::new(vec![images.shape()[0], self.n()], out)
    }

    /// Per-dimension category probabilities `[B·n, m]`.
    pub fn probabilities(&self, images: &Tensor) -> Result<Tensor> {
        if self.config.latent != LatentKind::Discrete {
            return Err(Error::invalid("category probabilities need a discrete latent"));
        }
        let mut g = Graph::new();
        let enc = self.encoder.bind(&mut g, false);
        let x = g.input(images.clone());
        let head = self.encode_on(&mut g, &enc, x)?;
        let logits = self.discrete_logits_on(&mut g, head)?;
        let p = g.softmax(logits);
        Ok(g.value(p).clone())
    }

    /// Decoder Bernoulli means for latent inputs `[B, n]`.
    pub fn decode(&self, latents: &Tensor) -> Result<Tensor> {
        Ok(self.decoder.apply(latents)?.map(|l| 1.0 / (1.0 + (-l).exp())))
    }
}

/// Splits `[B, ...]` into chunks of at most `size` samples.
fn batches(images: &Tensor, size: usize) -> Result<Vec<Tensor>> {
    let b = images.shape()[0];
    let per: usize = images.shape()[1..].iter().product();
    let mut out = Vec::new();
    for start in (0..b).step_by(size) {
        let end = (start + size).min(b);
        let mut shape = images.shape().to_vec();
        shape[0] = end - start;
        out.push(Tensor::new(shape, images.data()[start * per..end * per].to_vec())?);
    }
    Ok(out)
}

/// Negative ELBO with its reconstruction and KL parts, as batch means.
pub fn elbo_loss<R: Rng + ?Sized>(
    model: &TrainedModel,
    images: &Tensor,
    rng: &mut R,
    mode: ElboMode,
) -> Result<ElboTerms> {
    let noise = LatentNoise::draw(&model.config, images.shape().first().copied().unwrap_or(0), mode.scale(), rng);
    elbo_with_noise(model, images, &noise)
}

pub fn elbo_with_noise(model: &TrainedModel, images: &Tensor, noise: &LatentNoise) -> Result<ElboTerms> {
    let mut g = Graph::new();
    let enc = model.encoder.bind(&mut g, false);
    let dec = model.decoder.bind(&mut g, false);
    let v = model.elbo_on(&mut g, &enc, &dec, images, noise)?;
    Ok(ElboTerms {
        neg_elbo: g.value(v.neg_elbo).item()?,
        recon: g.value(v.recon).item()?,
        kl: g.value(v.kl).item()?,
    })
}

/// Straight-through gap at the final Gumbel scale of the model's schedule.
pub fn st_gap<R: Rng + ?Sized>(model: &TrainedModel, images: &Tensor, rng: &mut R) -> Result<f64> {
    st_gap_with_scale(model, images, model.config.schedule.final_scale, rng)
}

/// Batch mean of `|L_ST - L|`: the per-image negative ELBO with every latent
/// row rounded to its argmax one-hot against the relaxed one, on the same
/// noise draw.
pub fn st_gap_with_scale<R: Rng + ?Sized>(
    model: &TrainedModel,
    images: &Tensor,
    scale: f64,
    rng: &mut R,
) -> Result<f64> {
    if model.config.latent != LatentKind::Discrete {
        return Err(Error::invalid("the straight-through gap is defined for discrete latents only"));
    }
    let batch = images.shape().first().copied().unwrap_or(0);
    let noise = LatentNoise::draw(&model.config, batch, scale, rng);
    let mut g = Graph::new();
    let enc = model.encoder.bind(&mut g, false);
    let dec = model.decoder.bind(&mut g, false);
    let v = model.elbo_on(&mut g, &enc, &dec, images, &noise)?;
    let (n, m) = (model.n(), model.m());
    let log_m = (m as f64).ln();

    let per_image = |t: &Tensor| -> Vec<f64> { t.data().chunks_exact(t.len() / batch).map(|c| c.iter().sum()).collect() };
    let recon = per_image(g.value(v.recon_elem));
    let logp = g.value(v.log_probs.expect("discrete")).clone();
    let kl: Vec<f64> = logp
        .data()
        .chunks_exact(n * m)
        .map(|img| {
            img.iter()
                .map(|&lp| {
                    let p = lp.exp();
                    if p == 0.0 { 0.0 } else { p * (lp + log_m) }
                })
                .sum()
        })
        .collect();

    let z = g.value(v.z.expect("discrete")).clone();
    let mut rounded = Tensor::zeros(z.shape());
    for (i, row) in z.rows().enumerate() {
        rounded.data_mut()[i * m + argmax(row)] = 1.0;
    }
    let zr = g.input(rounded);
    let latent = model.map_on(&mut g, zr)?;
    let x = g.input(images.clone());
    let (_, elem_st) = model.recon_on(&mut g, &dec, latent, x)?;
    let recon_st = per_image(g.value(elem_st));
    let kl_st = n as f64 * log_m;

    let total: f64 = (0..batch).map(|i| ((recon_st[i] + kl_st) - (recon[i] + kl[i])).abs()).sum();
    Ok(total / batch as f64)
}

/// Shuffles every column of `[B, n]` independently.
pub fn permute_dims<R: Rng + ?Sized>(latents: &Tensor, rng: &mut R) -> Result<Tensor> {
    let &[b, n] = latents.shape() else {
        return Err(Error::shape("permute_dims", format!("expected [B, n], got {:?}", latents.shape())));
    };
    if b < 2 {
        return Err(Error::invalid("permuting dimensions needs a batch of at least 2"));
    }
    let mut out = latents.clone();
    let mut order: Vec<usize> = (0..b).collect();
    for j in 0..n {
        order.shuffle(rng);
        for (dst, &src) in order.iter().enumerate() {
            out.data_mut()[dst * n + j] = latents.data()[src * n + j];
        }
    }
    Ok(out)
}

/// Total-correlation estimate `γ · mean(logit_real - logit_permuted)` with
/// the discriminator held constant.
pub(crate) fn tc_on(g: &mut Graph, disc: &Network, latent: Var, gamma: f64) -> Result<Var> {
    let dv = disc.bind(g, false);
    let logits = disc.forward(g, &dv, latent)?;
    let sign = g.input(Tensor::new(vec![2, 1], vec![1.0, -1.0])?);
    let ratio = g.matmul(logits, sign)?;
    let mean = g.mean(ratio);
    Ok(g.scale(mean, gamma))
}

/// `(total, negative ELBO, total-correlation part)`.
pub fn factor_dvae_loss<R: Rng + ?Sized>(
    model: &TrainedModel,
    disc: &Discriminator,
    images: &Tensor,
    gamma: f64,
    rng: &mut R,
    mode: ElboMode,
) -> Result<(f64, f64, f64)> {
    let noise = LatentNoise::draw(&model.config, images.shape().first().copied().unwrap_or(0), mode.scale(), rng);
    let mut g = Graph::new();
    let enc = model.encoder.bind(&mut g, false);
    let dec = model.decoder.bind(&mut g, false);
    let v = model.elbo_on(&mut g, &enc, &dec, images, &noise)?;
    let tc = tc_on(&mut g, disc.network(), v.latent, gamma)?;
    let total = g.add(v.neg_elbo, tc)?;
    Ok((g.value(total).item()?, g.value(v.neg_elbo).item()?, g.value(tc).item()?))
}

/// Active category count per latent dimension when masking: a factor's
/// cardinality for the leading supervised dimensions, `m` elsewhere.
pub fn active_counts(spec: &FactorSpec, n: usize, m: usize) -> Result<Vec<usize>> {
    if spec.len() > n {
        return Err(Error::invalid(format!("{} factors cannot supervise {n} latent dimensions", spec.len())));
    }
    let mut out = vec![m; n];
    for (slot, f) in out.iter_mut().zip(spec.factors()) {
        if let Some(c) = f.cardinality() {
            if c > m {
                return Err(Error::invalid(format!("factor `{}` has {c} values but only {m} categories", f.name)));
            }
            *slot = c.max(2);
        }
    }
    Ok(out)
}

/// Zero-based target category of one factor value.
pub fn label_bin(kind: FactorKind, value: FactorValue, m: usize) -> Result<usize> {
    match (kind, value) {
        (FactorKind::Discrete { cardinality }, FactorValue::Index(i)) => {
            if i < 1 || i > cardinality {
                return Err(Error::invalid(format!("factor index {i} outside 1..={cardinality}")));
            }
            Ok(latent::label_category(i - 1, cardinality, m))
        }
        (FactorKind::Continuous { lo, hi }, FactorValue::Real(x)) => {
            if !(lo..=hi).contains(&x) {
                return Err(Error::invalid(format!("factor value {x} outside [{lo}, {hi}]")));
            }
            Ok((((x - lo) / (hi - lo)) * (m - 1) as f64).round() as usize)
        }
        _ => Err(Error::invalid("factor value of the wrong kind")),
    }
}

/// One-hot targets `[B·n, m]` for the leading `spec.len()` dimensions; rows
/// of unsupervised dimensions stay zero.
pub fn label_targets(spec: &FactorSpec, factors: &[FactorValues], n: usize, m: usize) -> Result<Tensor> {
    if spec.len() > n {
        return Err(Error::invalid(format!("{} factors cannot supervise {n} latent dimensions", spec.len())));
    }
    if factors.is_empty() {
        return Err(Error::invalid("no labeled samples"));
    }
    let mut t = Tensor::zeros(&[factors.len() * n, m]);
    for (b, fv) in factors.iter().enumerate() {
        spec.check(fv)?;
        for (i, (f, v)) in spec.factors().iter().zip(fv.values()).enumerate() {
            let j = label_bin(f.kind, *v, m)?;
            t.data_mut()[(b * n + i) * m + j] = 1.0;
        }
    }
    Ok(t)
}

/// Cross entropy of the targets under the model's category probabilities,
/// summed over dimensions and averaged over the batch.
pub(crate) fn supervised_on(
    model: &TrainedModel,
    g: &mut Graph,
    enc: &[Var],
    images: &Tensor,
    targets: &Tensor,
) -> Result<Var> {
    check_pixels(images, &model.config)?;
    let batch = images.shape()[0];
    let x = g.input(images.clone());
    let head = model.encode_on(g, enc, x)?;
    let logits = model.discrete_logits_on(g, head)?;
    let logp = g.log_softmax(logits);
    let tv = g.input(targets.clone());
    let picked = g.mul(logp, tv)?;
    let total = g.sum(picked);
    Ok(g.scale(total, -1.0 / batch as f64))
}

/// `(total, negative ELBO, ω · cross entropy)` on one labeled batch.
pub fn semi_sup_loss<R: Rng + ?Sized>(
    model: &TrainedModel,
    spec: &FactorSpec,
    images: &Tensor,
    factors: &[FactorValues],
    omega: f64,
    rng: &mut R,
    mode: ElboMode,
) -> Result<(f64, f64, f64)> {
    if model.config.latent != LatentKind::Discrete {
        return Err(Error::invalid("label supervision needs a discrete latent"));
    }
    if !(omega >= 0.0) {
        return Err(Error::invalid(format!("omega must be nonnegative, got {omega}")));
    }
    let targets = label_targets(spec, factors, model.n(), model.m())?;
    let noise = LatentNoise::draw(&model.config, images.shape()[0], mode.scale(), rng);
    let mut g = Graph::new();
    let enc = model.encoder.bind(&mut g, false);
    let dec = model.decoder.bind(&mut g, false);
    let v = model.elbo_on(&mut g, &enc, &dec, images, &noise)?;
    let ce = supervised_on(model, &mut g, &enc, images, &targets)?;
    let sup = g.scale(ce, omega);
    let total = g.add(v.neg_elbo, sup)?;
    Ok((g.value(total).item()?, g.value(v.neg_elbo).item()?, g.value(sup).item()?))
}

/// Largest relative error between the analytic gradient of the negative
/// ELBO and central differences, at the listed `(encoder parameter, element)`
/// probes and with the noise held fixed.
pub fn objective_gradient_check(
    model: &TrainedModel,
    images: &Tensor,
    noise: &LatentNoise,
    probes: &[(usize, usize)],
    h: f64,
) -> Result<f64> {
    let eval = |params: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let enc: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
        let dec = model.decoder.bind(&mut g, false);
        let v = model.elbo_on(&mut g, &enc, &dec, images, noise)?;
        let loss = g.value(v.neg_elbo).item()?;
        let mut grads = g.backward(v.neg_elbo)?;
        Ok((loss, enc.iter().zip(params).map(|(e, p)| grads.take_or_zeros(*e, p.shape())).collect()))
    };
    let base = model.encoder.params().to_vec();
    let (_, analytic) = eval(&base)?;
    let mut worst = 0.0f64;
    for &(k, i) in probes {
        if k >= base.len() || i >= base[k].len() {
            return Err(Error::invalid(format!("probe ({k}, {i}) outside the encoder parameters")));
        }
        let mut probe = base.clone();
        probe[k].data_mut()[i] += h;
        let up = elbo_with_params(model, &probe, images, noise)?;
        probe[k].data_mut()[i] -= 2.0 * h;
        let down = elbo_with_params(model, &probe, images, noise)?;
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[k].data()[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

fn elbo_with_params(model: &TrainedModel, enc_params: &[Tensor], images: &Tensor, noise: &LatentNoise) -> Result<f64> {
    let mut g = Graph::new();
    let enc: Vec<Var> = enc_params.iter().map(|p| g.input(p.clone())).collect();
    let dec = model.decoder.bind(&mut g, false);
    let v = model.elbo_on(&mut g, &enc, &dec, images, noise)?;
    g.value(v.neg_elbo).item()
}
