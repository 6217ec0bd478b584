use std::io::Write;

use rand::Rng;

use super::{
    active_counts, build_model, label_targets, permute_dims, st_gap, supervised_on, tc_on, Discriminator,
    LatentKind, LatentNoise, LossReport, ModelConfig, TrainedModel,
};
use crate::datasets::{render_batch, sample_batch, Dataset};
use crate::latent::anneal_scale;
use crate::tensor::{AdamConfig, AdamState, Graph, Tensor};
use crate::{rng_from_seed, Error, Result};

pub const LOG_HEADER: &str = "step,recon,kl,tc,sup,st_gap";

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub recon: f64,
    pub kl: f64,
    pub tc: f64,
    pub sup: f64,
    /// On the probe batch; `None` for Gaussian latents.
    pub st_gap: Option<f64>,
}

impl LogRow {
    pub fn csv(&self) -> String {
        let gap = self.st_gap.map(|g| g.to_string()).unwrap_or_default();
        format!("{},{},{},{},{},{}", self.step, self.recon, self.kl, self.tc, self.sup, gap)
    }
}

pub fn write_log_csv<W: Write>(mut w: W, rows: &[LogRow]) -> std::io::Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv())?;
    }
    Ok(())
}

pub struct TrainOutput {
    pub model: TrainedModel,
    pub log: Vec<LogRow>,
}

/// Labeled observations drawn once before training.
struct LabelPool {
    images: Tensor,
    targets: Tensor,
}

impl LabelPool {
    fn gather<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<(Tensor, Tensor)> {
        let size = self.images.shape()[0];
        let per_img = self.images.len() / size;
        let per_tgt = self.targets.len() / size;
        let mut img = Vec::with_capacity(batch * per_img);
        let mut tgt = Vec::with_capacity(batch * per_tgt);
        for _ in 0..batch {
            let i = rng.random_range(0..size);
            img.extend_from_slice(&self.images.data()[i * per_img..(i + 1) * per_img]);
            tgt.extend_from_slice(&self.targets.data()[i * per_tgt..(i + 1) * per_tgt]);
        }
        let mut ishape = self.images.shape().to_vec();
        ishape[0] = batch;
        let tshape = vec![batch * per_tgt / self.targets.shape()[1], self.targets.shape()[1]];
        Ok((Tensor::new(ishape, img)?, Tensor::new(tshape, tgt)?))
    }
}

pub fn train(config: &ModelConfig, dataset: &dyn Dataset) -> Result<TrainOutput> {
    train_logged(config, dataset, |_| {})
}

/// Runs the configured objective; `on_row` sees every log row as it is
/// produced. Everything random derives from `config.seed`, except the probe
/// batch, which derives from `config.probe_seed`.
pub fn train_logged(
    config: &ModelConfig,
    dataset: &dyn Dataset,
    mut on_row: impl FnMut(&LogRow),
) -> Result<TrainOutput> {
    let (h, w, c) = dataset.image_dims();
    if (h, w, c) != (config.height, config.width, config.channels) {
        return Err(Error::invalid(format!(
            "dataset `{}` renders {h}×{w}×{c}, model expects {}×{}×{}",
            dataset.name(),
            config.height,
            config.width,
            config.channels
        )));
    }
    let mut config = config.clone();
    if let Some(semi) = &mut config.objective.semi {
        if semi.masked && semi.active.is_empty() {
            semi.active = active_counts(dataset.spec(), config.n, config.m)?;
        }
    }
    let mut rng = rng_from_seed(config.seed);
    let mut model = build_model(&config, &mut rng)?;
    let mut adam = AdamState::new(AdamConfig { lr: config.lr, ..AdamConfig::default() }, &trainable(&model));
    let mut disc = config
        .objective
        .tc_gamma
        .map(|_| Discriminator::new(config.n, config.disc_width, config.disc_lr, &mut rng));
    let pool = match &config.objective.semi {
        Some(semi) => {
            let factors: Vec<_> = (0..semi.labeled).map(|_| dataset.sample_factors(&mut rng)).collect();
            let targets = label_targets(dataset.spec(), &factors, config.n, config.m)?;
            let images = render_batch(dataset, factors)?.images;
            Some(LabelPool { images, targets })
        }
        None => None,
    };
    let probe = match config.latent {
        LatentKind::Discrete if config.steps > 0 => {
            Some(sample_batch(dataset, config.probe_size.max(1), &mut rng_from_seed(config.probe_seed))?.images)
        }
        _ => None,
    };

    let mut log = Vec::new();
    let mut last = None;
    for step in 0..config.steps {
        let scale = anneal_scale(&config.schedule, step);
        let batch = sample_batch(dataset, config.batch_size, &mut rng)?;
        let noise = LatentNoise::draw(&config, config.batch_size, scale, &mut rng);

        let mut g = Graph::new();
        let enc = model.encoder.bind(&mut g, true);
        let dec = model.decoder.bind(&mut g, true);
        let v = model.elbo_on(&mut g, &enc, &dec, &batch.images, &noise)?;
        let mut total = v.neg_elbo;
        let mut report = LossReport {
            neg_elbo: g.value(v.neg_elbo).item()?,
            recon: g.value(v.recon).item()?,
            kl: g.value(v.kl).item()?,
            ..LossReport::default()
        };
        if let (Some(gamma), Some(d)) = (config.objective.tc_gamma, &disc) {
            let tc = tc_on(&mut g, d.network(), v.latent, gamma)?;
            report.tc = g.value(tc).item()?;
            total = g.add(total, tc)?;
        }
        if let (Some(semi), Some(pool)) = (&config.objective.semi, &pool) {
            let (images, targets) = pool.gather(config.batch_size, &mut rng)?;
            let ce = supervised_on(&model, &mut g, &enc, &images, &targets)?;
            let sup = g.scale(ce, semi.omega);
            report.sup = g.value(sup).item()?;
            total = g.add(total, sup)?;
        }
        let total_value = g.value(total).item()?;
        if !total_value.is_finite() {
            return Err(Error::Divergence { step });
        }
        let mut grads = g.backward(total)?;
        let latents = g.value(v.latent).clone();
        let gs: Vec<Tensor> = enc
            .iter()
            .chain(&dec)
            .zip(model.encoder.params().iter().chain(model.decoder.params()))
            .map(|(var, p)| grads.take_or_zeros(*var, p.shape()))
            .collect();
        drop(g);
        apply_update(&mut model, &mut adam, &gs)?;

        if let Some(d) = &mut disc {
            let permuted = permute_dims(&latents, &mut rng)?;
            let loss = super::discriminator_step(d, &latents, &permuted)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { step });
            }
        }
        model.steps_completed = step + 1;
        last = Some(report);

        if (step + 1) % config.log_every.max(1) == 0 || step + 1 == config.steps {
            let gap = match &probe {
                Some(p) => Some(st_gap(&model, p, &mut rng_from_seed(config.probe_seed))?),
                None => None,
            };
            let row = LogRow {
                step: step + 1,
                recon: report.recon,
                kl: report.kl,
                tc: report.tc,
                sup: report.sup,
                st_gap: gap,
            };
            on_row(&row);
            log.push(row);
        }
    }
    model.final_losses = last;
    Ok(TrainOutput { model, log })
}

fn trainable(model: &TrainedModel) -> Vec<Tensor> {
    model.encoder.params().iter().chain(model.decoder.params()).cloned().collect()
}

fn apply_update(model: &mut TrainedModel, adam: &mut AdamState, grads: &[Tensor]) -> Result<()> {
    let mut params = trainable(model);
    adam.update(&mut params, grads)?;
    let mut it = params.into_iter();
    for slot in model.encoder.params_mut().iter_mut().chain(model.decoder.params_mut()) {
        *slot = it.next().expect("same count");
    }
    Ok(())
}
