use serde::{Deserialize, Serialize};

use crate::latent::AnnealSchedule;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKind {
    Gaussian,
    Discrete,
}

impl LatentKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(LatentKind::Gaussian),
            "discrete" => Ok(LatentKind::Discrete),
            other => Err(Error::invalid(format!("unknown latent kind `{other}` (gaussian | discrete)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LatentKind::Gaussian => "gaussian",
            LatentKind::Discrete => "discrete",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Four strided 4×4 convolutions, FC 256, head; transposed-conv decoder.
    PaperConv,
    /// Flatten, two FC 256 layers, head; mirrored decoder.
    MlpSmall,
    /// Convolutional encoder with a spatial-broadcast decoder.
    BroadcastCircles,
}

impl Architecture {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper_conv" => Ok(Architecture::PaperConv),
            "mlp_small" => Ok(Architecture::MlpSmall),
            "broadcast_circles" => Ok(Architecture::BroadcastCircles),
            other => Err(Error::invalid(format!(
                "unknown architecture preset `{other}` (paper_conv | mlp_small | broadcast_circles)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::PaperConv => "paper_conv",
            Architecture::MlpSmall => "mlp_small",
            Architecture::BroadcastCircles => "broadcast_circles",
        }
    }
}

/// Label supervision on the leading latent dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiSupervision {
    pub omega: f64,
    /// Restrict each supervised dimension to as many active categories as
    /// its factor has values.
    pub masked: bool,
    /// Size of the labeled pool drawn once before training.
    pub labeled: usize,
    /// Active category count per latent dimension; filled from the dataset
    /// when masking is on, otherwise empty.
    #[serde(default)]
    pub active: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Objective {
    /// Total-correlation weight; `Some` enables the discriminator.
    pub tc_gamma: Option<f64>,
    pub semi: Option<SemiSupervision>,
}

impl Objective {
    pub fn plain() -> Self {
        Objective::default()
    }

    pub fn factor(gamma: f64) -> Self {
        Objective { tc_gamma: Some(gamma), semi: None }
    }

    pub fn semi(omega: f64, masked: bool) -> Self {
        Objective {
            tc_gamma: None,
            semi: Some(SemiSupervision { omega, masked, labeled: 1000, active: Vec::new() }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub latent: LatentKind,
    pub n: usize,
    pub m: usize,
    pub architecture: Architecture,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub objective: Objective,
    pub schedule: AnnealSchedule,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    /// Feed the decoder `2 f(z) - 1` instead of `f(z)`.
    pub symmetric: bool,
    pub disc_width: usize,
    pub disc_lr: f64,
    pub log_every: usize,
    pub probe_size: usize,
    pub probe_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent: LatentKind::Discrete,
            n: 10,
            m: 64,
            architecture: Architecture::MlpSmall,
            height: 16,
            width: 16,
            channels: 1,
            objective: Objective::plain(),
            schedule: AnnealSchedule::default(),
            steps: 300_000,
            batch_size: 64,
            seed: 0,
            lr: 1e-4,
            symmetric: true,
            disc_width: 1000,
            disc_lr: 1e-4,
            log_every: 100,
            probe_size: 64,
            probe_seed: 12_345,
        }
    }
}

impl ModelConfig {
    /// Two-dimensional latent on 16×16 circle frames.
    pub fn circles(latent: LatentKind, steps: usize) -> Self {
        ModelConfig {
            latent,
            n: 2,
            steps,
            schedule: AnnealSchedule::with_steps(steps),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.to_string(), message });
        if self.n < 1 {
            return bad("n", "latent dimension must be at least 1".into());
        }
        if self.latent == LatentKind::Discrete && self.m < 2 {
            return bad("m", format!("need at least 2 categories, got {}", self.m));
        }
        if self.height < 1 || self.width < 1 || self.channels < 1 {
            return bad("height", "image dims must be positive".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size", "batch size must be at least 1".into());
        }
        if !(self.lr > 0.0) {
            return bad("lr", format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.schedule.temperature > 0.0) {
            return bad("temperature", "temperature must be positive".into());
        }
        if let Some(g) = self.objective.tc_gamma {
            if !(g >= 0.0) {
                return bad("gamma", format!("must be nonnegative, got {g}"));
            }
            if self.batch_size < 2 {
                return bad("batch_size", "the total-correlation term needs batches of at least 2".into());
            }
        }
        if let Some(s) = &self.objective.semi {
            if !(s.omega >= 0.0) {
                return bad("omega", format!("must be nonnegative, got {}", s.omega));
            }
            if self.latent == LatentKind::Gaussian {
                return bad("omega", "label supervision bins categorical latents; use latent=discrete".into());
            }
            if s.labeled < 1 {
                return bad("labels", "the labeled pool must hold at least one sample".into());
            }
            if !s.active.is_empty() && s.active.len() != self.n {
                return bad("masked", format!("{} active counts for {} dimensions", s.active.len(), self.n));
            }
        }
        match self.architecture {
            Architecture::PaperConv | Architecture::BroadcastCircles
                if self.height % 16 != 0 || self.width % 16 != 0 =>
            {
                bad("architecture", format!("{} needs image sides divisible by 16", self.architecture.name()))
            }
            Architecture::BroadcastCircles if self.height != self.width => {
                bad("architecture", "broadcast_circles needs square images".into())
            }
            _ => Ok(()),
        }
    }

    /// Width of the encoder head.
    pub fn head_size(&self) -> usize {
        match self.latent {
            LatentKind::Gaussian => 2 * self.n,
            LatentKind::Discrete => self.n * self.m,
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width * self.channels
    }
}
