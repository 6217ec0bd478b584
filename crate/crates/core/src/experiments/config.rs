use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::datasets::{load_external, Circles, Dataset, GridFactor, Gridworld};
use crate::latent::AnnealSchedule;
use crate::metrics::EvalOptions;
use crate::models::{Architecture, LatentKind, ModelConfig, SemiSupervision};
use crate::{Error, Result};

/// Recognised keys of the flat `key = value` run format, with a short
/// description each.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("dataset", "circles | gridworld | gridworld:posx=4,posy=4,shape=2 | file:PATH"),
    ("image_size", "side length for procedural datasets (default 16)"),
    ("latent", "discrete | gaussian"),
    ("n", "latent dimensions"),
    ("m", "categories per discrete dimension"),
    ("architecture", "mlp_small | paper_conv | broadcast_circles"),
    ("steps", "optimizer steps"),
    ("batch_size", "images per step"),
    ("seed", "seed for initialization, batches and noise"),
    ("lr", "Adam learning rate"),
    ("temperature", "Gumbel-Softmax temperature"),
    ("initial_scale", "Gumbel noise scale at step 0"),
    ("final_scale", "Gumbel noise scale at the end of annealing"),
    ("anneal_steps", "length of the noise-scale schedule (default: steps)"),
    ("symmetric", "feed the decoder 2f-1 instead of f (true | false)"),
    ("gamma", "total-correlation weight; enables the discriminator"),
    ("disc_width", "discriminator hidden width"),
    ("disc_lr", "discriminator learning rate"),
    ("omega", "supervised cross-entropy weight; enables label supervision"),
    ("masked", "restrict supervised dims to the factor's value count (true | false)"),
    ("labels", "size of the labeled pool"),
    ("log_every", "steps between training-log rows"),
    ("probe_size", "images in the st_gap probe batch"),
    ("probe_seed", "seed of the probe batch"),
    ("out", "run directory"),
    ("eval_samples", "rows of the representation table"),
    ("eval_train_votes", "training votes for the vote-based metrics"),
    ("eval_test_votes", "held-out votes for the vote-based metrics"),
    ("eval_vote_batch", "samples per vote"),
    ("eval_prune", "samples used to prune low-variance dims"),
    ("eval_seed", "seed for metric sampling"),
];

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetChoice {
    Circles { size: usize },
    Gridworld { size: usize, factors: Vec<(GridFactor, usize)> },
    External(PathBuf),
}

impl DatasetChoice {
    /// `circles`, `gridworld`, `gridworld:posx=4,posy=4,...` or `file:PATH`.
    pub fn parse(s: &str, size: usize) -> Result<Self> {
        let s = s.trim();
        if s == "circles" {
            return Ok(DatasetChoice::Circles { size });
        }
        if s == "gridworld" {
            return Ok(DatasetChoice::Gridworld { size, factors: Vec::new() });
        }
        if let Some(rest) = s.strip_prefix("gridworld:") {
            let mut factors = Vec::new();
            for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
                let (name, card) = part
                    .split_once('=')
                    .ok_or_else(|| Error::invalid(format!("gridworld factor `{part}` should read name=count")))?;
                let card = card
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("gridworld factor `{part}`: count is not an integer")))?;
                factors.push((GridFactor::parse(name.trim())?, card));
            }
            return Ok(DatasetChoice::Gridworld { size, factors });
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(DatasetChoice::External(PathBuf::from(path)));
        }
        Err(Error::invalid(format!("unknown dataset `{s}` (circles | gridworld[:name=count,...] | file:PATH)")))
    }

    pub fn build(&self) -> Result<Box<dyn Dataset>> {
        Ok(match self {
            DatasetChoice::Circles { size } => Box::new(Circles::new(*size)?),
            DatasetChoice::Gridworld { size, factors } if factors.is_empty() => Box::new(Gridworld::standard(*size)?),
            DatasetChoice::Gridworld { size, factors } => Box::new(Gridworld::new(*size, factors)?),
            DatasetChoice::External(path) => Box::new(load_external(path)?),
        })
    }

    pub fn describe(&self) -> String {
        match self {
            DatasetChoice::Circles { .. } => "circles".into(),
            DatasetChoice::Gridworld { factors, .. } if factors.is_empty() => "gridworld".into(),
            DatasetChoice::Gridworld { factors, .. } => {
                let parts: Vec<String> = factors.iter().map(|(f, c)| format!("{}={c}", f.name())).collect();
                format!("gridworld:{}", parts.join(","))
            }
            DatasetChoice::External(p) => format!("file:{}", p.display()),
        }
    }

    pub fn size(&self) -> Option<usize> {
        match self {
            DatasetChoice::Circles { size } | DatasetChoice::Gridworld { size, .. } => Some(*size),
            DatasetChoice::External(_) => None,
        }
    }
}

/// One training run: model, data, where to write, how to evaluate.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub dataset: DatasetChoice,
    pub out: PathBuf,
    pub eval: EvalOptions,
    pub eval_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            dataset: DatasetChoice::Circles { size: 16 },
            out: PathBuf::from("run"),
            eval: EvalOptions::default(),
            eval_seed: 0,
        }
    }
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), message: message.into() }
}

fn value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| config_err(key, format!("cannot parse `{raw}`")))
}

impl RunConfig {
    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(line, format!("line {}: expected key = value", lineno + 1)))?;
            let k = k.trim();
            if !CONFIG_KEYS.iter().any(|(known, _)| *known == k) {
                return Err(config_err(k, "unknown key"));
            }
            if map.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(config_err(k, "given twice"));
            }
        }
        Self::from_map(&map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| map.get(k).map(String::as_str);
        let mut cfg = RunConfig::default();
        let m = &mut cfg.model;
        let size = get("image_size").map(|v| value("image_size", v)).transpose()?.unwrap_or(16);
        if let Some(v) = get("dataset") {
            cfg.dataset = DatasetChoice::parse(v, size).map_err(|e| config_err("dataset", e.to_string()))?;
        } else {
            cfg.dataset = DatasetChoice::Circles { size };
        }
        if let Some(v) = get("latent") {
            m.latent = LatentKind::parse(v).map_err(|e| config_err("latent", e.to_string()))?;
        }
        if let Some(v) = get("architecture") {
            m.architecture = Architecture::parse(v).map_err(|e| config_err("architecture", e.to_string()))?;
        }
        macro_rules! set {
            ($key:literal, $slot:expr) => {
                if let Some(v) = get($key) {
                    $slot = value($key, v)?;
                }
            };
        }
        set!("n", m.n);
        set!("m", m.m);
        set!("steps", m.steps);
        set!("batch_size", m.batch_size);
        set!("seed", m.seed);
        set!("lr", m.lr);
        set!("symmetric", m.symmetric);
        set!("disc_width", m.disc_width);
        set!("disc_lr", m.disc_lr);
        set!("log_every", m.log_every);
        set!("probe_size", m.probe_size);
        set!("probe_seed", m.probe_seed);
        m.schedule = AnnealSchedule::with_steps(m.steps);
        set!("anneal_steps", m.schedule.total_steps);
        set!("temperature", m.schedule.temperature);
        set!("initial_scale", m.schedule.initial_scale);
        set!("final_scale", m.schedule.final_scale);
        if let Some(v) = get("gamma") {
            m.objective.tc_gamma = Some(value("gamma", v)?);
        }
        match get("omega") {
            Some(v) => {
                let mut semi = SemiSupervision { omega: value("omega", v)?, masked: false, labeled: 1000, active: Vec::new() };
                set!("masked", semi.masked);
                set!("labels", semi.labeled);
                m.objective.semi = Some(semi);
            }
            None => {
                for k in ["masked", "labels"] {
                    if get(k).is_some() {
                        return Err(config_err(k, "only meaningful together with omega"));
                    }
                }
            }
        }
        if let Some(v) = get("out") {
            cfg.out = PathBuf::from(v);
        }
        set!("eval_samples", cfg.eval.table_size);
        set!("eval_train_votes", cfg.eval.votes.train);
        set!("eval_test_votes", cfg.eval.votes.eval);
        set!("eval_vote_batch", cfg.eval.votes.batch);
        set!("eval_prune", cfg.eval.votes.prune);
        set!("eval_seed", cfg.eval_seed);
        cfg.eval.probe_size = cfg.model.probe_size;
        cfg.eval.probe_seed = cfg.model.probe_seed;
        if let Some(s) = cfg.dataset.size() {
            cfg.model.height = s;
            cfg.model.width = s;
            cfg.model.channels = 1;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.eval.table_size < 2 {
            return Err(config_err("eval_samples", "need at least 2 rows"));
        }
        if self.eval.votes.train == 0 || self.eval.votes.eval == 0 || self.eval.votes.batch == 0 {
            return Err(config_err("eval_train_votes", "vote counts and batch must be positive"));
        }
        Ok(())
    }

    /// Builds the dataset and aligns the model's image dims with it.
    pub fn dataset(&mut self) -> Result<Box<dyn Dataset>> {
        let ds = self.dataset.build()?;
        let (h, w, c) = ds.image_dims();
        self.model.height = h;
        self.model.width = w;
        self.model.channels = c;
        self.model.validate()?;
        Ok(ds)
    }

    /// The same configuration in the flat text format, every key spelled out.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let s = &m.schedule;
        let mut lines = vec![
            format!("dataset = {}", self.dataset.describe()),
            format!("image_size = {}", self.dataset.size().unwrap_or(m.height)),
            format!("latent = {}", m.latent.name()),
            format!("n = {}", m.n),
            format!("m = {}", m.m),
            format!("architecture = {}", m.architecture.name()),
            format!("steps = {}", m.steps),
            format!("batch_size = {}", m.batch_size),
            format!("seed = {}", m.seed),
            format!("lr = {}", m.lr),
            format!("temperature = {}", s.temperature),
            format!("initial_scale = {}", s.initial_scale),
            format!("final_scale = {}", s.final_scale),
            format!("anneal_steps = {}", s.total_steps),
            format!("symmetric = {}", m.symmetric),
        ];
        if let Some(g) = m.objective.tc_gamma {
            lines.push(format!("gamma = {g}"));
        }
        lines.push(format!("disc_width = {}", m.disc_width));
        lines.push(format!("disc_lr = {}", m.disc_lr));
        if let Some(semi) = &m.objective.semi {
            lines.push(format!("omega = {}", semi.omega));
            lines.push(format!("masked = {}", semi.masked));
            lines.push(format!("labels = {}", semi.labeled));
        }
        lines.extend([
            format!("log_every = {}", m.log_every),
            format!("probe_size = {}", m.probe_size),
            format!("probe_seed = {}", m.probe_seed),
            format!("out = {}", self.out.display()),
            format!("eval_samples = {}", self.eval.table_size),
            format!("eval_train_votes = {}", self.eval.votes.train),
            format!("eval_test_votes = {}", self.eval.votes.eval),
            format!("eval_vote_batch = {}", self.eval.votes.batch),
            format!("eval_prune = {}", self.eval.votes.prune),
            format!("eval_seed = {}", self.eval_seed),
        ]);
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        match RunConfig::parse("steps = 10\nlaerning_rate = 0.1\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "laerning_rate"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_value_is_named() {
        match RunConfig::parse("n = two") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "n"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn text_round_trip() {
        let text = "dataset = gridworld:posx=4,posy=4,shape=2\nlatent = discrete\nn = 3\nsteps = 50\n\
                    gamma = 10\nomega = 2\nmasked = true\n# comment\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.model.objective.tc_gamma, Some(10.0));
        assert_eq!(cfg.model.schedule.total_steps, 50);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn masked_without_omega_is_rejected() {
        assert!(matches!(RunConfig::parse("masked = true"), Err(Error::Config { key, .. }) if key == "masked"));
    }
}
