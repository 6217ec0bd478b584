use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{eval_model, train_run, DatasetChoice, RunConfig};
use crate::metrics::{spearman, MetricReport, VoteOptions};
use crate::models::{LatentKind, ModelConfig};
use crate::{Error, Result};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str =
    "run,seed,latent,gamma,omega,checkpoint,betavae,factorvae,mig,dci,modularity,sap,st_gap,recon,kl,neg_elbo,aligned";

/// A dim is aligned when its most informative factor carries at least this
/// multiple of the runner-up's mutual information.
pub const AXIS_RATIO: f64 = 2.0;
/// ...and at least this much information in nats, so dead dims do not pass.
pub const MIN_TOP_MI: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub run: String,
    pub seed: u64,
    pub latent: LatentKind,
    pub gamma: Option<f64>,
    pub omega: Option<f64>,
    /// Relative to the sweep directory.
    pub checkpoint: PathBuf,
    pub report: MetricReport,
    pub aligned: bool,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.run,
            self.seed,
            self.latent.name(),
            opt(self.gamma),
            opt(self.omega),
            self.checkpoint.display(),
            self.report.csv(),
            u8::from(self.aligned)
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        let expected = SWEEP_HEADER.split(',').count();
        if f.len() != expected {
            return Err(Error::Format(format!("sweep row has {} fields, expected {expected}: `{line}`", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse().map_err(|_| Error::Format(format!("sweep field `{}` is not a number in `{line}`", f[i])))
        };
        let maybe = |i: usize| -> Result<Option<f64>> { if f[i].is_empty() { Ok(None) } else { num(i).map(Some) } };
        Ok(SweepRow {
            run: f[0].to_string(),
            seed: f[1].parse().map_err(|_| Error::Format(format!("bad seed `{}`", f[1])))?,
            latent: LatentKind::parse(f[2])?,
            gamma: maybe(3)?,
            omega: maybe(4)?,
            checkpoint: PathBuf::from(f[5]),
            report: MetricReport {
                betavae: num(6)?,
                factorvae: num(7)?,
                mig: num(8)?,
                dci: num(9)?,
                modularity: num(10)?,
                sap: num(11)?,
                st_gap: maybe(12)?,
                recon: num(13)?,
                kl: num(14)?,
                neg_elbo: num(15)?,
            },
            aligned: match f[16] {
                "1" => true,
                "0" => false,
                other => return Err(Error::Format(format!("aligned flag `{other}` should be 0 or 1"))),
            },
        })
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "st_gap" => self.report.st_gap,
            "recon" => Some(self.report.recon),
            "kl" => Some(self.report.kl),
            "neg_elbo" => Some(self.report.neg_elbo),
            _ => self.report.scores().iter().find(|(n, _)| *n == name).map(|(_, v)| *v),
        }
    }
}

pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<PathBuf> {
    let path = dir.join(SWEEP_FILE);
    let mut text = String::from(SWEEP_HEADER);
    text.push('\n');
    for r in rows {
        if r.run.contains(',') || r.checkpoint.to_string_lossy().contains(',') {
            return Err(Error::invalid(format!("run `{}` has a comma in its name or path", r.run)));
        }
        let _ = writeln!(text, "{}", r.csv());
    }
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Rows of `sweep.csv` in `dir` (or of the file itself).
pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let file = if path.is_dir() { path.join(SWEEP_FILE) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == SWEEP_HEADER => {}
        other => return Err(Error::Format(format!("{}: header is {:?}, expected `{SWEEP_HEADER}`", file.display(), other))),
    }
    lines.filter(|l| !l.trim().is_empty()).map(SweepRow::parse).collect()
}

/// True when every dim's information concentrates on one factor.
pub fn axis_aligned(mi: &[Vec<f64>]) -> bool {
    mi.iter().all(|row| {
        let mut v = row.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        let top = v.first().copied().unwrap_or(0.0);
        let second = v.get(1).copied().unwrap_or(0.0);
        top >= MIN_TOP_MI && top >= AXIS_RATIO * second
    })
}

/// Discrete run with the smallest st_gap; ties go to the lower negative ELBO,
/// then to the run name.
pub fn select(rows: &[SweepRow]) -> Result<&SweepRow> {
    let discrete: Vec<&SweepRow> = rows.iter().filter(|r| r.report.st_gap.is_some()).collect();
    if discrete.len() < 2 {
        return Err(Error::invalid(format!("selection needs at least 2 discrete runs, found {}", discrete.len())));
    }
    Ok(discrete
        .into_iter()
        .min_by(|a, b| {
            let (ga, gb) = (a.report.st_gap.unwrap_or(f64::INFINITY), b.report.st_gap.unwrap_or(f64::INFINITY));
            ga.total_cmp(&gb).then(a.report.neg_elbo.total_cmp(&b.report.neg_elbo)).then(a.run.cmp(&b.run))
        })
        .expect("non-empty"))
}

/// Spearman correlation between st_gap and `metric` over the runs that have
/// both, and the pairs used.
pub fn correlate(rows: &[SweepRow], metric: &str) -> Result<(f64, Vec<(String, f64, f64)>)> {
    if rows.first().is_some_and(|r| r.metric(metric).is_none() && metric != "st_gap") {
        let known = ["betavae", "factorvae", "mig", "dci", "modularity", "sap", "recon", "kl", "neg_elbo"];
        if !known.contains(&metric) {
            return Err(Error::invalid(format!("unknown metric `{metric}` (one of {})", known.join(", "))));
        }
    }
    let pairs: Vec<(String, f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.run.clone(), r.report.st_gap?, r.metric(metric)?)))
        .collect();
    if pairs.len() < 3 {
        return Err(Error::invalid(format!("correlation needs at least 3 runs with st_gap and {metric}, found {}", pairs.len())));
    }
    let gaps: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let values: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    Ok((spearman(&gaps, &values)?, pairs))
}

pub const CIRCLES_SWEEP_LR: f64 = 1e-3;
/// Categories per discrete dim in the sweep; 64 does not settle in 3000 steps.
pub const CIRCLES_SWEEP_M: usize = 16;

/// Vote budget for sweep evaluation; the full defaults cost over a minute
/// per model on one core.
pub fn sweep_votes() -> VoteOptions {
    VoteOptions { train: 1_000, eval: 500, prune: 2_000, ..VoteOptions::default() }
}

/// `seeds` seeds of a Gaussian VAE and a discrete VAE on 16×16 circles with a
/// two-dimensional latent.
pub fn circles_sweep(dir: &Path, seeds: usize, steps: usize) -> Vec<RunConfig> {
    let mut out = Vec::new();
    for seed in 0..seeds as u64 {
        for latent in [LatentKind::Gaussian, LatentKind::Discrete] {
            let mut model = ModelConfig::circles(latent, steps);
            model.seed = seed;
            model.lr = CIRCLES_SWEEP_LR;
            model.m = CIRCLES_SWEEP_M;
            model.log_every = (steps / 10).max(1);
            let mut cfg = RunConfig {
                model,
                dataset: DatasetChoice::Circles { size: 16 },
                out: dir.join(format!("{}-s{seed:02}", latent.name())),
                ..RunConfig::default()
            };
            cfg.eval.votes = sweep_votes();
            cfg.eval_seed = seed;
            out.push(cfg);
        }
    }
    out
}

/// Worker count from `DLAB_THREADS`, defaulting to the available cores.
pub fn sweep_threads() -> usize {
    std::env::var("DLAB_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t: &usize| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_one(cfg: &RunConfig, dir: &Path) -> Result<SweepRow> {
    let art = train_run(cfg)?;
    let mut cfg = cfg.clone();
    let dataset = cfg.dataset()?;
    let (report, table) = eval_model(&art.model, dataset.as_ref(), &cfg.eval, cfg.eval_seed)?;
    let checkpoint = art.checkpoint.strip_prefix(dir).map(Path::to_path_buf).unwrap_or(art.checkpoint.clone());
    Ok(SweepRow {
        run: cfg.out.file_name().map_or_else(|| cfg.out.display().to_string(), |n| n.to_string_lossy().into_owned()),
        seed: cfg.model.seed,
        latent: cfg.model.latent,
        gamma: cfg.model.objective.tc_gamma,
        omega: cfg.model.objective.semi.as_ref().map(|s| s.omega),
        checkpoint,
        report,
        aligned: axis_aligned(&table.mutual_info()),
    })
}

/// Trains and evaluates every config on up to `threads` workers and writes
/// `sweep.csv` in config order. Diverged runs are reported and left out.
pub fn run_sweep(
    configs: &[RunConfig],
    dir: &Path,
    threads: usize,
    on_done: impl Fn(&SweepRow) + Sync,
) -> Result<Vec<SweepRow>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SweepRow>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, configs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = configs.get(i) else { break };
                let r = run_one(cfg, dir);
                if let Ok(row) = &r {
                    on_done(row);
                }
                results.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    let mut rows = Vec::new();
    for r in results.into_inner().expect("no poisoned workers").into_iter().flatten() {
        match r {
            Ok(row) => rows.push(row),
            Err(Error::Divergence { step }) => log::warn!("a sweep run diverged at step {step} and was skipped"),
            Err(e) => return Err(e),
        }
    }
    write_sweep(dir, &rows)?;
    Ok(rows)
}
