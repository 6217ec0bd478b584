use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dlab::experiments::{
    circles_sweep, correlate, eval_model, gen_data, plot_latent, read_sweep, run_dataset, run_sweep, run_verify,
    select, sweep_threads, train_run, verify_table, DatasetChoice, Prop, RunConfig, ENDPOINT_TOL,
};
use dlab::metrics::{EvalOptions, VoteOptions, METRIC_HEADER};
use dlab::models::TrainedModel;
use dlab::{Error, Result};

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "dlab", version, about = "Train and evaluate discrete and Gaussian VAEs on ground-truth datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model from a key = value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the metric report of a checkpoint as a CSV row.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the dataset recorded next to the checkpoint.
        #[arg(long)]
        dataset: Option<String>,
        /// Rows of the representation table.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Training votes for the BetaVAE and FactorVAE scores.
        #[arg(long, default_value_t = 10_000)]
        train_votes: usize,
        /// Held-out votes for the BetaVAE and FactorVAE scores.
        #[arg(long, default_value_t = 5_000)]
        test_votes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pick the discrete run with the smallest st_gap from a sweep.
    Select {
        #[arg(long)]
        sweep: PathBuf,
    },
    /// Scatter the two latent dims over a regular factor grid as SVG.
    PlotLatent {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo checks of the latent support, degenerate limit and
    /// rotation behaviour.
    Verify {
        /// Comma-separated subset of p1a, p1b, p2; empty runs nothing.
        #[arg(long, default_value = "p1a,p1b,p2")]
        props: String,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// How close p1a extremes must come to the support bounds.
        #[arg(long, default_value_t = ENDPOINT_TOL)]
        endpoint_tol: f64,
    },
    /// Spearman correlation between st_gap and a metric across a sweep.
    Correlate {
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long, default_value = "mig")]
        metric: String,
        /// Where to write the paired CSV; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a dataset of rendered observations in the DLDS format.
    GenData {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        image_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a preset grid of trainings and evaluations.
    Sweep {
        #[arg(long, default_value = "circles-sweep")]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 3000)]
        steps: usize,
    },
}

fn load_model(checkpoint: &Path, dataset: Option<&str>) -> Result<(TrainedModel, Box<dyn dlab::datasets::Dataset>)> {
    let model = TrainedModel::load(checkpoint)?;
    let choice = match dataset {
        Some(s) => DatasetChoice::parse(s, model.config.height)?,
        None => run_dataset(checkpoint)?.ok_or_else(|| {
            Error::invalid(format!("no config.txt next to {}; pass --dataset", checkpoint.display()))
        })?,
    };
    Ok((model, choice.build()?))
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Train { config, out, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = out {
                cfg.out = o;
            }
            if let Some(s) = seed {
                cfg.model.seed = s;
            }
            let art = train_run(&cfg)?;
            println!("{}", art.dir.display());
        }
        Command::Eval { checkpoint, dataset, samples, train_votes, test_votes, seed } => {
            let (model, ds) = load_model(&checkpoint, dataset.as_deref())?;
            let votes = VoteOptions { train: train_votes, eval: test_votes, ..VoteOptions::default() };
            let opts = EvalOptions {
                table_size: samples,
                votes,
                probe_size: model.config.probe_size,
                probe_seed: model.config.probe_seed,
                ..EvalOptions::default()
            };
            let (report, _) = eval_model(&model, ds.as_ref(), &opts, seed)?;
            println!("{METRIC_HEADER}");
            println!("{}", report.csv());
        }
        Command::Select { sweep } => {
            let rows = read_sweep(&sweep)?;
            let best = select(&rows)?;
            println!("run,checkpoint,st_gap,neg_elbo,mig");
            println!(
                "{},{},{},{},{}",
                best.run,
                sweep.join(&best.checkpoint).display(),
                best.report.st_gap.unwrap_or(f64::NAN),
                best.report.neg_elbo,
                best.report.mig
            );
        }
        Command::PlotLatent { checkpoint, dataset, out } => {
            let (model, ds) = load_model(&checkpoint, dataset.as_deref())?;
            let points = plot_latent(&model, ds.as_ref(), &out)?;
            println!("{} ({points} points)", out.display());
        }
        Command::Verify { props, trials, seed, endpoint_tol } => {
            let props: Vec<Prop> =
                props.split(',').filter(|p| !p.trim().is_empty()).map(Prop::parse).collect::<Result<_>>()?;
            let rows = run_verify(&props, trials, seed, endpoint_tol)?;
            print!("{}", verify_table(&rows));
            if rows.iter().any(|r| !r.passed) {
                return Ok(EXIT_VERIFY);
            }
        }
        Command::Correlate { sweep, metric, out } => {
            let rows = read_sweep(&sweep)?;
            let (rho, pairs) = correlate(&rows, &metric)?;
            let mut text = format!("run,st_gap,{metric}\n");
            for (run, gap, v) in &pairs {
                text.push_str(&format!("{run},{gap},{v}\n"));
            }
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?,
                None => print!("{text}"),
            }
            println!("spearman({metric}, st_gap) = {rho}");
        }
        Command::GenData { dataset, count, out, image_size, seed } => {
            let ds = DatasetChoice::parse(&dataset, image_size)?.build()?;
            let n = gen_data(ds.as_ref(), count, &out, seed)?;
            println!("{} ({n} records)", out.display());
        }
        Command::Sweep { preset, out, seeds, steps } => {
            if preset != "circles-sweep" {
                return Err(Error::invalid(format!("unknown preset `{preset}` (circles-sweep)")));
            }
            let configs = circles_sweep(&out, seeds, steps);
            let rows = run_sweep(&configs, &out, sweep_threads(), |r| {
                eprintln!("done {} mig={:.3} st_gap={:?}", r.run, r.report.mig, r.report.st_gap);
            })?;
            println!("{} ({} runs)", out.join(dlab::experiments::SWEEP_FILE).display(), rows.len());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Divergence { .. } => EXIT_DIVERGED,
                _ => EXIT_USAGE,
            })
        }
    }
}
