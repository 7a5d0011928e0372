use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use quadgait::config::{parse_real, split_list, KeyValues};
use quadgait::experiment::{self, ExperimentPlan, HistogramOptions};
use quadgait::metrics::{self, ReferenceBox};
use quadgait::trajectory::write_trajectory_csv;
use quadgait::{Complexity, Genotype, ParamId, ParamTable};

#[derive(Parser)]
#[command(name = "quadgait", version, about = "Variable-complexity quadruped gait experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of an experiment plan.
    Sweep {
        /// Plan file (key = value).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the plan's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed; overrides the plan's `base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads, 0 for one per CPU.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Continue a sweep, skipping finished cells.
        #[arg(long)]
        resume: bool,
    },
    /// Archive hypervolume after every generation of a run record.
    Trace {
        record: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Phenotype histograms along one or more runs of equal complexity.
    Hist {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        /// File with `param.*` entries; the shipped table by default.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        bucket_size: usize,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leg-local foot trajectories of one genotype.
    Traj {
        #[command(flatten)]
        gait: GaitArgs,
        /// Seconds to sample.
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        /// Samples per second.
        #[arg(long, default_value_t = 100.0)]
        rate: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the phenotype of one genotype.
    Decode {
        #[command(flatten)]
        gait: GaitArgs,
    },
}

#[derive(Args)]
struct GaitArgs {
    /// 16 comma-separated genes in [0, 1], or one value for all.
    #[arg(long, default_value = "0.5")]
    genes: String,
    #[arg(long, default_value_t = 0.0)]
    complexity: f64,
    /// File with `param.*` entries; the shipped table by default.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep {
            config,
            out,
            seed,
            jobs,
            resume,
        } => sweep(&config, out, seed, jobs, resume),
        Command::Trace { record, out } => {
            let rec = experiment::read_record(&record)?;
            let trace = metrics::hypervolume_trace(&rec, &ReferenceBox::default());
            let mut w = output(out.as_deref())?;
            writeln!(w, "{}", metrics::TRACE_HEADER)?;
            let c = rec.config;
            metrics::write_trace_rows(c.complexity.value(), c.evaluation_budget, 0, &trace, &mut w)?;
            Ok(w.flush()?)
        }
        Command::Hist {
            records,
            config,
            bucket_size,
            bins,
            out,
        } => {
            let table = load_table(config.as_deref())?;
            let recs = records
                .iter()
                .map(|p| experiment::read_record(p))
                .collect::<Result<Vec<_>, _>>()?;
            let c = recs[0].config.complexity;
            let options = HistogramOptions { bucket_size, bins };
            let rows = experiment::export_param_histograms(&recs, &table, c, options)?;
            let mut w = output(out.as_deref())?;
            experiment::write_histogram_csv(&rows, bucket_size, &mut w)?;
            Ok(w.flush()?)
        }
        Command::Traj {
            gait,
            duration,
            rate,
            out,
        } => {
            if !(duration > 0.0 && rate > 0.0) {
                bail!("duration and rate must be positive");
            }
            let (table, genotype, c) = gait.resolve()?;
            let p = table.decode(&genotype, c)?;
            let mut w = output(out.as_deref())?;
            write_trajectory_csv(&p, duration, rate, &mut w)?;
            Ok(w.flush()?)
        }
        Command::Decode { gait } => {
            let (table, genotype, c) = gait.resolve()?;
            let p = table.decode(&genotype, c)?;
            let mut w = output(None)?;
            for id in ParamId::ALL {
                writeln!(w, "{} = {}", id.name(), p.value(id))?;
            }
            Ok(w.flush()?)
        }
    }
}

fn sweep(config: &Path, out: Option<PathBuf>, seed: Option<u64>, jobs: usize, resume: bool) -> Result<()> {
    let mut plan = ExperimentPlan::load(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(dir) = out {
        plan.output_directory = dir;
    }
    if let Some(seed) = seed {
        plan.base_seed = seed;
    }
    let report = experiment::run_sweep(&plan, jobs, resume)?;
    eprintln!(
        "{} cells run, {} skipped, {} failed",
        report.completed.len(),
        report.skipped.len(),
        report.failed.len()
    );
    for (id, error) in &report.failed {
        eprintln!("  {id}: {error}");
    }
    if !report.failed.is_empty() {
        bail!("{} cells failed", report.failed.len());
    }
    Ok(())
}

impl GaitArgs {
    fn resolve(&self) -> Result<(ParamTable, Genotype, Complexity)> {
        let table = load_table(self.config.as_deref())?;
        let genes = split_list(&self.genes)
            .map(|t| parse_real(t).map_err(anyhow::Error::msg))
            .collect::<Result<Vec<f64>>>()
            .context("parsing --genes")?;
        let genes = match genes.as_slice() {
            [g] => vec![*g; quadgait::gait_params::PARAM_COUNT],
            _ => genes,
        };
        Ok((table, Genotype::new(genes)?, Complexity::new(self.complexity)?))
    }
}

fn load_table(path: Option<&Path>) -> Result<ParamTable> {
    match path {
        None => Ok(ParamTable::default()),
        Some(p) => {
            let kv = KeyValues::load(p)?;
            Ok(ParamTable::from_config(&kv).with_context(|| format!("reading {}", p.display()))?)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        None => Box::new(BufWriter::new(io::stdout().lock())),
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
    })
}
