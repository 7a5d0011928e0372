//! Complexity × budget sweeps and their on-disk artifacts.
//!
//! Layout of an output directory:
//!
//! ```text
//! manifest.json          plan settings and per-cell status
//! runs/<cell>.jsonl      full run record
//! runs/<cell>.csv        per-generation statistics
//! traces.csv             archive hypervolume after every generation
//! summary.csv            final hypervolume statistics per (complexity, budget)
//! ```
//!
//! Cells are independent and seeded from their coordinates, so the sweep
//! gives the same bytes whatever the number of workers or the order in
//! which cells finish.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::evolution::{self, EvoConfig, GaitEvaluator, LogError, RunRecord};
use crate::gait_params::{effective_bounds, Complexity, Interval, ParamId, ParamTable};
use crate::metrics::{self, ReferenceBox};
use crate::simulator::Simulator;

const PLAN_KEYS: [&str; 6] = ["complexities", "budgets", "repetitions", "base_seed", "output", "alpha"];
const PLAN_SECTIONS: [&str; 3] = ["param", "sim", "leg"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub complexities: Vec<Complexity>,
    pub budgets: Vec<usize>,
    pub repetitions: usize,
    pub base_seed: u64,
    pub output_directory: PathBuf,
    pub table: ParamTable,
    pub simulator: Simulator,
}

impl ExperimentPlan {
    /// Reads `complexities`, `budgets` and `repetitions` (required),
    /// `base_seed` and `output` (optional), and any `param.*`, `sim.*`,
    /// `leg.*` or `alpha` overrides. Without `param.*` keys the shipped
    /// table is used.
    pub fn from_config(kv: &KeyValues) -> Result<Self, ConfigError> {
        for key in kv.keys() {
            let known = PLAN_KEYS.contains(&key)
                || PLAN_SECTIONS
                    .iter()
                    .any(|s| key.strip_prefix(s).is_some_and(|r| r.starts_with('.')));
            if !known {
                return Err(ConfigError::Unknown(key.to_string()));
            }
        }
        let complexities = kv
            .real_list("complexities")?
            .ok_or_else(|| ConfigError::Missing("complexities".into()))?
            .into_iter()
            .map(|c| Complexity::new(c).map_err(|e| ConfigError::invalid("complexities", e)))
            .collect::<Result<Vec<_>, _>>()?;
        let budgets: Vec<usize> = kv
            .parsed_list("budgets")?
            .ok_or_else(|| ConfigError::Missing("budgets".into()))?;
        let repetitions: usize = kv
            .parsed("repetitions")?
            .ok_or_else(|| ConfigError::Missing("repetitions".into()))?;
        let table = if kv.section("param").next().is_some() {
            ParamTable::from_config(kv)?
        } else {
            ParamTable::default()
        };
        let plan = ExperimentPlan {
            complexities,
            budgets,
            repetitions,
            base_seed: kv.parsed("base_seed")?.unwrap_or(0),
            output_directory: kv.get("output").unwrap_or("results").into(),
            table,
            simulator: Simulator::from_config(kv)?,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_config(&KeyValues::load(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.complexities.is_empty() {
            return Err(ConfigError::invalid("complexities", "empty list"));
        }
        if self.budgets.is_empty() {
            return Err(ConfigError::invalid("budgets", "empty list"));
        }
        if self.repetitions == 0 {
            return Err(ConfigError::invalid("repetitions", "must be at least 1"));
        }
        for cell in self.cells() {
            EvoConfig::new(cell.complexity, cell.budget, 0)
                .validate()
                .map_err(|e| ConfigError::invalid("budgets", e))?;
        }
        Ok(())
    }

    /// Every (complexity, budget, repetition) in plan order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &complexity in &self.complexities {
            for &budget in &self.budgets {
                for repetition in 0..self.repetitions {
                    out.push(Cell {
                        complexity,
                        budget,
                        repetition,
                    });
                }
            }
        }
        out
    }

    fn settings(&self) -> serde_json::Value {
        serde_json::json!({
            "complexities": self.complexities,
            "budgets": self.budgets,
            "repetitions": self.repetitions,
            "base_seed": self.base_seed,
            "table": self.table,
            "simulator": self.simulator,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub complexity: Complexity,
    pub budget: usize,
    pub repetition: usize,
}

impl Cell {
    /// File stem, e.g. `c0300_b8192_r007` for 30% complexity.
    pub fn id(&self) -> String {
        format!(
            "c{:04}_b{}_r{:03}",
            (self.complexity.value() * 1000.0).round() as u64,
            self.budget,
            self.repetition
        )
    }

    pub fn seed(&self, base_seed: u64) -> u64 {
        let mut s = mix(base_seed, self.complexity.value().to_bits());
        s = mix(s, self.budget as u64);
        mix(s, self.repetition as u64)
    }
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a.rotate_left(17) ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Done { seed: u64 },
    Failed { seed: u64, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub settings: serde_json::Value,
    pub cells: BTreeMap<String, CellStatus>,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt manifest {path}: {message}")]
    CorruptManifest { path: PathBuf, message: String },
    #[error("{0} holds results of a different plan")]
    PlanMismatch(PathBuf),
    #[error("{0} already holds a sweep; resume it or choose another directory")]
    AlreadyStarted(PathBuf),
    #[error("{path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: LogError,
    },
    #[error(transparent)]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut out = BufWriter::new(File::create(&tmp)?);
        write(&mut out)?;
        out.flush()?;
    }
    fs::rename(&tmp, path)
}

pub fn read_manifest(path: &Path) -> Result<Option<Manifest>, ExperimentError> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_err(path)(e)),
    };
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| ExperimentError::CorruptManifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), ExperimentError> {
    write_atomic(path, |out| {
        serde_json::to_writer_pretty(&mut *out, manifest)?;
        out.write_all(b"\n")
    })
    .map_err(io_err(path))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub completed: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, String)>,
}

pub fn run_path(dir: &Path, cell: &Cell) -> PathBuf {
    dir.join("runs").join(format!("{}.jsonl", cell.id()))
}

/// Runs every cell of `plan` on `jobs` worker threads (0 picks the number of
/// CPUs). With `resume`, cells the manifest lists as done are skipped and
/// failed ones retried; without it an existing manifest is an error.
pub fn run_sweep(plan: &ExperimentPlan, jobs: usize, resume: bool) -> Result<SweepReport, ExperimentError> {
    plan.validate()?;
    let dir = &plan.output_directory;
    fs::create_dir_all(dir.join("runs")).map_err(io_err(dir))?;
    let manifest_path = dir.join("manifest.json");
    let settings = plan.settings();
    let manifest = match read_manifest(&manifest_path)? {
        Some(_) if !resume => return Err(ExperimentError::AlreadyStarted(dir.clone())),
        Some(m) if m.settings != settings => return Err(ExperimentError::PlanMismatch(dir.clone())),
        Some(m) => m,
        None => Manifest {
            settings,
            cells: BTreeMap::new(),
        },
    };
    write_manifest(&manifest_path, &manifest)?;

    let mut report = SweepReport::default();
    let mut todo = Vec::new();
    for cell in plan.cells() {
        let done = matches!(manifest.cells.get(&cell.id()), Some(CellStatus::Done { .. }));
        if done && run_path(dir, &cell).is_file() {
            report.skipped.push(cell.id());
        } else {
            todo.push(cell);
        }
    }

    let manifest = Mutex::new(manifest);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let outcomes: Vec<(String, Result<(), String>)> = pool.install(|| {
        todo.par_iter()
            .map(|cell| {
                let seed = cell.seed(plan.base_seed);
                let result = run_cell(plan, cell, seed);
                let status = match &result {
                    Ok(()) => CellStatus::Done { seed },
                    Err(error) => CellStatus::Failed {
                        seed,
                        error: error.clone(),
                    },
                };
                let mut m = manifest.lock().unwrap_or_else(|e| e.into_inner());
                m.cells.insert(cell.id(), status);
                let committed = write_manifest(&manifest_path, &m).map_err(|e| e.to_string());
                (cell.id(), result.and(committed))
            })
            .collect()
    });
    for (id, outcome) in outcomes {
        match outcome {
            Ok(()) => report.completed.push(id),
            Err(e) => report.failed.push((id, e)),
        }
    }
    write_aggregates(plan)?;
    Ok(report)
}

fn run_cell(plan: &ExperimentPlan, cell: &Cell, seed: u64) -> Result<(), String> {
    let config = EvoConfig::new(cell.complexity, cell.budget, seed);
    let evaluator = GaitEvaluator {
        table: plan.table.clone(),
        complexity: cell.complexity,
        simulator: plan.simulator,
    };
    let record = evolution::run(&config, &evaluator).map_err(|e| e.to_string())?;
    let dir = plan.output_directory.join("runs");
    let r = ReferenceBox::default();
    write_atomic(&dir.join(format!("{}.csv", cell.id())), |out| {
        record.write_generation_csv(&r, out)
    })
    .and_then(|()| write_atomic(&run_path(&plan.output_directory, cell), |out| record.write_jsonl(out)))
    .map_err(|e| e.to_string())
}

pub fn read_record(path: &Path) -> Result<RunRecord, ExperimentError> {
    let file = File::open(path).map_err(io_err(path))?;
    RunRecord::read_jsonl(BufReader::new(file)).map_err(|source| ExperimentError::Log {
        path: path.to_path_buf(),
        source,
    })
}

/// Rebuilds `traces.csv` and `summary.csv` from every finished cell, in
/// plan order.
pub fn write_aggregates(plan: &ExperimentPlan) -> Result<(), ExperimentError> {
    let dir = &plan.output_directory;
    let manifest = read_manifest(&dir.join("manifest.json"))?.unwrap_or(Manifest {
        settings: serde_json::Value::Null,
        cells: BTreeMap::new(),
    });
    let r = ReferenceBox::default();
    let mut records = Vec::new();
    let mut traces = Vec::new();
    for cell in plan.cells() {
        if !matches!(manifest.cells.get(&cell.id()), Some(CellStatus::Done { .. })) {
            continue;
        }
        let record = read_record(&run_path(dir, &cell))?;
        traces.push((cell, metrics::hypervolume_trace(&record, &r)));
        records.push(record);
    }
    let path = dir.join("traces.csv");
    write_atomic(&path, |out| {
        writeln!(out, "{}", metrics::TRACE_HEADER)?;
        for (cell, trace) in &traces {
            metrics::write_trace_rows(cell.complexity.value(), cell.budget, cell.repetition, trace, &mut *out)?;
        }
        Ok(())
    })
    .map_err(io_err(&path))?;
    let path = dir.join("summary.csv");
    write_atomic(&path, |out| metrics::write_summary_csv(&metrics::summarize(&records, &r), out))
        .map_err(io_err(&path))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramOptions {
    /// Evaluations per bucket along the run.
    pub bucket_size: usize,
    /// Equal-width bins over each parameter's full range.
    pub bins: usize,
}

impl Default for HistogramOptions {
    fn default() -> Self {
        HistogramOptions {
            bucket_size: 256,
            bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRow {
    pub bucket: usize,
    pub parameter: ParamId,
    pub bin: usize,
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
    pub bounds: Interval,
}

#[derive(Debug, Error, PartialEq)]
pub enum HistogramError {
    #[error("record was run at complexity {found}, expected {expected}")]
    ComplexityMismatch { expected: f64, found: f64 },
    #[error("bucket size and bin count must be positive")]
    EmptyBinning,
    #[error("decoding evaluation {index}: {message}")]
    Decode { index: usize, message: String },
}

/// Phenotype value counts per evaluation bucket, parameter and bin, pooled
/// over `records`. Each row carries the effective bounds at `c`.
pub fn export_param_histograms(
    records: &[RunRecord],
    table: &ParamTable,
    c: Complexity,
    options: HistogramOptions,
) -> Result<Vec<HistogramRow>, HistogramError> {
    if options.bucket_size == 0 || options.bins == 0 {
        return Err(HistogramError::EmptyBinning);
    }
    if let Some(r) = records.iter().find(|r| r.config.complexity != c) {
        return Err(HistogramError::ComplexityMismatch {
            expected: c.value(),
            found: r.config.complexity.value(),
        });
    }
    let buckets = records
        .iter()
        .map(|r| r.evaluations.len().div_ceil(options.bucket_size))
        .max()
        .unwrap_or(0);
    let mut counts = vec![vec![0usize; options.bins]; buckets * ParamId::ALL.len()];
    for record in records {
        for e in &record.evaluations {
            let p = table.decode(&e.genotype, c).map_err(|err| HistogramError::Decode {
                index: e.index,
                message: err.to_string(),
            })?;
            let bucket = e.index / options.bucket_size;
            for id in ParamId::ALL {
                let spec = table.spec(id);
                let u = (p.value(id) - spec.min) / (spec.max - spec.min);
                let bin = ((u * options.bins as f64) as usize).min(options.bins - 1);
                counts[bucket * ParamId::ALL.len() + id.index()][bin] += 1;
            }
        }
    }
    let mut rows = Vec::with_capacity(counts.len() * options.bins);
    for bucket in 0..buckets {
        for id in ParamId::ALL {
            let spec = table.spec(id);
            let bounds = effective_bounds(spec, c);
            let width = (spec.max - spec.min) / options.bins as f64;
            for (bin, &count) in counts[bucket * ParamId::ALL.len() + id.index()].iter().enumerate() {
                rows.push(HistogramRow {
                    bucket,
                    parameter: id,
                    bin,
                    bin_low: spec.min + bin as f64 * width,
                    bin_high: if bin + 1 == options.bins {
                        spec.max
                    } else {
                        spec.min + (bin + 1) as f64 * width
                    },
                    count,
                    bounds,
                });
            }
        }
    }
    Ok(rows)
}

pub const HISTOGRAM_HEADER: &str =
    "bucket,eval_start,eval_end,parameter,bin,bin_low,bin_high,count,bound_low,bound_high";

pub fn write_histogram_csv<W: Write>(rows: &[HistogramRow], bucket_size: usize, mut out: W) -> io::Result<()> {
    writeln!(out, "{HISTOGRAM_HEADER}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            row.bucket,
            row.bucket * bucket_size,
            (row.bucket + 1) * bucket_size,
            row.parameter.name(),
            row.bin,
            row.bin_low,
            row.bin_high,
            row.count,
            row.bounds.lower,
            row.bounds.upper
        )?;
    }
    Ok(())
}
