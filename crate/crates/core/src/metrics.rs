//! Two-objective hypervolume and run statistics.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::evolution::{dominates, RunRecord};
use crate::simulator::Objectives;

/// Reference corner of the hypervolume: speed 0 m/min, stability -1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBox {
    pub speed_floor: f64,
    pub stability_floor: f64,
}

impl Default for ReferenceBox {
    fn default() -> Self {
        ReferenceBox {
            speed_floor: 0.0,
            stability_floor: -1.0,
        }
    }
}

/// Area dominated by `points` above the reference corner.
///
/// Points are clipped to the box first, so anything slower than the speed
/// floor or less stable than the stability floor contributes nothing.
pub fn hypervolume2d(points: &[Objectives], r: &ReferenceBox) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|o| {
            (
                o.speed.max(r.speed_floor) - r.speed_floor,
                o.stability.max(r.stability_floor) - r.stability_floor,
            )
        })
        .filter(|&(s, h)| s > 0.0 && h > 0.0)
        .collect();
    // fastest first; among equal speeds the most stable first
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut covered = 0.0;
    for (speed, height) in pts {
        if height > covered {
            area += speed * (height - covered);
            covered = height;
        }
    }
    area
}

/// Non-dominated set of everything inserted so far.
#[derive(Debug, Clone, Default)]
pub struct ParetoArchive {
    front: Vec<Objectives>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `o` unless it is dominated or already present. Returns whether
    /// the archive changed.
    pub fn insert(&mut self, o: Objectives) -> bool {
        if self.front.iter().any(|a| dominates(a, &o) || *a == o) {
            return false;
        }
        self.front.retain(|a| !dominates(&o, a));
        self.front.push(o);
        true
    }

    pub fn front(&self) -> &[Objectives] {
        &self.front
    }

    pub fn hypervolume(&self, r: &ReferenceBox) -> f64 {
        hypervolume2d(&self.front, r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evaluations: usize,
    pub hypervolume: f64,
}

/// Hypervolume of all evaluations so far, at the end of every generation.
pub fn hypervolume_trace(record: &RunRecord, r: &ReferenceBox) -> Vec<TracePoint> {
    let mut archive = ParetoArchive::new();
    let mut hv = 0.0;
    let mut next = 0;
    let mut trace = Vec::with_capacity(record.generations.len());
    for snapshot in &record.generations {
        let mut changed = false;
        while next < snapshot.evaluations && next < record.evaluations.len() {
            changed |= archive.insert(record.evaluations[next].objectives);
            next += 1;
        }
        if changed {
            hv = archive.hypervolume(r);
        }
        trace.push(TracePoint {
            evaluations: snapshot.evaluations,
            hypervolume: hv,
        });
    }
    trace
}

pub fn final_hypervolume(record: &RunRecord, r: &ReferenceBox) -> f64 {
    hypervolume_trace(record, r)
        .last()
        .map(|p| p.hypervolume)
        .unwrap_or(0.0)
}

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` with fewer than two values.
    pub std_dev: Option<f64>,
    /// Normal-approximation 95% interval of the mean.
    pub ci95: Option<(f64, f64)>,
    pub median: f64,
}

impl SampleStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (std_dev, ci95) = if values.len() >= 2 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            let half = Z95 * sd / n.sqrt();
            (Some(sd), Some((mean - half, mean + half)))
        } else {
            (None, None)
        };
        Some(SampleStats {
            count: values.len(),
            mean,
            std_dev,
            ci95,
            median: median(values),
        })
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub complexity: f64,
    pub budget: usize,
    pub stats: SampleStats,
}

/// Final-hypervolume statistics per `(complexity, budget)`, sorted by key.
pub fn summarize(runs: &[RunRecord], r: &ReferenceBox) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(u64, usize), Vec<f64>> = BTreeMap::new();
    for run in runs {
        let key = (run.config.complexity.value().to_bits(), run.config.evaluation_budget);
        groups.entry(key).or_default().push(final_hypervolume(run, r));
    }
    let mut out: Vec<GroupSummary> = groups
        .into_iter()
        .map(|((c, budget), values)| GroupSummary {
            complexity: f64::from_bits(c),
            budget,
            stats: SampleStats::from_values(&values).expect("non-empty group"),
        })
        .collect();
    out.sort_by(|a, b| a.complexity.total_cmp(&b.complexity).then(a.budget.cmp(&b.budget)));
    out
}

pub const SUMMARY_HEADER: &str = "complexity,budget,runs,mean,std_dev,ci95_low,ci95_high,median";

/// Undefined statistics are written as empty fields.
pub fn write_summary_csv<W: Write>(rows: &[GroupSummary], mut out: W) -> io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for row in rows {
        let s = &row.stats;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.complexity,
            row.budget,
            s.count,
            s.mean,
            opt(s.std_dev),
            opt(s.ci95.map(|c| c.0)),
            opt(s.ci95.map(|c| c.1)),
            s.median
        )?;
    }
    Ok(())
}

pub const TRACE_HEADER: &str = "complexity,budget,run_id,evaluation,hypervolume";

pub fn write_trace_rows<W: Write>(
    complexity: f64,
    budget: usize,
    run_id: usize,
    trace: &[TracePoint],
    mut out: W,
) -> io::Result<()> {
    for p in trace {
        writeln!(out, "{complexity},{budget},{run_id},{},{}", p.evaluations, p.hypervolume)?;
    }
    Ok(())
}
