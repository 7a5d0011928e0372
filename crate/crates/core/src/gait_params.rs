//! The 16-dimensional gait parameter space and the complexity-dependent
//! genotype-phenotype mapping.
//!
//! Every parameter has a full `[min, max]` range and a conservative interval
//! `center ± min_range / 2`. A single complexity knob in `[0, 1]` moves each
//! bound of the conservative interval linearly and independently toward the
//! matching bound of the full range. Genes always live in the unit hypercube;
//! only the box they are mapped onto changes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{self, ConfigError, KeyValues};

pub const PARAM_COUNT: usize = 16;

/// The shipped parameter table and leg geometry.
pub const DEFAULT_CONFIG: &str = include_str!("../data/default.conf");

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter {name}: {message}")]
    InvalidSpec { name: String, message: String },
    #[error("complexity {0} outside [0, 1]")]
    Complexity(f64),
    #[error("gene {index} = {value} outside [0, 1]")]
    Gene { index: usize, value: f64 },
    #[error("genotype has {got} genes, table has {expected} parameters")]
    LengthMismatch { expected: usize, got: usize },
}

/// Identifier of one controller parameter, in genotype order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamId {
    GroundFrontY,
    GroundBackY,
    Air1X,
    Air1Y,
    Air1Z,
    Air2X,
    Air2Y,
    Air2Z,
    Air3X,
    Air3Y,
    Air3Z,
    WagPhase,
    WagAmpX,
    WagAmpY,
    LiftDuration,
    Frequency,
}

impl ParamId {
    pub const ALL: [ParamId; PARAM_COUNT] = [
        ParamId::GroundFrontY,
        ParamId::GroundBackY,
        ParamId::Air1X,
        ParamId::Air1Y,
        ParamId::Air1Z,
        ParamId::Air2X,
        ParamId::Air2Y,
        ParamId::Air2Z,
        ParamId::Air3X,
        ParamId::Air3Y,
        ParamId::Air3Z,
        ParamId::WagPhase,
        ParamId::WagAmpX,
        ParamId::WagAmpY,
        ParamId::LiftDuration,
        ParamId::Frequency,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamId::GroundFrontY => "ground_front_y",
            ParamId::GroundBackY => "ground_back_y",
            ParamId::Air1X => "air1_x",
            ParamId::Air1Y => "air1_y",
            ParamId::Air1Z => "air1_z",
            ParamId::Air2X => "air2_x",
            ParamId::Air2Y => "air2_y",
            ParamId::Air2Z => "air2_z",
            ParamId::Air3X => "air3_x",
            ParamId::Air3Y => "air3_y",
            ParamId::Air3Z => "air3_z",
            ParamId::WagPhase => "wag_phase",
            ParamId::WagAmpX => "wag_amp_x",
            ParamId::WagAmpY => "wag_amp_y",
            ParamId::LiftDuration => "lift_duration",
            ParamId::Frequency => "frequency",
        }
    }

    pub fn from_name(name: &str) -> Option<ParamId> {
        ParamId::ALL.iter().copied().find(|id| id.name() == name)
    }
}

/// Closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval {
            lower: self.lower.max(other.lower),
            upper: self.upper.min(other.upper),
        }
    }

    /// Point at fraction `t` from `lower` to `upper`; exact at both ends.
    pub fn lerp(&self, t: f64) -> f64 {
        self.lower * (1.0 - t) + self.upper * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub id: ParamId,
    pub min: f64,
    pub max: f64,
    pub center: f64,
    pub min_range: f64,
    pub scaled_by_complexity: bool,
}

impl ParamSpec {
    /// Validates a spec. The conservative interval may poke outside
    /// `[min, max]` (the wag amplitudes are centered on their minimum);
    /// decoded values are clamped to the full range in that case.
    pub fn new(
        id: ParamId,
        min: f64,
        max: f64,
        center: f64,
        min_range: f64,
        scaled_by_complexity: bool,
    ) -> Result<Self, ParamError> {
        let fail = |message: &str| ParamError::InvalidSpec {
            name: id.name().to_string(),
            message: message.to_string(),
        };
        if ![min, max, center, min_range].iter().all(|v| v.is_finite()) {
            return Err(fail("non-finite value"));
        }
        if min >= max {
            return Err(fail("min must be below max"));
        }
        if min_range < 0.0 {
            return Err(fail("negative minimum range"));
        }
        if center < min || center > max {
            return Err(fail("center outside [min, max]"));
        }
        if min_range > max - min {
            return Err(fail("minimum range wider than the full range"));
        }
        Ok(ParamSpec {
            id,
            min,
            max,
            center,
            min_range,
            scaled_by_complexity,
        })
    }

    /// A parameter that always spans its full range.
    pub fn fixed(id: ParamId, min: f64, max: f64) -> Result<Self, ParamError> {
        Self::new(id, min, max, 0.5 * (min + max), max - min, false)
    }

    pub fn full_range(&self) -> Interval {
        Interval::new(self.min, self.max)
    }

    /// `center ± min_range / 2`, the interval used at zero complexity.
    pub fn conservative(&self) -> Interval {
        let half = self.min_range / 2.0;
        Interval::new(self.center - half, self.center + half)
    }
}

/// Controller complexity in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Complexity(f64);

impl Complexity {
    pub const ZERO: Complexity = Complexity(0.0);
    pub const FULL: Complexity = Complexity(1.0);

    pub fn new(value: f64) -> Result<Self, ParamError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Complexity(value))
        } else {
            Err(ParamError::Complexity(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Complexity {
    type Error = ParamError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Complexity::new(value)
    }
}

impl From<Complexity> for f64 {
    fn from(c: Complexity) -> f64 {
        c.0
    }
}

/// Normalized genome; every gene in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Genotype(Vec<f64>);

impl Genotype {
    pub fn new(genes: Vec<f64>) -> Result<Self, ParamError> {
        for (index, &value) in genes.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ParamError::Gene { index, value });
            }
        }
        Ok(Genotype(genes))
    }

    /// Every gene set to `value` (clamped into the unit interval).
    pub fn uniform(value: f64) -> Self {
        Genotype(vec![value.clamp(0.0, 1.0); PARAM_COUNT])
    }

    pub fn genes(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Genotype {
    type Error = ParamError;
    fn try_from(genes: Vec<f64>) -> Result<Self, Self::Error> {
        Genotype::new(genes)
    }
}

impl From<Genotype> for Vec<f64> {
    fn from(g: Genotype) -> Vec<f64> {
        g.0
    }
}

/// Bounds at complexity `c`: each end of the conservative interval moves
/// linearly toward the matching end of the full range.
pub fn effective_bounds(spec: &ParamSpec, c: Complexity) -> Interval {
    if !spec.scaled_by_complexity {
        return spec.full_range();
    }
    let inner = spec.conservative();
    Interval::new(
        toward(inner.lower, spec.min, c.value()),
        toward(inner.upper, spec.max, c.value()),
    )
}

/// `from + (to - from) * c`, exact at both ends and monotone in `c`; the
/// clamp stops rounding from stepping past `to` (or off a constant bound).
fn toward(from: f64, to: f64, c: f64) -> f64 {
    if c >= 1.0 {
        return to;
    }
    let v = from + (to - from) * c;
    if to >= from {
        v.clamp(from, to)
    } else {
        v.clamp(to, from)
    }
}

/// The phenotype values actually reachable at complexity `c`, i.e.
/// [`effective_bounds`] clipped to the full range.
pub fn reachable_bounds(spec: &ParamSpec, c: Complexity) -> Interval {
    effective_bounds(spec, c).intersect(&spec.full_range())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamTable {
    specs: [ParamSpec; PARAM_COUNT],
}

impl ParamTable {
    pub fn new(specs: [ParamSpec; PARAM_COUNT]) -> Result<Self, ParamError> {
        for (i, spec) in specs.iter().enumerate() {
            if spec.id != ParamId::ALL[i] {
                return Err(ParamError::InvalidSpec {
                    name: spec.id.name().to_string(),
                    message: format!("expected `{}` at position {i}", ParamId::ALL[i].name()),
                });
            }
        }
        Ok(ParamTable { specs })
    }

    /// Reads every `param.<name>` entry; all 16 must be present.
    pub fn from_config(kv: &KeyValues) -> Result<Self, ConfigError> {
        let mut specs: [Option<ParamSpec>; PARAM_COUNT] = [None; PARAM_COUNT];
        for (name, value) in kv.section("param") {
            let key = format!("param.{name}");
            let id = ParamId::from_name(name).ok_or_else(|| ConfigError::Unknown(key.clone()))?;
            specs[id.index()] = Some(parse_spec(id, &key, value)?);
        }
        let mut out = Vec::with_capacity(PARAM_COUNT);
        for (id, spec) in ParamId::ALL.iter().zip(specs) {
            out.push(spec.ok_or_else(|| ConfigError::Missing(format!("param.{}", id.name())))?);
        }
        let specs: [ParamSpec; PARAM_COUNT] = out.try_into().expect("16 specs");
        ParamTable::new(specs).map_err(|e| ConfigError::invalid("param", e))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_config(&KeyValues::parse(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_config(&KeyValues::load(path)?)
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.index()]
    }

    pub fn specs(&self) -> &[ParamSpec; PARAM_COUNT] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        PARAM_COUNT
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Maps a genotype onto the phenotype box at complexity `c`.
    pub fn decode(&self, genotype: &Genotype, c: Complexity) -> Result<GaitPhenotype, ParamError> {
        decode(genotype, self, c)
    }
}

impl Default for ParamTable {
    fn default() -> Self {
        ParamTable::parse(DEFAULT_CONFIG).expect("shipped table is valid")
    }
}

fn parse_spec(id: ParamId, key: &str, value: &str) -> Result<ParamSpec, ConfigError> {
    let fields: Vec<&str> = value.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(ConfigError::invalid(
            key,
            "expected `min, max, center, min_range, scaled|fixed`",
        ));
    }
    let real = |s: &str| config::parse_real(s).map_err(|m| ConfigError::invalid(key, m));
    let min = real(fields[0])?;
    let max = real(fields[1])?;
    let scaled = match fields[4] {
        "scaled" => true,
        "fixed" => false,
        other => return Err(ConfigError::invalid(key, format!("unknown flag `{other}`"))),
    };
    let spec = if fields[2] == "-" || fields[3] == "-" {
        if scaled {
            return Err(ConfigError::invalid(key, "a scaled parameter needs center and range"));
        }
        ParamSpec::fixed(id, min, max)
    } else {
        ParamSpec::new(id, min, max, real(fields[2])?, real(fields[3])?, scaled)
    };
    spec.map_err(|e| ConfigError::invalid(key, e))
}

/// Decoded controller parameters in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitPhenotype {
    /// mm, leg-local forward axis.
    pub ground_front_y: f64,
    pub ground_back_y: f64,
    /// Three air points, each `[x, y, z]` in mm.
    pub air: [[f64; 3]; 3],
    /// radians
    pub wag_phase: f64,
    /// mm
    pub wag_amp_x: f64,
    pub wag_amp_y: f64,
    /// fraction of the gait period
    pub lift_duration: f64,
    /// Hz
    pub frequency: f64,
}

impl GaitPhenotype {
    pub fn from_values(v: &[f64; PARAM_COUNT]) -> Self {
        GaitPhenotype {
            ground_front_y: v[0],
            ground_back_y: v[1],
            air: [[v[2], v[3], v[4]], [v[5], v[6], v[7]], [v[8], v[9], v[10]]],
            wag_phase: v[11],
            wag_amp_x: v[12],
            wag_amp_y: v[13],
            lift_duration: v[14],
            frequency: v[15],
        }
    }

    pub fn values(&self) -> [f64; PARAM_COUNT] {
        let a = &self.air;
        [
            self.ground_front_y,
            self.ground_back_y,
            a[0][0],
            a[0][1],
            a[0][2],
            a[1][0],
            a[1][1],
            a[1][2],
            a[2][0],
            a[2][1],
            a[2][2],
            self.wag_phase,
            self.wag_amp_x,
            self.wag_amp_y,
            self.lift_duration,
            self.frequency,
        ]
    }

    pub fn value(&self, id: ParamId) -> f64 {
        self.values()[id.index()]
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    /// The table's center values, with frequency at the middle of its range.
    pub fn centered(table: &ParamTable) -> Self {
        let mut v = [0.0; PARAM_COUNT];
        for (slot, spec) in v.iter_mut().zip(table.specs()) {
            *slot = spec.center;
        }
        GaitPhenotype::from_values(&v)
    }
}

/// `parameter_i = lower_i(c) + gene_i * (upper_i(c) - lower_i(c))`, clamped to
/// the parameter's full range.
pub fn decode(genotype: &Genotype, table: &ParamTable, c: Complexity) -> Result<GaitPhenotype, ParamError> {
    if genotype.len() != table.len() {
        return Err(ParamError::LengthMismatch {
            expected: table.len(),
            got: genotype.len(),
        });
    }
    let mut values = [0.0; PARAM_COUNT];
    for ((slot, spec), &gene) in values.iter_mut().zip(table.specs()).zip(genotype.genes()) {
        *slot = effective_bounds(spec, c).lerp(gene).clamp(spec.min, spec.max);
    }
    Ok(GaitPhenotype::from_values(&values))
}

/// Inverse of [`decode`] for values inside the reachable box. Parameters with
/// a zero-width box map to gene 0.5.
pub fn encode(phenotype: &GaitPhenotype, table: &ParamTable, c: Complexity) -> Genotype {
    let genes = table
        .specs()
        .iter()
        .zip(phenotype.values())
        .map(|(spec, value)| {
            let b = effective_bounds(spec, c);
            if b.width() > 0.0 {
                ((value - b.lower) / b.width()).clamp(0.0, 1.0)
            } else {
                0.5
            }
        })
        .collect();
    Genotype(genes)
}

/// Whether every reachable interval at `c1` lies inside the one at `c2`.
pub fn nesting_check(table: &ParamTable, c1: Complexity, c2: Complexity) -> bool {
    table.specs().iter().all(|spec| {
        reachable_bounds(spec, c2).contains_interval(&reachable_bounds(spec, c1))
    })
}
