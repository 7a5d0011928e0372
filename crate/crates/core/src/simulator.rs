//! Deterministic kinematic surrogate of a physics rollout.
//!
//! The robot walks on flat ground. Feet in contact do not slip, so the
//! body moves by the mean of the negated contact-foot displacements. A swing
//! foot whose target dips below the ground scuffs and counts as a contact,
//! dragging the body. The proxy accelerometer is the second difference of
//! the body position plus impulses at every lift-off and touchdown,
//! proportional to the velocity mismatch between swing and stance. The
//! proxy orientation is the body tilt toward the support-polygon
//! eccentricity. An unreachable foot target or a static margin below the
//! fall threshold ends the rollout as a fall.
//!
//! Units: positions in the trace are metres, accelerations m/s², angles
//! radians. Trajectory targets are millimetres.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::gait_params::GaitPhenotype;
use crate::kinematics::{self, BodyGeometry, IkError, LegGeometry};
use crate::trajectory::{wag_offset, Leg, LegTrajectory, WagConfig};
use crate::vec3::Vec3;

/// The walking task: reach `distance_goal` metres forward within `timeout`
/// seconds, sampled at `sample_rate` Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTask {
    pub distance_goal: f64,
    pub timeout: f64,
    pub sample_rate: f64,
}

impl Default for EvaluationTask {
    fn default() -> Self {
        EvaluationTask {
            distance_goal: 1.0,
            timeout: 10.0,
            sample_rate: 100.0,
        }
    }
}

impl EvaluationTask {
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }
}

/// Tuning constants of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub geometry: BodyGeometry,
    /// Acceleration spike per unit of swing/stance velocity mismatch (1/s).
    pub impact_gain: f64,
    /// Body tilt per metre of support eccentricity (rad/m).
    pub tilt_gain: f64,
    /// Static margin (mm) below which the robot tips over.
    pub fall_margin: f64,
    /// Acceleration spike recorded when falling (m/s²).
    pub fall_impulse: f64,
    /// Tilt recorded when falling (rad).
    pub fall_tilt: f64,
    /// Standard deviations of the additive sensor noise.
    pub acc_noise: f64,
    pub ang_noise: f64,
}

impl Default for SurrogateModel {
    fn default() -> Self {
        SurrogateModel {
            geometry: BodyGeometry::default(),
            impact_gain: 4.0,
            tilt_gain: 2.0,
            fall_margin: 40.0,
            fall_impulse: 30.0,
            fall_tilt: 1.0,
            acc_noise: 0.02,
            ang_noise: 0.002,
        }
    }
}

/// Surrogate settings plus the stability weight of the accelerometer term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Simulator {
    pub task: EvaluationTask,
    pub model: SurrogateModel,
    pub alpha: f64,
}

impl Default for Simulator {
    fn default() -> Self {
        Simulator {
            task: EvaluationTask::default(),
            model: SurrogateModel::default(),
            alpha: 1.0,
        }
    }
}

impl Simulator {
    /// Reads `leg.*`, `sim.*` and `alpha` keys; anything absent keeps its default.
    pub fn from_config(kv: &KeyValues) -> Result<Self, ConfigError> {
        let mut sim = Simulator::default();
        sim.model.geometry = BodyGeometry::from_config(kv)?;
        if let Some(alpha) = kv.real("alpha")? {
            if alpha < 0.0 {
                return Err(ConfigError::invalid("alpha", "must be non-negative"));
            }
            sim.alpha = alpha;
        }
        for (name, _) in kv.section("sim") {
            let key = format!("sim.{name}");
            let value = kv.real(&key)?.expect("key present");
            if value < 0.0 {
                return Err(ConfigError::invalid(&key, "must be non-negative"));
            }
            let slot = match name {
                "distance_goal" => &mut sim.task.distance_goal,
                "timeout" => &mut sim.task.timeout,
                "sample_rate" => &mut sim.task.sample_rate,
                "impact_gain" => &mut sim.model.impact_gain,
                "tilt_gain" => &mut sim.model.tilt_gain,
                "fall_margin" => &mut sim.model.fall_margin,
                "fall_impulse" => &mut sim.model.fall_impulse,
                "fall_tilt" => &mut sim.model.fall_tilt,
                "acc_noise" => &mut sim.model.acc_noise,
                "ang_noise" => &mut sim.model.ang_noise,
                _ => return Err(ConfigError::Unknown(key)),
            };
            *slot = value;
        }
        for (key, v) in [
            ("sim.distance_goal", sim.task.distance_goal),
            ("sim.timeout", sim.task.timeout),
            ("sim.sample_rate", sim.task.sample_rate),
        ] {
            if v <= 0.0 {
                return Err(ConfigError::invalid(key, "must be positive"));
            }
        }
        Ok(sim)
    }

    pub fn rollout(&self, p: &GaitPhenotype, seed: u64) -> RolloutTrace {
        rollout_with(p, &self.task, &self.model, seed, FallPolicy::Stop)
    }

    pub fn evaluate(&self, p: &GaitPhenotype, seed: u64) -> Objectives {
        let trace = self.rollout(p, seed);
        Objectives {
            speed: fitness_speed(&trace),
            stability: fitness_stability(&trace, self.alpha)
                .expect("rollouts record at least two samples"),
        }
    }
}

/// The two maximized objectives: speed in m/min and stability (≤ 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub speed: f64,
    pub stability: f64,
}

impl Objectives {
    pub fn new(speed: f64, stability: f64) -> Self {
        Objectives { speed, stability }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FallCause {
    OutOfReach { leg: Leg, shortfall: f64 },
    JointLimit { leg: Leg },
    Tipped { margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTrace {
    pub times: Vec<f64>,
    /// Body position (m).
    pub body: Vec<[f64; 3]>,
    /// Proxy accelerometer (m/s²).
    pub acc: Vec<[f64; 3]>,
    /// Proxy roll, pitch, yaw (rad).
    pub ang: Vec<[f64; 3]>,
    pub fall: Option<FallCause>,
    /// Evaluation time (s). A fallen robot lies still until the timeout.
    pub elapsed: f64,
    /// For a fall: the speed (m/min) the gait would have scored had it
    /// walked on. A fall never scores above it.
    #[serde(default)]
    pub untruncated_speed: Option<f64>,
}

impl RolloutTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn fell(&self) -> bool {
        self.fall.is_some()
    }

    /// Writes `t,body_x,body_y,body_z,acc_x,acc_y,acc_z,ang_x,ang_y,ang_z,fall`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,body_x,body_y,body_z,acc_x,acc_y,acc_z,ang_x,ang_y,ang_z,fall")?;
        let last = self.len().saturating_sub(1);
        for i in 0..self.len() {
            let (b, a, g) = (self.body[i], self.acc[i], self.ang[i]);
            let fall = u8::from(i == last && self.fell());
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.times[i], b[0], b[1], b[2], a[0], a[1], a[2], g[0], g[1], g[2], fall
            )?;
        }
        Ok(())
    }
}

/// Whether fall events end the rollout. `Ignore` exists to compare a fallen
/// rollout against its untruncated hypothetical.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallPolicy {
    Stop,
    Ignore,
}

/// Kinematic speed of the body (m/s) from the stance construction alone.
pub fn nominal_speed(p: &GaitPhenotype) -> f64 {
    let span = (p.ground_front_y - p.ground_back_y).abs() / 1000.0;
    span * p.frequency / (1.0 - p.lift_duration)
}

struct Walker<'a> {
    traj: LegTrajectory,
    wag: WagConfig,
    period: f64,
    legs: [LegGeometry; 4],
    model: &'a SurrogateModel,
}

struct Pose {
    /// Body-frame foot targets (mm).
    feet: [Vec3; 4],
    /// Leg-local foot targets (mm).
    local: [Vec3; 4],
    swing: [bool; 4],
}

impl Walker<'_> {
    fn pose(&self, t: f64) -> Pose {
        let wag = wag_offset(&self.wag, t, self.period);
        let shift = Vec3::new(wag[0], wag[1], -self.model.geometry.stance_height);
        let mut feet = [Vec3::ZERO; 4];
        let mut local = [Vec3::ZERO; 4];
        let mut swing = [false; 4];
        for leg in Leg::ALL {
            let i = leg.index();
            local[i] = self.traj.foot_position(leg, t);
            feet[i] = self.legs[i].hip_offset + local[i] + shift;
            swing[i] = self.traj.schedule.in_swing(leg, t);
        }
        Pose { feet, local, swing }
    }

    fn in_contact(pose: &Pose, i: usize) -> bool {
        !pose.swing[i] || pose.local[i].z < -1e-9
    }

    fn reach_check(&self, pose: &Pose) -> Option<FallCause> {
        for leg in Leg::ALL {
            let i = leg.index();
            match kinematics::inverse(&self.legs[i], pose.feet[i]) {
                Ok(_) => {}
                Err(IkError::OutOfReach { shortfall }) => {
                    return Some(FallCause::OutOfReach { leg, shortfall })
                }
                Err(IkError::JointLimit { .. }) => return Some(FallCause::JointLimit { leg }),
            }
        }
        None
    }

    /// Swing/stance velocity mismatch (mm/s) at touchdown and lift-off,
    /// measured over one sample interval.
    fn transition_kicks(&self, dt: f64) -> (Vec3, Vec3) {
        let stance = self.traj.schedule.stance_fraction();
        let dphase = dt / self.period;
        let v_stance = self.traj.stance_velocity();
        let lift = (self.traj.at_phase((stance + dphase).min(1.0 - 1e-12))
            - self.traj.at_phase(stance))
            * (1.0 / dt);
        let land = (self.traj.at_phase(1.0 - 1e-12) - self.traj.at_phase((1.0 - dphase).max(stance)))
            * (1.0 / dt);
        (land - v_stance, lift - v_stance)
    }
}

/// Support-polygon statistics for the feet in contact: vertex mean and the
/// signed distance from the body center to the polygon boundary.
fn support(contacts: &[(f64, f64)]) -> ((f64, f64), f64) {
    let n = contacts.len() as f64;
    let centroid = contacts
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
    let hull = convex_hull(contacts);
    (centroid, signed_margin(&hull, (0.0, 0.0)))
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise hull (monotone chain).
fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn segment_distance(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Positive inside the polygon, negative outside.
fn signed_margin(hull: &[(f64, f64)], p: (f64, f64)) -> f64 {
    match hull.len() {
        0 => f64::NEG_INFINITY,
        1 => -((p.0 - hull[0].0).hypot(p.1 - hull[0].1)),
        2 => -segment_distance(hull[0], hull[1], p),
        n => {
            let mut inside = true;
            let mut dist = f64::INFINITY;
            for i in 0..n {
                let (a, b) = (hull[i], hull[(i + 1) % n]);
                if cross(a, b, p) < 0.0 {
                    inside = false;
                }
                dist = dist.min(segment_distance(a, b, p));
            }
            if inside {
                dist
            } else {
                -dist
            }
        }
    }
}

/// Rolls out `p` on the task. Identical inputs give bit-identical traces.
pub fn rollout(p: &GaitPhenotype, task: &EvaluationTask, model: &SurrogateModel, seed: u64) -> RolloutTrace {
    rollout_with(p, task, model, seed, FallPolicy::Stop)
}

pub fn rollout_with(
    p: &GaitPhenotype,
    task: &EvaluationTask,
    model: &SurrogateModel,
    seed: u64,
    policy: FallPolicy,
) -> RolloutTrace {
    let walker = Walker {
        traj: LegTrajectory::new(p),
        wag: WagConfig::from_phenotype(p),
        period: p.period(),
        legs: Leg::ALL.map(|leg| model.geometry.leg(leg)),
        model,
    };
    let dt = task.dt();
    let ticks = (task.timeout * task.sample_rate).round() as usize;
    let (land_kick, lift_kick) = walker.transition_kicks(dt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acc_noise = Normal::new(0.0, model.acc_noise).expect("finite noise level");
    let ang_noise = Normal::new(0.0, model.ang_noise).expect("finite noise level");

    let mut trace = RolloutTrace {
        times: Vec::with_capacity(ticks + 1),
        body: Vec::with_capacity(ticks + 1),
        acc: Vec::with_capacity(ticks + 1),
        ang: Vec::with_capacity(ticks + 1),
        fall: None,
        elapsed: task.timeout,
        untruncated_speed: None,
    };

    // Two warm-up samples so the first recorded acceleration is steady state.
    let mut prev = walker.pose(-2.0 * dt);
    let mut body = [0.0f64; 3];
    let mut velocity = step_velocity(&walker.pose(-dt), &prev, dt);
    prev = walker.pose(-dt);

    for i in 0..=ticks {
        let t = i as f64 * dt;
        let pose = walker.pose(t);
        let v = step_velocity(&pose, &prev, dt);
        body[0] += v[0] * dt;
        body[1] += v[1] * dt;
        let mut acc = [
            (v[0] - velocity[0]) / dt / 1000.0,
            (v[1] - velocity[1]) / dt / 1000.0,
            0.0,
        ];
        velocity = v;

        for k in 0..4 {
            let kick = match (prev.swing[k], pose.swing[k]) {
                (true, false) => Some(land_kick),
                (false, true) => Some(lift_kick),
                _ => None,
            };
            if let Some(kick) = kick {
                let mirrored = if Leg::ALL[k].is_left() { kick.mirror_x() } else { kick };
                acc[0] -= model.impact_gain * mirrored.x / 1000.0;
                acc[1] -= model.impact_gain * mirrored.y / 1000.0;
                acc[2] -= model.impact_gain * mirrored.z / 1000.0;
            }
        }

        let contacts: Vec<(f64, f64)> = (0..4)
            .filter(|&k| Walker::in_contact(&pose, k))
            .map(|k| (pose.feet[k].x, pose.feet[k].y))
            .collect();
        let (centroid, margin) = support(&contacts);
        let mut ang = [
            model.tilt_gain * (-centroid.0) / 1000.0,
            model.tilt_gain * (-centroid.1) / 1000.0,
            0.0,
        ];

        let fall = walker.reach_check(&pose).or_else(|| {
            (margin < -model.fall_margin).then_some(FallCause::Tipped { margin })
        });
        let fallen = policy == FallPolicy::Stop && fall.is_some();
        if fallen {
            acc[2] -= model.fall_impulse;
            ang[0] += model.fall_tilt;
        }

        for a in acc.iter_mut() {
            *a += acc_noise.sample(&mut rng);
        }
        for g in ang.iter_mut() {
            *g += ang_noise.sample(&mut rng);
        }
        trace.times.push(t);
        trace.body.push([body[0] / 1000.0, body[1] / 1000.0, body[2] / 1000.0]);
        trace.acc.push(acc);
        trace.ang.push(ang);

        if fallen {
            // one resting sample: the body lies tilted and still
            trace.times.push(t + dt);
            trace.body.push(*trace.body.last().expect("sample pushed above"));
            trace.acc.push([0.0; 3].map(|a: f64| a + acc_noise.sample(&mut rng)));
            trace.ang.push([model.fall_tilt, 0.0, 0.0].map(|g| g + ang_noise.sample(&mut rng)));
            trace.fall = fall;
            break;
        }
        if body[1] / 1000.0 >= task.distance_goal {
            trace.elapsed = t;
            break;
        }
        prev = pose;
    }
    if trace.fell() {
        let walked_on = rollout_with(p, task, model, seed, FallPolicy::Ignore);
        trace.untruncated_speed = Some(fitness_speed(&walked_on));
    }
    trace
}

/// Body velocity (mm/s) over one tick from the feet in contact at both ends.
fn step_velocity(pose: &Pose, prev: &Pose, dt: f64) -> [f64; 2] {
    let mut sum = [0.0, 0.0];
    let mut n = 0usize;
    for k in 0..4 {
        if Walker::in_contact(pose, k) && Walker::in_contact(prev, k) {
            sum[0] -= pose.feet[k].x - prev.feet[k].x;
            sum[1] -= pose.feet[k].y - prev.feet[k].y;
            n += 1;
        }
    }
    if n == 0 {
        return [0.0, 0.0];
    }
    [sum[0] / (n as f64 * dt), sum[1] / (n as f64 * dt)]
}

/// Forward displacement over elapsed time, in m/min, floored at zero and,
/// after a fall, capped at the untruncated speed.
pub fn fitness_speed(trace: &RolloutTrace) -> f64 {
    match (trace.body.first(), trace.body.last()) {
        (Some(start), Some(end)) if trace.elapsed > 0.0 => {
            let speed = ((end[1] - start[1]) / trace.elapsed * 60.0).max(0.0);
            trace.untruncated_speed.map_or(speed, |cap| speed.min(cap))
        }
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("stability needs at least two samples per axis, got {0}")]
pub struct TooFewSamples(pub usize);

/// Population standard deviation, `sqrt(mean(a²) - mean(a)²)`, evaluated
/// as the mean squared deviation so constant signals give exactly zero.
pub fn signal_spread(samples: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = samples.clone().fold((0usize, 0.0), |(n, s), a| (n + 1, s + a));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    let var = samples.map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    var.sqrt()
}

/// `-(alpha * Σ spread(acc) + Σ spread(ang))` over the three axes.
pub fn fitness_stability(trace: &RolloutTrace, alpha: f64) -> Result<f64, TooFewSamples> {
    if trace.acc.len() < 2 || trace.ang.len() < 2 {
        return Err(TooFewSamples(trace.acc.len().min(trace.ang.len())));
    }
    let axis_sum = |s: &[[f64; 3]]| -> f64 {
        (0..3).map(|j| signal_spread(s.iter().map(move |v| v[j]))).sum()
    };
    Ok(-(alpha * axis_sum(&trace.acc) + axis_sum(&trace.ang)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait_params::ParamTable;

    fn defaults(freq: f64) -> GaitPhenotype {
        let mut p = GaitPhenotype::centered(&ParamTable::default());
        p.frequency = freq;
        p
    }

    fn trace_from(acc: Vec<[f64; 3]>, ang: Vec<[f64; 3]>) -> RolloutTrace {
        let n = acc.len();
        RolloutTrace {
            times: (0..n).map(|i| i as f64).collect(),
            body: vec![[0.0; 3]; n],
            acc,
            ang,
            fall: None,
            elapsed: 1.0,
            untruncated_speed: None,
        }
    }

    #[test]
    fn speed_examples() {
        let mut t = trace_from(vec![[0.0; 3]; 2], vec![[0.0; 3]; 2]);
        t.body = vec![[0.0; 3], [0.0, 1.0, 0.0]];
        t.elapsed = 10.0;
        assert!((fitness_speed(&t) - 6.0).abs() < 1e-12);
        t.body[1] = [0.3, 0.0, 0.0];
        assert_eq!(fitness_speed(&t), 0.0);
        t.body[1] = [0.0, -0.1, 0.0];
        assert_eq!(fitness_speed(&t), 0.0);
    }

    #[test]
    fn stability_examples() {
        let flat = trace_from(vec![[0.5, 1.0, -2.0]; 10], vec![[0.25; 3]; 10]);
        assert_eq!(fitness_stability(&flat, 1.0).unwrap(), 0.0);
        let acc: Vec<[f64; 3]> = (0..10)
            .map(|i| [if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0, 0.0])
            .collect();
        let square = trace_from(acc, vec![[0.0; 3]; 10]);
        assert!((fitness_stability(&square, 1.0).unwrap() + 1.0).abs() < 1e-15);
        let s1 = fitness_stability(&square, 1.0).unwrap();
        let s2 = fitness_stability(&square, 2.0).unwrap();
        assert_eq!(s2, 2.0 * s1);
        let single = trace_from(vec![[0.0; 3]], vec![[0.0; 3]]);
        assert_eq!(fitness_stability(&single, 1.0), Err(TooFewSamples(1)));
    }

    #[test]
    fn zero_wag_keeps_body_centered() {
        let p = defaults(1.0);
        let trace = rollout(&p, &EvaluationTask::default(), &SurrogateModel::default(), 3);
        assert!(!trace.fell());
        assert!(trace.body.iter().all(|b| b[0] == 0.0));
    }

    #[test]
    fn default_speed_matches_stance_formula() {
        for f in [0.25, 0.6, 1.0, 1.5] {
            let p = defaults(f);
            let trace = rollout(&p, &EvaluationTask::default(), &SurrogateModel::default(), 0);
            assert!(!trace.fell());
            let expected = 0.15 * f / (1.0 - 0.175) * 60.0;
            assert!(
                (fitness_speed(&trace) - expected).abs() < 1e-9 * expected,
                "{f}: {} vs {expected}",
                fitness_speed(&trace)
            );
            assert!((nominal_speed(&p) * 60.0 - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn unreachable_air_point_falls() {
        let mut p = defaults(1.0);
        p.air[1] = [0.0, 0.0, 80.0];
        let mut model = SurrogateModel::default();
        // uneven segments leave a dead zone close to the hip that a high air
        // point falls into
        model.geometry.femur_length = 250.0;
        model.geometry.tibia_length = 110.0;
        model.geometry.stance_height = 200.0;
        let ground_only = {
            let mut q = p;
            q.air[1][2] = 50.0;
            rollout(&q, &EvaluationTask::default(), &model, 0)
        };
        assert!(!ground_only.fell());
        let trace = rollout(&p, &EvaluationTask::default(), &model, 0);
        assert!(matches!(trace.fall, Some(FallCause::OutOfReach { .. })), "{:?}", trace.fall);
        assert_eq!(trace.elapsed, 10.0);
        assert!(trace.len() >= 2);
        assert!(fitness_speed(&trace) <= trace.untruncated_speed.unwrap());
    }

    #[test]
    fn fall_on_the_first_sample_still_scores() {
        let p = defaults(1.0);
        let mut model = SurrogateModel::default();
        model.geometry.stance_height = 400.0;
        let trace = rollout(&p, &EvaluationTask::default(), &model, 0);
        assert!(trace.fell());
        assert_eq!(trace.len(), 2);
        let sim = Simulator { model, ..Simulator::default() };
        let o = sim.evaluate(&p, 0);
        assert_eq!(o.speed, 0.0);
        assert!(o.stability < -1.0);
    }

    #[test]
    fn rollout_is_deterministic() {
        let mut p = defaults(1.2);
        p.wag_amp_x = 10.0;
        p.wag_amp_y = 4.0;
        p.wag_phase = 0.3;
        let a = rollout(&p, &EvaluationTask::default(), &SurrogateModel::default(), 42);
        let b = rollout(&p, &EvaluationTask::default(), &SurrogateModel::default(), 42);
        assert_eq!(a, b);
        let c = rollout(&p, &EvaluationTask::default(), &SurrogateModel::default(), 43);
        assert_ne!(a.acc, c.acc);
    }

    #[test]
    fn stability_never_positive() {
        let sim = Simulator::default();
        for f in [0.25, 0.8, 1.5] {
            let o = sim.evaluate(&defaults(f), 7);
            assert!(o.stability <= 0.0);
            assert!(o.speed > 0.0);
        }
    }

    #[test]
    fn larger_stance_span_is_faster() {
        let task = EvaluationTask::default();
        let model = SurrogateModel::default();
        let mut prev = 0.0;
        for back in [-60.0, -80.0, -100.0, -120.0] {
            let mut p = defaults(0.5);
            p.ground_back_y = back;
            let speed = fitness_speed(&rollout(&p, &task, &model, 1));
            assert!(speed > prev, "{back}: {speed} <= {prev}");
            prev = speed;
        }
    }

    #[test]
    fn hull_and_margin() {
        let square = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        let ((cx, cy), m) = support(&square);
        assert!(cx.abs() < 1e-15 && cy.abs() < 1e-15);
        assert!((m - 1.0).abs() < 1e-12);
        let shifted = [(2.0, 1.0), (3.0, 1.0), (2.0, -1.0)];
        let (_, m) = support(&shifted);
        assert!((m + 2.0).abs() < 1e-12);
    }

    #[test]
    fn simulator_config_overrides() {
        let kv = KeyValues::parse("alpha = 0.5\nsim.timeout = 5\nleg.stance_height = 300").unwrap();
        let sim = Simulator::from_config(&kv).unwrap();
        assert_eq!(sim.alpha, 0.5);
        assert_eq!(sim.task.timeout, 5.0);
        assert_eq!(sim.model.geometry.stance_height, 300.0);
        assert!(Simulator::from_config(&KeyValues::parse("sim.gravity = 9.8").unwrap()).is_err());
    }

    #[test]
    fn trace_csv_has_header() {
        let trace = rollout(&defaults(1.0), &EvaluationTask::default(), &SurrogateModel::default(), 0);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,body_x,body_y,body_z,acc_x"));
        assert_eq!(text.lines().count(), trace.len() + 1);
    }
}
