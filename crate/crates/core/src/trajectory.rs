//! Foot trajectories for the crawl gait.
//!
//! Leg-local frame: `x` sideways (outward for right legs, mirrored for left
//! legs), `y` forward, `z` up from the ground. During stance the foot slides
//! from the front ground point to the back ground point at constant speed.
//! During swing it follows a looping cubic Hermite spline that leaves the
//! back ground point, passes the three air points and lands on the front
//! ground point.

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::gait_params::GaitPhenotype;
use crate::vec3::Vec3;

/// Offsets the two wag axes against each other.
pub const WAG_AXIS_OFFSET: f64 = 0.43;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Leg {
    LeftFront,
    RightFront,
    LeftHind,
    RightHind,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::LeftFront, Leg::RightFront, Leg::LeftHind, Leg::RightHind];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_left(self) -> bool {
        matches!(self, Leg::LeftFront | Leg::LeftHind)
    }

    pub fn is_front(self) -> bool {
        matches!(self, Leg::LeftFront | Leg::RightFront)
    }

    /// Phase offset giving the lift order LF, RH, RF, LH a quarter period apart.
    pub fn phase_offset(self) -> f64 {
        match self {
            Leg::LeftFront => 0.0,
            Leg::LeftHind => 0.25,
            Leg::RightFront => 0.5,
            Leg::RightHind => 0.75,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Leg::LeftFront => "LF",
            Leg::RightFront => "RF",
            Leg::LeftHind => "LH",
            Leg::RightHind => "RH",
        }
    }
}

/// Ground and air control points of one leg, in traversal order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPointSet {
    pub ground_front: Vec3,
    pub ground_back: Vec3,
    pub air: [Vec3; 3],
}

/// All orderings of three air points, in lexicographic order.
pub const AIR_PERMUTATIONS: [[usize; 3]; 6] =
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Length of the polyline `back -> a -> b -> c -> front`.
pub fn polyline_length(back: Vec3, air: &[Vec3; 3], front: Vec3) -> f64 {
    back.distance(air[0]) + air[0].distance(air[1]) + air[1].distance(air[2]) + air[2].distance(front)
}

/// Orders the air points to give the shortest polyline; the first
/// permutation in lexicographic order wins ties.
pub fn shortest_air_order(back: Vec3, air: [Vec3; 3], front: Vec3) -> [Vec3; 3] {
    let mut best = air;
    let mut best_len = f64::INFINITY;
    for perm in AIR_PERMUTATIONS {
        let candidate = [air[perm[0]], air[perm[1]], air[perm[2]]];
        let len = polyline_length(back, &candidate, front);
        if len < best_len {
            best_len = len;
            best = candidate;
        }
    }
    best
}

/// Sorts the ground points so stance always moves the foot backward, then
/// picks the shortest air ordering.
pub fn build_control_points(p: &GaitPhenotype) -> ControlPointSet {
    let front_y = p.ground_front_y.max(p.ground_back_y);
    let back_y = p.ground_front_y.min(p.ground_back_y);
    let ground_front = Vec3::new(0.0, front_y, 0.0);
    let ground_back = Vec3::new(0.0, back_y, 0.0);
    let air = p.air.map(Vec3::from_array);
    ControlPointSet {
        ground_front,
        ground_back,
        air: shortest_air_order(ground_back, air, ground_front),
    }
}

/// Closed Catmull-Rom loop through back, air 1-3 and front, with uniform
/// knots. `u = 0` is the back ground point, `u = 1` the front one; the
/// stance chord closes the loop and shapes the end tangents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingSpline {
    points: [Vec3; 5],
    tangents: [Vec3; 5],
}

impl SwingSpline {
    pub const SEGMENTS: usize = 4;

    pub fn new(cp: &ControlPointSet) -> Self {
        let points = [cp.ground_back, cp.air[0], cp.air[1], cp.air[2], cp.ground_front];
        let n = points.len();
        let tangents =
            std::array::from_fn(|i| (points[(i + 1) % n] - points[(i + n - 1) % n]) * 0.5);
        SwingSpline { points, tangents }
    }

    pub fn points(&self) -> &[Vec3; 5] {
        &self.points
    }

    /// Curve parameter of control point `i`.
    pub fn knot(i: usize) -> f64 {
        i as f64 / Self::SEGMENTS as f64
    }

    pub fn eval(&self, u: f64) -> Vec3 {
        let s = u.clamp(0.0, 1.0) * Self::SEGMENTS as f64;
        let k = (s.floor() as usize).min(Self::SEGMENTS - 1);
        let t = s - k as f64;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        self.points[k] * h00
            + self.tangents[k] * h10
            + self.points[k + 1] * h01
            + self.tangents[k + 1] * h11
    }
}

pub fn swing_spline(points: &ControlPointSet) -> SwingSpline {
    SwingSpline::new(points)
}

/// Timing of the crawl gait.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitSchedule {
    pub period: f64,
    pub lift_duration: f64,
}

impl GaitSchedule {
    pub fn new(p: &GaitPhenotype) -> Self {
        GaitSchedule {
            period: p.period(),
            lift_duration: p.lift_duration,
        }
    }

    /// Gait phase of `leg` at time `t`, in `[0, 1)`.
    pub fn phase(&self, leg: Leg, t: f64) -> f64 {
        let phase = (t / self.period + leg.phase_offset()).fract();
        if phase < 0.0 {
            phase + 1.0
        } else {
            phase
        }
    }

    pub fn stance_fraction(&self) -> f64 {
        1.0 - self.lift_duration
    }

    pub fn in_swing(&self, leg: Leg, t: f64) -> bool {
        self.phase(leg, t) >= self.stance_fraction()
    }
}

/// A leg trajectory ready to be sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegTrajectory {
    pub points: ControlPointSet,
    pub spline: SwingSpline,
    pub schedule: GaitSchedule,
}

impl LegTrajectory {
    pub fn new(p: &GaitPhenotype) -> Self {
        let points = build_control_points(p);
        LegTrajectory {
            points,
            spline: SwingSpline::new(&points),
            schedule: GaitSchedule::new(p),
        }
    }

    /// Foot position in the right-leg frame at gait phase `phase`.
    pub fn at_phase(&self, phase: f64) -> Vec3 {
        let stance = self.schedule.stance_fraction();
        if phase < stance {
            let s = phase / stance;
            self.points.ground_front + (self.points.ground_back - self.points.ground_front) * s
        } else {
            let u = (phase - stance) / self.schedule.lift_duration;
            let eased = 0.5 * (1.0 - (PI * u).cos());
            self.spline.eval(eased)
        }
    }

    /// Leg-local foot target at time `t`, mirrored sideways for left legs.
    pub fn foot_position(&self, leg: Leg, t: f64) -> Vec3 {
        let pos = self.at_phase(self.schedule.phase(leg, t));
        if leg.is_left() {
            pos.mirror_x()
        } else {
            pos
        }
    }

    /// Foot velocity during stance, in mm/s (shared by every stance leg).
    pub fn stance_velocity(&self) -> Vec3 {
        let travel = self.points.ground_back - self.points.ground_front;
        travel * (1.0 / (self.schedule.stance_fraction() * self.schedule.period))
    }
}

pub fn foot_position(p: &GaitPhenotype, leg: Leg, t: f64) -> Vec3 {
    LegTrajectory::new(p).foot_position(leg, t)
}

/// Amplitudes and phase of the balancing wag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WagConfig {
    /// mm
    pub amp_x: f64,
    /// mm
    pub amp_y: f64,
    pub phase: f64,
}

impl WagConfig {
    pub fn from_phenotype(p: &GaitPhenotype) -> Self {
        WagConfig {
            amp_x: p.wag_amp_x,
            amp_y: p.wag_amp_y,
            phase: p.wag_phase,
        }
    }
}

/// Body wag `(W_x, W_y)` in mm at time `t` for gait period `period`. The
/// sideways component has the gait period, the forward one half of it.
pub fn wag_offset(w: &WagConfig, t: f64, period: f64) -> [f64; 2] {
    let half = period / 2.0;
    let wx = w.amp_x / 2.0 * (3.0 * (2.0 * PI * (t + w.phase * period) / period).sin()).tanh();
    let wy = w.amp_y / 2.0
        * (3.0 * (2.0 * PI * (t + (w.phase + WAG_AXIS_OFFSET) * half) / half).sin()).tanh();
    [wx, wy]
}

/// Writes `t,leg,x,y,z` rows (leg-local, without wag) sampled at
/// `sample_rate` Hz over `duration` seconds.
pub fn write_trajectory_csv<W: Write>(
    p: &GaitPhenotype,
    duration: f64,
    sample_rate: f64,
    mut out: W,
) -> io::Result<()> {
    let traj = LegTrajectory::new(p);
    writeln!(out, "t,leg,x,y,z")?;
    let ticks = (duration * sample_rate).round() as usize;
    for i in 0..=ticks {
        let t = i as f64 / sample_rate;
        for leg in Leg::ALL {
            let f = traj.foot_position(leg, t);
            // + 0.0 turns the mirrored -0 into 0
            writeln!(out, "{t},{},{},{},{}", leg.short_name(), f.x + 0.0, f.y + 0.0, f.z + 0.0)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait_params::ParamTable;

    fn defaults() -> GaitPhenotype {
        let mut p = GaitPhenotype::centered(&ParamTable::default());
        p.frequency = 1.0;
        p
    }

    #[test]
    fn ground_points_sorted() {
        let mut p = defaults();
        let cp = build_control_points(&p);
        assert_eq!(cp.ground_front.y, 50.0);
        assert_eq!(cp.ground_back.y, -100.0);
        p.ground_front_y = -100.0;
        p.ground_back_y = 50.0;
        let cp = build_control_points(&p);
        assert_eq!(cp.ground_front.y, 50.0);
        assert_eq!(cp.ground_back.y, -100.0);
        assert_eq!(cp.ground_front.x, 0.0);
        assert_eq!(cp.ground_back.z, 0.0);
    }

    #[test]
    fn air_points_ordered_back_to_front() {
        let mut p = defaults();
        p.air = [[0.0, 75.0, 40.0], [0.0, 0.0, 40.0], [0.0, -75.0, 40.0]];
        let cp = build_control_points(&p);
        let ys: Vec<f64> = cp.air.iter().map(|a| a.y).collect();
        assert_eq!(ys, vec![-75.0, 0.0, 75.0]);
    }

    #[test]
    fn spline_hits_knots() {
        let cp = build_control_points(&defaults());
        let s = swing_spline(&cp);
        for (i, pt) in s.points().iter().enumerate() {
            let q = s.eval(SwingSpline::knot(i));
            assert!(q.distance(*pt) <= 1e-9 * pt.norm().max(1.0));
        }
        assert_eq!(s.eval(0.0), cp.ground_back);
        assert_eq!(s.eval(1.0), cp.ground_front);
    }

    #[test]
    fn degenerate_air_points() {
        let mut p = defaults();
        p.air = [[5.0, 10.0, 40.0]; 3];
        let cp = build_control_points(&p);
        let s = swing_spline(&cp);
        for i in 1..4 {
            assert!(s.eval(SwingSpline::knot(i)).distance(Vec3::new(5.0, 10.0, 40.0)) < 1e-9);
        }
        for i in 0..=100 {
            let q = s.eval(i as f64 / 100.0);
            assert!(q.x.is_finite() && q.y.is_finite() && q.z.is_finite());
        }
    }

    #[test]
    fn default_swing_is_forward_arc() {
        let cp = build_control_points(&defaults());
        let s = swing_spline(&cp);
        // Interior samples stay above the ground and progress forward on the whole.
        let ys: Vec<f64> = (0..=20).map(|i| s.eval(i as f64 / 20.0).y).collect();
        assert!(ys.first().unwrap() < ys.last().unwrap());
        for i in 1..20 {
            assert!(s.eval(i as f64 / 20.0).z > 0.0);
        }
    }

    #[test]
    fn stance_start_at_origin() {
        let p = defaults();
        let f = foot_position(&p, Leg::LeftFront, 0.0);
        assert_eq!(f, Vec3::new(0.0, 50.0, 0.0));
    }

    #[test]
    fn stance_velocity_formula() {
        let p = defaults();
        let traj = LegTrajectory::new(&p);
        let v = traj.stance_velocity();
        let expected = -(50.0 - -100.0) / ((1.0 - 0.175) * 1.0);
        assert!((v.y - expected).abs() < 1e-9);
        // numeric check on LF early in stance
        let dt = 1e-4;
        let a = traj.foot_position(Leg::LeftFront, 0.1);
        let b = traj.foot_position(Leg::LeftFront, 0.1 + dt);
        assert!(((b.y - a.y) / dt - expected).abs() < 1e-6);
    }

    #[test]
    fn periodic_and_continuous() {
        let mut p = defaults();
        p.frequency = 0.8;
        let traj = LegTrajectory::new(&p);
        let period = p.period();
        for leg in Leg::ALL {
            for i in 0..200 {
                let t = i as f64 * 0.0173;
                let a = traj.foot_position(leg, t);
                let b = traj.foot_position(leg, t + period);
                assert!(a.distance(b) < 1e-9);
            }
            // no jumps at fine resolution
            let mut prev = traj.foot_position(leg, 0.0);
            for i in 1..=10_000 {
                let cur = traj.foot_position(leg, i as f64 * period / 10_000.0);
                assert!(cur.distance(prev) < 5.0, "jump {}", cur.distance(prev));
                prev = cur;
            }
        }
    }

    #[test]
    fn lift_order() {
        let p = defaults();
        let sched = GaitSchedule::new(&p);
        let mut order = Vec::new();
        let mut prev: Option<Leg> = None;
        for i in 0..1000 {
            let t = i as f64 / 1000.0;
            let swinging = Leg::ALL.into_iter().find(|&l| sched.in_swing(l, t));
            if let Some(l) = swinging {
                if prev != Some(l) {
                    order.push(l);
                }
            }
            prev = swinging.or(prev);
        }
        assert_eq!(order, vec![Leg::RightHind, Leg::RightFront, Leg::LeftHind, Leg::LeftFront]);
    }

    #[test]
    fn left_legs_mirrored() {
        let mut p = defaults();
        p.air = [[10.0, 60.0, 30.0], [15.0, 0.0, 50.0], [20.0, -60.0, 50.0]];
        let traj = LegTrajectory::new(&p);
        let phase = 0.95;
        let right = traj.at_phase(phase);
        let t = (phase - Leg::LeftFront.phase_offset()) * p.period();
        let left = traj.foot_position(Leg::LeftFront, t);
        assert!((left.x + right.x).abs() < 1e-9);
        assert!((left.y - right.y).abs() < 1e-9);
    }

    #[test]
    fn wag_examples() {
        let zero = WagConfig { amp_x: 0.0, amp_y: 0.0, phase: 0.3 };
        assert_eq!(wag_offset(&zero, 1.234, 0.9), [0.0, 0.0]);
        let w = WagConfig { amp_x: 50.0, amp_y: 10.0, phase: 0.0 };
        assert_eq!(wag_offset(&w, 0.0, 1.0)[0], 0.0);
        let q = wag_offset(&w, 0.25, 1.0)[0];
        assert!((q - 25.0 * 3f64.tanh()).abs() < 1e-12);
        assert!((q - 24.876).abs() < 1e-3);
    }

    #[test]
    fn trajectory_csv_header_and_rows() {
        let mut buf = Vec::new();
        write_trajectory_csv(&defaults(), 1.0, 10.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,leg,x,y,z");
        assert_eq!(lines.len(), 1 + 11 * 4);
        assert!(lines[1].starts_with("0,LF,"));
    }
}
