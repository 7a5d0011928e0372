//! Forward and inverse kinematics of a three-joint leg.
//!
//! Body frame: `x` to the right, `y` forward, `z` up, origin at the body
//! center at hip height. A leg abducts about the body-longitudinal (`y`)
//! axis, then hip and knee pitch move a planar femur/tibia chain. All
//! angles zero is the leg hanging straight down. Left legs are mirrored in
//! `x`, so positive abduction always swings the foot outward.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::trajectory::Leg;
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum IkError {
    /// Target outside the reachable annulus; `shortfall` is the distance (mm)
    /// to the nearest reachable radius.
    #[error("target out of reach by {shortfall:.3} mm")]
    OutOfReach { shortfall: f64 },
    #[error("{joint} angle {angle:.4} rad outside its limits")]
    JointLimit { joint: &'static str, angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub abduction: (f64, f64),
    pub hip_pitch: (f64, f64),
    pub knee_pitch: (f64, f64),
}

impl Default for JointLimits {
    fn default() -> Self {
        use std::f64::consts::FRAC_PI_2;
        JointLimits {
            abduction: (-FRAC_PI_2, FRAC_PI_2),
            hip_pitch: (-PI, PI),
            knee_pitch: (0.0, PI),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    pub abduction: f64,
    pub hip_pitch: f64,
    pub knee_pitch: f64,
}

impl JointAngles {
    pub fn new(abduction: f64, hip_pitch: f64, knee_pitch: f64) -> Self {
        JointAngles {
            abduction,
            hip_pitch,
            knee_pitch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegGeometry {
    /// Hip position in the body frame (mm).
    pub hip_offset: Vec3,
    pub femur_length: f64,
    pub tibia_length: f64,
    pub mirrored: bool,
    pub limits: JointLimits,
}

impl LegGeometry {
    pub fn new(hip_offset: Vec3, femur_length: f64, tibia_length: f64, mirrored: bool) -> Self {
        assert!(femur_length > 0.0 && tibia_length > 0.0, "segment lengths must be positive");
        LegGeometry {
            hip_offset,
            femur_length,
            tibia_length,
            mirrored,
            limits: JointLimits::default(),
        }
    }

    pub fn max_reach(&self) -> f64 {
        self.femur_length + self.tibia_length
    }

    pub fn min_reach(&self) -> f64 {
        (self.femur_length - self.tibia_length).abs()
    }

    fn to_leg(self, body: Vec3) -> Vec3 {
        let p = body - self.hip_offset;
        if self.mirrored {
            p.mirror_x()
        } else {
            p
        }
    }

    fn to_body(self, leg: Vec3) -> Vec3 {
        let p = if self.mirrored { leg.mirror_x() } else { leg };
        p + self.hip_offset
    }

    fn check_limits(&self, q: &JointAngles) -> Result<(), IkError> {
        let within = |(lo, hi): (f64, f64), v: f64| lo - 1e-12 <= v && v <= hi + 1e-12;
        for (joint, range, angle) in [
            ("abduction", self.limits.abduction, q.abduction),
            ("hip pitch", self.limits.hip_pitch, q.hip_pitch),
            ("knee pitch", self.limits.knee_pitch, q.knee_pitch),
        ] {
            if !within(range, angle) {
                return Err(IkError::JointLimit { joint, angle });
            }
        }
        Ok(())
    }
}

/// Foot position in the body frame.
pub fn forward(geom: &LegGeometry, q: &JointAngles) -> Vec3 {
    let (l1, l2) = (geom.femur_length, geom.tibia_length);
    let outer = q.hip_pitch + q.knee_pitch;
    let reach_forward = l1 * q.hip_pitch.sin() + l2 * outer.sin();
    let reach_down = l1 * q.hip_pitch.cos() + l2 * outer.cos();
    let local = Vec3::new(
        reach_down * q.abduction.sin(),
        reach_forward,
        -reach_down * q.abduction.cos(),
    );
    geom.to_body(local)
}

/// Joint angles placing the foot at `target` (body frame), knee bent
/// backward.
pub fn inverse(geom: &LegGeometry, target: Vec3) -> Result<JointAngles, IkError> {
    let p = geom.to_leg(target);
    let (l1, l2) = (geom.femur_length, geom.tibia_length);
    let reach_down = p.x.hypot(p.z);
    let reach_forward = p.y;
    let r = reach_down.hypot(reach_forward);
    if r > geom.max_reach() {
        return Err(IkError::OutOfReach {
            shortfall: r - geom.max_reach(),
        });
    }
    if r < geom.min_reach() {
        return Err(IkError::OutOfReach {
            shortfall: geom.min_reach() - r,
        });
    }
    let abduction = if reach_down > 0.0 { p.x.atan2(-p.z) } else { 0.0 };
    let cos_knee = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let knee_pitch = cos_knee.acos();
    let mut hip_pitch = reach_forward.atan2(reach_down)
        - (l2 * knee_pitch.sin()).atan2(l1 + l2 * knee_pitch.cos());
    if hip_pitch <= -PI {
        hip_pitch += 2.0 * PI;
    }
    let q = JointAngles::new(abduction, hip_pitch, knee_pitch);
    geom.check_limits(&q)?;
    Ok(q)
}

/// Robot-level geometry shared by the four legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyGeometry {
    pub femur_length: f64,
    pub tibia_length: f64,
    /// Hip height above the ground (mm).
    pub stance_height: f64,
    pub hip_half_width: f64,
    pub hip_half_length: f64,
}

impl Default for BodyGeometry {
    fn default() -> Self {
        BodyGeometry {
            femur_length: 180.0,
            tibia_length: 180.0,
            stance_height: 320.0,
            hip_half_width: 120.0,
            hip_half_length: 200.0,
        }
    }
}

impl BodyGeometry {
    /// Reads `leg.*` keys; missing keys keep their defaults.
    pub fn from_config(kv: &KeyValues) -> Result<Self, ConfigError> {
        let mut g = BodyGeometry::default();
        for (name, _) in kv.section("leg") {
            let key = format!("leg.{name}");
            let value = kv.real(&key)?.expect("key present");
            if value <= 0.0 {
                return Err(ConfigError::invalid(&key, "must be positive"));
            }
            match name {
                "femur_length" => g.femur_length = value,
                "tibia_length" => g.tibia_length = value,
                "stance_height" => g.stance_height = value,
                "hip_half_width" => g.hip_half_width = value,
                "hip_half_length" => g.hip_half_length = value,
                _ => return Err(ConfigError::Unknown(key)),
            }
        }
        Ok(g)
    }

    pub fn hip_position(&self, leg: Leg) -> Vec3 {
        let x = if leg.is_left() { -self.hip_half_width } else { self.hip_half_width };
        let y = if leg.is_front() { self.hip_half_length } else { -self.hip_half_length };
        Vec3::new(x, y, 0.0)
    }

    pub fn leg(&self, leg: Leg) -> LegGeometry {
        LegGeometry::new(
            self.hip_position(leg),
            self.femur_length,
            self.tibia_length,
            leg.is_left(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn geom() -> LegGeometry {
        LegGeometry::new(Vec3::ZERO, 180.0, 180.0, false)
    }

    #[test]
    fn zero_pose_hangs_straight() {
        let f = forward(&geom(), &JointAngles::new(0.0, 0.0, 0.0));
        assert!(f.distance(Vec3::new(0.0, 0.0, -360.0)) < 1e-12);
    }

    #[test]
    fn folded_knee_returns_to_hip() {
        let f = forward(&geom(), &JointAngles::new(0.2, 0.4, PI));
        assert!(f.norm() < 1e-9);
    }

    #[test]
    fn straight_down_target() {
        let q = inverse(&geom(), Vec3::new(0.0, 0.0, -360.0)).unwrap();
        assert_eq!(q, JointAngles::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn beyond_reach_errors() {
        match inverse(&geom(), Vec3::new(0.0, 10.0, -361.0)) {
            Err(IkError::OutOfReach { shortfall }) => {
                let r = (10.0f64).hypot(361.0);
                assert!((shortfall - (r - 360.0)).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
        let uneven = LegGeometry::new(Vec3::ZERO, 200.0, 100.0, false);
        assert!(matches!(
            inverse(&uneven, Vec3::new(0.0, 0.0, -50.0)),
            Err(IkError::OutOfReach { .. })
        ));
    }

    #[test]
    fn knee_points_backward() {
        let g = geom();
        let q = inverse(&g, Vec3::new(0.0, 30.0, -300.0)).unwrap();
        assert!(q.knee_pitch > 0.0);
        // knee sits behind the hip-foot line
        let knee_forward = g.femur_length * q.hip_pitch.sin();
        let knee_down = g.femur_length * q.hip_pitch.cos();
        assert!(knee_forward < knee_down * 30.0 / 300.0);
    }

    #[test]
    fn mirrored_target_flips_abduction() {
        let g = geom();
        let a = inverse(&g, Vec3::new(40.0, 20.0, -280.0)).unwrap();
        let b = inverse(&g, Vec3::new(-40.0, 20.0, -280.0)).unwrap();
        assert!((a.abduction + b.abduction).abs() < 1e-12);
        assert_eq!(a.hip_pitch, b.hip_pitch);
        assert_eq!(a.knee_pitch, b.knee_pitch);
    }

    #[test]
    fn left_leg_geometry_round_trip() {
        let body = BodyGeometry::default();
        let g = body.leg(Leg::LeftHind);
        let target = g.hip_offset + Vec3::new(-30.0, 40.0, -300.0);
        let q = inverse(&g, target).unwrap();
        assert!(q.abduction > 0.0, "outward abduction for the left leg");
        assert!(forward(&g, &q).distance(target) < 1e-9);
    }

    #[test]
    fn geometry_from_config() {
        let kv = KeyValues::parse("leg.femur_length = 150\nleg.stance_height = 250").unwrap();
        let g = BodyGeometry::from_config(&kv).unwrap();
        assert_eq!(g.femur_length, 150.0);
        assert_eq!(g.tibia_length, 180.0);
        assert_eq!(g.stance_height, 250.0);
        let bad = KeyValues::parse("leg.shin = 1").unwrap();
        assert!(BodyGeometry::from_config(&bad).is_err());
    }
}
