//! Kinematic and inertial description of the planar five-link point-foot biped.

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of generalized coordinates: floating base (x, y, pitch) plus four joints.
pub const NDOF: usize = 7;
/// Number of actuated joints.
pub const NACT: usize = 4;

pub type Coords = SVector<f64, NDOF>;

/// One rigid link of the chain.
///
/// `com_offset` is measured from the proximal joint along the link axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub mass: f64,
    pub length: f64,
    pub com_offset: f64,
    pub inertia_zz: f64,
}

impl LinkSpec {
    /// Uniform thin rod: CoM at mid-length, `I = m L^2 / 12`.
    pub fn uniform_rod(mass: f64, length: f64) -> Self {
        Self {
            mass,
            length,
            com_offset: 0.5 * length,
            inertia_zz: mass * length * length / 12.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mass, self.length, self.com_offset, self.inertia_zz]
            .iter()
            .all(|v| v.is_finite());
        if !finite
            || self.mass <= 0.0
            || self.length <= 0.0
            || self.com_offset < 0.0
            || self.com_offset > self.length
            || self.inertia_zz < 0.0
        {
            return Err(Error::InvalidConfig(format!("invalid link {self:?}")));
        }
        Ok(())
    }
}

/// Index of a physical link in [`RobotModel::links`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Trunk = 0,
    LeftThigh = 1,
    LeftShank = 2,
    RightThigh = 3,
    RightShank = 4,
}

impl Link {
    pub const ALL: [Link; 5] = [
        Link::Trunk,
        Link::LeftThigh,
        Link::LeftShank,
        Link::RightThigh,
        Link::RightShank,
    ];
}

/// Planar biped: trunk carrying the floating base at the hip, two identical
/// thigh/shank legs attached at the hip, point feet at the shank tips.
///
/// Joint angles are relative to the parent link, the trunk pitch is measured
/// from the world vertical, counter-clockwise positive with x forward and y up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModel {
    /// Ordered trunk, left thigh, left shank, right thigh, right shank.
    pub links: [LinkSpec; 5],
    pub gravity: f64,
}

impl Default for RobotModel {
    /// Table values of the reference robot with uniform-rod inertia.
    fn default() -> Self {
        let leg = LinkSpec::uniform_rod(0.3, 0.4);
        Self {
            links: [LinkSpec::uniform_rod(38.0, 0.63), leg, leg, leg, leg],
            gravity: 9.81,
        }
    }
}

impl RobotModel {
    pub fn link(&self, link: Link) -> &LinkSpec {
        &self.links[link as usize]
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for l in &self.links {
            l.validate()?;
        }
        if !(self.gravity.is_finite() && self.gravity > 0.0) {
            return Err(Error::InvalidConfig("gravity must be positive".into()));
        }
        let (lt, ls) = (self.link(Link::LeftThigh), self.link(Link::LeftShank));
        let (rt, rs) = (self.link(Link::RightThigh), self.link(Link::RightShank));
        if lt.length != rt.length || ls.length != rs.length {
            return Err(Error::InvalidConfig("legs must have identical lengths".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StanceLeg {
    Left,
    Right,
}

impl StanceLeg {
    pub fn swing(self) -> StanceLeg {
        match self {
            StanceLeg::Left => StanceLeg::Right,
            StanceLeg::Right => StanceLeg::Left,
        }
    }

    pub fn foot(self) -> BodyPoint {
        match self {
            StanceLeg::Left => BodyPoint::LeftFoot,
            StanceLeg::Right => BodyPoint::RightFoot,
        }
    }
}

/// Named points whose position, velocity and Jacobian can be queried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BodyPoint {
    LeftFoot,
    RightFoot,
    /// Whole-body center of mass.
    Com,
    /// Trunk CoM.
    Trunk,
    /// Hip joint, coincident with the floating-base origin.
    Hip,
}

impl std::str::FromStr for BodyPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left_foot" => Ok(BodyPoint::LeftFoot),
            "right_foot" => Ok(BodyPoint::RightFoot),
            "com" => Ok(BodyPoint::Com),
            "trunk" => Ok(BodyPoint::Trunk),
            "hip" => Ok(BodyPoint::Hip),
            other => Err(Error::UnknownPoint(other.to_string())),
        }
    }
}

/// Generalized coordinates `[p_x, p_y, pitch, q1, q2, q3, q4]` and their rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedState {
    pub q: Coords,
    pub qdot: Coords,
}

impl GeneralizedState {
    pub fn new(q: Coords, qdot: Coords) -> Self {
        Self { q, qdot }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }
}

/// Full hybrid state of the simulated robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub q: Coords,
    pub qdot: Coords,
    pub stance: StanceLeg,
    pub t: f64,
    pub step_index: usize,
}

/// Swap leg coordinates: `[.., q1, q2, q3, q4] -> [.., q3, q4, q1, q2]`.
pub fn swap_legs(v: &Coords) -> Coords {
    let mut out = *v;
    out[3] = v[5];
    out[4] = v[6];
    out[5] = v[3];
    out[6] = v[4];
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_matches_table_masses() {
        let m = RobotModel::default();
        assert!((m.total_mass() - 39.2).abs() < 1e-12);
        assert!((m.link(Link::Trunk).inertia_zz - 1.2569).abs() < 1e-4);
        m.validate().unwrap();
    }

    #[test]
    fn rejects_bad_links() {
        let mut l = LinkSpec::uniform_rod(1.0, 0.5);
        l.com_offset = 0.6;
        assert!(l.validate().is_err());
        assert!(LinkSpec::uniform_rod(0.0, 0.5).validate().is_err());
        assert!(LinkSpec::uniform_rod(1.0, -0.5).validate().is_err());
    }

    #[test]
    fn point_names() {
        assert_eq!("com".parse::<BodyPoint>().unwrap(), BodyPoint::Com);
        assert!(matches!(
            "nose".parse::<BodyPoint>(),
            Err(Error::UnknownPoint(_))
        ));
    }
}
