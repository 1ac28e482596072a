//! Statistical channel model used to estimate a region's mean gain from its
//! position relative to the base station.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// An obstacle that attenuates every link crossing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blockage {
    pub polygon: Vec<Point>,
    /// Linear power factor in `(0, 1]`.
    pub attenuation: f64,
}

impl Blockage {
    /// True when the segment `a`-`b` touches the polygon (crosses an edge or
    /// lies inside it).
    pub fn intersects_segment(&self, a: Point, b: Point) -> bool {
        let n = self.polygon.len();
        if n == 0 {
            return false;
        }
        if point_in_polygon(a, &self.polygon) || point_in_polygon(b, &self.polygon) {
            return true;
        }
        (0..n).any(|i| segments_intersect(a, b, self.polygon[i], self.polygon[(i + 1) % n]))
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Base-station antenna gain as a function of azimuth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AntennaPattern {
    #[default]
    Omni,
    /// Equal-width sectors counterclockwise from the +x axis; sector `k`
    /// covers azimuths `[k, k + 1) * 2π / gains.len()`.
    Sectors { gains: Vec<f64> },
}

impl AntennaPattern {
    pub fn gain(&self, azimuth: f64) -> f64 {
        match self {
            AntennaPattern::Omni => 1.0,
            AntennaPattern::Sectors { gains } => {
                let a = azimuth.rem_euclid(TAU);
                let k = ((a / TAU) * gains.len() as f64) as usize;
                gains[k.min(gains.len() - 1)]
            }
        }
    }
}

/// Log-distance path loss with blockage and antenna gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub ref_distance: f64,
    pub ref_gain: f64,
    pub path_loss_exponent: f64,
    #[serde(default)]
    pub blockages: Vec<Blockage>,
    #[serde(default)]
    pub antenna: AntennaPattern,
    /// Log-normal shadowing spread for random draws; mean gains ignore it.
    #[serde(default)]
    pub shadowing_sigma_db: Option<f64>,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            ref_distance: 1.0,
            ref_gain: 1.0,
            path_loss_exponent: 2.0,
            blockages: Vec::new(),
            antenna: AntennaPattern::Omni,
            shadowing_sigma_db: None,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.ref_distance > 0.0) || !(self.ref_gain > 0.0) {
            return Err(Error::InvalidParameter(
                "reference distance and gain must be positive".into(),
            ));
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(Error::InvalidParameter("path loss exponent must be > 0".into()));
        }
        for b in &self.blockages {
            if !(b.attenuation > 0.0 && b.attenuation <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "blockage attenuation {} outside (0, 1]",
                    b.attenuation
                )));
            }
        }
        if let AntennaPattern::Sectors { gains } = &self.antenna {
            if gains.is_empty() || gains.iter().any(|g| !(*g > 0.0)) {
                return Err(Error::InvalidParameter("sector gains must be positive".into()));
            }
        }
        if let Some(s) = self.shadowing_sigma_db {
            if !(s >= 0.0) {
                return Err(Error::InvalidParameter("shadowing sigma must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Mean linear gain of a link from `bs` to `at`.
    pub fn gain(&self, bs: Point, at: Point) -> Result<f64> {
        let d = bs.distance(at);
        if !(d > 0.0) {
            return Err(Error::InvalidParameter(
                "evaluation point coincides with the base station".into(),
            ));
        }
        let azimuth = (at.y - bs.y).atan2(at.x - bs.x);
        let blocked: f64 = self
            .blockages
            .iter()
            .filter(|b| b.intersects_segment(bs, at))
            .map(|b| b.attenuation)
            .product();
        Ok(self.ref_gain
            * (d / self.ref_distance).powf(-self.path_loss_exponent)
            * self.antenna.gain(azimuth)
            * blocked)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, side: f64, attenuation: f64) -> Blockage {
        Blockage {
            polygon: vec![
                Point::new(x0, y0),
                Point::new(x0 + side, y0),
                Point::new(x0 + side, y0 + side),
                Point::new(x0, y0 + side),
            ],
            attenuation,
        }
    }

    #[test]
    fn gain_identity_and_path_loss() {
        let m = ChannelModel::default();
        let bs = Point::new(0.0, 0.0);
        assert_eq!(m.gain(bs, Point::new(1.0, 0.0)).unwrap(), 1.0);
        assert!((m.gain(bs, Point::new(10.0, 0.0)).unwrap() - 0.01).abs() < 1e-15);
        assert!(m.gain(bs, bs).is_err());
    }

    #[test]
    fn blockage_on_segment_multiplies() {
        let m = ChannelModel {
            blockages: vec![square(4.0, -1.0, 2.0, 0.1), square(4.0, 5.0, 2.0, 0.5)],
            ..ChannelModel::default()
        };
        let g = m.gain(Point::new(0.0, 0.0), Point::new(10.0, 0.0)).unwrap();
        assert!((g - 0.001).abs() < 1e-15);
    }

    #[test]
    fn segment_polygon_cases() {
        let b = square(0.0, 0.0, 1.0, 0.5);
        assert!(b.intersects_segment(Point::new(-1.0, 0.5), Point::new(2.0, 0.5)));
        assert!(b.intersects_segment(Point::new(0.5, 0.5), Point::new(3.0, 3.0)));
        assert!(!b.intersects_segment(Point::new(-1.0, 2.0), Point::new(2.0, 2.0)));
        assert!(!b.intersects_segment(Point::new(2.0, 0.0), Point::new(3.0, 0.0)));
    }

    #[test]
    fn sector_pattern() {
        let p = AntennaPattern::Sectors { gains: vec![1.0, 0.5, 0.25, 0.125] };
        assert_eq!(p.gain(0.1), 1.0);
        assert_eq!(p.gain(std::f64::consts::PI * 0.75), 0.5);
        assert_eq!(p.gain(-0.1), 0.125);
        assert_eq!(AntennaPattern::Omni.gain(2.0), 1.0);
    }

    #[test]
    fn validation() {
        let bad = ChannelModel { path_loss_exponent: 0.0, ..ChannelModel::default() };
        assert!(bad.validate().is_err());
        let bad = ChannelModel { blockages: vec![square(0.0, 0.0, 1.0, 1.5)], ..ChannelModel::default() };
        assert!(bad.validate().is_err());
        let bad = ChannelModel { antenna: AntennaPattern::Sectors { gains: vec![] }, ..ChannelModel::default() };
        assert!(bad.validate().is_err());
        assert!(ChannelModel::default().validate().is_ok());
    }
}
