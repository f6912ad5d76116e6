use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MapError;
use crate::interval::Interval;

/// Piecewise-monotone interval maps with two laps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Map1D {
    /// `x -> 2x mod 1` on `[0, 1)`.
    Doubling,
    /// `x -> s * min(x, 1 - x)` on `[0, 1]`.
    Tent { slope: f64 },
    /// `x -> 1 - a x^2` on `[-1, 1]`.
    Quadratic { a: f64 },
    /// `x -> 4x(1 - x)` on `[0, 1]`.
    Logistic,
}

impl Map1D {
    pub fn tent(slope: f64) -> Result<Map1D, MapError> {
        if !(slope > 0.0 && slope <= 2.0) {
            return Err(MapError::InvalidParameter {
                name: "slope",
                value: slope,
            });
        }
        Ok(Map1D::Tent { slope })
    }

    pub fn quadratic(a: f64) -> Result<Map1D, MapError> {
        if !(a > 0.0 && a <= 2.0) {
            return Err(MapError::InvalidParameter { name: "a", value: a });
        }
        Ok(Map1D::Quadratic { a })
    }

    pub fn domain(&self) -> Interval {
        match self {
            Map1D::Quadratic { .. } => Interval::new(-1.0, 1.0),
            _ => Interval::new(0.0, 1.0),
        }
    }

    pub fn in_domain(&self, x: f64) -> bool {
        let d = self.domain();
        match self {
            Map1D::Doubling => d.contains(x),
            _ => x >= d.lo && x <= d.hi,
        }
    }

    /// The point separating the two laps.
    pub fn turning_point(&self) -> f64 {
        match self {
            Map1D::Quadratic { .. } => 0.0,
            _ => 0.5,
        }
    }

    /// Points where the derivative vanishes or is undefined.
    pub fn critical_points(&self) -> &'static [f64] {
        match self {
            Map1D::Doubling => &[],
            Map1D::Quadratic { .. } => &[0.0],
            Map1D::Tent { .. } | Map1D::Logistic => &[0.5],
        }
    }

    pub fn laps(&self) -> [Interval; 2] {
        let d = self.domain();
        let c = self.turning_point();
        [Interval::new(d.lo, c), Interval::new(c, d.hi)]
    }

    #[inline]
    pub fn lap_of(&self, x: f64) -> u8 {
        u8::from(x >= self.turning_point())
    }

    /// The lap's formula, extended continuously to the closed lap.
    #[inline]
    pub fn lap_eval(&self, lap: u8, x: f64) -> f64 {
        match *self {
            Map1D::Doubling => 2.0 * x - f64::from(lap),
            Map1D::Tent { slope } => {
                if lap == 0 {
                    slope * x
                } else {
                    slope * (1.0 - x)
                }
            }
            Map1D::Quadratic { a } => 1.0 - a * x * x,
            Map1D::Logistic => 4.0 * x * (1.0 - x),
        }
    }

    #[inline]
    pub fn lap_derivative(&self, lap: u8, x: f64) -> f64 {
        match *self {
            Map1D::Doubling => 2.0,
            Map1D::Tent { slope } => {
                if lap == 0 {
                    slope
                } else {
                    -slope
                }
            }
            Map1D::Quadratic { a } => -2.0 * a * x,
            Map1D::Logistic => 4.0 - 8.0 * x,
        }
    }

    /// Inverse of the lap formula; `y` is clamped to the lap's image.
    pub fn lap_inverse(&self, lap: u8, y: f64) -> f64 {
        let x = match *self {
            Map1D::Doubling => 0.5 * (y + f64::from(lap)),
            Map1D::Tent { slope } => {
                if lap == 0 {
                    y / slope
                } else {
                    1.0 - y / slope
                }
            }
            Map1D::Quadratic { a } => {
                let s = ((1.0 - y) / a).max(0.0).sqrt();
                if lap == 0 {
                    -s
                } else {
                    s
                }
            }
            Map1D::Logistic => {
                let r = (1.0 - y).max(0.0).sqrt();
                if lap == 0 {
                    y.max(0.0) / (2.0 * (1.0 + r))
                } else {
                    0.5 * (1.0 + r)
                }
            }
        };
        let lapi = self.laps()[usize::from(lap)];
        x.clamp(lapi.lo, lapi.hi)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.lap_eval(self.lap_of(x), x)
    }

    pub fn derivative(&self, x: f64) -> Result<f64, MapError> {
        if self.critical_points().contains(&x) {
            return Err(MapError::CriticalPoint { x });
        }
        Ok(self.lap_derivative(self.lap_of(x), x))
    }
}

impl fmt::Display for Map1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Map1D::Doubling => write!(f, "doubling"),
            Map1D::Tent { slope } => write!(f, "tent:{slope:?}"),
            Map1D::Quadratic { a } => write!(f, "quadratic:{a:?}"),
            Map1D::Logistic => write!(f, "logistic"),
        }
    }
}

impl FromStr for Map1D {
    type Err = MapError;

    /// Parses `doubling`, `logistic`, `tent:<slope>` or `quadratic:<a>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (kind, param) = match s.split_once(':') {
            Some((k, p)) => (k.trim(), Some(p.trim())),
            None => (s, None),
        };
        let num = |name: &'static str| -> Result<f64, MapError> {
            param
                .and_then(|p| p.parse::<f64>().ok())
                .ok_or_else(|| MapError::UnknownMap(s.to_string()))
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(MapError::InvalidParameter { name, value: v })
                    }
                })
        };
        match (kind, param) {
            ("doubling", None) => Ok(Map1D::Doubling),
            ("logistic", None) => Ok(Map1D::Logistic),
            ("tent", Some(_)) => Map1D::tent(num("slope")?),
            ("quadratic", Some(_)) => Map1D::quadratic(num("a")?),
            _ => Err(MapError::UnknownMap(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_analytic_forms() {
        assert_eq!(Map1D::Doubling.derivative(0.3).unwrap(), 2.0);
        assert_eq!(Map1D::Logistic.derivative(0.25).unwrap(), 2.0);
        assert!(matches!(
            Map1D::Logistic.derivative(0.5),
            Err(MapError::CriticalPoint { .. })
        ));
        assert!(matches!(
            Map1D::tent(1.9).unwrap().derivative(0.5),
            Err(MapError::CriticalPoint { .. })
        ));
        assert!(matches!(
            Map1D::quadratic(1.5).unwrap().derivative(0.0),
            Err(MapError::CriticalPoint { .. })
        ));
        assert_eq!(Map1D::tent(1.9).unwrap().derivative(0.7).unwrap(), -1.9);
    }

    #[test]
    fn lap_inverses_invert() {
        let maps = [
            Map1D::Doubling,
            Map1D::Logistic,
            Map1D::tent(2.0).unwrap(),
            Map1D::quadratic(1.7).unwrap(),
        ];
        for m in maps {
            for lap in 0..2u8 {
                let l = m.laps()[usize::from(lap)];
                for k in 1..50 {
                    let x = l.from_unit(f64::from(k) / 50.0);
                    let y = m.lap_eval(lap, x);
                    let back = m.lap_inverse(lap, y);
                    assert!((back - x).abs() < 1e-12, "{m} lap {lap}: {x} -> {y} -> {back}");
                }
            }
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["doubling", "logistic", "tent:1.95", "quadratic:1.8"] {
            let m: Map1D = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("tent:2.5".parse::<Map1D>().is_err());
        assert!("tent".parse::<Map1D>().is_err());
        assert!("henon".parse::<Map1D>().is_err());
    }
}
