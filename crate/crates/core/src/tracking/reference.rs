use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::bicycle::{State, OMEGA, PHI, U, X, Y};
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Straight,
    SinePath,
    DoubleLaneChange,
}

impl std::str::FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(Self::Straight),
            "sine-path" => Ok(Self::SinePath),
            "double-lane-change" => Ok(Self::DoubleLaneChange),
            other => Err(Error::config(format!(
                "unknown reference profile '{other}' (expected straight, sine-path or double-lane-change)"
            ))),
        }
    }
}

/// Reference path settings. Ranges are sampled uniformly per episode seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub profile: ProfileKind,
    /// Reference longitudinal speed range (m/s).
    pub speed: [f64; 2],
    /// Sine amplitude range (m).
    pub amplitude: [f64; 2],
    /// Sine wavelength range (m).
    pub wavelength: [f64; 2],
    /// Lateral offset of the double lane change (m).
    pub lane_offset: [f64; 2],
    /// Longitudinal positions where the lane change starts and returns (m).
    pub lane_change_at: [f64; 2],
    /// Transition length of each lane change (m).
    pub lane_change_length: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            profile: ProfileKind::SinePath,
            speed: [10.0, 10.0],
            amplitude: [0.8, 1.2],
            wavelength: [90.0, 110.0],
            lane_offset: [3.0, 3.5],
            lane_change_at: [40.0, 120.0],
            lane_change_length: 12.0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], positive: bool) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) || (positive && r[0] <= 0.0) {
        return Err(Error::config(format!("reference.{name}: invalid range {r:?}")));
    }
    Ok(())
}

impl ReferenceConfig {
    pub fn validate(&self) -> Result<()> {
        check_range("speed", self.speed, true)?;
        check_range("amplitude", self.amplitude, false)?;
        check_range("wavelength", self.wavelength, true)?;
        check_range("lane_offset", self.lane_offset, false)?;
        check_range("lane_change_at", self.lane_change_at, false)?;
        if !(self.lane_change_length > 0.0) {
            return Err(Error::config("reference.lane_change_length must be positive"));
        }
        Ok(())
    }
}

fn sample(rng: &mut SimRng, r: [f64; 2]) -> f64 {
    if r[0] < r[1] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Lateral path `y(x)` together with its slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Path {
    Straight,
    Sine { amplitude: f64, wavelength: f64 },
    DoubleLaneChange { offset: f64, starts: [f64; 2], length: f64 },
}

impl Path {
    pub fn y(&self, x: f64) -> f64 {
        match *self {
            Path::Straight => 0.0,
            Path::Sine { amplitude, wavelength } => amplitude * (std::f64::consts::TAU * x / wavelength).sin(),
            Path::DoubleLaneChange { offset, starts, length } => {
                let s = |x0: f64| 0.5 * (1.0 + ((x - x0) / length * 4.0 - 2.0).tanh());
                offset * (s(starts[0]) - s(starts[1]))
            }
        }
    }

    pub fn slope(&self, x: f64) -> f64 {
        match *self {
            Path::Straight => 0.0,
            Path::Sine { amplitude, wavelength } => {
                let k = std::f64::consts::TAU / wavelength;
                amplitude * k * (k * x).cos()
            }
            Path::DoubleLaneChange { offset, starts, length } => {
                let ds = |x0: f64| {
                    let z = (x - x0) / length * 4.0 - 2.0;
                    0.5 * (1.0 - z.tanh().powi(2)) * 4.0 / length
                };
                offset * (ds(starts[0]) - ds(starts[1]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub path: Path,
    pub speed: f64,
    pub states: Vec<State>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Reference point `k`, holding the last point past the end.
    pub fn at(&self, k: usize) -> &State {
        &self.states[k.min(self.states.len() - 1)]
    }
}

/// Samples a path from the profile and walks it at the reference speed.
/// `points` reference states are produced, spaced one step `ts` apart.
pub fn generate_reference(cfg: &ReferenceConfig, seed: u64, points: usize, ts: f64) -> Result<ReferenceTrajectory> {
    cfg.validate()?;
    if points == 0 {
        return Err(Error::config("reference needs at least one point"));
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let speed = sample(&mut rng, cfg.speed);
    let path = match cfg.profile {
        ProfileKind::Straight => Path::Straight,
        ProfileKind::SinePath => Path::Sine {
            amplitude: sample(&mut rng, cfg.amplitude),
            wavelength: sample(&mut rng, cfg.wavelength),
        },
        ProfileKind::DoubleLaneChange => Path::DoubleLaneChange {
            offset: sample(&mut rng, cfg.lane_offset),
            starts: cfg.lane_change_at,
            length: cfg.lane_change_length,
        },
    };

    // one extra point for the yaw-rate difference at the end
    let mut xs = Vec::with_capacity(points + 1);
    let mut x = 0.0;
    for _ in 0..=points {
        xs.push(x);
        x += ts * speed * path.slope(x).atan().cos();
    }
    let headings: Vec<f64> = xs.iter().map(|&x| path.slope(x).atan()).collect();
    let states = (0..points)
        .map(|k| {
            let mut s = [0.0; 6];
            s[X] = xs[k];
            s[Y] = path.y(xs[k]);
            s[PHI] = headings[k];
            s[U] = speed;
            s[OMEGA] = (headings[k + 1] - headings[k]) / ts;
            s
        })
        .collect();
    Ok(ReferenceTrajectory { path, speed, states })
}
