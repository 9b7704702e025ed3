//! Box-constrained search spaces and their normalized image `[-1, 1]^d`.
//!
//! Search always happens in the mapped cube. Each dimension is mapped
//! independently: linearly for physical quantities and gains, logarithmically
//! for positive weights spanning several decades.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    #[serde(alias = "log")]
    Logarithmic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default = "default_scale")]
    pub scale: Scale,
}

fn default_scale() -> Scale {
    Scale::Linear
}

impl ParamSpec {
    pub fn linear(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            scale: Scale::Linear,
        }
    }

    pub fn log(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            scale: Scale::Logarithmic,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite()) {
            return Err(Error::config(format!("`{}`: bounds must be finite", self.name)));
        }
        if self.lower >= self.upper {
            return Err(Error::config(format!(
                "`{}`: lower bound {} must be below upper bound {}",
                self.name, self.lower, self.upper
            )));
        }
        if self.scale == Scale::Logarithmic
            && !(self.lower * self.upper > 0.0)
        {
            return Err(Error::config(format!(
                "`{}`: logarithmic scale needs bounds of the same nonzero sign",
                self.name
            )));
        }
        Ok(())
    }

    /// Maps one coordinate of the cube to native units. Input is clamped first.
    pub fn to_native(&self, m: f64) -> f64 {
        let t = (m.clamp(-1.0, 1.0) + 1.0) * 0.5;
        let value = match self.scale {
            Scale::Linear => self.lower + t * (self.upper - self.lower),
            Scale::Logarithmic => {
                let sign = self.lower.signum();
                let (a, b) = (self.lower.abs().ln(), self.upper.abs().ln());
                sign * (a + t * (b - a)).exp()
            }
        };
        value.clamp(self.lower, self.upper)
    }

    pub fn to_mapped(&self, theta: f64) -> Result<f64> {
        let slack = 1e-12 * self.lower.abs().max(self.upper.abs());
        if !theta.is_finite() || theta < self.lower - slack || theta > self.upper + slack {
            return Err(Error::OutOfBounds {
                name: self.name.clone(),
                value: theta,
                lower: self.lower,
                upper: self.upper,
            });
        }
        let theta = theta.clamp(self.lower, self.upper);
        let t = match self.scale {
            Scale::Linear => (theta - self.lower) / (self.upper - self.lower),
            Scale::Logarithmic => {
                let (a, b) = (self.lower.abs().ln(), self.upper.abs().ln());
                (theta.abs().ln() - a) / (b - a)
            }
        };
        Ok((2.0 * t - 1.0).clamp(-1.0, 1.0))
    }
}

/// A point of the normalized cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedVector(pub Vec<f64>);

/// A point of the native search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NativeVector(pub Vec<f64>);

impl MappedVector {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Componentwise projection onto `[-1, 1]`.
    pub fn clamp(&self) -> Self {
        Self(clamp_slice(&self.0))
    }

    /// `clamp(self + sigma * eps)`.
    pub fn perturbed(&self, sigma: f64, eps: &[f64]) -> Self {
        Self(
            self.0
                .iter()
                .zip(eps)
                .map(|(m, e)| (m + sigma * e).clamp(-1.0, 1.0))
                .collect(),
        )
    }

    pub fn in_cube(&self) -> bool {
        self.0.iter().all(|v| (-1.0..=1.0).contains(v))
    }
}

impl NativeVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn clamp_slice(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v.clamp(-1.0, 1.0)).collect()
}

/// Ordered, named dimensions of the search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParamSpec>", into = "Vec<ParamSpec>")]
pub struct ParamSpace {
    specs: Vec<ParamSpec>,
}

impl TryFrom<Vec<ParamSpec>> for ParamSpace {
    type Error = Error;

    fn try_from(specs: Vec<ParamSpec>) -> Result<Self> {
        Self::new(specs)
    }
}

impl From<ParamSpace> for Vec<ParamSpec> {
    fn from(space: ParamSpace) -> Self {
        space.specs
    }
}

impl ParamSpace {
    pub fn new(specs: Vec<ParamSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::config("parameter space needs at least one dimension"));
        }
        let mut seen = HashSet::new();
        for spec in &specs {
            spec.validate()?;
            if !seen.insert(spec.name.as_str()) {
                return Err(Error::config(format!("duplicate parameter name `{}`", spec.name)));
            }
        }
        Ok(Self { specs })
    }

    pub fn dim(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.name.as_str())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    pub fn to_native(&self, m: &MappedVector) -> Result<NativeVector> {
        self.check_len(m.len())?;
        Ok(NativeVector(
            self.specs
                .iter()
                .zip(&m.0)
                .map(|(spec, &v)| spec.to_native(v))
                .collect(),
        ))
    }

    pub fn to_mapped(&self, theta: &NativeVector) -> Result<MappedVector> {
        self.check_len(theta.len())?;
        self.specs
            .iter()
            .zip(&theta.0)
            .map(|(spec, &v)| spec.to_mapped(v))
            .collect::<Result<Vec<_>>>()
            .map(MappedVector)
    }
}
