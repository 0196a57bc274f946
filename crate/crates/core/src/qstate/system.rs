use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::error::{Error, Result};

/// Potential energy on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    Free,
    /// `V = m/2 * sum_i (omega_i * x_i)^2`, centred on the origin.
    Harmonic {
        omega: Vec<f64>,
    },
    /// Explicit values, one per grid cell in storage order.
    Field {
        values: Vec<f64>,
    },
}

/// Mass, ħ and potential of the single particle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub mass: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "free")]
    pub potential: Potential,
}

fn one() -> f64 {
    1.0
}

fn free() -> Potential {
    Potential::Free
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig { mass: 1.0, hbar: 1.0, potential: Potential::Free }
    }
}

impl SystemConfig {
    pub fn free(mass: f64, hbar: f64) -> Result<Self> {
        let sys = SystemConfig { mass, hbar, potential: Potential::Free };
        sys.check_constants()?;
        Ok(sys)
    }

    pub fn with_potential(mut self, potential: Potential) -> Self {
        self.potential = potential;
        self
    }

    fn check_constants(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::invalid(format!("mass must be positive, got {}", self.mass)));
        }
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::invalid(format!("hbar must be positive, got {}", self.hbar)));
        }
        Ok(())
    }

    /// Check the constants and that the potential is real and fits `grid`.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        self.check_constants()?;
        match &self.potential {
            Potential::Free => Ok(()),
            Potential::Harmonic { omega } => {
                if omega.len() != grid.dims() {
                    return Err(Error::invalid(format!(
                        "harmonic potential needs {} frequencies, got {}",
                        grid.dims(),
                        omega.len()
                    )));
                }
                if omega.iter().any(|w| !w.is_finite()) {
                    return Err(Error::invalid("harmonic frequency is not finite"));
                }
                Ok(())
            }
            Potential::Field { values } => {
                if values.len() != grid.len() {
                    return Err(Error::GridMismatch(format!(
                        "potential has {} values, grid has {} cells",
                        values.len(),
                        grid.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("potential is not finite everywhere"));
                }
                Ok(())
            }
        }
    }

    pub fn is_free(&self) -> bool {
        matches!(self.potential, Potential::Free)
    }

    /// Potential values on `grid`, or `None` for a free particle.
    pub fn potential_on(&self, grid: &GridSpec) -> Result<Option<Vec<f64>>> {
        self.validate(grid)?;
        Ok(match &self.potential {
            Potential::Free => None,
            Potential::Harmonic { omega } => Some(
                (0..grid.len())
                    .map(|i| {
                        let p = grid.position(i);
                        let s: f64 = omega.iter().zip(p).map(|(w, x)| (w * x).powi(2)).sum();
                        0.5 * self.mass * s
                    })
                    .collect(),
            ),
            Potential::Field { values } => Some(values.clone()),
        })
    }
}
