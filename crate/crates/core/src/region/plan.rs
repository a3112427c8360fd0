use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of time-sharing phases accepted.
pub const MAX_PHASES: usize = 6;

const SUM_TOL: f64 = 1e-12;

/// Coded time-sharing plan: phase weights, per-phase non-covert input laws,
/// covert density prefactors and the active-fraction parameters `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub tau: usize,
    pub p_t: Vec<f64>,
    pub p_x3_given_t: Vec<Vec<f64>>,
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    /// Both covert users silent in every phase.
    #[serde(default)]
    pub no_covert: bool,
}

fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidPlan(format!("{what} is empty")));
    }
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidPlan(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidPlan(format!("{what} sums to {s}")));
    }
    Ok(())
}

impl PhasePlan {
    /// Builds and validates a plan; `tau` is taken from `p_t`.
    pub fn new(
        p_t: Vec<f64>,
        p_x3_given_t: Vec<Vec<f64>>,
        rho1: Vec<f64>,
        rho2: Vec<f64>,
        beta1: f64,
        beta2: f64,
    ) -> Result<Self> {
        let no_covert = rho1.iter().chain(&rho2).all(|&r| r == 0.0);
        let plan = Self {
            tau: p_t.len(),
            p_t,
            p_x3_given_t,
            rho1,
            rho2,
            beta1,
            beta2,
            no_covert,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// One-phase plan.
    pub fn single(p_x3: Vec<f64>, rho1: f64, rho2: f64, beta1: f64, beta2: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![p_x3], vec![rho1], vec![rho2], beta1, beta2)
    }

    /// Same layout with a point mass on `x3` in every phase.
    pub fn point_mass(x3_size: usize, x3: usize) -> Vec<f64> {
        let mut p = vec![0.0; x3_size];
        p[x3] = 1.0;
        p
    }

    pub fn x3_size(&self) -> usize {
        self.p_x3_given_t.first().map_or(0, Vec::len)
    }

    /// Structural checks that do not need the channel.
    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 || self.tau > MAX_PHASES {
            return Err(Error::InvalidPlan(format!(
                "tau={} outside 1..={MAX_PHASES}",
                self.tau
            )));
        }
        for (name, len) in [
            ("p_t", self.p_t.len()),
            ("p_x3_given_t", self.p_x3_given_t.len()),
            ("rho1", self.rho1.len()),
            ("rho2", self.rho2.len()),
        ] {
            if len != self.tau {
                return Err(Error::InvalidPlan(format!("{name} has {len} entries, tau={}", self.tau)));
            }
        }
        check_simplex(&self.p_t, "p_t")?;
        let k = self.x3_size();
        for (t, p) in self.p_x3_given_t.iter().enumerate() {
            if p.len() != k {
                return Err(Error::InvalidPlan(format!(
                    "p_x3_given_t[{t}] has {} entries, expected {k}",
                    p.len()
                )));
            }
            check_simplex(p, &format!("p_x3_given_t[{t}]"))?;
        }
        if self.rho1.iter().chain(&self.rho2).any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidPlan("rho must be finite and non-negative".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::InvalidPlan(format!("{name}={b} outside [0, 1]")));
            }
        }
        let active = (0..self.tau).any(|t| self.p_t[t] > 0.0 && self.rho1[t] + self.rho2[t] > 0.0);
        if self.no_covert {
            if self.rho1.iter().chain(&self.rho2).any(|&r| r != 0.0) {
                return Err(Error::InvalidPlan("no_covert plan with nonzero rho".into()));
            }
        } else if !active {
            return Err(Error::InvalidPlan(
                "no phase has covert activity; set no_covert for a silent plan".into(),
            ));
        }
        Ok(())
    }

    /// Validation against a channel's non-covert alphabet.
    pub fn validate_for(&self, x3_size: usize) -> Result<()> {
        self.validate()?;
        if self.x3_size() != x3_size {
            return Err(Error::InvalidPlan(format!(
                "plan has |X3|={}, channel has {x3_size}",
                self.x3_size()
            )));
        }
        Ok(())
    }

    /// Copy with every `ρ` multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.rho1.iter_mut().chain(p.rho2.iter_mut()).for_each(|r| *r *= c);
        p
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let plan: Self = toml::from_str(s).map_err(|e| Error::InvalidPlan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }
}

pub fn load_plan(path: impl AsRef<Path>) -> Result<PhasePlan> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    PhasePlan::from_toml_str(&text)
}

pub fn save_plan(plan: &PhasePlan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, plan.to_toml_string()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
