use serde::{Deserialize, Serialize};

use crate::channel::Dmc;
use crate::error::{Error, Result};
use crate::region::{phi_from_beta, PhasePlan};

/// Default cap on `|Z|^n · m1·k1·m2·k2` for the exact divergence.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 32;

/// Decoder threshold for a covert stage, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Threshold {
    /// `(1-μ)` times the expected log-likelihood ratio of the sent codeword.
    #[default]
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub plan: PhasePlan,
    pub omega_n: f64,
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    pub k1: usize,
    pub k2: usize,
    #[serde(default)]
    pub eta1: Threshold,
    #[serde(default)]
    pub eta2: Threshold,
    /// Slack in the automatic threshold rule.
    pub mu: f64,
    pub trials: u64,
    pub seed: u64,
    pub exact_divergence: bool,
    /// One codebook for all trials instead of a fresh draw per trial.
    pub fixed_codebook: bool,
    pub enumeration_cap: u128,
}

impl SimConfig {
    /// Configuration with `ω_n = n^{-1/4}`, unit set sizes, automatic
    /// thresholds and random-coding averaging.
    pub fn new(n: usize, plan: PhasePlan) -> Self {
        Self {
            n,
            plan,
            omega_n: (n.max(1) as f64).powf(-0.25),
            m1: 1,
            m2: 1,
            m3: 1,
            k1: 1,
            k2: 1,
            eta1: Threshold::Auto,
            eta2: Threshold::Auto,
            mu: 0.5,
            trials: 1000,
            seed: 0,
            exact_divergence: false,
            fixed_codebook: false,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    pub fn validate(&self, d: &Dmc) -> Result<()> {
        self.plan.validate_for(d.x3_size())?;
        if self.n == 0 {
            return Err(Error::InvalidConfig("blocklength must be positive".into()));
        }
        if !(self.omega_n > 0.0 && self.omega_n.is_finite()) {
            return Err(Error::InvalidConfig(format!("omega_n={} must be positive", self.omega_n)));
        }
        for (name, v) in [
            ("m1", self.m1),
            ("m2", self.m2),
            ("m3", self.m3),
            ("k1", self.k1),
            ("k2", self.k2),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if u32::try_from(self.n).is_err() {
            return Err(Error::InvalidConfig("blocklength too large".into()));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::InvalidConfig(format!("mu={} outside (0, 1)", self.mu)));
        }
        for eta in [self.eta1, self.eta2] {
            if let Threshold::Value(v) = eta {
                if v.is_nan() {
                    return Err(Error::InvalidConfig("threshold is NaN".into()));
                }
            }
        }
        Ok(())
    }
}

/// `⌊x⌋` that forgives representation error just below an integer.
fn floor_len(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

/// Where one phase sits in the block and how its covert symbols are laid out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSegment {
    pub start: usize,
    pub len: usize,
    /// Codeword lengths `⌊φ_ℓ n_t⌋` of the two covert users.
    pub active: [usize; 2],
    /// 1-symbol probability of each covert user in this phase.
    pub density: [f64; 2],
}

impl PhaseSegment {
    /// Length of the segment covered by the longer covert codeword.
    pub fn covered(&self) -> usize {
        self.active[0].max(self.active[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockLayout {
    pub n: usize,
    pub phi: [f64; 2],
    pub roles_swapped: bool,
    pub phases: Vec<PhaseSegment>,
    /// Densities that exceeded 1 and were clipped.
    pub warnings: Vec<String>,
}

impl BlockLayout {
    pub fn new(cfg: &SimConfig) -> Self {
        let plan = &cfg.plan;
        let (phi1, phi2, roles_swapped) = phi_from_beta(plan.beta1, plan.beta2);
        let phi = [phi1, phi2];
        let mut phases = Vec::with_capacity(plan.tau);
        let mut warnings = Vec::new();
        let mut start = 0;
        for t in 0..plan.tau {
            let len = if t + 1 == plan.tau {
                cfg.n - start
            } else {
                floor_len(cfg.n as f64 * plan.p_t[t]).min(cfg.n - start)
            };
            let mut density = [0.0; 2];
            for (l, rho) in [plan.rho1[t], plan.rho2[t]].into_iter().enumerate() {
                if len == 0 || rho == 0.0 {
                    continue;
                }
                let q = rho * cfg.omega_n / (len as f64).sqrt();
                if q > 1.0 {
                    warnings.push(format!(
                        "phase {t}: user {} density {q:.4} clipped to 1",
                        l + 1
                    ));
                }
                density[l] = q.min(1.0);
            }
            let active = [floor_len(phi[0] * len as f64), floor_len(phi[1] * len as f64)];
            phases.push(PhaseSegment {
                start,
                len,
                active,
                density,
            });
            start += len;
        }
        Self {
            n: cfg.n,
            phi,
            roles_swapped,
            phases,
            warnings,
        }
    }
}
