use serde::{Deserialize, Serialize};

use crate::channel::Dmc;
use crate::error::{Error, Result};
use crate::infotheory::LogUnit;

use super::plan::PhasePlan;
use super::rates::RateModel;

/// Finite-blocklength code sizes for a plan.
///
/// `log_*` fields are in the session unit. `divergence_bound` is a
/// divergence, always in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Sizing {
    pub n: u64,
    pub omega_n: f64,
    pub xi: [f64; 6],
    pub phi1: f64,
    pub phi2: f64,
    /// `β2 > β1`: user 2 takes the longer active fraction.
    pub roles_swapped: bool,
    pub unit: LogUnit,
    pub log_m1: f64,
    pub log_m2: f64,
    pub log_m3: f64,
    pub log_k1: f64,
    pub log_k2: f64,
    pub divergence_bound: f64,
}

/// Active fractions `(φ1, φ2, swapped)` for the given `β`.
pub fn phi_from_beta(beta1: f64, beta2: f64) -> (f64, f64, bool) {
    if beta1 >= beta2 {
        (beta1 * beta1, beta1 * beta2, false)
    } else {
        (beta1 * beta2, beta2 * beta2, true)
    }
}

pub fn theorem1_sizing(
    d: &Dmc,
    plan: &PhasePlan,
    n: u64,
    omega_n: f64,
    xi: [f64; 6],
    unit: LogUnit,
) -> Result<Theorem1Sizing> {
    plan.validate_for(d.x3_size())?;
    if n == 0 {
        return Err(Error::InvalidArgument("blocklength must be positive".into()));
    }
    if !(omega_n > 0.0 && omega_n < 1.0) {
        return Err(Error::InvalidArgument(format!("omega_n={omega_n} outside (0, 1)")));
    }
    if let Some(x) = xi.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        return Err(Error::InvalidArgument(format!("slack {x} outside (0, 1)")));
    }
    let stats = RateModel::new(d, unit).stats(plan);
    let (phi1, phi2, roles_swapped) = phi_from_beta(plan.beta1, plan.beta2);
    let nf = n as f64;
    let sq = omega_n * nf.sqrt();
    // the divergence is computed in nats whatever the rate unit
    let chi = if stats.chi.is_finite() { stats.chi } else { f64::INFINITY };
    Ok(Theorem1Sizing {
        n,
        omega_n,
        xi,
        phi1,
        phi2,
        roles_swapped,
        unit,
        log_m1: phi1 * (1.0 - xi[0]) * sq * stats.num[0],
        log_m2: phi2 * (1.0 - xi[1]) * sq * stats.num[1],
        log_m3: (1.0 - xi[2]) * nf * stats.r3,
        log_k1: (phi1 * (1.0 - xi[3]) * sq * stats.key[0]).max(0.0),
        log_k2: (phi2 * (1.0 - xi[4]) * sq * stats.key[1]).max(0.0),
        divergence_bound: phi1.max(phi2) * (1.0 + xi[5]) * omega_n * omega_n / 2.0 * chi,
    })
}
