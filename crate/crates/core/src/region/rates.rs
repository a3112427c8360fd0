use serde::{Deserialize, Serialize};

use crate::channel::{Dmc, Side};
use crate::error::{Error, Result};
use crate::infotheory::{chi_square_form, divergence_profile, kl_nats_raw, LogUnit, SymbolDivergences};

use super::plan::PhasePlan;

/// Square-root covert rates, non-covert rate and required key rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTuple {
    pub r1: f64,
    pub r2: f64,
    #[serde(rename = "R3")]
    pub r3: f64,
    pub k1: f64,
    pub k2: f64,
    /// The warden sees nothing (`χ² = 0` wherever covert users transmit),
    /// so the covert rates are unbounded and reported as `+inf`.
    #[serde(default)]
    pub perfectly_covert: bool,
}

impl RateTuple {
    pub fn r(&self, user: usize) -> f64 {
        if user == 1 {
            self.r1
        } else {
            self.r2
        }
    }

    pub fn k(&self, user: usize) -> f64 {
        if user == 1 {
            self.k1
        } else {
            self.k2
        }
    }
}

/// Plan expectations that do not depend on `β`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanStats {
    /// `E[ρ_ℓ D_Y^(ℓ)(X3)]`.
    pub num: [f64; 2],
    /// `E[ρ_ℓ D_{Z-Y}^(ℓ)(X3)]`, unclamped.
    pub key: [f64; 2],
    /// `E[(ρ1+ρ2)² χ²(ρ1,ρ2,X3)]`.
    pub chi: f64,
    /// `Σ_t P_T(t) I(X3;Y|X1=X2=0,T=t)`.
    pub r3: f64,
}

/// `a * b` with `0 * inf = 0`, so silent users never pick up infinite terms.
#[inline]
pub(crate) fn wmul(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl PlanStats {
    /// Rate tuple at the given `β`.
    pub fn rates(&self, beta1: f64, beta2: f64) -> RateTuple {
        let beta = [beta1, beta2];
        let mut r = [0.0; 2];
        let mut k = [0.0; 2];
        let mut perfectly_covert = false;
        let chi = self.chi.max(0.0);
        for l in 0..2 {
            if chi == 0.0 {
                if self.num[l] > 0.0 && beta[l] > 0.0 {
                    r[l] = f64::INFINITY;
                    perfectly_covert = true;
                }
                if self.key[l] > 0.0 && beta[l] > 0.0 {
                    k[l] = f64::INFINITY;
                }
            } else if chi.is_finite() {
                let s = std::f64::consts::SQRT_2 * beta[l] / chi.sqrt();
                r[l] = wmul(s, self.num[l]);
                k[l] = wmul(s, self.key[l]).max(0.0);
            }
        }
        RateTuple {
            r1: r[0],
            r2: r[1],
            r3: self.r3,
            k1: k[0],
            k2: k[1],
            perfectly_covert,
        }
    }
}

/// Channel quantities needed to evaluate plans repeatedly.
#[derive(Debug, Clone)]
pub struct RateModel {
    unit: LogUnit,
    x3_size: usize,
    y_size: usize,
    divs: Vec<SymbolDivergences>,
    forms: Vec<[f64; 3]>,
    /// Rows `Γ_Y(·|0,0,x3)`, contiguous.
    off_rows: Vec<f64>,
}

impl RateModel {
    pub fn new(d: &Dmc, unit: LogUnit) -> Self {
        let k = d.x3_size();
        let off_rows = (0..k)
            .flat_map(|x3| d.row_unchecked(Side::Y, 0, 0, x3).iter().copied())
            .collect();
        Self {
            unit,
            x3_size: k,
            y_size: d.y_size(),
            divs: divergence_profile(d, unit).per_x3,
            forms: (0..k).map(|x3| chi_square_form(d, x3)).collect(),
            off_rows,
        }
    }

    pub fn unit(&self) -> LogUnit {
        self.unit
    }

    pub fn x3_size(&self) -> usize {
        self.x3_size
    }

    pub fn divergences(&self, x3: usize) -> &SymbolDivergences {
        &self.divs[x3]
    }

    /// `(ρ1+ρ2)² χ²(ρ1,ρ2,x3)` via the quadratic form.
    #[inline]
    pub fn chi_term(&self, rho1: f64, rho2: f64, x3: usize) -> f64 {
        let [a11, a12, a22] = self.forms[x3];
        (wmul(rho1 * rho1, a11) + 2.0 * wmul(rho1 * rho2, a12) + wmul(rho2 * rho2, a22)).max(0.0)
    }

    /// Mutual information of the off sub-channel in the session unit.
    /// `scratch` must hold `y_size` values.
    pub fn mutual_info(&self, p_x3: &[f64], scratch: &mut [f64]) -> f64 {
        let ny = self.y_size;
        let q = &mut scratch[..ny];
        q.iter_mut().for_each(|v| *v = 0.0);
        for (x3, &p) in p_x3.iter().enumerate() {
            if p > 0.0 {
                let row = &self.off_rows[x3 * ny..(x3 + 1) * ny];
                for (qy, &w) in q.iter_mut().zip(row) {
                    *qy += p * w;
                }
            }
        }
        let mut acc = 0.0;
        for (x3, &p) in p_x3.iter().enumerate() {
            if p > 0.0 {
                acc += p * kl_nats_raw(&self.off_rows[x3 * ny..(x3 + 1) * ny], q);
            }
        }
        acc.max(0.0) * self.unit.from_nats()
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    /// Expectations over a plan given as flat slices; `p_x3` holds `tau`
    /// consecutive distributions.
    pub fn stats_raw(
        &self,
        p_t: &[f64],
        p_x3: &[f64],
        rho1: &[f64],
        rho2: &[f64],
        scratch: &mut [f64],
    ) -> PlanStats {
        let k = self.x3_size;
        let mut s = PlanStats::default();
        for t in 0..p_t.len() {
            let pt = p_t[t];
            if pt == 0.0 {
                continue;
            }
            let px = &p_x3[t * k..(t + 1) * k];
            let (r1, r2) = (rho1[t], rho2[t]);
            for (x3, &p) in px.iter().enumerate() {
                let w = pt * p;
                if w == 0.0 {
                    continue;
                }
                let dv = &self.divs[x3];
                s.num[0] += wmul(w * r1, dv.d_y1);
                s.num[1] += wmul(w * r2, dv.d_y2);
                s.key[0] += wmul(w * r1, dv.d_zy1);
                s.key[1] += wmul(w * r2, dv.d_zy2);
                s.chi += wmul(w, self.chi_term(r1, r2, x3));
            }
            s.r3 += pt * self.mutual_info(px, scratch);
        }
        s
    }

    pub fn stats(&self, plan: &PhasePlan) -> PlanStats {
        let flat: Vec<f64> = plan.p_x3_given_t.iter().flatten().copied().collect();
        let mut scratch = vec![0.0; self.y_size];
        self.stats_raw(&plan.p_t, &flat, &plan.rho1, &plan.rho2, &mut scratch)
    }

    /// Validated rate tuple of `plan`.
    pub fn rate_tuple(&self, plan: &PhasePlan) -> Result<RateTuple> {
        plan.validate_for(self.x3_size)?;
        Ok(self.stats(plan).rates(plan.beta1, plan.beta2))
    }
}

/// Rate tuple of a phase plan on channel `d`.
///
/// Phases in which both covert users are silent contribute nothing to the
/// numerators or the χ² expectation. An infinite χ² in a used phase drives
/// both covert rates to zero.
pub fn rate_tuple(d: &Dmc, plan: &PhasePlan, unit: LogUnit) -> Result<RateTuple> {
    if plan.x3_size() != d.x3_size() {
        return Err(Error::InvalidPlan(format!(
            "plan has |X3|={}, channel has {}",
            plan.x3_size(),
            d.x3_size()
        )));
    }
    RateModel::new(d, unit).rate_tuple(plan)
}
