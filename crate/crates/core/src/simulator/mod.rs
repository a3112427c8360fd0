//! Finite-blocklength simulation of the covert MAC scheme: random
//! phase-multiplexed codebooks, successive decoding, error-probability
//! estimates and the exact warden divergence.

mod codebook;
mod config;
mod decode;
mod divergence;

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::Dmc;
use crate::error::Result;
use crate::infotheory::LogUnit;
use crate::region::RateModel;
use crate::rng::{stream, Domain};

pub use codebook::{build_codebooks, channel_sample, encode, padding, CodebookEnsemble, Inputs, Messages};
pub use config::{BlockLayout, PhaseSegment, SimConfig, Threshold, DEFAULT_ENUMERATION_CAP};
pub use decode::{decode, resolve_thresholds, Decision, LogTable};
pub use divergence::{enumeration_size, exact_delta, mean_exact_delta};

const Z95: f64 = 1.959_963_984_540_054;

/// Error-rate estimate with a 95% Wilson score interval. `hat` is `None`
/// when no trials were run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub errors: u64,
    pub trials: u64,
    pub hat: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Estimate {
    pub fn wilson(errors: u64, trials: u64) -> Self {
        if trials == 0 {
            return Self {
                errors,
                trials,
                hat: None,
                lower: None,
                upper: None,
            };
        }
        let n = trials as f64;
        let p = errors as f64 / n;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        Self {
            errors,
            trials,
            hat: Some(p),
            lower: Some((center - half).max(0.0).min(p)),
            upper: Some((center + half).min(1.0).max(p)),
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        matches!((self.lower, self.upper), (Some(lo), Some(hi)) if lo <= p && p <= hi)
    }
}

/// Errors of each decoding stage under the active hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageErrors {
    pub w3: Estimate,
    pub w1: Estimate,
    pub w2: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub trials_run: u64,
    /// `P(Ŵ3 ≠ W3 | H = 0)`.
    pub pe0: Estimate,
    /// `P(any message wrong | H = 1)`.
    pub pe1: Estimate,
    pub stages: StageErrors,
    pub codebook_mode: &'static str,
    pub thresholds: [f64; 2],
    /// Exact divergence averaged over `w3`, nats, for the trial-0 codebook.
    pub delta_exact: Option<f64>,
    /// `(ω²/2) · max(φ1, φ2) · E[(ρ1+ρ2)² χ²]`, nats.
    pub delta_predictor: f64,
    pub delta_bound_ratio: Option<f64>,
    pub warnings: Vec<String>,
    /// Excluded from any reproducibility comparison.
    pub wall_time_s: f64,
}

/// Second-order warden divergence predicted for the configuration, nats.
pub fn divergence_predictor(cfg: &SimConfig, d: &Dmc) -> f64 {
    let stats = RateModel::new(d, LogUnit::Nats).stats(&cfg.plan);
    let (phi1, phi2, _) = crate::region::phi_from_beta(cfg.plan.beta1, cfg.plan.beta2);
    cfg.omega_n * cfg.omega_n / 2.0 * phi1.max(phi2) * stats.chi
}

/// Codebook used by trial `index`.
pub fn trial_codebook(cfg: &SimConfig, d: &Dmc, index: u64) -> Result<CodebookEnsemble> {
    let which = if cfg.fixed_codebook { 0 } else { index };
    build_codebooks(cfg, d, &mut stream(cfg.seed, Domain::Codebook, which))
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    e0: u64,
    e1: u64,
    w3: u64,
    w1: u64,
    w2: u64,
}

impl std::ops::Add for Counts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            e0: self.e0 + o.e0,
            e1: self.e1 + o.e1,
            w3: self.w3 + o.w3,
            w1: self.w1 + o.w1,
            w2: self.w2 + o.w2,
        }
    }
}

/// Both hypotheses of one trial: uniform messages and keys, encode, pass
/// through the channel, decode.
fn run_one(
    ens: &CodebookEnsemble,
    d: &Dmc,
    logs: &LogTable,
    eta: [f64; 2],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Counts> {
    use rand::Rng;
    let msg = Messages {
        w1: rng.gen_range(0..ens.m[0]),
        s1: rng.gen_range(0..ens.k[0]),
        w2: rng.gen_range(0..ens.m[1]),
        s2: rng.gen_range(0..ens.k[1]),
        w3: rng.gen_range(0..ens.noncovert.len()),
    };
    let mut c = Counts::default();

    let x = encode(ens, false, &msg, rng)?;
    let (y, _) = channel_sample(d, &x, rng)?;
    let dec = decode(ens, logs, &y, msg.s1, msg.s2, false, eta)?;
    c.e0 = u64::from(dec.w3 != msg.w3);

    let x = encode(ens, true, &msg, rng)?;
    let (y, _) = channel_sample(d, &x, rng)?;
    let dec = decode(ens, logs, &y, msg.s1, msg.s2, true, eta)?;
    c.w3 = u64::from(dec.w3 != msg.w3);
    c.w1 = u64::from(dec.w1 != Some(msg.w1));
    c.w2 = u64::from(dec.w2 != Some(msg.w2));
    c.e1 = u64::from(c.w3 + c.w1 + c.w2 > 0);
    Ok(c)
}

/// Monte-Carlo error probabilities. Trial `i` draws from its own stream, so
/// the report does not depend on the number of worker threads.
pub fn run_trials(cfg: &SimConfig, d: &Dmc) -> Result<SimReport> {
    let start = Instant::now();
    cfg.validate(d)?;
    let logs = LogTable::new(d);
    let first = trial_codebook(cfg, d, 0)?;
    let thresholds = resolve_thresholds(cfg, d, &first);
    let warnings = first.layout.warnings.clone();

    let counts = (0..cfg.trials)
        .into_par_iter()
        .map(|i| -> Result<Counts> {
            let mut rng = stream(cfg.seed, Domain::Trial, i);
            if cfg.fixed_codebook || i == 0 {
                run_one(&first, d, &logs, thresholds, &mut rng)
            } else {
                let ens = trial_codebook(cfg, d, i)?;
                run_one(&ens, d, &logs, thresholds, &mut rng)
            }
        })
        .try_reduce(Counts::default, |a, b| Ok(a + b))?;

    let delta_predictor = divergence_predictor(cfg, d);
    let delta_exact = if cfg.exact_divergence {
        Some(mean_exact_delta(&first, d, cfg.enumeration_cap)?)
    } else {
        None
    };
    let t = cfg.trials;
    Ok(SimReport {
        trials_run: t,
        pe0: Estimate::wilson(counts.e0, t),
        pe1: Estimate::wilson(counts.e1, t),
        stages: StageErrors {
            w3: Estimate::wilson(counts.w3, t),
            w1: Estimate::wilson(counts.w1, t),
            w2: Estimate::wilson(counts.w2, t),
        },
        codebook_mode: if cfg.fixed_codebook { "fixed" } else { "random" },
        thresholds,
        delta_exact,
        delta_predictor,
        delta_bound_ratio: delta_exact.map(|v| v / delta_predictor),
        warnings,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::PhasePlan;

    fn plan() -> PhasePlan {
        PhasePlan::single(vec![0.5, 0.5], 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn wilson_interval() {
        let e = Estimate::wilson(0, 100);
        assert_eq!(e.hat, Some(0.0));
        assert_eq!(e.lower, Some(0.0));
        assert!(e.upper.unwrap() > 0.03 && e.upper.unwrap() < 0.04);
        let e = Estimate::wilson(50, 100);
        assert!((e.lower.unwrap() - 0.4038).abs() < 1e-3);
        assert!(e.contains(0.5));
        let e = Estimate::wilson(0, 0);
        assert!(e.hat.is_none() && !e.contains(0.0));
    }

    #[test]
    fn one_noncovert_message_never_fails() {
        let d = Dmc::reference();
        let cfg = SimConfig {
            trials: 200,
            ..SimConfig::new(32, plan())
        };
        let r = run_trials(&cfg, &d).unwrap();
        assert_eq!(r.pe0.hat, Some(0.0));
        assert_eq!(r.stages.w3.errors, 0);
    }

    #[test]
    fn zero_trials_reports_no_estimate() {
        let d = Dmc::reference();
        let cfg = SimConfig {
            trials: 0,
            ..SimConfig::new(8, plan())
        };
        let r = run_trials(&cfg, &d).unwrap();
        assert_eq!(r.trials_run, 0);
        assert!(r.pe0.hat.is_none() && r.pe1.hat.is_none());
    }

    #[test]
    fn more_noncovert_messages_fail_more() {
        let d = Dmc::reference();
        let mut last = -1.0;
        for m3 in [2, 8, 32] {
            let mut total = 0;
            for seed in 0..4 {
                let cfg = SimConfig {
                    m3,
                    trials: 500,
                    seed,
                    ..SimConfig::new(64, plan())
                };
                total += run_trials(&cfg, &d).unwrap().pe0.errors;
            }
            let rate = total as f64 / 2000.0;
            assert!(rate > last, "m3={m3}: {rate} <= {last}");
            last = rate;
        }
    }

    #[test]
    fn reports_do_not_depend_on_thread_count() {
        let d = Dmc::reference();
        let cfg = SimConfig {
            m1: 4,
            m2: 4,
            m3: 4,
            k1: 2,
            k2: 2,
            trials: 300,
            seed: 11,
            ..SimConfig::new(48, plan())
        };
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let mut r = pool.install(|| run_trials(&cfg, &d)).unwrap();
            r.wall_time_s = 0.0;
            r
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn predictor_matches_sizing_bound() {
        let d = Dmc::reference();
        let cfg = SimConfig::new(100, PhasePlan::single(vec![0.5, 0.5], 1.0, 0.5, 1.0, 0.8).unwrap());
        let s = crate::region::theorem1_sizing(&d, &cfg.plan, 100, cfg.omega_n, [0.1; 6], LogUnit::Bits).unwrap();
        assert!((divergence_predictor(&cfg, &d) * 1.1 - s.divergence_bound).abs() < 1e-15);
    }
}
