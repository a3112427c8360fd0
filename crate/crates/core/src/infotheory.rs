//! Information measures over a [`Dmc`]: relative entropy, the per-symbol
//! divergence profile, the Pearson χ² covertness distance, mutual
//! information of the non-covert sub-channel, its capacity, and the
//! small-signal mixture divergence.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{Dmc, Side};
use crate::error::{Error, Result};

const DIST_TOL: f64 = 1e-9;

/// Logarithm base used for every information quantity of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogUnit {
    Nats,
    /// Matches the reference capacity value, hence the default.
    #[default]
    Bits,
}

impl LogUnit {
    /// Factor converting a value in nats into this unit.
    #[inline]
    pub fn from_nats(self) -> f64 {
        match self {
            LogUnit::Nats => 1.0,
            LogUnit::Bits => std::f64::consts::LOG2_E,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogUnit::Nats => "nats",
            LogUnit::Bits => "bits",
        }
    }
}

impl fmt::Display for LogUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LogUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nats" | "nat" | "e" => Ok(LogUnit::Nats),
            "bits" | "bit" | "2" => Ok(LogUnit::Bits),
            other => Err(Error::InvalidArgument(format!("unknown log unit {other:?}"))),
        }
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::NotDistribution(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > DIST_TOL {
        return Err(Error::NotDistribution(format!("{what} sums to {s}")));
    }
    Ok(())
}

/// KL divergence in nats without input validation. `0 log 0 = 0`; returns
/// `+inf` if `p` puts mass where `q` has none.
#[inline]
pub(crate) fn kl_nats_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            acc += pi * (pi / qi).ln();
        }
    }
    // tiny negative values appear when p ≈ q
    acc.max(0.0)
}

/// Relative entropy `D(p || q)` in `unit`.
pub fn kl_div(p: &[f64], q: &[f64], unit: LogUnit) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    Ok(kl_nats_raw(p, q) * unit.from_nats())
}

/// Divergences seen by receiver and warden when one covert user switches on,
/// for one non-covert symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolDivergences {
    pub d_y1: f64,
    pub d_y2: f64,
    pub d_z1: f64,
    pub d_z2: f64,
    /// `d_z1 - d_y1`: the warden's advantage for user 1.
    pub d_zy1: f64,
    pub d_zy2: f64,
}

impl SymbolDivergences {
    /// Receiver divergence of user `l` (1 or 2).
    pub fn d_y(&self, user: usize) -> f64 {
        if user == 1 {
            self.d_y1
        } else {
            self.d_y2
        }
    }

    pub fn d_zy(&self, user: usize) -> f64 {
        if user == 1 {
            self.d_zy1
        } else {
            self.d_zy2
        }
    }
}

/// Per-`x3` divergence profile of a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceProfile {
    pub unit: LogUnit,
    pub per_x3: Vec<SymbolDivergences>,
}

impl DivergenceProfile {
    pub fn get(&self, x3: usize) -> &SymbolDivergences {
        &self.per_x3[x3]
    }
}

pub fn divergence_profile(d: &Dmc, unit: LogUnit) -> DivergenceProfile {
    let scale = unit.from_nats();
    let per_x3 = (0..d.x3_size())
        .map(|x3| {
            let kl = |side, x1, x2| {
                scale
                    * kl_nats_raw(
                        d.row_unchecked(side, x1, x2, x3),
                        d.row_unchecked(side, 0, 0, x3),
                    )
            };
            let d_y1 = kl(Side::Y, 1, 0);
            let d_y2 = kl(Side::Y, 0, 1);
            let d_z1 = kl(Side::Z, 1, 0);
            let d_z2 = kl(Side::Z, 0, 1);
            SymbolDivergences {
                d_y1,
                d_y2,
                d_z1,
                d_z2,
                d_zy1: d_z1 - d_y1,
                d_zy2: d_z2 - d_y2,
            }
        })
        .collect();
    DivergenceProfile { unit, per_x3 }
}

/// Pearson χ² distance between the warden's `ρ`-weighted "on" mixture and
/// its off-row at `x3`:
///
/// `Σ_z (λ Γ_Z(z|1,0,x3) + (1-λ) Γ_Z(z|0,1,x3) - Γ_Z(z|0,0,x3))² / Γ_Z(z|0,0,x3)`
///
/// with `λ = ρ1 / (ρ1 + ρ2)`. Letters outside the support of the off-row
/// contribute zero when both on-rows vanish there and `+inf` otherwise.
pub fn chi_square(d: &Dmc, rho1: f64, rho2: f64, x3: usize) -> Result<f64> {
    if !(rho1 >= 0.0 && rho2 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rho must be non-negative, got ({rho1}, {rho2})"
        )));
    }
    if x3 >= d.x3_size() {
        return Err(Error::OutOfRange(format!("x3={x3}")));
    }
    let total = rho1 + rho2;
    if total <= 0.0 {
        return Err(Error::DegenerateMixture);
    }
    let lam = rho1 / total;
    Ok(chi_square_lambda(d, lam, x3))
}

pub(crate) fn chi_square_lambda(d: &Dmc, lam: f64, x3: usize) -> f64 {
    let base = d.row_unchecked(Side::Z, 0, 0, x3);
    let on1 = d.row_unchecked(Side::Z, 1, 0, x3);
    let on2 = d.row_unchecked(Side::Z, 0, 1, x3);
    let mut acc = 0.0;
    for ((&q, &a), &b) in base.iter().zip(on1).zip(on2) {
        let mix = lam * a + (1.0 - lam) * b;
        if q > 0.0 {
            let diff = mix - q;
            acc += diff * diff / q;
        } else if mix > 0.0 {
            return f64::INFINITY;
        }
    }
    acc
}

/// Coefficients `(a11, a12, a22)` of the quadratic form
/// `(ρ1+ρ2)² χ²(ρ1,ρ2,x3) = a11 ρ1² + 2 a12 ρ1 ρ2 + a22 ρ2²`.
///
/// Entries are `+inf` where the absolute-continuity condition fails.
pub fn chi_square_form(d: &Dmc, x3: usize) -> [f64; 3] {
    let base = d.row_unchecked(Side::Z, 0, 0, x3);
    let on1 = d.row_unchecked(Side::Z, 1, 0, x3);
    let on2 = d.row_unchecked(Side::Z, 0, 1, x3);
    let mut form = [0.0; 3];
    for ((&q, &a), &b) in base.iter().zip(on1).zip(on2) {
        let (u, v) = (a - q, b - q);
        if q > 0.0 {
            form[0] += u * u / q;
            form[1] += u * v / q;
            form[2] += v * v / q;
        } else {
            if a > 0.0 {
                form[0] = f64::INFINITY;
            }
            if b > 0.0 {
                form[2] = f64::INFINITY;
            }
            if a > 0.0 && b > 0.0 {
                form[1] = f64::INFINITY;
            }
        }
    }
    form
}

/// `I(X3; Y | X1 = 0, X2 = 0)` for input distribution `p_x3`.
pub fn mutual_info_x3(d: &Dmc, p_x3: &[f64], unit: LogUnit) -> Result<f64> {
    if p_x3.len() != d.x3_size() {
        return Err(Error::LengthMismatch {
            left: p_x3.len(),
            right: d.x3_size(),
        });
    }
    check_distribution(p_x3, "p_x3")?;
    Ok(mutual_info_nats_raw(d, p_x3) * unit.from_nats())
}

pub(crate) fn mutual_info_nats_raw(d: &Dmc, p_x3: &[f64]) -> f64 {
    let mut q = vec![0.0; d.y_size()];
    for (x3, &p) in p_x3.iter().enumerate() {
        if p > 0.0 {
            for (qy, &w) in q.iter_mut().zip(d.row_unchecked(Side::Y, 0, 0, x3)) {
                *qy += p * w;
            }
        }
    }
    p_x3.iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(x3, &p)| p * kl_nats_raw(d.row_unchecked(Side::Y, 0, 0, x3), &q))
        .sum::<f64>()
        .max(0.0)
}

/// Result of [`capacity_x3`].
#[derive(Debug, Clone, PartialEq)]
pub struct Capacity {
    pub capacity: f64,
    pub input: Vec<f64>,
    pub iterations: usize,
    /// Final upper-minus-lower bound gap, in `unit`.
    pub gap: f64,
}

/// Blahut–Arimoto settings.
#[derive(Debug, Clone, Copy)]
pub struct CapacityOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Capacity of the sub-channel `x3 -> Γ_Y(·|0,0,x3)` by Blahut–Arimoto.
///
/// Starts from the uniform input and stops once the standard upper bound
/// `max_x D(W_x || q)` and lower bound `Σ p(x) D(W_x || q)` are within `tol`.
pub fn capacity_x3(d: &Dmc, unit: LogUnit, opts: CapacityOptions) -> Result<Capacity> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let k = d.x3_size();
    let rows: Vec<&[f64]> = (0..k).map(|x3| d.row_unchecked(Side::Y, 0, 0, x3)).collect();
    let mut p = vec![1.0 / k as f64; k];
    let mut q = vec![0.0; d.y_size()];
    let mut dvals = vec![0.0; k];
    let scale = unit.from_nats();
    let tol_nats = opts.tol / scale;

    let mut iterations = 0;
    let (mut lower, mut upper);
    loop {
        q.iter_mut().for_each(|v| *v = 0.0);
        for (row, &px) in rows.iter().zip(&p) {
            for (qy, &w) in q.iter_mut().zip(row.iter()) {
                *qy += px * w;
            }
        }
        for (dv, row) in dvals.iter_mut().zip(&rows) {
            *dv = kl_nats_raw(row, &q);
        }
        lower = p.iter().zip(&dvals).map(|(a, b)| a * b).sum::<f64>();
        upper = dvals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if upper - lower < tol_nats || iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let mut norm = 0.0;
        for (px, &dv) in p.iter_mut().zip(&dvals) {
            *px *= dv.exp();
            norm += *px;
        }
        p.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(Capacity {
        capacity: lower.max(0.0) * scale,
        input: p,
        iterations,
        gap: (upper - lower) * scale,
    })
}

/// `D(W_α || Γ_Z(·|0,0,x3))` where `W_α` is the warden output when the
/// covert inputs are independent `Bern(ρ1 α)` and `Bern(ρ2 α)`.
pub fn mixture_kl(d: &Dmc, rho1: f64, rho2: f64, x3: usize, alpha: f64, unit: LogUnit) -> Result<f64> {
    if x3 >= d.x3_size() {
        return Err(Error::OutOfRange(format!("x3={x3}")));
    }
    let (p1, p2) = (rho1 * alpha, rho2 * alpha);
    if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) {
        return Err(Error::InvalidArgument(format!(
            "Bernoulli parameters ({p1}, {p2}) outside [0, 1]"
        )));
    }
    let base = d.row_unchecked(Side::Z, 0, 0, x3);
    let on1 = d.row_unchecked(Side::Z, 1, 0, x3);
    let on2 = d.row_unchecked(Side::Z, 0, 1, x3);
    let both = d.row_unchecked(Side::Z, 1, 1, x3);
    let w10 = p1 * (1.0 - p2);
    let w01 = (1.0 - p1) * p2;
    let w11 = p1 * p2;
    // Σ W log(W/q) computed as Σ q·g(W/q - 1) with g(u) = (1+u)ln(1+u) - u,
    // which keeps full precision when W is within α of q.
    let mut acc = 0.0;
    for z in 0..base.len() {
        let q = base[z];
        // W - q, using that the four weights sum to one
        let delta = w10 * (on1[z] - q) + w01 * (on2[z] - q) + w11 * (both[z] - q);
        if q > 0.0 {
            let u = delta / q;
            acc += q * ((1.0 + u) * u.ln_1p() - u);
        } else if delta > 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    Ok(acc.max(0.0) * unit.from_nats())
}

#[cfg(test)]
mod tests {
    use super::*;

    // High-precision (40-digit) reference values for the reference channel.
    const D_Y1: [f64; 2] = [0.771_474_568_244_535_67, 0.613_909_752_221_722_87];
    const D_Y2: [f64; 2] = [0.611_277_559_602_464_25, 0.493_720_798_226_213_59];
    const D_Z1: [f64; 2] = [0.815_924_812_185_936_72, 0.378_000_786_109_182_39];
    const D_Z2: [f64; 2] = [2.008_246_277_178_786_5, 0.274_574_116_357_914_12];
    const CHI_LAMBDA: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
    const CHI: [[f64; 5]; 2] = [
        [
            22.819_145_135_566_188,
            15.698_861_941_786_284,
            10.056_005_980_861_244,
            5.890_577_252_791_068_6,
            3.202_575_757_575_757_6,
        ],
        [
            0.755_563_562_453_806_36,
            0.698_783_167_036_215_82,
            0.701_471_544_715_447_15,
            0.763_628_695_491_500_37,
            0.885_254_619_364_375_46,
        ],
    ];

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn kl_identity_and_closed_form() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_div(&p, &p, LogUnit::Nats).unwrap(), 0.0);
        let v = kl_div(&[1.0, 0.0], &[0.5, 0.5], LogUnit::Nats).unwrap();
        assert!(close(v, std::f64::consts::LN_2, 1e-15));
        let b = kl_div(&[1.0, 0.0], &[0.5, 0.5], LogUnit::Bits).unwrap();
        assert!(close(b, 1.0, 1e-15));
    }

    #[test]
    fn kl_infinite_on_support_violation() {
        assert_eq!(kl_div(&[0.5, 0.5], &[1.0, 0.0], LogUnit::Nats).unwrap(), f64::INFINITY);
    }

    #[test]
    fn kl_errors() {
        assert!(matches!(
            kl_div(&[1.0], &[0.5, 0.5], LogUnit::Nats),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            kl_div(&[0.6, 0.6], &[0.5, 0.5], LogUnit::Nats),
            Err(Error::NotDistribution(_))
        ));
    }

    #[test]
    fn reference_profile_matches_oracle() {
        let d = Dmc::reference();
        let prof = divergence_profile(&d, LogUnit::Nats);
        for x3 in 0..2 {
            let s = prof.get(x3);
            assert!(close(s.d_y1, D_Y1[x3], 1e-13));
            assert!(close(s.d_y2, D_Y2[x3], 1e-13));
            assert!(close(s.d_z1, D_Z1[x3], 1e-13));
            assert!(close(s.d_z2, D_Z2[x3], 1e-13));
            assert_eq!(s.d_zy1, s.d_z1 - s.d_y1);
            assert_eq!(s.d_zy2, s.d_z2 - s.d_y2);
        }
        let z1 = kl_div(
            d.row(Side::Z, 1, 0, 0).unwrap(),
            d.row(Side::Z, 0, 0, 0).unwrap(),
            LogUnit::Nats,
        )
        .unwrap();
        assert!(close(z1, D_Z1[0], 1e-13));
    }

    #[test]
    fn profile_in_bits_is_rescaled() {
        let d = Dmc::reference();
        let nats = divergence_profile(&d, LogUnit::Nats);
        let bits = divergence_profile(&d, LogUnit::Bits);
        for x3 in 0..2 {
            assert!(close(bits.get(x3).d_y1 * std::f64::consts::LN_2, nats.get(x3).d_y1, 1e-14));
        }
    }

    #[test]
    fn chi_square_matches_oracle() {
        let d = Dmc::reference();
        for x3 in 0..2 {
            for (i, &lam) in CHI_LAMBDA.iter().enumerate() {
                let v = if lam == 0.0 {
                    chi_square(&d, 0.0, 1.0, x3).unwrap()
                } else {
                    chi_square(&d, lam, 1.0 - lam, x3).unwrap()
                };
                assert!(close(v, CHI[x3][i], 1e-12), "x3={x3} lam={lam}: {v}");
            }
        }
    }

    #[test]
    fn chi_square_form_agrees_with_direct_sum() {
        let d = Dmc::reference();
        for x3 in 0..2 {
            let [a, b, c] = chi_square_form(&d, x3);
            for &(r1, r2) in &[(1.0, 0.0), (0.3, 0.9), (2.0, 5.0)] {
                let direct = (r1 + r2) * (r1 + r2) * chi_square(&d, r1, r2, x3).unwrap();
                let quad = a * r1 * r1 + 2.0 * b * r1 * r2 + c * r2 * r2;
                assert!(close(direct, quad, 1e-12));
            }
        }
    }

    #[test]
    fn chi_square_degenerate_cases() {
        let d = Dmc::reference();
        assert!(matches!(chi_square(&d, 0.0, 0.0, 0), Err(Error::DegenerateMixture)));
        let flat = Dmc::new(1, vec![vec![0.5, 0.5]; 4], vec![vec![0.25, 0.75]; 4]).unwrap();
        assert_eq!(chi_square(&flat, 1.0, 2.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn chi_square_infinite_on_support_violation() {
        let mut gz = vec![vec![1.0 / 3.0; 3]; 4];
        gz[0] = vec![0.5, 0.5, 0.0];
        let d = Dmc::new(1, vec![vec![1.0]; 4], gz).unwrap();
        assert_eq!(chi_square(&d, 1.0, 1.0, 0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn chi_square_scale_invariant() {
        let d = Dmc::reference();
        let a = chi_square(&d, 0.4, 1.3, 1).unwrap();
        let b = chi_square(&d, 0.8, 2.6, 1).unwrap();
        assert!(close(a, b, 1e-12));
    }

    #[test]
    fn mutual_info_edge_cases() {
        let d = Dmc::reference();
        assert_eq!(mutual_info_x3(&d, &[1.0, 0.0], LogUnit::Bits).unwrap(), 0.0);
        assert_eq!(mutual_info_x3(&d, &[0.0, 1.0], LogUnit::Bits).unwrap(), 0.0);
        let same = Dmc::new(2, vec![vec![0.3, 0.7]; 8], vec![vec![0.5, 0.5]; 8]).unwrap();
        assert_eq!(mutual_info_x3(&same, &[0.5, 0.5], LogUnit::Nats).unwrap(), 0.0);
        let uni = mutual_info_x3(&d, &[0.5, 0.5], LogUnit::Bits).unwrap();
        assert!(close(uni, 0.196_668_111_979_910_33, 1e-13));
    }

    #[test]
    fn capacity_of_reference_subchannel() {
        let d = Dmc::reference();
        let c = capacity_x3(&d, LogUnit::Bits, CapacityOptions::default()).unwrap();
        assert!(close(c.capacity, 0.197_534_052_183_439_37, 1e-9), "{}", c.capacity);
        assert!(close(c.input[0], 0.534_958_746_545_247_81, 1e-4));
        let uni = mutual_info_x3(&d, &[0.5, 0.5], LogUnit::Bits).unwrap();
        assert!(uni > 0.0 && uni < c.capacity);
    }

    #[test]
    fn capacity_of_useless_channels() {
        let same = Dmc::new(2, vec![vec![0.3, 0.7]; 8], vec![vec![0.5, 0.5]; 8]).unwrap();
        let c = capacity_x3(&same, LogUnit::Bits, CapacityOptions::default()).unwrap();
        assert!(c.capacity.abs() < 1e-12);
        // BSC with crossover 1/2: rows (0,0,0) and (0,0,1) both (1/2, 1/2)
        let bsc = Dmc::new(2, vec![vec![0.5, 0.5]; 8], vec![vec![0.5, 0.5]; 8]).unwrap();
        let c = capacity_x3(&bsc, LogUnit::Nats, CapacityOptions::default()).unwrap();
        assert!(c.capacity.abs() < 1e-12);
    }

    #[test]
    fn capacity_rejects_bad_tolerance() {
        let d = Dmc::reference();
        let opts = CapacityOptions { tol: 0.0, max_iter: 10 };
        assert!(capacity_x3(&d, LogUnit::Bits, opts).is_err());
    }

    #[test]
    fn mixture_kl_trivial_cases() {
        let d = Dmc::reference();
        assert_eq!(mixture_kl(&d, 1.0, 2.0, 0, 0.0, LogUnit::Nats).unwrap(), 0.0);
        assert_eq!(mixture_kl(&d, 0.0, 0.0, 1, 0.3, LogUnit::Nats).unwrap(), 0.0);
        assert!(mixture_kl(&d, 3.0, 0.0, 0, 0.5, LogUnit::Nats).is_err());
    }

    #[test]
    fn mixture_kl_approaches_second_order_term() {
        let d = Dmc::reference();
        let (r1, r2, x3) = (0.7, 1.1, 0);
        let chi = chi_square(&d, r1, r2, x3).unwrap();
        let mut last = f64::INFINITY;
        for &alpha in &[1e-2, 1e-3, 1e-4] {
            let v = mixture_kl(&d, r1, r2, x3, alpha, LogUnit::Nats).unwrap();
            let ratio = v / ((alpha * (r1 + r2)).powi(2) / 2.0 * chi);
            let err = (ratio - 1.0).abs();
            assert!(err < last, "alpha={alpha} ratio={ratio}");
            last = err;
        }
        assert!(last < 1e-2);
    }
}
