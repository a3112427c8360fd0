use crate::channel::{Dmc, Side};
use crate::error::{Error, Result};

use super::codebook::CodebookEnsemble;
use super::config::{SimConfig, Threshold};

/// Natural-log receiver likelihoods, `table[row][y]`.
#[derive(Debug, Clone)]
pub struct LogTable {
    x3_size: usize,
    y_size: usize,
    ln: Vec<f64>,
}

impl LogTable {
    pub fn new(d: &Dmc) -> Self {
        let ln = d
            .matrix(Side::Y)
            .iter()
            .flat_map(|row| row.iter().map(|p| p.ln()))
            .collect();
        Self {
            x3_size: d.x3_size(),
            y_size: d.y_size(),
            ln,
        }
    }

    #[inline]
    pub fn get(&self, x1: u8, x2: u8, x3: usize, y: usize) -> f64 {
        let row = usize::from(x1) * 2 * self.x3_size + usize::from(x2) * self.x3_size + x3;
        self.ln[row * self.y_size + y]
    }
}

/// Decoder output. `None` for a covert stage means no unique index cleared
/// the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub w3: usize,
    pub w1: Option<usize>,
    pub w2: Option<usize>,
}

/// Thresholds resolved to numbers, in nats.
pub fn resolve_thresholds(cfg: &SimConfig, d: &Dmc, ens: &CodebookEnsemble) -> [f64; 2] {
    let prof = crate::infotheory::divergence_profile(d, crate::infotheory::LogUnit::Nats);
    let mut auto = [0.0; 2];
    for (t, seg) in ens.layout.phases.iter().enumerate() {
        let px = &cfg.plan.p_x3_given_t[t];
        for l in 0..2 {
            let mean: f64 = px
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(x3, &p)| p * prof.get(x3).d_y(l + 1))
                .sum();
            if seg.density[l] > 0.0 {
                auto[l] += seg.active[l] as f64 * seg.density[l] * mean;
            }
        }
    }
    let pick = |eta: Threshold, a: f64| match eta {
        Threshold::Auto => (1.0 - cfg.mu) * a,
        Threshold::Value(v) => v,
    };
    [pick(cfg.eta1, auto[0]), pick(cfg.eta2, auto[1])]
}

/// Successive decoding. The non-covert message is decoded first by maximum
/// likelihood assuming silent covert users. Under `h = true` each covert
/// message is then searched within the key-`s_ℓ` sub-codebook by a
/// likelihood-ratio threshold test against the off-symbol.
#[allow(clippy::too_many_arguments)]
pub fn decode(
    ens: &CodebookEnsemble,
    logs: &LogTable,
    y: &[u32],
    s1: usize,
    s2: usize,
    h: bool,
    eta: [f64; 2],
) -> Result<Decision> {
    if y.len() != ens.n() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: ens.n(),
        });
    }
    if s1 >= ens.k[0] || s2 >= ens.k[1] {
        return Err(Error::OutOfRange(format!("keys ({s1}, {s2})")));
    }
    let mut w3 = 0;
    let mut best = f64::NEG_INFINITY;
    for (j, word) in ens.noncovert.iter().enumerate() {
        let ll: f64 = word
            .iter()
            .zip(y)
            .map(|(&x3, &yi)| logs.get(0, 0, x3 as usize, yi as usize))
            .sum();
        if j == 0 || ll > best {
            best = ll;
            w3 = j;
        }
    }
    if !h {
        return Ok(Decision {
            w3,
            w1: None,
            w2: None,
        });
    }
    let x3 = &ens.noncovert[w3];
    let mut out = [None, None];
    for (l, s) in [s1, s2].into_iter().enumerate() {
        let mut found = None;
        let mut hits = 0;
        for j in 0..ens.m[l] {
            let word = &ens.covert[l][j * ens.k[l] + s];
            let llr: f64 = word
                .iter()
                .map(|&i| {
                    let i = i as usize;
                    let (yi, c) = (y[i] as usize, x3[i] as usize);
                    let on = if l == 0 { logs.get(1, 0, c, yi) } else { logs.get(0, 1, c, yi) };
                    on - logs.get(0, 0, c, yi)
                })
                .sum();
            // NaN (from inf - inf) never clears the threshold
            if llr > eta[l] {
                hits += 1;
                found = Some(j);
            }
        }
        out[l] = if hits == 1 { found } else { None };
    }
    Ok(Decision {
        w3,
        w1: out[0],
        w2: out[1],
    })
}
