use crate::channel::{Dmc, Side};
use crate::error::{Error, Result};

use super::codebook::{padding, CodebookEnsemble};

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// One block position that can tell the warden something: the distinct
/// output laws (as ratios to the reference row) and which law each covert
/// codeword pair induces.
struct Position {
    /// `ratios[state][j]` for the j-th letter in the reference support.
    ratios: Vec<Vec<f64>>,
    reference: Vec<f64>,
    state: Vec<u8>,
}

/// `|Z|^n · m1·k1·m2·k2`, saturating.
pub fn enumeration_size(ens: &CodebookEnsemble, z_size: usize) -> u128 {
    let mut size: u128 = 1;
    for _ in 0..ens.n() {
        size = size.saturating_mul(z_size as u128);
    }
    let pairs = (ens.covert[0].len() as u128).saturating_mul(ens.covert[1].len() as u128);
    size.saturating_mul(pairs)
}

/// Exact warden divergence `D(Q̂ || Π Γ_Z(·|0,0,x3_i))` for non-covert
/// message `w3`, in nats.
///
/// `Q̂` is the uniform mixture over all messages and keys of the covert users
/// of the product output laws; padding symbols enter as per-position
/// Bernoulli mixtures. Refuses when the output space times the number of
/// codeword pairs exceeds `cap`.
pub fn exact_delta(ens: &CodebookEnsemble, d: &Dmc, w3: usize, cap: u128) -> Result<f64> {
    if w3 >= ens.noncovert.len() {
        return Err(Error::OutOfRange(format!("w3={w3}")));
    }
    let required = enumeration_size(ens, d.z_size());
    if required > cap {
        return Err(Error::EnumerationCap { required, cap });
    }
    let n = ens.n();
    let x3 = &ens.noncovert[w3];
    let (c1, c2) = (ens.covert[0].len(), ens.covert[1].len());
    let pairs = c1 * c2;

    let mut bits = [vec![vec![0u8; n]; c1], vec![vec![0u8; n]; c2]];
    for l in 0..2 {
        for (word, b) in ens.covert[l].iter().zip(bits[l].iter_mut()) {
            for &i in word {
                b[i as usize] = 1;
            }
        }
    }
    let mut pad_density = [vec![None; n], vec![None; n]];
    for (l, pads) in padding(&ens.layout).into_iter().enumerate() {
        for (from, to, q) in pads {
            if q > 0.0 {
                pad_density[l][from..to].iter_mut().for_each(|v| *v = Some(q));
            }
        }
    }

    let mut positions = Vec::new();
    for i in 0..n {
        let c = x3[i] as usize;
        let reference = d.row_unchecked(Side::Z, 0, 0, c);
        let support: Vec<usize> = (0..reference.len()).filter(|&z| reference[z] > 0.0).collect();
        // law for each (x1, x2), with padding mixed in
        let law = |a: u8, b: u8| -> Vec<f64> {
            let mix = |a: u8, b: u8| -> Vec<f64> {
                let branch = |a: u8, b: u8| d.row_unchecked(Side::Z, a, b, c).to_vec();
                match pad_density[1][i] {
                    Some(q) => branch(a, 0)
                        .iter()
                        .zip(branch(a, 1))
                        .map(|(u, v)| (1.0 - q) * u + q * v)
                        .collect(),
                    None => branch(a, b),
                }
            };
            match pad_density[0][i] {
                Some(q) => mix(0, b)
                    .iter()
                    .zip(mix(1, b))
                    .map(|(u, v)| (1.0 - q) * u + q * v)
                    .collect(),
                None => mix(a, b),
            }
        };
        let mut states: Vec<(u8, u8)> = Vec::new();
        let mut state = Vec::with_capacity(pairs);
        for a in 0..c1 {
            for b in 0..c2 {
                let key = (bits[0][a][i], bits[1][b][i]);
                let s = match states.iter().position(|k| *k == key) {
                    Some(s) => s,
                    None => {
                        states.push(key);
                        states.len() - 1
                    }
                };
                state.push(s as u8);
            }
        }
        let laws: Vec<Vec<f64>> = states.iter().map(|&(a, b)| law(a, b)).collect();
        for l in &laws {
            if (0..l.len()).any(|z| reference[z] == 0.0 && l[z] > 0.0) {
                return Ok(f64::INFINITY);
            }
        }
        if laws.iter().all(|l| l.as_slice() == reference) {
            // factors out of both laws
            continue;
        }
        let ratios = laws
            .iter()
            .map(|l| support.iter().map(|&z| l[z] / reference[z]).collect())
            .collect();
        positions.push(Position {
            ratios,
            reference: support.iter().map(|&z| reference[z]).collect(),
            state,
        });
    }
    if positions.is_empty() {
        return Ok(0.0);
    }

    let mut prefix = vec![vec![1.0; pairs]; positions.len() + 1];
    let mut acc = Accumulator::default();
    walk(&positions, 0, 1.0, &mut prefix, &mut acc);
    Ok(acc.value().max(0.0))
}

fn walk(pos: &[Position], depth: usize, p0: f64, prefix: &mut [Vec<f64>], acc: &mut Accumulator) {
    if depth == pos.len() {
        let cur = &prefix[depth];
        let r = cur.iter().sum::<f64>() / cur.len() as f64;
        // Σ Q log(Q/P0) = Σ P0 (r ln r - r + 1) since both laws sum to one
        let u = r - 1.0;
        acc.add(p0 * ((1.0 + u) * u.ln_1p() - u));
        return;
    }
    let p = &pos[depth];
    for (j, &q) in p.reference.iter().enumerate() {
        let (head, tail) = prefix.split_at_mut(depth + 1);
        let (src, dst) = (&head[depth], &mut tail[0]);
        for ((o, &v), &s) in dst.iter_mut().zip(src).zip(&p.state) {
            *o = v * p.ratios[s as usize][j];
        }
        walk(pos, depth + 1, p0 * q, prefix, acc);
    }
}

/// [`exact_delta`] averaged over all non-covert messages.
pub fn mean_exact_delta(ens: &CodebookEnsemble, d: &Dmc, cap: u128) -> Result<f64> {
    let m3 = ens.noncovert.len();
    let mut acc = Accumulator::default();
    for w3 in 0..m3 {
        acc.add(exact_delta(ens, d, w3, cap)?);
    }
    Ok(acc.value() / m3 as f64)
}
