use rand::Rng;

use crate::channel::Dmc;
use crate::error::{Error, Result};

use super::config::{BlockLayout, SimConfig};

/// Random codebooks for all users, concatenated over phases.
///
/// Covert codewords are stored as sorted positions of their 1-symbols within
/// the block; every other position is the off-symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookEnsemble {
    pub layout: BlockLayout,
    /// `m_ℓ · k_ℓ` codewords per covert user, index `w · k_ℓ + s`.
    pub covert: [Vec<Vec<u32>>; 2],
    pub m: [usize; 2],
    pub k: [usize; 2],
    /// `m3` non-covert codewords of length `n`.
    pub noncovert: Vec<Vec<u32>>,
}

/// Block position ranges `[from, to)` and density of the fresh symbols that
/// pad the shorter covert codeword up to the longer one, per user.
pub fn padding(layout: &BlockLayout) -> [Vec<(usize, usize, f64)>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for seg in &layout.phases {
        let long = seg.covered();
        for (l, pads) in out.iter_mut().enumerate() {
            if seg.active[l] < long {
                pads.push((seg.start + seg.active[l], seg.start + long, seg.density[l]));
            }
        }
    }
    out
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    // rounding left `u` above the cumulative sum: last letter with mass
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

impl CodebookEnsemble {
    pub fn index(&self, user: usize, w: usize, s: usize) -> usize {
        w * self.k[user - 1] + s
    }

    pub fn codeword(&self, user: usize, w: usize, s: usize) -> &[u32] {
        &self.covert[user - 1][self.index(user, w, s)]
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    /// Time index to phase index.
    pub fn phase_of(&self) -> Vec<usize> {
        let mut v = vec![0; self.layout.n];
        for (t, seg) in self.layout.phases.iter().enumerate() {
            v[seg.start..seg.start + seg.len].iter_mut().for_each(|x| *x = t);
        }
        v
    }
}

/// Draws all codebooks: covert symbols i.i.d. Bernoulli at the phase
/// density over each user's active fraction, non-covert symbols i.i.d. from
/// the phase input law.
pub fn build_codebooks<R: Rng + ?Sized>(cfg: &SimConfig, d: &Dmc, rng: &mut R) -> Result<CodebookEnsemble> {
    cfg.validate(d)?;
    let layout = BlockLayout::new(cfg);
    let m = [cfg.m1, cfg.m2];
    let k = [cfg.k1, cfg.k2];
    let mut covert: [Vec<Vec<u32>>; 2] = [Vec::new(), Vec::new()];
    for l in 0..2 {
        let count = m[l]
            .checked_mul(k[l])
            .ok_or_else(|| Error::InvalidConfig("codebook too large".into()))?;
        covert[l] = vec![Vec::new(); count];
    }
    for seg in &layout.phases {
        for l in 0..2 {
            let q = seg.density[l];
            for word in covert[l].iter_mut() {
                if q == 0.0 {
                    continue;
                }
                for i in seg.start..seg.start + seg.active[l] {
                    if rng.gen::<f64>() < q {
                        word.push(i as u32);
                    }
                }
            }
        }
    }
    let mut noncovert = vec![Vec::with_capacity(cfg.n); cfg.m3];
    for (t, seg) in layout.phases.iter().enumerate() {
        let p = &cfg.plan.p_x3_given_t[t];
        for word in noncovert.iter_mut() {
            for _ in 0..seg.len {
                word.push(sample_index(p, rng) as u32);
            }
        }
    }
    Ok(CodebookEnsemble {
        layout,
        covert,
        m,
        k,
        noncovert,
    })
}

/// Channel inputs for one transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inputs {
    pub x1: Vec<u8>,
    pub x2: Vec<u8>,
    pub x3: Vec<u32>,
}

/// Messages and keys of one transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Messages {
    pub w1: usize,
    pub s1: usize,
    pub w2: usize,
    pub s2: usize,
    pub w3: usize,
}

impl Messages {
    pub fn check(&self, ens: &CodebookEnsemble) -> Result<()> {
        let ok = self.w1 < ens.m[0]
            && self.s1 < ens.k[0]
            && self.w2 < ens.m[1]
            && self.s2 < ens.k[1]
            && self.w3 < ens.noncovert.len();
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfRange(format!("{self:?}")))
        }
    }
}

/// Channel inputs under hypothesis `h`. Under `h = false` the covert users
/// stay silent. Padding symbols are drawn from `rng`.
pub fn encode<R: Rng + ?Sized>(
    ens: &CodebookEnsemble,
    h: bool,
    msg: &Messages,
    rng: &mut R,
) -> Result<Inputs> {
    msg.check(ens)?;
    let n = ens.n();
    let mut x = [vec![0u8; n], vec![0u8; n]];
    if h {
        let words = [ens.codeword(1, msg.w1, msg.s1), ens.codeword(2, msg.w2, msg.s2)];
        for (xl, word) in x.iter_mut().zip(words) {
            for &i in word {
                xl[i as usize] = 1;
            }
        }
        for (xl, pads) in x.iter_mut().zip(padding(&ens.layout)) {
            for (from, to, q) in pads {
                if q > 0.0 {
                    for v in &mut xl[from..to] {
                        *v = u8::from(rng.gen::<f64>() < q);
                    }
                }
            }
        }
    }
    let [x1, x2] = x;
    Ok(Inputs {
        x1,
        x2,
        x3: ens.noncovert[msg.w3].clone(),
    })
}

/// Receiver and warden outputs drawn independently given the inputs.
pub fn channel_sample<R: Rng + ?Sized>(d: &Dmc, x: &Inputs, rng: &mut R) -> Result<(Vec<u32>, Vec<u32>)> {
    let n = x.x3.len();
    if x.x1.len() != n || x.x2.len() != n {
        return Err(Error::LengthMismatch {
            left: x.x1.len().max(x.x2.len()),
            right: n,
        });
    }
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b, c) = (x.x1[i], x.x2[i], x.x3[i] as usize);
        let ry = d.row(crate::channel::Side::Y, a, b, c)?;
        let rz = d.row_unchecked(crate::channel::Side::Z, a, b, c);
        y.push(sample_index(ry, rng) as u32);
        z.push(sample_index(rz, rng) as u32);
    }
    Ok((y, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::PhasePlan;
    use crate::rng::{stream, Domain};

    fn cfg(n: usize, plan: PhasePlan) -> SimConfig {
        SimConfig {
            m1: 3,
            m2: 2,
            m3: 4,
            k1: 2,
            k2: 2,
            ..SimConfig::new(n, plan)
        }
    }

    #[test]
    fn silent_plan_gives_empty_codewords() {
        let d = Dmc::reference();
        let plan = PhasePlan::single(vec![0.5, 0.5], 0.0, 0.0, 1.0, 1.0).unwrap();
        let ens = build_codebooks(&cfg(50, plan), &d, &mut stream(1, Domain::Codebook, 0)).unwrap();
        assert!(ens.covert.iter().flatten().all(Vec::is_empty));
    }

    #[test]
    fn single_noncovert_codeword() {
        let d = Dmc::reference();
        let plan = PhasePlan::single(vec![0.5, 0.5], 1.0, 1.0, 1.0, 1.0).unwrap();
        let c = SimConfig { m3: 1, ..cfg(20, plan) };
        let ens = build_codebooks(&c, &d, &mut stream(1, Domain::Codebook, 0)).unwrap();
        assert_eq!(ens.noncovert.len(), 1);
        assert_eq!(ens.noncovert[0].len(), 20);
    }

    #[test]
    fn average_density_matches_target() {
        let d = Dmc::reference();
        let n = 10_000;
        let plan = PhasePlan::single(vec![0.5, 0.5], 1.0, 2.0, 1.0, 1.0).unwrap();
        let c = SimConfig {
            m1: 50,
            m2: 50,
            k1: 4,
            k2: 4,
            ..SimConfig::new(n, plan)
        };
        let ens = build_codebooks(&c, &d, &mut stream(9, Domain::Codebook, 0)).unwrap();
        for (l, rho) in [(0, 1.0), (1, 2.0)] {
            let q = rho * c.omega_n / (n as f64).sqrt();
            let words = &ens.covert[l];
            let trials = (words.len() * n) as f64;
            let ones: usize = words.iter().map(Vec::len).sum();
            let sd = (trials * q * (1.0 - q)).sqrt();
            assert!((ones as f64 - trials * q).abs() < 3.0 * sd, "user {l}: {ones}");
            // ω√n = 10 ones per codeword on average for ρ = 1
            if l == 0 {
                assert!((ones as f64 / words.len() as f64 - 10.0).abs() < 1.0);
            }
        }
    }

    #[test]
    fn noncovert_symbols_follow_input_law() {
        let d = Dmc::reference();
        let plan = PhasePlan::single(vec![0.3, 0.7], 1.0, 1.0, 1.0, 1.0).unwrap();
        let c = SimConfig { m3: 20, ..cfg(5000, plan) };
        let ens = build_codebooks(&c, &d, &mut stream(2, Domain::Codebook, 0)).unwrap();
        let total: f64 = 20.0 * 5000.0;
        let zeros = ens.noncovert.iter().flatten().filter(|&&v| v == 0).count() as f64;
        let sd = (total * 0.3 * 0.7).sqrt();
        assert!((zeros - 0.3 * total).abs() < 3.0 * sd);
    }

    #[test]
    fn silent_hypothesis_sends_nothing_covert() {
        let d = Dmc::reference();
        let plan = PhasePlan::single(vec![0.5, 0.5], 3.0, 3.0, 1.0, 0.5).unwrap();
        let ens = build_codebooks(&cfg(64, plan), &d, &mut stream(3, Domain::Codebook, 0)).unwrap();
        let msg = Messages {
            w1: 2,
            s1: 1,
            w2: 1,
            s2: 0,
            w3: 3,
        };
        let mut rng = stream(3, Domain::Trial, 0);
        let x0 = encode(&ens, false, &msg, &mut rng).unwrap();
        let x1 = encode(&ens, true, &msg, &mut rng).unwrap();
        assert!(x0.x1.iter().chain(&x0.x2).all(|&v| v == 0));
        assert_eq!(x0.x3, x1.x3);
        assert_eq!(x0.x3, ens.noncovert[3]);
    }

    #[test]
    fn padding_only_beyond_the_shorter_codeword() {
        let d = Dmc::reference();
        // φ1 = 1, φ2 = 0.5: user 2 is padded on the second half
        let plan = PhasePlan::single(vec![1.0, 0.0], 10.0, 10.0, 1.0, 0.5).unwrap();
        let ens = build_codebooks(&cfg(16, plan), &d, &mut stream(4, Domain::Codebook, 0)).unwrap();
        let pads = padding(&ens.layout);
        assert!(pads[0].is_empty());
        assert_eq!(pads[1].len(), 1);
        assert_eq!((pads[1][0].0, pads[1][0].1), (8, 16));
        assert!(ens.covert[1].iter().flatten().all(|&i| i < 8));
        let msg = Messages::default();
        let x = encode(&ens, true, &msg, &mut stream(4, Domain::Trial, 1)).unwrap();
        let word: Vec<u32> = (0..8).filter(|&i| x.x2[i as usize] == 1).collect();
        assert_eq!(word, ens.codeword(2, 0, 0));
    }

    #[test]
    fn equal_fractions_have_no_padding() {
        let d = Dmc::reference();
        let plan = PhasePlan::single(vec![1.0, 0.0], 2.0, 2.0, 1.0, 1.0).unwrap();
        let ens = build_codebooks(&cfg(32, plan), &d, &mut stream(5, Domain::Codebook, 0)).unwrap();
        assert!(padding(&ens.layout).iter().all(Vec::is_empty));
        let msg = Messages { w1: 1, ..Default::default() };
        let x = encode(&ens, true, &msg, &mut stream(5, Domain::Trial, 0)).unwrap();
        let ones: Vec<u32> = (0..32).filter(|&i| x.x1[i as usize] == 1).collect();
        assert_eq!(ones, ens.codeword(1, 1, 0));
    }

    #[test]
    fn two_phase_concatenation() {
        let d = Dmc::reference();
        let plan = PhasePlan::new(
            vec![0.5, 0.5],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            1.0,
            1.0,
        )
        .unwrap();
        let ens = build_codebooks(&cfg(10, plan), &d, &mut stream(6, Domain::Codebook, 0)).unwrap();
        let x = encode(&ens, true, &Messages::default(), &mut stream(6, Domain::Trial, 0)).unwrap();
        assert_eq!(x.x3, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn sampling() {
        let d = Dmc::reference();
        let mut rng = stream(7, Domain::Trial, 0);
        let empty = Inputs {
            x1: vec![],
            x2: vec![],
            x3: vec![],
        };
        let (y, z) = channel_sample(&d, &empty, &mut rng).unwrap();
        assert!(y.is_empty() && z.is_empty());

        let n = 100_000;
        let x = Inputs {
            x1: vec![0; n],
            x2: vec![0; n],
            x3: vec![0; n],
        };
        let (y, _) = channel_sample(&d, &x, &mut rng).unwrap();
        let row = [0.28, 0.26, 0.02, 0.01, 0.18, 0.25];
        for (s, &p) in row.iter().enumerate() {
            let c = y.iter().filter(|&&v| v == s as u32).count() as f64;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((c - n as f64 * p).abs() < 3.0 * sd, "letter {s}: {c}");
        }

        let point = Dmc::new(
            1,
            vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0]; 4],
        )
        .unwrap();
        let x = Inputs {
            x1: vec![0; 50],
            x2: vec![0; 50],
            x3: vec![0; 50],
        };
        let (y, z) = channel_sample(&point, &x, &mut rng).unwrap();
        assert!(y.iter().all(|&v| v == 1) && z.iter().all(|&v| v == 0));
    }
}
