//! Derivative-free minimization used by the plan search.
//!
//! A plain Nelder–Mead simplex with adaptive coefficients
//! (Gao & Han, 2012) and a scrambled Halton sequence for multi-start seeds.

use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop once the spread of simplex values falls below this, relative to
    /// `1 + |f_best|`.
    pub f_tol: f64,
    /// Simplex diameter at which a small spread counts as converged early.
    pub x_tol: f64,
    /// Edge length of the initial simplex.
    pub step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            f_tol: 1e-12,
            x_tol: 1e-9,
            step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from `x0`. NaN values are treated as `+inf`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let value = eval(x0, &mut evals);
        return Minimum {
            x: Vec::new(),
            value,
            evals,
            converged: true,
        };
    }

    let nf = n as f64;
    let alpha = 1.0;
    let gamma = 1.0 + 2.0 / nf;
    let rho = 0.75 - 1.0 / (2.0 * nf);
    let sigma = 1.0 - 1.0 / nf;

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();
    let mut order: Vec<usize> = (0..=n).collect();
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];
    let mut converged = false;

    while evals < opts.max_evals {
        // stable sort keeps index order on ties, which keeps runs reproducible
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second = order[n - 1];

        let spread = values[worst] - values[best];
        let scale = 1.0 + values[best].abs();
        if spread <= opts.f_tol * scale || (values[best].is_infinite() && values[worst] == values[best]) {
            let diam = simplex
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(&simplex[best])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            // flat directions (e.g. a logit running off to -inf) never
            // shrink, so a tiny value spread alone is enough after a while
            if diam <= opts.x_tol || spread <= opts.f_tol * scale * 1e-3 || evals > 200 * n {
                converged = true;
                break;
            }
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, &v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= nf);

        for ((t, &c), &w) in trial.iter_mut().zip(&centroid).zip(&simplex[worst]) {
            *t = c + alpha * (c - w);
        }
        let fr = eval(&trial, &mut evals);

        if fr < values[best] {
            for ((t, &c), &w) in trial2.iter_mut().zip(&centroid).zip(&simplex[worst]) {
                *t = c + gamma * (c - w);
            }
            let fe = eval(&trial2, &mut evals);
            if fe < fr {
                simplex[worst].copy_from_slice(&trial2);
                values[worst] = fe;
            } else {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = fr;
            continue;
        }
        // contraction, outside if the reflection beat the worst point
        let outside = fr < values[worst];
        for ((t, &c), &w) in trial2.iter_mut().zip(&centroid).zip(&simplex[worst]) {
            *t = if outside {
                c + rho * (c - w)
            } else {
                c - rho * (c - w)
            };
        }
        let fc = eval(&trial2, &mut evals);
        if (outside && fc <= fr) || (!outside && fc < values[worst]) {
            simplex[worst].copy_from_slice(&trial2);
            values[worst] = fc;
            continue;
        }
        // shrink towards the best vertex
        let xb = simplex[best].clone();
        for &i in &order[1..] {
            for (v, &b) in simplex[i].iter_mut().zip(&xb) {
                *v = b + sigma * (*v - b);
            }
            values[i] = eval(&simplex[i], &mut evals);
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty simplex");
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        evals,
        converged,
    }
}

const PRIMES: [u32; 64] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293,
    307, 311,
];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = f64::from(base);
    let mut inv = 1.0 / b;
    let mut out = 0.0;
    while i > 0 {
        out += (i % u64::from(base)) as f64 * inv;
        i /= u64::from(base);
        inv /= b;
    }
    out
}

/// Halton points in `[0,1)^dim` with a random Cranley–Patterson rotation.
#[derive(Debug, Clone)]
pub struct Halton {
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    /// Panics if `dim` exceeds the 64 supported prime bases.
    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        assert!(dim <= PRIMES.len(), "Halton dimension {dim} unsupported");
        Self {
            shift: (0..dim).map(|_| rng.gen::<f64>()).collect(),
            index: 1,
        }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        self.shift
            .iter()
            .zip(PRIMES)
            .map(|(&s, p)| (radical_inverse(i, p) + s).fract())
            .collect()
    }
}
