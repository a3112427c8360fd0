mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use covert_mac::infotheory::{
    CapacityOptions, capacity_x3, chi_square, divergence_profile, mixture_kl,
};
use covert_mac::region::{
    curve_r2_vs_k2, load_plan, theorem1_sizing, trace_r2_r3, OptBudget, SearchBest, SearchError, X3Mode,
};
use covert_mac::simulator::{run_trials, SimConfig, Threshold, DEFAULT_ENUMERATION_CAP};
use covert_mac::{load_channel, Dmc, LogUnit, PhasePlan};

use output::{emit, RunManifest, Table};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "covert-mac", version, about = "Covert rate regions and finite-blocklength simulation for three-user MACs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Channel TOML file; the bundled reference channel when omitted.
    #[arg(long, global = true)]
    channel: Option<PathBuf>,
    /// Logarithm unit of every rate: bits or nats.
    #[arg(long, global = true, default_value = "bits")]
    unit: LogUnit,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output file; stdout when omitted. A `<out>.manifest.toml` sidecar is
    /// written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Budget {
    #[arg(long, default_value_t = 6)]
    max_phases: usize,
    #[arg(long, default_value_t = 64)]
    restarts: usize,
    #[arg(long, default_value_t = 200)]
    evals_per_dim: usize,
    #[arg(long, default_value_t = 2)]
    polish_rounds: usize,
}

impl Budget {
    fn build(&self, seed: u64) -> OptBudget {
        OptBudget {
            max_phases: self.max_phases,
            restarts: self.restarts,
            evals_per_dim: self.evals_per_dim,
            polish_rounds: self.polish_rounds,
            seed,
            warm_starts: Vec::new(),
        }
    }

    fn describe(&self) -> String {
        format!(
            "phases:{};restarts:{};evals_per_dim:{};polish:{}",
            self.max_phases, self.restarts, self.evals_per_dim, self.polish_rounds
        )
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Divergence profile and χ² table per non-covert symbol.
    Profile,
    /// Trace the (r2, R3) boundary at fixed r1 and key budgets.
    Region {
        #[arg(long, default_value_t = 0.5)]
        r1: f64,
        #[arg(long, default_value_t = 0.8)]
        k1_max: f64,
        #[arg(long, default_value_t = 0.8)]
        k2_max: f64,
        /// Number of R3 targets from 0 to the capacity.
        #[arg(long, default_value_t = 11)]
        points: usize,
        #[command(flatten)]
        budget: Budget,
    },
    /// Largest r2 as a function of the key budget k2.
    Curve {
        #[arg(long, default_value_t = 0.1)]
        r1: f64,
        #[arg(long, default_value_t = 0.8)]
        k1_max: f64,
        /// Comma-separated k2 budgets.
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
        k2: Vec<f64>,
        /// Optimize X3 jointly.
        #[arg(long)]
        optimize: bool,
        /// Hold X3 at this symbol (repeatable).
        #[arg(long)]
        fix: Vec<usize>,
        #[command(flatten)]
        budget: Budget,
    },
    /// Monte-Carlo error probabilities and warden divergence of random codes.
    Simulate(SimArgs),
    /// Ratio of the mixture divergence to its second-order χ² term.
    VerifyAsymptotics {
        #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        rho1: f64,
        #[arg(long, default_value_t = 1.0)]
        rho2: f64,
        /// Restrict to one non-covert symbol.
        #[arg(long)]
        x3: Option<usize>,
    },
    /// Code sizes and divergence bound for a plan at blocklength n.
    Sizing {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        n: u64,
        /// Defaults to n^{-1/4}.
        #[arg(long)]
        omega: Option<f64>,
        /// One slack for all six ξ, or six comma-separated values.
        #[arg(long, value_delimiter = ',', default_value = "0.1")]
        xi: Vec<f64>,
    },
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    n: usize,
    /// Phase plan TOML; a single-phase uniform-X3 plan with unit ρ when omitted.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long, default_value_t = 1)]
    m1: usize,
    #[arg(long, default_value_t = 1)]
    m2: usize,
    #[arg(long, default_value_t = 1)]
    m3: usize,
    #[arg(long, default_value_t = 1)]
    k1: usize,
    #[arg(long, default_value_t = 1)]
    k2: usize,
    /// Covert thresholds in nats; automatic when omitted.
    #[arg(long)]
    eta1: Option<f64>,
    #[arg(long)]
    eta2: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// Also compute the exact warden divergence by enumeration.
    #[arg(long)]
    exact_divergence: bool,
    #[arg(long)]
    fixed_codebook: bool,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    enumeration_cap: u128,
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<covert_mac::Error> for Failure {
    fn from(e: covert_mac::Error) -> Self {
        Self { code: 3, msg: e.to_string() }
    }
}

impl From<&SearchError> for Failure {
    fn from(e: &SearchError) -> Self {
        let code = match e {
            SearchError::Invalid(_) => 3,
            SearchError::Infeasible { .. } => 4,
            SearchError::BudgetExhausted { .. } => 5,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self { code: 1, msg: format!("{e:#}") }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.common.threads)
            .build_global()
            .expect("thread pool is configured once");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let c = &cli.common;
    let d = match &c.channel {
        Some(p) => load_channel(p)?,
        None => Dmc::reference(),
    };
    let manifest = |subcommand, constraints: String, budget: String| RunManifest {
        subcommand,
        channel: d.content_hash(),
        unit: c.unit.to_string(),
        seed: c.seed,
        constraints,
        budget,
        version: VERSION,
    };
    let out = c.out.as_deref();
    match &cli.cmd {
        Cmd::Profile => profile(&d, c.unit, out, manifest("profile", "-".into(), "-".into())),
        Cmd::Region { r1, k1_max, k2_max, points, budget } => {
            let m = manifest(
                "region",
                format!("r1:{r1};k1_max:{k1_max};k2_max:{k2_max};points:{points}"),
                budget.describe(),
            );
            region(&d, c.unit, *r1, *k1_max, *k2_max, *points, &budget.build(c.seed), out, m)
        }
        Cmd::Curve { r1, k1_max, k2, optimize, fix, budget } => {
            let mut modes = Vec::new();
            if *optimize {
                modes.push(X3Mode::Optimize);
            }
            modes.extend(fix.iter().map(|&x| X3Mode::Fix(x)));
            if modes.is_empty() {
                modes.push(X3Mode::Optimize);
                modes.extend((0..d.x3_size()).map(X3Mode::Fix));
            }
            let m = manifest(
                "curve",
                format!("r1:{r1};k1_max:{k1_max};modes:{}", modes.iter().map(mode_name).collect::<Vec<_>>().join("|")),
                budget.describe(),
            );
            curve(&d, c.unit, *r1, *k1_max, k2, &modes, &budget.build(c.seed), out, m)
        }
        Cmd::Simulate(a) => simulate(&d, a, c.seed, out, manifest("simulate", "-".into(), "-".into())),
        Cmd::VerifyAsymptotics { alpha, rho1, rho2, x3 } => {
            let m = manifest("verify-asymptotics", format!("rho1:{rho1};rho2:{rho2}"), "-".into());
            verify(&d, alpha, *rho1, *rho2, *x3, out, m)
        }
        Cmd::Sizing { plan, n, omega, xi } => {
            let m = manifest("sizing", format!("n:{n}"), "-".into());
            sizing(&d, c.unit, plan, *n, *omega, xi, out, m)
        }
    }
}

fn mode_name(m: &X3Mode) -> String {
    match m {
        X3Mode::Optimize => "optimize".into(),
        X3Mode::Fix(x) => format!("fix{x}"),
    }
}

fn profile(d: &Dmc, unit: LogUnit, out: Option<&Path>, m: RunManifest) -> Outcome {
    const LAMBDAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
    let prof = divergence_profile(d, unit);
    let mut t = Table::new(
        &m,
        &["x3", "d_y1", "d_y2", "d_z1", "d_z2", "d_zy1", "d_zy2", "chi2_l0", "chi2_l0.25", "chi2_l0.5", "chi2_l0.75", "chi2_l1"],
    );
    for (x3, s) in prof.per_x3.iter().enumerate() {
        let mut cells = vec![x3.to_string()];
        cells.extend([s.d_y1, s.d_y2, s.d_z1, s.d_z2, s.d_zy1, s.d_zy2].into_iter().map(num));
        for l in LAMBDAS {
            cells.push(num(chi_square(d, l, 1.0 - l, x3)?));
        }
        t.row(cells);
    }
    emit(out, &m, &t.finish())?;
    Ok(())
}

/// Shortest round-trip form, in exponent notation for tiny magnitudes.
fn num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn rate_cells(b: &SearchBest) -> Vec<String> {
    let r = &b.rates;
    vec![
        num(r.r1),
        num(r.r2),
        num(r.r3),
        num(r.k1),
        num(r.k2),
        b.plan.tau.to_string(),
        r.perfectly_covert.to_string(),
    ]
}

#[allow(clippy::too_many_arguments)]
fn region(
    d: &Dmc,
    unit: LogUnit,
    r1: f64,
    k1_max: f64,
    k2_max: f64,
    points: usize,
    budget: &OptBudget,
    out: Option<&Path>,
    m: RunManifest,
) -> Outcome {
    if points < 1 {
        return Err(Failure { code: 2, msg: "--points must be at least 1".into() });
    }
    let cap = capacity_x3(d, unit, CapacityOptions::default())?.capacity;
    // the search keeps a small feasibility margin, so the top target sits
    // just below the capacity
    let top = cap * (1.0 - 1e-7);
    let grid: Vec<f64> = if points == 1 {
        vec![0.0]
    } else {
        (0..points).map(|i| top * i as f64 / (points - 1) as f64).collect()
    };
    let trace = trace_r2_r3(d, unit, r1, k1_max, k2_max, &grid, Some(cap), budget)?;
    if trace.points.is_empty() {
        if let Some((_, e)) = trace.failures.first() {
            return Err(e.into());
        }
    }
    let mut t = Table::new(&m, &["R3_target", "r1", "r2", "R3", "k1", "k2", "tau", "perfectly_covert"]);
    for p in &trace.points {
        let mut cells = vec![num(p.r3_target)];
        cells.extend(rate_cells(&p.best));
        t.row(cells);
    }
    for (target, e) in &trace.failures {
        eprintln!("R3 target {target}: {e}");
    }
    emit(out, &m, &t.finish())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn curve(
    d: &Dmc,
    unit: LogUnit,
    r1: f64,
    k1_max: f64,
    grid: &[f64],
    modes: &[X3Mode],
    budget: &OptBudget,
    out: Option<&Path>,
    m: RunManifest,
) -> Outcome {
    let mut t = Table::new(&m, &["mode", "k2_max", "r1", "r2", "R3", "k1", "k2", "tau", "perfectly_covert", "status"]);
    let mut first_err = None;
    let mut any_ok = false;
    for &mode in modes {
        for p in curve_r2_vs_k2(d, unit, r1, k1_max, grid, mode, budget)? {
            let mut cells = vec![mode_name(&mode), num(p.k2)];
            match &p.result {
                Ok(b) => {
                    any_ok = true;
                    cells.extend(rate_cells(b));
                    cells.push("ok".into());
                }
                Err(e) => {
                    cells.extend(std::iter::repeat_n(String::new(), 7));
                    cells.push(
                        match e {
                            SearchError::Infeasible { .. } => "infeasible",
                            SearchError::BudgetExhausted { .. } => "budget_exhausted",
                            SearchError::Invalid(_) => "invalid",
                        }
                        .into(),
                    );
                    first_err.get_or_insert_with(|| Failure::from(e));
                }
            }
            t.row(cells);
        }
    }
    emit(out, &m, &t.finish())?;
    match first_err {
        Some(f) if !any_ok => Err(f),
        _ => Ok(()),
    }
}

fn simulate(d: &Dmc, a: &SimArgs, seed: u64, out: Option<&Path>, m: RunManifest) -> Outcome {
    let plan = match &a.plan {
        Some(p) => load_plan(p)?,
        None => PhasePlan::single(vec![1.0 / d.x3_size() as f64; d.x3_size()], 1.0, 1.0, 1.0, 1.0)?,
    };
    let base = SimConfig::new(a.n, plan);
    let cfg = SimConfig {
        omega_n: a.omega.unwrap_or(base.omega_n),
        m1: a.m1,
        m2: a.m2,
        m3: a.m3,
        k1: a.k1,
        k2: a.k2,
        eta1: a.eta1.map_or(Threshold::Auto, Threshold::Value),
        eta2: a.eta2.map_or(Threshold::Auto, Threshold::Value),
        mu: a.mu,
        trials: a.trials,
        seed,
        exact_divergence: a.exact_divergence,
        fixed_codebook: a.fixed_codebook,
        enumeration_cap: a.enumeration_cap,
        ..base
    };
    let report = run_trials(&cfg, d)?;
    let body = serde_json::to_string_pretty(&serde_json::json!({
        "manifest": m,
        "config": cfg,
        "report": report,
    }))
    .map_err(anyhow::Error::from)?;
    emit(out, &m, &(body + "\n"))?;
    Ok(())
}

fn verify(d: &Dmc, alphas: &[f64], rho1: f64, rho2: f64, x3: Option<usize>, out: Option<&Path>, m: RunManifest) -> Outcome {
    let symbols: Vec<usize> = match x3 {
        Some(x) => vec![x],
        None => (0..d.x3_size()).collect(),
    };
    let mut t = Table::new(&m, &["x3", "rho1", "rho2", "alpha", "mixture_kl_nats", "second_order_nats", "ratio"]);
    for &x in &symbols {
        let chi = chi_square(d, rho1, rho2, x)?;
        for &alpha in alphas {
            let kl = mixture_kl(d, rho1, rho2, x, alpha, LogUnit::Nats)?;
            let second = (alpha * (rho1 + rho2)).powi(2) / 2.0 * chi;
            t.row([x.to_string(), num(rho1), num(rho2), num(alpha), num(kl), num(second), num(kl / second)]);
        }
    }
    emit(out, &m, &t.finish())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sizing(d: &Dmc, unit: LogUnit, plan: &Path, n: u64, omega: Option<f64>, xi: &[f64], out: Option<&Path>, m: RunManifest) -> Outcome {
    let xi: [f64; 6] = match xi {
        [v] => [*v; 6],
        v if v.len() == 6 => [v[0], v[1], v[2], v[3], v[4], v[5]],
        _ => return Err(Failure { code: 2, msg: "--xi takes one or six values".into() }),
    };
    let plan = load_plan(plan)?;
    let omega = omega.unwrap_or((n.max(1) as f64).powf(-0.25));
    let s = theorem1_sizing(d, &plan, n, omega, xi, unit)?;
    let mut body = m.header();
    body.push_str(&toml::to_string(&s).map_err(anyhow::Error::from)?);
    emit(out, &m, &body)?;
    Ok(())
}
