//! `offpac`: simulate logged bandit data, estimate policy values, evaluate
//! and compare PAC-Bayes radii, optimize certified policies and run coverage
//! experiments.
//!
//! Exit codes: 0 on success, 1 for I/O or parse failures, 2 when a
//! mathematical precondition is violated (the message names it).

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use offpac::bandit::kl_divergence;
use offpac::bounds::{default_grid, geometric_grid, oracle_lambda_hoeffding};
use offpac::estimators::{policy_value, EstimateReport};
use offpac::experiments::{compare_bounds, run_coverage, CompareLambdas, CoverageConfig, PolicyMode};
use offpac::optimizer::{certify, optimize_policy};
use offpac::simulator::{LoggingScheme, MeansSpec, RandomTag, SimConfig};
use offpac::{BoundKind, BoundSpec, Certificate, ContextualPolicy, History, Policy, RewardFamily};

#[derive(Parser)]
#[command(name = "offpac", version, about = "Offline bandit estimates with PAC-Bayes certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a logged history (JSONL) and its ground-truth sidecar.
    Simulate(SimulateArgs),
    /// Per-action (and per-context) IS estimates of a history.
    Estimate(EstimateArgs),
    /// Evaluate one bound, or re-verify a certificate.
    Bound(BoundArgs),
    /// Find the Gibbs policy with the best certified lower bound.
    Optimize(OptimizeArgs),
    /// Monte Carlo coverage of a bound over simulated histories.
    Coverage(CoverageArgs),
    /// Every bound kind side by side at one parameter tuple.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct SimArgs {
    /// Simulation config (JSON); takes precedence over the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of actions.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Number of contexts (omit for multi-armed).
    #[arg(long)]
    c: Option<usize>,
    /// History length.
    #[arg(long, default_value_t = 100)]
    t: usize,
    /// Floor on logging probabilities, at most 1/K.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Comma-separated reward means (one per action), or `random`.
    #[arg(long, default_value = "random")]
    means: String,
    #[arg(long, value_enum, default_value_t = FamilyArg::Bernoulli)]
    family: FamilyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Bernoulli,
    Deterministic,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Output JSONL path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth sidecar path; defaults to `<out>.model.json` when `--out` is given.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// History JSONL file.
    #[arg(long)]
    history: PathBuf,
    /// Target policy (JSON array, or a C×K matrix for contextual histories).
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Explicit comma-separated lambda grid.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Size of a geometric grid centred at the KL = 0 Hoeffding oracle lambda.
    #[arg(long)]
    grid_size: Option<usize>,
    /// Decades spanned by the geometric grid.
    #[arg(long, default_value_t = 3.0)]
    grid_decades: f64,
}

impl GridArgs {
    fn resolve(&self, t: usize, eps: f64, beta: f64) -> Result<Option<Vec<f64>>, Failure> {
        if let Some(g) = &self.grid {
            return Ok(Some(g.clone()));
        }
        match self.grid_size {
            Some(n) => {
                let center = oracle_lambda_hoeffding(0.0, t, eps, beta)?;
                Ok(Some(geometric_grid(center, n, self.grid_decades)?))
            }
            None => Ok(None),
        }
    }
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, required_unless_present = "certificate")]
    kind: Option<BoundKind>,
    #[arg(long, default_value_t = 0.0)]
    kl: f64,
    #[arg(long, required_unless_present = "certificate")]
    t: Option<usize>,
    #[arg(long, required_unless_present = "certificate")]
    eps: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    /// Lambda for the parametric kinds.
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    /// Re-verify a certificate written by `optimize`.
    #[arg(long, conflicts_with = "kind")]
    certificate: Option<PathBuf>,
    /// History the certificate was computed from (recomputes its estimates).
    #[arg(long, requires = "certificate")]
    history: Option<PathBuf>,
    /// Print the full result instead of the bare radius.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OptimizeKind {
    /// Both optimized bounds; keep the larger certified lower bound.
    Auto,
    HoeffdingParametric,
    BernsteinParametric,
    HoeffdingGrid,
    HoeffdingOptimized,
    BernsteinOptimized,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    history: PathBuf,
    /// Prior policy (JSON array); uniform when absent.
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = OptimizeKind::Auto)]
    kind: OptimizeKind,
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    /// Certificate output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Fixed,
    Optimized,
}

#[derive(Args)]
struct CoverageArgs {
    /// Full coverage config (JSON with `sim`, `m`, `bound`, `policy_mode`);
    /// takes precedence over every other flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulation config used when `--config` is absent.
    #[arg(long)]
    sim_config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 500)]
    t: usize,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of replicates.
    #[arg(long, default_value_t = 2000)]
    m: usize,
    #[arg(long, default_value = "hoeffding-optimized")]
    kind: BoundKind,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Optimized)]
    policy_mode: ModeArg,
    /// Policy for `--policy-mode fixed` (JSON array).
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Prior policy (JSON array); uniform when absent.
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, default_value_t = 0.0)]
    kl: f64,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    /// Lambda for the parametric Hoeffding row (KL = 0 oracle when absent).
    #[arg(long)]
    lambda_hoeffding: Option<f64>,
    /// Lambda for the parametric Bernstein row.
    #[arg(long)]
    lambda_bernstein: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(path: &Path, e: io::Error) -> Self {
        Failure {
            code: 1,
            message: format!("{}: {e}", path.display()),
        }
    }

    fn precondition(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: format!("precondition violated: {}", message.into()),
        }
    }
}

impl From<offpac::Error> for Failure {
    fn from(e: offpac::Error) -> Self {
        if e.is_precondition() {
            Failure::precondition(e.to_string())
        } else {
            Failure {
                code: 1,
                message: e.to_string(),
            }
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        // data errors (e.g. a probability row that does not sum to one) are
        // reported by serde as well; both cases exit 1 with the location
        Failure {
            code: 1,
            message: format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()),
        }
    })
}

fn read_history(path: &Path) -> CliResult<History> {
    let file = fs::File::open(path).map_err(|e| Failure::io(path, e))?;
    History::read_jsonl(BufReader::new(file)).map_err(|e| match e {
        offpac::Error::Io(e) => Failure::io(path, e),
        e => Failure {
            code: 1,
            message: format!("{}: {e}", path.display()),
        },
    })
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure::io(p, e)),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(bytes)
                .and_then(|_| lock.flush())
                .map_err(|e| Failure::io(Path::new("<stdout>"), e))
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn sim_config(args: &SimArgs) -> CliResult<SimConfig> {
    if let Some(path) = &args.config {
        return read_json(path);
    }
    let reward_means = if args.means == "random" {
        MeansSpec::Random(RandomTag::Random)
    } else {
        let row = args
            .means
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure {
                code: 1,
                message: format!("--means: {e}"),
            })?;
        MeansSpec::Row(row)
    };
    Ok(SimConfig {
        num_actions: args.k,
        num_contexts: args.c,
        t: args.t,
        epsilon: args.eps,
        reward_means,
        reward_family: match args.family {
            FamilyArg::Bernoulli => RewardFamily::Bernoulli,
            FamilyArg::Deterministic => RewardFamily::Deterministic,
        },
        context_probs: None,
        logging_scheme: LoggingScheme::FixedUniform,
        seed: args.seed,
    })
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let cfg = sim_config(&args.sim)?;
    let env = cfg.build()?;
    let h = env.history(0);
    emit(args.out.as_deref(), h.to_jsonl_string().as_bytes())?;
    let model_out = args.model_out.or_else(|| {
        args.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".model.json");
            PathBuf::from(s)
        })
    });
    if let Some(p) = model_out {
        emit(Some(&p), to_json(&env.ground_truth()).as_bytes())?;
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> CliResult<()> {
    let h = read_history(&args.history)?;
    let report = if h.is_contextual() {
        let policy: Option<ContextualPolicy> = args.policy.as_deref().map(read_json).transpose()?;
        EstimateReport::contextual(&h, policy.as_ref())?
    } else {
        let policy: Option<Policy> = args.policy.as_deref().map(read_json).transpose()?;
        EstimateReport::multi_armed(&h, policy.as_ref())?
    };
    let text = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => estimate_csv(&report),
    };
    emit(args.out.as_deref(), text.as_bytes())
}

/// Columns `context,action,estimate`; pooled rows leave `context` empty,
/// unseen contexts leave `estimate` empty, and the policy value (if any) is
/// the last row with action `policy`.
fn estimate_csv(r: &EstimateReport) -> String {
    let mut out = String::from("context,action,estimate\n");
    for (a, v) in r.per_action.iter().enumerate() {
        out.push_str(&format!(",{a},{v}\n"));
    }
    if let Some(rows) = &r.per_context {
        for (x, row) in rows.iter().enumerate() {
            match row {
                Some(row) => {
                    for (a, v) in row.iter().enumerate() {
                        out.push_str(&format!("{x},{a},{v}\n"));
                    }
                }
                None => {
                    for a in 0..r.num_actions {
                        out.push_str(&format!("{x},{a},\n"));
                    }
                }
            }
        }
    }
    if let Some(v) = r.policy_value {
        out.push_str(&format!(",policy,{v}\n"));
    }
    out
}

fn bound_spec(
    kind: BoundKind,
    beta: f64,
    lambda: Option<f64>,
    grid: &GridArgs,
    t: usize,
    eps: f64,
) -> CliResult<BoundSpec> {
    let mut spec = BoundSpec::new(kind, beta);
    if let Some(l) = lambda {
        spec = spec.with_lambda(l);
    }
    if kind == BoundKind::HoeffdingGrid {
        let g = match grid.resolve(t, eps, beta)? {
            Some(g) => g,
            None => default_grid(t, eps, beta)?,
        };
        spec = spec.with_grid(g);
    }
    Ok(spec)
}

fn cmd_bound(args: BoundArgs) -> CliResult<()> {
    if let Some(path) = &args.certificate {
        return verify_certificate(path, args.history.as_deref());
    }
    let (kind, t, eps) = match (args.kind, args.t, args.eps) {
        (Some(k), Some(t), Some(e)) => (k, t, e),
        _ => unreachable!("clap enforces --kind, --t and --eps"),
    };
    if kind.is_oracle() {
        eprintln!("note: {kind} picks lambda from the data and is not a valid a-priori bound");
    }
    let spec = bound_spec(kind, args.beta, args.lambda, &args.grid, t, eps)?;
    let r = spec.evaluate(args.kl, t, eps)?;
    let text = match args.format {
        None => format!("{}\n", r.value),
        Some(Format::Json) => to_json(&r),
        Some(Format::Csv) => {
            let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            format!(
                "kind,value,kl,t,eps,beta,lambda\n{},{},{},{},{},{},{}\n",
                r.kind,
                r.value,
                r.kl,
                r.t,
                r.eps,
                r.beta,
                cell(r.lambda)
            )
        }
    };
    emit(None, text.as_bytes())
}

fn verify_certificate(path: &Path, history: Option<&Path>) -> CliResult<()> {
    let cert: Certificate = read_json(path)?;
    let recomputed = match history {
        Some(hp) => {
            let h = read_history(hp)?;
            certify(&cert.policy, &h, &cert.prior, &cert.bound)?
        }
        None => {
            // offline: trust the stored per-action estimates, recompute the rest
            let kl = kl_divergence(&cert.policy, &cert.prior)?;
            let is_estimate = policy_value(&cert.policy, &cert.action_estimates);
            let radius = cert.bound.evaluate(kl, cert.t, cert.epsilon)?;
            Certificate {
                is_estimate,
                kl_to_prior: kl,
                bound_kind: cert.bound.kind,
                bound_value: radius.value,
                lower_bound: is_estimate - radius.value,
                beta: cert.bound.beta,
                ..cert.clone()
            }
        }
    };
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let mut mismatches = Vec::new();
    for (name, stored, fresh) in [
        ("is_estimate", cert.is_estimate, recomputed.is_estimate),
        ("kl_to_prior", cert.kl_to_prior, recomputed.kl_to_prior),
        ("bound_value", cert.bound_value, recomputed.bound_value),
        ("lower_bound", cert.lower_bound, recomputed.lower_bound),
    ] {
        if !close(stored, fresh) {
            mismatches.push(format!("{name}: stored {stored}, recomputed {fresh}"));
        }
    }
    if cert.t != recomputed.t || cert.epsilon != recomputed.epsilon {
        mismatches.push("history size or floor differs from the certificate".into());
    }
    if cert.bound_kind != cert.bound.kind || cert.beta != cert.bound.beta {
        mismatches.push("bound fields disagree with the bound spec".into());
    }
    if !mismatches.is_empty() {
        return Err(Failure::precondition(format!(
            "certificate does not verify ({})",
            mismatches.join("; ")
        )));
    }
    eprintln!("certificate verified");
    emit(None, format!("{}\n", recomputed.lower_bound).as_bytes())
}

fn read_prior(path: Option<&Path>, k: usize) -> CliResult<Policy> {
    match path {
        Some(p) => read_json(p),
        None => Ok(Policy::uniform(k)?),
    }
}

fn cmd_optimize(args: OptimizeArgs) -> CliResult<()> {
    let h = read_history(&args.history)?;
    let prior = read_prior(args.prior.as_deref(), h.num_actions())?;
    let (t, eps) = (h.len(), h.epsilon());
    let kinds: Vec<BoundKind> = match args.kind {
        OptimizeKind::Auto => vec![BoundKind::HoeffdingOptimized, BoundKind::BernsteinOptimized],
        OptimizeKind::HoeffdingParametric => vec![BoundKind::HoeffdingParametric],
        OptimizeKind::BernsteinParametric => vec![BoundKind::BernsteinParametric],
        OptimizeKind::HoeffdingGrid => vec![BoundKind::HoeffdingGrid],
        OptimizeKind::HoeffdingOptimized => vec![BoundKind::HoeffdingOptimized],
        OptimizeKind::BernsteinOptimized => vec![BoundKind::BernsteinOptimized],
    };
    let mut best: Option<Certificate> = None;
    let mut last_err = None;
    for kind in kinds.iter().copied() {
        let spec = bound_spec(kind, args.beta, args.lambda, &args.grid, t, eps)?;
        match optimize_policy(&h, &prior, &spec) {
            Ok(opt) => {
                let c = opt.certificate;
                eprintln!(
                    "{kind}: eta = {}, estimate = {}, kl = {}, bound = {}, lower bound = {}",
                    opt.eta, c.is_estimate, c.kl_to_prior, c.bound_value, c.lower_bound
                );
                if best.as_ref().is_none_or(|b| c.lower_bound > b.lower_bound) {
                    best = Some(c);
                }
            }
            Err(e) if kinds.len() > 1 && e.is_precondition() => {
                eprintln!("{kind}: not applicable ({e})");
                last_err = Some(e);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let Some(cert) = best else {
        return Err(last_err.expect("at least one kind was tried").into());
    };
    if kinds.len() > 1 {
        eprintln!("selected {}", cert.bound_kind);
    }
    emit(args.out.as_deref(), to_json(&cert).as_bytes())
}

fn cmd_coverage(args: CoverageArgs) -> CliResult<()> {
    let config = match &args.config {
        Some(p) => read_json::<CoverageConfig>(p)?,
        None => {
            let sim = match &args.sim_config {
                Some(p) => read_json(p)?,
                None => SimConfig::uniform(args.k, args.t, args.eps, args.seed),
            };
            let bound = bound_spec(args.kind, args.beta, args.lambda, &args.grid, sim.t, sim.epsilon)?;
            let policy_mode = match args.policy_mode {
                ModeArg::Optimized => PolicyMode::Optimized,
                ModeArg::Fixed => {
                    let policy = match &args.policy {
                        Some(p) => read_json(p)?,
                        None => Policy::uniform(sim.num_actions)?,
                    };
                    PolicyMode::Fixed { policy }
                }
            };
            let prior = args.prior.as_deref().map(read_json).transpose()?;
            CoverageConfig {
                sim,
                m: args.m,
                bound,
                policy_mode,
                prior,
            }
        }
    };
    let report = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure {
                code: 1,
                message: format!("thread pool: {e}"),
            })?
            .install(|| run_coverage(&config))?,
        None => run_coverage(&config)?,
    };
    eprintln!(
        "{} ({}): {} / {} violations, rate {} (allowance {:.1}, {})",
        report.bound_kind,
        report.policy_mode,
        report.violations,
        report.m,
        report.violation_rate,
        report.allowance,
        if report.within_allowance() { "ok" } else { "EXCEEDED" }
    );
    let text = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => report.to_csv(),
    };
    emit(args.out.as_deref(), text.as_bytes())
}

fn cmd_compare(args: CompareArgs) -> CliResult<()> {
    let grid = args.grid.resolve(args.t, args.eps, args.beta)?;
    let table = compare_bounds(
        args.kl,
        args.t,
        args.eps,
        args.beta,
        grid,
        CompareLambdas {
            hoeffding: args.lambda_hoeffding,
            bernstein: args.lambda_bernstein,
        },
    )?;
    let text = match args.format {
        Format::Json => to_json(&table),
        Format::Csv => table.to_csv(),
    };
    emit(args.out.as_deref(), text.as_bytes())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Coverage(a) => cmd_coverage(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("offpac: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
