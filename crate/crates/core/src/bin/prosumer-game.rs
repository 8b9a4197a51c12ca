use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use prosumer_game::cgt::kkt_verify;
use prosumer_game::config::ScenarioConfig;
use prosumer_game::stackelberg::{epsilon_se_grid, solve_followers, verify_se};
use prosumer_game::sweep::{gnuplot_script, run_sweep, GridRange, SweepKind, SweepSpec};
use prosumer_game::{Error, FollowerModel, FollowerSettings, FollowerSolver};

#[derive(Parser)]
#[command(name = "prosumer-game", version, about = "Equilibria of prosumer energy trading games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the followers' game at the configured base price.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Write the convergence trace as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep and write CSV.
    Sweep {
        #[arg(value_enum)]
        kind: KindArg,
        #[command(flatten)]
        common: Common,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sweep grid as start:stop:step.
        #[arg(long, allow_hyphen_values = true)]
        range: Option<String>,
        /// Comma-separated loss multipliers for the lambda sweep.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Also write a gnuplot script next to the CSV.
        #[arg(long, requires = "out")]
        gnuplot: bool,
    },
    /// Search the leader's price grid for an epsilon-Stackelberg equilibrium.
    Stackelberg {
        #[command(flatten)]
        common: Common,
        /// Write the leader grid as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator seed override.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "pt")]
    model: ModelArg,
    /// Follower solver; defaults to relaxation for cgt and sequential for pt.
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Leader grid step.
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Stopping tolerance: residual for relaxation, largest sweep move (kWh) for sequential play.
    #[arg(long)]
    tol: Option<f64>,
    /// Relaxation iteration limit, or sweep limit for sequential play.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Cgt,
    Pt,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Relaxation,
    Sequential,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Reference,
    Lambda,
    ProfitGap,
    Population,
    PriceResponse,
    Convergence,
}

impl From<KindArg> for SweepKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Reference => SweepKind::Reference,
            KindArg::Lambda => SweepKind::Lambda,
            KindArg::ProfitGap => SweepKind::ProfitGap,
            KindArg::Population => SweepKind::Population,
            KindArg::PriceResponse => SweepKind::PriceResponse,
            KindArg::Convergence => SweepKind::Convergence,
        }
    }
}

enum Failure {
    Usage(Error),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e)
    }
}

impl Common {
    fn scenario_config(&self) -> Result<ScenarioConfig, Error> {
        let cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        Ok(match self.seed {
            Some(seed) => cfg.with_seed(seed),
            None => cfg,
        })
    }

    fn apply(&self, mut f: FollowerSettings) -> FollowerSettings {
        if let Some(tol) = self.tol {
            f.relaxation.tol = tol;
            f.search.step_tol = tol;
        }
        if let Some(n) = self.max_iters {
            f.relaxation.max_iters = n;
            f.search.max_sweeps = n;
        }
        f
    }

    fn follower(&self) -> FollowerSettings {
        let mut f = match self.model {
            ModelArg::Cgt => FollowerSettings::cgt(),
            ModelArg::Pt => FollowerSettings::pt(),
        };
        if let Some(s) = self.solver {
            f.solver = match s {
                SolverArg::Relaxation => FollowerSolver::Relaxation,
                SolverArg::Sequential => FollowerSolver::Sequential,
            };
        }
        self.apply(f)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, Error> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            if j == 0 {
                return Err(Error::InvalidParameter {
                    field: "jobs".into(),
                    reason: "must be at least 1".into(),
                });
            }
            b = b.num_threads(j);
        }
        b.build().map_err(|e| Error::InvalidParameter {
            field: "jobs".into(),
            reason: e.to_string(),
        })
    }
}

fn fmt_profile(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn solve(common: &Common, out: Option<PathBuf>) -> Result<(), Failure> {
    let scenario = common.scenario_config()?.build()?;
    let follower = common.follower();
    let rep = common.pool()?.install(|| solve_followers(&scenario, &follower))?;
    println!("profile: {}", fmt_profile(rep.profile.as_slice()));
    println!("total load: {:.6} kWh", rep.profile.total());
    println!("iterations: {}", rep.iterations);
    println!("residual: {:.3e}", rep.residual);
    if let Some(eps) = rep.epsilon {
        println!("epsilon (grid certificate): {eps:.3e}");
    }
    if let Some(u) = rep.unclassified_visits {
        println!("visits without a concavity certificate: {u}");
    }
    if follower.model == FollowerModel::Cgt {
        let k = kkt_verify(&rep.profile, &scenario, 1e-6)?;
        println!(
            "kkt at tol 1e-6: {} (stationarity {:.2e}, complementarity {:.2e}, duality gap {:.2e}, feasibility {:.2e})",
            if k.passed() { "pass" } else { "fail" },
            k.stationarity_residual,
            k.complementarity_residual,
            k.duality_gap,
            k.feasibility_residual
        );
    }
    if let Some(path) = out {
        let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
        w.write_record(["iteration", "value"]).map_err(Error::from)?;
        for (t, v) in &rep.residual_trace {
            w.write_record([t.to_string(), v.to_string()]).map_err(Error::from)?;
        }
        w.flush().map_err(Error::from)?;
    }
    if !rep.converged {
        return Err(Failure::NotConverged(format!("solver stopped after {} iterations without converging", rep.iterations)));
    }
    Ok(())
}

fn sweep(
    kind: SweepKind,
    common: &Common,
    out: Option<PathBuf>,
    range: Option<String>,
    lambdas: Option<Vec<f64>>,
    gnuplot: bool,
) -> Result<(), Failure> {
    let mut spec = SweepSpec::new(kind, common.scenario_config()?);
    if let Some(r) = range {
        spec.range = r.parse::<GridRange>()?;
    }
    if let Some(l) = lambdas {
        spec.lambdas = l;
    }
    spec.epsilon = common.epsilon;
    spec.cgt = common.apply(spec.cgt);
    spec.pt = common.apply(spec.pt);
    if let Some(s) = common.solver {
        spec.pt.solver = match s {
            SolverArg::Relaxation => FollowerSolver::Relaxation,
            SolverArg::Sequential => FollowerSolver::Sequential,
        };
    }
    let table = common.pool()?.install(|| run_sweep(&spec))?;
    match &out {
        Some(path) => {
            table.save(path)?;
            if gnuplot {
                let script = gnuplot_script(kind, &path.display().to_string());
                std::fs::write(path.with_extension("gp"), script).map_err(Error::from)?;
            }
        }
        None => table.write_csv(std::io::stdout().lock())?,
    }
    for f in &table.flagged {
        eprintln!("warning: {f}");
    }
    if !table.all_converged() {
        return Err(Failure::NotConverged(format!("{} sweep point(s) did not converge", table.flagged.len())));
    }
    Ok(())
}

fn stackelberg(common: &Common, out: Option<PathBuf>) -> Result<(), Failure> {
    let scenario = common.scenario_config()?.build()?;
    let follower = common.follower();
    let res = common.pool()?.install(|| epsilon_se_grid(&scenario, common.epsilon, &follower))?;
    let check = verify_se(&res, &scenario, &follower, common.epsilon)?;
    println!("rho_star: {:.6} $/kWh", res.rho_star);
    println!("leader profit: {:.6} $", res.leader_profit);
    println!("follower profile: {}", fmt_profile(res.follower_profile.as_slice()));
    println!("total load: {:.6} kWh", res.follower_profile.total());
    println!("grid points: {}", res.grid.len());
    println!("follower iterations: {}", res.total_follower_iterations);
    println!(
        "verification: {} (follower gain {:.2e}, leader regret {:.2e}, epsilon {:.1e})",
        if check.passed() { "pass" } else { "fail" },
        check.follower_gain,
        check.leader_regret,
        check.epsilon
    );
    if let Some(path) = out {
        let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
        w.write_record(["rho_base_usd_per_kwh", "profit_usd", "follower_epsilon", "converged"])
            .map_err(Error::from)?;
        for g in &res.grid {
            w.write_record([g.rho_base.to_string(), g.profit.to_string(), g.follower_epsilon.to_string(), g.converged.to_string()])
                .map_err(Error::from)?;
        }
        w.flush().map_err(Error::from)?;
    }
    let flagged = res.flagged().count();
    if flagged > 0 {
        return Err(Failure::NotConverged(format!("{flagged} leader grid point(s) did not converge")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Solve { common, out } => solve(&common, out),
        Command::Sweep {
            kind,
            common,
            out,
            range,
            lambdas,
            gnuplot,
        } => sweep(kind.into(), &common, out, range, lambdas, gnuplot),
        Command::Stackelberg { common, out } => stackelberg(&common, out),
    };
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
