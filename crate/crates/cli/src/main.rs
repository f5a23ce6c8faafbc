use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use drswalk::config::{Preset, RunConfig};
use drswalk::optimizer::{self, GaitSolution};
use drswalk::sim::{self, ImpactRecord, SimSummary};
use drswalk::{verify, Error};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "drswalk", version, about = "Planar biped walking on a swaying surface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the footstep policy and write gait.json.
    Optimize(Common),
    /// Run the full-order closed loop and write trace.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Previously solved gait; solved from the configuration when omitted.
        #[arg(long)]
        gait: Option<PathBuf>,
    },
    /// Run the acceptance checks on both reference cases.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Replace the optimized footstep gain, e.g. `--inject-gain 0,0`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        inject_gain: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// caseA or caseB.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidConfig(_)
            | Error::UnknownPoint(_)
            | Error::Toml(_)
            | Error::Json(_)
            | Error::Io(_)
            | Error::NoStablePeriodicSolution { .. }
            | Error::InverseKinematics { .. } => EXIT_CONFIG,
            Error::Infeasible { .. } => EXIT_FAILURE,
            Error::Diverged { .. } | Error::SingularConfiguration { .. } | Error::DecouplingSingular { .. } => {
                EXIT_NUMERICAL
            }
        };
        Failure::new(code, e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

impl Common {
    fn load(&self) -> std::result::Result<RunConfig, Failure> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => RunConfig::load(path).map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?,
            (None, Some(p)) => RunConfig::preset(p)?,
            (None, None) => RunConfig::preset(Preset::CaseA)?,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        Ok(cfg)
    }
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(Error::from)?;
    Ok(())
}

fn optimize(common: &Common) -> Outcome {
    let cfg = common.load()?;
    let sol = match optimizer::optimize_gait(&cfg.gait, &cfg.optimizer, cfg.seed) {
        Ok(s) => s,
        Err(Error::Infeasible { violation }) => {
            println!("infeasible: least total constraint violation {violation:.6e}");
            return Err(Failure::new(EXIT_FAILURE, "no feasible gait"));
        }
        Err(e) => return Err(e.into()),
    };
    let slack = optimizer::constraint_violation(&sol.policy, &sol.config, &cfg.optimizer);
    println!("gain       K = [{:.9}, {:.9}]", sol.policy.gain[0], sol.policy.gain[1]);
    println!("step       u* = {:.9} m", sol.policy.u_star);
    println!("pre-impact x* = ({:.9} m, {:.9} kg m^2/s)", sol.policy.x_star.x_sc, sol.policy.x_star.l_s);
    for (i, m) in sol.eigenvalues.iter().enumerate() {
        println!("multiplier {i}: {:.9} {:+.9}i  |mu| = {:.9}", m.re, m.im, m.modulus());
    }
    println!("cost       {:.9}", sol.cost);
    println!("violation  {slack:.3e}");
    let dir = output_dir(&cfg);
    fs::create_dir_all(&dir).map_err(Error::from)?;
    write_json(&dir.join("gait.json"), &sol)?;
    println!("wrote {}", dir.join("gait.json").display());
    Ok(())
}

fn load_gait(path: &Path, cfg: &RunConfig) -> std::result::Result<GaitSolution, Failure> {
    let bad = |m: String| Failure::new(EXIT_CONFIG, format!("{}: {m}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let sol: GaitSolution = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    sol.verify().map_err(|e| bad(e.to_string()))?;
    if sol.config != cfg.gait {
        return Err(bad("gait was solved for different gait parameters".into()));
    }
    Ok(sol)
}

#[derive(Serialize)]
struct SimReport<'a> {
    preset: Preset,
    seed: u64,
    gait: &'a GaitSolution,
    summary: &'a SimSummary,
    impacts: &'a [ImpactRecord],
    warnings: &'a [String],
}

fn simulate(common: &Common, gait: Option<&Path>) -> Outcome {
    let cfg = common.load()?;
    let sol = match gait {
        Some(p) => load_gait(p, &cfg)?,
        None => optimizer::optimize_gait(&cfg.gait, &cfg.optimizer, cfg.seed)?,
    };
    let scenario = cfg.scenario(sol)?;
    let trace = sim::run_scenario(&scenario)?;
    let summary = trace.summary();

    let dir = output_dir(&cfg);
    fs::create_dir_all(&dir).map_err(Error::from)?;
    let csv = fs::File::create(dir.join("trace.csv")).map_err(Error::from)?;
    trace.write_csv(BufWriter::new(csv))?;
    let report = SimReport {
        preset: cfg.preset,
        seed: cfg.seed,
        gait: &scenario.gait,
        summary,
        impacts: &trace.impacts,
        warnings: &trace.warnings,
    };
    write_json(&dir.join("summary.json"), &report)?;

    println!("steps      {} of {}", summary.steps_completed, summary.duration_steps);
    println!("max |x_SC| {:.6} m, max |L_S| {:.6} kg m^2/s", summary.max_abs_x_sc, summary.max_abs_l_s);
    println!("pre-impact deviation from plan {:.6} m", summary.max_preimpact_deviation);
    if let Some(e) = summary.mean_footstep_error {
        println!("mean |u - u*| over steps 10-20: {e:.6} m");
    }
    println!("wrote {} and {}", dir.join("trace.csv").display(), dir.join("summary.json").display());
    if let Some(f) = &summary.failure {
        return Err(Failure::new(EXIT_NUMERICAL, format!("simulation stopped: {f}")));
    }
    if !summary.stable {
        return Err(Failure::new(EXIT_FAILURE, "verdict: unstable"));
    }
    println!("verdict: stable");
    Ok(())
}

fn run_verify(common: &Common, gain: Option<&[f64]>) -> Outcome {
    let mut a = RunConfig::preset(Preset::CaseA)?;
    let mut b = RunConfig::preset(Preset::CaseB)?;
    if common.config.is_some() || common.preset.is_some() {
        // A supplied configuration replaces the case it names; custom ones replace case A.
        let cfg = common.load()?;
        match cfg.preset {
            Preset::CaseB => b = cfg,
            _ => a = cfg,
        }
    }
    if let Some(seed) = common.seed {
        a.seed = seed;
        b.seed = seed;
    }
    let gain = match gain {
        Some(&[k1, k2]) => Some([k1, k2]),
        Some(_) => return Err(Failure::new(EXIT_CONFIG, "--inject-gain takes two values, e.g. 0,0")),
        None => None,
    };
    let results = verify::run_all(a, b, gain);
    for r in &results {
        println!("{r}");
    }
    if let Some(out) = &common.out {
        fs::create_dir_all(out).map_err(Error::from)?;
        write_json(&out.join("acceptance.json"), &results)?;
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        return Err(Failure::new(EXIT_FAILURE, format!("{failed} criteria failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Optimize(c) => optimize(c),
        Command::Simulate { common, gait } => simulate(common, gait.as_deref()),
        Command::Verify { common, inject_gain } => run_verify(common, inject_gain.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
