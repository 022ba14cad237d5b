use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mdp_accel::bench::{self, BenchPlan};
use mdp_accel::model::{load_model, save_model};
use mdp_accel::verification::{run_property_suite_with, SuiteConfig, DEFAULT_SUITE_SEED};
use mdp_accel::{
    generate, solver, AcceleratorKind, Error, GeneratorSpec, Mode, OperatorKind,
    SolverConfig,
};

#[derive(Parser)]
#[command(name = "mdp-accel", version, about = "Accelerated value iteration for finite MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random model and write it as JSON.
    Generate(GenerateArgs),
    /// Solve a model file.
    Solve(SolveArgs),
    /// Run a benchmark plan and write CSV.
    Bench(BenchArgs),
    /// Run the property suite.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Uniform,
    Band,
    TotalReward,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long)]
    states: usize,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    bandwidth: Option<usize>,
    /// Ignored for the total-reward family.
    #[arg(long, default_value_t = 0.9)]
    discount: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Actions per state as LO:HI.
    #[arg(long, value_parser = parse_range)]
    actions: Option<(usize, usize)>,
    /// Output path; the model goes to stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

#[derive(Args)]
struct SolveArgs {
    model: PathBuf,
    /// standard, jacobi, gs, gsj or total.
    #[arg(long, default_value = "standard")]
    op: OperatorKind,
    /// none, projective or linear.
    #[arg(long, default_value = "none")]
    accel: AcceleratorKind,
    #[arg(long, default_value_t = solver::DEFAULT_EPSILON)]
    eps: f64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = solver::DEFAULT_MAX_ITERATIONS)]
    max_iter: usize,
    /// Skip the per-iteration feasibility re-check.
    #[arg(long)]
    no_checks: bool,
    /// Append a result row to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the final value and policy as JSON.
    #[arg(long)]
    value_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Uniform,
    Band,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON plan file; required unless --preset is given.
    plan: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "plan")]
    preset: Option<Preset>,
    #[arg(long, default_value_t = 500)]
    states: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    repetitions: Option<usize>,
    /// CSV output path (overrides the plan's); stdout when neither is set.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = DEFAULT_SUITE_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Run the properties on this model instead of random ones.
    #[arg(long)]
    model: Option<PathBuf>,
}

fn main() -> ExitCode {
    // clap would exit 2 on usage errors; 2 is reserved for hitting the iteration cap
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<ExitCode> {
    let mut spec = match a.family {
        FamilyArg::Uniform => {
            GeneratorSpec::uniform(a.states, a.density.unwrap_or(1.0), a.discount, a.seed)
        }
        FamilyArg::Band => {
            let Some(bw) = a.bandwidth else {
                bail!("--bandwidth is required for the band family");
            };
            let mut s = GeneratorSpec::band(a.states, bw, a.discount, a.seed);
            s.density = a.density;
            s
        }
        FamilyArg::TotalReward => {
            GeneratorSpec::total_reward(a.states, a.density.unwrap_or(1.0), a.seed)
        }
    };
    if let Some((lo, hi)) = a.actions {
        spec.action_range = (lo, hi);
    }
    let model = generate(&spec)?;
    let spec_json = serde_json::to_string_pretty(&spec)?;
    match a.output {
        Some(path) => {
            save_model(&model, &path)?;
            println!("{spec_json}");
        }
        None => {
            io::stdout().write_all(model.to_json().as_bytes())?;
            eprintln!("{spec_json}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(a: SolveArgs) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let cfg = SolverConfig::new(a.op, a.accel)
        .epsilon(a.eps)
        .beta(a.beta)
        .max_iterations(a.max_iter)
        .membership_checks(!a.no_checks);
    let rep = match solver::run(&model, &cfg) {
        Err(Error::InvalidCombination { operator, mode }) if mode == Mode::TotalReward.as_str() => {
            bail!(
                "{operator} backup is not valid for total_reward models: with discount 1 \
                 only the total-reward and gauss-seidel backups apply"
            )
        }
        other => other?,
    };

    println!("algorithm      {}", rep.algorithm);
    println!("iterations     {}", rep.iterations);
    println!("converged      {}", rep.converged);
    println!("wall_ms        {:.3}", rep.wall_ms());
    println!("residual       {:e}", rep.final_residual());
    println!("threshold      {:e}", rep.threshold);
    println!("fallbacks      {}", rep.fallback_count);
    if !rep.alphas.is_empty() {
        let min = rep.alphas.iter().copied().fold(f64::INFINITY, f64::min);
        let max = rep.alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = rep.alphas.iter().sum::<f64>() / rep.alphas.len() as f64;
        println!("alpha          min {min:.6} mean {mean:.6} max {max:.6}");
    }

    if let Some(path) = a.value_out {
        let doc = serde_json::json!({
            "value": rep.final_value,
            "policy": rep.final_policy,
        });
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = a.csv {
        let fresh = !path.exists() || fs::metadata(&path)?.len() == 0;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        let mut w = csv::Writer::from_writer(file);
        if fresh {
            w.write_record([
                "model", "algorithm", "iterations", "wall_ms", "residual", "fallbacks", "converged",
            ])?;
        }
        w.write_record([
            a.model.display().to_string(),
            rep.algorithm.clone(),
            rep.iterations.to_string(),
            format!("{:.3}", rep.wall_ms()),
            format!("{:e}", rep.final_residual()),
            rep.fallback_count.to_string(),
            rep.converged.to_string(),
        ])?;
        w.flush()?;
    }
    Ok(if rep.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode> {
    let mut plan = match (&a.plan, a.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            BenchPlan::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(Preset::Uniform)) => BenchPlan::uniform_grid(a.states, a.seed),
        (None, Some(Preset::Band)) => BenchPlan::band_grid(a.states, a.seed),
        (None, None) => bail!("give a plan file or --preset"),
    };
    if let Some(r) = a.repetitions {
        plan.repetitions = r;
    }
    let rows = bench::run_plan(&plan);
    match a.output.or(plan.output) {
        Some(path) => {
            let file = fs::File::create(&path)
                .with_context(|| format!("creating {}", path.display()))?;
            bench::write_csv(&rows, file)?;
        }
        None => bench::write_csv(&rows, io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode> {
    let model = match &a.model {
        Some(path) => match load_model(path) {
            Ok(m) => Some(m),
            Err(e) => {
                println!("FAIL model {}: {e}", path.display());
                return Ok(ExitCode::FAILURE);
            }
        },
        None => None,
    };
    let report = run_property_suite_with(&SuiteConfig {
        seed: a.seed,
        trials: a.trials,
        model,
    });
    print!("{}", report.to_text());
    if let Some(path) = a.csv {
        let file =
            fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(file)?;
    }
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
