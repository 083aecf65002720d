//! `contactred` — scene-driven checks for precontact structures, their
//! scaling covers, contact Hamiltonian dynamics, and moment-map reductions.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use contactred_cli::{
    generate_darboux_scene, load_scene, run_bracket, run_check, run_classify, run_evolve,
    run_mwm, run_moment, run_reduce, run_reeb, CliError, CliResult, EvolveOptions, Report,
};

#[derive(Parser)]
#[command(
    name = "contactred",
    version,
    about = "Verify precontact structures, covers, dynamics, and reductions declared in scene files"
)]
struct Cli {
    /// Path to the scene JSON document (all commands except `darboux`).
    #[arg(long, global = true)]
    scene: Option<PathBuf>,

    /// Write the report (or, for `darboux`, the generated scene) to this path
    /// in addition to printing it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Omit the timestamp so identical runs emit byte-identical reports.
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure the hyperplane field's rank and validate the scaling cover.
    Check,
    /// Emit the Reeb field and verify its defining equations at samples.
    Reeb,
    /// Integrate a contact Hamiltonian flow and emit the trajectory as CSV.
    Evolve {
        /// Name of the scene function to use as the Hamiltonian.
        #[arg(long)]
        hamiltonian: String,
        /// Start time.
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// End time.
        #[arg(long, default_value_t = 1.0)]
        t1: f64,
        /// Step size.
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Comma-separated initial state, one value per chart coordinate.
        #[arg(long)]
        x0: String,
        /// Trajectory CSV path (default: `<scene>-<hamiltonian>.csv`).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Cross-check the Jacobi bracket of two named functions.
    Bracket {
        /// First function name.
        #[arg(long)]
        f: String,
        /// Second function name.
        #[arg(long)]
        h: String,
        /// Number of sample points for the cross-check.
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Classify a named submanifold at sampled points.
    Classify {
        #[arg(long)]
        submanifold: String,
    },
    /// Compute and verify the moment map of a named action.
    Moment {
        #[arg(long)]
        action: String,
    },
    /// Verify declared quotient data over a named submanifold.
    Reduce {
        #[arg(long)]
        submanifold: String,
        #[arg(long)]
        quotient: String,
    },
    /// Run the full reduction pipeline at a momentum value.
    Mwm {
        #[arg(long)]
        action: String,
        /// Comma-separated momentum covector, one value per generator.
        #[arg(long)]
        mu: String,
        /// Optional quotient data to verify at zero level.
        #[arg(long)]
        quotient: Option<String>,
    },
    /// Generate a Darboux-model scene of dimension `m` and rank `r`.
    Darboux {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        r: usize,
    },
}

fn parse_floats(raw: &str, what: &str) -> CliResult<Vec<f64>> {
    raw.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Scene(format!("{what}: cannot parse '{part}' as a number")))
        })
        .collect()
}

fn write_file(path: &PathBuf, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: &Cli) -> CliResult<bool> {
    if let Command::Darboux { m, r } = &cli.command {
        let scene = generate_darboux_scene(*m, *r)?;
        let mut rendered =
            serde_json::to_string_pretty(&scene).expect("scene serialization cannot fail");
        rendered.push('\n');
        match &cli.out {
            Some(path) => write_file(path, &rendered)?,
            None => print!("{rendered}"),
        }
        return Ok(true);
    }

    let scene_path = cli
        .scene
        .as_ref()
        .ok_or_else(|| CliError::Scene("--scene is required for this command".to_string()))?;
    let scene = load_scene(scene_path)?;

    let mut trajectory_csv: Option<(PathBuf, String)> = None;
    let report: Report = match &cli.command {
        Command::Check => run_check(&scene)?,
        Command::Reeb => run_reeb(&scene)?,
        Command::Evolve {
            hamiltonian,
            t0,
            t1,
            dt,
            x0,
            csv,
        } => {
            let opts = EvolveOptions {
                hamiltonian: hamiltonian.clone(),
                t0: *t0,
                t1: *t1,
                dt: *dt,
                x0: parse_floats(x0, "--x0")?,
            };
            let (report, csv_text) = run_evolve(&scene, &opts)?;
            let path = csv
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("{}-{hamiltonian}.csv", scene.name)));
            trajectory_csv = Some((path, csv_text));
            report
        }
        Command::Bracket { f, h, points } => run_bracket(&scene, f, h, *points)?,
        Command::Classify { submanifold } => run_classify(&scene, submanifold)?,
        Command::Moment { action } => run_moment(&scene, action)?,
        Command::Reduce {
            submanifold,
            quotient,
        } => run_reduce(&scene, submanifold, quotient)?,
        Command::Mwm {
            action,
            mu,
            quotient,
        } => {
            let mu = parse_floats(mu, "--mu")?;
            run_mwm(&scene, action, &mu, quotient.as_deref())?
        }
        Command::Darboux { .. } => unreachable!("handled above"),
    };

    if let Some((path, csv_text)) = &trajectory_csv {
        write_file(path, csv_text)?;
    }
    let rendered = report.render(!cli.no_timestamp);
    print!("{rendered}");
    if let Some(path) = &cli.out {
        write_file(path, &rendered)?;
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("contactred: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
