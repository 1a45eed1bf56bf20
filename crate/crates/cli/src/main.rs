use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scenery_core::cp::cp_scenery;
use scenery_core::dyadic::parse_word;
use scenery_core::experiment::{self, manifest, summary, RunConfig};
use scenery_core::metric::{distribution_distance, measure_distance};
use scenery_core::splice::{splice_measures, SpliceSchedule};
use scenery_core::verify::run_suite;
use scenery_core::{DyadicMeasure, EmpiricalDistribution, Error, Exec};
use serde_json::{json, Value};

const OK: u8 = 0;
const ASSERTION: u8 = 1;
const USAGE: u8 = 2;
const BUDGET: u8 = 3;

#[derive(Parser)]
#[command(name = "scenery", version, about = "Scenery-flow and CP-chain experiments on dyadic measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named experiment from a JSON config and write its tables and manifest.
    Run {
        config: PathBuf,
        /// Output directory; a subdirectory per experiment is created.
        #[arg(long, env = "SCENERY_OUT_DIR", default_value = "scenery-out")]
        out: PathBuf,
    },
    /// Run a verification suite: metric-oracle, splice-oracle, invariance or bounds.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Distance between two measure files or two distribution files.
    Dist {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        p: usize,
    },
    /// Splice component measures along a schedule.
    Splice {
        schedule: PathBuf,
        #[arg(required = true)]
        components: Vec<PathBuf>,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CP scenery distribution of a measure along a word.
    Scenery {
        measure: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 4)]
        p: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_budget() => BUDGET,
        Error::Solver(_) | Error::EmptyOutput(_) | Error::ConditionOnNull(_) => ASSERTION,
        _ => USAGE,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => Ok(fs::write(path, text)?),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(config_path: &Path, out: &Path) -> Result<u8, Error> {
    let config = RunConfig::from_json(&read(config_path)?)?;
    let report = experiment::run(&config)?;
    let dir = out.join(&report.experiment);
    fs::create_dir_all(&dir)?;
    for table in report.all_tables() {
        fs::write(dir.join(format!("{}.csv", table.name)), table.to_csv())?;
    }
    fs::write(dir.join("manifest.json"), manifest(&config, &report)?)?;
    print!("{}", summary(&report));
    println!("wrote {}", dir.display());
    Ok(if report.passed() { OK } else { ASSERTION })
}

fn verify(suite: &str, seed: u64, out: Option<&Path>) -> Result<u8, Error> {
    let report = run_suite(suite, seed, Exec::Parallel)?;
    let text = report.to_json()?;
    if let Some(path) = out {
        fs::write(path, &text)?;
    }
    print!("{text}");
    Ok(if report.passed() { OK } else { ASSERTION })
}

fn format_of(text: &str) -> Result<String, Error> {
    let v: Value = serde_json::from_str(text)?;
    v.get("format")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Config("input file has no `format` field".into()))
}

fn dist(a: &Path, b: &Path, p: usize) -> Result<u8, Error> {
    let (ta, tb) = (read(a)?, read(b)?);
    let kind = format_of(&ta)?;
    if kind != format_of(&tb)? {
        return Err(Error::Config("both inputs must have the same format".into()));
    }
    let d = if kind == scenery_core::measure::MEASURE_FORMAT {
        let mu: DyadicMeasure = serde_json::from_str(&ta)?;
        let nu: DyadicMeasure = serde_json::from_str(&tb)?;
        measure_distance(&mu, &nu, p)?
    } else {
        let q1 = EmpiricalDistribution::<DyadicMeasure>::from_json(&ta)?;
        let q2 = EmpiricalDistribution::<DyadicMeasure>::from_json(&tb)?;
        distribution_distance(&q1, &q2, p)?
    };
    println!("{}", json!({ "format": kind, "resolution_p": p, "distance": d }));
    Ok(OK)
}

fn splice(schedule: &Path, components: &[PathBuf], depth: usize, out: Option<&Path>) -> Result<u8, Error> {
    let schedule: SpliceSchedule = serde_json::from_str(&read(schedule)?)?;
    let schedule = schedule.validated()?;
    let comps = components
        .iter()
        .map(|c| Ok(serde_json::from_str::<DyadicMeasure>(&read(c)?)?))
        .collect::<Result<Vec<_>, Error>>()?;
    let spliced = splice_measures(&comps, &schedule, depth)?;
    emit(&serde_json::to_string(&spliced)?, out)?;
    Ok(OK)
}

fn scenery(measure: &Path, x: &str, n: usize, p: usize, out: Option<&Path>) -> Result<u8, Error> {
    let mu: DyadicMeasure = serde_json::from_str(&read(measure)?)?;
    let word = parse_word(mu.dim(), x)?;
    let q = cp_scenery(&mu, &word, n, p)?;
    emit(&q.to_json()?, out)?;
    Ok(OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Verify { suite, seed, report } => verify(suite, *seed, report.as_deref()),
        Command::Dist { a, b, p } => dist(a, b, *p),
        Command::Splice { schedule, components, depth, out } => splice(schedule, components, *depth, out.as_deref()),
        Command::Scenery { measure, x, n, p, out } => scenery(measure, x, *n, *p, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
