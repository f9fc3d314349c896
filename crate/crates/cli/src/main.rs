use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edpinn::config::{Method, RunConfig};
use edpinn::pde::ProblemKind;
use edpinn::pipeline::Pipeline;
use edpinn::{Error, Result};

#[derive(Parser)]
#[command(name = "edpinn", version, about = "Experimental design for PDE inverse problems with physics-informed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-learn the shared initialization.
    MetaInit(Common),
    /// Train the forward ensemble.
    Forward(Common),
    /// Optimize designs for the configured methods.
    Design(Common),
    /// Evaluate the designs on inverse problems.
    Evaluate(Common),
    /// Run every stage.
    All(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; problem defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; artifacts go to <out>/<config hash>/.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to these methods (fist, mote, tip, mi, random, grid).
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// oscillator, wave or eikonal.
    #[arg(long)]
    problem: Option<String>,
    /// Ensemble size of the design stage.
    #[arg(long = "threads-n")]
    threads_n: Option<usize>,
    /// Inverse-problem instances per design.
    #[arg(long)]
    instances: Option<usize>,
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let text = match &c.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    let mut doc: toml::Table =
        toml::from_str(&text).map_err(|e| Error::Config { keys: vec![format!("parse error: {}", e.message())] })?;
    if let Some(p) = &c.problem {
        let kind: ProblemKind = p.parse()?;
        doc.insert("problem".into(), kind.name().into());
    }
    if let Some(s) = c.seed {
        let s = i64::try_from(s).map_err(|_| Error::InvalidParameter("seed must fit in 63 bits".into()))?;
        doc.insert("seed".into(), s.into());
    }
    if let Some(n) = c.threads_n {
        doc.insert("threads".into(), (n as i64).into());
    }
    if !c.method.is_empty() {
        let ms = c.method.iter().map(|m| m.parse::<Method>().map(|m| m.name().into())).collect::<Result<Vec<_>>>()?;
        doc.insert("methods".into(), toml::Value::Array(ms));
    }
    if let Some(n) = c.instances {
        let eval = doc.entry("evaluate").or_insert_with(|| toml::Value::Table(Default::default()));
        match eval {
            toml::Value::Table(t) => {
                t.insert("instances".into(), (n as i64).into());
            }
            _ => return Err(Error::Config { keys: vec!["evaluate".into()] }),
        }
    }
    RunConfig::from_toml(&toml::to_string(&doc).expect("table serializes"))
}

fn pipeline(c: &Common) -> Result<Pipeline> {
    Pipeline::new(resolve(c)?, &c.out)
}

fn report(dir: &Path, what: &str) {
    println!("{what}: {}", dir.display());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::MetaInit(c) => {
            let p = pipeline(&c)?;
            p.meta_init()?;
            report(&p.dir, "shared initialization written to");
        }
        Command::Forward(c) => {
            let p = pipeline(&c)?;
            p.forward()?;
            report(&p.dir, "forward ensemble written to");
        }
        Command::Design(c) => {
            let p = pipeline(&c)?;
            for r in p.design()?.iter().filter(|r| p.cfg.methods.contains(&r.method)) {
                let score = r.score.map(|s| format!("{s:.6}")).unwrap_or_else(|| "-".into());
                println!("{:<7} score {score:<12} gamma {:?}", r.method.name(), r.gamma);
            }
            report(&p.dir, "designs written to");
        }
        Command::Evaluate(c) => {
            let p = pipeline(&c)?;
            summary(&p.evaluate()?);
            report(&p.dir, "evaluation written to");
        }
        Command::All(c) => {
            let p = pipeline(&c)?;
            summary(&p.run_all()?);
            report(&p.dir, "artifacts written to");
        }
    }
    Ok(())
}

fn summary(reports: &[edpinn::harness::RunReport]) {
    println!("{:<7} {:>12} {:>12} {:>4}", "method", "median", "siqr", "n");
    for r in reports {
        println!("{:<7} {:>12.4e} {:>12.4e} {:>4}", r.method, r.median, r.siqr, r.n);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
