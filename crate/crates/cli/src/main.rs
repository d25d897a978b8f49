//! `renpop`: simulate renewal population dynamics and check their identities.

mod config;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use renpop_core::stats::{empirical_intensity, time_average};
use renpop_core::verify::{run_suite, VerifyConfig, VerifyReport};
use renpop_core::{
    build_forest, burn_in, geometric_moments, geometric_pgf, intensities, markov_row, original_ancestors,
    population_mgf, population_process, regeneration_cycles, regeneration_epochs, renewal_sequence, Error, Estimate,
    MarkWindow, PopulationTrace, SeedSpec,
};

use config::{Common, Format, RunConfig};
use output::{fmt_num, to_json};

#[derive(Parser)]
#[command(name = "renpop", version, about = "Renewal population dynamics f(n) = n + a_n on the integers")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Dump the simulated mark window (json or csv)
    Marks,
    /// Population trace (csv) or trace and cycle summary (json)
    Pop,
    /// Family forest with successful/ephemeral labels (json or dot)
    Tree,
    /// Closed-form quantities
    Analytic {
        #[command(subcommand)]
        what: Analytic,
    },
    /// Transition row of the population chain under geometric(s) marks
    Markov {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        k: u64,
    },
    /// Run the verification suite; exit 1 if any check fails
    Verify,
}

#[derive(Subcommand)]
enum Analytic {
    /// lambda_o, lambda_s, lambda_e of --dist
    Intensities {
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// E[exp(t N)] under --dist
    Mgf {
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Generating function of N under geometric(s) marks
    Pgf {
        #[arg(long)]
        s: f64,
        #[arg(long, allow_negative_numbers = true)]
        z: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Mean and second factorial moment of N under geometric(s) marks
    Moments {
        #[arg(long)]
        s: f64,
    },
    /// Renewal sequence u_0..u_K of --dist
    Renewal {
        #[arg(long)]
        k: usize,
    },
}

/// Exit status plus message.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    pub fn config(msg: String) -> Self {
        Failure { code: 2, msg }
    }

    pub fn window(msg: String) -> Self {
        Failure { code: 3, msg }
    }

    fn runtime(msg: String) -> Self {
        Failure { code: 1, msg }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidDistribution(_)
            | Error::AssumptionViolated(_)
            | Error::InvalidParameter(_)
            | Error::WindowTooLarge { .. } => Failure::config(msg),
            Error::WindowTooShort { .. }
            | Error::InsufficientRegenerations { .. }
            | Error::EmptyCore
            | Error::InsufficientData(_) => Failure::window(msg),
            _ => Failure::runtime(msg),
        }
    }
}

fn emit(cfg: &RunConfig, bytes: &[u8]) -> Result<(), Failure> {
    let res = match &cfg.out {
        Some(p) => std::fs::write(p, bytes),
        None => std::io::stdout().lock().write_all(bytes),
    };
    match res {
        // reader went away (e.g. piped into head)
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.map_err(|e| Failure::runtime(format!("write failed: {e}"))),
    }
}

fn single_rep(cfg: &RunConfig, what: &str) -> Result<(), Failure> {
    if cfg.reps > 1 {
        return Err(Failure::config(format!("reps: {what} supports a single replication")));
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, rep: u64) -> Result<PopulationTrace, Failure> {
    let dist = cfg.dist()?;
    let len = cfg.window(&dist)?;
    let seed = SeedSpec::new(cfg.seed()?).replication(rep);
    let w = MarkWindow::simulate(&dist, seed, 0, len as i64 - 1)?;
    Ok(population_process(w, burn_in(&dist, cfg.eps)))
}

/// Runs `f` for every replication on the configured pool, in index order.
fn replicate<T: Send>(cfg: &RunConfig, f: impl Fn(u64) -> Result<T, Failure> + Sync) -> Result<Vec<T>, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::runtime(e.to_string()))?;
    pool.install(|| (0..cfg.reps).into_par_iter().map(&f).collect())
}

fn cmd_marks(cfg: &RunConfig) -> Result<(), Failure> {
    single_rep(cfg, "marks")?;
    let format = cfg.format(Format::Csv, &[Format::Csv, Format::Json])?;
    let dist = cfg.dist()?;
    let len = cfg.window(&dist)?;
    let w = MarkWindow::simulate(&dist, SeedSpec::new(cfg.seed()?), 0, len as i64 - 1)?;
    let bytes = match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Dump<'a> {
                dist: String,
                seed: u64,
                lo: i64,
                marks: &'a [u64],
            }
            to_json(&Dump { dist: dist.spec().to_string(), seed: cfg.seed()?, lo: w.lo(), marks: w.marks() })
                .into_bytes()
        }
        _ => {
            let mut s = String::from("n,a_n\n");
            for (i, a) in w.marks().iter().enumerate() {
                s.push_str(&format!("{},{a}\n", w.lo() + i as i64));
            }
            s.into_bytes()
        }
    };
    emit(cfg, &bytes)
}

#[derive(Serialize)]
struct CycleSummary {
    count: usize,
    mean_length: f64,
    max_length: u64,
    max_population: u32,
}

#[derive(Serialize)]
struct PopSummary {
    rep: u64,
    burn_in: u64,
    epsilon: f64,
    core: Option<(i64, i64)>,
    mean_population: Estimate,
    regeneration_epochs: usize,
    epoch_intensity: Estimate,
    cycles: CycleSummary,
}

fn pop_summary(cfg: &RunConfig, rep: u64) -> Result<PopSummary, Failure> {
    let t = simulate(cfg, rep)?;
    let epochs = regeneration_epochs(&t)?;
    let cycles = regeneration_cycles(&t, &epochs)?;
    let lengths = cycles.lengths();
    Ok(PopSummary {
        rep,
        burn_in: t.burn_in(),
        epsilon: t.epsilon(),
        core: t.core(),
        mean_population: time_average(&t, Some(&cycles), |x| f64::from(t.at(x).unwrap()))?,
        regeneration_epochs: epochs.len(),
        epoch_intensity: empirical_intensity(&epochs, Some(&cycles))?,
        cycles: CycleSummary {
            count: cycles.len(),
            mean_length: lengths.iter().sum::<u64>() as f64 / lengths.len() as f64,
            max_length: lengths.iter().copied().max().unwrap_or(0),
            max_population: cycles.cycles().iter().map(|c| c.max_population).max().unwrap_or(0),
        },
    })
}

fn cmd_pop(cfg: &RunConfig) -> Result<(), Failure> {
    match cfg.format(Format::Json, &[Format::Json, Format::Csv])? {
        Format::Csv => {
            single_rep(cfg, "csv output")?;
            let t = simulate(cfg, 0)?;
            let mut buf = Vec::new();
            t.write_csv(&mut buf)?;
            emit(cfg, &buf)
        }
        _ => {
            let reps = replicate(cfg, |r| pop_summary(cfg, r))?;
            let text = if reps.len() == 1 { to_json(&reps[0]) } else { to_json(&reps) };
            emit(cfg, text.as_bytes())
        }
    }
}

fn cmd_tree(cfg: &RunConfig) -> Result<(), Failure> {
    single_rep(cfg, "tree")?;
    let format = cfg.format(Format::Json, &[Format::Json, Format::Dot])?;
    let t = simulate(cfg, 0)?;
    let forest = build_forest(&t, &original_ancestors(&t)?);
    let mut buf = Vec::new();
    match format {
        Format::Dot => forest.write_dot(&mut buf).map_err(|e| Failure::config(format!("format: {e}")))?,
        _ => forest.write_json(&mut buf)?,
    }
    emit(cfg, &buf)
}

fn cmd_analytic(cfg: &RunConfig, what: &Analytic) -> Result<(), Failure> {
    let text = match what {
        Analytic::Intensities { tol } => to_json(&intensities(&cfg.dist()?, *tol)?),
        Analytic::Mgf { t, tol } => to_json(&population_mgf(&cfg.dist()?, *t, *tol)?),
        Analytic::Pgf { s, z, tol } => to_json(&geometric_pgf(*s, *z, *tol)?),
        Analytic::Moments { s } => to_json(&geometric_moments(*s)?),
        Analytic::Renewal { k } => {
            #[derive(Serialize)]
            struct Seq {
                u: Vec<f64>,
            }
            to_json(&Seq { u: renewal_sequence(&cfg.dist()?, *k) })
        }
    };
    emit(cfg, text.as_bytes())
}

fn cmd_markov(cfg: &RunConfig, s: f64, k: u64) -> Result<(), Failure> {
    let row = markov_row(s, k)?;
    let text = match cfg.format(Format::Json, &[Format::Json, Format::Csv])? {
        Format::Csv => {
            let mut out = String::from("n_next,probability\n");
            for (i, p) in row.iter().enumerate() {
                out.push_str(&format!("{},{}\n", i + 1, fmt_num(*p)));
            }
            out
        }
        _ => {
            #[derive(Serialize)]
            struct Row {
                s: f64,
                k: u64,
                row: Vec<f64>,
            }
            to_json(&Row { s, k, row })
        }
    };
    emit(cfg, text.as_bytes())
}

#[derive(Serialize)]
struct Replicated {
    replications: Vec<VerifyReport>,
    passed: bool,
}

fn cmd_verify(cfg: &RunConfig) -> Result<(), Failure> {
    cfg.format(Format::Json, &[Format::Json])?;
    let dist = cfg.dist()?;
    let window = cfg.window(&dist)?;
    let seed = cfg.seed()?;
    let reports = replicate(cfg, |rep| {
        let mut vc = VerifyConfig::new(&dist, window, cfg.eps, seed);
        vc.replication = rep;
        run_suite(&vc).map_err(Failure::from)
    })?;
    let passed = reports.iter().all(|r| r.passed);
    let failing: Vec<String> = reports
        .iter()
        .flat_map(|r| {
            r.failures().map(move |c| {
                let est = fmt_num(c.estimate);
                let target = c.target.map_or("-".into(), fmt_num);
                let note = c.note.as_deref().unwrap_or("");
                format!("rep {}: {} estimate {est} target {target} {note}", r.config.replication, c.name)
            })
        })
        .collect();
    let text = if reports.len() == 1 {
        to_json(&reports[0])
    } else {
        to_json(&Replicated { replications: reports, passed })
    };
    emit(cfg, text.as_bytes())?;
    if passed {
        Ok(())
    } else {
        Err(Failure::runtime(format!("verification failed:\n  {}", failing.join("\n  "))))
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(&cli.common)?;
    match &cli.cmd {
        Cmd::Marks => cmd_marks(&cfg),
        Cmd::Pop => cmd_pop(&cfg),
        Cmd::Tree => cmd_tree(&cfg),
        Cmd::Analytic { what } => cmd_analytic(&cfg, what),
        Cmd::Markov { s, k } => cmd_markov(&cfg, *s, *k),
        Cmd::Verify => cmd_verify(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("renpop: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
