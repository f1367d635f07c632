use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fracinv::artifact::{write_atomic, KeyValues};
use fracinv::expcli::{
    convergence_study, illposed_demo, run_scenario, write_convergence, write_illposed, write_report, Scenario,
};
use fracinv::mlf::{ml_eval_with, MlOptions, MlQuery};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fracinv", version, about = "Backward time-fractional diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Base seed; replaces the scenario's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Replications per seed.
    #[arg(long)]
    reps: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
    /// Also write the manifest as JSON.
    #[arg(long)]
    json_manifest: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a scenario across grid sizes and fit convergence slopes.
    Convergence {
        scenario: PathBuf,
        /// Grid sizes per axis, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "25,50,100,200")]
        ns: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Unregularised backward solve of pure-noise data.
    Illposed {
        #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 0.3)]
        alpha: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the Mittag-Leffler function E_{alpha,beta}(z).
    MlEval {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, allow_negative_numbers = true)]
        z: f64,
        #[arg(long)]
        json: bool,
    },
}

fn load(path: &Path, common: &Common) -> Result<Scenario> {
    let mut s = Scenario::read(path).with_context(|| format!("reading scenario {}", path.display()))?;
    if let Some(seed) = common.seed {
        s.seeds = vec![seed];
    }
    if let Some(r) = common.reps {
        s.replications = r;
    }
    s.validate()?;
    Ok(s)
}

fn write_json_manifest(kv: &KeyValues, dir: &Path) -> Result<()> {
    let map: serde_json::Map<String, serde_json::Value> =
        kv.iter().map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string()))).collect();
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(map))?;
    write_atomic(&dir.join("manifest.json"), format!("{text}\n").as_bytes())?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|b| format!("{b:.6e}")).unwrap_or_else(|| "-".into())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, common } => {
            let s = load(&scenario, &common)?;
            let dir = common.out.join(&s.name);
            let report = run_scenario(&s)?;
            write_report(&report, &dir, common.svg)?;
            if common.json_manifest {
                write_json_manifest(&report.manifest, &dir)?;
            }
            println!("scenario {} ({} runs, {} failed)", s.name, report.runs.len(), report.failures());
            println!("{:>6} {:>14} {:>14} {:>14} {:>14}", "t", "err_rms", "ci", "err_L2", "bound");
            for r in &report.summary {
                println!(
                    "{:>6} {:>14.6e} {:>14.3e} {:>14.6e} {:>14}",
                    r.t,
                    r.err_rms.mean,
                    r.err_rms.ci_halfwidth,
                    r.err_l2.mean,
                    opt(r.bound)
                );
            }
            if report.bound.is_none() {
                println!("bound: {}", report.bound_note);
            }
            println!("wrote {}", dir.display());
        }
        Command::Convergence { scenario, ns, common } => {
            let s = load(&scenario, &common)?;
            let dir = common.out.join(format!("{}-convergence", s.name));
            let report = convergence_study(&s, &ns)?;
            write_convergence(&report, &dir, common.svg)?;
            if common.json_manifest {
                write_json_manifest(&report.manifest, &dir)?;
            }
            println!("{:>6} {:>24} {:>14} {:>14}", "n", "schedule", "err_xt", "bound");
            for r in &report.rows {
                println!("{:>6} {:>24} {:>14.6e} {:>14}", r.n, r.schedule, r.err_xt, opt(r.bound));
            }
            println!("error slope {:.4}", report.error_slope);
            if let Some(b) = report.bound_slope {
                println!("bound slope {b:.4}");
            }
            println!("wrote {}", dir.display());
        }
        Command::Illposed { ns, alpha, common } => {
            let report = illposed_demo(&ns, alpha, common.seed.unwrap_or(1), common.reps.unwrap_or(20))?;
            let dir = common.out.join("illposed");
            write_illposed(&report, &dir, common.svg)?;
            if common.json_manifest {
                write_json_manifest(&report.manifest, &dir)?;
            }
            println!("coupling K = {:.6e}", report.coupling);
            println!("{:>6} {:>14} {:>14} {:>14} {:>14}", "n", "E|phi|^2", "expected", "mean|u(0)|", "amplif.");
            for r in &report.rows {
                println!(
                    "{:>6} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}",
                    r.n, r.phi_sq.mean, r.phi_sq_expected, r.u0_norm.mean, r.amplification
                );
            }
            println!("wrote {}", dir.display());
        }
        Command::MlEval { alpha, beta, z, json } => {
            let q = MlQuery::new(alpha, beta, z)?;
            let v = ml_eval_with(&q, &MlOptions::default())?;
            if !v.value.is_finite() {
                bail!("non-finite value");
            }
            if json {
                let out = serde_json::json!({
                    "alpha": alpha,
                    "beta": beta,
                    "z": z,
                    "value": v.value,
                    "branch": v.branch.name(),
                });
                println!("{out}");
            } else {
                println!("{:.17e} {}", v.value, v.branch);
            }
        }
    }
    Ok(())
}
