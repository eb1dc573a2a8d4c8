//! Command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use chaoslab_core::alpha::{alpha_exact_discrete, marginal_bound_check, AlphaOptions, WeightSpec};
use chaoslab_core::kernel::{check_kernel_lipschitz, ProbeConfig};
use clap::{Parser, Subcommand};
use serde_json::json;

use crate::error::{HarnessError, Result};
use crate::fit::fit_csv;
use crate::formats::read_instance;
use crate::kernels::named;
use crate::plan::ExperimentPlan;
use crate::records::to_csv;
use crate::run::{run_plan, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "chaoslab", version, about = "Particle-system chaos experiments")]
pub struct Cli {
    /// Root seed; overrides the plan's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory; overrides the plan's.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Reuse completed cells found in the output directory.
    #[arg(long, global = true)]
    pub resume: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment plan and write CSV, SVG and manifest outputs.
    Run { plan: PathBuf },
    /// Log-log least-squares fit of two CSV columns.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value = "N")]
        x: String,
        #[arg(long, default_value = "value")]
        y: String,
    },
    /// Probe a kernel's declared Lipschitz constant (exit 3 on violation).
    CheckKernel {
        kernel: String,
        #[arg(long, default_value_t = 10_000)]
        probes: usize,
    },
    /// Exact oracles on small discrete models.
    #[command(subcommand)]
    Oracle(Oracle),
}

#[derive(Debug, Subcommand)]
pub enum Oracle {
    /// Exact independence functional of a discrete instance.
    Alpha {
        instance: PathBuf,
        #[arg(long, default_value_t = 0.75)]
        gamma: f64,
        /// Bound on the proxy norm of admissible one-particle densities.
        #[arg(long, default_value_t = 100.0)]
        k_proxy: f64,
        /// Comma-separated target one-particle law (default: the instance's 1-marginal).
        #[arg(long, value_delimiter = ',')]
        f: Option<Vec<f64>>,
    },
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn read(path: &PathBuf) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| HarnessError::io(path, e))
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { plan } => {
            let mut p = ExperimentPlan::load(plan)?;
            if let Some(seed) = cli.seed {
                p.seed = seed;
            }
            let mut opts = RunOptions {
                out_dir: cli.out_dir.clone(),
                resume: cli.resume,
                ..RunOptions::default()
            };
            if let Some(w) = cli.workers {
                opts.workers = w;
            }
            let out = run_plan(&p, &opts)?;
            if out.files.is_empty() {
                print!("{}", String::from_utf8_lossy(&to_csv(&out.records)));
            } else {
                for f in &out.files {
                    println!("wrote {}", f.display());
                }
                println!(
                    "{} records, {} cells computed, {} reused",
                    out.records.len(),
                    out.computed_cells,
                    out.reused_cells
                );
            }
            Ok(())
        }
        Command::Fit { csv, x, y } => {
            let f = fit_csv(&read(csv)?, x, y)?;
            println!("{}", serde_json::to_string_pretty(&f).expect("fit serializes"));
            Ok(())
        }
        Command::CheckKernel { kernel, probes } => {
            let k = named::<3>(kernel)?;
            let cfg = ProbeConfig {
                probes: *probes,
                seed: cli.seed.unwrap_or(0),
                ..ProbeConfig::default()
            };
            let r = check_kernel_lipschitz::<3, _>(&k, &cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "kernel": kernel,
                    "declared": r.declared,
                    "max_difference_ratio": r.max_difference_ratio,
                    "max_growth_ratio": r.max_growth_ratio,
                    "max_tail_asymmetry": r.max_tail_asymmetry,
                    "probes": r.probes,
                    "violation": r.violation(),
                }))
                .expect("report serializes")
            );
            if r.violation() {
                return Err(HarnessError::Numeric(format!(
                    "kernel {kernel} exceeds its declared Lipschitz constant {}",
                    r.declared
                )));
            }
            Ok(())
        }
        Command::Oracle(Oracle::Alpha {
            instance,
            gamma,
            k_proxy,
            f,
        }) => {
            let inst = read_instance(instance)?;
            let f = match f {
                Some(f) => f.clone(),
                None => inst.marginal(1)?,
            };
            if f.len() != inst.states {
                return Err(HarnessError::Format(format!(
                    "--f has {} entries, the instance has {} states",
                    f.len(),
                    inst.states
                )));
            }
            let o = AlphaOptions::new(WeightSpec::new(*gamma, inst.particles)?, *k_proxy, inst.states);
            let a = alpha_exact_discrete(&inst, &f, &o)?;
            let bounds = (1..=inst.particles)
                .map(|s| {
                    let r = marginal_bound_check(&inst, &f, s, a.value)?;
                    Ok(json!({"s": s, "lhs": r.lhs, "rhs": r.rhs, "pass": r.pass}))
                })
                .collect::<Result<Vec<_>>>()?;
            let components: Vec<_> = a
                .components
                .iter()
                .map(|c| json!({"lambda": c.lambda, "k": c.k, "g": c.g}))
                .collect();
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "alpha": if a.value.is_finite() { json!(a.value) } else { json!("inf") },
                    "candidates": a.candidates,
                    "components": components,
                    "marginal_bounds": bounds,
                }))
                .expect("report serializes")
            );
            Ok(())
        }
    }
}
