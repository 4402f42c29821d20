use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use uvlc_diffusion::channel::Normalization;
use uvlc_diffusion::diffusion::Strategy;
use uvlc_diffusion::experiments::{self, ExperimentResult, ExperimentSpec, BUILTIN_NAMES};

/// Diffusion LMS over fading underwater optical links.
#[derive(Parser, Debug)]
#[command(name = "uvlc", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON experiment description (unknown keys are rejected).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for the result bundle.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of Monte-Carlo runs.
    #[arg(long, global = true)]
    ensemble: Option<usize>,
    /// Use the literal log-mean -sigma^2/2 instead of unit-mean fading.
    #[arg(long, global = true)]
    paper_literal: bool,
    /// Worker threads for the Monte-Carlo runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo learning curves.
    Simulate {
        /// Restrict to one strategy (atc or cta).
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Steady-state MSD prediction for CTA.
    Theory,
    /// Run every point of the configured sweep and print the summary.
    Sweep,
    /// Print the built-in variance tables, or export/import them as CSV.
    Tables {
        #[arg(long)]
        export: Option<PathBuf>,
        /// Directory holding distance_table.csv and water_table.csv.
        #[arg(long)]
        import: Option<PathBuf>,
    },
    /// Regenerate one of the built-in experiments (fig5 ... fig10).
    Reproduce { name: String },
}

fn load_spec(g: &Global, fallback: &str) -> Result<ExperimentSpec> {
    let mut spec = match &g.config {
        Some(p) => ExperimentSpec::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentSpec::builtin(fallback)?,
    };
    apply_overrides(&mut spec, g);
    Ok(spec)
}

fn apply_overrides(spec: &mut ExperimentSpec, g: &Global) {
    if let Some(s) = g.seed {
        spec.run.seed = Some(s);
    }
    if let Some(e) = g.ensemble {
        spec.run.ensemble = e;
    }
    if let Some(t) = g.threads {
        spec.run.threads = Some(t);
    }
    if g.paper_literal {
        spec.normalization = Normalization::PaperLiteral;
    }
}

fn out_dir(g: &Global, spec: &ExperimentSpec) -> PathBuf {
    g.out.clone().unwrap_or_else(|| Path::new("results").join(&spec.name))
}

fn report(result: &ExperimentResult, out: &Path) {
    for p in &result.points {
        for s in &p.strategies {
            if let Some(st) = &s.steady_state {
                println!("{:<16} {:<4} steady-state MSD {:8.2} dB", p.label, s.strategy, st.network_db);
            }
        }
        if let Some(t) = &p.theory {
            println!(
                "{:<16} CTA  theory           {:8.2} dB (spectral radius {:.6})",
                p.label, t.network_db, t.spectral_radius
            );
        }
    }
    println!("results written to {}", out.display());
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Simulate { strategy, iterations } => {
            let mut spec = load_spec(g, "fig5")?;
            if let Some(s) = strategy {
                spec.strategies = vec![s];
                if s != Strategy::Cta {
                    spec.theory = false;
                }
            }
            if let Some(i) = iterations {
                spec.run.iterations = i;
                spec.run.window = spec.run.window.min(i);
            }
            spec.theory_only = false;
            let out = out_dir(g, &spec);
            let result = experiments::run_experiment(&spec, &out)?;
            report(&result, &out);
        }
        Command::Theory => {
            let mut spec = load_spec(g, "fig10")?;
            spec.strategies = vec![Strategy::Cta];
            spec.theory = true;
            spec.theory_only = true;
            let out = out_dir(g, &spec);
            let result = experiments::run_experiment(&spec, &out)?;
            report(&result, &out);
        }
        Command::Sweep => {
            let spec = load_spec(g, "fig8")?;
            if spec.sweep.is_none() {
                bail!("the experiment has no `sweep` section");
            }
            let out = out_dir(g, &spec);
            print!("{}", experiments::sweep(&spec, &out)?);
            println!("results written to {}", out.display());
        }
        Command::Tables { export, import } => {
            let table = match &import {
                Some(dir) => experiments::import_tables(dir)?,
                None => uvlc_diffusion::channel::VarianceTable::builtin(),
            };
            match export {
                Some(dir) => {
                    experiments::export_tables(&table, &dir)?;
                    println!("tables written to {}", dir.display());
                }
                None => print!("{}", table.render()),
            }
        }
        Command::Reproduce { name } => {
            if !BUILTIN_NAMES.contains(&name.as_str()) {
                bail!("unknown experiment `{name}`; expected one of {}", BUILTIN_NAMES.join(", "));
            }
            if g.config.is_some() {
                bail!("reproduce uses the built-in description; drop --config");
            }
            let mut spec = ExperimentSpec::builtin(&name)?;
            apply_overrides(&mut spec, g);
            let out = out_dir(g, &spec);
            let result = experiments::run_experiment(&spec, &out)?;
            fs::write(out.join("config.json"), serde_json_pretty(&spec)?)?;
            report(&result, &out);
        }
    }
    Ok(())
}

fn serde_json_pretty(spec: &ExperimentSpec) -> Result<String> {
    Ok(spec.to_json_pretty()? + "\n")
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
