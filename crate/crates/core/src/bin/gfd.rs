use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use gfd::cloud::generate_cloud;
use gfd::harness::{emit_figure_data, run_experiment, ExperimentConfig, ExperimentReport, Figure, GradientSettings};
use gfd::stencil::{synthesize_all, write_stencils, SynthesisOptions};
use gfd::{Manifold, ManifoldKind, OperatorSpec, Result};

#[derive(Parser)]
#[command(name = "gfd", about = "Monotone generalized finite differences on closed manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run { config: PathBuf },
    /// Regenerate the data behind one figure: fig1a, fig1b, fig2, fig3 or fig4.
    Repro { figure: String },
    /// Synthesize Laplacian stencils on a generated cloud and dump them.
    Synth {
        #[arg(long)]
        manifold: ManifoldKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output; a JSON audit file is written next to it.
        #[arg(long)]
        dump: PathBuf,
    },
    /// Narrow and wide derivative errors of the circle two-step solution.
    Gradecheck {
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        /// Prefactor of the wide radius.
        #[arg(long, default_value_t = 1.0)]
        radius_scale: f64,
        /// Largest k in n = 4^k.
        #[arg(long, default_value_t = 7)]
        kmax: u32,
    },
}

fn print_rates(report: &ExperimentReport) {
    println!("alpha = {:.4}, gamma = {:.4}", report.alpha, report.gamma);
    for (name, r) in &report.fitted_rates {
        println!("rate {name}: {:.4} ± {:.4} ({} points)", r.slope, r.stderr, r.points);
    }
    for note in &report.notes {
        println!("note: {note}");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg)?;
            print_rates(&report);
            println!("wrote {}", cfg.resolved_output_dir().join(&cfg.name).display());
        }
        Command::Repro { figure } => {
            let fig: Figure = figure.parse()?;
            let builtin = match fig {
                Figure::F1a | Figure::F1b => "torus1d-naive",
                Figure::F2 => "torus1d-w",
                Figure::F3 | Figure::F4 => "torus1d-twostep",
            };
            let cfg = ExperimentConfig::builtin(builtin)?;
            let report = run_experiment(&cfg)?;
            let path = emit_figure_data(&report, fig, &cfg.resolved_output_dir())?;
            print_rates(&report);
            println!("wrote {}", path.display());
        }
        Command::Synth { manifold, n, seed, dump } => {
            let c = generate_cloud(Manifold::new(manifold), n, seed)?;
            let spec = OperatorSpec::laplacian(Arc::new(|_| 0.0), 1.0)?;
            let stencils = synthesize_all(&c, &spec, &SynthesisOptions::default())?;
            write_stencils(&stencils, &dump, &dump.with_extension("json"))?;
            let worst = stencils.iter().map(|s| s.consistency_residual).fold(0.0, f64::max);
            let margin = stencils.iter().map(|s| s.monotonicity_margin).fold(f64::INFINITY, f64::min);
            let mean = stencils.iter().map(|s| s.neighbor_indices.len()).sum::<usize>() as f64 / n as f64;
            println!("{n} stencils, fill distance {:.5}", c.fill_distance);
            println!("max residual {worst:.3e}, min margin {margin:.3e}, mean neighbors {mean:.1}");
            println!("wrote {}", dump.display());
        }
        Command::Gradecheck { p, beta, radius_scale, kmax } => {
            let mut cfg = ExperimentConfig::builtin("torus1d-twostep")?;
            cfg.name = "gradecheck".into();
            cfg.gradient = Some(GradientSettings { p, beta, radius_scale });
            cfg.resolutions = (2..=kmax.max(4)).map(|k| 4usize.pow(k)).collect();
            let report = run_experiment(&cfg)?;
            println!("{:>8} {:>12} {:>14} {:>14}", "n", "h", "narrow", "wide");
            for r in &report.rows {
                let show = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
                let mark = if r.gradient_wide_aligned == Some(true) { " aligned" } else { "" };
                println!(
                    "{:>8} {:>12.4e} {:>14} {:>14}{mark}",
                    r.n,
                    r.h,
                    show(r.gradient_error_narrow),
                    show(r.gradient_error_wide)
                );
            }
            print_rates(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
