use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cfbound_cli::{cmd_audit, cmd_graph_info, cmd_synth, format_summary, max_grid_from_env, AuditConfig};

#[derive(Parser)]
#[command(name = "cfbound", version, about = "Bounds on counterfactual fairness measures from observational data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print nodes, latents, minimum cardinalities and c-components of a graph.
    GraphInfo {
        #[arg(long = "graph", required = true)]
        graphs: Vec<PathBuf>,
        /// Variable schema; every variable is binary when omitted.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Report whether each graph satisfies these constraints.
        #[arg(long)]
        knowledge: Option<PathBuf>,
    },
    /// Sample bounds for fairness measures over one or more candidate graphs.
    Audit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        recode: PathBuf,
        #[arg(long = "graph", required = true)]
        graphs: Vec<PathBuf>,
        #[arg(long)]
        knowledge: Option<PathBuf>,
        #[arg(long = "query", required = true)]
        queries: Vec<String>,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long = "burnin", default_value_t = cfbound::sampler::DEFAULT_BURN_IN)]
        burn_in: usize,
        #[arg(long, default_value_t = cfbound::sampler::DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = cfbound::sampler::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cardinality of every declared latent (must meet the minimum).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for running chains.
        #[arg(long)]
        jobs: Option<usize>,
        /// Write every post-burn-in sample to chain_<graph>.csv.
        #[arg(long)]
        dump_chain: bool,
        #[arg(long, default_value = "A")]
        protected: String,
        #[arg(long, default_value = "Y")]
        outcome: String,
        /// Run chains one after another on the calling thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Coverage study on synthetic data.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        sequential: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GraphInfo { graphs, schema, knowledge } => {
            print!("{}", cmd_graph_info(&graphs, schema.as_deref(), knowledge.as_deref())?);
        }
        Command::Audit {
            data,
            recode,
            graphs,
            knowledge,
            queries,
            delta,
            burn_in,
            samples,
            alpha,
            seed,
            k,
            out,
            jobs,
            dump_chain,
            protected,
            outcome,
            sequential,
        } => {
            let cfg = AuditConfig {
                knowledge,
                delta,
                burn_in,
                samples,
                alpha,
                seed,
                k,
                jobs,
                dump_chain,
                protected,
                outcome,
                sequential,
                max_grid: max_grid_from_env()?,
                ..AuditConfig::new(data, recode, graphs, queries, out)
            };
            let outcome = cmd_audit(&cfg)?;
            print!("{}", format_summary(&outcome.reports));
            for d in &outcome.diagnostics {
                if d.converged == Some(false) {
                    eprintln!(
                        "warning: graph `{}` trace mean {:.4} is {:.4} away from the empirical value",
                        d.graph,
                        d.trace_mean.unwrap_or(f64::NAN),
                        d.trace_gap.unwrap_or(f64::NAN)
                    );
                }
            }
        }
        Command::Synth {
            spec,
            replications,
            out,
            jobs,
            sequential,
        } => {
            for s in cmd_synth(&spec, replications, &out, jobs, sequential)? {
                println!(
                    "{}: covered {}/{} mean width {:.4}",
                    s.query, s.covered, s.replications, s.mean_width
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
