use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pprl::config::RunConfig;
use pprl::pipeline::{self, AttackInputs};
use pprl::Error;

/// Privacy-preserving record linkage with noisy Bloom filters and a federated classifier.
#[derive(Debug, Parser)]
#[command(name = "pprl", version)]
struct Cli {
    /// JSON run configuration; defaults apply to every omitted field.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed, overriding `seeds.master_seed` in the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate party datasets, ground truth and training pairs.
    Synth,
    /// Encode every party's records into noisy Bloom filters.
    Encode,
    /// Train local models and average them into the global model.
    Train,
    /// Block and classify record pairs between every pair of parties.
    Link,
    /// Score the match files against the ground truth.
    Evaluate,
    /// Run the frequency attack on an encoded database.
    Attack {
        /// Encoded database to attack (generated when omitted).
        #[arg(long, value_name = "PATH", requires_all = ["source", "public"])]
        encoded: Option<PathBuf>,
        /// Plaintext records behind the encoded database, for scoring.
        #[arg(long, value_name = "PATH", requires_all = ["encoded", "public"])]
        source: Option<PathBuf>,
        /// Public plaintext database used for frequency alignment.
        #[arg(long, value_name = "PATH", requires_all = ["encoded", "source"])]
        public: Option<PathBuf>,
    },
    /// Sweep flip probability, hash-function count and party count.
    Ablate,
}

fn run(cli: Cli) -> pprl::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seeds.master_seed = seed;
    }
    cfg.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;

    let summary = pool.install(|| match cli.command {
        Command::Synth => pipeline::cmd_synth(&cfg),
        Command::Encode => pipeline::cmd_encode(&cfg),
        Command::Train => pipeline::cmd_train(&cfg),
        Command::Link => pipeline::cmd_link(&cfg),
        Command::Evaluate => pipeline::cmd_evaluate(&cfg).map(|(summary, table)| {
            eprint!("{table}");
            summary
        }),
        Command::Attack { encoded, source, public } => {
            pipeline::cmd_attack(&cfg, &AttackInputs { encoded, source, public })
        }
        Command::Ablate => pipeline::cmd_ablate(&cfg),
    })?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
