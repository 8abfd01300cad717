use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use loadrank::data::{MappingScheme, MissingPolicy};
use loadrank::forest::MaxFeatures;
use loadrank::pipeline::{
    load_ranking, load_report, render_report, run_eval, run_pipeline, run_rank, write_atomic, RunConfig,
};
use loadrank::synth::{dataset_to_csv, generate_synthetic, SynthSpec};
use loadrank::Result;

/// Rank tabular features by PCA loadings and factor-analysis priority, then
/// evaluate the rankings with random-forest accuracy curves.
#[derive(Parser)]
#[command(name = "loadrank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: ingest, prefilter, rank, evaluate, report.
    Run(ConfigArgs),
    /// Rankings only (no accuracy curves).
    Rank(ConfigArgs),
    /// Accuracy curve for a ranking file ([{rank, feature, score}]).
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Ranking JSON file.
        #[arg(long)]
        ranking: PathBuf,
        /// Label for the curve; defaults to the ranking file stem.
        #[arg(long)]
        method: Option<String>,
    },
    /// Write a seeded latent-factor fixture as CSV.
    Synth(SynthArgs),
    /// Pretty-print a report.json.
    Inspect {
        report: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file; flags below override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    delimiter: Option<char>,
    /// detailed | coarse
    #[arg(long)]
    mapping: Option<MappingScheme>,
    /// drop_row | fail
    #[arg(long)]
    missing: Option<MissingPolicy>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_bins: Option<usize>,
    #[arg(long)]
    variance_threshold: Option<f64>,
    #[arg(long)]
    loading_threshold: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    shuffles: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    n_trees: Option<usize>,
    /// sqrt | all | <k>
    #[arg(long)]
    max_features: Option<MaxFeatures>,
    #[arg(long)]
    min_samples_split: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = &self.$field { $target = v.clone(); })*
            };
        }
        apply!(
            input => cfg.input,
            target => cfg.target,
            delimiter => cfg.delimiter,
            mapping => cfg.mapping,
            missing => cfg.missing,
            alpha => cfg.alpha,
            n_bins => cfg.n_bins,
            variance_threshold => cfg.variance_threshold,
            loading_threshold => cfg.loading_threshold,
            test_fraction => cfg.test_fraction,
            repeats => cfg.repeats,
            shuffles => cfg.shuffles,
            delta => cfg.delta,
            top_k => cfg.top_k,
            seed => cfg.base_seed,
            output => cfg.output_dir,
            n_trees => cfg.forest.n_trees,
            max_features => cfg.forest.max_features,
            min_samples_split => cfg.forest.min_samples_split,
        );
        if let Some(d) = self.max_depth {
            cfg.forest.max_depth = Some(d);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 600)]
    n_samples: usize,
    #[arg(long, default_value_t = 8)]
    n_informative: usize,
    #[arg(long, default_value_t = 32)]
    n_noise: usize,
    #[arg(long, default_value_t = 2)]
    n_factors: usize,
    #[arg(long, default_value_t = 4)]
    n_classes: usize,
    #[arg(long, default_value_t = 0.9)]
    loading: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "rating")]
    target: String,
    #[arg(long, default_value = "detailed")]
    mapping: MappingScheme,
    /// Output CSV path.
    #[arg(long, short)]
    out: PathBuf,
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let report = run_pipeline(&cfg)?;
            info!("wrote {}", cfg.output_dir.join("report.json").display());
            print!("{}", render_report(&report));
        }
        Command::Rank(args) => {
            let cfg = args.resolve()?;
            let (_, rankings) = run_rank(&cfg)?;
            for r in rankings.all() {
                println!("{}", r.top_k_table(cfg.top_k));
            }
            if rankings.fa.model().is_none() {
                println!("# fa: NA (gate failed or no feature retained)");
            }
        }
        Command::Eval {
            config,
            ranking,
            method,
        } => {
            let cfg = config.resolve()?;
            let entries = load_ranking(&ranking)?;
            let method = method.unwrap_or_else(|| {
                ranking
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "custom".into())
            });
            let (curve, shortlist) = run_eval(&cfg, &entries, &method)?;
            println!("k,mean_accuracy");
            for (k, a) in curve.mean_accuracy.iter().enumerate() {
                println!("{},{a:.5}", k + 1);
            }
            println!(
                "steady point: k = {} (reference {:.5}, delta {})",
                shortlist.k_steady, shortlist.reference_accuracy, shortlist.delta
            );
        }
        Command::Synth(args) => {
            let spec = SynthSpec {
                n_samples: args.n_samples,
                n_informative: args.n_informative,
                n_noise: args.n_noise,
                n_factors: args.n_factors,
                n_classes: args.n_classes,
                loading: args.loading,
                seed: args.seed,
            };
            let (ds, _) = generate_synthetic(&spec)?;
            let csv = dataset_to_csv(&ds, &args.target, args.mapping)?;
            write_atomic(&args.out, csv.as_bytes())?;
            info!("wrote {} rows to {}", ds.n_samples(), args.out.display());
        }
        Command::Inspect { report } => {
            print!("{}", render_report(&load_report(&report)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LOADRANK_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

