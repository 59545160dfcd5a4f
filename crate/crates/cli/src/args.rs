use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nopcode_core::ig::{Discretizer, DEFAULT_SHARD_SIZE};
use nopcode_core::ngram::FeatureMode;

#[derive(Parser, Debug)]
#[command(
    name = "nopcode",
    version,
    about = "Dalvik n-opcode feature extraction, information-gain selection and classifier evaluation",
    args_override_self = true
)]
pub struct Cli {
    #[command(flatten)]
    pub settings: Settings,

    #[command(subcommand)]
    pub command: Command,
}

/// Pipeline settings shared by every subcommand. Any of them can also be
/// given in a `--config` file as `long-name = value`.
#[derive(Args, Debug, Clone)]
#[command(next_help_heading = "Shared options")]
pub struct Settings {
    /// Flat `key = value` config file; command-line flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for artifacts and the dataset cache
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// OPSEQ corpus produced by `extract`
    #[arg(long, global = true)]
    pub opseq: Option<PathBuf>,

    /// Label CSV: `app_id,label[,family]`
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,

    /// Gram sizes: `3`, `1..10` (inclusive) or `1,2,5`
    #[arg(long, global = true, default_value = "1..10", value_parser = parse_n_values)]
    pub n: NValues,

    #[arg(long, global = true, value_enum, default_value_t = ModeChoice::Both)]
    pub mode: ModeChoice,

    /// mc: benign vs malware (label column); mt: malware family (family column)
    #[arg(long, global = true, value_enum, default_value_t = Task::Mc)]
    pub task: Task,

    /// Keep grams whose information gain is strictly above this
    #[arg(long, global = true, default_value_t = 0.1)]
    pub ig_threshold: f64,

    /// Keep the best K grams instead of applying the threshold
    #[arg(long, global = true)]
    pub select_top: Option<usize>,

    /// Rows in the top-feature table
    #[arg(long, global = true, default_value_t = 10)]
    pub top_k: usize,

    /// Skip IG selection before evaluate, bench and export
    #[arg(long, global = true)]
    pub no_select: bool,

    /// How feature values are bucketed for IG: `presence` or `bins:<k>`
    #[arg(long, global = true, default_value = "presence")]
    pub discretizer: Discretizer,

    /// Comma-separated classifier specs, e.g. `nb,svm:lambda=0.001,rf:trees=50,seed=3`
    #[arg(long, global = true, default_value = "nb,svm,rf")]
    pub classifiers: String,

    #[arg(long, global = true, default_value_t = 10)]
    pub k_folds: usize,

    /// Seed for folds, synthetic corpora and classifiers without an explicit seed
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Select features on the whole dataset before cross-validation
    /// (leaks test folds into selection)
    #[arg(long, global = true)]
    pub paper_protocol: bool,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Maximum distinct grams held in memory before spilling to disk
    #[arg(long, global = true, default_value_t = 1_000_000)]
    pub mem_budget: usize,

    /// Features per in-memory IG ranking shard
    #[arg(long, global = true, default_value_t = DEFAULT_SHARD_SIZE)]
    pub shard_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NValues(pub Vec<usize>);

pub fn parse_n_values(s: &str) -> Result<NValues, String> {
    let num = |t: &str| -> Result<usize, String> {
        let v: usize = t.trim().parse().map_err(|_| format!("`{t}` is not a gram size"))?;
        if v == 0 {
            return Err("gram size must be at least 1".into());
        }
        Ok(v)
    };
    let mut out = Vec::new();
    for part in s.split(',') {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(format!("empty range `{part}`"));
            }
            out.extend(a..=b);
        } else {
            out.push(num(part)?);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(NValues(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    Binary,
    Frequency,
    Both,
}

impl ModeChoice {
    pub fn modes(self) -> Vec<FeatureMode> {
        match self {
            ModeChoice::Binary => vec![FeatureMode::Binary],
            ModeChoice::Frequency => vec![FeatureMode::Frequency],
            ModeChoice::Both => vec![FeatureMode::Binary, FeatureMode::Frequency],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Mc,
    Mt,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Mc => "mc",
            Task::Mt => "mt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Arff,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse smali trees into an OPSEQ corpus
    Extract {
        /// App directories; each directory name becomes the app id
        dirs: Vec<PathBuf>,
        /// Directory whose subdirectories are app directories
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output file (default: <out>/corpus.opseq)
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Unique gram counts per n
    Stats,
    /// Write the vocabulary TSV for each n
    Vocab,
    /// Build and cache labelled datasets for each n and mode
    Featurize,
    /// Rank grams by information gain and write rankings, subsets and counts
    Select,
    /// Export datasets as ARFF or dense CSV
    Export {
        #[arg(long, value_enum, default_value_t = ExportFormat::Arff)]
        format: ExportFormat,
    },
    /// Cross-validate each classifier for each n and mode
    Evaluate,
    /// Time training and prediction for each classifier and n
    Bench,
    /// Generate a synthetic motif corpus
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    /// Destination directory (receives apps/, labels.csv and corpus.opseq)
    pub dir: PathBuf,
    /// Class names for a classification corpus
    #[arg(long, default_value = "benign,malware", conflicts_with = "families")]
    pub classes: String,
    /// Generate a categorization corpus with this many malware families
    #[arg(long)]
    pub families: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub apps_per_class: usize,
    #[arg(long, default_value_t = 8)]
    pub methods_per_app: usize,
    #[arg(long, default_value_t = 10)]
    pub min_method_len: usize,
    #[arg(long, default_value_t = 60)]
    pub max_method_len: usize,
    #[arg(long, default_value_t = 3)]
    pub motif_len: usize,
    #[arg(long, default_value_t = 3)]
    pub motifs_per_class: usize,
    #[arg(long, default_value_t = 3)]
    pub motif_copies: usize,
    /// Probability that an app carries its class motifs
    #[arg(long, default_value_t = 1.0)]
    pub motif_rate: f64,
    /// Skip writing smali trees (OPSEQ and labels only)
    #[arg(long)]
    pub no_smali: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_values() {
        assert_eq!(parse_n_values("1..4").unwrap().0, vec![1, 2, 3, 4]);
        assert_eq!(parse_n_values("1..=3").unwrap().0, vec![1, 2, 3]);
        assert_eq!(parse_n_values("5,2,2").unwrap().0, vec![2, 5]);
        assert!(parse_n_values("0").is_err());
        assert!(parse_n_values("4..2").is_err());
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
