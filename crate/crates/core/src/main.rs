use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use t2ibias::alignment::{parse_alignment_records, PostprocessConfig};
use t2ibias::groundtruth::GroundTruthTable;
use t2ibias::manifestation::EtaConfig;
use t2ibias::metrics::WeightConfig;
use t2ibias::pipeline::{proportions_by_prompt, score, ScoreInputs, ScoreRun};
use t2ibias::report::human::{compare_human, compare_human_scores};
use t2ibias::report::plot::plot_series;
use t2ibias::report::BiasReport;
use t2ibias::taxonomy::{compile_prompt_set, pair_prompts, PromptSet, ProtectedSet, TaxonomyConfig};

#[derive(Parser)]
#[command(name = "t2ibias", version, about = "Bias scoring for text-to-image model outputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a taxonomy into prompt-set JSONL.
    Compile {
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score alignment records and emit a report.
    Score {
        #[command(flatten)]
        common: ScoringArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the manifestation factor with its adjustment log.
    Eta {
        #[command(flatten)]
        common: ScoringArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare machine alignment with human annotation of the same images.
    CompareHuman {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long)]
        human: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Proportions)]
        mode: Mode,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        prompts: Option<PathBuf>,
        /// Needed for `--mode scores`.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long)]
        postprocess: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-figure CSV series from one or more JSON reports.
    PlotData {
        #[arg(long = "report", required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print a default configuration file.
    Defaults {
        #[arg(value_enum)]
        what: DefaultsKind,
    },
}

#[derive(clap::Args)]
struct ScoringArgs {
    #[arg(long)]
    alignments: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    /// Taxonomy config; the built-in one when neither this nor --prompts is given.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Prompt-set JSONL. It carries no antonym links, so the manifestation factor is skipped.
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    postprocess: Option<PathBuf>,
    #[arg(long)]
    eta_config: Option<PathBuf>,
    #[arg(long, default_value = "model")]
    model: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Proportions,
    Scores,
}

#[derive(Clone, Copy, ValueEnum)]
enum DefaultsKind {
    Taxonomy,
    Postprocess,
    Weights,
    Eta,
}

/// Exit 1 for bad input, 2 for file-system trouble.
enum Failure {
    Validation(anyhow::Error),
    Io(anyhow::Error),
}

type Result<T> = std::result::Result<T, Failure>;

fn invalid<E: Into<anyhow::Error>>(context: String) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Validation(e.into().context(context))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Io)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Io),
        None => io::stdout()
            .write_all(bytes)
            .context("writing stdout")
            .map_err(Failure::Io),
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text.into_bytes()
}

fn load_json<T: serde::de::DeserializeOwned>(path: Option<&Path>) -> Result<Option<T>> {
    let Some(path) = path else { return Ok(None) };
    let text = read(path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(invalid(format!("parsing {}", path.display())))
}

struct PromptSource {
    set: PromptSet,
    protected: ProtectedSet,
    /// Absent for prompt-set JSONL input.
    pairs: Option<Vec<t2ibias::taxonomy::PromptPair>>,
}

fn load_prompts(taxonomy: Option<&Path>, prompts: Option<&Path>) -> Result<PromptSource> {
    let config: TaxonomyConfig = load_json(taxonomy)?.unwrap_or_default();
    let protected = config
        .validate()
        .map_err(invalid("validating taxonomy".to_string()))?;
    if let Some(path) = prompts {
        let file = fs::File::open(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::Io)?;
        let set = PromptSet::read_jsonl(BufReader::new(file), &config.templates)
            .map_err(invalid(format!("parsing {}", path.display())))?;
        return Ok(PromptSource {
            set,
            protected,
            pairs: None,
        });
    }
    let set = compile_prompt_set(&config).map_err(invalid("compiling taxonomy".to_string()))?;
    let pairs = pair_prompts(&set).map_err(invalid("pairing characteristics".to_string()))?;
    Ok(PromptSource {
        set,
        protected,
        pairs: Some(pairs),
    })
}

fn load_records(
    path: &Path,
    protected: &ProtectedSet,
    prompts: Option<&PromptSet>,
) -> Result<Vec<t2ibias::alignment::AlignmentRecord>> {
    let file = fs::File::open(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Io)?;
    parse_alignment_records(BufReader::new(file), protected, prompts)
        .map_err(invalid(format!("parsing {}", path.display())))
}

fn run_scoring(args: &ScoringArgs) -> Result<ScoreRun> {
    let source = load_prompts(args.taxonomy.as_deref(), args.prompts.as_deref())?;
    let table_text = read(&args.ground_truth)?;
    let table = GroundTruthTable::from_json(&table_text, &source.protected)
        .map_err(invalid(format!("loading {}", args.ground_truth.display())))?;
    let weights: WeightConfig = load_json(args.weights.as_deref())?.unwrap_or_default();
    let postprocess: PostprocessConfig = load_json(args.postprocess.as_deref())?.unwrap_or_default();
    let eta: EtaConfig = load_json(args.eta_config.as_deref())?.unwrap_or_default();
    let records = load_records(&args.alignments, &source.protected, Some(&source.set))?;
    let inputs = ScoreInputs {
        model_name: &args.model,
        prompts: &source.set,
        protected: &source.protected,
        ground_truth: &table,
        weights: &weights,
        postprocess: &postprocess,
        eta: &eta,
        pairs: source.pairs.as_deref(),
    };
    score(records, &inputs).map_err(invalid("scoring".to_string()))
}

#[derive(Serialize)]
struct EtaOutput<'a> {
    model: &'a str,
    summary: &'a Option<t2ibias::report::EtaReport>,
    states: &'a [t2ibias::manifestation::ManifestationState],
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compile { taxonomy, out } => {
            let source = load_prompts(taxonomy.as_deref(), None)?;
            emit(out.as_deref(), source.set.to_jsonl().as_bytes())
        }
        Command::Score { common, format, out } => {
            let run = run_scoring(&common)?;
            for skipped in &run.report.skipped_prompts {
                eprintln!("skipped {}: {}", skipped.prompt_id, skipped.reason);
            }
            let bytes = match format {
                Format::Json => run.report.to_json().into_bytes(),
                Format::Csv => run.report.to_csv(),
            };
            emit(out.as_deref(), &bytes)
        }
        Command::Eta { common, out } => {
            if common.prompts.is_some() {
                return Err(Failure::Validation(anyhow!(
                    "prompt-set JSONL carries no antonym links; pass --taxonomy instead"
                )));
            }
            let run = run_scoring(&common)?;
            if run.report.eta.is_none() {
                return Err(Failure::Validation(anyhow!("no antonym pair has valid images on both sides")));
            }
            let output = EtaOutput {
                model: &common.model,
                summary: &run.report.eta,
                states: &run.eta_states,
            };
            emit(out.as_deref(), &to_json(&output))
        }
        Command::CompareHuman {
            machine,
            human,
            mode,
            taxonomy,
            prompts,
            ground_truth,
            postprocess,
            out,
        } => {
            let source = load_prompts(taxonomy.as_deref(), prompts.as_deref())?;
            let cfg: PostprocessConfig = load_json(postprocess.as_deref())?.unwrap_or_default();
            let side = |path: &Path| -> Result<_> {
                let records = load_records(path, &source.protected, Some(&source.set))?;
                proportions_by_prompt(records, &cfg).map_err(invalid(format!("processing {}", path.display())))
            };
            let (m, h) = (side(&machine)?, side(&human)?);
            let comparison = match mode {
                Mode::Proportions => compare_human(&m, &h),
                Mode::Scores => {
                    let path = ground_truth
                        .ok_or_else(|| Failure::Validation(anyhow!("--mode scores needs --ground-truth")))?;
                    let table = GroundTruthTable::from_json(&read(&path)?, &source.protected)
                        .map_err(invalid(format!("loading {}", path.display())))?;
                    compare_human_scores(&m, &h, &source.set, &table)
                }
            }
            .map_err(invalid("comparing".to_string()))?;
            emit(out.as_deref(), &to_json(&comparison))
        }
        Command::PlotData { reports, out_dir } => {
            let mut loaded = Vec::new();
            for path in &reports {
                let text = read(path)?;
                loaded.push(BiasReport::from_json(&text).map_err(invalid(format!("parsing {}", path.display())))?);
            }
            let files = plot_series(&loaded).map_err(invalid("building series".to_string()))?;
            fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))
                .map_err(Failure::Io)?;
            for (name, bytes) in files {
                emit(Some(&out_dir.join(name)), &bytes)?;
            }
            Ok(())
        }
        Command::Defaults { what } => {
            let bytes = match what {
                DefaultsKind::Taxonomy => to_json(&TaxonomyConfig::default()),
                DefaultsKind::Postprocess => to_json(&PostprocessConfig::default()),
                DefaultsKind::Weights => to_json(&WeightConfig::default()),
                DefaultsKind::Eta => to_json(&EtaConfig::default()),
            };
            emit(None, &bytes)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
