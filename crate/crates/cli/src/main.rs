use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use vidchain_core::backbone::{Backbone, BackboneConfig, Role};
use vidchain_core::chain::{
    finetune_answerer, make_pseudo_label_sets, pretrain_localizer, refine_localizer, Checkpoint,
    FrameSampling,
};
use vidchain_core::datamodel::{
    generate_synthetic_corpus, load_corpus, load_moment_manifest, save_corpus, write_jsonl, Corpus,
    CorpusFiles,
};
use vidchain_core::harness::{
    eval_moment, eval_qa, infer_dataset, render_timeline, run_ablation, sha256_hex, AblationSpec,
    MomentEvalOptions, PipelineConfig, Strategy,
};
use vidchain_core::localizer::{build_loc_context, score_frames, select_topk, DEFAULT_LOC_TEMPLATE};
use vidchain_core::moment::{auto_span_threshold, DEFAULT_SPAN_THRESHOLD};

#[derive(Parser)]
#[command(name = "vidchain", version, about = "Localize-then-answer video QA over precomputed frame features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with latent relevant windows.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train the localizer on moment-retrieval spans.
    PretrainLoc {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine the localizer on pseudo-labels from a frozen answerer.
    RefineLoc {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        answerer: PathBuf,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune the answerer on sampled keyframes.
    FinetuneAns {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        localizer: Option<PathBuf>,
        #[arg(long, value_enum)]
        sampling: Sampling,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the forward chain and dump predictions.
    Infer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        localizer: PathBuf,
        #[arg(long)]
        answerer: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-choice accuracy under one frame strategy.
    EvalQa(EvalQaArgs),
    /// Moment retrieval metrics from binarized localizer scores.
    EvalMoment(EvalMomentArgs),
    /// Accuracy grid over frame budgets and strategies.
    Ablate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the localizer timeline of one video.
    Show {
        #[arg(long)]
        video: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        localizer: PathBuf,
        /// Keyframes to mark.
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
}

#[derive(Args)]
struct EvalQaArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[arg(long)]
    localizer: Option<PathBuf>,
    #[arg(long)]
    answerer: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalMomentArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    localizer: PathBuf,
    #[arg(long)]
    fps: f64,
    #[arg(long, required_unless_present = "span_threshold_from")]
    span_threshold: Option<usize>,
    /// Derive the span threshold from the mean gap between annotated spans
    /// in this moment manifest.
    #[arg(long, conflicts_with = "span_threshold")]
    span_threshold_from: Option<PathBuf>,
    #[arg(long)]
    single_span: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampling {
    Uniform,
    Random,
    Localizer,
}

impl From<Sampling> for FrameSampling {
    fn from(s: Sampling) -> Self {
        match s {
            Sampling::Uniform => FrameSampling::Uniform,
            Sampling::Random => FrameSampling::Random,
            Sampling::Localizer => FrameSampling::Localizer,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Uniform,
    Random,
    Localizer,
    Voting,
    Oracle,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Uniform => Strategy::Uniform,
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Localizer => Strategy::Localizer,
            StrategyArg::Voting => Strategy::Voting,
            StrategyArg::Oracle => Strategy::Oracle,
        }
    }
}

/// Ablation file: the grid plus the inputs it runs on. Relative paths are
/// resolved against the file's directory.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AblationFile {
    data: PathBuf,
    answerer: PathBuf,
    #[serde(default)]
    localizer: Option<PathBuf>,
    cells: Vec<(usize, usize)>,
    strategies: Vec<Strategy>,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn print_hash(hash: &str) {
    println!("repro_hash: {hash}");
}

fn hash_files(paths: &[&Path]) -> Result<String> {
    let mut bytes = Vec::new();
    for p in paths {
        bytes.extend(fs::read(p).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(sha256_hex(&bytes))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn load_data(dir: &Path) -> Result<Corpus> {
    load_corpus(dir).with_context(|| format!("loading corpus from {}", dir.display()))
}

fn load_ckpt(path: &Path, role: Role) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    ckpt.expect_role(role)?;
    Ok(ckpt)
}

/// Backbone shared by all checkpoints; their frozen-head configs must agree.
fn shared_backbone(configs: &[&BackboneConfig]) -> Result<Backbone> {
    let first = configs[0];
    if configs.iter().any(|c| *c != first) {
        bail!("checkpoints were trained on different backbone configurations");
    }
    Ok(Backbone::new(first.clone())?)
}

fn save_ckpt(ckpt: &Checkpoint, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    ckpt.save(out)?;
    if let Some(last) = ckpt.train_loss_history.last() {
        println!("epochs: {}  final loss: {last:.6}", ckpt.epoch);
    }
    print_hash(&hash_files(&[out, &Checkpoint::metadata_path(out)])?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, seed, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let corpus = generate_synthetic_corpus(&cfg.synthetic, seed)?;
            save_corpus(&out, &corpus)?;
            println!(
                "wrote {} QA and {} moment examples to {}",
                corpus.qa.len(),
                corpus.moment.len(),
                out.display()
            );
            let files = [
                CorpusFiles::QA,
                CorpusFiles::MOMENT,
                CorpusFiles::TRUTH,
                CorpusFiles::FEATURES,
            ]
            .map(|f| out.join(f));
            print_hash(&hash_files(&files.iter().map(PathBuf::as_path).collect::<Vec<_>>())?);
        }
        Command::PretrainLoc { data, config, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let corpus = load_data(&data)?;
            let backbone = Backbone::new(cfg.backbone.clone())?;
            let ckpt = pretrain_localizer(&backbone, &corpus.moment, &cfg.train, None)?;
            save_ckpt(&ckpt, &out)?;
        }
        Command::RefineLoc {
            data,
            answerer,
            init,
            config,
            out,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let corpus = load_data(&data)?;
            let ans = load_ckpt(&answerer, Role::Answerer)?;
            let init = init.map(|p| load_ckpt(&p, Role::Localizer)).transpose()?;
            let mut configs = vec![&cfg.backbone, &ans.backbone];
            configs.extend(init.as_ref().map(|c| &c.backbone));
            let backbone = shared_backbone(&configs)?;
            let labels = make_pseudo_label_sets(&backbone, &corpus.qa, &ans.params, &cfg.train)?;
            let ckpt = refine_localizer(
                &backbone,
                &corpus.qa,
                &ans.params,
                &cfg.train,
                init.as_ref().map(|c| &c.params),
            )?;
            let labels_path = with_suffix(&out, ".pseudo.jsonl");
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_jsonl(&labels_path, &labels)?;
            if let Some(f) = ckpt.degenerate_label_fraction {
                println!("degenerate pseudo-label fraction: {f:.4}");
            }
            save_ckpt(&ckpt, &out)?;
        }
        Command::FinetuneAns {
            data,
            localizer,
            sampling,
            config,
            out,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            cfg.train.frame_sampling = sampling.into();
            let corpus = load_data(&data)?;
            let loc = localizer.map(|p| load_ckpt(&p, Role::Localizer)).transpose()?;
            let mut configs = vec![&cfg.backbone];
            configs.extend(loc.as_ref().map(|c| &c.backbone));
            let backbone = shared_backbone(&configs)?;
            let ckpt = finetune_answerer(
                &backbone,
                &corpus.qa,
                loc.as_ref().map(|c| &c.params),
                &cfg.train,
                None,
            )?;
            save_ckpt(&ckpt, &out)?;
        }
        Command::Infer {
            data,
            localizer,
            answerer,
            n,
            k,
            out,
        } => {
            let corpus = load_data(&data)?;
            let loc = load_ckpt(&localizer, Role::Localizer)?;
            let ans = load_ckpt(&answerer, Role::Answerer)?;
            let backbone = shared_backbone(&[&loc.backbone, &ans.backbone])?;
            let (preds, scores) = infer_dataset(&backbone, &corpus.qa, &loc.params, &ans.params, n, k)?;
            let scores_path = with_suffix(&out, ".scores.jsonl");
            write_jsonl(&out, &preds)?;
            write_jsonl(&scores_path, &scores)?;
            println!("wrote {} predictions to {}", preds.len(), out.display());
            print_hash(&hash_files(&[&out, &scores_path])?);
        }
        Command::EvalQa(args) => {
            let corpus = load_data(&args.data)?;
            let ans = load_ckpt(&args.answerer, Role::Answerer)?;
            let strategy = Strategy::from(args.strategy);
            let loc = match (&args.localizer, strategy) {
                (Some(p), Strategy::Localizer) => Some(load_ckpt(p, Role::Localizer)?),
                (None, Strategy::Localizer) => bail!("--strategy localizer requires --localizer"),
                _ => None,
            };
            let mut configs = vec![&ans.backbone];
            configs.extend(loc.as_ref().map(|c| &c.backbone));
            let backbone = shared_backbone(&configs)?;
            let (report, _) = eval_qa(
                &backbone,
                &corpus.qa,
                strategy,
                loc.as_ref().map(|c| &c.params),
                &ans.params,
                args.n,
                args.k,
                args.seed,
            )?;
            report.write(&args.out)?;
            println!(
                "{} {}->{}: accuracy {:.4}",
                strategy.name(),
                args.n,
                args.k,
                report.metric("accuracy").unwrap_or(f64::NAN)
            );
            print_hash(&report.repro_hash());
        }
        Command::EvalMoment(args) => {
            let corpus = load_data(&args.data)?;
            let loc = load_ckpt(&args.localizer, Role::Localizer)?;
            let backbone = Backbone::new(loc.backbone.clone())?;
            let span_threshold = match (&args.span_threshold, &args.span_threshold_from) {
                (Some(t), _) => *t,
                (None, Some(manifest)) => {
                    let train = load_moment_manifest(manifest)?;
                    let examples: Vec<_> = train.into_iter().map(|s| s.example).collect();
                    auto_span_threshold(&examples, args.fps).unwrap_or_else(|| {
                        log::warn!(
                            "no query in {} has two spans; using span threshold {DEFAULT_SPAN_THRESHOLD}",
                            manifest.display()
                        );
                        DEFAULT_SPAN_THRESHOLD
                    })
                }
                (None, None) => unreachable!("clap requires one of the threshold flags"),
            };
            let options = MomentEvalOptions {
                fps: args.fps,
                span_threshold,
                single_span: args.single_span,
            };
            let (report, records) = eval_moment(&backbone, &corpus.moment, &loc.params, &options)?;
            report.write(&args.out)?;
            write_jsonl(&with_suffix(&args.out, ".predictions.jsonl"), &records)?;
            println!(
                "mAP {:.4}  R1@0.5 {:.4}  R1@0.7 {:.4}  (span threshold {span_threshold})",
                report.metric("mAP").unwrap_or(f64::NAN),
                report.metric("R1@0.5").unwrap_or(f64::NAN),
                report.metric("R1@0.7").unwrap_or(f64::NAN),
            );
            print_hash(&report.repro_hash());
        }
        Command::Ablate { spec, out } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let file: AblationFile =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
            let base = spec.parent().unwrap_or(Path::new("."));
            let corpus = load_data(&base.join(&file.data))?;
            let ans = load_ckpt(&base.join(&file.answerer), Role::Answerer)?;
            let loc = file
                .localizer
                .as_ref()
                .map(|p| load_ckpt(&base.join(p), Role::Localizer))
                .transpose()?;
            let mut configs = vec![&ans.backbone];
            configs.extend(loc.as_ref().map(|c| &c.backbone));
            let backbone = shared_backbone(&configs)?;
            let grid = AblationSpec {
                cells: file.cells,
                strategies: file.strategies,
                seeds: file.seeds.unwrap_or_else(|| vec![0]),
            };
            let table = run_ablation(
                &backbone,
                &grid,
                loc.as_ref().map(|c| &c.params),
                &ans.params,
                &corpus.qa,
            )?;
            fs::create_dir_all(&out)?;
            let rendered = table.render_grid();
            fs::write(
                out.join("ablation.json"),
                serde_json::to_string_pretty(&table.to_json())? + "\n",
            )?;
            fs::write(out.join("ablation.txt"), &rendered)?;
            print!("{rendered}");
            print_hash(&table.repro_hash());
        }
        Command::Show {
            video,
            data,
            localizer,
            k,
        } => {
            let corpus = load_data(&data)?;
            let loc = load_ckpt(&localizer, Role::Localizer)?;
            let backbone = Backbone::new(loc.backbone.clone())?;
            let (record, context) = if let Some(s) = corpus.qa.iter().find(|s| s.video.video_id == video) {
                (
                    s.video.clone(),
                    build_loc_context(&s.example.question, &s.example.options, DEFAULT_LOC_TEMPLATE)?,
                )
            } else if let Some(s) = corpus.moment.iter().find(|s| s.video.video_id == video) {
                (
                    s.video.clone(),
                    build_loc_context(&s.example.query, &[], DEFAULT_LOC_TEMPLATE)?,
                )
            } else {
                bail!("no example refers to video {video:?}");
            };
            let scores = score_frames(&backbone, &record, &context, &loc.params)?;
            let selection = select_topk(&scores.scores, k.min(scores.scores.len()))?;
            let truth = corpus
                .truth
                .iter()
                .find(|t| t.video_id == video)
                .map(|t| t.relevant_window);
            let text = render_timeline(&video, &scores.scores, &selection.indices, truth)?;
            println!("{}", context.rendered);
            print!("{text}");
            print_hash(&sha256_hex(text.as_bytes()));
        }
    }
    Ok(())
}
