use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::Config;
use super::eval::{
    ablation_report, agreement_report, judge_report, judge_template_kind, read_csv, read_xy, regression_report,
    reward_report, similarity_report, write_csv, write_json, PairRow, RatingRow,
};
use super::pipeline::{run_pipeline, source_id, Stage, MANIFEST_FILE};
use super::{exit_code, parallel_map, EXIT_CONFIG, EXIT_OK};
use crate::error::{Error, Result};
use crate::evalkit::{EmbeddingProvider, HashingEmbedder, HttpEmbedder, Rubric};
use crate::ingest::{CompareAgainst, Comparator};
use crate::llm::mock::{MockFixture, MockServer};
use crate::llm::{Client, TemplateKind};
use crate::synth::{trajectory, write_corpus_entry, TrajectorySpec};

#[derive(Debug, Parser)]
#[command(name = "fcmir", version, about = "Keyframes, scroll stitching and intent summaries for UI screen recordings")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Parallel sources (pipeline) or rows (eval).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select keyframes.
    Sample(RunArgs),
    /// Select keyframes and stitch scrolling runs.
    Stitch(RunArgs),
    /// Sample, stitch and summarize intent.
    Summarize(RunArgs),
    /// Full chain including suggestions.
    Suggest(RunArgs),
    /// Run an explicit list of stages.
    Pipeline {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated subset of sample,stitch,summarize,suggest.
        #[arg(long, value_delimiter = ',', default_value = "sample,stitch,summarize,suggest")]
        stages: Vec<Stage>,
    },
    /// Metric reports.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Write a synthetic trajectory corpus with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Clean scroll recordings (no duplicates or blur) for stitching.
        #[arg(long)]
        scroll: bool,
    },
    /// Serve canned model replies over HTTP until killed.
    MockServe {
        #[arg(long, default_value = "127.0.0.1:8089")]
        addr: String,
        /// JSON fixture file; the built-in replies otherwise.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Frame directories or video files.
    #[arg(required = true)]
    pub sources: Vec<PathBuf>,
    /// Each source writes to `<out>/<source name>/`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampling: SamplingFlags,
    #[command(flatten)]
    pub stitch: StitchFlags,
}

#[derive(Debug, Args, Default)]
pub struct SamplingFlags {
    #[arg(long)]
    pub interval_s: Option<f64>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub blur_threshold: Option<f64>,
    #[arg(long)]
    pub phash_threshold: Option<u32>,
    #[arg(long)]
    pub ssim_threshold: Option<f64>,
    #[arg(long)]
    pub l1_threshold: Option<f64>,
    #[arg(long)]
    pub comparator: Option<Comparator>,
    #[arg(long, value_parser = parse_compare_against)]
    pub compare_against: Option<CompareAgainst>,
}

#[derive(Debug, Args, Default)]
pub struct StitchFlags {
    #[arg(long)]
    pub ratio_threshold: Option<f64>,
    #[arg(long)]
    pub min_matches: Option<usize>,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub fast_threshold: Option<f64>,
    #[arg(long)]
    pub max_x_drift: Option<f64>,
}

fn parse_compare_against(s: &str) -> std::result::Result<CompareAgainst, String> {
    match s {
        "last_sampled" => Ok(CompareAgainst::LastSampled),
        "last_retained" => Ok(CompareAgainst::LastRetained),
        other => Err(format!("expected last_sampled or last_retained, got {other:?}")),
    }
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// ROUGE-1/2/L F1 and embedding cosine for `id,prediction,reference` rows.
    Rouge(PairArgs),
    /// Similarity-plus-format reward for `id,prediction,reference` rows.
    Reward(PairArgs),
    /// Model-as-judge score cards for `id,prediction,reference` rows.
    Judge {
        #[command(flatten)]
        pairs: PairArgs,
        #[arg(long)]
        rubric: Rubric,
    },
    /// Accuracy and kappa per metric for `metric,a,b` rating rows.
    Agreement {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Least-squares fit of column `y` on column `x`.
    Regress {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "x")]
        x: String,
        #[arg(long, default_value = "y")]
        y: String,
    },
    /// Compression (and, with an endpoint, summary quality) per comparator.
    Ablation {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "l1,phash_l1,phash_ssim")]
        comparators: Vec<Comparator>,
    },
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

impl SamplingFlags {
    fn apply(&self, cfg: &mut Config) {
        let s = &mut cfg.sampling;
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { s.$f = v; })* };
        }
        set!(interval_s, fps, blur_threshold, phash_threshold, ssim_threshold, l1_threshold, comparator, compare_against);
    }
}

impl StitchFlags {
    fn apply(&self, cfg: &mut Config) {
        let s = &mut cfg.stitch;
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { s.$f = v; })* };
        }
        set!(ratio_threshold, min_matches, max_features, fast_threshold, max_x_drift);
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let jobs = cli.jobs.max(1);
    let load = |cli_cfg: &Option<PathBuf>| Config::load(cli_cfg.as_deref());
    match cli.command {
        Command::Sample(run) => pipeline(&load(&cli.config)?, run, &[Stage::Sample], jobs),
        Command::Stitch(run) => pipeline(&load(&cli.config)?, run, &[Stage::Sample, Stage::Stitch], jobs),
        Command::Summarize(run) => pipeline(
            &load(&cli.config)?,
            run,
            &[Stage::Sample, Stage::Stitch, Stage::Summarize],
            jobs,
        ),
        Command::Suggest(run) => pipeline(&load(&cli.config)?, run, &Stage::ALL, jobs),
        Command::Pipeline { run, stages } => pipeline(&load(&cli.config)?, run, &stages, jobs),
        Command::Eval(cmd) => eval(&load(&cli.config)?, cmd, jobs),
        Command::Synth {
            out,
            count,
            seed,
            scroll,
        } => synth(&out, count, seed, scroll),
        Command::MockServe { addr, fixture } => {
            let fixture = match fixture {
                Some(p) => MockFixture::load(&p)?,
                None => MockFixture::standard(),
            };
            let server = MockServer::bind(&addr, fixture)?;
            println!("{}", server.base_url());
            server.wait();
            Ok(())
        }
    }
}

fn pipeline(base: &Config, run: RunArgs, stages: &[Stage], jobs: usize) -> Result<()> {
    let mut cfg = base.clone();
    run.sampling.apply(&mut cfg);
    run.stitch.apply(&mut cfg);
    cfg.validate()?;
    let chain = super::stage_chain(stages)?;
    let client = if chain.iter().any(|s| s.needs_endpoint()) {
        Some(Client::new(cfg.endpoint()?.clone())?)
    } else {
        None
    };
    let results = parallel_map(&run.sources, jobs, |src| {
        let out = run.out.join(source_id(src));
        run_pipeline(src, &cfg, &chain, &out, client.as_ref()).map(|_| out)
    });
    let mut first_err = None;
    for (src, r) in run.sources.iter().zip(results) {
        match r {
            Ok(out) => println!("{}", out.join(MANIFEST_FILE).display()),
            Err(e) => {
                eprintln!("{}: {e}", src.display());
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn embedder(cfg: &Config) -> Result<Box<dyn EmbeddingProvider>> {
    match cfg.endpoint.as_ref().and_then(|ep| ep.embedding_model.clone().map(|m| (ep, m))) {
        Some((ep, model)) => Ok(Box::new(HttpEmbedder {
            client: Client::new(ep.clone())?,
            model,
            dim: 0,
        })),
        None => Ok(Box::new(HashingEmbedder::default())),
    }
}

fn reports_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn eval(cfg: &Config, cmd: EvalCommand, jobs: usize) -> Result<()> {
    match cmd {
        EvalCommand::Rouge(a) => {
            let rows: Vec<PairRow> = read_csv(&a.input)?;
            let rep = similarity_report(&rows, embedder(cfg)?.as_ref(), jobs)?;
            reports_dir(&a.out)?;
            write_json(&a.out.join("rouge.json"), &rep)?;
            write_csv(&a.out.join("rouge.csv"), &rep.rows)?;
            println!(
                "ROUGE-1 {:.4}  ROUGE-2 {:.4}  ROUGE-L {:.4}  SBERT {:.4}  (n={}, embedder {})",
                rep.mean.rouge1, rep.mean.rouge2, rep.mean.rouge_l, rep.mean.sbert, rep.n, rep.embedder
            );
        }
        EvalCommand::Reward(a) => {
            let rows: Vec<PairRow> = read_csv(&a.input)?;
            let rep = reward_report(&rows, embedder(cfg)?.as_ref(), &cfg.reward, &cfg.format_scorer()?, jobs)?;
            reports_dir(&a.out)?;
            write_json(&a.out.join("reward.json"), &rep)?;
            write_csv(&a.out.join("reward.csv"), &rep.rows)?;
            println!("mean reward {:.4} (n={})", rep.mean_total, rep.n);
        }
        EvalCommand::Judge { pairs, rubric } => {
            let rows: Vec<PairRow> = read_csv(&pairs.input)?;
            let templates = cfg.template_set()?;
            let client = Client::new(cfg.endpoint()?.clone())?.with_archive(pairs.out.join("responses"));
            let rep = judge_report(&rows, &client, templates.get(judge_template_kind(rubric)), rubric, jobs)?;
            reports_dir(&pairs.out)?;
            write_json(&pairs.out.join("judge.json"), &rep)?;
            write_csv(&pairs.out.join("judge.csv"), &rep.aggregate.metrics)?;
            for m in &rep.aggregate.metrics {
                println!("{:<36} {:>4} {:.2}", m.metric, m.sum, m.normalized);
            }
        }
        EvalCommand::Agreement { input, out } => {
            let rows: Vec<RatingRow> = read_csv(&input)?;
            let rep = agreement_report(&rows)?;
            reports_dir(&out)?;
            write_json(&out.join("agreement.json"), &rep)?;
            write_csv(&out.join("agreement.csv"), &rep)?;
            for r in &rep {
                let k = r.kappa.map_or_else(|| "undefined".to_owned(), |k| format!("{k:.3}"));
                println!("{:<36} accuracy {:.3} kappa {k}", r.metric, r.accuracy);
            }
        }
        EvalCommand::Regress { input, out, x, y } => {
            let (xs, ys) = read_xy(&input, &x, &y)?;
            let fit = regression_report(&xs, &ys)?;
            reports_dir(&out)?;
            write_json(&out.join("regress.json"), &fit)?;
            write_csv(&out.join("regress.csv"), std::slice::from_ref(&fit))?;
            println!(
                "{y} = {:.4} * {x} + {:.4}  (p = {:.3e}, n = {})",
                fit.slope, fit.intercept, fit.p_value, fit.n
            );
        }
        EvalCommand::Ablation { corpus, out, comparators } => {
            let model = match &cfg.endpoint {
                Some(ep) => Some((Client::new(ep.clone())?.with_archive(out.join("responses")), embedder(cfg)?)),
                None => None,
            };
            let templates = cfg.template_set()?;
            let tpl = templates.get(TemplateKind::Summarize);
            let rep = ablation_report(
                &corpus,
                cfg,
                &comparators,
                model.as_ref().map(|(c, e)| (c, tpl, e.as_ref())),
                jobs,
            )?;
            reports_dir(&out)?;
            write_json(&out.join("ablation.json"), &rep)?;
            write_csv(&out.join("ablation.csv"), &rep.rows)?;
            let table = rep.render_table();
            std::fs::write(out.join("ablation.txt"), &table).map_err(|e| Error::io(&out, e))?;
            print!("{table}");
        }
    }
    Ok(())
}

/// Sampling settings matching synthetic frames, which are one per screen.
pub const SYNTH_CONFIG: &str = "[sampling]\nfps = 1.0\ninterval_s = 1.0\n";

fn synth(out: &Path, count: usize, seed: u64, scroll: bool) -> Result<()> {
    if count == 0 {
        return Err(Error::Config("--count must be at least 1".into()));
    }
    let spec = if scroll {
        TrajectorySpec::scroll()
    } else {
        TrajectorySpec::default()
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for i in 0..count {
        let (frames, truth) = trajectory(&spec, seed + i as u64)?;
        write_corpus_entry(&out.join(format!("traj_{i:04}")), &frames, &truth)?;
    }
    let cfg = out.join("fcmir.toml");
    std::fs::write(&cfg, SYNTH_CONFIG).map_err(|e| Error::io(&cfg, e))?;
    println!("{count} trajectories in {}", out.display());
    Ok(())
}
