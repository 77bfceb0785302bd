use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use prefrl_core::harness::metrics::{METRICS_CSV, METRICS_JSONL};
use prefrl_core::harness::{
    build_provider, eval_misalignment, eval_preference_accuracy, near_identical_final_state_pairs,
    random_policy_pairs, rollout_episode, run_varp, stream_rng, HarnessConfig, Labeler, MetricsRow,
    ProviderAccuracy, ProviderKind, RunObserver, SketchContext, Stream, CHECKPOINT_DIR, DEFAULT_GAP_BINS,
};
use prefrl_core::harness::rollout::{derive_seed, random_policy};
use prefrl_core::labeler::LabelQueue;
use prefrl_core::model::EpisodeId;
use prefrl_core::nn::load_mlp;
use prefrl_core::preference::{PreferenceProvider, VlmClient, DEFAULT_API_KEY_ENV};
use prefrl_core::reward::RewardModel;
use prefrl_core::sketch::encode_png;
use prefrl_server::{labeler_router, stub_router, BackgroundServer, StubConfig, StubState};
use prefrl_server::{DEFAULT_LABEL_PORT, DEFAULT_STUB_PORT};

#[derive(Parser)]
#[command(name = "prefrl", version, about = "Preference-based reward learning with trajectory sketches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the alternating reward-learning and policy-training loop.
    Train(TrainArgs),
    /// Labeler accuracy against ground truth, binned by return gap.
    EvalPrefs(EvalPrefsArgs),
    /// Ranking disagreement of a trained reward on held-out random pairs.
    EvalMisalignment(EvalMisalignmentArgs),
    /// Render sketches of random-policy episodes to PNG.
    SketchDemo(SketchDemoArgs),
    /// Serve the human labeling API.
    LabelServe(LabelServeArgs),
    /// Serve an offline model endpoint for testing the model labelers.
    StubVlm(StubVlmArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// scripted | final-state | noisy | vlm | vlm-score | human
    #[arg(long)]
    provider: Option<ProviderKind>,
    /// Weight of the agent-aware regularizer.
    #[arg(long)]
    lambda: Option<f64>,
    /// Label flip probability for the teacher providers.
    #[arg(long)]
    flip_prob: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<HarnessConfig> {
        let mut cfg = match &self.config {
            Some(p) => HarnessConfig::load(p)?,
            None => HarnessConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.provider {
            cfg.provider.kind = p;
        }
        if let Some(l) = self.lambda {
            cfg.reward.lambda = l;
        }
        if let Some(f) = self.flip_prob {
            cfg.provider.flip_prob = Some(f);
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Port for the labeling API when `--provider human`.
    #[arg(long, default_value_t = DEFAULT_LABEL_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Static labeling UI served next to the API.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Resume directory left by an aborted run.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalPrefsArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated providers; defaults to `--provider` or the config's.
    #[arg(long, value_delimiter = ',')]
    providers: Vec<ProviderKind>,
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    #[arg(long, default_value_t = DEFAULT_GAP_BINS)]
    bins: usize,
    /// `random` policy pairs or `near-final` pairs that end close together.
    #[arg(long, default_value = "random")]
    pair_set: String,
    /// Spread of final positions for `near-final` pairs.
    #[arg(long, default_value_t = 0.02)]
    jitter: f64,
}

#[derive(Args)]
struct EvalMisalignmentArgs {
    #[command(flatten)]
    common: Common,
    /// Run directory holding `checkpoints/reward.json`, or the file itself.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
}

#[derive(Args)]
struct SketchDemoArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 4)]
    episodes: usize,
}

#[derive(Args)]
struct LabelServeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = DEFAULT_LABEL_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Append-only queue journal; replayed on start.
    #[arg(long)]
    journal: Option<PathBuf>,
    /// Enqueue this many random-policy pairs on start.
    #[arg(long, default_value_t = 0)]
    demo_pairs: usize,
}

#[derive(Args)]
struct StubVlmArgs {
    #[arg(long, default_value_t = DEFAULT_STUB_PORT)]
    port: u16,
    /// Answer the first N requests with `--fail-status`.
    #[arg(long, default_value_t = 0)]
    fail_first: u64,
    #[arg(long, default_value_t = 503)]
    fail_status: u16,
    #[arg(long, default_value_t = 0)]
    delay_ms: u64,
    #[arg(long)]
    label_reply: Option<String>,
    #[arg(long)]
    score_reply: Option<String>,
}

struct Progress {
    quiet: bool,
}

impl RunObserver for Progress {
    fn on_row(&mut self, r: &MetricsRow) {
        if self.quiet {
            return;
        }
        println!(
            "iter {:>3}  steps {:>7}  return_gt {:>9.3}  success {:.2}  misalign {:.3}  pref_acc {:.3}  loss {:.4}",
            r.iteration,
            r.env_steps,
            r.episode_return_gt,
            r.success_rate,
            r.misalignment,
            r.pref_accuracy,
            r.get("loss_total"),
        );
    }
}

fn start_label_server(host: IpAddr, port: u16, queue: Arc<LabelQueue>, static_dir: Option<PathBuf>) -> Result<BackgroundServer> {
    let server = BackgroundServer::start(SocketAddr::new(host, port), labeler_router(queue, static_dir))
        .with_context(|| format!("cannot bind {host}:{port}"))?;
    eprintln!("labeling API on http://{}", server.addr());
    Ok(server)
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if args.resume.is_some() {
        cfg.resume_from = args.resume.clone();
    }
    let mut progress = Progress { quiet: args.quiet };
    let outcome = match cfg.provider.kind {
        ProviderKind::VlmScore => {
            let mut scorer = VlmClient::http(cfg.vlm.clone())?;
            run_varp(&cfg, Labeler::Score(&mut scorer), &mut progress)?
        }
        ProviderKind::Human => {
            let queue = Arc::new(LabelQueue::open(cfg.provider.queue.clone())?);
            let _server = start_label_server(args.host, args.port, queue.clone(), args.static_dir)?;
            let mut provider = build_provider(&cfg, Some(queue))?;
            run_varp(&cfg, Labeler::Pairwise(provider.as_mut()), &mut progress)?
        }
        _ => {
            let mut provider = build_provider(&cfg, None)?;
            run_varp(&cfg, Labeler::Pairwise(provider.as_mut()), &mut progress)?
        }
    };
    let dir = outcome.output_dir.display();
    println!("metrics: {dir}/{METRICS_JSONL}, {dir}/{METRICS_CSV}");
    println!("checkpoints: {dir}/{CHECKPOINT_DIR}/");
    Ok(())
}

fn print_accuracy(report: &[ProviderAccuracy]) {
    for p in report {
        let overall = p.overall.map_or("n/a".to_string(), |a| format!("{a:.4}"));
        println!("{:?}: overall {overall}", p.source);
        for b in &p.bins {
            let acc = b.accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}"));
            println!(
                "  bin {} gap [{:.4}, {:.4}]  pairs {:>5}  discarded {:>5}  accuracy {acc}",
                b.bin, b.lo, b.hi, b.pairs, b.discarded
            );
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn sketch_context(cfg: &HarnessConfig) -> SketchContext {
    SketchContext {
        spec: cfg.env_spec(),
        camera: cfg.camera.clone(),
        style: cfg.style.clone(),
        body: cfg.tracked_body,
    }
}

fn eval_prefs(args: EvalPrefsArgs) -> Result<()> {
    let cfg = args.common.load()?;
    cfg.validate()?;
    let kinds = if args.providers.is_empty() {
        vec![cfg.provider.kind]
    } else {
        args.providers.clone()
    };
    let mut providers: Vec<Box<dyn PreferenceProvider>> = Vec::new();
    for kind in &kinds {
        let mut c = cfg.clone();
        c.provider.kind = *kind;
        if matches!(kind, ProviderKind::Human | ProviderKind::VlmScore) {
            bail!("eval-prefs cannot evaluate the {kind} provider");
        }
        providers.push(build_provider(&c, None)?);
    }
    let spec = cfg.env_spec();
    let pairs = match args.pair_set.as_str() {
        "random" => random_policy_pairs(&spec, args.pairs, cfg.seed)?,
        "near-final" => near_identical_final_state_pairs(&spec, args.pairs, args.jitter, cfg.seed)?,
        other => bail!("unknown pair set {other:?}; expected random or near-final"),
    };
    let ctx = sketch_context(&cfg);
    let mut refs: Vec<&mut dyn PreferenceProvider> = providers.iter_mut().map(|p| &mut **p as &mut dyn PreferenceProvider).collect();
    let report = eval_preference_accuracy(&mut refs, &pairs, Some(&ctx), &cfg.task_spec()?, args.bins)?;
    print_accuracy(&report);
    let path = cfg.output_dir.join("pref_accuracy.json");
    write_json(&path, &serde_json::to_value(&report)?)?;
    println!("report: {}", path.display());
    Ok(())
}

fn eval_misalignment_cmd(args: EvalMisalignmentArgs) -> Result<()> {
    let cfg = args.common.load()?;
    let path = if args.run.is_dir() {
        args.run.join(CHECKPOINT_DIR).join("reward.json")
    } else {
        args.run.clone()
    };
    let net = load_mlp(&path).with_context(|| format!("cannot load reward from {}", path.display()))?;
    let spec = cfg.env_spec();
    let model = RewardModel::from_net(net, spec.state_dim)?;
    let pairs = random_policy_pairs(&spec, args.pairs, derive_seed(cfg.seed, 0, Stream::HeldoutPairs))?;
    let m = eval_misalignment(&model, &pairs)?;
    println!("misalignment {m:.6} over {} pairs", pairs.len());
    if let Some(out) = &args.common.out {
        write_json(&out.join("misalignment.json"), &serde_json::json!({"misalignment": m, "pairs": pairs.len()}))?;
    }
    Ok(())
}

fn sketch_demo(args: SketchDemoArgs) -> Result<()> {
    let cfg = args.common.load()?;
    let ctx = sketch_context(&cfg);
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    for k in 0..args.episodes as u64 {
        let mut policy = random_policy(ctx.spec.action_dim, stream_rng(cfg.seed, k, Stream::Rollout));
        let ep = rollout_episode(&ctx.spec, derive_seed(cfg.seed, k, Stream::Reset), EpisodeId(k), &mut policy)?;
        let obs = ctx.sketch(&ep.segment()?)?;
        std::fs::write(dir.join(format!("sketch_{k:03}.png")), encode_png(&obs.composed)?)?;
        std::fs::write(dir.join(format!("frame_{k:03}.png")), encode_png(&obs.final_frame)?)?;
        println!("episode {k}: return_gt {:.3}, success {}", ep.return_gt, ep.success);
    }
    println!("wrote {} sketches to {}", args.episodes, dir.display());
    Ok(())
}

fn wait_forever() -> ! {
    loop {
        std::thread::park();
    }
}

fn label_serve(args: LabelServeArgs) -> Result<()> {
    let cfg = args.common.load()?;
    let mut qcfg = cfg.provider.queue.clone();
    if args.journal.is_some() {
        qcfg.journal = args.journal.clone();
    }
    let queue = Arc::new(LabelQueue::open(qcfg)?);
    if args.demo_pairs > 0 {
        let ctx = sketch_context(&cfg);
        let task = cfg.task_spec()?;
        let pairs = random_policy_pairs(&ctx.spec, args.demo_pairs, cfg.seed)?;
        for (a, b) in pairs {
            let (oa, ob) = (ctx.sketch(&a)?, ctx.sketch(&b)?);
            queue.enqueue_pair(&oa, &ob, &task, Arc::new(a), Arc::new(b))?;
        }
    }
    let _server = start_label_server(args.host, args.port, queue, args.static_dir)?;
    wait_forever()
}

fn stub_vlm(args: StubVlmArgs) -> Result<()> {
    let mut cfg = StubConfig {
        fail_first: args.fail_first,
        fail_status: args.fail_status,
        delay_ms: args.delay_ms,
        ..StubConfig::default()
    };
    if let Some(r) = args.label_reply {
        cfg.label_reply = r;
    }
    if let Some(r) = args.score_reply {
        cfg.score_reply = r;
    }
    let addr = SocketAddr::from(([127, 0, 0, 1], args.port));
    let server = BackgroundServer::start(addr, stub_router(StubState::new(cfg)))
        .with_context(|| format!("cannot bind {addr}"))?;
    eprintln!("stub model endpoint on {}", server.url(prefrl_server::stub::CHAT_PATH));
    eprintln!("(credentials, if any, are read from ${DEFAULT_API_KEY_ENV} by the client)");
    wait_forever()
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => train(a),
        Command::EvalPrefs(a) => eval_prefs(a),
        Command::EvalMisalignment(a) => eval_misalignment_cmd(a),
        Command::SketchDemo(a) => sketch_demo(a),
        Command::LabelServe(a) => label_serve(a),
        Command::StubVlm(a) => stub_vlm(a),
    }
}
