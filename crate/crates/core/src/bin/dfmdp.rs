use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use dfmdp::diffmdp::{Mode, Strategy};
use dfmdp::harness::{
    build_table, collect_results, generate_file, loglog_slope, runtime, sidecar_path, sweep_run, train_run, write_runtime_csv,
    write_table_csv, GenerateConfig, RunConfig, RuntimeConfig, SweepParam, TABLE_METHODS,
};
use dfmdp::mdp::{Domain, EnvSpec, Regime};
use dfmdp::training::{Method, Selection, TrainConfig};

#[derive(Parser)]
#[command(name = "dfmdp", version, about = "Decision-focused learning for MDPs with missing parameters")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dataset of instances with logged trajectories.
    Generate(GenerateArgs),
    /// Train a predictive model and score it on the test split.
    Train(TrainArgs),
    /// Aggregate finished runs into a results table.
    Table(TableArgs),
    /// Time one backward pass against policy size.
    Runtime(RuntimeArgs),
    /// Train once per value of one hyperparameter.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Replay a frozen `.config.json`.
    #[arg(long, conflicts_with_all = ["domain", "regime"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    domain: Option<Domain>,
    #[arg(long, required_unless_present = "config")]
    regime: Option<Regime>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
    /// Grid side, site count or patient count.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 7)]
    n_train: usize,
    #[arg(long, default_value_t = 1)]
    n_val: usize,
    #[arg(long, default_value_t = 2)]
    n_test: usize,
    #[arg(long, default_value_t = 100)]
    trajectories: usize,
    #[arg(long, default_value_t = 3.0)]
    noise_scale: f64,
}

#[derive(Args, Clone)]
struct Hyper {
    #[arg(long, default_value = "ts")]
    method: Method,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_ess: Option<f64>,
    /// Trajectories per backward pass.
    #[arg(long)]
    k: Option<usize>,
    /// |c| of the Hessian approximation.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    selection: Option<Selection>,
    /// Fine-tune steps of warm-started network solves; 0 disables.
    #[arg(long)]
    warm_steps: Option<usize>,
}

impl Hyper {
    fn resolve(&self, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.method, seed);
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(epochs, lr, lambda, lambda_ess, k, c, selection, warm_steps);
        cfg
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Replay a frozen `config.json`.
    #[arg(long, conflicts_with = "dataset")]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    dataset: Option<PathBuf>,
    /// One or more seeds; several seeds write `seed-<s>` subdirectories.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seed: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    runs: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
}

#[derive(Args)]
struct RuntimeArgs {
    #[arg(long, default_value = "gridworld")]
    domain: Domain,
    #[arg(long, value_delimiter = ',', default_value = "identity,woodbury,full")]
    strategy: Vec<Strategy>,
    #[arg(long, value_delimiter = ',', default_value = "4,6,8,12,16")]
    sizes: Vec<usize>,
    #[arg(long, default_value = "pg")]
    mode: Mode,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 600)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, conflicts_with = "dataset")]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "lambda")]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.1,1,10")]
    values: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    hyper: Hyper,
}

type Res = Result<(), Box<dyn std::error::Error>>;

fn replay(path: &Path, out: &Path, force: bool, want: &str) -> Res {
    let cfg = RunConfig::load(path)?;
    let kind = match cfg {
        RunConfig::Generate { .. } => "generate",
        RunConfig::Train { .. } => "train",
        RunConfig::Sweep { .. } => "sweep",
    };
    if kind != want {
        return Err(format!("{} is a {kind} config, not {want}", path.display()).into());
    }
    cfg.execute(out, force)?;
    eprintln!("replayed {} into {}", path.display(), out.display());
    Ok(())
}

fn generate(a: GenerateArgs) -> Res {
    if let Some(path) = &a.config {
        return replay(path, &a.out, a.force, "generate");
    }
    let domain = a.domain.expect("required by clap");
    let mut spec = EnvSpec::default_for(domain);
    if let Some(s) = a.size {
        spec.size = s;
    }
    if let Some(h) = a.horizon {
        spec.horizon = h;
    }
    let cfg = GenerateConfig {
        n_train: a.n_train,
        n_val: a.n_val,
        n_test: a.n_test,
        trajectories: a.trajectories,
        noise_scale: a.noise_scale,
        ..GenerateConfig::new(spec, a.regime.expect("required by clap"), a.seed)
    };
    let ds = generate_file(&cfg, &a.out, a.force)?;
    println!("wrote {} instances to {} (config {})", ds.len(), a.out.display(), sidecar_path(&a.out).display());
    Ok(())
}

fn train(a: TrainArgs) -> Res {
    if let Some(path) = &a.config {
        return replay(path, &a.out, a.force, "train");
    }
    let dataset = a.dataset.expect("required by clap");
    for &seed in &a.seed {
        let out = if a.seed.len() > 1 { a.out.join(format!("seed-{seed}")) } else { a.out.clone() };
        let cfg = RunConfig::train(&dataset, a.hyper.resolve(seed))?;
        let r = train_run(&cfg, &out, a.force)?;
        println!(
            "{} {} {} seed {seed}: test {:.4} ± {:.4} (epoch {}) -> {}",
            r.domain,
            r.regime,
            r.method,
            r.test.mean,
            r.test.stderr,
            r.chosen_epoch,
            out.display()
        );
    }
    Ok(())
}

fn table(a: TableArgs) -> Res {
    let results: Vec<_> = collect_results(&a.runs)?.into_iter().map(|(_, r)| r).collect();
    if results.is_empty() {
        return Err(format!("no runs found under {}", a.runs.display()).into());
    }
    let methods: Vec<&str> = if a.methods.is_empty() { TABLE_METHODS.to_vec() } else { a.methods.iter().map(String::as_str).collect() };
    let rows = build_table(&results, &methods);
    for r in rows.iter().filter(|r| r.missing) {
        eprintln!("missing cell: {} {} {}", r.domain, r.regime, r.method);
    }
    match &a.out {
        Some(path) => write_table_csv(&rows, path)?,
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn bench(a: RuntimeArgs) -> Res {
    let cfg = RuntimeConfig {
        mode: a.mode,
        k: a.k,
        reps: a.reps,
        timeout: Duration::from_secs(a.timeout_secs),
        seed: a.seed,
        ..RuntimeConfig::new(a.domain, a.strategy.clone(), a.sizes)
    };
    let rows = runtime(&cfg)?;
    match &a.out {
        Some(path) => write_runtime_csv(&rows, path)?,
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
    }
    for s in a.strategy {
        if let Some(b) = loglog_slope(&rows, s) {
            eprintln!("{s:?}: log-log slope {b:.3}");
        }
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Res {
    if let Some(path) = &a.config {
        return replay(path, &a.out, a.force, "sweep");
    }
    let cfg = RunConfig::sweep(&a.dataset.expect("required by clap"), a.hyper.resolve(a.seed), a.param, a.values)?;
    for r in sweep_run(&cfg, &a.out, a.force)? {
        match &r.error {
            None => println!("{}={}: test {:.4} ± {:.4}", r.param, r.value, r.test_mean, r.test_stderr),
            Some(e) => println!("{}={}: failed: {e}", r.param, r.value),
        }
    }
    Ok(())
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("DFMDP_THREADS") else { return Ok(()) };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| format!("DFMDP_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let res = match cli.cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Train(a) => train(a),
        Cmd::Table(a) => table(a),
        Cmd::Runtime(a) => bench(a),
        Cmd::Sweep(a) => sweep(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
