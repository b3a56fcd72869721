use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use pdte_core::channel::{modeled_phase_time, NetworkModel, Phase};
use pdte_core::dealer::{deal, seed_fingerprint, CorrelationStore};
use pdte_core::pdte::{encode_for, eval_budget_for, run_pdte_provisioned, Optimization, PdteConfig, PdteRun};
use pdte_core::sharing::derive_rng;
use pdte_core::sos::{Backend, DeltaMode};
use pdte_core::tree::{
    complete, load_features, load_tree, pad_complete, preset, random_features, scalability, sparse, tree_to_json,
    DecisionTree, EncodedTree, Layout, ShapeSpec, TABLE2,
};
use pdte_core::Error;

/// Exit status 2 for bad input or configuration, 3 for a failed protocol run.
#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Protocol(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = match self {
            CliError::Config(e) | CliError::Protocol(e) => e,
        };
        if f.alternate() {
            write!(f, "{e:#}")
        } else {
            write!(f, "{e}")
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(e.into())
}

/// Sorts a core error by whether the caller or the run is at fault.
fn classify(e: Error) -> CliError {
    match e {
        Error::ConfigInvalid(_)
        | Error::InvalidTree(_)
        | Error::UnsupportedQ(_)
        | Error::LayoutMismatch
        | Error::TreeNotComplete
        | Error::Parse { .. }
        | Error::UnknownInstance(_)
        | Error::IndexWidthOverflow { .. }
        | Error::CorrelationFile(_) => CliError::Config(e.into()),
        _ => CliError::Protocol(e.into()),
    }
}

trait OrClassify<T> {
    fn classified(self, what: &str) -> CliResult<T>;
}

impl<T> OrClassify<T> for pdte_core::Result<T> {
    fn classified(self, what: &str) -> CliResult<T> {
        self.map_err(|e| match classify(e) {
            CliError::Config(e) => CliError::Config(e.context(what.to_string())),
            CliError::Protocol(e) => CliError::Protocol(e.context(what.to_string())),
        })
    }
}

#[derive(Parser, Debug)]
#[command(name = "pdte", version, about = "Private decision tree evaluation: generate, deal, evaluate, benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic tree (and optionally a feature vector) as JSON.
    GenTree(GenTreeArgs),
    /// Evaluate a tree on a feature vector and report the transcript.
    Eval(EvalArgs),
    /// Deal correlation files for later `eval --deal-dir` runs.
    Deal(DealArgs),
    /// Run a matrix of shapes, backends and optimizations and emit CSV.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct ShapeArgs {
    /// A benchmark preset by name (wine, linnerud, breast, digits, spambase,
    /// diabetes, boston, mnist).
    #[arg(long)]
    pub preset: Option<String>,
    /// Complete tree of this depth.
    #[arg(long, value_name = "D")]
    pub complete: Option<usize>,
    /// Sparse tree as DEPTH:NODES (NODES odd).
    #[arg(long, value_name = "D:M")]
    pub sparse: Option<String>,
    /// Scalability shape of depth D with 25*D array slots.
    #[arg(long, value_name = "D")]
    pub scalability: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct GenTreeArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Feature dimension for shapes other than presets.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 16)]
    pub ell: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tree JSON destination.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Also write a random feature vector here.
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ProtocolArgs {
    #[arg(long, default_value = "prf")]
    pub backend: Backend,
    /// Feature-selection backend.
    #[arg(long, default_value = "ot")]
    pub feature_backend: Backend,
    /// none, cluster2, cluster3 or layered.
    #[arg(long, default_value = "none")]
    pub opt: Optimization,
    /// Bit width of thresholds, features, labels and indices.
    #[arg(long, default_value_t = 16)]
    pub ell: usize,
    /// Public iteration count (defaults to the tree depth).
    #[arg(long)]
    pub dprime: Option<usize>,
    /// PRF instance for the prf backend (picked automatically when absent).
    #[arg(long)]
    pub prf: Option<String>,
    /// Offset opening for the prf backend: arith or xor.
    #[arg(long, default_value = "arith", value_parser = parse_delta)]
    pub delta: DeltaMode,
    #[arg(long, default_value_t = 2048)]
    pub paillier_bits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_delta(s: &str) -> std::result::Result<DeltaMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "arith" => Ok(DeltaMode::Arith),
        "xor" => Ok(DeltaMode::Xor),
        _ => Err(format!("expected arith or xor, got {s:?}")),
    }
}

impl ProtocolArgs {
    fn config(&self) -> PdteConfig {
        let mut c = PdteConfig::new(self.ell, self.backend)
            .with_feature_backend(self.feature_backend)
            .with_optimization(self.opt)
            .with_delta_mode(self.delta)
            .with_paillier_bits(self.paillier_bits);
        if let Some(d) = self.dprime {
            c = c.with_d_prime(d);
        }
        c.prf = self.prf.clone();
        c
    }
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub tree: PathBuf,
    /// Feature vector, JSON array or CSV integers.
    #[arg(long)]
    pub features: PathBuf,
    /// Evaluate in the clear and print the label only.
    #[arg(long)]
    pub plaintext: bool,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Network model for modeled times: lan, man, wan or RTT_MS:BANDWIDTH.
    /// Repeatable.
    #[arg(long = "net")]
    pub nets: Vec<NetworkModel>,
    /// Sequential evaluations on one setup.
    #[arg(long, default_value_t = 1)]
    pub evals: usize,
    /// Read correlations from files written by `deal` instead of dealing.
    #[arg(long)]
    pub deal_dir: Option<PathBuf>,
    /// Transcript CSV destination (`-` for stdout).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DealArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[arg(long, default_value_t = 1)]
    pub evals: usize,
    #[arg(long)]
    pub deal_dir: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    /// Preset names, or `all`. Repeatable.
    #[arg(long = "preset")]
    pub presets: Vec<String>,
    /// Complete tree depths. Repeatable.
    #[arg(long = "complete")]
    pub completes: Vec<usize>,
    /// Sparse shapes DEPTH:NODES. Repeatable.
    #[arg(long = "sparse")]
    pub sparses: Vec<String>,
    /// Scalability depths. Repeatable.
    #[arg(long = "scalability")]
    pub scalabilities: Vec<usize>,
    /// Tree files. Repeatable.
    #[arg(long = "tree")]
    pub trees: Vec<PathBuf>,
    /// Feature dimension for synthetic shapes other than presets.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "ot,prf,he")]
    pub backends: Vec<Backend>,
    #[arg(long, value_delimiter = ',', default_value = "none")]
    pub opts: Vec<Optimization>,
    #[arg(long = "net")]
    pub nets: Vec<NetworkModel>,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = 16)]
    pub ell: usize,
    #[arg(long)]
    pub dprime: Option<usize>,
    #[arg(long)]
    pub prf: Option<String>,
    #[arg(long, default_value = "arith", value_parser = parse_delta)]
    pub delta: DeltaMode,
    #[arg(long, default_value_t = 2048)]
    pub paillier_bits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination (stdout when absent).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Command::GenTree(a) => gen_tree(&a),
        Command::Eval(a) => eval(&a),
        Command::Deal(a) => deal_cmd(&a),
        Command::Bench(a) => bench(&a),
    }
}

/// A synthetic shape and the array length its encoding is padded to.
fn shape(a: &ShapeArgs, n: usize) -> CliResult<ShapeSpec> {
    if let Some(p) = &a.preset {
        return preset(p).classified("preset");
    }
    if let Some(d) = a.complete {
        return Ok(ShapeSpec { name: "complete", n, d, m: (1usize << (d + 1)) - 1 });
    }
    if let Some(s) = &a.sparse {
        let (d, m) = parse_sparse(s)?;
        return Ok(ShapeSpec { name: "sparse", n, d, m });
    }
    if let Some(d) = a.scalability {
        return Ok(scalability(n, d));
    }
    Err(config(anyhow!("no tree shape given")))
}

fn parse_sparse(s: &str) -> CliResult<(usize, usize)> {
    let parsed = s.split_once(':').and_then(|(d, m)| Some((d.trim().parse().ok()?, m.trim().parse().ok()?)));
    parsed.ok_or_else(|| config(anyhow!("bad sparse shape {s:?}, expected DEPTH:NODES")))
}

fn build_tree(spec: &ShapeSpec, ell: usize, seed: u64) -> CliResult<DecisionTree> {
    let mut rng = derive_rng(seed, "tree");
    if spec.name == "complete" {
        if spec.d > 24 {
            return Err(config(anyhow!("complete depth {} is too large", spec.d)));
        }
        return Ok(complete(spec.n, spec.d, ell, &mut rng));
    }
    // A full binary tree has an odd node count; the array is padded later.
    let nodes = if spec.m % 2 == 0 { spec.m - 1 } else { spec.m };
    sparse(spec.n, spec.d, nodes, ell, &mut rng).classified("tree shape")
}

fn gen_tree(a: &GenTreeArgs) -> CliResult<()> {
    let spec = shape(&a.shape, a.n)?;
    let tree = build_tree(&spec, a.ell, a.seed)?;
    write_file(&a.out, &tree_to_json(&tree))?;
    if let Some(p) = &a.features {
        let x = random_features(tree.n, a.ell, &mut derive_rng(a.seed, "features"));
        write_file(p, &serde_json::to_string(&x).map_err(config)?)?;
    }
    println!("n={} d={} m={} nodes={}", spec.n, tree.depth(), spec.m, tree.node_count());
    Ok(())
}

fn write_file(p: &Path, text: &str) -> CliResult<()> {
    std::fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(config)
}

fn check_fits(values: &[u64], ell: usize, what: &str) -> CliResult<()> {
    if ell < 64 {
        if let Some(v) = values.iter().find(|&&v| v >> ell != 0) {
            return Err(config(anyhow!("{what} value {v} does not fit in {ell} bits")));
        }
    }
    Ok(())
}

/// Encodes for `cfg`, pads a flat array to `m` slots, and makes the tree
/// complete first when the layered layout needs it. Deterministic in `seed`.
fn encode_tree(cfg: &PdteConfig, tree: &DecisionTree, m: usize, seed: u64) -> CliResult<EncodedTree> {
    let padded;
    let tree = if cfg.optimization == Optimization::Layered && !tree.is_complete() {
        if tree.depth() > 16 {
            return Err(config(anyhow!("layered mode needs a complete tree; depth {} is too deep to pad", tree.depth())));
        }
        padded = pad_complete(tree);
        &padded
    } else {
        tree
    };
    let mut rng = derive_rng(seed, "encode");
    let mut at = encode_for(cfg, tree, &mut rng).classified("encoding")?;
    if at.layout == Layout::Flat && at.len() < m {
        at.pad_to(m, &mut rng).classified("padding")?;
    }
    Ok(at)
}

fn deal_paths(dir: &Path) -> [PathBuf; 2] {
    [dir.join("p0.corr"), dir.join("p1.corr")]
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    let tree = load_tree(&a.tree).classified(&a.tree.display().to_string())?;
    let x = load_features(&a.features).classified(&a.features.display().to_string())?;
    if a.plaintext {
        println!("label {}", tree.evaluate(&x).classified("features")?);
        return Ok(());
    }
    let p = &a.protocol;
    check_fits(&x, p.ell, "feature")?;
    tree.evaluate(&x).classified("features")?;
    if a.evals == 0 {
        return Err(config(anyhow!("--evals must be at least 1")));
    }
    let cfg = p.config();
    let at = encode_tree(&cfg, &tree, tree.node_count(), p.seed)?;
    let stores = match &a.deal_dir {
        Some(dir) => {
            let [a0, a1] = deal_paths(dir);
            let s0 = CorrelationStore::load(&a0).classified(&a0.display().to_string())?;
            let s1 = CorrelationStore::load(&a1).classified(&a1.display().to_string())?;
            let fp = seed_fingerprint(p.seed);
            if s0.fingerprint() != fp || s1.fingerprint() != fp {
                return Err(config(anyhow!("correlation files in {} were dealt for another seed", dir.display())));
            }
            Some([s0, s1])
        }
        None => None,
    };
    let start = Instant::now();
    let run = run_pdte_provisioned(&cfg, &at, &x, a.evals, p.seed, stores).classified("protocol run")?;
    let wall = start.elapsed();
    for l in &run.labels {
        println!("label {l}");
    }
    report(&run, &a.nets);
    println!("wall_ms {:.1}", wall.as_secs_f64() * 1e3);
    if let Some(path) = &a.csv {
        if path.as_os_str() == "-" {
            run.transcript.write_csv(io::stdout().lock()).map_err(config)?;
        } else {
            let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display())).map_err(config)?;
            run.transcript.write_csv(f).map_err(config)?;
        }
    }
    Ok(())
}

fn default_nets(nets: &[NetworkModel]) -> Vec<(String, NetworkModel)> {
    if nets.is_empty() {
        vec![("lan".into(), NetworkModel::LAN), ("man".into(), NetworkModel::MAN), ("wan".into(), NetworkModel::WAN)]
    } else {
        nets.iter().map(|n| (net_name(n), *n)).collect()
    }
}

fn net_name(n: &NetworkModel) -> String {
    let named = [("lan", NetworkModel::LAN), ("man", NetworkModel::MAN), ("wan", NetworkModel::WAN)];
    match named.iter().find(|(_, m)| m == n) {
        Some((name, _)) => name.to_string(),
        None => format!("{}ms:{}bps", n.rtt_ms, n.bandwidth_bps),
    }
}

fn report(run: &PdteRun, nets: &[NetworkModel]) {
    let t = &run.transcript;
    for phase in Phase::ALL {
        println!("{phase} bytes={} rounds={}", t.phase_bytes(phase), t.rounds(phase));
    }
    for (name, nm) in default_nets(nets) {
        let per: Vec<String> =
            Phase::ALL.iter().map(|&ph| format!("{ph}={:.2}", modeled_phase_time(t, &nm, ph))).collect();
        println!("modeled_ms {name} {}", per.join(" "));
    }
}

fn deal_cmd(a: &DealArgs) -> CliResult<()> {
    let tree = load_tree(&a.tree).classified(&a.tree.display().to_string())?;
    let p = &a.protocol;
    let cfg = p.config();
    let at = encode_tree(&cfg, &tree, tree.node_count(), p.seed)?;
    let per = eval_budget_for(&cfg, &at, tree.n, p.seed).classified("setup")?;
    let stores = deal(&per.times(a.evals as u64), p.seed).classified("dealing")?;
    std::fs::create_dir_all(&a.deal_dir).with_context(|| format!("creating {}", a.deal_dir.display())).map_err(config)?;
    for (store, path) in stores.iter().zip(deal_paths(&a.deal_dir)) {
        store.save(&path).classified(&path.display().to_string())?;
        println!("{} {} bytes", path.display(), store.serialized_len());
    }
    Ok(())
}

struct BenchTree {
    name: String,
    tree: DecisionTree,
    m: usize,
}

fn bench_trees(a: &BenchArgs) -> CliResult<Vec<BenchTree>> {
    let mut specs = Vec::new();
    for p in &a.presets {
        if p.eq_ignore_ascii_case("all") {
            specs.extend(TABLE2);
        } else {
            specs.push(preset(p).classified("preset")?);
        }
    }
    for &d in &a.completes {
        specs.push(ShapeSpec { name: "complete", n: a.n, d, m: (1usize << (d + 1)) - 1 });
    }
    for s in &a.sparses {
        let (d, m) = parse_sparse(s)?;
        specs.push(ShapeSpec { name: "sparse", n: a.n, d, m });
    }
    for &d in &a.scalabilities {
        specs.push(scalability(a.n, d));
    }
    let mut out = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let tree = build_tree(spec, a.ell, a.seed.wrapping_add(i as u64))?;
        let name = match spec.name {
            "complete" | "sparse" | "scalability" => format!("{}-d{}-m{}", spec.name, spec.d, spec.m),
            n => n.to_string(),
        };
        out.push(BenchTree { name, tree, m: spec.m });
    }
    for p in &a.trees {
        let tree = load_tree(p).classified(&p.display().to_string())?;
        let m = tree.node_count();
        out.push(BenchTree { name: p.display().to_string(), tree, m });
    }
    if out.is_empty() {
        return Err(config(anyhow!("bench needs at least one --preset, --complete, --sparse, --scalability or --tree")));
    }
    Ok(out)
}

fn bench(a: &BenchArgs) -> CliResult<()> {
    if a.trials == 0 {
        return Err(config(anyhow!("--trials must be at least 1")));
    }
    let trees = bench_trees(a)?;
    let nets = default_nets(&a.nets);
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display())).map_err(config)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = [
        "tree", "n", "d", "m", "d_prime", "backend", "optimization", "trial", "online_bytes", "offline_bytes",
        "setup_bytes", "online_rounds", "correct",
    ]
    .map(String::from)
    .to_vec();
    header.extend(nets.iter().map(|(name, _)| format!("{name}_online_ms")));
    w.write_record(&header).map_err(config)?;
    for bt in &trees {
        for &backend in &a.backends {
            for &opt in &a.opts {
                let mut cfg = PdteConfig::new(a.ell, backend).with_optimization(opt).with_paillier_bits(a.paillier_bits);
                if let Some(d) = a.dprime {
                    cfg = cfg.with_d_prime(d);
                }
                if backend == Backend::Prf {
                    cfg = cfg.with_delta_mode(a.delta);
                    cfg.prf = a.prf.clone();
                }
                for trial in 0..a.trials {
                    let seed = a.seed.wrapping_add(trial as u64);
                    let x = random_features(bt.tree.n, a.ell, &mut derive_rng(seed, "features"));
                    let at = encode_tree(&cfg, &bt.tree, bt.m, seed)?;
                    let start = Instant::now();
                    let run = run_pdte_provisioned(&cfg, &at, &x, 1, seed, None).classified("protocol run")?;
                    eprintln!("{} {backend} {opt} trial {trial}: {:.1} ms wall", bt.name, start.elapsed().as_secs_f64() * 1e3);
                    let online = &run.evals[0];
                    let correct = run.labels[0] == bt.tree.evaluate(&x).classified("oracle")?;
                    let mut row = vec![
                        bt.name.clone(),
                        bt.tree.n.to_string(),
                        bt.tree.depth().to_string(),
                        run.public.m.to_string(),
                        run.public.d_prime.to_string(),
                        backend.to_string(),
                        opt.to_string(),
                        trial.to_string(),
                        online.phase_bytes(Phase::Online).to_string(),
                        run.transcript.phase_bytes(Phase::Offline).to_string(),
                        run.setup_bytes().to_string(),
                        online.rounds(Phase::Online).to_string(),
                        correct.to_string(),
                    ];
                    row.extend(nets.iter().map(|(_, nm)| format!("{:.3}", modeled_phase_time(online, nm, Phase::Online))));
                    w.write_record(&row).map_err(config)?;
                }
            }
        }
    }
    w.flush().map_err(config)?;
    Ok(())
}
