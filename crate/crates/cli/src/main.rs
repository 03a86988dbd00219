use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use sclab_core::ariosim::ScenarioKind;
use sclab_core::dataset::{parse_transactions, parse_transactions_in, serialize_transactions, Dataset};
use sclab_core::eval::{link_report_text, pf_report_text};
use sclab_core::firmgen::FirmLayout;
use sclab_core::invmodule::{top_k_report, train_inventory, Alpha, AttentionMode, Embeddings, GradientMode};
use sclab_core::netstats::{network_report, FirmGraph};
use sclab_core::pipeline::{self, streams, EvalSplit, Manifest, RunConfig};
use sclab_core::prodgen::ProductionGraph;

#[derive(Parser, Debug)]
#[command(name = "sclab", version, about = "Supply-chain simulation, production-function learning and link-prediction evaluation")]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Config or manifest file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed. Falls back to the config file, then SCLAB_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long = "out", default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
struct TrainFlags {
    #[arg(long)]
    mode: Option<AttentionMode>,
    #[arg(long)]
    gradient_mode: Option<GradientMode>,
    /// Product embeddings for bilinear mode, one row per product.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    patience: Option<u32>,
    #[arg(long)]
    lambda_debt: Option<f64>,
    #[arg(long)]
    lambda_cons: Option<f64>,
    #[arg(long = "lambda-l2")]
    lambda_l2: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a production graph and firm layout, then simulate transactions.
    Generate {
        #[command(flatten)]
        common: Common,
        /// std, shocks or missing.
        #[arg(long)]
        scenario: Option<ScenarioKind>,
    },
    /// Learn attention weights from the train split of a transactions file.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Production graph; fixes the product universe.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Mean average precision of learned weights and baselines against a
    /// ground-truth production graph.
    EvalPf {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Transactions whose train split feeds the baselines.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// MRR and RMSE of Edgebank and a random scorer on the val or test split.
    EvalLinks {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Production graph; fixes the product universe.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also score Edgebank with inventory penalties and caps.
        #[arg(long)]
        apply_penalties: bool,
        #[arg(long)]
        split: Option<EvalSplit>,
    },
    /// Network statistics of the firm-firm graph.
    Stats {
        #[command(flatten)]
        common: Common,
        /// Transactions; the graph links every transacting supplier and buyer.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Firm layout; the graph links every buyer to its default suppliers.
        #[arg(long)]
        firms: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Train { .. } => "train",
            Command::EvalPf { .. } => "eval-pf",
            Command::EvalLinks { .. } => "eval-links",
            Command::Stats { .. } => "stats",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Generate { common, .. }
            | Command::Train { common, .. }
            | Command::EvalPf { common, .. }
            | Command::EvalLinks { common, .. }
            | Command::Stats { common, .. } => common,
        }
    }
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Invalid(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

impl From<sclab_core::Error> for Failure {
    fn from(e: sclab_core::Error) -> Self {
        Failure::Invalid(e.into())
    }
}

/// Config, manifest inputs and the record of this invocation.
struct Session {
    command: &'static str,
    config: RunConfig,
    manifest_inputs: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    out: PathBuf,
}

impl Session {
    fn open(cmd: &Command) -> Result<Self, Failure> {
        let common = cmd.common();
        let (mut config, manifest_inputs, file_seed) = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let config = RunConfig::from_toml(&text)?;
                let inputs = match Manifest::from_toml(&text) {
                    Ok(m) if m.command == cmd.name() => m.inputs,
                    _ => BTreeMap::new(),
                };
                (config, inputs, RunConfig::toml_sets_seed(&text))
            }
            None => (RunConfig::default(), BTreeMap::new(), false),
        };
        config.seed = match (common.seed, file_seed) {
            (Some(s), _) => s,
            (None, true) => config.seed,
            (None, false) => match std::env::var("SCLAB_SEED") {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("SCLAB_SEED must be an unsigned integer, got {v:?}")))?,
                Err(_) => 0,
            },
        };
        Ok(Session {
            command: cmd.name(),
            config,
            manifest_inputs,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            out: common.out.clone(),
        })
    }

    /// Validates and resolves the config once all flags are applied.
    fn finish_config(&mut self) -> Result<(), Failure> {
        self.config.validate()?;
        self.config = self.config.clone().resolve();
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(())
    }

    /// The flag value, else the same input recorded in the manifest.
    fn input(&mut self, key: &str, flag: &Option<PathBuf>) -> Option<PathBuf> {
        let path = flag.clone().or_else(|| self.manifest_inputs.get(key).map(PathBuf::from))?;
        self.inputs.insert(key.to_string(), path.display().to_string());
        Some(path)
    }

    fn required(&mut self, key: &str, flag: &Option<PathBuf>) -> Result<PathBuf, Failure> {
        self.input(key, flag)
            .ok_or_else(|| Failure::Usage(format!("{} needs --{key} (or a manifest that records it)", self.command)))
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn close(self) -> Result<(), Failure> {
        let manifest = Manifest {
            command: self.command.to_string(),
            inputs: self.inputs,
            outputs: self.outputs,
            config: self.config,
        };
        let path = self.out.join(format!("{}.manifest.toml", self.command));
        fs::write(&path, manifest.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

fn load_dataset(data: &Path, truth: Option<&ProductionGraph>) -> Result<Dataset, Failure> {
    let inferred = parse_transactions(data)?;
    Ok(match truth {
        Some(g) if g.n_products() != inferred.n_products => parse_transactions_in(data, inferred.n_firms, g.n_products())?,
        _ => inferred,
    })
}

fn apply_train_flags(config: &mut RunConfig, f: &TrainFlags) {
    let t = &mut config.train;
    if let Some(v) = f.mode {
        t.mode = v;
    }
    if let Some(v) = f.gradient_mode {
        t.gradient_mode = v;
    }
    if let Some(v) = f.lr {
        t.learning_rate = v;
    }
    if let Some(v) = f.epochs {
        t.epochs = v;
    }
    if let Some(v) = f.patience {
        t.patience = v;
    }
    if let Some(v) = f.lambda_debt {
        t.lambda_debt = v;
    }
    if let Some(v) = f.lambda_cons {
        t.lambda_cons = v;
    }
    if let Some(v) = f.lambda_l2 {
        t.lambda_l2 = v;
    }
}

fn execute(cmd: &Command) -> Result<(), Failure> {
    let mut s = Session::open(cmd)?;
    match cmd {
        Command::Generate { scenario, .. } => {
            if let Some(kind) = scenario {
                s.config.set_scenario_kind(*kind);
            }
            s.finish_config()?;
            let g = pipeline::generate(&s.config)?;
            g.graph.write(s.path("prodgraph"))?;
            g.layout.write(s.path("firms.txt"))?;
            serialize_transactions(&g.dataset, s.path("transactions.csv"))?;
            let mut shocks = String::from("product,t\n");
            for (p, t) in &g.sim.shock_log {
                shocks.push_str(&format!("{p},{t}\n"));
            }
            s.write("shocks.csv", &shocks)?;
            if !g.dropped.is_empty() {
                let ids: Vec<String> = g.dropped.iter().map(u32::to_string).collect();
                s.write("dropped_firms.txt", &(ids.join("\n") + "\n"))?;
            }
            let d = &g.dataset;
            let summary = format!(
                "products = {}\nfirms = {}\ntransacting_firms = {}\ntransactions = {}\nactive_timesteps = {}\ntimesteps = {}\nshocks = {}\n",
                g.graph.n_products(),
                g.layout.n_firms(),
                d.active_firms(),
                d.len(),
                d.active_timesteps(),
                s.config.scenario.steps,
                g.sim.shock_log.len()
            );
            s.write("summary.txt", &summary)?;
            print!("{summary}");
        }
        Command::Train { data, truth, train, .. } => {
            apply_train_flags(&mut s.config, train);
            let data = s.required("data", data)?;
            let truth = s.input("truth", truth);
            let embeddings_path = s.input("embeddings", &train.embeddings);
            s.finish_config()?;
            let graph = truth.map(ProductionGraph::read).transpose()?;
            let dataset = pipeline::split(&load_dataset(&data, graph.as_ref())?, &s.config.eval)?;
            let embeddings = embeddings_path.map(|p| Embeddings::read(p, dataset.n_products)).transpose()?;
            let (weights, log) = train_inventory(dataset.train(), dataset.n_firms, dataset.n_products, &s.config.train, embeddings)?;
            let alpha = weights.alpha();
            alpha.write(s.path("alpha.mat"))?;
            s.write("train_log.csv", &log.to_text())?;
            s.write("top_parts.txt", &top_k_report(&alpha, s.config.eval.top_k))?;
            println!(
                "trained {} epochs{}; final loss {}",
                log.epochs.len(),
                if log.stopped_early { " (early stop)" } else { "" },
                log.epochs.last().map_or(f64::NAN, |e| e.loss)
            );
        }
        Command::EvalPf { weights, truth, data, .. } => {
            let truth = s.required("truth", truth)?;
            let weights = s.input("weights", weights);
            let data = s.input("data", data);
            if weights.is_none() && data.is_none() {
                return Err(Failure::Usage("eval-pf needs --weights, --data or both".into()));
            }
            s.finish_config()?;
            let graph = ProductionGraph::read(&truth)?;
            let alpha = weights.map(Alpha::read).transpose()?;
            let dataset = match data {
                Some(d) => Some(pipeline::split(&load_dataset(&d, Some(&graph))?, &s.config.eval)?),
                None => None,
            };
            let train = dataset.as_ref().map_or(&[][..], |d| d.train());
            let results = pipeline::production_function_results(&graph, train, alpha.as_ref(), &s.config)?;
            let text = pf_report_text(&results);
            s.write("pf_report.csv", &text)?;
            for (name, r) in &results {
                println!("{name}: MAP {:.4}", r.map);
            }
        }
        Command::EvalLinks { data, weights, truth, apply_penalties, split, .. } => {
            if *apply_penalties {
                s.config.eval.apply_penalties = true;
            }
            if let Some(sp) = split {
                s.config.eval.split = *sp;
            }
            let data = s.required("data", data)?;
            let weights = s.input("weights", weights);
            let truth = s.input("truth", truth);
            if s.config.eval.apply_penalties && weights.is_none() {
                return Err(Failure::Usage("--apply-penalties needs --weights".into()));
            }
            s.finish_config()?;
            let graph = truth.map(ProductionGraph::read).transpose()?;
            let alpha = weights.map(Alpha::read).transpose()?;
            let graph_m = graph.as_ref().map(ProductionGraph::n_products).or(alpha.as_ref().map(Alpha::m));
            let dataset = load_dataset(&data, graph.as_ref())?;
            let dataset = match graph_m {
                Some(m) if m != dataset.n_products => parse_transactions_in(&data, dataset.n_firms, m)?,
                _ => dataset,
            };
            let dataset = pipeline::split(&dataset, &s.config.eval)?;
            let reports = pipeline::link_prediction_results(&dataset, alpha.as_ref(), &s.config)?;
            let text = link_report_text(&s.config.eval.split.to_string(), &reports);
            s.write("links_report.csv", &text)?;
            for r in &reports {
                let rmse = r.rmse.map_or_else(|| "-".into(), |v| format!("{v:.4}"));
                println!("{}: MRR {:.4} RMSE {rmse}", r.name, r.mrr);
            }
        }
        Command::Stats { data, firms, .. } => {
            let data = s.input("data", data);
            let firms = s.input("firms", firms);
            if data.is_none() && firms.is_none() {
                return Err(Failure::Usage("stats needs --data, --firms or both".into()));
            }
            s.finish_config()?;
            let seed = s.config.stream(streams::LOUVAIN);
            let k_min = s.config.eval.k_min;
            let mut text = String::new();
            if let Some(path) = firms {
                let layout = FirmLayout::read(&path)?;
                let report = network_report(&FirmGraph::from_layout(&layout), seed, k_min)?;
                text.push_str("# supplier relations\n");
                text.push_str(&report.to_text());
            }
            if let Some(path) = data {
                let dataset = parse_transactions(&path)?;
                let report = network_report(&FirmGraph::from_dataset(&dataset)?, seed, k_min)?;
                if !text.is_empty() {
                    text.push('\n');
                }
                text.push_str("# transactions\n");
                text.push_str(&report.to_text());
            }
            s.write("stats.txt", &text)?;
            print!("{text}");
        }
    }
    s.close()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => Cli::command().error(ErrorKind::MissingRequiredArgument, msg).exit(),
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
