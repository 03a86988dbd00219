//! Run configuration, seed streams and the end-to-end steps behind each
//! command: generate, train, production-function and link evaluation.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ariosim::{drop_firms, run, Scenario, ScenarioKind, SimOutput};
use crate::baselines::{pmi_scores, random_ranking, temporal_correlation_scores, EdgebankIndex, EdgebankMode};
use crate::dataset::{by_timestep, chrono_split, Dataset, FirmId, Transaction};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_production_functions, mrr, rmse, sample_all_negatives, AmountScaler, LinkReport, NegativeSet, PfReport,
    TrainIndex,
};
use crate::firmgen::{generate_firms, FirmGenConfig, FirmLayout};
use crate::invmodule::{adjust_scores, rank_parts, Alpha, Candidate, InvTrainConfig, InventoryState};
use crate::prodgen::{build_production_graph, ProdGenConfig, ProductionGraph};
use crate::rng::{derive_seed, rng_from_seed};

/// Stream labels; every stream seed is `derive_seed(seed, label)` truncated
/// to 63 bits so it round-trips through TOML integers.
pub mod streams {
    pub const PRODGEN: &str = "prodgen";
    pub const FIRMGEN: &str = "firmgen";
    pub const ARIOSIM: &str = "ariosim";
    pub const MISSING: &str = "missing";
    pub const NEGATIVES: &str = "negatives";
    pub const RANDOM_BASELINE: &str = "random-baseline";
    pub const RANDOM_SCORER: &str = "random-scorer";
    pub const LOUVAIN: &str = "louvain";
}

pub fn stream_seed(seed: u64, label: &str) -> u64 {
    derive_seed(seed, label) & (i64::MAX as u64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Val,
    #[default]
    Test,
}

impl std::str::FromStr for EvalSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val" => Ok(EvalSplit::Val),
            "test" => Ok(EvalSplit::Test),
            _ => Err(Error::Config(format!("unknown split '{s}' (expected val or test)"))),
        }
    }
}

impl std::fmt::Display for EvalSplit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvalSplit::Val => "val",
            EvalSplit::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub train_frac: f64,
    pub val_frac: f64,
    pub split: EvalSplit,
    /// Add inventory penalties to Edgebank scores and cap its amounts.
    pub apply_penalties: bool,
    /// Smallest degree used by the tail fit.
    pub k_min: usize,
    /// Parts listed per product in the weights summary.
    pub top_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train_frac: 0.7,
            val_frac: 0.15,
            split: EvalSplit::Test,
            apply_penalties: false,
            k_min: 3,
            top_k: 5,
        }
    }
}

/// Everything a command needs. Per-module seeds inside the nested configs
/// are overwritten from `seed` by [`RunConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub prodgen: ProdGenConfig,
    pub firmgen: FirmGenConfig,
    pub scenario: Scenario,
    pub train: InvTrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            prodgen: ProdGenConfig::default(),
            firmgen: FirmGenConfig::default(),
            scenario: Scenario::default(),
            train: InvTrainConfig::default(),
            eval: EvalConfig::default(),
        }
        .resolve()
    }
}

impl RunConfig {
    /// Parses a config or manifest file. Scenario fields left out of the file
    /// take the preset values of the file's scenario kind.
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut table = match value.get("config") {
            Some(toml::Value::Table(inner)) if value.contains_key("command") => inner.clone(),
            _ => value,
        };
        if let Some(toml::Value::Table(sc)) = table.get_mut("scenario") {
            let kind: ScenarioKind = match sc.get("kind") {
                Some(toml::Value::String(k)) => k.parse().map_err(Error::Config)?,
                _ => ScenarioKind::Std,
            };
            let preset = toml::Table::try_from(Scenario::preset(kind)).map_err(|e| Error::Config(e.to_string()))?;
            for (k, v) in preset {
                sc.entry(k).or_insert(v);
            }
        }
        let config: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config.resolve())
    }

    /// Whether the file sets the global seed explicitly.
    pub fn toml_sets_seed(text: &str) -> bool {
        let Ok(value) = toml::from_str::<toml::Table>(text) else { return false };
        match value.get("config") {
            Some(toml::Value::Table(inner)) if value.contains_key("command") => inner.contains_key("seed"),
            _ => value.contains_key("seed"),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Switches to the preset of `kind` for the scenario-specific knobs.
    pub fn set_scenario_kind(&mut self, kind: ScenarioKind) {
        let preset = Scenario::preset(kind);
        self.scenario.kind = kind;
        self.scenario.p_shock = preset.p_shock;
        self.scenario.missing_frac = preset.missing_frac;
    }

    /// Fills the per-module seeds from the global seed.
    pub fn resolve(mut self) -> Self {
        self.prodgen.seed = stream_seed(self.seed, streams::PRODGEN);
        self.firmgen.seed = stream_seed(self.seed, streams::FIRMGEN);
        self.scenario.seed = stream_seed(self.seed, streams::ARIOSIM);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed must be at most {} (got {})", i64::MAX, self.seed)));
        }
        self.prodgen.validate()?;
        self.firmgen.validate(self.prodgen.n_inner_tiers)?;
        self.scenario.validate()?;
        self.train.validate()?;
        let e = &self.eval;
        let fracs_ok = e.train_frac > 0.0 && e.val_frac >= 0.0 && e.train_frac + e.val_frac < 1.0;
        if !fracs_ok {
            return Err(Error::Config(format!(
                "need train_frac > 0, val_frac >= 0 and train_frac + val_frac < 1 (got {} and {})",
                e.train_frac, e.val_frac
            )));
        }
        Ok(())
    }

    pub fn stream(&self, label: &str) -> u64 {
        stream_seed(self.seed, label)
    }
}

/// Resolved config plus the command and files behind one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut m: Manifest = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        m.config = RunConfig::from_toml(text)?;
        Ok(m)
    }
}

pub struct Generated {
    pub graph: ProductionGraph,
    pub layout: FirmLayout,
    pub sim: SimOutput,
    /// The simulated transactions, minus dropped firms in the missing scenario.
    pub dataset: Dataset,
    pub dropped: Vec<FirmId>,
}

pub fn generate(config: &RunConfig) -> Result<Generated> {
    config.validate()?;
    let graph = build_production_graph(&config.prodgen)?;
    let layout = generate_firms(&graph, &config.firmgen)?;
    let sim = run(&graph, &layout, &config.scenario)?;
    let (dataset, dropped) = if config.scenario.missing_frac > 0.0 {
        let mut rng = rng_from_seed(config.stream(streams::MISSING));
        drop_firms(&sim.dataset, config.scenario.missing_frac, &mut rng)
    } else {
        (sim.dataset.clone(), Vec::new())
    };
    log::info!(
        "generated {} transactions over {} timesteps, {} transacting firms",
        dataset.len(),
        dataset.active_timesteps(),
        dataset.active_firms()
    );
    Ok(Generated {
        graph,
        layout,
        sim,
        dataset,
        dropped,
    })
}

pub fn split(dataset: &Dataset, config: &EvalConfig) -> Result<Dataset> {
    chrono_split(dataset, config.train_frac, config.val_frac)
}

/// MAP against `truth` for the learned weights (when given) and the
/// correlation, PMI and random baselines fitted on `train`.
pub fn production_function_results(
    truth: &ProductionGraph,
    train: &[Transaction],
    alpha: Option<&Alpha>,
    config: &RunConfig,
) -> Result<Vec<(String, PfReport)>> {
    let m = truth.n_products();
    let mut out = Vec::new();
    if let Some(a) = alpha {
        if a.m() != m {
            return Err(Error::Config(format!("weights cover {} products, ground truth has {m}", a.m())));
        }
        let ranked = |p| rank_parts(a, p).into_iter().map(|(q, _)| q).collect();
        out.push(("inventory".to_string(), evaluate_production_functions(truth, ranked)));
    }
    if !train.is_empty() {
        if let Some(p) = train.iter().map(|tx| tx.product).max() {
            if p as usize >= m {
                return Err(Error::Config(format!("transactions mention product {p}, ground truth has {m}")));
            }
        }
        let corr = temporal_correlation_scores(train, m)?;
        out.push(("temporal-correlation".into(), evaluate_production_functions(truth, |p| corr.rank_parts(p))));
        let pmi = pmi_scores(train, m);
        out.push(("pmi".into(), evaluate_production_functions(truth, |p| pmi.rank_parts(p))));
    }
    let random = random_ranking(m, config.stream(streams::RANDOM_BASELINE))?;
    out.push(("random".into(), evaluate_production_functions(truth, |p| random.rank_parts(p))));
    Ok(out)
}

/// Inventory states just before each positive's timestep, built by
/// replaying all observed transactions with earlier timesteps.
fn states_at(dataset: &Dataset, alpha: &Alpha, times: &[u32]) -> BTreeMap<u32, InventoryState> {
    let mut wanted: Vec<u32> = times.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    let mut out = BTreeMap::new();
    let mut state = InventoryState::new(dataset.n_firms, alpha.m());
    let mut batches = by_timestep(&dataset.transactions).peekable();
    for t in wanted {
        while let Some(&(ts, batch)) = batches.peek() {
            if ts >= t {
                break;
            }
            state.advance(ts, batch, alpha);
            batches.next();
        }
        let mut snapshot = state.clone();
        snapshot.t = t;
        out.insert(t, snapshot);
    }
    out
}

/// MRR and RMSE of Edgebank (binary and count), a uniform random scorer and,
/// with `alpha` and `apply_penalties`, Edgebank with inventory penalties and
/// caps. `dataset` must carry a split.
pub fn link_prediction_results(dataset: &Dataset, alpha: Option<&Alpha>, config: &RunConfig) -> Result<Vec<LinkReport>> {
    let train = dataset.train();
    let positives = match config.eval.split {
        EvalSplit::Val => dataset.val(),
        EvalSplit::Test => dataset.test(),
    };
    if train.is_empty() || positives.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let index = TrainIndex::new(train);
    let sets = sample_all_negatives(dataset, positives, &index, config.stream(streams::NEGATIVES))?;
    let scaler = AmountScaler::fit(train)?;
    let bank = EdgebankIndex::with_amounts(train, &scaler)?;
    let truth: Vec<f64> = positives.iter().map(|tx| scaler.scale(tx.amount)).collect::<Result<_>>()?;
    let predicted: Vec<f64> = positives.iter().map(|tx| bank.predict_scaled_amount(&tx.triplet())).collect();
    let bank_rmse = rmse(&predicted, &truth)?;

    let mut reports = Vec::new();
    for (name, mode) in [("edgebank-binary", EdgebankMode::Binary), ("edgebank-count", EdgebankMode::Count)] {
        let scored = score_sets(&sets, |t| bank.score(t, mode));
        reports.push(LinkReport {
            name: name.into(),
            positives: sets.len(),
            mrr: mrr(scored.iter().map(|(p, n)| (*p, n.as_slice()))),
            rmse: Some(bank_rmse),
        });
    }

    let mut rng = rng_from_seed(config.stream(streams::RANDOM_SCORER));
    let random: Vec<(f64, Vec<f64>)> = sets
        .iter()
        .map(|s| (rng.random::<f64>(), s.negatives.iter().map(|_| rng.random::<f64>()).collect()))
        .collect();
    reports.push(LinkReport {
        name: "random".into(),
        positives: sets.len(),
        mrr: mrr(random.iter().map(|(p, n)| (*p, n.as_slice()))),
        rmse: None,
    });

    if let (Some(alpha), true) = (alpha, config.eval.apply_penalties) {
        if alpha.m() != dataset.n_products {
            return Err(Error::Config(format!(
                "weights cover {} products, dataset has {}",
                alpha.m(),
                dataset.n_products
            )));
        }
        let times: Vec<u32> = positives.iter().map(|tx| tx.t).collect();
        let states = states_at(dataset, alpha, &times);
        for (name, mode) in [("edgebank-binary+inv", EdgebankMode::Binary), ("edgebank-count+inv", EdgebankMode::Count)] {
            let mut scored = Vec::with_capacity(sets.len());
            let mut capped = Vec::with_capacity(sets.len());
            for (set, pred) in sets.iter().zip(&predicted) {
                let state = &states[&set.positive.t];
                let pos = set.positive;
                let mut cands: Vec<Candidate> = std::iter::once((pos.triplet(), Some(*pred)))
                    .chain(set.negatives.iter().map(|n| (n.triplet, None)))
                    .map(|(t, amount)| Candidate {
                        supplier: t.supplier,
                        buyer: t.buyer,
                        product: t.product,
                        t: pos.t,
                        score: bank.score(&t, mode),
                        amount,
                    })
                    .collect();
                adjust_scores(&mut cands, alpha, state, |a| scaler.scale(a))?;
                capped.push(cands[0].amount.unwrap_or(*pred));
                scored.push((cands[0].score, cands[1..].iter().map(|c| c.score).collect::<Vec<f64>>()));
            }
            reports.push(LinkReport {
                name: name.into(),
                positives: sets.len(),
                mrr: mrr(scored.iter().map(|(p, n)| (*p, n.as_slice()))),
                rmse: Some(rmse(&capped, &truth)?),
            });
        }
    }
    Ok(reports)
}

fn score_sets(sets: &[NegativeSet], score: impl Fn(&crate::dataset::Triplet) -> f64) -> Vec<(f64, Vec<f64>)> {
    sets.iter()
        .map(|s| (score(&s.positive.triplet()), s.negatives.iter().map(|n| score(&n.triplet)).collect()))
        .collect()
}
