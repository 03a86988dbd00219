//! Metrics: production-function MAP, negative sampling and MRR for link
//! existence, amount scaling and RMSE for link weight.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::dataset::{by_timestep, Buyer, Dataset, FirmId, ProductId, Transaction, Triplet};
use crate::error::{Error, Result};
use crate::prodgen::ProductionGraph;
use crate::rng::{rng_from_seed, splitmix64, SimRng};

pub const PERTURBATIONS_PER_KIND: usize = 3;
pub const HISTORICAL_NEGATIVES: usize = 9;
pub const NEGATIVES: usize = 3 * PERTURBATIONS_PER_KIND + HISTORICAL_NEGATIVES;
const MAX_ATTEMPTS: usize = 100;

/// Fraction of the top `k` items that are relevant.
pub fn precision_at_k(ranking: &[ProductId], relevant: &BTreeSet<ProductId>, k: usize) -> f64 {
    assert!(k >= 1 && k <= ranking.len(), "k = {k} outside 1..={}", ranking.len());
    ranking[..k].iter().filter(|p| relevant.contains(p)).count() as f64 / k as f64
}

/// `(1/|P|) sum_k Pr@k * [item k relevant]`; `None` when nothing is relevant.
pub fn average_precision(ranking: &[ProductId], relevant: &BTreeSet<ProductId>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (i, p) in ranking.iter().enumerate() {
        if relevant.contains(p) {
            hits += 1;
            total += hits as f64 / (i + 1) as f64;
        }
    }
    Some(total / relevant.len() as f64)
}

/// Candidates other than `p`, by descending score then ascending id.
pub fn rank_by_score(m: usize, p: ProductId, score: impl Fn(ProductId) -> f64) -> Vec<ProductId> {
    let mut scored: Vec<(ProductId, f64)> = (0..m as ProductId).filter(|&q| q != p).map(|q| (q, score(q))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(q, _)| q).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PfReport {
    /// AP per product that has ground-truth parts.
    pub per_product: BTreeMap<ProductId, f64>,
    pub map: f64,
}

/// MAP of `rank(p)` against the parts of every product that has parts.
pub fn evaluate_production_functions(graph: &ProductionGraph, rank: impl Fn(ProductId) -> Vec<ProductId>) -> PfReport {
    let mut per_product = BTreeMap::new();
    for p in 0..graph.n_products() as ProductId {
        let relevant: BTreeSet<ProductId> = graph.parts(p).iter().map(|&(q, _)| q).collect();
        if let Some(ap) = average_precision(&rank(p), &relevant) {
            per_product.insert(p, ap);
        }
    }
    let map = if per_product.is_empty() {
        0.0
    } else {
        per_product.values().sum::<f64>() / per_product.len() as f64
    };
    PfReport { per_product, map }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NegativeKind {
    Supplier,
    Buyer,
    Product,
    Historical,
}

const PERTURB: [NegativeKind; 3] = [NegativeKind::Supplier, NegativeKind::Buyer, NegativeKind::Product];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Negative {
    pub triplet: Triplet,
    pub kind: NegativeKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NegativeSet {
    pub positive: Transaction,
    pub negatives: Vec<Negative>,
}

/// Train-split lookups for negative sampling.
#[derive(Clone, Debug)]
pub struct TrainIndex {
    suppliers: Vec<FirmId>,
    buyers: Vec<Buyer>,
    products: Vec<ProductId>,
    triplets: Vec<Triplet>,
    counts: Vec<u64>,
    historical: Option<WeightedIndex<u64>>,
}

impl TrainIndex {
    pub fn new(train: &[Transaction]) -> Self {
        let mut counts: BTreeMap<Triplet, u64> = BTreeMap::new();
        for tx in train {
            *counts.entry(tx.triplet()).or_default() += 1;
        }
        let suppliers: BTreeSet<FirmId> = train.iter().map(|tx| tx.supplier).collect();
        let buyers: BTreeSet<Buyer> = train.iter().map(|tx| tx.buyer).collect();
        let products: BTreeSet<ProductId> = train.iter().map(|tx| tx.product).collect();
        let (triplets, counts): (Vec<Triplet>, Vec<u64>) = counts.into_iter().unzip();
        let historical = WeightedIndex::new(&counts).ok();
        TrainIndex {
            suppliers: suppliers.into_iter().collect(),
            buyers: buyers.into_iter().collect(),
            products: products.into_iter().collect(),
            triplets,
            counts,
            historical,
        }
    }

    /// Train occurrence count of a triplet.
    pub fn count(&self, t: &Triplet) -> u64 {
        self.triplets.binary_search(t).map_or(0, |i| self.counts[i])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (&Triplet, u64)> {
        self.triplets.iter().zip(self.counts.iter().copied())
    }

    fn draw(&self, kind: NegativeKind, positive: &Triplet, rng: &mut SimRng) -> Option<Triplet> {
        let pick = |len: usize, rng: &mut SimRng| (len > 0).then(|| rng.random_range(0..len));
        Some(match kind {
            NegativeKind::Supplier => Triplet {
                supplier: self.suppliers[pick(self.suppliers.len(), rng)?],
                ..*positive
            },
            NegativeKind::Buyer => Triplet {
                buyer: self.buyers[pick(self.buyers.len(), rng)?],
                ..*positive
            },
            NegativeKind::Product => Triplet {
                product: self.products[pick(self.products.len(), rng)?],
                ..*positive
            },
            NegativeKind::Historical => self.triplets[self.historical.as_ref()?.sample(rng)],
        })
    }
}

/// 3 supplier, 3 buyer and 3 product swaps plus 9 count-weighted historical
/// triplets, all distinct and none a true transaction at the positive's
/// timestep. A kind that fails 100 draws in a row falls back to the
/// perturbation kinds in turn.
pub fn sample_negatives(positive: &Transaction, index: &TrainIndex, true_at_t: &HashSet<Triplet>, rng: &mut SimRng) -> Result<NegativeSet> {
    let base = positive.triplet();
    let mut chosen: Vec<Negative> = Vec::with_capacity(NEGATIVES);
    let wanted = PERTURB
        .iter()
        .flat_map(|&k| std::iter::repeat_n(k, PERTURBATIONS_PER_KIND))
        .chain(std::iter::repeat_n(NegativeKind::Historical, HISTORICAL_NEGATIVES));
    for kind in wanted {
        let start = PERTURB.iter().position(|&k| k == kind).unwrap_or(0);
        let order = std::iter::once(kind).chain((0..3).map(|i| PERTURB[(start + i) % 3]).filter(|&k| k != kind));
        let mut found = None;
        'kinds: for k in order {
            for _ in 0..MAX_ATTEMPTS {
                let Some(t) = index.draw(k, &base, rng) else { break };
                let valid = t.buyer != Buyer::Firm(t.supplier) && !true_at_t.contains(&t) && chosen.iter().all(|n| n.triplet != t);
                if valid {
                    found = Some(Negative { triplet: t, kind: k });
                    break 'kinds;
                }
            }
        }
        chosen.push(found.ok_or_else(|| Error::Sampling(format!("no valid negative left for {base:?} at t={}", positive.t)))?);
    }
    Ok(NegativeSet {
        positive: *positive,
        negatives: chosen,
    })
}

/// Negative sets for `positives` (timestep-ordered), one RNG stream per
/// positive derived from `seed` and its position.
pub fn sample_all_negatives(dataset: &Dataset, positives: &[Transaction], index: &TrainIndex, seed: u64) -> Result<Vec<NegativeSet>> {
    let mut true_at: BTreeMap<u32, HashSet<Triplet>> = BTreeMap::new();
    for (t, txs) in by_timestep(&dataset.transactions) {
        true_at.insert(t, txs.iter().map(Transaction::triplet).collect());
    }
    let empty = HashSet::new();
    positives
        .iter()
        .enumerate()
        .map(|(i, pos)| {
            let mut rng = rng_from_seed(splitmix64(seed ^ splitmix64(i as u64)));
            sample_negatives(pos, index, true_at.get(&pos.t).unwrap_or(&empty), &mut rng)
        })
        .collect()
}

/// `1 / ((r_opt + r_pes)/2 + 1)` with `r_opt` the negatives scored strictly
/// above the positive and `r_pes` those scored at least as high.
pub fn reciprocal_rank(positive: f64, negatives: &[f64]) -> f64 {
    let above = negatives.iter().filter(|&&n| n > positive).count() as f64;
    let at_least = negatives.iter().filter(|&&n| n >= positive).count() as f64;
    1.0 / ((above + at_least) / 2.0 + 1.0)
}

/// Mean reciprocal rank over `(positive score, negative scores)` pairs.
pub fn mrr<'a>(scored: impl IntoIterator<Item = (f64, &'a [f64])>) -> f64 {
    let (sum, n) = scored
        .into_iter()
        .fold((0.0, 0usize), |(s, n), (p, negs)| (s + reciprocal_rank(p, negs), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Log-amount standardization fitted on the train split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmountScaler {
    pub mean: f64,
    pub std: f64,
}

impl AmountScaler {
    /// Population mean and std of `ln(amount)`.
    pub fn fit(train: &[Transaction]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(tx) = train.iter().find(|tx| tx.amount <= 0.0) {
            return Err(Error::Domain(format!("cannot log-scale amount {} at t={}", tx.amount, tx.t)));
        }
        let n = train.len() as f64;
        let mean = train.iter().map(|tx| tx.amount.ln()).sum::<f64>() / n;
        let var = train.iter().map(|tx| (tx.amount.ln() - mean).powi(2)).sum::<f64>() / n;
        Ok(AmountScaler { mean, std: var.sqrt() })
    }

    pub fn scale(&self, amount: f64) -> Result<f64> {
        if amount.is_nan() || amount <= 0.0 {
            return Err(Error::Domain(format!("cannot log-scale amount {amount}")));
        }
        Ok(if self.std > 0.0 { (amount.ln() - self.mean) / self.std } else { 0.0 })
    }

    pub fn unscale(&self, scaled: f64) -> f64 {
        (scaled * self.std + self.mean).exp()
    }
}

pub fn rmse(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::Domain(format!(
            "rmse needs equal non-empty inputs, got {} and {}",
            predicted.len(),
            truth.len()
        )));
    }
    let mse = predicted.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / predicted.len() as f64;
    Ok(mse.sqrt())
}

/// Link-prediction results for one scorer on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkReport {
    pub name: String,
    pub positives: usize,
    pub mrr: f64,
    pub rmse: Option<f64>,
}

/// MAP table: one row per method, then per-product APs in columns.
pub fn pf_report_text(results: &[(String, PfReport)]) -> String {
    let mut s = String::from("# production-function learning\nmethod,map\n");
    for (name, r) in results {
        let _ = writeln!(s, "{name},{:.6}", r.map);
    }
    s.push_str("\n# per-product average precision\nproduct");
    for (name, _) in results {
        let _ = write!(s, ",{name}");
    }
    s.push('\n');
    if let Some((_, first)) = results.first() {
        for p in first.per_product.keys() {
            let _ = write!(s, "{p}");
            for (_, r) in results {
                let _ = write!(s, ",{:.6}", r.per_product.get(p).copied().unwrap_or(f64::NAN));
            }
            s.push('\n');
        }
    }
    s
}

pub fn link_report_text(split: &str, reports: &[LinkReport]) -> String {
    let mut s = format!("# link prediction on the {split} split\nmethod,positives,mrr,rmse\n");
    for r in reports {
        let rmse = r.rmse.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(s, "{},{},{:.6},{rmse}", r.name, r.positives, r.mrr);
    }
    s
}
