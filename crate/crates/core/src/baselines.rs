//! Non-neural references: part scoring by lagged correlation, PMI or chance,
//! and Edgebank scorers for link existence.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::distr::Open01;
use rand::Rng;

use crate::dataset::{FirmId, ProductId, Transaction, Triplet};
use crate::error::{Error, Result};
use crate::eval::{rank_by_score, AmountScaler};
use crate::rng::rng_from_seed;

/// Supply series may lag the buy series by up to this many timesteps.
pub const MAX_LAG: usize = 7;

/// Dense `score(part, product)` over all ordered pairs of distinct products.
#[derive(Clone, Debug, PartialEq)]
pub struct PairScoreTable {
    m: usize,
    /// `scores[part * m + product]`; the diagonal is unused and stays 0.
    scores: Vec<f64>,
}

impl PairScoreTable {
    pub fn zeros(m: usize) -> Self {
        PairScoreTable { m, scores: vec![0.0; m * m] }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, part: ProductId, product: ProductId) -> f64 {
        self.scores[part as usize * self.m + product as usize]
    }

    pub fn set(&mut self, part: ProductId, product: ProductId, score: f64) {
        self.scores[part as usize * self.m + product as usize] = score;
    }

    /// Candidate parts of `product`, best first, ties by ascending id.
    pub fn rank_parts(&self, product: ProductId) -> Vec<ProductId> {
        rank_by_score(self.m, product, |q| self.get(q, product))
    }

    /// `part,product,score` rows, one per ordered pair of distinct products.
    pub fn to_text(&self) -> String {
        let mut s = String::from("part,product,score\n");
        for part in 0..self.m as ProductId {
            for product in (0..self.m as ProductId).filter(|&p| p != part) {
                let _ = writeln!(s, "{part},{product},{}", self.get(part, product));
            }
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Per-firm, per-timestep amounts bought and supplied, indexed from the
/// first train timestep.
struct FirmSeries {
    bought: HashMap<(FirmId, ProductId), Vec<f64>>,
    supplied: HashMap<(FirmId, ProductId), Vec<f64>>,
}

impl FirmSeries {
    fn new(train: &[Transaction]) -> Self {
        let t0 = train.iter().map(|tx| tx.t).min().unwrap_or(0);
        let len = train.iter().map(|tx| tx.t - t0 + 1).max().unwrap_or(0) as usize;
        let mut bought: HashMap<(FirmId, ProductId), Vec<f64>> = HashMap::new();
        let mut supplied: HashMap<(FirmId, ProductId), Vec<f64>> = HashMap::new();
        for tx in train {
            let i = (tx.t - t0) as usize;
            supplied.entry((tx.supplier, tx.product)).or_insert_with(|| vec![0.0; len])[i] += tx.amount;
            if let Some(b) = tx.buyer.firm() {
                bought.entry((b, tx.product)).or_insert_with(|| vec![0.0; len])[i] += tx.amount;
            }
        }
        FirmSeries { bought, supplied }
    }

    fn products_of(map: &HashMap<(FirmId, ProductId), Vec<f64>>) -> HashMap<FirmId, Vec<ProductId>> {
        let mut out: HashMap<FirmId, Vec<ProductId>> = HashMap::new();
        for &(f, p) in map.keys() {
            out.entry(f).or_default().push(p);
        }
        out.values_mut().for_each(|v| v.sort_unstable());
        out
    }
}

/// Pearson correlation; 0 when either side has zero variance or fewer
/// than two points.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Best correlation of `supply[t + lag]` against `buy[t]` over lags
/// `0..=MAX_LAG`.
pub fn max_lagged_correlation(buy: &[f64], supply: &[f64]) -> f64 {
    (0..=MAX_LAG.min(buy.len().saturating_sub(1)))
        .map(|lag| pearson(&buy[..buy.len() - lag], &supply[lag..]))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Mean over firms that buy `part` and supply `product` of their best lagged
/// correlation; pairs without such a firm score 0.
pub fn temporal_correlation_scores(train: &[Transaction], m: usize) -> Result<PairScoreTable> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let series = FirmSeries::new(train);
    let buys = FirmSeries::products_of(&series.bought);
    let sells = FirmSeries::products_of(&series.supplied);
    let mut sum = vec![0.0; m * m];
    let mut count = vec![0u32; m * m];
    for (firm, parts) in &buys {
        let Some(products) = sells.get(firm) else { continue };
        for &part in parts {
            let b = &series.bought[&(*firm, part)];
            for &product in products.iter().filter(|&&p| p != part) {
                let s = &series.supplied[&(*firm, product)];
                let k = part as usize * m + product as usize;
                sum[k] += max_lagged_correlation(b, s);
                count[k] += 1;
            }
        }
    }
    let scores = sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / f64::from(c) } else { 0.0 }).collect();
    Ok(PairScoreTable { m, scores })
}

/// `log P(buy part, supply product) / (P(buy part) P(supply product))` with
/// probabilities taken over the firms present in `train`. Pairs with a zero
/// count get one less than the smallest finite score.
pub fn pmi_scores(train: &[Transaction], m: usize) -> PairScoreTable {
    let mut firms: BTreeSet<FirmId> = BTreeSet::new();
    let mut buys: BTreeSet<(FirmId, ProductId)> = BTreeSet::new();
    let mut sells: BTreeSet<(FirmId, ProductId)> = BTreeSet::new();
    for tx in train {
        firms.insert(tx.supplier);
        sells.insert((tx.supplier, tx.product));
        if let Some(b) = tx.buyer.firm() {
            firms.insert(b);
            buys.insert((b, tx.product));
        }
    }
    let n = firms.len() as f64;
    let mut n_buy = vec![0u32; m];
    let mut n_sell = vec![0u32; m];
    for &(_, p) in &buys {
        n_buy[p as usize] += 1;
    }
    for &(_, p) in &sells {
        n_sell[p as usize] += 1;
    }
    let mut joint = vec![0u32; m * m];
    for &firm in &firms {
        let bought: Vec<ProductId> = buys.range((firm, 0)..=(firm, ProductId::MAX)).map(|x| x.1).collect();
        for &(_, product) in sells.range((firm, 0)..=(firm, ProductId::MAX)) {
            for &part in &bought {
                joint[part as usize * m + product as usize] += 1;
            }
        }
    }
    let mut scores = vec![f64::NEG_INFINITY; m * m];
    for part in 0..m {
        for product in (0..m).filter(|&p| p != part) {
            let j = joint[part * m + product];
            if j > 0 {
                let pj = f64::from(j) / n;
                let pb = f64::from(n_buy[part]) / n;
                let ps = f64::from(n_sell[product]) / n;
                scores[part * m + product] = (pj / (pb * ps)).ln();
            }
        }
    }
    let floor = scores.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let sentinel = if floor.is_finite() { floor - 1.0 } else { -1.0 };
    for (k, v) in scores.iter_mut().enumerate() {
        if k / m == k % m {
            *v = 0.0;
        } else if !v.is_finite() {
            *v = sentinel;
        }
    }
    PairScoreTable { m, scores }
}

/// Uniform(0, 1) scores, one per ordered pair, in row-major pair order.
pub fn random_ranking(m: usize, seed: u64) -> Result<PairScoreTable> {
    if m < 2 {
        return Err(Error::Config(format!("random ranking needs at least 2 products, got {m}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut table = PairScoreTable::zeros(m);
    for part in 0..m as ProductId {
        for product in (0..m as ProductId).filter(|&p| p != part) {
            table.set(part, product, rng.sample(Open01));
        }
    }
    Ok(table)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgebankMode {
    Binary,
    Count,
}

impl std::str::FromStr for EdgebankMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(EdgebankMode::Binary),
            "count" => Ok(EdgebankMode::Count),
            _ => Err(Error::Config(format!("unknown edgebank mode '{s}'"))),
        }
    }
}

/// Train occurrence counts and summed scaled amounts per triplet.
#[derive(Clone, Debug, Default)]
pub struct EdgebankIndex {
    entries: HashMap<Triplet, (u64, f64)>,
}

impl EdgebankIndex {
    /// Counts only; amount predictions are 0 for every triplet.
    pub fn new(train: &[Transaction]) -> Self {
        let mut entries: HashMap<Triplet, (u64, f64)> = HashMap::new();
        for tx in train {
            entries.entry(tx.triplet()).or_default().0 += 1;
        }
        EdgebankIndex { entries }
    }

    /// Counts plus mean scaled train amount per triplet.
    pub fn with_amounts(train: &[Transaction], scaler: &AmountScaler) -> Result<Self> {
        let mut entries: HashMap<Triplet, (u64, f64)> = HashMap::new();
        for tx in train {
            let e = entries.entry(tx.triplet()).or_default();
            e.0 += 1;
            e.1 += scaler.scale(tx.amount)?;
        }
        Ok(EdgebankIndex { entries })
    }

    pub fn count(&self, t: &Triplet) -> u64 {
        self.entries.get(t).map_or(0, |e| e.0)
    }

    pub fn score(&self, t: &Triplet, mode: EdgebankMode) -> f64 {
        let c = self.count(t);
        match mode {
            EdgebankMode::Binary => f64::from(u8::from(c > 0)),
            EdgebankMode::Count => c as f64,
        }
    }

    /// Mean scaled train amount of the triplet, 0 when unseen.
    pub fn predict_scaled_amount(&self, t: &Triplet) -> f64 {
        self.entries.get(t).map_or(0.0, |&(c, s)| s / c as f64)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
