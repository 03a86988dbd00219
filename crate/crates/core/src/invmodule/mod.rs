//! Inventory module: per-firm inventories driven by observed purchases and
//! by consumption inferred through attention weights `alpha[p][p']`, the
//! learned amount of `p'` used to make one unit of `p`.

mod train;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use train::{train_inventory, EpochRecord, TrainLog};

use crate::dataset::{Buyer, FirmId, ProductId, Transaction};
use crate::error::{Error, Result};
use crate::prodgen::ProductionGraph;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    #[default]
    Direct,
    Bilinear,
}

impl FromStr for AttentionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "direct" => Ok(AttentionMode::Direct),
            "bilinear" => Ok(AttentionMode::Bilinear),
            _ => Err(format!("unknown mode {s:?} (expected direct or bilinear)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Inventory at `t` is a constant inside the loss at `t`.
    #[default]
    OneStep,
    /// Carries `d x / d alpha` through the clamped inventory recursion.
    FullUnroll,
}

impl FromStr for GradientMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "one-step" => Ok(GradientMode::OneStep),
            "full-unroll" => Ok(GradientMode::FullUnroll),
            _ => Err(format!("unknown gradient mode {s:?} (expected one-step or full-unroll)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InvTrainConfig {
    pub mode: AttentionMode,
    pub gradient_mode: GradientMode,
    pub lambda_debt: f64,
    pub lambda_cons: f64,
    pub lambda_l2: f64,
    pub learning_rate: f64,
    pub epochs: u32,
    pub patience: u32,
    /// Initial value of every direct-mode weight and every bilinear adjustment.
    pub init: f64,
}

impl Default for InvTrainConfig {
    fn default() -> Self {
        InvTrainConfig {
            mode: AttentionMode::Direct,
            gradient_mode: GradientMode::OneStep,
            lambda_debt: 5.0,
            lambda_cons: 4.0,
            lambda_l2: 4.0,
            learning_rate: 0.001,
            epochs: 100,
            patience: 10,
            init: 0.1,
        }
    }
}

impl InvTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if ![self.lambda_debt, self.lambda_cons, self.lambda_l2].iter().all(|l| l.is_finite() && *l >= 0.0) {
            return bad("lambda_debt, lambda_cons and lambda_l2 must be finite and >= 0");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !self.init.is_finite() {
            return bad("init must be finite");
        }
        if self.lambda_debt <= self.lambda_cons {
            log::warn!(
                "lambda_debt ({}) <= lambda_cons ({}): consumption is rewarded at least as much as debt is penalized",
                self.lambda_debt,
                self.lambda_cons
            );
        }
        Ok(())
    }
}

/// Dense non-negative `m x m` matrix, `get(p, part)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Alpha {
    m: usize,
    data: Vec<f64>,
}

impl Alpha {
    pub fn zeros(m: usize) -> Self {
        Alpha { m, data: vec![0.0; m * m] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Config("alpha matrix must be square".into()));
        }
        if rows.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("alpha entries must be finite and >= 0".into()));
        }
        Ok(Alpha {
            m,
            data: rows.concat(),
        })
    }

    /// Ground-truth weights: the unit requirements of the production graph.
    pub fn from_units(graph: &ProductionGraph) -> Self {
        Alpha::from_rows(&graph.unit_matrix()).expect("unit matrix is square and non-negative")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, p: ProductId, part: ProductId) -> f64 {
        self.data[p as usize * self.m + part as usize]
    }

    pub fn row(&self, p: ProductId) -> &[f64] {
        let i = p as usize * self.m;
        &self.data[i..i + self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// One header line then `m` lines of `m` space-separated values.
    pub fn to_text(&self) -> String {
        let mut s = format!("# alpha {}\n", self.m);
        for p in 0..self.m as ProductId {
            let row: Vec<String> = self.row(p).iter().map(f64::to_string).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .enumerate()
            .map(|(i, l)| {
                l.split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| format!("row {}: bad value {v:?}", i + 1)))
                    .collect()
            })
            .collect::<std::result::Result<_, _>>()?;
        Alpha::from_rows(&rows).map_err(|e| e.to_string())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Alpha::from_text(&text).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg,
        })
    }
}

/// Per-product embeddings for the bilinear mode, one row per product.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl Embeddings {
    /// Lines `product_id v1 v2 ...`, comma- or whitespace-delimited; `#`
    /// comments and blank lines are skipped. Every product `0..m` must appear
    /// exactly once.
    pub fn from_text(text: &str, m: usize) -> std::result::Result<Self, String> {
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; m];
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| format!("line {}: {msg}", i + 1);
            let mut fields = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty());
            let id: usize = fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| err("bad product id"))?;
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<_>>()
                .ok_or_else(|| err("bad embedding value"))?;
            if values.is_empty() || *dim.get_or_insert(values.len()) != values.len() {
                return Err(err("inconsistent embedding dimension"));
            }
            let slot = rows.get_mut(id).ok_or_else(|| err("product id out of range"))?;
            if slot.replace(values).is_some() {
                return Err(err("duplicate product id"));
            }
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(p, r)| r.ok_or_else(|| format!("no embedding for product {p}")))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Embeddings {
            dim: dim.unwrap_or(0),
            rows,
        })
    }

    pub fn read(path: impl AsRef<Path>, m: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Embeddings::from_text(&text, m).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg,
        })
    }
}

/// Trainable parameters. Direct: `alpha = relu(w)`. Bilinear:
/// `alpha[p][q] = relu(z_p . w_att z_q + nu[p][q])`.
#[derive(Clone, Debug, PartialEq)]
pub enum AttentionWeights {
    Direct { m: usize, w: Vec<f64> },
    Bilinear { m: usize, emb: Embeddings, w_att: Vec<f64>, nu: Vec<f64> },
}

impl AttentionWeights {
    pub fn direct(m: usize, init: f64) -> Self {
        AttentionWeights::Direct { m, w: vec![init; m * m] }
    }

    /// `w_att = 0` and `nu = init`, so the initial alpha equals the direct one.
    pub fn bilinear(emb: Embeddings, init: f64) -> Self {
        let m = emb.rows.len();
        let d = emb.dim;
        AttentionWeights::Bilinear {
            m,
            emb,
            w_att: vec![0.0; d * d],
            nu: vec![init; m * m],
        }
    }

    pub fn m(&self) -> usize {
        match self {
            AttentionWeights::Direct { m, .. } | AttentionWeights::Bilinear { m, .. } => *m,
        }
    }

    fn pre_activation(&self) -> Vec<f64> {
        match self {
            AttentionWeights::Direct { w, .. } => w.clone(),
            AttentionWeights::Bilinear { m, emb, w_att, nu } => {
                let d = emb.dim;
                // zw[p] = z_p^T W
                let zw: Vec<Vec<f64>> = emb
                    .rows
                    .iter()
                    .map(|z| (0..d).map(|b| (0..d).map(|a| z[a] * w_att[a * d + b]).sum()).collect())
                    .collect();
                let mut out = nu.clone();
                for p in 0..*m {
                    for q in 0..*m {
                        out[p * m + q] += zw[p].iter().zip(&emb.rows[q]).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                out
            }
        }
    }

    pub fn alpha(&self) -> Alpha {
        Alpha {
            m: self.m(),
            data: self.pre_activation().into_iter().map(|v| v.max(0.0)).collect(),
        }
    }

    /// Frobenius norm of the adjustments; 0 in direct mode.
    pub fn nu_norm(&self) -> f64 {
        match self {
            AttentionWeights::Direct { .. } => 0.0,
            AttentionWeights::Bilinear { nu, .. } => nu.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// Flat parameter vector: `w`, or `w_att` followed by `nu`.
    pub fn params(&self) -> Vec<f64> {
        match self {
            AttentionWeights::Direct { w, .. } => w.clone(),
            AttentionWeights::Bilinear { w_att, nu, .. } => [w_att.as_slice(), nu.as_slice()].concat(),
        }
    }

    pub fn set_params(&mut self, values: &[f64]) {
        match self {
            AttentionWeights::Direct { w, .. } => w.copy_from_slice(values),
            AttentionWeights::Bilinear { w_att, nu, .. } => {
                let k = w_att.len();
                w_att.copy_from_slice(&values[..k]);
                nu.copy_from_slice(&values[k..]);
            }
        }
    }

    /// Chains `d loss / d alpha` (plus the L2 term on `nu`) to the parameters.
    pub fn param_gradient(&self, grad_alpha: &[f64], lambda_l2: f64) -> Vec<f64> {
        let pre = self.pre_activation();
        let masked: Vec<f64> = grad_alpha.iter().zip(&pre).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }).collect();
        match self {
            AttentionWeights::Direct { .. } => masked,
            AttentionWeights::Bilinear { m, emb, nu, .. } => {
                let d = emb.dim;
                let z = &emb.rows;
                // dW[a][b] = sum_pq z_p[a] D[p][q] z_q[b]
                let mut dz = vec![vec![0.0; d]; *m];
                for p in 0..*m {
                    for q in 0..*m {
                        let g = masked[p * m + q];
                        if g != 0.0 {
                            for b in 0..d {
                                dz[p][b] += g * z[q][b];
                            }
                        }
                    }
                }
                let mut dw = vec![0.0; d * d];
                for p in 0..*m {
                    for a in 0..d {
                        for b in 0..d {
                            dw[a * d + b] += z[p][a] * dz[p][b];
                        }
                    }
                }
                let norm = self.nu_norm();
                let dnu = masked
                    .iter()
                    .zip(nu)
                    .map(|(g, v)| if norm > 0.0 { g + lambda_l2 * v / norm } else { *g });
                dw.into_iter().chain(dnu).collect()
            }
        }
    }
}

/// `x[i][p]` before the transactions of timestep `t` are applied.
#[derive(Clone, Debug, PartialEq)]
pub struct InventoryState {
    pub x: Vec<Vec<f64>>,
    pub t: u32,
}

impl InventoryState {
    pub fn new(n_firms: usize, n_products: usize) -> Self {
        InventoryState {
            x: vec![vec![0.0; n_products]; n_firms],
            t: 0,
        }
    }

    /// Applies the transactions of one timestep `t >= self.t` and moves to `t + 1`.
    pub fn advance(&mut self, t: u32, txs: &[Transaction], alpha: &Alpha) {
        debug_assert!(txs.iter().all(|tx| tx.t == t));
        let m = alpha.m();
        for firm in touched_firms(txs) {
            let b = buy_totals(txs, firm, m);
            let c = consumption_totals(txs, alpha, firm);
            let x = &mut self.x[firm as usize];
            *x = update_inventory(x, &b, &c);
        }
        self.t = t + 1;
    }

    /// Inventory just before timestep `t`, replaying every transaction with
    /// timestep `< t` from empty stocks.
    pub fn replay(transactions: &[Transaction], alpha: &Alpha, n_firms: usize, t: u32) -> Self {
        let mut state = InventoryState::new(n_firms, alpha.m());
        for (ts, batch) in crate::dataset::by_timestep(transactions) {
            if ts >= t {
                break;
            }
            state.advance(ts, batch, alpha);
        }
        state.t = t;
        state
    }
}

fn touched_firms(txs: &[Transaction]) -> Vec<FirmId> {
    let mut firms: Vec<FirmId> = txs.iter().flat_map(|tx| [Some(tx.supplier), tx.buyer.firm()]).flatten().collect();
    firms.sort_unstable();
    firms.dedup();
    firms
}

/// `b[p]`: total amount of `p` firm `i` bought in `txs`.
pub fn buy_totals(txs: &[Transaction], firm: FirmId, m: usize) -> Vec<f64> {
    let mut b = vec![0.0; m];
    for tx in txs.iter().filter(|tx| tx.buyer == Buyer::Firm(firm)) {
        b[tx.product as usize] += tx.amount;
    }
    b
}

/// `c[p] = sum over i's sales of p_s: alpha[p_s][p] * amount`.
pub fn consumption_totals(txs: &[Transaction], alpha: &Alpha, firm: FirmId) -> Vec<f64> {
    let mut c = vec![0.0; alpha.m()];
    for tx in txs.iter().filter(|tx| tx.supplier == firm) {
        for (cp, a) in c.iter_mut().zip(alpha.row(tx.product)) {
            *cp += a * tx.amount;
        }
    }
    c
}

/// `max(0, x + b - c)` elementwise.
pub fn update_inventory(x: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    x.iter().zip(b).zip(c).map(|((x, b), c)| (x + b - c).max(0.0)).collect()
}

/// Inventory loss of one timestep:
/// `(1/n) sum_i [l_debt sum_p max(0, c - x) - l_cons sum_p c] + l_l2 ||nu||`.
pub fn inventory_loss_step(state: &InventoryState, txs: &[Transaction], weights: &AttentionWeights, config: &InvTrainConfig) -> f64 {
    let alpha = weights.alpha();
    let n = state.x.len() as f64;
    let mut sellers: Vec<FirmId> = txs.iter().map(|tx| tx.supplier).collect();
    sellers.sort_unstable();
    sellers.dedup();
    let mut total = 0.0;
    for firm in sellers {
        let c = consumption_totals(txs, &alpha, firm);
        let x = &state.x[firm as usize];
        let debt: f64 = c.iter().zip(x).map(|(c, x)| (c - x).max(0.0)).sum();
        let cons: f64 = c.iter().sum();
        total += config.lambda_debt * debt - config.lambda_cons * cons;
    }
    total / n + config.lambda_l2 * weights.nu_norm()
}

/// Subgradient of `inventory_loss_step` with respect to the flat parameters
/// (`AttentionWeights::params`), inventory held constant. Kinks get 0.
pub fn one_step_gradient(state: &InventoryState, txs: &[Transaction], weights: &AttentionWeights, config: &InvTrainConfig) -> Vec<f64> {
    let alpha = weights.alpha();
    let m = alpha.m();
    let batch = train::StepBatch::new(txs);
    let mut grad = vec![0.0; m * m];
    batch.loss_and_grad(&alpha, &state.x, None, state.x.len(), config, &mut grad);
    weights.param_gradient(&grad, config.lambda_l2)
}

/// Candidate parts of `p`, highest weight first, ties by ascending id; `p`
/// itself is excluded.
pub fn rank_parts(alpha: &Alpha, p: ProductId) -> Vec<(ProductId, f64)> {
    let mut out: Vec<(ProductId, f64)> = alpha
        .row(p)
        .iter()
        .enumerate()
        .filter(|&(q, _)| q as ProductId != p)
        .map(|(q, &w)| (q as ProductId, w))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

fn check_time(state: &InventoryState, t: u32) -> Result<()> {
    if state.t == t {
        Ok(())
    } else {
        Err(Error::Contract(format!("inventory reflects timestep {}, asked about {t}", state.t)))
    }
}

/// `-sum_p' max(0, alpha[p][p'] - x_s[p'])`: how far supplier `s` is from
/// holding the parts for one unit of `p` at `t`.
pub fn penalty(state: &InventoryState, alpha: &Alpha, supplier: FirmId, product: ProductId, t: u32) -> Result<f64> {
    check_time(state, t)?;
    let x = &state.x[supplier as usize];
    Ok(-alpha.row(product).iter().zip(x).map(|(a, x)| (a - x).max(0.0)).sum::<f64>())
}

/// `min over alpha[p][p'] > 0 of x_s[p'] / alpha[p][p']`; `None` when the
/// row has no positive entry (no cap).
pub fn cap(state: &InventoryState, alpha: &Alpha, supplier: FirmId, product: ProductId, t: u32) -> Result<Option<f64>> {
    check_time(state, t)?;
    let x = &state.x[supplier as usize];
    Ok(alpha
        .row(product)
        .iter()
        .zip(x)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, x)| x / a)
        .min_by(f64::total_cmp))
}

/// A scored link candidate; `amount` is on the scaled (log-standardized) axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub supplier: FirmId,
    pub buyer: Buyer,
    pub product: ProductId,
    pub t: u32,
    pub score: f64,
    pub amount: Option<f64>,
}

/// Adds the penalty to each score and caps each predicted amount by the
/// scaled cap. Caps below one unit are raised to one unit before scaling so
/// they stay on the log axis.
pub fn adjust_scores(
    candidates: &mut [Candidate],
    alpha: &Alpha,
    state: &InventoryState,
    scale: impl Fn(f64) -> Result<f64>,
) -> Result<()> {
    for c in candidates {
        c.score += penalty(state, alpha, c.supplier, c.product, c.t)?;
        if let (Some(pred), Some(limit)) = (c.amount, cap(state, alpha, c.supplier, c.product, c.t)?) {
            c.amount = Some(pred.min(scale(limit.max(1.0))?));
        }
    }
    Ok(())
}

/// `product: part(weight) ...` for the top `k` candidates of every product.
pub fn top_k_report(alpha: &Alpha, k: usize) -> String {
    let mut s = String::from("# product: top parts as part(weight)\n");
    for p in 0..alpha.m() as ProductId {
        let top: Vec<String> = rank_parts(alpha, p).into_iter().take(k).map(|(q, w)| format!("{q}({w:.4})")).collect();
        let _ = writeln!(s, "{p}: {}", top.join(" "));
    }
    s
}
