use serde::{Deserialize, Serialize};

use super::{Alpha, AttentionMode, AttentionWeights, Embeddings, GradientMode, InvTrainConfig};
use crate::dataset::{by_timestep, FirmId, ProductId, Transaction};
use crate::error::{Error, Result};

/// One timestep's transactions aggregated per firm.
pub(super) struct StepBatch {
    t: u32,
    /// `(firm, [(product, total amount sold)])`
    sold: Vec<(FirmId, Vec<(ProductId, f64)>)>,
    /// `(firm, [(product, total amount bought)])`
    bought: Vec<(FirmId, Vec<(ProductId, f64)>)>,
}

fn group(mut rows: Vec<(FirmId, ProductId, f64)>) -> Vec<(FirmId, Vec<(ProductId, f64)>)> {
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out: Vec<(FirmId, Vec<(ProductId, f64)>)> = Vec::new();
    for (f, p, a) in rows {
        match out.last_mut() {
            Some((g, items)) if *g == f => match items.last_mut() {
                Some((q, total)) if *q == p => *total += a,
                _ => items.push((p, a)),
            },
            _ => out.push((f, vec![(p, a)])),
        }
    }
    out
}

impl StepBatch {
    pub(super) fn new(txs: &[Transaction]) -> Self {
        let t = txs.first().map_or(0, |tx| tx.t);
        let sold = group(txs.iter().map(|tx| (tx.supplier, tx.product, tx.amount)).collect());
        let bought = group(
            txs.iter()
                .filter_map(|tx| tx.buyer.firm().map(|b| (b, tx.product, tx.amount)))
                .collect(),
        );
        StepBatch { t, sold, bought }
    }

    /// Adds `d loss / d alpha` (flat, `[p * m + part]`) into `grad` and
    /// returns the loss without the L2 term. `jac[i][part * m + q]` is
    /// `d x_i[part] / d alpha[q][part]`, or absent for the one-step gradient.
    pub(super) fn loss_and_grad(
        &self,
        alpha: &Alpha,
        x: &[Vec<f64>],
        jac: Option<&[Option<Vec<f64>>]>,
        n_firms: usize,
        config: &InvTrainConfig,
        grad: &mut [f64],
    ) -> f64 {
        let m = alpha.m();
        let n = n_firms as f64;
        let mut loss = 0.0;
        let mut c = vec![0.0; m];
        for (firm, sales) in &self.sold {
            consumption(alpha, sales, &mut c);
            let xi = &x[*firm as usize];
            let ji = jac.and_then(|j| j[*firm as usize].as_deref());
            for part in 0..m {
                let over = c[part] > xi[part];
                if over {
                    loss += config.lambda_debt * (c[part] - xi[part]);
                }
                loss -= config.lambda_cons * c[part];
                let k = (if over { config.lambda_debt } else { 0.0 } - config.lambda_cons) / n;
                for &(q, a) in sales {
                    grad[q as usize * m + part] += k * a;
                }
                if let (true, Some(ji)) = (over, ji) {
                    let row = &ji[part * m..(part + 1) * m];
                    for (q, d) in row.iter().enumerate() {
                        grad[q * m + part] -= config.lambda_debt / n * d;
                    }
                }
            }
        }
        loss / n
    }

    /// Moves inventories (and sensitivities, when tracked) past this timestep.
    pub(super) fn advance(&self, alpha: &Alpha, x: &mut [Vec<f64>], mut jac: Option<&mut [Option<Vec<f64>>]>) {
        let m = alpha.m();
        let mut c = vec![0.0; m];
        let mut b = vec![0.0; m];
        let mut firms: Vec<FirmId> = self.sold.iter().chain(&self.bought).map(|(f, _)| *f).collect();
        firms.sort_unstable();
        firms.dedup();
        for firm in firms {
            let sales = self.sold.iter().find(|(f, _)| *f == firm).map_or(&[][..], |(_, s)| s.as_slice());
            b.iter_mut().for_each(|v| *v = 0.0);
            if let Some((_, buys)) = self.bought.iter().find(|(f, _)| *f == firm) {
                for &(p, a) in buys {
                    b[p as usize] += a;
                }
            }
            consumption(alpha, sales, &mut c);
            let xi = &mut x[firm as usize];
            let ji = jac.as_mut().map(|j| &mut j[firm as usize]);
            if let Some(slot) = ji {
                if slot.is_none() && !sales.is_empty() {
                    *slot = Some(vec![0.0; m * m]);
                }
                if let Some(ji) = slot.as_mut() {
                    for part in 0..m {
                        let row = &mut ji[part * m..(part + 1) * m];
                        if xi[part] + b[part] - c[part] > 0.0 {
                            for &(q, a) in sales {
                                row[q as usize] -= a;
                            }
                        } else {
                            row.iter_mut().for_each(|v| *v = 0.0);
                        }
                    }
                }
            }
            for part in 0..m {
                xi[part] = (xi[part] + b[part] - c[part]).max(0.0);
            }
        }
    }
}

fn consumption(alpha: &Alpha, sales: &[(ProductId, f64)], c: &mut [f64]) {
    c.iter_mut().for_each(|v| *v = 0.0);
    for &(q, a) in sales {
        for (cp, w) in c.iter_mut().zip(alpha.row(q)) {
            *cp += w * a;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn to_text(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for r in &self.epochs {
            s.push_str(&format!("{},{}\n", r.epoch, r.loss));
        }
        s
    }
}

/// Trains attention weights on a chronological transaction stream with one
/// subgradient step per timestep. Inventories start empty every epoch;
/// training stops after `patience` epochs without a lower epoch loss.
pub fn train_inventory(
    train: &[Transaction],
    n_firms: usize,
    n_products: usize,
    config: &InvTrainConfig,
    embeddings: Option<Embeddings>,
) -> Result<(AttentionWeights, TrainLog)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut weights = match (config.mode, embeddings) {
        (AttentionMode::Direct, None) => AttentionWeights::direct(n_products, config.init),
        (AttentionMode::Bilinear, Some(emb)) => {
            if emb.rows.len() != n_products {
                return Err(Error::Config(format!("embeddings cover {} products, dataset has {n_products}", emb.rows.len())));
            }
            AttentionWeights::bilinear(emb, config.init)
        }
        (AttentionMode::Direct, Some(_)) => return Err(Error::Config("embeddings are only used in bilinear mode".into())),
        (AttentionMode::Bilinear, None) => return Err(Error::Config("bilinear mode needs an embeddings file".into())),
    };
    let batches: Vec<StepBatch> = by_timestep(train).map(|(_, txs)| StepBatch::new(txs)).collect();
    let m = n_products;
    let unroll = config.gradient_mode == GradientMode::FullUnroll;

    let mut log = TrainLog::default();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut grad = vec![0.0; m * m];
    for epoch in 0..config.epochs as usize {
        let mut x = vec![vec![0.0; m]; n_firms];
        let mut jac: Vec<Option<Vec<f64>>> = if unroll { vec![None; n_firms] } else { Vec::new() };
        let mut epoch_loss = 0.0;
        for batch in &batches {
            let alpha = weights.alpha();
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = batch.loss_and_grad(&alpha, &x, unroll.then_some(jac.as_slice()), n_firms, config, &mut grad)
                + config.lambda_l2 * weights.nu_norm();
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, t: batch.t });
            }
            epoch_loss += loss;
            batch.advance(&alpha, &mut x, unroll.then_some(jac.as_mut_slice()));
            let step = weights.param_gradient(&grad, config.lambda_l2);
            let mut params = weights.params();
            for (p, g) in params.iter_mut().zip(&step) {
                *p -= config.learning_rate * g;
            }
            weights.set_params(&params);
        }
        log::debug!("epoch {epoch}: loss {epoch_loss}");
        log.epochs.push(EpochRecord { epoch, loss: epoch_loss });
        if epoch_loss < best {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    Ok((weights, log))
}
