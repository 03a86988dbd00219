//! Transactions, datasets and chronological splitting.
//!
//! File format: UTF-8 CSV with LF line endings and the exact header
//! `t,supplier,buyer,product,amount`. Consumer purchases carry the literal
//! token `CONSUMER` in the buyer column. Amounts are written with Rust's
//! shortest round-trip float formatting, so a parse/serialize cycle is lossless.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type FirmId = u32;
pub type ProductId = u32;

pub const HEADER: &str = "t,supplier,buyer,product,amount";
pub const CONSUMER_TOKEN: &str = "CONSUMER";

/// Buyer side of a transaction. `Consumer` sorts after every firm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Buyer {
    Firm(FirmId),
    Consumer,
}

impl Buyer {
    pub fn firm(self) -> Option<FirmId> {
        match self {
            Buyer::Firm(f) => Some(f),
            Buyer::Consumer => None,
        }
    }
}

impl fmt::Display for Buyer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Buyer::Firm(id) => write!(f, "{id}"),
            Buyer::Consumer => f.write_str(CONSUMER_TOKEN),
        }
    }
}

impl FromStr for Buyer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == CONSUMER_TOKEN {
            return Ok(Buyer::Consumer);
        }
        s.parse::<FirmId>()
            .map(Buyer::Firm)
            .map_err(|e| format!("bad buyer {s:?}: {e}"))
    }
}

/// One observed sale: `supplier` sold `amount` units of `product` to `buyer` at `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transaction {
    pub t: u32,
    pub supplier: FirmId,
    pub buyer: Buyer,
    pub product: ProductId,
    pub amount: f64,
}

impl Transaction {
    pub fn key(&self) -> (u32, FirmId, Buyer, ProductId) {
        (self.t, self.supplier, self.buyer, self.product)
    }

    pub fn triplet(&self) -> Triplet {
        Triplet {
            supplier: self.supplier,
            buyer: self.buyer,
            product: self.product,
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !self.amount.is_finite() {
            return Err(format!("amount {} is not finite", self.amount));
        }
        if self.amount < 0.0 {
            return Err(format!("amount {} is negative", self.amount));
        }
        if self.buyer == Buyer::Firm(self.supplier) {
            return Err(format!("supplier and buyer are both firm {}", self.supplier));
        }
        Ok(())
    }
}

/// A (supplier, buyer, product) hyperedge without time or amount.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub supplier: FirmId,
    pub buyer: Buyer,
    pub product: ProductId,
}

/// Index boundaries of a chronological split: train is `[0, train_end)`,
/// validation `[train_end, val_end)`, test `[val_end, len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Split {
    pub train_end: usize,
    pub val_end: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub transactions: Vec<Transaction>,
    pub n_firms: usize,
    pub n_products: usize,
    pub split: Option<Split>,
}

impl Dataset {
    /// Validates every transaction against the node universe and sorts by
    /// `(t, supplier, buyer, product)`. The sort is stable.
    pub fn new(mut transactions: Vec<Transaction>, n_firms: usize, n_products: usize) -> Result<Self> {
        for (i, tx) in transactions.iter().enumerate() {
            let bad = |msg: String| Error::Contract(format!("transaction {i}: {msg}"));
            tx.check().map_err(bad)?;
            if tx.supplier as usize >= n_firms {
                return Err(bad(format!("supplier {} >= n_firms {n_firms}", tx.supplier)));
            }
            if let Buyer::Firm(b) = tx.buyer {
                if b as usize >= n_firms {
                    return Err(bad(format!("buyer {b} >= n_firms {n_firms}")));
                }
            }
            if tx.product as usize >= n_products {
                return Err(bad(format!("product {} >= n_products {n_products}", tx.product)));
            }
        }
        transactions.sort_by_key(Transaction::key);
        Ok(Dataset {
            transactions,
            n_firms,
            n_products,
            split: None,
        })
    }

    /// Like [`Dataset::new`] with the universe inferred as `max id + 1`.
    pub fn from_transactions(transactions: Vec<Transaction>) -> Result<Self> {
        let (n_firms, n_products) = infer_universe(&transactions);
        Self::new(transactions, n_firms, n_products)
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    fn split_or_all(&self) -> Split {
        self.split.unwrap_or(Split {
            train_end: self.len(),
            val_end: self.len(),
        })
    }

    /// Train portion; the whole dataset when no split is set.
    pub fn train(&self) -> &[Transaction] {
        &self.transactions[..self.split_or_all().train_end]
    }

    pub fn val(&self) -> &[Transaction] {
        let s = self.split_or_all();
        &self.transactions[s.train_end..s.val_end]
    }

    pub fn test(&self) -> &[Transaction] {
        &self.transactions[self.split_or_all().val_end..]
    }

    /// Distinct timesteps with at least one transaction.
    pub fn active_timesteps(&self) -> usize {
        by_timestep(&self.transactions).count()
    }

    /// Distinct firms that appear as supplier or firm buyer.
    pub fn active_firms(&self) -> usize {
        let mut seen = vec![false; self.n_firms];
        for tx in &self.transactions {
            seen[tx.supplier as usize] = true;
            if let Buyer::Firm(b) = tx.buyer {
                seen[b as usize] = true;
            }
        }
        seen.into_iter().filter(|&s| s).count()
    }
}

fn infer_universe(transactions: &[Transaction]) -> (usize, usize) {
    let mut n_firms = 0usize;
    let mut n_products = 0usize;
    for tx in transactions {
        n_firms = n_firms.max(tx.supplier as usize + 1);
        if let Buyer::Firm(b) = tx.buyer {
            n_firms = n_firms.max(b as usize + 1);
        }
        n_products = n_products.max(tx.product as usize + 1);
    }
    (n_firms, n_products)
}

/// Groups a time-sorted slice into maximal runs sharing a timestep.
pub fn by_timestep(transactions: &[Transaction]) -> impl Iterator<Item = (u32, &[Transaction])> {
    transactions
        .chunk_by(|a, b| a.t == b.t)
        .map(|chunk| (chunk[0].t, chunk))
}

/// Reads a transactions file. The node universe is inferred from the ids
/// present; use [`parse_transactions_in`] when it is known.
pub fn parse_transactions(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let txns = read_records(path)?;
    Dataset::from_transactions(txns)
}

/// Reads a transactions file against a known `(n_firms, n_products)` universe.
pub fn parse_transactions_in(path: impl AsRef<Path>, n_firms: usize, n_products: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let txns = read_records(path)?;
    Dataset::new(txns, n_firms, n_products)
}

fn read_records(path: &Path) -> Result<Vec<Transaction>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h == HEADER => {}
        Some((_, Ok(h))) => return Err(parse_err(1, format!("expected header {HEADER:?}, found {h:?}"))),
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => return Err(parse_err(1, "missing header".into())),
    }

    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(lineno, format!("expected 5 fields, found {}", fields.len())));
        }
        let t = fields[0]
            .parse::<u32>()
            .map_err(|e| parse_err(lineno, format!("bad t {:?}: {e}", fields[0])))?;
        let supplier = fields[1]
            .parse::<FirmId>()
            .map_err(|e| parse_err(lineno, format!("bad supplier {:?}: {e}", fields[1])))?;
        let buyer = fields[2].parse::<Buyer>().map_err(|e| parse_err(lineno, e))?;
        let product = fields[3]
            .parse::<ProductId>()
            .map_err(|e| parse_err(lineno, format!("bad product {:?}: {e}", fields[3])))?;
        let amount = fields[4]
            .parse::<f64>()
            .map_err(|e| parse_err(lineno, format!("bad amount {:?}: {e}", fields[4])))?;
        let tx = Transaction {
            t,
            supplier,
            buyer,
            product,
            amount,
        };
        tx.check().map_err(|msg| Error::Validation {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        })?;
        out.push(tx);
    }
    Ok(out)
}

pub fn write_transactions<W: Write>(transactions: &[Transaction], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for tx in transactions {
        writeln!(w, "{},{},{},{},{}", tx.t, tx.supplier, tx.buyer, tx.product, tx.amount)?;
    }
    w.flush()
}

pub fn serialize_transactions(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_transactions(&dataset.transactions, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Splits by index over the sorted order: `train_end = max(1, floor(train_frac * N))`,
/// `val_end = min(N, train_end + floor(val_frac * N))`, the rest is test.
/// Transactions sharing a timestep may straddle a boundary.
pub fn chrono_split(dataset: &Dataset, train_frac: f64, val_frac: f64) -> Result<Dataset> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::Config(format!(
            "split fractions must be positive with sum < 1 (got {train_frac}, {val_frac})"
        )));
    }
    let n = dataset.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    // train is never empty, so N = 1 gives 1/0/0
    let train_end = ((train_frac * n as f64).floor() as usize).max(1);
    let val_end = (train_end + (val_frac * n as f64).floor() as usize).min(n);
    let mut out = dataset.clone();
    out.split = Some(Split { train_end, val_end });
    Ok(out)
}
