//! Firms, product suppliers and buyer -> default supplier wiring.
//!
//! Firms come in groups; group `g` may only supply products in tiers
//! `g ..= g + n_consec - 1`. Each product takes its suppliers from the
//! nearest eligible firms. Every firm then needs the union of the parts of
//! what it supplies, and each (buyer, needed product) pair gets a default
//! supplier chosen by preferential attachment on distinct-buyer counts
//! (with add-one smoothing).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FirmId, ProductId};
use crate::error::{Error, Result};
use crate::prodgen::{closest_k, IntRange, ProductionGraph};
use crate::rng::{rng_from_seed, SimRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FirmGenConfig {
    pub n_group: u32,
    pub n_consec: u32,
    pub suppliers_range: IntRange,
    pub seed: u64,
}

impl Default for FirmGenConfig {
    fn default() -> Self {
        FirmGenConfig {
            n_group: 30,
            n_consec: 2,
            suppliers_range: IntRange::new(4, 8),
            seed: 0,
        }
    }
}

impl FirmGenConfig {
    pub fn validate(&self, n_inner_tiers: u32) -> Result<()> {
        if self.n_group == 0 {
            return Err(Error::Config("n_group must be >= 1".into()));
        }
        if self.n_consec == 0 || self.n_consec > n_inner_tiers + 2 {
            return Err(Error::Config(format!(
                "n_consec must lie in [1, T + 2] = [1, {}] (got {})",
                n_inner_tiers + 2,
                self.n_consec
            )));
        }
        if self.suppliers_range.lo == 0 || self.suppliers_range.lo > self.suppliers_range.hi {
            return Err(Error::Config("suppliers_range must be non-empty with positive bounds".into()));
        }
        Ok(())
    }

    pub fn n_groups(&self, n_inner_tiers: u32) -> u32 {
        n_inner_tiers + 3 - self.n_consec
    }

    pub fn group_covers(&self, group: u32, tier: u32) -> bool {
        tier >= group && tier < group + self.n_consec
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Firm {
    pub id: FirmId,
    pub group: u32,
    pub position: [f64; 2],
}

/// Suppliers of each product, ascending by firm id.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SupplyMap {
    pub suppliers: Vec<Vec<FirmId>>,
}

impl SupplyMap {
    pub fn suppliers(&self, p: ProductId) -> &[FirmId] {
        &self.suppliers[p as usize]
    }

    /// Products each firm supplies, ascending.
    pub fn products_by_firm(&self, n_firms: usize) -> Vec<Vec<ProductId>> {
        let mut out = vec![Vec::new(); n_firms];
        for (p, firms) in self.suppliers.iter().enumerate() {
            for &f in firms {
                out[f as usize].push(p as ProductId);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DefaultSupplierMap {
    pub map: BTreeMap<(FirmId, ProductId), FirmId>,
}

impl DefaultSupplierMap {
    pub fn get(&self, buyer: FirmId, product: ProductId) -> Option<FirmId> {
        self.map.get(&(buyer, product)).copied()
    }
}

/// Everything the transaction simulator needs about firms.
#[derive(Clone, Debug, PartialEq)]
pub struct FirmLayout {
    pub firms: Vec<Firm>,
    pub supply: SupplyMap,
    pub defaults: DefaultSupplierMap,
}

/// Creates `n_groups * n_group` firms, group-major, with uniform positions.
pub fn assign_firm_groups(config: &FirmGenConfig, n_inner_tiers: u32, rng: &mut SimRng) -> Result<Vec<Firm>> {
    config.validate(n_inner_tiers)?;
    let mut firms = Vec::new();
    for group in 0..config.n_groups(n_inner_tiers) {
        for _ in 0..config.n_group {
            let x = rng.random::<f64>();
            let y = rng.random::<f64>();
            firms.push(Firm {
                id: firms.len() as FirmId,
                group,
                position: [x, y],
            });
        }
    }
    Ok(firms)
}

/// For each product (id order) draws a supplier count and takes that many
/// nearest eligible firms.
pub fn assign_suppliers(
    graph: &ProductionGraph,
    firms: &[Firm],
    config: &FirmGenConfig,
    rng: &mut SimRng,
) -> Result<SupplyMap> {
    let mut suppliers = Vec::with_capacity(graph.n_products());
    for product in &graph.products {
        let viable: Vec<(u32, [f64; 2])> = firms
            .iter()
            .filter(|f| config.group_covers(f.group, product.tier))
            .map(|f| (f.id, f.position))
            .collect();
        if viable.is_empty() {
            return Err(Error::Config(format!(
                "no firm group covers tier {} (product {})",
                product.tier, product.id
            )));
        }
        let k = (config.suppliers_range.sample(rng) as usize).min(viable.len());
        let mut chosen = closest_k(product.position, &viable, k);
        chosen.sort_unstable();
        suppliers.push(chosen);
    }
    Ok(SupplyMap { suppliers })
}

/// Inputs each firm must buy: the union of parts over the products it supplies.
pub fn needed_inputs(supply: &SupplyMap, graph: &ProductionGraph, n_firms: usize) -> Vec<BTreeSet<ProductId>> {
    supply
        .products_by_firm(n_firms)
        .into_iter()
        .map(|products| {
            products
                .iter()
                .flat_map(|&p| graph.parts(p).iter().map(|&(part, _)| part))
                .collect()
        })
        .collect()
}

/// Preferential attachment over `(buyer, product)` pairs in ascending order.
/// A firm never becomes its own default supplier.
pub fn assign_default_suppliers(
    supply: &SupplyMap,
    graph: &ProductionGraph,
    n_firms: usize,
    rng: &mut SimRng,
) -> Result<DefaultSupplierMap> {
    let needs = needed_inputs(supply, graph, n_firms);
    let mut buyers_of: Vec<BTreeSet<FirmId>> = vec![BTreeSet::new(); n_firms];
    let mut map = BTreeMap::new();

    for (buyer, inputs) in needs.iter().enumerate() {
        let buyer = buyer as FirmId;
        for &product in inputs {
            let candidates: Vec<FirmId> = supply
                .suppliers(product)
                .iter()
                .copied()
                .filter(|&s| s != buyer)
                .collect();
            if candidates.is_empty() {
                return Err(Error::Config(format!(
                    "firm {buyer} needs product {product} but no other firm supplies it"
                )));
            }
            let weights: Vec<f64> = candidates
                .iter()
                .map(|&s| buyers_of[s as usize].len() as f64 + 1.0)
                .collect();
            let chosen = candidates[pick_weighted(&weights, rng)];
            buyers_of[chosen as usize].insert(buyer);
            map.insert((buyer, product), chosen);
        }
    }
    Ok(DefaultSupplierMap { map })
}

/// Index drawn with probability proportional to `weights` (all positive).
pub(crate) fn pick_weighted(weights: &[f64], rng: &mut SimRng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

pub fn generate_firms(graph: &ProductionGraph, config: &FirmGenConfig) -> Result<FirmLayout> {
    let n_inner = graph.max_tier().saturating_sub(1);
    let mut rng = rng_from_seed(config.seed);
    let firms = assign_firm_groups(config, n_inner, &mut rng)?;
    let supply = assign_suppliers(graph, &firms, config, &mut rng)?;
    let defaults = assign_default_suppliers(&supply, graph, firms.len(), &mut rng)?;
    Ok(FirmLayout {
        firms,
        supply,
        defaults,
    })
}

impl FirmLayout {
    pub fn n_firms(&self) -> usize {
        self.firms.len()
    }

    /// Text form with three tagged record kinds:
    /// `firm id group x y`, `supply product [f,...]`, `default buyer product supplier`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# sclab firm layout v1\n");
        s.push_str("# firm <id> <group> <x> <y>\n");
        for f in &self.firms {
            let _ = writeln!(s, "firm {} {} {} {}", f.id, f.group, f.position[0], f.position[1]);
        }
        s.push_str("# supply <product> [<firm>,...]\n");
        for (p, firms) in self.supply.suppliers.iter().enumerate() {
            let ids: Vec<String> = firms.iter().map(u32::to_string).collect();
            let _ = writeln!(s, "supply {p} [{}]", ids.join(","));
        }
        s.push_str("# default <buyer> <product> <supplier>\n");
        for (&(b, p), &sup) in &self.defaults.map {
            let _ = writeln!(s, "default {b} {p} {sup}");
        }
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut firms = Vec::new();
        let mut suppliers = Vec::new();
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| format!("line {}: {m}", i + 1);
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |k: usize| -> std::result::Result<u32, String> {
                fields.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| err("bad integer field"))
            };
            match fields[0] {
                "firm" if fields.len() == 5 => {
                    let x = fields[3].parse().map_err(|_| err("bad x"))?;
                    let y = fields[4].parse().map_err(|_| err("bad y"))?;
                    firms.push(Firm {
                        id: num(1)?,
                        group: num(2)?,
                        position: [x, y],
                    });
                }
                "supply" if fields.len() == 3 => {
                    if num(1)? as usize != suppliers.len() {
                        return Err(err("supply records must be contiguous from product 0"));
                    }
                    let list = fields[2]
                        .strip_prefix('[')
                        .and_then(|s| s.strip_suffix(']'))
                        .ok_or_else(|| err("expected [..]"))?;
                    let ids: std::result::Result<Vec<u32>, _> = if list.is_empty() {
                        Ok(Vec::new())
                    } else {
                        list.split(',').map(str::parse).collect()
                    };
                    suppliers.push(ids.map_err(|_| err("bad firm id"))?);
                }
                "default" if fields.len() == 4 => {
                    map.insert((num(1)?, num(2)?), num(3)?);
                }
                _ => return Err(err("unrecognized record")),
            }
        }
        Ok(FirmLayout {
            firms,
            supply: SupplyMap { suppliers },
            defaults: DefaultSupplierMap { map },
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg,
        })
    }
}
