//! Ground-truth production graph: tiers, product positions, parts and unit
//! requirements.
//!
//! Products are laid out in contiguous id blocks: `n_exog` raw products in
//! tier 0, `n_inner_tiers` blocks of `n_tier` products, then `n_consumer`
//! final products in tier `T + 1`. Every product outside tier 0 takes its
//! parts from the tier directly below it, so the graph is a DAG by
//! construction.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ProductId;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub lo: u32,
    pub hi: u32,
}

impl IntRange {
    pub const fn new(lo: u32, hi: u32) -> Self {
        IntRange { lo, hi }
    }

    pub fn sample(&self, rng: &mut SimRng) -> u32 {
        rng.random_range(self.lo..=self.hi)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.lo == 0 || self.lo > self.hi {
            return Err(Error::Config(format!(
                "{name} must be a non-empty range with positive bounds (got [{}, {}])",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProdGenConfig {
    pub n_exog: u32,
    pub n_consumer: u32,
    pub n_tier: u32,
    /// Number of inner tiers `T`; total tiers are `T + 2`.
    pub n_inner_tiers: u32,
    pub parts_range: IntRange,
    pub units_range: IntRange,
    /// Distance exponent for weighted part sampling. `None` picks the
    /// closest parts deterministically.
    pub gamma: Option<f64>,
    pub seed: u64,
}

impl Default for ProdGenConfig {
    fn default() -> Self {
        ProdGenConfig {
            n_exog: 5,
            n_consumer: 5,
            n_tier: 10,
            n_inner_tiers: 4,
            parts_range: IntRange::new(2, 4),
            units_range: IntRange::new(1, 4),
            gamma: None,
            seed: 0,
        }
    }
}

impl ProdGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_exog == 0 || self.n_consumer == 0 || self.n_tier == 0 {
            return Err(Error::Config("n_exog, n_consumer and n_tier must be >= 1".into()));
        }
        self.parts_range.validate("parts_range")?;
        self.units_range.validate("units_range")?;
        if let Some(g) = self.gamma {
            if !g.is_finite() {
                return Err(Error::Config(format!("gamma must be finite (got {g})")));
            }
        }
        Ok(())
    }

    pub fn n_products(&self) -> u32 {
        self.n_exog + self.n_inner_tiers * self.n_tier + self.n_consumer
    }

    /// Index of the final (consumer) tier, `T + 1`.
    pub fn final_tier(&self) -> u32 {
        self.n_inner_tiers + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Product {
    pub id: ProductId,
    pub tier: u32,
    pub position: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductionGraph {
    pub products: Vec<Product>,
    /// `parts[p]` lists `(part, units)` sorted by part id.
    pub parts: Vec<Vec<(ProductId, u32)>>,
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Tier of every product id under the contiguous-block layout.
pub fn assign_tiers(config: &ProdGenConfig) -> Vec<(ProductId, u32)> {
    let mut out = Vec::with_capacity(config.n_products() as usize);
    let mut id = 0;
    let mut push_block = |tier: u32, count: u32, out: &mut Vec<(ProductId, u32)>| {
        for _ in 0..count {
            out.push((id, tier));
            id += 1;
        }
    };
    push_block(0, config.n_exog, &mut out);
    for tier in 1..=config.n_inner_tiers {
        push_block(tier, config.n_tier, &mut out);
    }
    push_block(config.final_tier(), config.n_consumer, &mut out);
    out
}

/// Indices into `candidates` of the `k` entries nearest to `origin`,
/// ties broken by the smaller id. `candidates` holds `(id, position)`.
pub(crate) fn closest_k(origin: [f64; 2], candidates: &[(u32, [f64; 2])], k: usize) -> Vec<u32> {
    let mut ranked: Vec<(f64, u32)> = candidates
        .iter()
        .map(|&(id, pos)| (distance(origin, pos), id))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(k).map(|(_, id)| id).collect()
}

/// Draws `k` candidates without replacement with probability proportional
/// to `distance^gamma`. A zero distance under a negative exponent gets the
/// largest finite weight among the candidates.
fn weighted_k(origin: [f64; 2], candidates: &[(u32, [f64; 2])], k: usize, gamma: f64, rng: &mut SimRng) -> Vec<u32> {
    let raw: Vec<f64> = candidates
        .iter()
        .map(|&(_, pos)| distance(origin, pos).powf(gamma))
        .collect();
    let max_finite = raw.iter().copied().filter(|w| w.is_finite()).fold(f64::NAN, f64::max);
    let mut pool: Vec<(u32, f64)> = candidates
        .iter()
        .zip(&raw)
        .map(|(&(id, _), &w)| {
            let w = if w.is_finite() { w } else { max_finite };
            (id, if w.is_finite() && w > 0.0 { w } else { 0.0 })
        })
        .collect();
    if pool.iter().all(|&(_, w)| w == 0.0) {
        pool.iter_mut().for_each(|e| e.1 = 1.0);
    }

    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k.min(pool.len()) {
        let total: f64 = pool.iter().map(|e| e.1).sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = pool.len() - 1;
            for (i, &(_, w)) in pool.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..pool.len())
        };
        chosen.push(pool.swap_remove(idx).0);
    }
    chosen
}

/// Picks parts for every product of `tier` from tier `tier - 1`.
/// Returns `(product, parts sorted by id)` in product-id order.
pub fn assign_parts(
    products: &[Product],
    tier: u32,
    config: &ProdGenConfig,
    rng: &mut SimRng,
) -> Result<Vec<(ProductId, Vec<ProductId>)>> {
    if tier == 0 {
        return Err(Error::Config("tier 0 products have no parts".into()));
    }
    let previous: Vec<(u32, [f64; 2])> = products
        .iter()
        .filter(|p| p.tier == tier - 1)
        .map(|p| (p.id, p.position))
        .collect();
    if previous.is_empty() {
        return Err(Error::Config(format!("tier {} is empty", tier - 1)));
    }

    let mut out = Vec::new();
    for product in products.iter().filter(|p| p.tier == tier) {
        let mut k = config.parts_range.sample(rng) as usize;
        if k > previous.len() {
            log::warn!(
                "product {} wants {k} parts but tier {} has {}; clamping",
                product.id,
                tier - 1,
                previous.len()
            );
            k = previous.len();
        }
        let mut parts = match config.gamma {
            None => closest_k(product.position, &previous, k),
            Some(gamma) => weighted_k(product.position, &previous, k, gamma, rng),
        };
        parts.sort_unstable();
        out.push((product.id, parts));
    }
    Ok(out)
}

pub fn build_production_graph(config: &ProdGenConfig) -> Result<ProductionGraph> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let products: Vec<Product> = assign_tiers(config)
        .into_iter()
        .map(|(id, tier)| {
            let x = rng.random::<f64>();
            let y = rng.random::<f64>();
            Product {
                id,
                tier,
                position: [x, y],
            }
        })
        .collect();

    let mut parts = vec![Vec::new(); products.len()];
    for tier in 1..=config.final_tier() {
        for (product, chosen) in assign_parts(&products, tier, config, &mut rng)? {
            parts[product as usize] = chosen
                .into_iter()
                .map(|part| (part, config.units_range.sample(&mut rng)))
                .collect();
        }
    }
    Ok(ProductionGraph { products, parts })
}

impl ProductionGraph {
    pub fn n_products(&self) -> usize {
        self.products.len()
    }

    pub fn tier(&self, p: ProductId) -> u32 {
        self.products[p as usize].tier
    }

    pub fn max_tier(&self) -> u32 {
        self.products.iter().map(|p| p.tier).max().unwrap_or(0)
    }

    pub fn parts(&self, p: ProductId) -> &[(ProductId, u32)] {
        &self.parts[p as usize]
    }

    pub fn units(&self, part: ProductId, product: ProductId) -> Option<u32> {
        self.parts(product).iter().find(|&&(q, _)| q == part).map(|&(_, u)| u)
    }

    /// Dense `m x m` matrix with `[product][part] = units`, zero elsewhere.
    pub fn unit_matrix(&self) -> Vec<Vec<f64>> {
        let m = self.n_products();
        let mut out = vec![vec![0.0; m]; m];
        for (p, row) in self.parts.iter().enumerate() {
            for &(part, u) in row {
                out[p][part as usize] = f64::from(u);
            }
        }
        out
    }

    /// Kahn's algorithm over part -> product edges; returns a topological
    /// order or `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<ProductId>> {
        let m = self.n_products();
        let mut indeg: Vec<usize> = self.parts.iter().map(Vec::len).collect();
        let mut users = vec![Vec::new(); m];
        for (p, row) in self.parts.iter().enumerate() {
            for &(part, _) in row {
                users[part as usize].push(p as ProductId);
            }
        }
        let mut queue: Vec<ProductId> = (0..m as u32).filter(|&p| indeg[p as usize] == 0).collect();
        let mut order = Vec::with_capacity(m);
        while let Some(p) = queue.pop() {
            order.push(p);
            for &q in &users[p as usize] {
                indeg[q as usize] -= 1;
                if indeg[q as usize] == 0 {
                    queue.push(q);
                }
            }
        }
        (order.len() == m).then_some(order)
    }

    /// Text form: a comment header, then one line per product
    /// `id tier x y [(part,units),...]`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# sclab production graph v1\n# product tier x y parts\n");
        for p in &self.products {
            let parts: Vec<String> = self.parts(p.id).iter().map(|(q, u)| format!("({q},{u})")).collect();
            let _ = writeln!(s, "{} {} {} {} [{}]", p.id, p.tier, p.position[0], p.position[1], parts.join(","));
        }
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut products = Vec::new();
        let mut parts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| format!("line {}: {m}", i + 1);
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(err("expected 5 fields"));
            }
            let id: u32 = fields[0].parse().map_err(|_| err("bad id"))?;
            if id as usize != products.len() {
                return Err(err("product ids must be contiguous from 0"));
            }
            let tier = fields[1].parse().map_err(|_| err("bad tier"))?;
            let x = fields[2].parse().map_err(|_| err("bad x"))?;
            let y = fields[3].parse().map_err(|_| err("bad y"))?;
            products.push(Product {
                id,
                tier,
                position: [x, y],
            });
            parts.push(parse_pair_list(fields[4]).map_err(|m| err(&m))?);
        }
        Ok(ProductionGraph { products, parts })
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

/// Parses `[(a,b),(c,d)]` into pairs.
pub(crate) fn parse_pair_list(s: &str) -> std::result::Result<Vec<(u32, u32)>, String> {
    let inner = s
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| format!("expected [..], found {s:?}"))?;
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split("),")
        .map(|item| {
            let item = item.trim_start_matches('(').trim_end_matches(')');
            let (a, b) = item.split_once(',').ok_or_else(|| format!("bad pair {item:?}"))?;
            Ok((
                a.parse().map_err(|_| format!("bad id {a:?}"))?,
                b.parse().map_err(|_| format!("bad value {b:?}"))?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_exog: u32, n_consumer: u32, n_tier: u32, t: u32) -> ProdGenConfig {
        ProdGenConfig {
            n_exog,
            n_consumer,
            n_tier,
            n_inner_tiers: t,
            ..Default::default()
        }
    }

    fn tier_ids(layout: &[(u32, u32)], tier: u32) -> Vec<u32> {
        layout.iter().filter(|e| e.1 == tier).map(|e| e.0).collect()
    }

    #[test]
    fn tier_layout_paper_config() {
        let layout = assign_tiers(&cfg(5, 5, 10, 4));
        assert_eq!(layout.len(), 50);
        assert_eq!(tier_ids(&layout, 0), (0..5).collect::<Vec<_>>());
        assert_eq!(tier_ids(&layout, 5), (45..50).collect::<Vec<_>>());
    }

    #[test]
    fn tier_layout_degenerate_and_small() {
        let layout = assign_tiers(&cfg(1, 1, 1, 0));
        assert_eq!(layout, vec![(0, 0), (1, 1)]);
        let layout = assign_tiers(&cfg(2, 3, 4, 2));
        assert_eq!(layout.len(), 13);
        assert_eq!(tier_ids(&layout, 2), vec![6, 7, 8, 9]);
        assert_eq!(tier_ids(&layout, 3), vec![10, 11, 12]);
    }

    fn toy_products() -> Vec<Product> {
        vec![
            Product { id: 0, tier: 0, position: [0.5, 0.6] },
            Product { id: 1, tier: 0, position: [0.9, 0.9] },
            Product { id: 2, tier: 0, position: [0.5, 0.45] },
            Product { id: 3, tier: 1, position: [0.5, 0.5] },
        ]
    }

    #[test]
    fn closest_parts_by_hand() {
        // distances from (0.5,0.5): 0.1, ~0.566, 0.05
        let config = ProdGenConfig {
            parts_range: IntRange::new(2, 2),
            ..Default::default()
        };
        let mut rng = rng_from_seed(1);
        let got = assign_parts(&toy_products(), 1, &config, &mut rng).unwrap();
        assert_eq!(got, vec![(3, vec![0, 2])]);
    }

    #[test]
    fn forced_selection_and_clamp() {
        let mut products = toy_products();
        products.remove(1);
        let products: Vec<Product> = products
            .into_iter()
            .enumerate()
            .map(|(i, mut p)| {
                p.id = i as u32;
                p
            })
            .collect();
        for (lo, hi) in [(2, 2), (4, 4)] {
            let config = ProdGenConfig {
                parts_range: IntRange::new(lo, hi),
                ..Default::default()
            };
            let got = assign_parts(&products, 1, &config, &mut rng_from_seed(0)).unwrap();
            assert_eq!(got, vec![(2, vec![0, 1])]);
        }
    }

    #[test]
    fn distance_ties_prefer_lower_id() {
        let cands = [(7, [0.0, 1.0]), (3, [1.0, 0.0]), (5, [0.0, 0.0])];
        assert_eq!(closest_k([0.5, 0.5], &cands, 2), vec![3, 5]);
    }

    #[test]
    fn weighted_sampling_handles_coincident_points() {
        let cands = [(0, [0.5, 0.5]), (1, [0.6, 0.5]), (2, [0.9, 0.9])];
        let mut rng = rng_from_seed(5);
        for _ in 0..50 {
            let got = weighted_k([0.5, 0.5], &cands, 2, -2.0, &mut rng);
            assert_eq!(got.len(), 2);
            assert_ne!(got[0], got[1]);
        }
    }

    #[test]
    fn weighted_sampling_prefers_near_parts() {
        let cands = [(0, [0.5, 0.55]), (1, [0.95, 0.95])];
        let mut rng = rng_from_seed(9);
        let near = (0..2000)
            .filter(|_| weighted_k([0.5, 0.5], &cands, 1, -2.0, &mut rng)[0] == 0)
            .count();
        // weights 400 vs ~2.47: P(near) ~ 0.994
        assert!(near > 1950, "near picked {near} times");
    }

    #[test]
    fn paper_config_graph_invariants() {
        let g = build_production_graph(&ProdGenConfig::default()).unwrap();
        assert_eq!(g.n_products(), 50);
        for p in &g.products {
            let parts = g.parts(p.id);
            if p.tier == 0 {
                assert!(parts.is_empty());
            } else {
                assert!((2..=4).contains(&parts.len()));
            }
            for &(q, u) in parts {
                assert_eq!(g.tier(q) + 1, p.tier);
                assert!((1..=4).contains(&u));
            }
            assert!(p.position.iter().all(|c| (0.0..=1.0).contains(c)));
        }
        assert!(g.topological_order().is_some());
    }

    #[test]
    fn same_seed_same_graph() {
        let c = ProdGenConfig { seed: 42, ..Default::default() };
        assert_eq!(build_production_graph(&c).unwrap(), build_production_graph(&c).unwrap());
        let weighted = ProdGenConfig { gamma: Some(-1.0), ..c.clone() };
        assert_eq!(build_production_graph(&weighted).unwrap(), build_production_graph(&weighted).unwrap());
    }

    #[test]
    fn text_round_trip() {
        let g = build_production_graph(&ProdGenConfig { seed: 3, ..Default::default() }).unwrap();
        assert_eq!(ProductionGraph::from_text(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn part_counts_uniform_over_range() {
        // 10,000 products in tier 1; chi-square against uniform over {2,3,4}.
        let config = ProdGenConfig {
            n_exog: 10,
            n_tier: 10_000,
            n_inner_tiers: 1,
            n_consumer: 1,
            seed: 11,
            ..Default::default()
        };
        let g = build_production_graph(&config).unwrap();
        let mut counts = [0usize; 3];
        for p in g.products.iter().filter(|p| p.tier == 1) {
            counts[g.parts(p.id).len() - 2] += 1;
        }
        let expected = 10_000.0 / 3.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // chi-square critical value, 2 dof, p = 0.01
        assert!(chi2 < 9.21, "chi2 = {chi2}, counts = {counts:?}");
    }
}
