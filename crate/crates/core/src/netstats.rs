//! Structure of the firm-firm network: communities, clustering,
//! assortativity and degree tail.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::dataset::{Dataset, FirmId};
use crate::error::{Error, Result};
use crate::firmgen::FirmLayout;
use crate::rng::rng_from_seed;

/// Undirected simple graph over the firms that appear in a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FirmGraph {
    /// Node index to firm id, ascending.
    pub firms: Vec<FirmId>,
    /// Sorted neighbor indices per node.
    pub adj: Vec<Vec<usize>>,
}

impl FirmGraph {
    /// One edge per supplier/buyer firm pair, regardless of direction or
    /// multiplicity. Consumer sales add the supplier as a node only.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut nodes = BTreeSet::new();
        let mut edges = BTreeSet::new();
        for tx in &dataset.transactions {
            nodes.insert(tx.supplier);
            if let Some(b) = tx.buyer.firm() {
                nodes.insert(b);
                if b != tx.supplier {
                    edges.insert((tx.supplier.min(b), tx.supplier.max(b)));
                }
            }
        }
        let firms: Vec<FirmId> = nodes.into_iter().collect();
        let index = |f: FirmId| firms.binary_search(&f).expect("firm collected above");
        let edges: Vec<(usize, usize)> = edges.into_iter().map(|(a, b)| (index(a), index(b))).collect();
        Ok(Self::from_edges_labeled(firms, &edges))
    }

    /// Buyer to default-supplier relations of a generated layout, over all
    /// of its firms.
    pub fn from_layout(layout: &FirmLayout) -> Self {
        let edges: Vec<(usize, usize)> = layout.defaults.map.iter().map(|(&(b, _), &s)| (b as usize, s as usize)).collect();
        Self::from_edges_labeled(layout.firms.iter().map(|f| f.id).collect(), &edges)
    }

    /// Graph on nodes `0..n`; duplicate edges and self-loops are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        Self::from_edges_labeled((0..n as FirmId).collect(), edges)
    }

    fn from_edges_labeled(firms: Vec<FirmId>, edges: &[(usize, usize)]) -> Self {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); firms.len()];
        for &(a, b) in edges {
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        FirmGraph {
            firms,
            adj: adj.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }
}

/// Community label per node index.
pub type Partition = Vec<usize>;

/// `Q = sum_c [L_c / E - (d_c / 2E)^2]`, with `L_c` the edges inside community
/// `c` and `d_c` its total degree.
pub fn modularity(graph: &FirmGraph, partition: &[usize]) -> Result<f64> {
    assert_eq!(partition.len(), graph.n_nodes(), "partition must label every node");
    let e = graph.n_edges() as f64;
    if e == 0.0 {
        return Err(Error::Undefined("modularity of a graph without edges".into()));
    }
    let mut inside: BTreeMap<usize, f64> = BTreeMap::new();
    let mut degree: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, nbrs) in graph.adj.iter().enumerate() {
        *degree.entry(partition[i]).or_default() += nbrs.len() as f64;
        let same = nbrs.iter().filter(|&&j| partition[j] == partition[i]).count();
        *inside.entry(partition[i]).or_default() += same as f64 / 2.0;
    }
    Ok(degree
        .iter()
        .map(|(c, d)| inside.get(c).copied().unwrap_or(0.0) / e - (d / (2.0 * e)).powi(2))
        .sum())
}

/// Weighted graph used by the aggregation levels of Louvain; self-loops are
/// listed once with twice the internal weight, so strengths sum to `2E`.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    strength: Vec<f64>,
}

impl Level {
    fn from_graph(g: &FirmGraph) -> Self {
        let adj: Vec<Vec<(usize, f64)>> = g.adj.iter().map(|n| n.iter().map(|&j| (j, 1.0)).collect()).collect();
        let strength = adj.iter().map(|n| n.iter().map(|e| e.1).sum()).collect();
        Level { adj, strength }
    }

    /// Moves single nodes to the neighbouring (or an empty) community with
    /// the best modularity gain until none improves. Returns whether anything moved.
    fn local_moves(&self, labels: &mut [usize], order: &[usize], two_m: f64) -> bool {
        let n = self.adj.len();
        let mut tot = vec![0.0; n.max(labels.iter().max().map_or(0, |&l| l + 1))];
        let mut size = vec![0usize; tot.len()];
        for (i, &c) in labels.iter().enumerate() {
            tot[c] += self.strength[i];
            size[c] += 1;
        }
        let mut links = vec![0.0; tot.len()];
        let mut touched: Vec<usize> = Vec::new();
        let mut any = false;
        loop {
            let mut moved = false;
            for &i in order {
                let ki = self.strength[i];
                let own = labels[i];
                for &(j, w) in &self.adj[i] {
                    if j != i {
                        let c = labels[j];
                        if links[c] == 0.0 {
                            touched.push(c);
                        }
                        links[c] += w;
                    }
                }
                tot[own] -= ki;
                let gain = |c: usize, links: &[f64]| links[c] - tot[c] * ki / two_m;
                let mut best = own;
                let mut best_gain = gain(own, &links);
                for &c in &touched {
                    let g = gain(c, &links);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                // a community of its own gains 0
                if best_gain < -1e-12 && size[own] > 1 {
                    best = size.iter().position(|&k| k == 0).expect("fewer communities than nodes");
                }
                tot[best] += ki;
                if best != own {
                    size[own] -= 1;
                    size[best] += 1;
                    labels[i] = best;
                    moved = true;
                    any = true;
                }
                for &c in &touched {
                    links[c] = 0.0;
                }
                touched.clear();
            }
            if !moved {
                return any;
            }
        }
    }

    fn aggregate(&self, labels: &[usize], k: usize) -> Level {
        let mut merged: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for (i, nbrs) in self.adj.iter().enumerate() {
            for &(j, w) in nbrs {
                *merged[labels[i]].entry(labels[j]).or_default() += w;
            }
        }
        let adj: Vec<Vec<(usize, f64)>> = merged.into_iter().map(|m| m.into_iter().collect()).collect();
        let strength = adj.iter().map(|n| n.iter().map(|e| e.1).sum()).collect();
        Level { adj, strength }
    }
}

/// Relabels to `0..k` in order of first appearance; returns `k`.
fn compact(labels: &mut [usize]) -> usize {
    let mut map = BTreeMap::new();
    for l in labels.iter_mut() {
        let next = map.len();
        *l = *map.entry(*l).or_insert(next);
    }
    map.len()
}

/// Louvain communities with node visit order shuffled by `seed`, followed
/// by single-node moves on the original graph so that no relabeling of one
/// node raises Q.
pub fn louvain_partition(graph: &FirmGraph, seed: u64) -> Partition {
    let n = graph.n_nodes();
    let mut membership: Partition = (0..n).collect();
    let two_m = 2.0 * graph.n_edges() as f64;
    if two_m == 0.0 {
        return membership;
    }
    let mut rng = rng_from_seed(seed);
    let mut level = Level::from_graph(graph);
    loop {
        let size = level.adj.len();
        let mut labels: Vec<usize> = (0..size).collect();
        let mut order: Vec<usize> = (0..size).collect();
        order.shuffle(&mut rng);
        if !level.local_moves(&mut labels, &order, two_m) {
            break;
        }
        let k = compact(&mut labels);
        for m in membership.iter_mut() {
            *m = labels[*m];
        }
        if k == size {
            break;
        }
        level = level.aggregate(&labels, k);
    }
    let base = Level::from_graph(graph);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    base.local_moves(&mut membership, &order, two_m);
    compact(&mut membership);
    membership
}

/// Triangles through each node over `k(k-1)/2`; 0 below degree 2.
pub fn clustering_coefficients(graph: &FirmGraph) -> Vec<f64> {
    (0..graph.n_nodes())
        .map(|i| {
            let nbrs = &graph.adj[i];
            let k = nbrs.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for (a, &u) in nbrs.iter().enumerate() {
                links += nbrs[a + 1..].iter().filter(|&&v| graph.has_edge(u, v)).count();
            }
            links as f64 / (k * (k - 1) / 2) as f64
        })
        .collect()
}

pub fn mean_clustering(graph: &FirmGraph) -> f64 {
    let c = clustering_coefficients(graph);
    if c.is_empty() {
        0.0
    } else {
        c.iter().sum::<f64>() / c.len() as f64
    }
}

/// Pearson correlation of endpoint degrees over both orientations of every
/// edge.
pub fn degree_assortativity(graph: &FirmGraph) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, nbrs) in graph.adj.iter().enumerate() {
        for &j in nbrs {
            xs.push(graph.degree(i) as f64);
            ys.push(graph.degree(j) as f64);
        }
    }
    if xs.is_empty() {
        return Err(Error::Undefined("assortativity of a graph without edges".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if vx <= 0.0 || vy <= 0.0 {
        return Err(Error::Undefined("assortativity with zero degree variance".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegreeSummary {
    /// Degree to node count.
    pub histogram: BTreeMap<usize, usize>,
    pub max: usize,
    pub median: f64,
    pub mean: f64,
    /// Density exponent from the log-log CCDF fit, if at least two distinct
    /// degrees reach `k_min`.
    pub tail_exponent: Option<f64>,
}

/// Fits `log P(K >= k) = a - (gamma - 1) log k` by least squares over the
/// distinct values `k >= k_min` and returns `gamma`.
pub fn fit_tail_exponent(values: &[usize], k_min: usize) -> Option<f64> {
    let k_min = k_min.max(1);
    let mut sorted: Vec<usize> = values.iter().copied().filter(|&k| k >= k_min).collect();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut points = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let k = sorted[i];
        points.push(((k as f64).ln(), ((sorted.len() - i) as f64 / n).ln()));
        while i < sorted.len() && sorted[i] == k {
            i += 1;
        }
    }
    if points.len() < 2 {
        return None;
    }
    let np = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / np;
    let my = points.iter().map(|p| p.1).sum::<f64>() / np;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(1.0 - sxy / sxx)
}

pub fn degree_distribution_summary(graph: &FirmGraph, k_min: usize) -> DegreeSummary {
    let mut degrees: Vec<usize> = (0..graph.n_nodes()).map(|i| graph.degree(i)).collect();
    degrees.sort_unstable();
    let mut histogram = BTreeMap::new();
    for &d in &degrees {
        *histogram.entry(d).or_insert(0) += 1;
    }
    let n = degrees.len();
    let median = match n {
        0 => 0.0,
        _ if n % 2 == 1 => degrees[n / 2] as f64,
        _ => (degrees[n / 2 - 1] + degrees[n / 2]) as f64 / 2.0,
    };
    DegreeSummary {
        max: degrees.last().copied().unwrap_or(0),
        median,
        mean: if n == 0 { 0.0 } else { degrees.iter().sum::<usize>() as f64 / n as f64 },
        tail_exponent: fit_tail_exponent(&degrees, k_min),
        histogram,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkReport {
    pub nodes: usize,
    pub edges: usize,
    pub modularity: f64,
    pub community_sizes: Vec<usize>,
    pub mean_clustering: f64,
    pub assortativity: Option<f64>,
    pub degrees: DegreeSummary,
}

pub fn network_report(graph: &FirmGraph, seed: u64, k_min: usize) -> Result<NetworkReport> {
    let partition = louvain_partition(graph, seed);
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in &partition {
        *sizes.entry(c).or_default() += 1;
    }
    let mut community_sizes: Vec<usize> = sizes.into_values().collect();
    community_sizes.sort_unstable_by(|a, b| b.cmp(a));
    Ok(NetworkReport {
        nodes: graph.n_nodes(),
        edges: graph.n_edges(),
        modularity: modularity(graph, &partition)?,
        community_sizes,
        mean_clustering: mean_clustering(graph),
        assortativity: degree_assortativity(graph).ok(),
        degrees: degree_distribution_summary(graph, k_min),
    })
}

impl NetworkReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes = {}", self.nodes);
        let _ = writeln!(s, "edges = {}", self.edges);
        let _ = writeln!(s, "modularity = {:.6}", self.modularity);
        let _ = writeln!(s, "communities = {}", self.community_sizes.len());
        let _ = writeln!(s, "community_sizes = {:?}", self.community_sizes);
        let _ = writeln!(s, "mean_clustering = {:.6}", self.mean_clustering);
        match self.assortativity {
            Some(r) => writeln!(s, "assortativity = {r:.6}"),
            None => writeln!(s, "assortativity = undefined"),
        }
        .ok();
        let _ = writeln!(s, "degree_max = {}", self.degrees.max);
        let _ = writeln!(s, "degree_median = {}", self.degrees.median);
        let _ = writeln!(s, "degree_mean = {:.4}", self.degrees.mean);
        match self.degrees.tail_exponent {
            Some(g) => writeln!(s, "tail_exponent = {g:.4}"),
            None => writeln!(s, "tail_exponent = undefined"),
        }
        .ok();
        s.push_str("\n# degree histogram\ndegree,count\n");
        for (d, c) in &self.degrees.histogram {
            let _ = writeln!(s, "{d},{c}");
        }
        s
    }
}
