//! Bayesian networks over discrete variables: structure learning with Chow-Liu trees,
//! greedy MDL hill climbing or exact dynamic programming, maximum-likelihood CPTs and
//! ancestral sampling.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{AgentPool, CodedData, EncodingMode, Provenance, Schema};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rng::{derive_seed, rng_from_seed, substream};

/// Parent lists per node; nodes are variable indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dag {
    pub parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn empty(n: usize) -> Self {
        Dag {
            parents: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut dag = Dag::empty(n);
        for &(u, v) in edges {
            if u >= n || v >= n || u == v {
                return Err(Error::Config(format!("invalid edge {u}->{v}")));
            }
            dag.insert_parent(v, u);
        }
        if !dag.is_acyclic() {
            return Err(Error::Config("edges contain a cycle".into()));
        }
        Ok(dag)
    }

    pub fn n_nodes(&self) -> usize {
        self.parents.len()
    }

    fn insert_parent(&mut self, child: usize, parent: usize) {
        let ps = &mut self.parents[child];
        if let Err(pos) = ps.binary_search(&parent) {
            ps.insert(pos, parent);
        }
    }

    fn remove_parent(&mut self, child: usize, parent: usize) {
        self.parents[child].retain(|&p| p != parent);
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.parents[to].binary_search(&from).is_ok()
    }

    /// Edges as `(parent, child)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
            .collect();
        e.sort_unstable();
        e
    }

    /// Undirected edge set with `(min, max)` pairs.
    pub fn skeleton(&self) -> Vec<(usize, usize)> {
        let mut s: Vec<(usize, usize)> = self.edges().into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        s.sort_unstable();
        s
    }

    /// Kahn's algorithm, smallest ready node first.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.n_nodes();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); n];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&u) = ready.iter().next() {
            ready.remove(&u);
            order.push(u);
            for &c in &children[u] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Whether `to` is reachable from `from` along directed edges.
    fn reaches(&self, from: usize, to: usize) -> bool {
        let n = self.n_nodes();
        let mut children = vec![Vec::new(); n];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            if u == to {
                return true;
            }
            if !std::mem::replace(&mut seen[u], true) {
                stack.extend(&children[u]);
            }
        }
        false
    }
}

fn check_data(data: &CodedData) -> Result<()> {
    if data.n_rows() == 0 {
        return Err(Error::InsufficientData("structure learning needs data".into()));
    }
    Ok(())
}

/// Empirical mutual information between columns `i` and `j`, in nats.
pub fn mutual_information(data: &CodedData, i: usize, j: usize) -> Result<f64> {
    check_data(data)?;
    if i >= data.n_vars() || j >= data.n_vars() {
        return Err(Error::Config("variable index out of range".into()));
    }
    let (ci, cj) = (data.cards[i], data.cards[j]);
    let mut joint = vec![0usize; ci * cj];
    for r in &data.rows {
        joint[r[i] * cj + r[j]] += 1;
    }
    let n = data.n_rows() as f64;
    let pi: Vec<f64> = (0..ci).map(|a| joint[a * cj..(a + 1) * cj].iter().sum::<usize>() as f64 / n).collect();
    let pj: Vec<f64> = (0..cj).map(|b| (0..ci).map(|a| joint[a * cj + b]).sum::<usize>() as f64 / n).collect();
    let mut mi = 0.0;
    for a in 0..ci {
        for b in 0..cj {
            let c = joint[a * cj + b];
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p / (pi[a] * pj[b])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Maximum-spanning tree over pairwise mutual information, rooted at variable 0 with
/// edges directed away from the root. Ties go to the lexicographically smallest edge.
pub fn chow_liu(data: &CodedData, exec: Exec) -> Result<Dag> {
    check_data(data)?;
    let n = data.n_vars();
    if n < 2 {
        return Err(Error::Config("Chow-Liu needs at least two variables".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mis = par::map_slice(exec, &pairs, |&(i, j)| mutual_information(data, i, j))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    // stable sort keeps lexicographic order among equal MI
    order.sort_by(|&a, &b| mis[b].total_cmp(&mis[a]));
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while uf[r] != r {
            r = uf[r];
        }
        let mut y = x;
        while uf[y] != r {
            let next = uf[y];
            uf[y] = r;
            y = next;
        }
        r
    }
    let mut adj = vec![Vec::new(); n];
    for e in order {
        let (i, j) = pairs[e];
        let (ri, rj) = (find(&mut uf, i), find(&mut uf, j));
        if ri != rj {
            uf[ri] = rj;
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let mut dag = Dag::empty(n);
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        let mut nb = adj[u].clone();
        nb.sort_unstable();
        for v in nb {
            if !seen[v] {
                seen[v] = true;
                dag.insert_parent(v, u);
                queue.push_back(v);
            }
        }
    }
    Ok(dag)
}

fn config_index(row: &[usize], parents: &[usize], cards: &[usize]) -> u128 {
    parents.iter().fold(0u128, |acc, &p| acc * cards[p] as u128 + row[p] as u128)
}

fn family_counts(data: &CodedData, node: usize, parents: &[usize]) -> HashMap<u128, Vec<usize>> {
    let card = data.cards[node];
    let mut counts: HashMap<u128, Vec<usize>> = HashMap::new();
    for row in &data.rows {
        counts
            .entry(config_index(row, parents, &data.cards))
            .or_insert_with(|| vec![0; card])[row[node]] += 1;
    }
    counts
}

/// Free parameters of one family: `(D_node − 1) · Π D_parent`.
pub fn family_parameters(cards: &[usize], node: usize, parents: &[usize]) -> f64 {
    (cards[node] as f64 - 1.0) * parents.iter().map(|&p| cards[p] as f64).product::<f64>()
}

/// Maximum-likelihood log-likelihood of one family minus `(ln N / 2)` per free parameter.
pub fn family_score(data: &CodedData, node: usize, parents: &[usize]) -> f64 {
    let mut ll = 0.0;
    let mut configs: Vec<(u128, Vec<usize>)> = family_counts(data, node, parents).into_iter().collect();
    configs.sort_unstable_by_key(|c| c.0);
    for (_, c) in configs {
        let total: usize = c.iter().sum();
        let t = total as f64;
        for k in c.into_iter().filter(|&k| k > 0) {
            let k = k as f64;
            ll += k * (k / t).ln();
        }
    }
    let n = data.n_rows() as f64;
    ll - 0.5 * n.ln() * family_parameters(&data.cards, node, parents)
}

/// MDL score of a structure; higher is better.
pub fn mdl_score(dag: &Dag, data: &CodedData) -> Result<f64> {
    check_data(data)?;
    if dag.n_nodes() != data.n_vars() {
        return Err(Error::SchemaMismatch("structure and data disagree on variable count".into()));
    }
    Ok((0..dag.n_nodes()).map(|v| family_score(data, v, &dag.parents[v])).sum())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub max_parents: Option<usize>,
    pub exec: Exec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Add(usize, usize),
    Remove(usize, usize),
    Reverse(usize, usize),
}

/// Hill climbing from the empty graph over edge additions, removals and reversals,
/// taking the best improving move until none is left.
pub fn greedy_search(data: &CodedData, opts: &SearchOptions) -> Result<Dag> {
    check_data(data)?;
    let n = data.n_vars();
    let cap = opts.max_parents.unwrap_or(usize::MAX);
    let mut dag = Dag::empty(n);
    let mut cache: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
    let with = |ps: &[usize], x: usize| {
        let mut v = ps.to_vec();
        if let Err(pos) = v.binary_search(&x) {
            v.insert(pos, x);
        }
        v
    };
    let without = |ps: &[usize], x: usize| ps.iter().copied().filter(|&p| p != x).collect::<Vec<_>>();
    loop {
        let mut moves = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if u == v {
                    continue;
                }
                if dag.has_edge(u, v) {
                    moves.push(Move::Remove(u, v));
                    if dag.parents[u].len() < cap {
                        let mut t = dag.clone();
                        t.remove_parent(v, u);
                        if !t.reaches(u, v) {
                            moves.push(Move::Reverse(u, v));
                        }
                    }
                } else if !dag.has_edge(v, u) && dag.parents[v].len() < cap && !dag.reaches(v, u) {
                    moves.push(Move::Add(u, v));
                }
            }
        }
        // families each move needs
        let families = |m: &Move| -> Vec<(usize, Vec<usize>)> {
            match *m {
                Move::Add(u, v) => vec![(v, with(&dag.parents[v], u))],
                Move::Remove(u, v) => vec![(v, without(&dag.parents[v], u))],
                Move::Reverse(u, v) => vec![(v, without(&dag.parents[v], u)), (u, with(&dag.parents[u], v))],
            }
        };
        let mut needed: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut queued = HashSet::new();
        for f in moves.iter().flat_map(families).chain((0..n).map(|v| (v, dag.parents[v].clone()))) {
            if !cache.contains_key(&f) && queued.insert(f.clone()) {
                needed.push(f);
            }
        }
        let scores = par::map_slice(opts.exec, &needed, |(v, ps)| family_score(data, *v, ps));
        cache.extend(needed.into_iter().zip(scores));
        let cur = |v: usize| cache[&(v, dag.parents[v].clone())];
        let mut best: Option<(f64, Move)> = None;
        for m in &moves {
            let delta = match *m {
                Move::Add(u, v) => cache[&(v, with(&dag.parents[v], u))] - cur(v),
                Move::Remove(u, v) => cache[&(v, without(&dag.parents[v], u))] - cur(v),
                Move::Reverse(u, v) => {
                    cache[&(v, without(&dag.parents[v], u))] - cur(v) + cache[&(u, with(&dag.parents[u], v))]
                        - cur(u)
                }
            };
            if delta > 1e-9 * (1.0 + cur(0).abs()) && best.is_none_or(|(d, _)| delta > d) {
                best = Some((delta, *m));
            }
        }
        match best {
            None => return Ok(dag),
            Some((_, Move::Add(u, v))) => dag.insert_parent(v, u),
            Some((_, Move::Remove(u, v))) => dag.remove_parent(v, u),
            Some((_, Move::Reverse(u, v))) => {
                dag.remove_parent(v, u);
                dag.insert_parent(u, v);
            }
        }
        debug_assert!(dag.is_acyclic());
    }
}

pub const EXACT_SEARCH_LIMIT: usize = 12;

fn mask_members(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask & (1 << i) != 0).collect()
}

/// Globally MDL-optimal structure by dynamic programming over variable subsets:
/// best parent sets per node and candidate set, then best sink orderings.
pub fn exact_search(data: &CodedData, max_vars: usize, opts: &SearchOptions) -> Result<Dag> {
    check_data(data)?;
    let n = data.n_vars();
    let limit = max_vars.min(EXACT_SEARCH_LIMIT);
    if n > limit {
        return Err(Error::ExactSearchLimit { limit, got: n });
    }
    let full = 1usize << n;
    let cap = opts.max_parents.unwrap_or(n);
    // local scores for every (node, parent mask without the node)
    let jobs: Vec<(usize, usize)> = (0..n)
        .flat_map(|v| (0..full).filter(move |m| m & (1 << v) == 0).map(move |m| (v, m)))
        .filter(|&(_, m)| m.count_ones() as usize <= cap)
        .collect();
    let local = par::map_slice(opts.exec, &jobs, |&(v, m)| family_score(data, v, &mask_members(m, n)));
    let mut score = vec![vec![f64::NEG_INFINITY; full]; n];
    for (&(v, m), s) in jobs.iter().zip(local) {
        score[v][m] = s;
    }
    // best parent set within each candidate mask
    let mut best_score = vec![vec![f64::NEG_INFINITY; full]; n];
    let mut best_set = vec![vec![0usize; full]; n];
    for v in 0..n {
        for m in 0..full {
            if m & (1 << v) != 0 {
                continue;
            }
            let (mut bs, mut bset) = (score[v][m], m);
            for x in 0..n {
                if m & (1 << x) != 0 {
                    let sub = m & !(1 << x);
                    if best_score[v][sub] > bs {
                        bs = best_score[v][sub];
                        bset = best_set[v][sub];
                    }
                }
            }
            best_score[v][m] = bs;
            best_set[v][m] = bset;
        }
    }
    // best network on every subset, choosing its sink
    let mut net = vec![f64::NEG_INFINITY; full];
    let mut sink = vec![usize::MAX; full];
    net[0] = 0.0;
    for w in 1..full {
        for s in 0..n {
            if w & (1 << s) != 0 {
                let rest = w & !(1 << s);
                let cand = net[rest] + best_score[s][rest];
                if cand > net[w] {
                    net[w] = cand;
                    sink[w] = s;
                }
            }
        }
    }
    let mut dag = Dag::empty(n);
    let mut w = full - 1;
    while w != 0 {
        let s = sink[w];
        let rest = w & !(1 << s);
        dag.parents[s] = mask_members(best_set[s][rest], n);
        w = rest;
    }
    Ok(dag)
}

/// Conditional probability tables. Parent configurations seen in the data carry
/// maximum-likelihood frequencies; unseen ones fall back to a Laplace estimate
/// (pseudo-count 1 on zero counts, i.e. uniform).
#[derive(Debug, Clone, PartialEq)]
pub struct CptSet {
    pub cards: Vec<usize>,
    pub tables: Vec<HashMap<u128, Vec<f64>>>,
}

impl CptSet {
    pub fn fit(dag: &Dag, data: &CodedData) -> Result<Self> {
        check_data(data)?;
        if dag.n_nodes() != data.n_vars() {
            return Err(Error::SchemaMismatch("structure and data disagree on variable count".into()));
        }
        let tables = (0..dag.n_nodes())
            .map(|v| {
                family_counts(data, v, &dag.parents[v])
                    .into_iter()
                    .map(|(k, c)| {
                        let t: usize = c.iter().sum();
                        (k, c.into_iter().map(|x| x as f64 / t as f64).collect())
                    })
                    .collect()
            })
            .collect();
        Ok(CptSet {
            cards: data.cards.clone(),
            tables,
        })
    }

    /// Probabilities of `node` given the parent values found in `row`.
    pub fn distribution(&self, dag: &Dag, node: usize, row: &[usize]) -> Vec<f64> {
        let key = config_index(row, &dag.parents[node], &self.cards);
        match self.tables[node].get(&key) {
            Some(p) => p.clone(),
            None => vec![1.0 / self.cards[node] as f64; self.cards[node]],
        }
    }

    /// Sets the table entry of `node` for the parent values in `parent_values`
    /// (ordered like the node's parent list).
    pub fn set(&mut self, dag: &Dag, node: usize, parent_values: &[usize], probs: Vec<f64>) {
        let key = dag.parents[node]
            .iter()
            .zip(parent_values)
            .fold(0u128, |acc, (&p, &v)| acc * self.cards[p] as u128 + v as u128);
        self.tables[node].insert(key, probs);
    }

    pub fn empty(cards: Vec<usize>) -> Self {
        let n = cards.len();
        CptSet {
            cards,
            tables: vec![HashMap::new(); n],
        }
    }
}

const SAMPLE_CHUNK: usize = 4096;

/// Parent-first sampling along a topological order. Rows are produced in fixed-size
/// chunks with their own RNG streams, so the output does not depend on threading.
pub fn ancestral_sample(dag: &Dag, cpts: &CptSet, count: usize, seed: u64, exec: Exec) -> Result<Vec<Vec<usize>>> {
    let order = dag
        .topological_order()
        .ok_or_else(|| Error::Config("structure has a cycle".into()))?;
    let chunks = count.div_ceil(SAMPLE_CHUNK);
    let parts = par::map_range(exec, chunks, |c| {
        let mut rng = rng_from_seed(derive_seed(seed, "bn-sample", c as u64));
        let len = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
        (0..len)
            .map(|_| {
                let mut row = vec![0usize; dag.n_nodes()];
                for &v in &order {
                    let p = cpts.distribution(dag, v, &row);
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = p.iter().rposition(|&x| x > 0.0).unwrap_or(0);
                    for (k, &pk) in p.iter().enumerate() {
                        acc += pk;
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    row[v] = pick;
                }
                row
            })
            .collect::<Vec<_>>()
    });
    Ok(parts.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BnAlgorithm {
    ChowLiu,
    Greedy,
    Exact,
}

impl BnAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            BnAlgorithm::ChowLiu => "chow-liu",
            BnAlgorithm::Greedy => "greedy",
            BnAlgorithm::Exact => "exact",
        }
    }
}

/// A structure plus CPTs fitted to a discretized training pool.
#[derive(Debug, Clone)]
pub struct BayesNet {
    pub schema: Arc<Schema>,
    pub algorithm: BnAlgorithm,
    pub dag: Dag,
    pub cpts: CptSet,
    pub runtime_seconds: f64,
    pub score: f64,
}

impl BayesNet {
    pub fn fit(train: &AgentPool, algorithm: BnAlgorithm, opts: &SearchOptions) -> Result<Self> {
        if train.schema.mode != EncodingMode::DiscretizeAll {
            return Err(Error::Config("Bayesian networks need a discretize-all schema".into()));
        }
        let data = train.codes()?;
        let start = Instant::now();
        let dag = match algorithm {
            BnAlgorithm::ChowLiu => chow_liu(&data, opts.exec)?,
            BnAlgorithm::Greedy => greedy_search(&data, opts)?,
            BnAlgorithm::Exact => exact_search(&data, EXACT_SEARCH_LIMIT, opts)?,
        };
        let runtime_seconds = start.elapsed().as_secs_f64();
        let cpts = CptSet::fit(&dag, &data)?;
        let score = mdl_score(&dag, &data)?;
        Ok(BayesNet {
            schema: train.schema.clone(),
            algorithm,
            dag,
            cpts,
            runtime_seconds,
            score,
        })
    }

    pub fn sample(&self, count: usize, seed: u64, exec: Exec) -> Result<AgentPool> {
        let rows = ancestral_sample(&self.dag, &self.cpts, count, seed, exec)?;
        let mut rng = substream(seed, "bn-bins", 0);
        AgentPool::from_codes(self.schema.clone(), &rows, Provenance::Generated, &mut rng)
    }

    /// Rebuilds a network saved with [`BayesNet::to_document`].
    pub fn from_document(schema: Arc<Schema>, doc: BnDocument) -> Result<Self> {
        if doc.cards != schema.cardinalities()
            || doc.nodes.iter().zip(&schema.variables).any(|(n, v)| n.name != v.name)
        {
            return Err(Error::SchemaMismatch("saved network does not match the schema".into()));
        }
        let (algorithm, runtime_seconds, score) = (doc.algorithm, doc.runtime_seconds, doc.mdl_score);
        let (dag, cpts) = doc.into_parts()?;
        Ok(BayesNet {
            schema,
            algorithm,
            dag,
            cpts,
            runtime_seconds,
            score,
        })
    }

    pub fn to_document(&self) -> BnDocument {
        let cards = &self.cpts.cards;
        let nodes = (0..self.dag.n_nodes())
            .map(|v| {
                let parents = self.dag.parents[v].clone();
                let mut entries: Vec<CptEntry> = self.cpts.tables[v]
                    .iter()
                    .map(|(&key, probs)| {
                        let mut k = key;
                        let mut values = vec![0usize; parents.len()];
                        for (slot, &p) in parents.iter().enumerate().rev() {
                            values[slot] = (k % cards[p] as u128) as usize;
                            k /= cards[p] as u128;
                        }
                        CptEntry {
                            parent_values: values,
                            probs: probs.clone(),
                        }
                    })
                    .collect();
                entries.sort_by(|a, b| a.parent_values.cmp(&b.parent_values));
                BnNode {
                    name: self.schema.variables[v].name.clone(),
                    parents,
                    table: entries,
                }
            })
            .collect();
        BnDocument {
            algorithm: self.algorithm,
            runtime_seconds: self.runtime_seconds,
            mdl_score: self.score,
            cards: cards.clone(),
            nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptEntry {
    pub parent_values: Vec<usize>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnNode {
    pub name: String,
    pub parents: Vec<usize>,
    pub table: Vec<CptEntry>,
}

/// JSON form of a learned network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnDocument {
    pub algorithm: BnAlgorithm,
    pub runtime_seconds: f64,
    pub mdl_score: f64,
    pub cards: Vec<usize>,
    pub nodes: Vec<BnNode>,
}

impl BnDocument {
    pub fn into_parts(self) -> Result<(Dag, CptSet)> {
        let dag = Dag {
            parents: self.nodes.iter().map(|n| n.parents.clone()).collect(),
        };
        if !dag.is_acyclic() || dag.parents.iter().flatten().any(|&p| p >= self.cards.len()) {
            return Err(Error::Config("invalid network structure".into()));
        }
        let mut cpts = CptSet::empty(self.cards.clone());
        for (v, node) in self.nodes.into_iter().enumerate() {
            for e in node.table {
                cpts.set(&dag, v, &e.parent_values, e.probs);
            }
        }
        Ok((dag, cpts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn toy(n_each: usize) -> CodedData {
        let mut rows = vec![vec![0, 0]; n_each];
        rows.extend(vec![vec![1, 1]; n_each]);
        CodedData::new(vec![2, 2], rows).unwrap()
    }

    /// Exact product table of two fair bits.
    fn independent_bits(n_each: usize) -> CodedData {
        let cells = [vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
        let rows: Vec<Vec<usize>> = cells.iter().cycle().take(4 * n_each).cloned().collect();
        CodedData::new(vec![2, 2], rows).unwrap()
    }

    fn sample_chain(n: usize, seed: u64) -> CodedData {
        // X -> Y -> Z with strong copying
        let mut rng = rng_from_seed(seed);
        let rows = (0..n)
            .map(|_| {
                let x = rng.random_range(0..3);
                let y = if rng.random_bool(0.85) { x } else { rng.random_range(0..3) };
                let z = if rng.random_bool(0.85) { y } else { rng.random_range(0..3) };
                vec![x, y, z]
            })
            .collect();
        CodedData::new(vec![3, 3, 3], rows).unwrap()
    }

    #[test]
    fn mutual_information_cases() {
        assert!(mutual_information(&independent_bits(25), 0, 1).unwrap().abs() < 1e-15);
        let same = toy(500);
        assert!((mutual_information(&same, 0, 1).unwrap() - 2f64.ln()).abs() < 1e-12);
        // direct evaluation on the 2x2 table {0.5, 0, 0, 0.5}
        let direct = 2.0 * 0.5 * (0.5f64 / (0.5 * 0.5)).ln();
        assert!((mutual_information(&same, 1, 0).unwrap() - direct).abs() < 1e-12);
        assert!(matches!(
            mutual_information(&CodedData::new(vec![2, 2], vec![]).unwrap(), 0, 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn chow_liu_small_cases() {
        let d = chow_liu(&toy(500), Exec::Sequential).unwrap();
        assert_eq!(d.edges(), vec![(0, 1)]);
        let d = chow_liu(&independent_bits(10), Exec::Sequential).unwrap();
        assert_eq!(d.edges(), vec![(0, 1)]);
        assert!(chow_liu(&CodedData::new(vec![2], vec![vec![0]]).unwrap(), Exec::Sequential).is_err());
    }

    #[test]
    fn chow_liu_recovers_chain_skeleton_against_brute_force() {
        let data = sample_chain(5000, 1);
        let tree = chow_liu(&data, Exec::Parallel).unwrap();
        assert_eq!(tree.skeleton(), vec![(0, 1), (1, 2)]);
        let mi = |i, j| mutual_information(&data, i, j).unwrap();
        let trees = [[(0, 1), (1, 2)], [(0, 1), (0, 2)], [(0, 2), (1, 2)]];
        let best = trees
            .iter()
            .max_by(|a, b| {
                let sa: f64 = a.iter().map(|&(i, j)| mi(i, j)).sum();
                let sb: f64 = b.iter().map(|&(i, j)| mi(i, j)).sum();
                sa.total_cmp(&sb)
            })
            .unwrap();
        assert_eq!(tree.skeleton(), best.to_vec());
        assert_eq!(tree.edges().len(), 2);
    }

    #[test]
    fn mdl_toy_and_equivalence() {
        let data = toy(500);
        let empty = mdl_score(&Dag::empty(2), &data).unwrap();
        let xy = mdl_score(&Dag::from_edges(2, &[(0, 1)]).unwrap(), &data).unwrap();
        let yx = mdl_score(&Dag::from_edges(2, &[(1, 0)]).unwrap(), &data).unwrap();
        assert!(xy > empty);
        assert!((xy - yx).abs() < 1e-9);
        // by hand: LL_empty = 2000 ln 0.5, LL_xy = 1000 ln 0.5; penalties 2 and 3 params
        let half = 0.5f64.ln();
        let pen = 0.5 * 1000f64.ln();
        assert!((empty - (2000.0 * half - 2.0 * pen)).abs() < 1e-9);
        assert!((xy - (1000.0 * half - 3.0 * pen)).abs() < 1e-9);
    }

    #[test]
    fn independent_data_prefers_empty_graph() {
        let data = independent_bits(250);
        let empty = mdl_score(&Dag::empty(2), &data).unwrap();
        let edge = mdl_score(&Dag::from_edges(2, &[(0, 1)]).unwrap(), &data).unwrap();
        assert!(empty >= edge);
        let opts = SearchOptions::default();
        assert_eq!(greedy_search(&data, &opts).unwrap(), Dag::empty(2));
        assert_eq!(exact_search(&data, 12, &opts).unwrap(), Dag::empty(2));
    }

    #[test]
    fn searches_find_toy_connection() {
        let data = toy(500);
        let opts = SearchOptions::default();
        let g = greedy_search(&data, &opts).unwrap();
        let e = exact_search(&data, 12, &opts).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(e.edges().len(), 1);
        // exhaustive: the three two-node structures
        let all = [Dag::empty(2), Dag::from_edges(2, &[(0, 1)]).unwrap(), Dag::from_edges(2, &[(1, 0)]).unwrap()];
        let best = all.iter().map(|d| mdl_score(d, &data).unwrap()).fold(f64::NEG_INFINITY, f64::max);
        assert!((mdl_score(&e, &data).unwrap() - best).abs() < 1e-9);
        assert!((mdl_score(&g, &data).unwrap() - best).abs() < 1e-9);
    }

    /// Every DAG over 3 labelled nodes (25 of them) by brute force.
    fn all_dags3() -> Vec<Dag> {
        let pairs = [(0, 1), (0, 2), (1, 2)];
        let mut out = Vec::new();
        for code in 0..27 {
            let mut c = code;
            let mut edges = Vec::new();
            for &(a, b) in &pairs {
                match c % 3 {
                    1 => edges.push((a, b)),
                    2 => edges.push((b, a)),
                    _ => {}
                }
                c /= 3;
            }
            if let Ok(d) = Dag::from_edges(3, &edges) {
                out.push(d);
            }
        }
        out
    }

    #[test]
    fn exact_search_matches_exhaustive_enumeration() {
        assert_eq!(all_dags3().len(), 25);
        for seed in 0..4 {
            let data = sample_chain(300, seed);
            let best = all_dags3()
                .iter()
                .map(|d| mdl_score(d, &data).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            let opts = SearchOptions::default();
            let e = mdl_score(&exact_search(&data, 12, &opts).unwrap(), &data).unwrap();
            let g = mdl_score(&greedy_search(&data, &opts).unwrap(), &data).unwrap();
            let c = mdl_score(&chow_liu(&data, Exec::Sequential).unwrap(), &data).unwrap();
            let empty = mdl_score(&Dag::empty(3), &data).unwrap();
            assert!((e - best).abs() < 1e-9 * best.abs());
            assert!(e >= g - 1e-9 * e.abs() && g >= empty && g >= c - 1e-9 * g.abs());
        }
    }

    #[test]
    fn v_structure_optimum_beats_generating_dag() {
        let mut rng = rng_from_seed(12);
        let rows = (0..3000)
            .map(|_| {
                let a = rng.random_range(0..2);
                let b = rng.random_range(0..2);
                let c = if rng.random_bool(0.9) { a ^ b } else { rng.random_range(0..2) };
                let d = if rng.random_bool(0.8) { c } else { rng.random_range(0..2) };
                vec![a, b, c, d]
            })
            .collect();
        let data = CodedData::new(vec![2; 4], rows).unwrap();
        let truth = Dag::from_edges(4, &[(0, 2), (1, 2), (2, 3)]).unwrap();
        let opts = SearchOptions::default();
        let e = exact_search(&data, 12, &opts).unwrap();
        assert!(e.is_acyclic());
        assert!(mdl_score(&e, &data).unwrap() >= mdl_score(&truth, &data).unwrap() - 1e-9);
    }

    #[test]
    fn exact_search_refuses_too_many_variables() {
        let data = CodedData::new(vec![2; 13], vec![vec![0; 13]]).unwrap();
        assert!(matches!(
            exact_search(&data, 12, &SearchOptions::default()),
            Err(Error::ExactSearchLimit { limit: 12, got: 13 })
        ));
    }

    #[test]
    fn max_parents_cap_is_respected() {
        let mut rng = rng_from_seed(3);
        let rows = (0..2000)
            .map(|_| {
                let a = rng.random_range(0..2);
                let b = rng.random_range(0..2);
                let c = rng.random_range(0..2);
                vec![a, b, c, (a + b + c) % 2]
            })
            .collect();
        let data = CodedData::new(vec![2; 4], rows).unwrap();
        let opts = SearchOptions {
            max_parents: Some(1),
            exec: Exec::Sequential,
        };
        for dag in [greedy_search(&data, &opts).unwrap(), exact_search(&data, 12, &opts).unwrap()] {
            assert!(dag.parents.iter().all(|p| p.len() <= 1));
            assert!(dag.is_acyclic());
        }
    }

    #[test]
    fn deterministic_cpts_repeat_one_row() {
        let dag = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut cpts = CptSet::empty(vec![2, 3, 2]);
        cpts.set(&dag, 0, &[], vec![0.0, 1.0]);
        cpts.set(&dag, 1, &[1], vec![0.0, 0.0, 1.0]);
        cpts.set(&dag, 2, &[2], vec![1.0, 0.0]);
        let rows = ancestral_sample(&dag, &cpts, 500, 1, Exec::Parallel).unwrap();
        assert!(rows.iter().all(|r| r == &vec![1, 2, 0]));
    }

    #[test]
    fn toy_network_reproduces_two_prototypes() {
        let data = toy(500);
        let dag = chow_liu(&data, Exec::Sequential).unwrap();
        let cpts = CptSet::fit(&dag, &data).unwrap();
        let rows = ancestral_sample(&dag, &cpts, 10_000, 5, Exec::Parallel).unwrap();
        assert!(rows.iter().all(|r| r[0] == r[1]));
        let share = rows.iter().filter(|r| r[0] == 0).count() as f64 / 1e4;
        assert!((0.47..=0.53).contains(&share), "share {share}");
    }

    #[test]
    fn unseen_parent_configuration_is_uniform() {
        let data = toy(10);
        let dag = Dag::from_edges(2, &[(0, 1)]).unwrap();
        let mut cpts = CptSet::fit(&dag, &data).unwrap();
        assert_eq!(cpts.distribution(&dag, 1, &[0, 0]), vec![1.0, 0.0]);
        cpts.tables[1].clear();
        assert_eq!(cpts.distribution(&dag, 1, &[1, 0]), vec![0.5, 0.5]);
    }

    #[test]
    fn refit_on_samples_reproduces_cpts() {
        let data = sample_chain(4000, 7);
        let dag = chow_liu(&data, Exec::Sequential).unwrap();
        let cpts = CptSet::fit(&dag, &data).unwrap();
        let rows = ancestral_sample(&dag, &cpts, 100_000, 8, Exec::Parallel).unwrap();
        let refit = CptSet::fit(&dag, &CodedData::new(data.cards.clone(), rows).unwrap()).unwrap();
        for v in 0..3 {
            for (k, p) in &cpts.tables[v] {
                let q = &refit.tables[v][k];
                let tv: f64 = 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
                assert!(tv < 0.02, "node {v}: tv {tv}");
            }
        }
    }

    #[test]
    fn sampling_does_not_depend_on_execution_mode() {
        let data = sample_chain(500, 2);
        let dag = chow_liu(&data, Exec::Sequential).unwrap();
        let cpts = CptSet::fit(&dag, &data).unwrap();
        assert_eq!(
            ancestral_sample(&dag, &cpts, 10_000, 3, Exec::Sequential).unwrap(),
            ancestral_sample(&dag, &cpts, 10_000, 3, Exec::Parallel).unwrap()
        );
    }
}
