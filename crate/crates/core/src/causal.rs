//! Causal DAGs with latent confounders, d-separation with open-path
//! witnesses, the Bell-scenario diagrams, and an exact conditional
//! independence oracle for binary parameterizations.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{Allocation, DetectionBehavior, DetectorModel};
use crate::error::{Error, Result};
use crate::hvmodels::{
    conservation_posterior_check, derive_seed, posterior_deviation, random_conserving_model,
    random_model, Component, HiddenVariableModel, RandomKind,
};
use crate::scenario::{Behavior, BellScenario};
use crate::yurke_stoler::allocation_distribution;

/// Largest graph the CI oracle enumerates.
pub const MAX_CI_NODES: usize = 20;

/// On-disk graph format.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub nodes: Vec<String>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub bidirected: Vec<(String, String)>,
}

/// Directed acyclic graph. Bidirected edges are stored as fresh latent
/// parents named `[A<->B]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalDag {
    names: Vec<String>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    latent: Vec<bool>,
    bidirected: Vec<(usize, usize)>,
}

impl CausalDag {
    pub fn new(
        nodes: &[&str],
        edges: &[(&str, &str)],
        bidirected: &[(&str, &str)],
    ) -> Result<Self> {
        Self::from_file(&GraphFile {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: edges
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            bidirected: bidirected
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        })
    }

    pub fn from_file(file: &GraphFile) -> Result<Self> {
        let mut g = Self {
            names: Vec::new(),
            parents: Vec::new(),
            children: Vec::new(),
            latent: Vec::new(),
            bidirected: Vec::new(),
        };
        for n in &file.nodes {
            if g.names.contains(n) {
                return Err(Error::InvalidGraph(format!("duplicate node `{n}`")));
            }
            g.push_node(n.clone(), false);
        }
        for (a, b) in &file.edges {
            let (a, b) = (g.index(a)?, g.index(b)?);
            g.add_edge(a, b)?;
        }
        for (a, b) in &file.bidirected {
            let (ia, ib) = (g.index(a)?, g.index(b)?);
            if ia == ib {
                return Err(Error::InvalidGraph(format!(
                    "bidirected self-loop on `{a}`"
                )));
            }
            let u = g.push_node(format!("[{a}<->{b}]"), true);
            g.add_edge(u, ia)?;
            g.add_edge(u, ib)?;
            g.bidirected.push((ia, ib));
        }
        if g.topological_order().is_none() {
            return Err(Error::InvalidGraph("graph has a directed cycle".into()));
        }
        Ok(g)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }

    /// Graph file of the declared structure (latents from bidirected edges
    /// are folded back).
    pub fn to_file(&self) -> GraphFile {
        let declared: Vec<usize> = (0..self.names.len()).filter(|&i| !self.latent[i]).collect();
        GraphFile {
            nodes: declared.iter().map(|&i| self.names[i].clone()).collect(),
            edges: declared
                .iter()
                .flat_map(|&c| {
                    self.parents[c]
                        .iter()
                        .filter(|&&p| !self.latent[p])
                        .map(move |&p| (self.names[p].clone(), self.names[c].clone()))
                })
                .collect(),
            bidirected: self
                .bidirected
                .iter()
                .map(|&(a, b)| (self.names[a].clone(), self.names[b].clone()))
                .collect(),
        }
    }

    fn push_node(&mut self, name: String, latent: bool) -> usize {
        self.names.push(name);
        self.parents.push(Vec::new());
        self.children.push(Vec::new());
        self.latent.push(latent);
        self.names.len() - 1
    }

    fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        if a == b {
            return Err(Error::InvalidGraph(format!(
                "self-loop on `{}`",
                self.names[a]
            )));
        }
        if !self.children[a].contains(&b) {
            self.children[a].push(b);
            self.parents[b].push(a);
        }
        Ok(())
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    /// Number of nodes after latent expansion.
    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn num_edges(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn node_names(&self) -> &[String] {
        &self.names
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        match (self.index(a), self.index(b)) {
            (Ok(a), Ok(b)) => self.children[a].contains(&b),
            _ => false,
        }
    }

    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.names.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    fn ancestors_of(&self, set: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut out = set.clone();
        let mut stack: Vec<usize> = set.iter().copied().collect();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if out.insert(p) {
                    stack.push(p);
                }
            }
        }
        out
    }

    fn resolve(&self, names: &[String]) -> Result<BTreeSet<usize>> {
        names.iter().map(|n| self.index(n)).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DsepQuery {
    pub from: Vec<String>,
    pub to: Vec<String>,
    #[serde(default)]
    pub given: Vec<String>,
}

impl DsepQuery {
    pub fn new(from: &[&str], to: &[&str], given: &[&str]) -> Self {
        let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect();
        Self {
            from: v(from),
            to: v(to),
            given: v(given),
        }
    }
}

struct ResolvedQuery {
    from: BTreeSet<usize>,
    to: BTreeSet<usize>,
    given: BTreeSet<usize>,
}

fn resolve_query(g: &CausalDag, q: &DsepQuery) -> Result<ResolvedQuery> {
    let r = ResolvedQuery {
        from: g.resolve(&q.from)?,
        to: g.resolve(&q.to)?,
        given: g.resolve(&q.given)?,
    };
    if r.from.is_empty() || r.to.is_empty() {
        return Err(Error::InvalidQuery(
            "source and target sets must be nonempty".into(),
        ));
    }
    if !r.from.is_disjoint(&r.to) || !r.from.is_disjoint(&r.given) || !r.to.is_disjoint(&r.given) {
        return Err(Error::InvalidQuery(
            "source, target and conditioning sets must be disjoint".into(),
        ));
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathRole {
    Endpoint,
    Collider,
    NonCollider,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub node: String,
    pub role: PathRole,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DsepResult {
    pub separated: bool,
    /// An open path from the source to the target set when d-connected.
    pub witness: Option<Vec<PathStep>>,
    /// The witness drawn with arrows, e.g. `X_1 -> D_1 <- Lambda`.
    pub witness_text: Option<String>,
}

/// Nodes reachable from `from` along active trails given `given`
/// (reachability formulation of d-separation).
fn reachable(g: &CausalDag, from: &BTreeSet<usize>, given: &BTreeSet<usize>) -> BTreeSet<usize> {
    let anc = g.ancestors_of(given);
    // Direction flag: true when the trail arrives from a child (moving up).
    let mut visited: BTreeSet<(usize, bool)> = BTreeSet::new();
    let mut queue: VecDeque<(usize, bool)> = from.iter().map(|&v| (v, true)).collect();
    let mut out = BTreeSet::new();
    while let Some((v, up)) = queue.pop_front() {
        if !visited.insert((v, up)) {
            continue;
        }
        if !given.contains(&v) {
            out.insert(v);
        }
        if up {
            if !given.contains(&v) {
                for &p in &g.parents[v] {
                    queue.push_back((p, true));
                }
                for &c in &g.children[v] {
                    queue.push_back((c, false));
                }
            }
        } else {
            if !given.contains(&v) {
                for &c in &g.children[v] {
                    queue.push_back((c, false));
                }
            }
            if anc.contains(&v) {
                for &p in &g.parents[v] {
                    queue.push_back((p, true));
                }
            }
        }
    }
    out
}

fn descendants_in(g: &CausalDag, v: usize, set: &BTreeSet<usize>) -> bool {
    let mut stack = vec![v];
    let mut seen = BTreeSet::new();
    while let Some(u) = stack.pop() {
        if set.contains(&u) {
            return true;
        }
        for &c in &g.children[u] {
            if seen.insert(c) {
                stack.push(c);
            }
        }
    }
    false
}

/// Role of `mid` on the segment `prev - mid - next` and whether it is open.
fn triple_state(
    g: &CausalDag,
    prev: usize,
    mid: usize,
    next: usize,
    given: &BTreeSet<usize>,
) -> (PathRole, bool) {
    let into_from_prev = g.children[prev].contains(&mid);
    let into_from_next = g.children[next].contains(&mid);
    if into_from_prev && into_from_next {
        (PathRole::Collider, descendants_in(g, mid, given))
    } else {
        (PathRole::NonCollider, !given.contains(&mid))
    }
}

fn neighbors(g: &CausalDag, v: usize) -> impl Iterator<Item = usize> + '_ {
    g.parents[v].iter().chain(&g.children[v]).copied()
}

/// Depth-first search for a simple open path.
fn find_open_path(g: &CausalDag, q: &ResolvedQuery) -> Option<Vec<usize>> {
    fn dfs(
        g: &CausalDag,
        q: &ResolvedQuery,
        path: &mut Vec<usize>,
        on_path: &mut Vec<bool>,
    ) -> bool {
        let v = *path.last().expect("nonempty");
        if path.len() > 1 && q.to.contains(&v) {
            return true;
        }
        let nbrs: Vec<usize> = neighbors(g, v).collect();
        for w in nbrs {
            if on_path[w] || q.from.contains(&w) {
                continue;
            }
            if path.len() >= 2 {
                let prev = path[path.len() - 2];
                if !triple_state(g, prev, v, w, &q.given).1 {
                    continue;
                }
            }
            if q.given.contains(&w) && q.to.contains(&w) {
                continue;
            }
            path.push(w);
            on_path[w] = true;
            if dfs(g, q, path, on_path) {
                return true;
            }
            path.pop();
            on_path[w] = false;
        }
        false
    }
    for &s in &q.from {
        let mut path = vec![s];
        let mut on_path = vec![false; g.num_nodes()];
        on_path[s] = true;
        if dfs(g, q, &mut path, &mut on_path) {
            return Some(path);
        }
    }
    None
}

fn annotate(g: &CausalDag, path: &[usize], given: &BTreeSet<usize>) -> Vec<PathStep> {
    path.iter()
        .enumerate()
        .map(|(i, &v)| PathStep {
            node: g.names[v].clone(),
            role: if i == 0 || i + 1 == path.len() {
                PathRole::Endpoint
            } else {
                triple_state(g, path[i - 1], v, path[i + 1], given).0
            },
        })
        .collect()
}

/// Path drawn with arrows between consecutive nodes.
pub fn render_path(g: &CausalDag, steps: &[PathStep]) -> Result<String> {
    let mut out = String::new();
    for (i, s) in steps.iter().enumerate() {
        if i > 0 {
            let a = g.index(&steps[i - 1].node)?;
            let b = g.index(&s.node)?;
            out.push_str(if g.children[a].contains(&b) {
                " -> "
            } else {
                " <- "
            });
        }
        out.push_str(&s.node);
    }
    Ok(out)
}

pub fn d_separated(g: &CausalDag, q: &DsepQuery) -> Result<DsepResult> {
    let r = resolve_query(g, q)?;
    let reach = reachable(g, &r.from, &r.given);
    if reach.is_disjoint(&r.to) {
        return Ok(DsepResult {
            separated: true,
            witness: None,
            witness_text: None,
        });
    }
    let path = find_open_path(g, &r)
        .ok_or_else(|| Error::InvalidGraph("reachability and path search disagree".into()))?;
    let steps = annotate(g, &path, &r.given);
    let text = render_path(g, &steps)?;
    Ok(DsepResult {
        separated: false,
        witness: Some(steps),
        witness_text: Some(text),
    })
}

/// Independently re-checks that `steps` is a simple open path from the
/// source to the target set given the conditioning set, with correct role
/// annotations.
pub fn check_open_path(g: &CausalDag, q: &DsepQuery, steps: &[PathStep]) -> Result<bool> {
    let r = resolve_query(g, q)?;
    if steps.len() < 2 {
        return Ok(false);
    }
    let idx: Vec<usize> = steps
        .iter()
        .map(|s| g.index(&s.node))
        .collect::<Result<_>>()?;
    if !r.from.contains(&idx[0]) || !r.to.contains(idx.last().expect("nonempty")) {
        return Ok(false);
    }
    let distinct: BTreeSet<usize> = idx.iter().copied().collect();
    if distinct.len() != idx.len() {
        return Ok(false);
    }
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !g.children[a].contains(&b) && !g.children[b].contains(&a) {
            return Ok(false);
        }
    }
    for i in 1..idx.len() - 1 {
        let (a, v, b) = (idx[i - 1], idx[i], idx[i + 1]);
        let collider = g.children[a].contains(&v) && g.children[b].contains(&v);
        let open = if collider {
            // A collider is open when it or one of its descendants is observed.
            let mut stack = vec![v];
            let mut seen = BTreeSet::from([v]);
            let mut hit = false;
            while let Some(u) = stack.pop() {
                hit |= r.given.contains(&u);
                for &c in &g.children[u] {
                    if seen.insert(c) {
                        stack.push(c);
                    }
                }
            }
            hit
        } else {
            !r.given.contains(&v)
        };
        let role = if collider {
            PathRole::Collider
        } else {
            PathRole::NonCollider
        };
        if !open || steps[i].role != role {
            return Ok(false);
        }
    }
    Ok(steps[0].role == PathRole::Endpoint
        && steps.last().expect("nonempty").role == PathRole::Endpoint)
}

/// How a party's outcome and detection nodes are linked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalLink {
    /// Local latent `U_k` feeding `A_k` and `D_k`.
    Confounded,
    /// `A_k -> D_k`.
    OutcomeToDetection,
    /// `D_k -> A_k`.
    DetectionToOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "groups")]
pub enum DiagramKind {
    Lhv,
    /// Parties partitioned into groups (0-based); each group with at least
    /// two members shares a latent `G_<members>`.
    Bipartition(Vec<Vec<usize>>),
    /// A shared latent for every pair of parties.
    AllPairs,
}

pub fn node_x(k: usize) -> String {
    format!("X_{}", k + 1)
}
pub fn node_a(k: usize) -> String {
    format!("A_{}", k + 1)
}
pub fn node_d(k: usize) -> String {
    format!("D_{}", k + 1)
}
pub fn node_u(k: usize) -> String {
    format!("U_{}", k + 1)
}
pub const LAMBDA: &str = "Lambda";

fn group_name(group: &[usize]) -> String {
    let ids: Vec<String> = group.iter().map(|k| (k + 1).to_string()).collect();
    format!("G_{}", ids.join(""))
}

/// Causal diagram of an `N`-party Bell test with detection: `Lambda` and
/// `X_k` point into `A_k` and `D_k`, and `A_k`, `D_k` are linked locally.
pub fn bell_diagram(parties: usize, kind: &DiagramKind, link: LocalLink) -> Result<CausalDag> {
    if parties < 2 {
        return Err(Error::InvalidPartyCount {
            name: "bell diagram".into(),
            parties,
        });
    }
    let mut f = GraphFile::default();
    f.nodes.push(LAMBDA.into());
    let edge = |f: &mut GraphFile, a: &str, b: &str| f.edges.push((a.into(), b.into()));
    for k in 0..parties {
        for n in [node_x(k), node_a(k), node_d(k)] {
            f.nodes.push(n);
        }
        if link == LocalLink::Confounded {
            f.nodes.push(node_u(k));
        }
    }
    for k in 0..parties {
        let (x, a, d) = (node_x(k), node_a(k), node_d(k));
        edge(&mut f, LAMBDA, &a);
        edge(&mut f, LAMBDA, &d);
        edge(&mut f, &x, &a);
        edge(&mut f, &x, &d);
        match link {
            LocalLink::Confounded => {
                edge(&mut f, &node_u(k), &a);
                edge(&mut f, &node_u(k), &d);
            }
            LocalLink::OutcomeToDetection => edge(&mut f, &a, &d),
            LocalLink::DetectionToOutcome => edge(&mut f, &d, &a),
        }
    }
    let groups: Vec<Vec<usize>> = match kind {
        DiagramKind::Lhv => Vec::new(),
        DiagramKind::Bipartition(groups) => {
            let mut seen = vec![false; parties];
            for g in groups {
                for &k in g {
                    if k >= parties || seen[k] {
                        return Err(Error::InvalidGraph(
                            "groups must partition the parties".into(),
                        ));
                    }
                    seen[k] = true;
                }
            }
            if seen.iter().any(|s| !s) || groups.len() < 2 {
                return Err(Error::InvalidGraph(
                    "a bipartition needs at least two groups covering every party".into(),
                ));
            }
            groups.iter().filter(|g| g.len() > 1).cloned().collect()
        }
        DiagramKind::AllPairs => (0..parties)
            .flat_map(|i| (i + 1..parties).map(move |j| vec![i, j]))
            .collect(),
    };
    for g in &groups {
        let name = group_name(g);
        f.nodes.push(name.clone());
        for &k in g {
            edge(&mut f, &name, &node_a(k));
            edge(&mut f, &name, &node_d(k));
        }
    }
    CausalDag::from_file(&f)
}

/// Exact conditional-independence measurement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CiResult {
    /// `max_z ½ Σ_{x,y} |p(x,y|z) - p(x|z) p(y|z)|`.
    pub deviation: f64,
    pub worst_given: Vec<u8>,
    pub seed: u64,
}

/// Random binary parameterization: `p(v = 1 | parents)` uniform on `[0, 1]`.
fn random_cpts(g: &CausalDag, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..g.num_nodes())
        .map(|v| {
            (0..1usize << g.parents[v].len())
                .map(|_| rng.gen::<f64>())
                .collect()
        })
        .collect()
}

/// Builds the exact joint distribution of a random binary parameterization
/// and measures how far the query's conditional independence is violated.
pub fn ci_oracle(g: &CausalDag, seed: u64, q: &DsepQuery) -> Result<CiResult> {
    let n = g.num_nodes();
    if n > MAX_CI_NODES {
        return Err(Error::GraphTooLarge {
            nodes: n,
            limit: MAX_CI_NODES,
        });
    }
    let r = resolve_query(g, q)?;
    let cpt = random_cpts(g, seed);
    let order = g.topological_order().expect("acyclic");
    let xs: Vec<usize> = r.from.iter().copied().collect();
    let ys: Vec<usize> = r.to.iter().copied().collect();
    let zs: Vec<usize> = r.given.iter().copied().collect();
    let pack = |state: usize, set: &[usize]| -> usize {
        set.iter()
            .enumerate()
            .fold(0, |acc, (i, &v)| acc | ((state >> v & 1) << i))
    };
    let (nx, ny, nz) = (1usize << xs.len(), 1usize << ys.len(), 1usize << zs.len());
    let mut marg = vec![0.0; nx * ny * nz];
    for state in 0..1usize << n {
        let mut p = 1.0;
        for &v in &order {
            let pa = g.parents[v]
                .iter()
                .enumerate()
                .fold(0, |acc, (i, &u)| acc | ((state >> u & 1) << i));
            let p1 = cpt[v][pa];
            p *= if state >> v & 1 == 1 { p1 } else { 1.0 - p1 };
            if p == 0.0 {
                break;
            }
        }
        let (x, y, z) = (pack(state, &xs), pack(state, &ys), pack(state, &zs));
        marg[(z * ny + y) * nx + x] += p;
    }
    let mut deviation: f64 = 0.0;
    let mut worst_z = 0;
    for z in 0..nz {
        let block = &marg[z * ny * nx..(z + 1) * ny * nx];
        let pz: f64 = block.iter().sum();
        if pz <= 1e-300 {
            continue;
        }
        let px: Vec<f64> = (0..nx)
            .map(|x| (0..ny).map(|y| block[y * nx + x]).sum::<f64>() / pz)
            .collect();
        let py: Vec<f64> = (0..ny)
            .map(|y| (0..nx).map(|x| block[y * nx + x]).sum::<f64>() / pz)
            .collect();
        let tv = 0.5
            * (0..ny)
                .flat_map(|y| (0..nx).map(move |x| (x, y)))
                .map(|(x, y)| (block[y * nx + x] / pz - px[x] * py[y]).abs())
                .sum::<f64>();
        if tv > deviation {
            deviation = tv;
            worst_z = z;
        }
    }
    Ok(CiResult {
        deviation,
        worst_given: (0..zs.len()).map(|i| (worst_z >> i & 1) as u8).collect(),
        seed,
    })
}

/// Largest CI deviation over `restarts` random parameterizations.
pub fn ci_search(g: &CausalDag, q: &DsepQuery, restarts: usize, seed: u64) -> Result<CiResult> {
    let results = (0..restarts)
        .into_par_iter()
        .map(|r| ci_oracle(g, derive_seed(seed, r as u64), q))
        .collect::<Result<Vec<_>>>()?;
    results
        .into_iter()
        .reduce(|a, b| if b.deviation > a.deviation { b } else { a })
        .ok_or_else(|| Error::Precondition("at least one restart is required".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Claim {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClaimsReport {
    pub claims: Vec<Claim>,
    pub all_passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub seed: u64,
    /// Use conserving no-signaling models in the functional check; when
    /// false, models with setting-dependent losses are used instead.
    pub conservation: bool,
    pub ci_trials: usize,
    pub search_restarts: usize,
    pub functional_trials: usize,
    pub tolerance: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            conservation: true,
            ci_trials: 20,
            search_restarts: 200,
            functional_trials: 50,
            tolerance: 1e-8,
        }
    }
}

const LINKS: [LocalLink; 3] = [
    LocalLink::Confounded,
    LocalLink::OutcomeToDetection,
    LocalLink::DetectionToOutcome,
];

/// Factorization query: the outcome and setting of `group` versus those of
/// every other party, given `Lambda` and all detection nodes.
fn factorization_query(parties: usize, group: &[usize]) -> DsepQuery {
    let side = |inside: bool| -> Vec<String> {
        (0..parties)
            .filter(|k| group.contains(k) == inside)
            .flat_map(|k| [node_a(k), node_x(k)])
            .collect()
    };
    let mut given = vec![LAMBDA.to_string()];
    given.extend((0..parties).map(node_d));
    DsepQuery {
        from: side(true),
        to: side(false),
        given,
    }
}

fn claim(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Claim {
    Claim {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

/// Runs the fixed battery of graphical and functional statements about
/// detection postselection.
pub fn verify_postselection_claims(cfg: &BatteryConfig) -> Result<ClaimsReport> {
    let mut claims = Vec::new();

    // (a) Outcomes factorize given Lambda and the detection pattern.
    for parties in [2usize, 3] {
        for link in LINKS {
            let g = bell_diagram(parties, &DiagramKind::Lhv, link)?;
            let mut ok = true;
            let mut worst_ci: f64 = 0.0;
            for k in 0..parties {
                let q = factorization_query(parties, &[k]);
                ok &= d_separated(&g, &q)?.separated;
                if parties == 2 {
                    for t in 0..cfg.ci_trials {
                        worst_ci = worst_ci
                            .max(ci_oracle(&g, derive_seed(cfg.seed, t as u64), &q)?.deviation);
                    }
                }
            }
            let ok = ok && worst_ci < 1e-10;
            claims.push(claim(
                format!("factorization/lhv/N={parties}/{link:?}"),
                ok,
                format!("every party separated from the rest given Lambda and D; worst CI deviation {worst_ci:.3e}"),
            ));
        }
    }
    for groups in [
        vec![vec![0], vec![1, 2]],
        vec![vec![1], vec![0, 2]],
        vec![vec![2], vec![0, 1]],
    ] {
        for link in LINKS {
            let g = bell_diagram(3, &DiagramKind::Bipartition(groups.clone()), link)?;
            let mut ok = true;
            for grp in &groups {
                ok &= d_separated(&g, &factorization_query(3, grp))?.separated;
            }
            claims.push(claim(
                format!("factorization/hlnhv/{groups:?}/{link:?}"),
                ok,
                "each group separated from its complement given Lambda and D",
            ));
        }
    }
    let g = bell_diagram(3, &DiagramKind::AllPairs, LocalLink::Confounded)?;
    let r = d_separated(&g, &factorization_query(3, &[0]))?;
    claims.push(claim(
        "pair-latents/connect",
        !r.separated,
        format!(
            "with a shared latent for every pair no single party factorizes: {}",
            r.witness_text.unwrap_or_default()
        ),
    ));

    // (b) Conditioning on detection opens X_k - D_k <- Lambda.
    let two_party_diagram = bell_diagram(2, &DiagramKind::Lhv, LocalLink::Confounded)?;
    let q = DsepQuery::new(&["X_1"], &[LAMBDA], &["D_1", "D_2"]);
    let r = d_separated(&two_party_diagram, &q)?;
    let valid = match &r.witness {
        Some(w) => check_open_path(&two_party_diagram, &q, w)?,
        None => false,
    };
    let search = ci_search(&two_party_diagram, &q, cfg.search_restarts, cfg.seed)?;
    claims.push(claim(
        "selection/X_1-Lambda|D",
        !r.separated && valid && search.deviation > 0.01,
        format!(
            "witness {} (checked: {valid}); largest CI deviation {:.4}",
            r.witness_text.unwrap_or_default(),
            search.deviation
        ),
    ));
    for parties in [2usize, 3] {
        for link in LINKS {
            let g = bell_diagram(parties, &DiagramKind::Lhv, link)?;
            let mut ok = true;
            for k in 0..parties {
                let d: Vec<String> = (0..parties).map(node_d).collect();
                let q = DsepQuery {
                    from: vec![node_x(k)],
                    to: vec![LAMBDA.into()],
                    given: d,
                };
                let r = d_separated(&g, &q)?;
                ok &= !r.separated
                    && r.witness
                        .as_ref()
                        .map_or(Ok(false), |w| check_open_path(&g, &q, w))?;
                let q0 = DsepQuery {
                    from: vec![node_x(k)],
                    to: vec![LAMBDA.into()],
                    given: vec![],
                };
                ok &= d_separated(&g, &q0)?.separated;
            }
            claims.push(claim(
                format!("selection/N={parties}/{link:?}"),
                ok,
                "X_k and Lambda independent a priori but connected given the detection nodes",
            ));
        }
    }
    let q = DsepQuery::new(&["X_1"], &["D_2"], &["D_1"]);
    let r = d_separated(&two_party_diagram, &q)?;
    claims.push(claim(
        "selection/X_1-D_2|D_1",
        !r.separated,
        format!(
            "the graph alone allows X_1 to influence D_2 after selection: {}",
            r.witness_text.unwrap_or_default()
        ),
    ));

    // (c) No-signaling with particle conservation removes the setting
    // dependence of the posterior of Lambda.
    claims.push(functional_claim(cfg)?);

    let all_passed = claims.iter().all(|c| c.passed);
    Ok(ClaimsReport { claims, all_passed })
}

fn ideal_ring_model(parties: usize) -> Result<HiddenVariableModel> {
    let s = BellScenario::dichotomic(parties, 2)?;
    let alloc: Allocation<f64> = allocation_distribution(parties)?;
    let dets = vec![DetectorModel::ideal(); parties];
    let comps = (0..2)
        .map(|l| {
            let resp: Vec<Vec<usize>> = (0..parties)
                .map(|k| vec![(k + l) % 2, (k + l + 1) % 2])
                .collect();
            let b = Behavior::deterministic(s.clone(), &resp)?;
            let db: DetectionBehavior<f64> =
                crate::detection::apply_detector_model(&alloc, &dets, &b)?;
            Ok(Component::Joint {
                table: db.table().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    HiddenVariableModel::new(s, 2, vec![0.5, 0.5], comps)
}

fn functional_claim(cfg: &BatteryConfig) -> Result<Claim> {
    let mut worst: f64 = 0.0;
    if cfg.conservation {
        for t in 0..cfg.functional_trials {
            let parties = 2 + t % 2;
            let s = BellScenario::dichotomic(parties, 2)?;
            let m = random_conserving_model(&s, parties, 2, 4, derive_seed(cfg.seed, t as u64))?;
            worst =
                worst.max(conservation_posterior_check(&m, parties, cfg.tolerance)?.max_deviation);
        }
        for parties in [2usize, 3] {
            worst = worst.max(
                conservation_posterior_check(&ideal_ring_model(parties)?, parties, cfg.tolerance)?
                    .max_deviation,
            );
        }
        Ok(claim(
            "conservation/posterior",
            worst <= cfg.tolerance,
            format!("largest setting dependence of p(Lambda | d, x): {worst:.3e}"),
        ))
    } else {
        for t in 0..cfg.functional_trials {
            let s = BellScenario::dichotomic(2 + t % 2, 2)?;
            let m = random_model(&s, RandomKind::Lhv, 4, derive_seed(cfg.seed, t as u64))?;
            worst = worst.max(posterior_deviation(&m)?);
        }
        Ok(claim(
            "conservation/posterior",
            worst <= cfg.tolerance,
            format!(
                "without conservation, largest setting dependence of p(Lambda | d, x): {worst:.3e}"
            ),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_party_diagram() -> CausalDag {
        bell_diagram(2, &DiagramKind::Lhv, LocalLink::Confounded).unwrap()
    }

    #[test]
    fn two_party_diagram_shape() {
        let g = two_party_diagram();
        assert_eq!(g.num_nodes(), 9);
        assert_eq!(g.num_edges(), 12);
        assert!(g.has_edge("Lambda", "D_2"));
        assert!(g.has_edge("U_1", "A_1"));
        assert!(!g.has_edge("A_1", "A_2"));
    }

    #[test]
    fn bipartition_and_pair_diagrams() {
        let g = bell_diagram(
            3,
            &DiagramKind::Bipartition(vec![vec![0], vec![1, 2]]),
            LocalLink::Confounded,
        )
        .unwrap();
        assert!(g.has_edge("G_23", "A_2") && g.has_edge("G_23", "D_3"));
        assert_eq!(g.num_nodes(), 1 + 12 + 1);
        let g = bell_diagram(3, &DiagramKind::AllPairs, LocalLink::Confounded).unwrap();
        assert_eq!(g.num_nodes(), 1 + 12 + 3);
        assert!(bell_diagram(
            3,
            &DiagramKind::Bipartition(vec![vec![0, 1, 2]]),
            LocalLink::Confounded
        )
        .is_err());
        assert!(bell_diagram(
            3,
            &DiagramKind::Bipartition(vec![vec![0], vec![0, 2]]),
            LocalLink::Confounded
        )
        .is_err());
    }

    #[test]
    fn reference_queries() {
        let g = two_party_diagram();
        let q = DsepQuery::new(&["A_1", "X_1"], &["A_2", "X_2"], &["Lambda", "D_1", "D_2"]);
        assert!(d_separated(&g, &q).unwrap().separated);
        let q = DsepQuery::new(&["X_1"], &["Lambda"], &["D_1", "D_2"]);
        let r = d_separated(&g, &q).unwrap();
        assert!(!r.separated);
        assert_eq!(r.witness_text.as_deref(), Some("X_1 -> D_1 <- Lambda"));
        assert!(check_open_path(&g, &q, r.witness.as_ref().unwrap()).unwrap());
        assert!(
            d_separated(&g, &DsepQuery::new(&["X_1"], &["Lambda"], &[]))
                .unwrap()
                .separated
        );
    }

    #[test]
    fn query_errors() {
        let g = two_party_diagram();
        assert!(matches!(
            d_separated(&g, &DsepQuery::new(&["X_9"], &["Lambda"], &[])),
            Err(Error::UnknownNode(_))
        ));
        assert!(matches!(
            d_separated(&g, &DsepQuery::new(&["X_1"], &["X_1"], &[])),
            Err(Error::InvalidQuery(_))
        ));
    }

    #[test]
    fn path_checker_rejects_bad_paths() {
        let g = two_party_diagram();
        let q = DsepQuery::new(&["X_1"], &["Lambda"], &["D_1", "D_2"]);
        let step = |n: &str, role| PathStep {
            node: n.into(),
            role,
        };
        let wrong_role = [
            step("X_1", PathRole::Endpoint),
            step("D_1", PathRole::NonCollider),
            step("Lambda", PathRole::Endpoint),
        ];
        assert!(!check_open_path(&g, &q, &wrong_role).unwrap());
        let not_adjacent = [
            step("X_1", PathRole::Endpoint),
            step("Lambda", PathRole::Endpoint),
        ];
        assert!(!check_open_path(&g, &q, &not_adjacent).unwrap());
        let q0 = DsepQuery::new(&["X_1"], &["Lambda"], &[]);
        let closed = [
            step("X_1", PathRole::Endpoint),
            step("D_1", PathRole::Collider),
            step("Lambda", PathRole::Endpoint),
        ];
        assert!(!check_open_path(&g, &q0, &closed).unwrap());
    }

    #[test]
    fn json_roundtrip_and_bidirected_expansion() {
        let text = r#"{"nodes":["A","B","C"],"edges":[["A","B"]],"bidirected":[["B","C"]]}"#;
        let g = CausalDag::from_json(text).unwrap();
        assert_eq!(g.num_nodes(), 4);
        let back = g.to_file();
        assert_eq!(back.bidirected, vec![("B".to_string(), "C".to_string())]);
        assert_eq!(CausalDag::from_file(&back).unwrap(), g);
        // B <-> C makes A and C dependent given B.
        let r = d_separated(&g, &DsepQuery::new(&["A"], &["C"], &["B"])).unwrap();
        assert!(!r.separated);
        assert!(
            d_separated(&g, &DsepQuery::new(&["A"], &["C"], &[]))
                .unwrap()
                .separated
        );
        assert!(
            CausalDag::from_json(r#"{"nodes":["A","B"],"edges":[["A","B"],["B","A"]]}"#).is_err()
        );
        assert!(CausalDag::from_json(r#"{"nodes":["A","A"]}"#).is_err());
    }

    #[test]
    fn ci_oracle_on_known_cases() {
        let g = two_party_diagram();
        let sep = DsepQuery::new(&["A_1", "X_1"], &["A_2", "X_2"], &["Lambda", "D_1", "D_2"]);
        for seed in 0..50 {
            assert!(ci_oracle(&g, seed, &sep).unwrap().deviation < 1e-10);
        }
        let g2 = CausalDag::new(&["P", "Q"], &[], &[]).unwrap();
        let r = ci_oracle(&g2, 3, &DsepQuery::new(&["P"], &["Q"], &[])).unwrap();
        assert!(r.deviation < 1e-15);
        let conn = DsepQuery::new(&["X_1"], &["Lambda"], &["D_1", "D_2"]);
        assert!(ci_search(&g, &conn, 200, 0).unwrap().deviation > 0.01);
    }

    #[test]
    fn battery_and_negative_control() {
        let r = verify_postselection_claims(&BatteryConfig::default()).unwrap();
        for c in &r.claims {
            assert!(c.passed, "{c:?}");
        }
        let neg = verify_postselection_claims(&BatteryConfig {
            conservation: false,
            ..BatteryConfig::default()
        })
        .unwrap();
        assert!(!neg.all_passed);
        let failed: Vec<_> = neg
            .claims
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        assert_eq!(failed, ["conservation/posterior"]);
    }
}
