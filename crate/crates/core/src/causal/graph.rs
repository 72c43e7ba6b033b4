//! Directed acyclic graphs over named nodes, the two-slice template implied
//! by a set of structural masks, its multi-step unrolling, and d-separation.

use crate::envs::StructuralMasks;
use crate::{Error, Result};

/// A DAG with string-labelled nodes. Acyclicity is enforced on every edge
/// insertion, so a constructed graph is always valid.
#[derive(Debug, Clone)]
pub struct CausalGraph {
    labels: Vec<String>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    edges: usize,
}

impl CausalGraph {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Parameter("graph needs at least one node".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(Error::Parameter(format!("duplicate node label {l:?}")));
            }
        }
        let n = labels.len();
        Ok(CausalGraph { labels, parents: vec![Vec::new(); n], children: vec![Vec::new(); n], edges: 0 })
    }

    /// Anonymous nodes `v0..v{n-1}`.
    pub fn with_size(n: usize) -> Result<Self> {
        CausalGraph::new((0..n).map(|i| format!("v{i}")).collect())
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn label(&self, node: usize) -> Result<&str> {
        self.labels.get(node).map(String::as_str).ok_or_else(|| unknown(node, self.labels.len()))
    }

    pub fn find(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn parents(&self, node: usize) -> Result<&[usize]> {
        self.parents.get(node).map(Vec::as_slice).ok_or_else(|| unknown(node, self.labels.len()))
    }

    pub fn children(&self, node: usize) -> Result<&[usize]> {
        self.children.get(node).map(Vec::as_slice).ok_or_else(|| unknown(node, self.labels.len()))
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.children.get(from).is_some_and(|c| c.contains(&to))
    }

    /// Insert `from -> to`. Self-loops, duplicates, and edges that would close
    /// a directed cycle are rejected, keeping the graph a DAG at all times.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<()> {
        let n = self.labels.len();
        if from >= n {
            return Err(unknown(from, n));
        }
        if to >= n {
            return Err(unknown(to, n));
        }
        if from == to {
            return Err(Error::Parameter(format!("self-loop on node {:?}", self.labels[from])));
        }
        if self.children[from].contains(&to) {
            return Err(Error::Parameter(format!(
                "duplicate edge {:?} -> {:?}",
                self.labels[from], self.labels[to]
            )));
        }
        if self.reaches(to, from) {
            return Err(Error::Parameter(format!(
                "edge {:?} -> {:?} would create a cycle",
                self.labels[from], self.labels[to]
            )));
        }
        self.children[from].push(to);
        self.parents[to].push(from);
        self.edges += 1;
        Ok(())
    }

    /// Directed reachability `from ->* to`.
    fn reaches(&self, from: usize, to: usize) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; self.labels.len()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(v) = stack.pop() {
            for &c in &self.children[v] {
                if c == to {
                    return true;
                }
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        false
    }

    /// True iff every path between `x` and `y` is blocked by `z` under the
    /// chain/fork/collider rules (a collider passes only when it or one of its
    /// descendants is conditioned on). Implemented as active-trail reachability
    /// over (node, travel direction) states after collecting the ancestors of
    /// `z`; runs in O(nodes + edges).
    pub fn d_separated(&self, x: &[usize], y: &[usize], z: &[usize]) -> Result<bool> {
        let n = self.labels.len();
        for &v in x.iter().chain(y).chain(z) {
            if v >= n {
                return Err(unknown(v, n));
            }
        }
        let mut role = vec![0u8; n];
        for (bit, set) in [(1u8, x), (2, y), (4, z)] {
            for &v in set {
                if role[v] & !bit != 0 {
                    return Err(Error::Parameter(format!(
                        "node {:?} appears in more than one of X, Y, Z",
                        self.labels[v]
                    )));
                }
                role[v] |= bit;
            }
        }
        let in_y = |v: usize| role[v] & 2 != 0;
        let in_z = |v: usize| role[v] & 4 != 0;

        // Ancestors of z (inclusive): these are the nodes at which a collider
        // lets the trail turn back toward parents.
        let mut anc = vec![false; n];
        let mut stack: Vec<usize> = z.to_vec();
        for &v in z {
            anc[v] = true;
        }
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if !anc[p] {
                    anc[p] = true;
                    stack.push(p);
                }
            }
        }

        // Trail states: (node, arrived-from-child?).
        const FROM_CHILD: usize = 0;
        const FROM_PARENT: usize = 1;
        let mut visited = vec![[false; 2]; n];
        let mut stack: Vec<(usize, usize)> = x.iter().map(|&v| (v, FROM_CHILD)).collect();
        while let Some((v, dir)) = stack.pop() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if !in_z(v) && in_y(v) {
                return Ok(false);
            }
            if dir == FROM_CHILD {
                if !in_z(v) {
                    for &p in &self.parents[v] {
                        stack.push((p, FROM_CHILD));
                    }
                    for &c in &self.children[v] {
                        stack.push((c, FROM_PARENT));
                    }
                }
            } else {
                if !in_z(v) {
                    for &c in &self.children[v] {
                        stack.push((c, FROM_PARENT));
                    }
                }
                if anc[v] {
                    for &p in &self.parents[v] {
                        stack.push((p, FROM_CHILD));
                    }
                }
            }
        }
        Ok(true)
    }
}

fn unknown(node: usize, count: usize) -> Error {
    Error::Parameter(format!("unknown node {node} (graph has {count})"))
}

// ── Template construction ──────────────────────────────────────────────────

/// Node indices of the two-slice template graph. Slice `t` holds the state
/// the step starts from; the reward is emitted within the step, the next
/// state lands in slice `t+1`, and the observation reveals that next state.
#[derive(Debug, Clone)]
pub struct TemplateNodes {
    pub latent_prev: Vec<usize>,
    pub latent_cur: Vec<usize>,
    pub action: usize,
    pub prev_reward: usize,
    pub reward: usize,
    pub obs: usize,
}

/// One environment step as a DAG: `g@t -> r@t` (reward emission), `a@t ->
/// r@t`, `g@t -> g@t+1`, `a@t -> g@t+1`, `r@t-1 -> g@t+1` (the previously
/// received reward feeds the transition), and `g@t+1 -> o@t+1`.
pub fn template_graph(masks: &StructuralMasks) -> Result<(CausalGraph, TemplateNodes)> {
    masks.validate_shape()?;
    let d = masks.dims();
    let mut labels = Vec::with_capacity(2 * d + 4);
    for i in 0..d {
        labels.push(format!("g{i}@t"));
    }
    for i in 0..d {
        labels.push(format!("g{i}@t+1"));
    }
    labels.push("a@t".into());
    labels.push("r@t-1".into());
    labels.push("r@t".into());
    labels.push("o@t+1".into());
    let nodes = TemplateNodes {
        latent_prev: (0..d).collect(),
        latent_cur: (d..2 * d).collect(),
        action: 2 * d,
        prev_reward: 2 * d + 1,
        reward: 2 * d + 2,
        obs: 2 * d + 3,
    };
    let mut g = CausalGraph::new(labels)?;
    for i in 0..d {
        if masks.c_gr[i] == 1 {
            g.add_edge(nodes.latent_prev[i], nodes.reward)?;
        }
        for j in 0..d {
            if masks.c_gg[i][j] == 1 {
                g.add_edge(nodes.latent_prev[j], nodes.latent_cur[i])?;
            }
        }
        if masks.c_ag[i] == 1 {
            g.add_edge(nodes.action, nodes.latent_cur[i])?;
        }
        if masks.c_rg[i] == 1 {
            g.add_edge(nodes.prev_reward, nodes.latent_cur[i])?;
        }
        if masks.c_go[i] == 1 {
            g.add_edge(nodes.latent_cur[i], nodes.obs)?;
        }
    }
    if masks.c_ar == 1 {
        g.add_edge(nodes.action, nodes.reward)?;
    }
    Ok((g, nodes))
}

/// Node indices of the unrolled graph: `latent[s][i]` for slices `0..=steps`,
/// and per step `s` its action, emitted reward, and observation (which
/// reveals `latent[s+1]`).
#[derive(Debug, Clone)]
pub struct UnrolledNodes {
    pub latent: Vec<Vec<usize>>,
    pub action: Vec<usize>,
    pub reward: Vec<usize>,
    pub obs: Vec<usize>,
}

/// Unroll the template over `steps` environment steps, mirroring the rollout
/// semantics exactly: step `s` emits `reward[s]` from `(latent[s], action[s])`
/// and produces `latent[s+1]` from `(latent[s], action[s], reward[s-1])`.
pub fn unrolled_graph(masks: &StructuralMasks, steps: usize) -> Result<(CausalGraph, UnrolledNodes)> {
    masks.validate_shape()?;
    if steps == 0 {
        return Err(Error::Parameter("unrolling needs at least one step".into()));
    }
    let d = masks.dims();
    let mut labels = Vec::new();
    let mut latent = Vec::with_capacity(steps + 1);
    for s in 0..=steps {
        let base = labels.len();
        for i in 0..d {
            labels.push(format!("g{i}@{s}"));
        }
        latent.push((base..base + d).collect::<Vec<_>>());
    }
    let action: Vec<usize> = (0..steps)
        .map(|s| {
            labels.push(format!("a@{s}"));
            labels.len() - 1
        })
        .collect();
    let reward: Vec<usize> = (0..steps)
        .map(|s| {
            labels.push(format!("r@{s}"));
            labels.len() - 1
        })
        .collect();
    let obs: Vec<usize> = (0..steps)
        .map(|s| {
            labels.push(format!("o@{}", s + 1));
            labels.len() - 1
        })
        .collect();
    let nodes = UnrolledNodes { latent, action, reward, obs };
    let mut g = CausalGraph::new(labels)?;
    for s in 0..steps {
        for i in 0..d {
            if masks.c_gr[i] == 1 {
                g.add_edge(nodes.latent[s][i], nodes.reward[s])?;
            }
            for j in 0..d {
                if masks.c_gg[i][j] == 1 {
                    g.add_edge(nodes.latent[s][j], nodes.latent[s + 1][i])?;
                }
            }
            if masks.c_ag[i] == 1 {
                g.add_edge(nodes.action[s], nodes.latent[s + 1][i])?;
            }
            if s >= 1 && masks.c_rg[i] == 1 {
                g.add_edge(nodes.reward[s - 1], nodes.latent[s + 1][i])?;
            }
            if masks.c_go[i] == 1 {
                g.add_edge(nodes.latent[s + 1][i], nodes.obs[s])?;
            }
        }
        if masks.c_ar == 1 {
            g.add_edge(nodes.action[s], nodes.reward[s])?;
        }
    }
    Ok((g, nodes))
}
