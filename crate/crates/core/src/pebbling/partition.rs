//! `M`-partitions: disjoint parts covering the DAG, each with a dominator
//! set and a minimum set of at most `M` vertices, and no cyclic dependence
//! between parts.
//!
//! Inputs belong to parts like any other vertex. A part holding an input must
//! list it in its dominator set, since the empty path from that input already
//! ends inside the part.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Dag, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Part {
    pub vertices: BTreeSet<NodeId>,
    pub dominator: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MPartition {
    pub parts: Vec<Part>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionViolation {
    UnknownVertex {
        part: usize,
        vertex: NodeId,
    },
    /// P1: vertex placed in two parts.
    Overlap {
        vertex: NodeId,
        parts: (usize, usize),
    },
    /// P1: vertex in no part.
    Uncovered {
        vertex: NodeId,
    },
    /// P2: claimed dominator set larger than `M`.
    DominatorTooLarge {
        part: usize,
        size: usize,
        m: usize,
    },
    /// P2: input-to-part path avoiding the dominator set.
    NotDominated {
        part: usize,
        path: Vec<NodeId>,
    },
    /// P3: minimum set larger than `M`.
    MinimumTooLarge {
        part: usize,
        minimum: Vec<NodeId>,
        m: usize,
    },
    /// P4: parts depending on each other in a cycle; `edges[k]` leads from
    /// `parts[k]` into `parts[k + 1]` (wrapping around).
    Cycle {
        parts: Vec<usize>,
        edges: Vec<(NodeId, NodeId)>,
    },
}

/// Vertices of `part` with no children inside `part`.
pub fn minimum_set(dag: &Dag, part: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    part.iter().copied().filter(|&v| dag.children(v).iter().all(|c| !part.contains(c))).collect()
}

/// The in-boundary of `part`: inputs inside it plus outside parents of its
/// vertices. Always a dominator set.
pub fn boundary_dominator(dag: &Dag, part: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    let mut d = BTreeSet::new();
    for &v in part {
        if dag.is_input(v) {
            d.insert(v);
        }
        for &p in dag.parents(v) {
            if !part.contains(&p) {
                d.insert(p);
            }
        }
    }
    d
}

/// Shortest path from some input to `target` that avoids `blocked`, if any.
fn unblocked_path(dag: &Dag, blocked: &BTreeSet<NodeId>, target: &BTreeSet<NodeId>) -> Option<Vec<NodeId>> {
    let mut prev: Vec<Option<NodeId>> = vec![None; dag.len()];
    let mut seen = vec![false; dag.len()];
    let mut queue = VecDeque::new();
    for &i in dag.inputs() {
        if !blocked.contains(&i) {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(v) = queue.pop_front() {
        if target.contains(&v) {
            let mut path = vec![v];
            let mut cur = v;
            while let Some(p) = prev[cur] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for &c in dag.children(v) {
            if !seen[c] && !blocked.contains(&c) {
                seen[c] = true;
                prev[c] = Some(v);
                queue.push_back(c);
            }
        }
    }
    None
}

/// Checks P1 to P4 and reports every violation found.
pub fn verify_m_partition(dag: &Dag, m: usize, partition: &MPartition) -> Vec<PartitionViolation> {
    let mut out = Vec::new();
    let mut owner: Vec<Option<usize>> = vec![None; dag.len()];
    for (pi, part) in partition.parts.iter().enumerate() {
        for &v in part.vertices.iter().chain(&part.dominator) {
            if v >= dag.len() {
                out.push(PartitionViolation::UnknownVertex { part: pi, vertex: v });
            }
        }
        for &v in part.vertices.iter().filter(|&&v| v < dag.len()) {
            match owner[v] {
                Some(first) => out.push(PartitionViolation::Overlap { vertex: v, parts: (first, pi) }),
                None => owner[v] = Some(pi),
            }
        }
    }
    if !out.is_empty() {
        return out;
    }
    for (v, o) in owner.iter().enumerate() {
        if o.is_none() {
            out.push(PartitionViolation::Uncovered { vertex: v });
        }
    }

    for (pi, part) in partition.parts.iter().enumerate() {
        if part.dominator.len() > m {
            out.push(PartitionViolation::DominatorTooLarge { part: pi, size: part.dominator.len(), m });
        }
        if let Some(path) = unblocked_path(dag, &part.dominator, &part.vertices) {
            out.push(PartitionViolation::NotDominated { part: pi, path });
        }
        let minimum = minimum_set(dag, &part.vertices);
        if minimum.len() > m {
            out.push(PartitionViolation::MinimumTooLarge { part: pi, minimum: minimum.into_iter().collect(), m });
        }
    }

    if let Some(cycle) = dependence_cycle(dag, partition, &owner) {
        out.push(cycle);
    }
    out
}

/// Finds a cycle in the part-dependence digraph by depth-first search.
fn dependence_cycle(dag: &Dag, partition: &MPartition, owner: &[Option<usize>]) -> Option<PartitionViolation> {
    let h = partition.parts.len();
    // adj[a] holds (b, e) with e one DAG edge from part a into part b.
    let mut adj: Vec<Vec<(usize, (NodeId, NodeId))>> = vec![Vec::new(); h];
    for (s, t) in dag.edges() {
        if let (Some(a), Some(b)) = (owner[s], owner[t]) {
            if a != b && !adj[a].iter().any(|&(x, _)| x == b) {
                adj[a].push((b, (s, t)));
            }
        }
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; h];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for root in 0..h {
        if state[root] != 0 {
            continue;
        }
        state[root] = 1;
        stack.push((root, 0));
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next < adj[u].len() {
                let (w, _) = adj[u][*next];
                *next += 1;
                match state[w] {
                    0 => {
                        state[w] = 1;
                        stack.push((w, 0));
                    }
                    1 => {
                        let from = stack.iter().position(|&(x, _)| x == w).expect("w is on the stack");
                        let parts: Vec<usize> = stack[from..].iter().map(|&(x, _)| x).collect();
                        let edges = (0..parts.len())
                            .map(|k| {
                                let (a, b) = (parts[k], parts[(k + 1) % parts.len()]);
                                adj[a].iter().find(|&&(x, _)| x == b).expect("edge exists").1
                            })
                            .collect();
                        return Some(PartitionViolation::Cycle { parts, edges });
                    }
                    _ => {}
                }
            } else {
                state[u] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Number of level-1 vertices of `part`.
pub fn level1_vertex_count(dag: &Dag, part: &BTreeSet<NodeId>) -> usize {
    part.iter().filter(|&&v| dag.node(v).level1).count()
}

/// Cuts the topological order into consecutive parts, closing a part as
/// soon as adding the next vertex would push its boundary dominator set or
/// its minimum set beyond `m`. Consecutive parts never depend backwards, so
/// the result is acyclic. `m` must be at least the largest in-degree so a
/// single vertex always forms a valid part.
pub fn greedy_partition(dag: &Dag, m: usize) -> MPartition {
    let max_in = (0..dag.len()).map(|v| dag.parents(v).len()).max().unwrap_or(0);
    assert!(m >= max_in.max(1), "partition bound {m} below the largest in-degree {max_in}");
    let mut parts = Vec::new();
    let mut cur = BTreeSet::new();
    let mut dom = BTreeSet::new();
    let mut min_size = 0usize;
    for v in 0..dag.len() {
        let mut new_dom: Vec<NodeId> =
            dag.parents(v).iter().copied().filter(|p| !cur.contains(p) && !dom.contains(p)).collect();
        if dag.is_input(v) {
            new_dom.push(v);
        }
        // Parents of v already in the part stop being minimal.
        let absorbed = dag
            .parents(v)
            .iter()
            .filter(|p| cur.contains(*p) && dag.children(**p).iter().all(|c| !cur.contains(c)))
            .count();
        let fits = dom.len() + new_dom.len() <= m && min_size + 1 - absorbed <= m;
        if !fits && !cur.is_empty() {
            parts.push(Part { vertices: std::mem::take(&mut cur), dominator: std::mem::take(&mut dom) });
            new_dom = dag.parents(v).to_vec();
            if dag.is_input(v) {
                new_dom.push(v);
            }
            cur.insert(v);
            dom.extend(new_dom);
            min_size = 1;
            continue;
        }
        cur.insert(v);
        dom.extend(new_dom);
        min_size = min_size + 1 - absorbed;
    }
    if !cur.is_empty() {
        parts.push(Part { vertices: cur, dominator: dom });
    }
    MPartition { parts }
}
