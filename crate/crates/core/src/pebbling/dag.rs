use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::PebbleError;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Input,
    L1Product,
    SumInternal,
    QKtRoot,
    Exp,
    RowSumInternal,
    RowSumRoot,
    Inverse,
    L2Product,
    AVSumInternal,
    AVRoot,
    Scale,
    /// Vertex of a hand-built DAG that is not part of the attention graph.
    Compute,
}

impl NodeKind {
    pub fn is_level1(self) -> bool {
        matches!(self, NodeKind::L1Product | NodeKind::SumInternal | NodeKind::QKtRoot)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub parents: Vec<NodeId>,
    pub level1: bool,
}

/// DAG whose node ids are a topological order. Inputs are the `Input`
/// vertices (exactly the sources); outputs are the sinks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    nodes: Vec<Node>,
    children: Vec<Vec<NodeId>>,
    inputs: Vec<NodeId>,
    outputs: Vec<NodeId>,
}

impl Dag {
    pub fn new(nodes: Vec<Node>) -> Result<Self, PebbleError> {
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(PebbleError::Malformed(format!("node at position {i} has id {}", node.id)));
            }
            if (node.kind == NodeKind::Input) != node.parents.is_empty() {
                return Err(PebbleError::Malformed(format!("node {i}: inputs must be exactly the sources")));
            }
            for &p in &node.parents {
                if p >= i {
                    return Err(PebbleError::Malformed(format!("node {i} has parent {p}; ids must be topological")));
                }
                if children[p].contains(&i) {
                    return Err(PebbleError::Malformed(format!("duplicate edge {p} -> {i}")));
                }
                children[p].push(i);
            }
        }
        let inputs = nodes.iter().filter(|n| n.kind == NodeKind::Input).map(|n| n.id).collect();
        let outputs = (0..nodes.len()).filter(|&i| children[i].is_empty()).collect();
        Ok(Dag { nodes, children, inputs, outputs })
    }

    /// Generic DAG from parent lists; sources become inputs, everything
    /// else a `Compute` vertex.
    pub fn from_parents(parents: &[Vec<NodeId>]) -> Result<Self, PebbleError> {
        let nodes = parents
            .iter()
            .enumerate()
            .map(|(id, ps)| Node {
                id,
                kind: if ps.is_empty() { NodeKind::Input } else { NodeKind::Compute },
                parents: ps.clone(),
                level1: false,
            })
            .collect();
        Dag::new(nodes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id].kind
    }

    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].parents
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id]
    }

    pub fn inputs(&self) -> &[NodeId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn is_input(&self, id: NodeId) -> bool {
        self.nodes[id].kind == NodeKind::Input
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes.iter().flat_map(|n| n.parents.iter().map(move |&p| (p, n.id)))
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), PebbleError> {
        for node in &self.nodes {
            serde_json::to_writer(&mut out, node)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, PebbleError> {
        let mut nodes = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            nodes.push(serde_json::from_str::<Node>(&line)?);
        }
        Dag::new(nodes)
    }
}

/// One summation tree: `leaves` combined by balanced binary `internals`
/// into a unary `root`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SumTree {
    pub leaves: Vec<NodeId>,
    pub internals: Vec<NodeId>,
    pub root: NodeId,
}

impl SumTree {
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.leaves.iter().chain(&self.internals).copied().chain(std::iter::once(self.root))
    }
}

/// The attention computation graph with index maps into its node classes.
#[derive(Debug, Clone)]
pub struct AttentionDag {
    dag: Dag,
    n: usize,
    d: usize,
    q: Vec<NodeId>,
    k: Vec<NodeId>,
    v: Vec<NodeId>,
    qk_trees: Vec<SumTree>,
    exp: Vec<NodeId>,
    row_sum_trees: Vec<SumTree>,
    inverse: Vec<NodeId>,
    l2: Vec<NodeId>,
    av_trees: Vec<SumTree>,
    out: Vec<NodeId>,
}

struct Builder {
    nodes: Vec<Node>,
}

impl Builder {
    fn push(&mut self, kind: NodeKind, parents: Vec<NodeId>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { id, kind, parents, level1: kind.is_level1() });
        id
    }

    /// Balanced binary reduction of `leaves`, split at the midpoint; returns
    /// the top vertex (a leaf itself when there is only one).
    fn reduce(&mut self, leaves: &[NodeId], kind: NodeKind, internals: &mut Vec<NodeId>) -> NodeId {
        if leaves.len() == 1 {
            return leaves[0];
        }
        let mid = leaves.len() / 2;
        let left = self.reduce(&leaves[..mid], kind, internals);
        let right = self.reduce(&leaves[mid..], kind, internals);
        let id = self.push(kind, vec![left, right]);
        internals.push(id);
        id
    }

    fn tree(&mut self, leaves: Vec<NodeId>, internal: NodeKind, root: NodeKind) -> SumTree {
        let mut internals = Vec::with_capacity(leaves.len().saturating_sub(1));
        let top = self.reduce(&leaves, internal, &mut internals);
        let root = self.push(root, vec![top]);
        SumTree { leaves, internals, root }
    }
}

/// Builds the attention DAG for `N×d` inputs. Node ids are topological.
pub fn build_attention_dag(n: usize, d: usize) -> Result<AttentionDag, PebbleError> {
    if n == 0 || d == 0 {
        return Err(PebbleError::Malformed("N and d must be positive".into()));
    }
    let mut b = Builder { nodes: Vec::new() };
    let q: Vec<NodeId> = (0..n * d).map(|_| b.push(NodeKind::Input, vec![])).collect();
    let k: Vec<NodeId> = (0..n * d).map(|_| b.push(NodeKind::Input, vec![])).collect();
    let v: Vec<NodeId> = (0..n * d).map(|_| b.push(NodeKind::Input, vec![])).collect();

    let mut qk_trees = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let leaves = (0..d).map(|l| b.push(NodeKind::L1Product, vec![q[i * d + l], k[j * d + l]])).collect();
            qk_trees.push(b.tree(leaves, NodeKind::SumInternal, NodeKind::QKtRoot));
        }
    }
    let exp: Vec<NodeId> = qk_trees.iter().map(|t| b.push(NodeKind::Exp, vec![t.root])).collect();
    let row_sum_trees: Vec<SumTree> = (0..n)
        .map(|i| b.tree(exp[i * n..(i + 1) * n].to_vec(), NodeKind::RowSumInternal, NodeKind::RowSumRoot))
        .collect();
    let inverse: Vec<NodeId> = row_sum_trees.iter().map(|t| b.push(NodeKind::Inverse, vec![t.root])).collect();

    let mut l2 = vec![0; n * n * d];
    for i in 0..n {
        for j in 0..n {
            for c in 0..d {
                l2[(i * n + j) * d + c] = b.push(NodeKind::L2Product, vec![exp[i * n + j], v[j * d + c]]);
            }
        }
    }
    let mut av_trees = Vec::with_capacity(n * d);
    for i in 0..n {
        for c in 0..d {
            let leaves = (0..n).map(|j| l2[(i * n + j) * d + c]).collect();
            av_trees.push(b.tree(leaves, NodeKind::AVSumInternal, NodeKind::AVRoot));
        }
    }
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        for c in 0..d {
            out.push(b.push(NodeKind::Scale, vec![av_trees[i * d + c].root, inverse[i]]));
        }
    }
    let dag = Dag::new(b.nodes)?;
    Ok(AttentionDag { dag, n, d, q, k, v, qk_trees, exp, row_sum_trees, inverse, l2, av_trees, out })
}

impl AttentionDag {
    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn q(&self, i: usize, l: usize) -> NodeId {
        self.q[i * self.d + l]
    }

    pub fn k(&self, j: usize, l: usize) -> NodeId {
        self.k[j * self.d + l]
    }

    pub fn v(&self, j: usize, c: usize) -> NodeId {
        self.v[j * self.d + c]
    }

    /// Summation tree of `(QKᵀ)[i, j]`.
    pub fn qk_tree(&self, i: usize, j: usize) -> &SumTree {
        &self.qk_trees[i * self.n + j]
    }

    pub fn qk_trees(&self) -> &[SumTree] {
        &self.qk_trees
    }

    pub fn exp(&self, i: usize, j: usize) -> NodeId {
        self.exp[i * self.n + j]
    }

    pub fn row_sum_tree(&self, i: usize) -> &SumTree {
        &self.row_sum_trees[i]
    }

    pub fn inverse(&self, i: usize) -> NodeId {
        self.inverse[i]
    }

    pub fn l2(&self, i: usize, j: usize, c: usize) -> NodeId {
        self.l2[(i * self.n + j) * self.d + c]
    }

    pub fn av_tree(&self, i: usize, c: usize) -> &SumTree {
        &self.av_trees[i * self.d + c]
    }

    pub fn output(&self, i: usize, c: usize) -> NodeId {
        self.out[i * self.d + c]
    }
}
