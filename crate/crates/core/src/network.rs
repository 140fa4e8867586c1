//! Weighted directed influence graph.
//!
//! Nodes are dense integer ids. Each node carries a [`NodeKind`] tag recording
//! whether it is a real customer or a pseudonode added by channel augmentation,
//! and pseudonodes carry a fixed threshold. Adjacency is stored twice in CSR
//! form (by destination and by source) so that both the aggregate computation
//! and the activation push are contiguous scans.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ProductId;

/// Tolerance on the incoming weight-sum constraint.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub weight: f64,
}

/// Provenance tag of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum NodeKind {
    Real,
    /// The company pseudonode of a product; also the first media-chain node.
    ProductRoot { product: ProductId },
    /// Mass-media chain node `p^(step)` for `step >= 2`.
    MediaChain { product: ProductId, step: usize },
    /// Social-advertising intermediary for edge `src -> dst`.
    SocialGadget {
        product: ProductId,
        src: NodeId,
        dst: NodeId,
    },
}

impl NodeKind {
    pub fn is_real(&self) -> bool {
        matches!(self, NodeKind::Real)
    }
}

/// A single broken invariant reported by [`Network::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    WeightSum { node: NodeId, sum: f64 },
    WeightRange { src: NodeId, dst: NodeId, weight: f64 },
    SelfLoop { node: NodeId },
    DuplicateEdge { src: NodeId, dst: NodeId },
    AsymmetricSimilarity { u: NodeId, v: NodeId, uv: f64, vu: f64 },
    SimilarityRange { u: NodeId, v: NodeId, value: f64 },
    MissingFixedThreshold { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WeightSum { node, sum } => write!(f, "weight sum {sum} > 1 at {node}"),
            Violation::WeightRange { src, dst, weight } => {
                write!(f, "edge ({src},{dst}) weight {weight} outside (0,1]")
            }
            Violation::SelfLoop { node } => write!(f, "self-loop at {node}"),
            Violation::DuplicateEdge { src, dst } => write!(f, "duplicate edge ({src},{dst})"),
            Violation::AsymmetricSimilarity { u, v, .. } => {
                write!(f, "asymmetric similarity ({u},{v})")
            }
            Violation::SimilarityRange { u, v, value } => {
                write!(f, "similarity ({u},{v}) = {value} outside [0,1]")
            }
            Violation::MissingFixedThreshold { node } => {
                write!(f, "pseudonode {node} has no fixed threshold")
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct NetworkBuilder {
    kinds: Vec<NodeKind>,
    fixed_thresholds: Vec<Option<f64>>,
    edges: Vec<Edge>,
    similarity: BTreeMap<(NodeId, NodeId), f64>,
}

impl NetworkBuilder {
    /// Builder with `real_nodes` real nodes and nothing else.
    pub fn new(real_nodes: usize) -> Self {
        NetworkBuilder {
            kinds: vec![NodeKind::Real; real_nodes],
            fixed_thresholds: vec![None; real_nodes],
            ..Default::default()
        }
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn add_node(&mut self, kind: NodeKind, fixed_threshold: Option<f64>) -> NodeId {
        self.kinds.push(kind);
        self.fixed_thresholds.push(fixed_threshold);
        NodeId::from(self.kinds.len() - 1)
    }

    fn check(&self, node: NodeId) -> Result<()> {
        if node.index() >= self.kinds.len() {
            return Err(Error::NodeOutOfRange {
                node,
                node_count: self.kinds.len(),
            });
        }
        Ok(())
    }

    pub fn add_edge(&mut self, src: NodeId, dst: NodeId, weight: f64) -> Result<()> {
        self.check(src)?;
        self.check(dst)?;
        self.edges.push(Edge { src, dst, weight });
        Ok(())
    }

    /// Records `h_uv` as given. Lookups treat the map as symmetric.
    pub fn add_similarity(&mut self, u: NodeId, v: NodeId, h: f64) -> Result<()> {
        self.check(u)?;
        self.check(v)?;
        self.similarity.insert((u, v), h);
        Ok(())
    }

    pub fn build(self) -> Network {
        let n = self.kinds.len();
        let mut edges = self.edges;
        edges.sort_by_key(|e| (e.dst, e.src));
        let (in_offsets, in_src, in_weight) = csr(n, &edges, |e| e.dst, |e| e.src);
        edges.sort_by_key(|e| (e.src, e.dst));
        let (out_offsets, out_dst, out_weight) = csr(n, &edges, |e| e.src, |e| e.dst);
        Network {
            kinds: self.kinds,
            fixed_thresholds: self.fixed_thresholds,
            in_offsets,
            in_src,
            in_weight,
            out_offsets,
            out_dst,
            out_weight,
            similarity: self.similarity,
        }
    }
}

fn csr(
    n: usize,
    sorted: &[Edge],
    key: impl Fn(&Edge) -> NodeId,
    other: impl Fn(&Edge) -> NodeId,
) -> (Vec<usize>, Vec<u32>, Vec<f64>) {
    let mut offsets = vec![0usize; n + 1];
    for e in sorted {
        offsets[key(e).index() + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let ids = sorted.iter().map(|e| other(e).0).collect();
    let weights = sorted.iter().map(|e| e.weight).collect();
    (offsets, ids, weights)
}

/// Immutable influence network. Cheap to share across simulation workers.
#[derive(Clone, Debug)]
pub struct Network {
    kinds: Vec<NodeKind>,
    fixed_thresholds: Vec<Option<f64>>,
    in_offsets: Vec<usize>,
    in_src: Vec<u32>,
    in_weight: Vec<f64>,
    out_offsets: Vec<usize>,
    out_dst: Vec<u32>,
    out_weight: Vec<f64>,
    similarity: BTreeMap<(NodeId, NodeId), f64>,
}

impl Network {
    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn edge_count(&self) -> usize {
        self.in_src.len()
    }

    pub fn real_node_count(&self) -> usize {
        self.kinds.iter().filter(|k| k.is_real()).count()
    }

    pub fn kind(&self, v: NodeId) -> NodeKind {
        self.kinds[v.index()]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn fixed_threshold(&self, v: NodeId) -> Option<f64> {
        self.fixed_thresholds[v.index()]
    }

    fn check(&self, v: NodeId) -> Result<()> {
        if v.index() >= self.node_count() {
            return Err(Error::NodeOutOfRange {
                node: v,
                node_count: self.node_count(),
            });
        }
        Ok(())
    }

    /// Nonzero-weight incoming edges of `v`, ascending by source id.
    pub fn in_neighbors(&self, v: NodeId) -> Result<Vec<(NodeId, f64)>> {
        self.check(v)?;
        let (src, w) = self.in_slices(v.index());
        Ok(src.iter().zip(w).map(|(&u, &w)| (NodeId(u), w)).collect())
    }

    /// Outgoing edges of `u`, ascending by destination id.
    pub fn out_neighbors(&self, u: NodeId) -> Result<Vec<(NodeId, f64)>> {
        self.check(u)?;
        let (dst, w) = self.out_slices(u.index());
        Ok(dst.iter().zip(w).map(|(&v, &w)| (NodeId(v), w)).collect())
    }

    #[inline]
    pub(crate) fn in_slices(&self, v: usize) -> (&[u32], &[f64]) {
        let r = self.in_offsets[v]..self.in_offsets[v + 1];
        (&self.in_src[r.clone()], &self.in_weight[r])
    }

    #[inline]
    pub(crate) fn out_slices(&self, u: usize) -> (&[u32], &[f64]) {
        let r = self.out_offsets[u]..self.out_offsets[u + 1];
        (&self.out_dst[r.clone()], &self.out_weight[r])
    }

    pub fn in_weight_sum(&self, v: NodeId) -> f64 {
        self.in_slices(v.index()).1.iter().sum()
    }

    /// Edges sorted by (src, dst).
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            let (dst, w) = self.out_slices(u);
            dst.iter().zip(w).map(move |(&v, &w)| Edge {
                src: NodeId::from(u),
                dst: NodeId(v),
                weight: w,
            })
        })
    }

    /// `h_uv`, looked up in either direction; 0 when absent.
    pub fn similarity(&self, u: NodeId, v: NodeId) -> f64 {
        self.similarity
            .get(&(u, v))
            .or_else(|| self.similarity.get(&(v, u)))
            .copied()
            .unwrap_or(0.0)
    }

    /// Raw similarity entries as recorded.
    pub fn similarities(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.similarity.iter().map(|(&(u, v), &h)| (u, v, h))
    }

    /// Builder pre-populated with this network's nodes, edges and similarities.
    pub fn to_builder(&self) -> NetworkBuilder {
        NetworkBuilder {
            kinds: self.kinds.clone(),
            fixed_thresholds: self.fixed_thresholds.clone(),
            edges: self.edges().collect(),
            similarity: self.similarity.clone(),
        }
    }

    /// All broken invariants; empty iff the network is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for v in 0..self.node_count() {
            let node = NodeId::from(v);
            let (src, w) = self.in_slices(v);
            let mut sum = 0.0;
            for (i, (&u, &weight)) in src.iter().zip(w).enumerate() {
                if u as usize == v {
                    out.push(Violation::SelfLoop { node });
                }
                if i > 0 && src[i - 1] == u {
                    out.push(Violation::DuplicateEdge { src: NodeId(u), dst: node });
                }
                if !(weight > 0.0 && weight <= 1.0) {
                    out.push(Violation::WeightRange { src: NodeId(u), dst: node, weight });
                }
                sum += weight;
            }
            if sum > 1.0 + WEIGHT_SUM_TOLERANCE {
                out.push(Violation::WeightSum { node, sum });
            }
            if !self.kinds[v].is_real() && self.fixed_thresholds[v].is_none() {
                out.push(Violation::MissingFixedThreshold { node });
            }
        }
        for (&(u, v), &h) in &self.similarity {
            if !(0.0..=1.0).contains(&h) {
                out.push(Violation::SimilarityRange { u, v, value: h });
            }
            if u < v {
                if let Some(&back) = self.similarity.get(&(v, u)) {
                    if (back - h).abs() > WEIGHT_SUM_TOLERANCE {
                        out.push(Violation::AsymmetricSimilarity { u, v, uv: h, vu: back });
                    }
                }
            }
        }
        out
    }
}

fn parse_fields<'a>(
    path: &Path,
    text: &'a str,
) -> impl Iterator<Item = Result<(usize, Vec<&'a str>)>> + 'a {
    let path = path.to_path_buf();
    text.lines().enumerate().filter_map(move |(i, line)| {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            return None;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 3 {
            return Some(Err(Error::Parse {
                path: path.clone(),
                line: i + 1,
                message: format!("expected 3 fields, found {}", fields.len()),
            }));
        }
        Some(Ok((i + 1, fields)))
    })
}

fn parse_token<T: std::str::FromStr>(path: &Path, line: usize, tok: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad token '{tok}'"),
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

type Triple = (usize, usize, f64);

fn parse_triples(path: &Path, text: &str) -> Result<Vec<(usize, Triple)>> {
    parse_fields(path, text)
        .map(|r| {
            let (line, f) = r?;
            let u = parse_token(path, line, f[0])?;
            let v = parse_token(path, line, f[1])?;
            let w: f64 = parse_token(path, line, f[2])?;
            Ok((line, (u, v, w)))
        })
        .collect()
}

/// Parses edge and similarity text. All nodes are tagged `Real`.
pub fn parse_network(
    edge_path: &Path,
    edge_text: &str,
    sim_path: &Path,
    sim_text: &str,
) -> Result<Network> {
    let edges = parse_triples(edge_path, edge_text)?;
    if edges.is_empty() {
        return Err(Error::NoEdges);
    }
    let sims = parse_triples(sim_path, sim_text)?;

    let n = edges
        .iter()
        .chain(&sims)
        .map(|(_, (u, v, _))| u.max(v) + 1)
        .max()
        .unwrap_or(0);
    if n > u32::MAX as usize {
        return Err(Error::InvalidArgument(format!("{n} nodes exceed id space")));
    }

    let mut seen = std::collections::HashSet::new();
    let mut b = NetworkBuilder::new(n);
    for &(_, (u, v, w)) in &edges {
        if !seen.insert((u, v)) {
            return Err(Error::DuplicateEdge(u.into(), v.into()));
        }
        b.add_edge(u.into(), v.into(), w)?;
    }
    let mut seen = std::collections::HashSet::new();
    for &(_, (u, v, h)) in &sims {
        if seen.contains(&(v, u)) {
            return Err(Error::DuplicateSimilarity(u.into(), v.into()));
        }
        if !seen.insert((u, v)) {
            return Err(Error::DuplicateSimilarity(u.into(), v.into()));
        }
        b.add_similarity(u.into(), v.into(), h)?;
    }
    let net = b.build();
    let violations = net.validate();
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    Ok(net)
}

/// Loads a network from an edge file and a similarity file.
pub fn load_network(edge_file: &Path, similarity_file: &Path) -> Result<Network> {
    let edges = read(edge_file)?;
    let sims = read(similarity_file)?;
    parse_network(edge_file, &edges, similarity_file, &sims)
}

pub fn format_edges(net: &Network) -> String {
    let mut s = String::new();
    for e in net.edges() {
        s.push_str(&format!("{} {} {}\n", e.src, e.dst, e.weight));
    }
    s
}

pub fn format_similarities(net: &Network) -> String {
    let mut s = String::new();
    for (u, v, h) in net.similarities() {
        s.push_str(&format!("{u} {v} {h}\n"));
    }
    s
}

/// Writes both files in the load format.
pub fn save_network(net: &Network, edge_file: &Path, similarity_file: &Path) -> Result<()> {
    write_file(edge_file, format_edges(net).as_bytes())?;
    write_file(similarity_file, format_similarities(net).as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}
