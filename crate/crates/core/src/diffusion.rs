//! Competitive multi-feature linear threshold dynamics.
//!
//! Time advances in discrete steps. At step `t` an uninfluenced node `v`
//! becomes influenced when the norm of its aggregate vector, the weighted sum
//! of the product vectors bought by in-neighbors influenced by `t - 1`, reaches
//! its threshold. It then buys the product nearest in angle to that aggregate.
//! All decisions within a step read only the previous step's state.
//!
//! Aggregates are kept incrementally: when a node activates, its weighted
//! product vector is pushed to its uninfluenced out-neighbors, which become the
//! only candidates at the next step. Because components are non-negative,
//! aggregate norms never decrease, so a node that failed its check keeps
//! failing until its aggregate changes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{ProductId, ProductSet};
use crate::network::{Network, NodeId, NodeKind};
use crate::streams::tie_rng;

/// Relative slack on the squared-norm comparison. Keeps the gadget's exact
/// equality case `||(chi - eps) p + eps p|| = chi` from failing on rounding.
pub const ACTIVATION_SLACK: f64 = 1e-12;

/// Activation test on a squared aggregate norm. A zero aggregate never activates.
#[inline]
pub fn reaches_threshold(norm_sq: f64, threshold: f64) -> bool {
    norm_sq > 0.0 && norm_sq >= threshold * threshold * (1.0 - ACTIVATION_SLACK)
}

/// Per-node thresholds for one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdAssignment {
    values: Vec<f64>,
}

impl ThresholdAssignment {
    /// Explicit thresholds; pseudonodes must carry their fixed values.
    pub fn from_values(net: &Network, values: Vec<f64>) -> Result<Self> {
        if values.len() != net.node_count() {
            return Err(Error::InvalidArgument(format!(
                "{} thresholds for {} nodes",
                values.len(),
                net.node_count()
            )));
        }
        for (v, &x) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidArgument(format!("threshold {x} at node {v}")));
            }
            if let Some(fixed) = net.fixed_threshold(NodeId::from(v)) {
                if fixed != x {
                    return Err(Error::InvalidArgument(format!(
                        "pseudonode {v} threshold must stay at {fixed}"
                    )));
                }
            }
        }
        Ok(ThresholdAssignment { values })
    }

    /// Real nodes at `value`, pseudonodes at their fixed thresholds.
    pub fn constant(net: &Network, value: f64) -> Self {
        let values = (0..net.node_count())
            .map(|v| net.fixed_threshold(NodeId::from(v)).unwrap_or(value))
            .collect();
        ThresholdAssignment { values }
    }

    pub fn get(&self, v: NodeId) -> f64 {
        self.values[v.index()]
    }

    /// Overrides a real node's threshold.
    pub fn set(&mut self, net: &Network, v: NodeId, value: f64) -> Result<()> {
        if net.fixed_threshold(v).is_some() {
            return Err(Error::InvalidArgument(format!("node {v} has a fixed threshold")));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidArgument(format!("threshold {value}")));
        }
        self.values[v.index()] = value;
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Redraws every real node's threshold in place, in node order.
    pub fn resample<R: Rng + ?Sized>(&mut self, net: &Network, rng: &mut R) {
        for (v, slot) in self.values.iter_mut().enumerate() {
            *slot = match net.fixed_threshold(NodeId::from(v)) {
                Some(fixed) => fixed,
                // (0, 1]: a zero threshold would be met by an empty aggregate
                None => 1.0 - rng.random::<f64>(),
            };
        }
    }
}

/// Real nodes draw i.i.d. uniform thresholds; pseudonodes keep their fixed ones.
pub fn sample_thresholds<R: Rng + ?Sized>(net: &Network, rng: &mut R) -> ThresholdAssignment {
    let mut t = ThresholdAssignment::constant(net, 1.0);
    t.resample(net, rng);
    t
}

/// Seed sets per product, disjoint across products.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedAssignment {
    by_product: Vec<Vec<NodeId>>,
}

impl SeedAssignment {
    pub fn new(net: &Network, products: &ProductSet, by_product: Vec<Vec<NodeId>>) -> Result<Self> {
        if by_product.len() != products.len() {
            return Err(Error::InvalidArgument(format!(
                "{} seed sets for {} products",
                by_product.len(),
                products.len()
            )));
        }
        let mut owner: Vec<Option<usize>> = vec![None; net.node_count()];
        for (p, seeds) in by_product.iter().enumerate() {
            for &s in seeds {
                if s.index() >= net.node_count() {
                    return Err(Error::NodeOutOfRange {
                        node: s,
                        node_count: net.node_count(),
                    });
                }
                match net.kind(s) {
                    NodeKind::Real => {}
                    NodeKind::ProductRoot { product } if product.0 == p => {}
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "node {s} ({other:?}) cannot seed product {p}"
                        )))
                    }
                }
                match owner[s.index()] {
                    Some(q) if q != p => {
                        return Err(Error::SeedConflict {
                            node: s,
                            first: q,
                            second: p,
                        })
                    }
                    _ => owner[s.index()] = Some(p),
                }
            }
        }
        Ok(SeedAssignment { by_product })
    }

    pub fn seeds(&self, product: ProductId) -> &[NodeId] {
        &self.by_product[product.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ProductId, &[NodeId])> {
        self.by_product
            .iter()
            .enumerate()
            .map(|(p, s)| (ProductId(p), s.as_slice()))
    }
}

const NONE: u32 = u32::MAX;

/// Mutable diffusion state over a shared network. Reusable across
/// replications via [`DiffusionState::reset`].
#[derive(Clone, Debug)]
pub struct DiffusionState<'a> {
    net: &'a Network,
    products: &'a ProductSet,
    dim: usize,
    time: usize,
    tie_key: u64,
    activation: Vec<u32>,
    purchased: Vec<u32>,
    aggregate: Vec<f64>,
    frontier: Vec<u32>,
    candidates: Vec<u32>,
    newly: Vec<u32>,
    mark: Vec<u32>,
    stamp: u32,
}

impl<'a> DiffusionState<'a> {
    pub fn new(net: &'a Network, products: &'a ProductSet) -> Self {
        let n = net.node_count();
        DiffusionState {
            net,
            products,
            dim: products.dim(),
            time: 0,
            tie_key: 0,
            activation: vec![NONE; n],
            purchased: vec![NONE; n],
            aggregate: vec![0.0; n * products.dim()],
            frontier: Vec::new(),
            candidates: Vec::new(),
            newly: Vec::new(),
            mark: vec![0; n],
            stamp: 0,
        }
    }

    /// Time 0: seeds influenced with their own product. `tie_key` selects the
    /// tie-break streams for this realization.
    pub fn reset(&mut self, seeds: &SeedAssignment, tie_key: u64) {
        self.time = 0;
        self.tie_key = tie_key;
        self.activation.fill(NONE);
        self.purchased.fill(NONE);
        self.aggregate.fill(0.0);
        self.frontier.clear();
        for (p, nodes) in seeds.iter() {
            for &s in nodes {
                self.activation[s.index()] = 0;
                self.purchased[s.index()] = p.0 as u32;
                self.frontier.push(s.0);
            }
        }
        self.frontier.sort_unstable();
        self.frontier.dedup();
        let frontier = std::mem::take(&mut self.frontier);
        self.push_contributions(&frontier);
        self.frontier = frontier;
    }

    fn push_contributions(&mut self, nodes: &[u32]) {
        let d = self.dim;
        for &u in nodes {
            let u = u as usize;
            let p = self.products.features(self.purchased[u] as usize);
            let (dst, w) = self.net.out_slices(u);
            for (&v, &b) in dst.iter().zip(w) {
                let v = v as usize;
                if self.activation[v] != NONE {
                    continue;
                }
                for (a, x) in self.aggregate[v * d..(v + 1) * d].iter_mut().zip(p) {
                    *a += b * x;
                }
            }
        }
    }

    /// Advances one step. Returns the number of nodes activated.
    pub fn step(&mut self, thresholds: &ThresholdAssignment) -> usize {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.mark.fill(0);
            self.stamp = 1;
        }
        self.candidates.clear();
        for &u in &self.frontier {
            let (dst, _) = self.net.out_slices(u as usize);
            for &v in dst {
                let vi = v as usize;
                if self.activation[vi] == NONE && self.mark[vi] != self.stamp {
                    self.mark[vi] = self.stamp;
                    self.candidates.push(v);
                }
            }
        }
        self.candidates.sort_unstable();
        let order = std::mem::take(&mut self.candidates);
        let n = self.decide(&order, thresholds);
        self.candidates = order;
        n
    }

    /// Evaluates `order` against the current aggregates, then commits every
    /// activation at once.
    pub(crate) fn decide(&mut self, order: &[u32], thresholds: &ThresholdAssignment) -> usize {
        let d = self.dim;
        let t = self.time + 1;
        self.newly.clear();
        for &v in order {
            let vi = v as usize;
            if self.activation[vi] != NONE {
                continue;
            }
            let a = &self.aggregate[vi * d..(vi + 1) * d];
            let nsq: f64 = a.iter().map(|x| x * x).sum();
            if reaches_threshold(nsq, thresholds.values[vi]) {
                self.newly.push(v);
            }
        }
        self.newly.sort_unstable();
        for &v in &self.newly {
            let vi = v as usize;
            let a = &self.aggregate[vi * d..(vi + 1) * d];
            let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let key = self.tie_key;
            let product = self.products.choose_with(a, norm, |k| {
                let mut rng: ChaCha8Rng = tie_rng(key, vi, t);
                rng.random_range(0..k)
            });
            self.purchased[vi] = product.0 as u32;
        }
        for &v in &self.newly {
            self.activation[v as usize] = t as u32;
        }
        let newly = std::mem::take(&mut self.newly);
        self.push_contributions(&newly);
        self.time = t;
        self.frontier.clear();
        self.frontier.extend_from_slice(&newly);
        self.newly = newly;
        self.frontier.len()
    }

    /// Steps until no activation occurs. Fails if `max_steps` pass first.
    pub fn run(&mut self, thresholds: &ThresholdAssignment, max_steps: usize) -> Result<()> {
        while !self.frontier.is_empty() {
            if self.time >= max_steps {
                return Err(Error::StepLimit(max_steps));
            }
            self.step(thresholds);
        }
        Ok(())
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn is_influenced(&self, v: NodeId) -> bool {
        self.activation[v.index()] != NONE
    }

    pub fn activation_time(&self, v: NodeId) -> Option<usize> {
        match self.activation[v.index()] {
            NONE => None,
            t => Some(t as usize),
        }
    }

    pub fn purchased(&self, v: NodeId) -> Option<ProductId> {
        match self.purchased[v.index()] {
            NONE => None,
            p => Some(ProductId(p as usize)),
        }
    }

    /// Aggregate of `v` over neighbors influenced by the current time.
    pub fn aggregate(&self, v: NodeId) -> &[f64] {
        &self.aggregate[v.index() * self.dim..(v.index() + 1) * self.dim]
    }

    #[inline]
    pub(crate) fn purchased_raw(&self) -> &[u32] {
        &self.purchased
    }

    pub fn outcome(&self) -> DiffusionOutcome {
        let n = self.net.node_count();
        DiffusionOutcome {
            activation_time: (0..n).map(|v| self.activation_time(NodeId::from(v))).collect(),
            purchased: (0..n).map(|v| self.purchased(NodeId::from(v))).collect(),
            steps: self.time,
        }
    }
}

/// Result of one realization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiffusionOutcome {
    pub activation_time: Vec<Option<usize>>,
    pub purchased: Vec<Option<ProductId>>,
    pub steps: usize,
}

impl DiffusionOutcome {
    /// Real nodes buying each product.
    pub fn spread(&self, net: &Network, products: usize) -> Vec<usize> {
        let mut counts = vec![0; products];
        for (v, p) in self.purchased.iter().enumerate() {
            if let Some(p) = p {
                if net.kind(NodeId::from(v)).is_real() {
                    counts[p.0] += 1;
                }
            }
        }
        counts
    }

    pub fn influenced(&self) -> Vec<NodeId> {
        self.activation_time
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_some())
            .map(|(v, _)| NodeId::from(v))
            .collect()
    }

    /// `node,activation_time,product`, with -1 for uninfluenced nodes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node,activation_time,product\n");
        for (v, (t, p)) in self.activation_time.iter().zip(&self.purchased).enumerate() {
            let t = t.map_or(-1, |t| t as i64);
            let p = p.map_or(-1, |p| p.0 as i64);
            s.push_str(&format!("{v},{t},{p}\n"));
        }
        s
    }
}

/// Default step cap: every step before the fixed point activates someone,
/// and the media chain adds `horizon` steps.
pub fn default_max_steps(net: &Network, horizon: usize) -> usize {
    net.node_count() + horizon + 2
}

pub fn run_diffusion(
    net: &Network,
    products: &ProductSet,
    seeds: &SeedAssignment,
    thresholds: &ThresholdAssignment,
    tie_key: u64,
    max_steps: usize,
) -> Result<DiffusionOutcome> {
    let mut state = DiffusionState::new(net, products);
    state.reset(seeds, tie_key);
    state.run(thresholds, max_steps)?;
    Ok(state.outcome())
}
