//! Embedding mass-media and social-advertising channels into the network.
//!
//! Each product gets a root pseudonode, seeded at time 0. Mass media is a
//! chain of pseudonodes `p^(1) = root, p^(2), ..., p^(T)` joined by weight-1
//! edges, so `p^(t)` is influenced at `t - 1` and an edge `p^(t) -> v`
//! delivers influence to `v` at step `t`.
//!
//! Social advertising for a real edge `(u, v)` is an intermediary `w` with a
//! fixed threshold `chi_w`, fed by `root -> w` with weight `chi_w - eps` and
//! `u -> w` with weight `eps`. The norm of `w`'s aggregate reaches `chi_w`
//! only if `u` bought exactly `p`; `w -> v` then carries the recommendation.
//!
//! Channel weights into a real node are scaled so that the node's total
//! incoming weight is at most one.

use serde::{Deserialize, Serialize};

use crate::diffusion::SeedAssignment;
use crate::error::{Error, Result};
use crate::features::{ProductId, ProductSet};
use crate::network::{Network, NetworkBuilder, NodeId, NodeKind};

/// One product's marketing strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub product: ProductId,
    #[serde(default)]
    pub seeds: Vec<NodeId>,
    /// Social-advertising weight.
    #[serde(default)]
    pub alpha: f64,
    /// Mass-media weight per step `t = 1..=T`.
    #[serde(default)]
    pub beta: Vec<f64>,
}

impl ChannelPlan {
    pub fn empty(product: ProductId, horizon: usize) -> Self {
        ChannelPlan {
            product,
            seeds: Vec::new(),
            alpha: 0.0,
            beta: vec![0.0; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_total(&self) -> f64 {
        self.beta.iter().sum()
    }

    fn check(&self, net: &Network) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidPlan(format!("alpha {} for product {}", self.alpha, self.product)));
        }
        if let Some(b) = self.beta.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::InvalidPlan(format!("beta {b} for product {}", self.product)));
        }
        for &s in &self.seeds {
            if s.index() >= net.node_count() || !net.kind(s).is_real() {
                return Err(Error::InvalidPlan(format!("seed {s} is not a real node")));
            }
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidPlan(format!("repeated seed for product {}", self.product)));
        }
        Ok(())
    }
}

/// One plan per product, in product order; missing products get empty plans.
pub fn complete_plans(
    net: &Network,
    products: &ProductSet,
    plans: &[ChannelPlan],
) -> Result<Vec<ChannelPlan>> {
    let horizon = plans.first().map_or(0, |p| p.horizon());
    let mut out: Vec<Option<ChannelPlan>> = vec![None; products.len()];
    for plan in plans {
        products.get(plan.product)?;
        if plan.horizon() != horizon {
            return Err(Error::HorizonMismatch(horizon, plan.horizon()));
        }
        plan.check(net)?;
        let slot = &mut out[plan.product.0];
        if slot.is_some() {
            return Err(Error::InvalidPlan(format!("two plans for product {}", plan.product)));
        }
        *slot = Some(plan.clone());
    }
    let out: Vec<ChannelPlan> = out
        .into_iter()
        .enumerate()
        .map(|(p, plan)| plan.unwrap_or_else(|| ChannelPlan::empty(ProductId(p), horizon)))
        .collect();
    // disjointness is checked by the seed assignment
    SeedAssignment::new(
        net,
        products,
        out.iter().map(|p| p.seeds.clone()).collect(),
    )?;
    Ok(out)
}

/// Social-gadget and media-chain constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GadgetParams {
    pub chi_w: f64,
    pub epsilon: f64,
    pub chain_threshold: f64,
}

impl Default for GadgetParams {
    fn default() -> Self {
        GadgetParams {
            chi_w: 0.5,
            epsilon: 0.25,
            chain_threshold: 0.5,
        }
    }
}

impl GadgetParams {
    fn check(&self) -> Result<()> {
        let ok = self.chi_w > 0.0
            && self.chi_w <= 1.0
            && self.epsilon > 0.0
            && self.epsilon < self.chi_w
            && self.chain_threshold > 0.0
            && self.chain_threshold <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("gadget parameters {self:?}")))
        }
    }
}

/// Per-node channel scaling factor: residual attention over total nominal
/// channel weight, or 0 when nothing is invested.
pub fn scaling_ratio(net: &Network, v: NodeId, plans: &[ChannelPlan]) -> f64 {
    let (src, w) = net.in_slices(v.index());
    let residual = (1.0 - w.iter().sum::<f64>()).max(0.0);
    let similar: f64 = src.iter().map(|&u| net.similarity(NodeId(u), v)).sum();
    let denom: f64 = plans
        .iter()
        .map(|p| p.alpha * similar + p.beta_total())
        .sum();
    if denom > 0.0 {
        residual / denom
    } else {
        0.0
    }
}

/// Adds `p^(t) -> v` with weight `ratio * beta_t` for every positive `beta_t`.
/// `chain[t - 1]` is `p^(t)`.
pub fn attach_mass_media(
    b: &mut NetworkBuilder,
    chain: &[NodeId],
    plan: &ChannelPlan,
    v: NodeId,
    ratio: f64,
) -> Result<()> {
    for (t, &beta) in plan.beta.iter().enumerate() {
        let w = ratio * beta;
        if w > 0.0 {
            b.add_edge(chain[t], v, w)?;
        }
    }
    Ok(())
}

/// Adds the social-ad intermediary for edge `(u, v)` if its outgoing weight
/// `ratio * alpha * h` is positive. Returns the gadget node.
#[allow(clippy::too_many_arguments)]
pub fn attach_social_gadget(
    b: &mut NetworkBuilder,
    root: NodeId,
    plan: &ChannelPlan,
    u: NodeId,
    v: NodeId,
    h: f64,
    ratio: f64,
    params: &GadgetParams,
) -> Result<Option<NodeId>> {
    let out = ratio * plan.alpha * h;
    if out <= 0.0 {
        return Ok(None);
    }
    let w = b.add_node(
        NodeKind::SocialGadget {
            product: plan.product,
            src: u,
            dst: v,
        },
        Some(params.chi_w),
    );
    b.add_edge(root, w, params.chi_w - params.epsilon)?;
    b.add_edge(u, w, params.epsilon)?;
    b.add_edge(w, v, out)?;
    Ok(Some(w))
}

/// Base network plus channel pseudonodes.
#[derive(Clone, Debug)]
pub struct AugmentedNetwork {
    pub net: Network,
    pub base_nodes: usize,
    pub horizon: usize,
    /// Root pseudonode per product.
    pub roots: Vec<NodeId>,
    /// Media chain per product, `chain[t - 1] = p^(t)`; empty without media.
    pub chains: Vec<Vec<NodeId>>,
    /// Scaling ratio per base node (0 for nodes without channel edges).
    pub scale_factors: Vec<f64>,
}

impl AugmentedNetwork {
    /// Pseudonode ids with their roles.
    pub fn provenance(&self) -> Vec<(NodeId, NodeKind)> {
        (self.base_nodes..self.net.node_count())
            .map(|v| (NodeId::from(v), self.net.kind(NodeId::from(v))))
            .collect()
    }

    /// Plan seeds plus each product's root.
    pub fn seed_assignment(&self, products: &ProductSet, plans: &[ChannelPlan]) -> Result<SeedAssignment> {
        let plans = complete_plans(&self.net, products, plans)?;
        let sets = plans
            .iter()
            .zip(&self.roots)
            .map(|(p, &root)| {
                let mut s = p.seeds.clone();
                s.push(root);
                s
            })
            .collect();
        SeedAssignment::new(&self.net, products, sets)
    }
}

/// Augments `net` with every product's channels.
pub fn build_augmented(
    net: &Network,
    products: &ProductSet,
    plans: &[ChannelPlan],
    params: &GadgetParams,
) -> Result<AugmentedNetwork> {
    params.check()?;
    let violations = net.validate();
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    if let Some(v) = net.kinds().iter().position(|k| !k.is_real()) {
        return Err(Error::InvalidArgument(format!(
            "node {v} is already a pseudonode"
        )));
    }
    let plans = complete_plans(net, products, plans)?;
    let horizon = plans.first().map_or(0, |p| p.horizon());
    let base_nodes = net.node_count();
    let mut b = net.to_builder();

    let mut roots = Vec::with_capacity(products.len());
    let mut chains = Vec::with_capacity(products.len());
    for plan in &plans {
        let p = plan.product;
        // roots are seeded, so their threshold is never consulted
        let root = b.add_node(NodeKind::ProductRoot { product: p }, Some(1.0));
        roots.push(root);
        let last = plan.beta.iter().rposition(|&x| x > 0.0);
        let mut chain = Vec::new();
        if let Some(last) = last {
            chain.push(root);
            for step in 2..=last + 1 {
                let node = b.add_node(NodeKind::MediaChain { product: p, step }, Some(params.chain_threshold));
                b.add_edge(*chain.last().unwrap(), node, 1.0)?;
                chain.push(node);
            }
        }
        chains.push(chain);
    }

    let mut scale_factors = vec![0.0; base_nodes];
    for v in 0..base_nodes {
        let v = NodeId::from(v);
        let ratio = scaling_ratio(net, v, &plans);
        scale_factors[v.index()] = ratio;
        if ratio == 0.0 {
            continue;
        }
        for (plan, chain) in plans.iter().zip(&chains) {
            attach_mass_media(&mut b, chain, plan, v, ratio)?;
        }
        let (src, _) = net.in_slices(v.index());
        for &u in src {
            let u = NodeId(u);
            let h = net.similarity(u, v);
            for (plan, &root) in plans.iter().zip(&roots) {
                attach_social_gadget(&mut b, root, plan, u, v, h, ratio, params)?;
            }
        }
    }

    let aug = b.build();
    let violations = aug.validate();
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    Ok(AugmentedNetwork {
        net: aug,
        base_nodes,
        horizon,
        roots,
        chains,
        scale_factors,
    })
}
