//! Exact spread on small instances, for checking the Monte Carlo engine.
//!
//! The diffusion here is written independently of [`crate::diffusion`]: every
//! step recomputes each aggregate from scratch over the in-neighbors
//! influenced so far, and purchases use a separate argmax.
//!
//! Two evaluators are provided:
//!
//! * [`exact_spread`] walks the tree of threshold regions. Whenever a free
//!   node's aggregate norm rises to `x`, the only question is whether its
//!   threshold lies below `x`, given that it lay above the previous norm. The
//!   conditional probability of that is exact under either the continuous
//!   uniform law or the midpoint grid, so the walk gives the grid average over
//!   all `m^n` tuples without listing them, and the true expectation for the
//!   continuous law. Purchase ties are branched uniformly.
//! * [`exact_spread_grid_bruteforce`] lists every midpoint tuple, capped at
//!   2^24 tuples. It refuses instances with purchase ties.

use std::collections::BTreeMap;

use crate::channels::{build_augmented, AugmentedNetwork, ChannelPlan, GadgetParams};
use crate::diffusion::reaches_threshold;
use crate::error::{Error, Result};
use crate::features::{ProductId, ProductSet, TIE_TOLERANCE};
use crate::optimizer::{plan_cost, CostModel, BUDGET_TOLERANCE};
use crate::fixtures::fig3::Variant;
use crate::network::{Network, NodeId};

/// Hard cap on enumerated leaves or tuples.
pub const ENUMERATION_CAP: u64 = 1 << 24;

/// Thresholds on the midpoint grid `(i - 0.5) / m`, `i = 1..=m`. Pinned real
/// nodes keep a fixed value.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub resolution: usize,
    pub pinned: BTreeMap<NodeId, f64>,
}

impl GridSpec {
    pub fn new(resolution: usize) -> Self {
        GridSpec {
            resolution,
            pinned: BTreeMap::new(),
        }
    }

    pub fn pin(mut self, v: NodeId, threshold: f64) -> Self {
        self.pinned.insert(v, threshold);
        self
    }

    fn midpoint(&self, i: usize) -> f64 {
        (i as f64 - 0.5) / self.resolution as f64
    }

    /// Number of grid thresholds met by squared norm `x2`.
    fn met(&self, x2: f64) -> usize {
        (1..=self.resolution)
            .take_while(|&i| reaches_threshold(x2, self.midpoint(i)))
            .count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ThresholdLaw {
    /// Continuous Uniform(0, 1].
    Uniform,
    Grid(GridSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSpread {
    /// Expected real-node spread per product.
    pub per_product: Vec<f64>,
    /// `node_probability[p][v]` over all nodes (pseudonodes included).
    pub node_probability: Vec<Vec<f64>>,
    pub leaves: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Knowledge {
    Fixed(f64),
    /// Continuous threshold known to exceed this norm.
    Above(f64),
    /// Grid threshold index known to exceed this many midpoints.
    Excluded(usize),
}

#[derive(Clone, Debug)]
struct Branch {
    time: usize,
    activation: Vec<Option<usize>>,
    purchased: Vec<Option<usize>>,
    knowledge: Vec<Knowledge>,
}

struct Walker<'a> {
    net: &'a Network,
    products: &'a ProductSet,
    grid: Option<&'a GridSpec>,
    leaves: u64,
    per_product: Vec<f64>,
    node_probability: Vec<Vec<f64>>,
}

/// Aggregate of `v` over neighbors influenced by `time`.
fn aggregate(
    net: &Network,
    products: &ProductSet,
    activation: &[Option<usize>],
    purchased: &[Option<usize>],
    v: usize,
    time: usize,
) -> Vec<f64> {
    let mut a = vec![0.0; products.dim()];
    for (u, b) in net.in_neighbors(NodeId::from(v)).expect("node in range") {
        if activation[u.index()].is_some_and(|t| t <= time) {
            let p = purchased[u.index()].expect("influenced nodes have bought");
            for (x, y) in a.iter_mut().zip(&products.get(crate::features::ProductId(p)).expect("product").features) {
                *x += b * y;
            }
        }
    }
    a
}

/// Products whose cosine to `a` is within the tie tolerance of the best.
fn nearest(products: &ProductSet, a: &[f64]) -> Vec<usize> {
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos: Vec<f64> = products
        .iter()
        .map(|p| {
            let dot: f64 = a.iter().zip(&p.features).map(|(x, y)| x * y).sum();
            (dot / norm).clamp(-1.0, 1.0)
        })
        .collect();
    let best = cos.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..cos.len()).filter(|&i| cos[i] >= best - TIE_TOLERANCE).collect()
}

impl Walker<'_> {
    fn explore(&mut self, state: Branch, prob: f64) -> Result<()> {
        let n = self.net.node_count();
        // (node, probability of activating now, knowledge if it does not)
        let mut sure = Vec::new();
        let mut uncertain: Vec<(usize, f64, Knowledge)> = Vec::new();
        let mut norms = Vec::new();
        for v in 0..n {
            if state.activation[v].is_some() {
                continue;
            }
            let a = aggregate(self.net, self.products, &state.activation, &state.purchased, v, state.time);
            let x2: f64 = a.iter().map(|x| x * x).sum();
            if x2 == 0.0 {
                continue;
            }
            let (p_act, rest) = match state.knowledge[v] {
                Knowledge::Fixed(chi) => (if reaches_threshold(x2, chi) { 1.0 } else { 0.0 }, Knowledge::Fixed(chi)),
                Knowledge::Above(lo) => {
                    let x = x2.sqrt().min(1.0);
                    if x <= lo {
                        (0.0, Knowledge::Above(lo))
                    } else {
                        ((x - lo) / (1.0 - lo), Knowledge::Above(x))
                    }
                }
                Knowledge::Excluded(c) => {
                    let grid = self.grid.expect("grid law");
                    let met = grid.met(x2);
                    if met <= c {
                        (0.0, Knowledge::Excluded(c))
                    } else {
                        let m = grid.resolution;
                        ((met - c) as f64 / (m - c) as f64, Knowledge::Excluded(met))
                    }
                }
            };
            if p_act >= 1.0 {
                sure.push(v);
                norms.push((v, a));
            } else if p_act > 0.0 {
                uncertain.push((v, p_act, rest));
                norms.push((v, a));
            }
        }

        if uncertain.len() > 24 {
            return Err(Error::EnumerationCap { cap: ENUMERATION_CAP });
        }
        let aggregates: BTreeMap<usize, Vec<f64>> = norms.into_iter().collect();
        for mask in 0u32..(1u32 << uncertain.len()) {
            let mut next = state.clone();
            let mut p = prob;
            let mut active = sure.clone();
            for (bit, &(v, p_act, rest)) in uncertain.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    p *= p_act;
                    active.push(v);
                } else {
                    p *= 1.0 - p_act;
                    next.knowledge[v] = rest;
                }
            }
            if p == 0.0 {
                continue;
            }
            if active.is_empty() {
                self.leaf(&next, p)?;
                continue;
            }
            active.sort_unstable();
            next.time += 1;
            for &v in &active {
                next.activation[v] = Some(next.time);
            }
            self.purchase(next, p, &active, 0, &aggregates)?;
        }
        Ok(())
    }

    /// Assigns purchases to `active[i..]`, branching on ties.
    fn purchase(
        &mut self,
        mut state: Branch,
        prob: f64,
        active: &[usize],
        i: usize,
        aggregates: &BTreeMap<usize, Vec<f64>>,
    ) -> Result<()> {
        if i == active.len() {
            return self.explore(state, prob);
        }
        let v = active[i];
        let choices = nearest(self.products, &aggregates[&v]);
        if choices.len() == 1 {
            state.purchased[v] = Some(choices[0]);
            return self.purchase(state, prob, active, i + 1, aggregates);
        }
        let share = prob / choices.len() as f64;
        for &c in &choices {
            let mut s = state.clone();
            s.purchased[v] = Some(c);
            self.purchase(s, share, active, i + 1, aggregates)?;
        }
        Ok(())
    }

    fn leaf(&mut self, state: &Branch, prob: f64) -> Result<()> {
        self.leaves += 1;
        if self.leaves > ENUMERATION_CAP {
            return Err(Error::EnumerationCap { cap: ENUMERATION_CAP });
        }
        for (v, p) in state.purchased.iter().enumerate() {
            if let Some(p) = *p {
                self.node_probability[p][v] += prob;
                if self.net.kind(NodeId::from(v)).is_real() {
                    self.per_product[p] += prob;
                }
            }
        }
        Ok(())
    }
}

/// Activation time and product index per node.
type Start = (Vec<Option<usize>>, Vec<Option<usize>>);

fn initial(aug: &AugmentedNetwork, products: &ProductSet, plans: &[ChannelPlan]) -> Result<Start> {
    let seeds = aug.seed_assignment(products, plans)?;
    let n = aug.net.node_count();
    let mut activation = vec![None; n];
    let mut purchased = vec![None; n];
    for (p, nodes) in seeds.iter() {
        for &s in nodes {
            activation[s.index()] = Some(0);
            purchased[s.index()] = Some(p.0);
        }
    }
    Ok((activation, purchased))
}

/// Exact expected spread under the given threshold law.
pub fn exact_spread(
    aug: &AugmentedNetwork,
    products: &ProductSet,
    plans: &[ChannelPlan],
    law: &ThresholdLaw,
) -> Result<ExactSpread> {
    let net = &aug.net;
    let (activation, purchased) = initial(aug, products, plans)?;
    let grid = match law {
        ThresholdLaw::Uniform => None,
        ThresholdLaw::Grid(g) => {
            if g.resolution == 0 {
                return Err(Error::InvalidArgument("grid resolution must be at least 1".into()));
            }
            Some(g)
        }
    };
    let knowledge = (0..net.node_count())
        .map(|v| {
            let id = NodeId::from(v);
            if let Some(chi) = net.fixed_threshold(id) {
                return Knowledge::Fixed(chi);
            }
            match grid {
                Some(g) => match g.pinned.get(&id) {
                    Some(&chi) => Knowledge::Fixed(chi),
                    None => Knowledge::Excluded(0),
                },
                None => Knowledge::Above(0.0),
            }
        })
        .collect();
    let mut walker = Walker {
        net,
        products,
        grid,
        leaves: 0,
        per_product: vec![0.0; products.len()],
        node_probability: vec![vec![0.0; net.node_count()]; products.len()],
    };
    walker.explore(
        Branch {
            time: 0,
            activation,
            purchased,
            knowledge,
        },
        1.0,
    )?;
    Ok(ExactSpread {
        per_product: walker.per_product,
        node_probability: walker.node_probability,
        leaves: walker.leaves,
    })
}

/// Average spread over all grid threshold tuples.
pub fn exact_spread_grid(
    aug: &AugmentedNetwork,
    products: &ProductSet,
    plans: &[ChannelPlan],
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    Ok(exact_spread(aug, products, plans, &ThresholdLaw::Grid(grid.clone()))?.per_product)
}

/// Same average by listing every tuple of the free nodes' grid thresholds.
pub fn exact_spread_grid_bruteforce(
    aug: &AugmentedNetwork,
    products: &ProductSet,
    plans: &[ChannelPlan],
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    let net = &aug.net;
    let (activation0, purchased0) = initial(aug, products, plans)?;
    let m = grid.resolution;
    if m == 0 {
        return Err(Error::InvalidArgument("grid resolution must be at least 1".into()));
    }
    let mut base = vec![1.0; net.node_count()];
    let mut free = Vec::new();
    for (v, slot) in base.iter_mut().enumerate() {
        let id = NodeId::from(v);
        if let Some(chi) = net.fixed_threshold(id).or_else(|| grid.pinned.get(&id).copied()) {
            *slot = chi;
        } else if activation0[v].is_none() {
            free.push(v);
        }
    }
    let bits = free.len() as f64 * (m as f64).log2();
    if bits > 24.0 + 1e-9 {
        return Err(Error::EnumerationCap { cap: ENUMERATION_CAP });
    }
    let tuples = (m as u64).pow(free.len() as u32);
    let mut totals = vec![0.0; products.len()];
    let mut thresholds = base;
    for code in 0..tuples {
        let mut c = code;
        for &v in &free {
            thresholds[v] = grid.midpoint((c % m as u64) as usize + 1);
            c /= m as u64;
        }
        let mut activation = activation0.clone();
        let mut purchased = purchased0.clone();
        let mut time = 0;
        loop {
            let mut newly = Vec::new();
            for v in 0..net.node_count() {
                if activation[v].is_some() {
                    continue;
                }
                let a = aggregate(net, products, &activation, &purchased, v, time);
                let x2: f64 = a.iter().map(|x| x * x).sum();
                if reaches_threshold(x2, thresholds[v]) {
                    let choice = nearest(products, &a);
                    if choice.len() != 1 {
                        return Err(Error::InvalidArgument(format!(
                            "purchase tie at node {v}; brute force needs tie-free instances"
                        )));
                    }
                    newly.push((v, choice[0]));
                }
            }
            if newly.is_empty() {
                break;
            }
            time += 1;
            for (v, p) in newly {
                activation[v] = Some(time);
                purchased[v] = Some(p);
            }
        }
        for (v, p) in purchased.iter().enumerate() {
            if let Some(p) = p {
                if net.kind(NodeId::from(v)).is_real() {
                    totals[*p] += 1.0;
                }
            }
        }
    }
    Ok(totals.into_iter().map(|t| t / tuples as f64).collect())
}

/// Best plan on a lattice: every seed subset of the allowed real nodes and
/// every `alpha`, `beta_t` that is a multiple of `step`, within budget. Each
/// plan is scored exactly under uniform thresholds.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_optimum(
    net: &Network,
    products: &ProductSet,
    focal: ProductId,
    competitors: &[ChannelPlan],
    cost: &CostModel,
    budget: f64,
    horizon: usize,
    step: f64,
) -> Result<(ChannelPlan, f64)> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidArgument(format!("grid step {step}")));
    }
    let taken: Vec<NodeId> = competitors.iter().flat_map(|p| p.seeds.iter().copied()).collect();
    let allowed: Vec<NodeId> = (0..net.node_count())
        .map(NodeId::from)
        .filter(|v| net.kind(*v).is_real() && !taken.contains(v))
        .collect();
    if allowed.len() > 20 {
        return Err(Error::EnumerationCap { cap: ENUMERATION_CAP });
    }
    let fits = |plan: &ChannelPlan| plan_cost(plan, cost) <= budget + BUDGET_TOLERANCE;
    let mut candidates = Vec::new();
    for mask in 0u32..(1 << allowed.len()) {
        let seeds: Vec<NodeId> = (0..allowed.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| allowed[i])
            .collect();
        let mut plan = ChannelPlan {
            product: focal,
            seeds,
            alpha: 0.0,
            beta: vec![0.0; horizon],
        };
        if !fits(&plan) {
            continue;
        }
        // odometer over (alpha, beta_1, ..., beta_T) in units of `step`
        let mut units = vec![0usize; horizon + 1];
        loop {
            plan.alpha = units[0] as f64 * step;
            for t in 0..horizon {
                plan.beta[t] = units[t + 1] as f64 * step;
            }
            if fits(&plan) {
                candidates.push(plan.clone());
                if candidates.len() as u64 > ENUMERATION_CAP {
                    return Err(Error::EnumerationCap { cap: ENUMERATION_CAP });
                }
                units[0] += 1;
                continue;
            }
            // carry: reset the first nonzero digit and bump the next one
            match units.iter().position(|&u| u > 0) {
                Some(i) if i + 1 < units.len() => {
                    units[i] = 0;
                    units[i + 1] += 1;
                }
                _ => break,
            }
        }
    }
    let mut best: Option<(ChannelPlan, f64)> = None;
    for plan in candidates {
        let mut plans = competitors.to_vec();
        plans.push(plan.clone());
        let aug = build_augmented(net, products, &plans, &GadgetParams::default())?;
        let value = exact_spread(&aug, products, &plans, &ThresholdLaw::Uniform)?.per_product[focal.0];
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((plan, value));
        }
    }
    best.ok_or_else(|| Error::Infeasible("no plan within budget".into()))
}

/// Closed-form probabilities for the non-monotonicity fixture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fig3Analytic {
    /// Probability that `a` buys `q`.
    pub p_a_q: f64,
    /// Probability that `v` buys `p`.
    pub p_v_p: f64,
    /// Expected spread of `p`.
    pub sigma_p: f64,
}

/// `a` activates iff its threshold is below `||0.6q (+ 0.4p)||` and then buys
/// `q`; `v` can buy `p` only if `a` stays inactive and `chi_v <= 0.3`. Seeds,
/// the two sure nodes, and (when `v` buys `p`) `v` and its 30 sinks count.
pub fn analytic_fig3(variant: Variant) -> Fig3Analytic {
    let (p_a_q, seeds) = match variant {
        Variant::Base => (0.6, 1.0),
        Variant::WithU => ((0.6f64 * 0.6 + 0.4 * 0.4).sqrt(), 2.0),
    };
    let p_v_p = 0.3 * (1.0 - p_a_q);
    let sigma_p = seeds + 2.0 + p_v_p * (1.0 + crate::fixtures::fig3::SINKS as f64);
    Fig3Analytic { p_a_q, p_v_p, sigma_p }
}
