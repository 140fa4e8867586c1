//! Monte Carlo spread estimation.
//!
//! Replications are split into fixed chunks and run in parallel. Replication
//! `r` always uses the same threshold stream and tie-break key, and every
//! tally is an integer, so results are bit-identical for any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{AugmentedNetwork, ChannelPlan};
use crate::diffusion::{default_max_steps, DiffusionState, ThresholdAssignment};
use crate::error::{Error, Result};
use crate::features::{ProductId, ProductSet};
use crate::network::NodeId;
use crate::streams::{replication_key, replication_rng};

const CHUNK: u64 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub replications: u64,
    pub seed: u64,
    /// Keep per-node purchase counts.
    pub per_node: bool,
}

impl EstimateOptions {
    pub fn new(replications: u64, seed: u64) -> Self {
        EstimateOptions {
            replications,
            seed,
            per_node: false,
        }
    }

    pub fn with_per_node(mut self) -> Self {
        self.per_node = true;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductSpread {
    pub mean: f64,
    pub stderr: f64,
}

/// Expected real-node spread per product.
#[derive(Clone, Debug, PartialEq)]
pub struct SpreadEstimate {
    pub replications: u64,
    pub per_product: Vec<ProductSpread>,
    /// Sum over replications of each product's spread.
    pub totals: Vec<u64>,
    /// `node_counts[p][v]`: replications in which real node `v` bought `p`.
    pub node_counts: Option<Vec<Vec<u64>>>,
}

impl SpreadEstimate {
    pub fn mean(&self, p: ProductId) -> f64 {
        self.per_product[p.0].mean
    }

    pub fn stderr(&self, p: ProductId) -> f64 {
        self.per_product[p.0].stderr
    }

    /// Fraction of replications in which `v` bought `p`; needs per-node counts.
    pub fn node_probability(&self, v: NodeId, p: ProductId) -> Option<f64> {
        let counts = self.node_counts.as_ref()?;
        let hits = *counts.get(p.0)?.get(v.index())?;
        Some(hits as f64 / self.replications as f64)
    }

    /// Fraction of replications in which `v` bought anything.
    pub fn activation_probability(&self, v: NodeId) -> Option<f64> {
        let counts = self.node_counts.as_ref()?;
        let hits: u64 = counts.iter().map(|c| c[v.index()]).sum();
        Some(hits as f64 / self.replications as f64)
    }
}

#[derive(Clone, Debug)]
struct Tally {
    sum: Vec<u64>,
    sum_sq: Vec<u128>,
    nodes: Option<Vec<Vec<u64>>>,
}

impl Tally {
    fn new(products: usize, nodes: Option<usize>) -> Self {
        Tally {
            sum: vec![0; products],
            sum_sq: vec![0; products],
            nodes: nodes.map(|n| vec![vec![0; n]; products]),
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(other.sum_sq) {
            *a += b;
        }
        if let (Some(a), Some(b)) = (self.nodes.as_mut(), other.nodes) {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
        }
        self
    }
}

pub fn estimate_spread(
    aug: &AugmentedNetwork,
    products: &ProductSet,
    plans: &[ChannelPlan],
    opts: &EstimateOptions,
) -> Result<SpreadEstimate> {
    if opts.replications == 0 {
        return Err(Error::InvalidArgument("replications must be at least 1".into()));
    }
    let net = &aug.net;
    let seeds = aug.seed_assignment(products, plans)?;
    let real: Vec<usize> = (0..net.node_count())
        .filter(|&v| net.kind(NodeId::from(v)).is_real())
        .collect();
    let k = products.len();
    let max_steps = default_max_steps(net, aug.horizon);
    let reps = opts.replications;
    let chunks = reps.div_ceil(CHUNK);

    let tallies = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Tally> {
            let mut tally = Tally::new(k, opts.per_node.then_some(net.node_count()));
            let mut state = DiffusionState::new(net, products);
            let mut thresholds = ThresholdAssignment::constant(net, 1.0);
            let mut counts = vec![0u64; k];
            for r in c * CHUNK..((c + 1) * CHUNK).min(reps) {
                let mut rng = replication_rng(opts.seed, r);
                thresholds.resample(net, &mut rng);
                state.reset(&seeds, replication_key(opts.seed, r));
                state.run(&thresholds, max_steps)?;
                counts.fill(0);
                let bought = state.purchased_raw();
                for &v in &real {
                    let p = bought[v];
                    if p != u32::MAX {
                        counts[p as usize] += 1;
                        if let Some(nodes) = tally.nodes.as_mut() {
                            nodes[p as usize][v] += 1;
                        }
                    }
                }
                for (p, &c) in counts.iter().enumerate() {
                    tally.sum[p] += c;
                    tally.sum_sq[p] += (c as u128) * (c as u128);
                }
            }
            Ok(tally)
        })
        .collect::<Result<Vec<_>>>()?;
    let tally = tallies
        .into_iter()
        .fold(Tally::new(k, opts.per_node.then_some(net.node_count())), Tally::merge);

    let n = reps as f64;
    let per_product = (0..k)
        .map(|p| {
            let mean = tally.sum[p] as f64 / n;
            let stderr = if reps > 1 {
                // exact integer numerator: R * sum_sq - sum^2
                let s = tally.sum[p] as u128;
                let num = (reps as u128) * tally.sum_sq[p] - s * s;
                let var = num as f64 / (n * (n - 1.0));
                (var / n).sqrt()
            } else {
                0.0
            };
            ProductSpread { mean, stderr }
        })
        .collect();
    Ok(SpreadEstimate {
        replications: reps,
        per_product,
        totals: tally.sum,
        node_counts: tally.nodes,
    })
}

/// Probability that real node `v` ends up buying `product`.
pub fn estimate_node_probability(
    aug: &AugmentedNetwork,
    products: &ProductSet,
    plans: &[ChannelPlan],
    v: NodeId,
    product: ProductId,
    replications: u64,
    seed: u64,
) -> Result<f64> {
    products.get(product)?;
    if v.index() >= aug.net.node_count() {
        return Err(Error::NodeOutOfRange {
            node: v,
            node_count: aug.net.node_count(),
        });
    }
    if !aug.net.kind(v).is_real() {
        return Err(Error::InvalidArgument(format!("node {v} is a pseudonode")));
    }
    let est = estimate_spread(
        aug,
        products,
        plans,
        &EstimateOptions::new(replications, seed).with_per_node(),
    )?;
    Ok(est.node_probability(v, product).unwrap_or(0.0))
}
