#![allow(dead_code)]

use multichannel::channels::attach_social_gadget;
use multichannel::diffusion::{run_diffusion, SeedAssignment, ThresholdAssignment};
use multichannel::{ChannelPlan, GadgetParams, Network, NetworkBuilder, NodeId, NodeKind, ProductId, ProductSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random valid network: each ordered pair is an edge with probability
/// `density`; every node's in-weights are rescaled to a random total in
/// `[0, 1]`. Similarities are drawn for a random subset of edges.
pub fn random_network(r: &mut ChaCha8Rng, n: usize, density: f64, sim_density: f64) -> Network {
    let mut b = NetworkBuilder::new(n);
    let mut sims = Vec::new();
    for v in 0..n {
        let srcs: Vec<usize> = (0..n).filter(|&u| u != v && r.random::<f64>() < density).collect();
        let raw: Vec<f64> = srcs.iter().map(|_| r.random::<f64>() + 0.05).collect();
        let total: f64 = raw.iter().sum();
        let scale = r.random::<f64>() / total.max(1e-12);
        for (&u, w) in srcs.iter().zip(raw) {
            b.add_edge(NodeId::from(u), NodeId::from(v), w * scale).unwrap();
            if u < v && r.random::<f64>() < sim_density {
                sims.push((u, v, r.random::<f64>()));
            }
        }
    }
    for (u, v, h) in sims {
        b.add_similarity(NodeId::from(u), NodeId::from(v), h).unwrap();
    }
    b.build()
}

/// `k` random products in dimension `dim` (last component is the null feature).
pub fn random_products(r: &mut ChaCha8Rng, k: usize, dim: usize) -> ProductSet {
    let raw: Vec<(Vec<f64>, usize)> = (0..k)
        .map(|_| {
            let mut v: Vec<f64> = (0..dim).map(|_| r.random::<f64>()).collect();
            v[r.random_range(0..dim)] += 0.1;
            (v, dim - 1)
        })
        .collect();
    ProductSet::from_raw(&raw).unwrap()
}

/// Disjoint random seed plans, one per product.
pub fn random_plans(r: &mut ChaCha8Rng, n: usize, k: usize, horizon: usize, max_seeds: usize) -> Vec<ChannelPlan> {
    let mut nodes: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        nodes.swap(i, r.random_range(0..=i));
    }
    let mut next = 0;
    (0..k)
        .map(|p| {
            let s = r.random_range(0..=max_seeds).min(n - next);
            let seeds = nodes[next..next + s].iter().map(|&v| NodeId::from(v)).collect();
            next += s;
            ChannelPlan {
                product: ProductId(p),
                seeds,
                alpha: if r.random::<f64>() < 0.5 { r.random::<f64>() } else { 0.0 },
                beta: (0..horizon)
                    .map(|_| if r.random::<f64>() < 0.5 { r.random::<f64>() } else { 0.0 })
                    .collect(),
            }
        })
        .collect()
}

pub fn seed_plan(p: usize, seeds: &[u32]) -> ChannelPlan {
    ChannelPlan {
        product: ProductId(p),
        seeds: seeds.iter().map(|&s| NodeId(s)).collect(),
        alpha: 0.0,
        beta: vec![],
    }
}

/// Classical linear threshold diffusion: returns activation step per node.
pub fn classical_lt(net: &Network, seeds: &[NodeId], thresholds: &[f64]) -> Vec<Option<usize>> {
    let n = net.node_count();
    let mut time = vec![None; n];
    for s in seeds {
        time[s.index()] = Some(0);
    }
    let mut t = 0;
    loop {
        let mut newly = Vec::new();
        for v in 0..n {
            if time[v].is_some() {
                continue;
            }
            let total: f64 = net
                .in_neighbors(NodeId::from(v))
                .unwrap()
                .iter()
                .filter(|(u, _)| time[u.index()].is_some())
                .map(|(_, w)| w)
                .sum();
            if total >= thresholds[v] {
                newly.push(v);
            }
        }
        if newly.is_empty() {
            return time;
        }
        t += 1;
        for v in newly {
            time[v] = Some(t);
        }
    }
}

/// Squared norm of `(chi - eps) p + eps q` for unit `p`, `q` at angle `theta`.
pub fn gadget_norm_sq(chi: f64, eps: f64, theta: f64) -> f64 {
    let a = chi - eps;
    a * a + eps * eps + 2.0 * a * eps * theta.cos()
}

/// Random `(chi_w, eps)` with `0 < eps < chi_w <= 1`.
pub fn draw_gadget(r: &mut impl Rng) -> (f64, f64) {
    let chi = r.random_range(1e-3..=1.0);
    let eps = chi * r.random_range(1e-3..1.0 - 1e-3);
    (chi, eps)
}

/// Root of `p`, friend `u` seeded at time 0 with a product at angle `theta`
/// to `p` (`p` itself when `theta` is 0), gadget `w` into `v`. Returns
/// whether `w` activated at step 1 and what it bought.
pub fn run_gadget(chi: f64, eps: f64, theta: f64) -> (bool, Option<ProductId>) {
    let products =
        ProductSet::from_raw(&[(vec![1.0, 0.0], 1), (vec![theta.cos().max(0.0), theta.sin()], 1)]).unwrap();
    let mut b = NetworkBuilder::new(2);
    let root = b.add_node(NodeKind::ProductRoot { product: ProductId(0) }, Some(1.0));
    let plan = ChannelPlan {
        product: ProductId(0),
        seeds: vec![],
        alpha: 1.0,
        beta: vec![],
    };
    let params = GadgetParams {
        chi_w: chi,
        epsilon: eps,
        chain_threshold: 0.5,
    };
    let w = attach_social_gadget(&mut b, root, &plan, 0.into(), 1.into(), 0.5, 1.0, &params)
        .unwrap()
        .unwrap();
    let net = b.build();
    assert!(net.validate().is_empty());
    let sets = if theta == 0.0 {
        vec![vec![root, 0.into()], vec![]]
    } else {
        vec![vec![root], vec![0.into()]]
    };
    let seeds = SeedAssignment::new(&net, &products, sets).unwrap();
    let thr = ThresholdAssignment::constant(&net, 1.0);
    let out = run_diffusion(&net, &products, &seeds, &thr, 0, 10).unwrap();
    (out.activation_time[w.index()] == Some(1), out.purchased[w.index()])
}
