//! Small hand-built instances with known answers.

use crate::channels::ChannelPlan;
use crate::features::{ProductId, ProductSet};
use crate::network::{Network, NetworkBuilder, NodeId};

#[derive(Clone, Debug)]
pub struct Fixture {
    pub network: Network,
    pub products: ProductSet,
    pub plans: Vec<ChannelPlan>,
}

/// p = (1, 0), q = (0, 1); the second component is the null feature.
pub fn orthogonal_products() -> ProductSet {
    ProductSet::from_raw(&[(vec![1.0, 0.0], 1), (vec![0.0, 1.0], 1)]).expect("unit vectors")
}

fn seed_plan(p: usize, seeds: &[u32]) -> ChannelPlan {
    ChannelPlan {
        product: ProductId(p),
        seeds: seeds.iter().map(|&s| NodeId(s)).collect(),
        alpha: 0.0,
        beta: vec![],
    }
}

fn network(n: usize, edges: &[(u32, u32, f64)]) -> Network {
    let mut b = NetworkBuilder::new(n);
    for &(u, v, w) in edges {
        b.add_edge(NodeId(u), NodeId(v), w).expect("fixture ids in range");
    }
    b.build()
}

/// Geometric example: `v` sees `0.4p + 0.2q` from the seeds at step 1 and
/// `0.1p + 0.2q` more from `u`, `w` at step 2.
pub mod fig2 {
    use super::*;

    pub const SEED_P: NodeId = NodeId(0);
    pub const SEED_Q: NodeId = NodeId(1);
    pub const U: NodeId = NodeId(2);
    pub const W: NodeId = NodeId(3);
    pub const V: NodeId = NodeId(4);

    pub fn fixture() -> Fixture {
        let network = network(
            5,
            &[
                (0, 4, 0.4),
                (1, 4, 0.2),
                (0, 2, 1.0),
                (1, 3, 1.0),
                (2, 4, 0.1),
                (3, 4, 0.2),
            ],
        );
        Fixture {
            network,
            products: orthogonal_products(),
            plans: vec![seed_plan(0, &[0]), seed_plan(1, &[1])],
        }
    }
}

/// Non-monotonicity example.
///
/// `S^p` surely influences two nodes, one of which passes 0.3 of `p` on to
/// `v` at step 2. `S^q` gives `a` 0.6 of `q`; `a` gives `v` 0.7, arriving at
/// step 2 as well. `u` gives `a` 0.4 but has no in-edges, so it only matters
/// when seeded. `v` surely influences 30 sinks. With only `S^p` seeded for
/// `p`, `v` buys `p` exactly when `chi_v <= 0.3` and `a` stays inactive.
pub mod fig3 {
    use super::*;

    pub const SEED_P: NodeId = NodeId(0);
    pub const SEED_Q: NodeId = NodeId(1);
    pub const U: NodeId = NodeId(2);
    pub const A: NodeId = NodeId(3);
    pub const V: NodeId = NodeId(4);
    pub const SURE: [NodeId; 2] = [NodeId(5), NodeId(6)];
    pub const SINKS: usize = 30;
    pub const NODES: usize = 7 + SINKS;

    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub enum Variant {
        /// `p` seeds `S^p` only.
        Base,
        /// `p` seeds `S^p` and `u`.
        WithU,
    }

    pub fn network() -> Network {
        let mut edges = vec![
            (0, 5, 1.0),
            (0, 6, 1.0),
            (5, 4, 0.3),
            (1, 3, 0.6),
            (2, 3, 0.4),
            (3, 4, 0.7),
        ];
        edges.extend((7..NODES as u32).map(|s| (4, s, 1.0)));
        super::network(NODES, &edges)
    }

    pub fn plans(variant: Variant) -> Vec<ChannelPlan> {
        let p_seeds: &[u32] = match variant {
            Variant::Base => &[0],
            Variant::WithU => &[0, 2],
        };
        vec![seed_plan(0, p_seeds), seed_plan(1, &[1])]
    }

    pub fn fixture(variant: Variant) -> Fixture {
        Fixture {
            network: network(),
            products: orthogonal_products(),
            plans: plans(variant),
        }
    }
}

/// Five-node instance small enough for exhaustive plan search.
///
/// `q` holds node 4 and buys media at both steps plus some social ads; `p`
/// is the focal product with budget 2, unit costs and horizon 2.
pub mod toy {
    use super::*;
    use crate::optimizer::CostModel;

    pub const FOCAL: ProductId = ProductId(0);
    pub const BUDGET: f64 = 2.0;
    pub const HORIZON: usize = 2;

    pub fn network() -> Network {
        let mut b = NetworkBuilder::new(5);
        for (u, v, w) in [(0, 1, 0.5), (0, 2, 0.5), (1, 3, 0.4), (2, 3, 0.4), (3, 4, 0.6)] {
            b.add_edge(NodeId(u), NodeId(v), w).expect("ids in range");
        }
        for (u, v, h) in [(0, 1, 0.8), (1, 3, 0.5), (3, 4, 0.7)] {
            b.add_similarity(NodeId(u), NodeId(v), h).expect("ids in range");
        }
        b.build()
    }

    pub fn competitor() -> ChannelPlan {
        ChannelPlan {
            product: ProductId(1),
            seeds: vec![NodeId(4)],
            alpha: 0.3,
            beta: vec![0.2, 0.2],
        }
    }

    pub fn cost() -> CostModel {
        CostModel::default()
    }

    pub fn fixture() -> Fixture {
        Fixture {
            network: network(),
            products: orthogonal_products(),
            plans: vec![competitor()],
        }
    }
}

/// Real node 0 with one media pseudoedge of weight `w` at step `t`.
///
/// Nodes 1 and 2 feed each other with weight 1, so they take no media and
/// never activate; node 1 gives node 0 an inert `1 - w`. The single product
/// buys media only at step `t`.
pub fn media_single(w: f64, t: usize) -> Fixture {
    assert!(w > 0.0 && w <= 1.0 && t >= 1);
    let mut edges = vec![(1, 2, 1.0), (2, 1, 1.0)];
    if w < 1.0 {
        edges.push((1, 0, 1.0 - w));
    }
    let mut beta = vec![0.0; t];
    beta[t - 1] = 1.0;
    Fixture {
        network: network(3, &edges),
        products: ProductSet::from_raw(&[(vec![1.0, 0.0], 1)]).expect("unit vector"),
        plans: vec![ChannelPlan {
            product: ProductId(0),
            seeds: vec![],
            alpha: 0.0,
            beta,
        }],
    }
}
