//! Competitive multi-channel marketing on social networks.
//!
//! * [`network`]: influence graph with similarities and node provenance.
//! * [`features`]: product vectors and the nearest-angle purchase rule.
//! * [`diffusion`]: the multi-feature competitive linear threshold engine.
//! * [`channels`]: mass-media and social-ad pseudonode gadgets.
//! * [`estimator`]: parallel, reproducible Monte Carlo spread estimates.
//! * [`optimizer`]: cross-entropy budget allocation and best responses.
//! * [`oracle`]: exact small-instance evaluators used as ground truth.

pub mod channels;
pub mod diffusion;
pub mod error;
pub mod estimator;
pub mod features;
pub mod fixtures;
pub mod network;
pub mod optimizer;
pub mod oracle;
pub mod streams;

pub use channels::{build_augmented, AugmentedNetwork, ChannelPlan, GadgetParams};
pub use diffusion::{run_diffusion, sample_thresholds, DiffusionOutcome, SeedAssignment, ThresholdAssignment};
pub use error::{Error, Result};
pub use estimator::{estimate_node_probability, estimate_spread, EstimateOptions, SpreadEstimate};
pub use features::{Product, ProductId, ProductSet};
pub use network::{Network, NetworkBuilder, NodeId, NodeKind};
pub use optimizer::{best_response_loop, ce_optimize, plan_cost, CeConfig, CostModel};
