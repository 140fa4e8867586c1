//! Budget allocation by the cross-entropy method.
//!
//! A candidate plan is a seed set plus the social-ad weight and the media
//! schedule. The sampling distribution is independent Bernoulli inclusion per
//! real node and a normal, truncated at zero, per continuous weight. Each
//! iteration draws feasible plans, scores them by Monte Carlo spread against
//! the fixed competitor plans, refits the distribution to the elite samples,
//! and blends the fit into the old parameters.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{build_augmented, ChannelPlan, GadgetParams};
use crate::error::{Error, Result};
use crate::estimator::{estimate_spread, EstimateOptions};
use crate::features::{ProductId, ProductSet};
use crate::network::{Network, NodeId};
use crate::streams::derive_seed;

/// Slack allowed on the budget constraint.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// Linear cost of a plan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub seed_unit_cost: f64,
    pub alpha_unit_cost: f64,
    pub beta_unit_cost: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            seed_unit_cost: 1.0,
            alpha_unit_cost: 1.0,
            beta_unit_cost: 1.0,
        }
    }
}

impl CostModel {
    fn check(&self) -> Result<()> {
        let costs = [self.seed_unit_cost, self.alpha_unit_cost, self.beta_unit_cost];
        if costs.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("cost model {self:?}")))
        }
    }

    fn continuous_cost(&self, plan: &ChannelPlan) -> f64 {
        self.alpha_unit_cost * plan.alpha + self.beta_unit_cost * plan.beta_total()
    }
}

pub fn plan_cost(plan: &ChannelPlan, cm: &CostModel) -> f64 {
    cm.seed_unit_cost * plan.seeds.len() as f64 + cm.continuous_cost(plan)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CeConfig {
    /// Samples per iteration; `None` means `max(100, 2n)`.
    pub samples: Option<usize>,
    pub elite_fraction: f64,
    pub smoothing: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Monte Carlo replications per objective evaluation.
    pub replications: u64,
    /// Weight elite samples by objective value when refitting.
    pub weighted_update: bool,
    /// Media horizon `T` of the plans being searched.
    pub horizon: usize,
    pub seed_retries: usize,
    pub gadget: GadgetParams,
    /// Keep every evaluated plan in the outcome.
    pub record_samples: bool,
}

impl Default for CeConfig {
    fn default() -> Self {
        CeConfig {
            samples: None,
            elite_fraction: 0.1,
            smoothing: 0.7,
            max_iterations: 30,
            tolerance: 1e-3,
            replications: 10_000,
            weighted_update: false,
            horizon: 0,
            seed_retries: 100,
            gadget: GadgetParams::default(),
            record_samples: false,
        }
    }
}

impl CeConfig {
    fn check(&self) -> Result<()> {
        let ok = self.elite_fraction > 0.0
            && self.elite_fraction <= 1.0
            && self.smoothing > 0.0
            && self.smoothing <= 1.0
            && self.tolerance >= 0.0
            && self.replications > 0
            && self.samples != Some(0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("cross-entropy config {self:?}")))
        }
    }

    pub fn sample_count(&self, real_nodes: usize) -> usize {
        self.samples.unwrap_or_else(|| 100.max(2 * real_nodes))
    }
}

/// Sampling distribution over plans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropyState {
    /// Inclusion probability per real node (0 for nodes that may not be seeded).
    pub seed_probs: Vec<f64>,
    pub alpha_mean: f64,
    pub alpha_std: f64,
    pub beta_mean: Vec<f64>,
    pub beta_std: Vec<f64>,
    pub iteration: usize,
}

impl CrossEntropyState {
    /// Starts with half the budget expected on seeds and the other half
    /// spread evenly over `alpha` and the media steps.
    pub fn initial(allowed: &[bool], cm: &CostModel, budget: f64, horizon: usize) -> Self {
        let candidates = allowed.iter().filter(|a| **a).count().max(1);
        let p = if cm.seed_unit_cost > 0.0 {
            (0.5 * budget / (cm.seed_unit_cost * candidates as f64)).min(0.5)
        } else {
            0.5
        };
        let share = 0.5 * budget / (horizon + 1) as f64;
        let level = |cost: f64| if cost > 0.0 { share / cost } else { 1.0 };
        let alpha = level(cm.alpha_unit_cost);
        let beta = level(cm.beta_unit_cost);
        CrossEntropyState {
            seed_probs: allowed.iter().map(|&a| if a { p } else { 0.0 }).collect(),
            alpha_mean: alpha,
            alpha_std: alpha,
            beta_mean: vec![beta; horizon],
            beta_std: vec![beta; horizon],
            iteration: 0,
        }
    }

    fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.seed_probs
            .iter()
            .copied()
            .chain([self.alpha_mean, self.alpha_std])
            .chain(self.beta_mean.iter().copied())
            .chain(self.beta_std.iter().copied())
    }

    /// Largest Bernoulli entropy (nats) over the seed probabilities.
    pub fn max_entropy(&self) -> f64 {
        self.seed_probs
            .iter()
            .map(|&p| {
                let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
                h(p) + h(1.0 - p)
            })
            .fold(0.0, f64::max)
    }

    pub fn max_std(&self) -> f64 {
        self.beta_std.iter().copied().fold(self.alpha_std, f64::max)
    }

    /// Refits to `elite` (plan, objective) pairs and blends with factor
    /// `smoothing`: `new = smoothing * fit + (1 - smoothing) * old`.
    pub fn refit(&mut self, elite: &[(&ChannelPlan, f64)], smoothing: f64, weighted: bool) {
        if elite.is_empty() {
            return;
        }
        let mut weights: Vec<f64> = if weighted {
            elite.iter().map(|(_, v)| v.max(0.0)).collect()
        } else {
            vec![1.0; elite.len()]
        };
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            weights = vec![1.0; elite.len()];
        }
        let total: f64 = weights.iter().sum();

        let mut freq = vec![0.0; self.seed_probs.len()];
        for ((plan, _), w) in elite.iter().zip(&weights) {
            for s in &plan.seeds {
                freq[s.index()] += w;
            }
        }
        let blend = |old: &mut f64, fit: f64| *old = smoothing * fit + (1.0 - smoothing) * *old;
        for (p, f) in self.seed_probs.iter_mut().zip(freq) {
            blend(p, f / total);
        }

        let moments = |values: Vec<f64>| {
            let mean = values.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>() / total;
            let var = values
                .iter()
                .zip(&weights)
                .map(|(x, w)| w * (x - mean) * (x - mean))
                .sum::<f64>()
                / total;
            (mean, var.sqrt())
        };
        let (m, s) = moments(elite.iter().map(|(p, _)| p.alpha).collect());
        blend(&mut self.alpha_mean, m);
        blend(&mut self.alpha_std, s);
        for t in 0..self.beta_mean.len() {
            let (m, s) = moments(elite.iter().map(|(p, _)| p.beta[t]).collect());
            blend(&mut self.beta_mean[t], m);
            blend(&mut self.beta_std[t], s);
        }
        self.iteration += 1;
    }
}

fn truncated_normal<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> f64 {
    if std <= 0.0 {
        return mean.max(0.0);
    }
    for _ in 0..64 {
        let z: f64 = rng.sample(StandardNormal);
        let x = mean + std * z;
        if x >= 0.0 {
            return x;
        }
    }
    0.0
}

/// Draws a plan within budget: seeds are redrawn while their cost alone
/// exceeds the budget, then the continuous part is scaled down to fit.
pub fn sample_plan<R: Rng + ?Sized>(
    ce: &CrossEntropyState,
    product: ProductId,
    cm: &CostModel,
    budget: f64,
    retries: usize,
    rng: &mut R,
) -> Result<ChannelPlan> {
    if budget.is_nan() || budget <= 0.0 {
        return Err(Error::InvalidArgument(format!("budget {budget} must be positive")));
    }
    let mut seeds = None;
    for _ in 0..retries.max(1) {
        let s: Vec<NodeId> = ce
            .seed_probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| rng.random::<f64>() < p)
            .map(|(v, _)| NodeId::from(v))
            .collect();
        if cm.seed_unit_cost * s.len() as f64 <= budget + BUDGET_TOLERANCE {
            seeds = Some(s);
            break;
        }
    }
    let seeds = seeds.ok_or_else(|| {
        Error::Infeasible(format!("no seed set within budget {budget} after {retries} draws"))
    })?;
    let alpha = truncated_normal(ce.alpha_mean, ce.alpha_std, rng);
    let beta = ce
        .beta_mean
        .iter()
        .zip(&ce.beta_std)
        .map(|(&m, &s)| truncated_normal(m, s, rng))
        .collect();
    let mut plan = ChannelPlan {
        product,
        seeds,
        alpha,
        beta,
    };
    let room = (budget - cm.seed_unit_cost * plan.seeds.len() as f64).max(0.0);
    let cont = cm.continuous_cost(&plan);
    if cont > room {
        let f = room / cont;
        plan.alpha *= f;
        for b in &mut plan.beta {
            *b *= f;
        }
    }
    Ok(plan)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub best: f64,
    pub mean: f64,
    pub elite_threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CeOutcome {
    pub plan: ChannelPlan,
    /// Estimated spread of the focal product under `plan`.
    pub objective: f64,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub state: CrossEntropyState,
    /// Every evaluated plan with its estimate, when requested.
    pub evaluated: Vec<(ChannelPlan, f64)>,
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("iteration,best,mean,elite_threshold\n");
    for r in trace {
        s.push_str(&format!("{},{},{},{}\n", r.iteration, r.best, r.mean, r.elite_threshold));
    }
    s
}

/// Spread of `focal` when it plays `plan` against `competitors`.
pub fn evaluate_plan(
    net: &Network,
    products: &ProductSet,
    plan: &ChannelPlan,
    competitors: &[ChannelPlan],
    config: &CeConfig,
    seed: u64,
) -> Result<f64> {
    let mut plans = competitors.to_vec();
    plans.push(plan.clone());
    let aug = build_augmented(net, products, &plans, &config.gadget)?;
    let est = estimate_spread(&aug, products, &plans, &EstimateOptions::new(config.replications, seed))?;
    Ok(est.mean(plan.product))
}

/// Cross-entropy search for the focal product's plan against fixed
/// competitor plans. Returns the best plan evaluated.
#[allow(clippy::too_many_arguments)]
pub fn ce_optimize(
    net: &Network,
    products: &ProductSet,
    focal: ProductId,
    competitor_plans: &[ChannelPlan],
    cm: &CostModel,
    budget: f64,
    config: &CeConfig,
    seed: u64,
) -> Result<CeOutcome> {
    products.get(focal)?;
    cm.check()?;
    config.check()?;
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::InvalidArgument(format!("budget {budget}")));
    }
    let mut allowed: Vec<bool> = net.kinds().iter().map(|k| k.is_real()).collect();
    for plan in competitor_plans {
        if plan.product == focal {
            return Err(Error::InvalidPlan(format!("competitor plan for focal product {focal}")));
        }
        if plan.horizon() != config.horizon {
            return Err(Error::HorizonMismatch(config.horizon, plan.horizon()));
        }
        for s in &plan.seeds {
            if let Some(a) = allowed.get_mut(s.index()) {
                *a = false;
            }
        }
    }

    let mut state = CrossEntropyState::initial(&allowed, cm, budget, config.horizon);
    let empty = ChannelPlan::empty(focal, config.horizon);
    if budget == 0.0 {
        let objective = evaluate_plan(net, products, &empty, competitor_plans, config, derive_seed(seed, 1, 0))?;
        return Ok(CeOutcome {
            plan: empty,
            objective,
            trace: Vec::new(),
            converged: true,
            state,
            evaluated: Vec::new(),
        });
    }

    let n_samples = config.sample_count(net.real_node_count());
    let n_elite = ((config.elite_fraction * n_samples as f64).ceil() as usize).clamp(1, n_samples);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0));
    let mut best: Option<(ChannelPlan, f64)> = None;
    let mut trace = Vec::new();
    let mut evaluated = Vec::new();
    let mut converged = false;

    for iteration in 0..config.max_iterations {
        let samples = (0..n_samples)
            .map(|_| sample_plan(&state, focal, cm, budget, config.seed_retries, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        // common random numbers within an iteration
        let eval_seed = derive_seed(seed, 1, iteration as u64 + 1);
        let values = samples
            .par_iter()
            .map(|plan| evaluate_plan(net, products, plan, competitor_plans, config, eval_seed))
            .collect::<Result<Vec<f64>>>()?;

        let mut order: Vec<usize> = (0..n_samples).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let top = order[0];
        if best.as_ref().is_none_or(|(_, v)| values[top] > *v) {
            best = Some((samples[top].clone(), values[top]));
        }
        let elite: Vec<(&ChannelPlan, f64)> =
            order[..n_elite].iter().map(|&i| (&samples[i], values[i])).collect();
        trace.push(TraceRow {
            iteration,
            best: best.as_ref().map_or(f64::NAN, |b| b.1),
            mean: values.iter().sum::<f64>() / n_samples as f64,
            elite_threshold: values[order[n_elite - 1]],
        });

        let before: Vec<f64> = state.params().collect();
        state.refit(&elite, config.smoothing, config.weighted_update);
        let change = before
            .iter()
            .zip(state.params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if config.record_samples {
            evaluated.extend(samples.into_iter().zip(values));
        }
        let degenerate = state.max_entropy() < config.tolerance && state.max_std() < config.tolerance;
        if change < config.tolerance || degenerate {
            converged = true;
            break;
        }
    }

    let (plan, objective) = best.expect("at least one iteration");
    Ok(CeOutcome {
        plan,
        objective,
        trace,
        converged,
        state,
        evaluated,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponseOutcome {
    /// Final plan per product.
    pub plans: Vec<ChannelPlan>,
    /// Objective per product after each completed round.
    pub objectives: Vec<Vec<f64>>,
    pub rounds_run: usize,
}

/// Seed used for `product`'s search in `round`.
pub fn best_response_seed(seed: u64, round: usize, product: ProductId) -> u64 {
    derive_seed(seed, 2 + round as u64, product.0 as u64)
}

/// Round-robin best responses: each product in turn re-optimizes against the
/// others' current plans. Stops after `rounds` rounds, or once a full round
/// changes no product's objective by more than the configured tolerance.
pub fn best_response_loop(
    net: &Network,
    products: &ProductSet,
    cost_models: &[CostModel],
    budgets: &[f64],
    rounds: usize,
    config: &CeConfig,
    seed: u64,
) -> Result<BestResponseOutcome> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    let k = products.len();
    if cost_models.len() != k || budgets.len() != k {
        return Err(Error::InvalidArgument(format!(
            "need {k} cost models and budgets, got {} and {}",
            cost_models.len(),
            budgets.len()
        )));
    }
    let mut plans: Vec<ChannelPlan> = products.ids().map(|p| ChannelPlan::empty(p, config.horizon)).collect();
    let mut objectives: Vec<Vec<f64>> = Vec::new();
    let mut rounds_run = 0;
    for round in 0..rounds {
        let mut current = vec![0.0; k];
        for p in products.ids() {
            let competitors: Vec<ChannelPlan> =
                plans.iter().filter(|c| c.product != p).cloned().collect();
            let out = ce_optimize(
                net,
                products,
                p,
                &competitors,
                &cost_models[p.0],
                budgets[p.0],
                config,
                best_response_seed(seed, round, p),
            )?;
            plans[p.0] = out.plan;
            current[p.0] = out.objective;
        }
        rounds_run += 1;
        let settled = objectives.last().is_some_and(|prev: &Vec<f64>| {
            prev.iter().zip(&current).all(|(a, b)| (a - b).abs() <= config.tolerance)
        });
        objectives.push(current);
        if settled {
            break;
        }
    }
    Ok(BestResponseOutcome {
        plans,
        objectives,
        rounds_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(seeds: usize, alpha: f64, beta: &[f64]) -> ChannelPlan {
        ChannelPlan {
            product: ProductId(0),
            seeds: (0..seeds).map(NodeId::from).collect(),
            alpha,
            beta: beta.to_vec(),
        }
    }

    fn unit(s: f64, a: f64, b: f64) -> CostModel {
        CostModel {
            seed_unit_cost: s,
            alpha_unit_cost: a,
            beta_unit_cost: b,
        }
    }

    #[test]
    fn cost_examples() {
        assert_eq!(plan_cost(&plan(0, 0.0, &[]), &unit(1.0, 1.0, 1.0)), 0.0);
        assert!((plan_cost(&plan(3, 0.5, &[0.2, 0.3]), &unit(1.0, 1.0, 1.0)) - 4.0).abs() < 1e-15);
        assert_eq!(plan_cost(&plan(5, 0.7, &[0.9]), &unit(2.0, 0.0, 0.0)), 10.0);
    }

    fn state(probs: Vec<f64>, alpha: f64, beta: f64) -> CrossEntropyState {
        CrossEntropyState {
            seed_probs: probs,
            alpha_mean: alpha,
            alpha_std: 0.0,
            beta_mean: vec![beta],
            beta_std: vec![0.0],
            iteration: 0,
        }
    }

    #[test]
    fn continuous_part_projected_to_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ce = state(vec![0.0; 4], 2.0, 2.0);
        let p = sample_plan(&ce, ProductId(0), &unit(1.0, 1.0, 1.0), 1.0, 100, &mut rng).unwrap();
        assert!(p.seeds.is_empty());
        assert!((plan_cost(&p, &unit(1.0, 1.0, 1.0)) - 1.0).abs() < 1e-12);
        assert!((p.alpha - 0.5).abs() < 1e-12 && (p.beta[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn oversized_seed_sets_are_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ce = state(vec![1.0; 10], 0.0, 0.0);
        let err = sample_plan(&ce, ProductId(0), &unit(1.0, 1.0, 1.0), 3.0, 100, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn mixed_seed_probabilities_resampled_into_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ce = state(vec![0.3; 10], 0.0, 0.0);
        for _ in 0..200 {
            let p = sample_plan(&ce, ProductId(0), &unit(1.0, 1.0, 1.0), 3.0, 100, &mut rng).unwrap();
            assert!(p.seeds.len() <= 3);
        }
    }

    #[test]
    fn slack_budget_leaves_sample_unscaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ce = state(vec![0.0; 2], 0.3, 0.4);
        let p = sample_plan(&ce, ProductId(0), &unit(1.0, 1.0, 1.0), 1e9, 100, &mut rng).unwrap();
        assert_eq!((p.alpha, p.beta[0]), (0.3, 0.4));
    }

    #[test]
    fn refit_without_smoothing_matches_elite_frequencies() {
        let mut ce = state(vec![0.5; 4], 1.0, 1.0);
        let a = ChannelPlan { seeds: vec![0.into(), 1.into()], ..plan(0, 1.0, &[0.0]) };
        let b = ChannelPlan { seeds: vec![1.into()], ..plan(0, 3.0, &[2.0]) };
        let c = ChannelPlan { seeds: vec![1.into(), 3.into()], ..plan(0, 2.0, &[1.0]) };
        let d = ChannelPlan { seeds: vec![], ..plan(0, 2.0, &[1.0]) };
        ce.refit(&[(&a, 4.0), (&b, 3.0), (&c, 2.0), (&d, 1.0)], 1.0, false);
        assert_eq!(ce.seed_probs, vec![0.25, 0.75, 0.0, 0.25]);
        assert_eq!(ce.alpha_mean, 2.0);
        assert!((ce.alpha_std - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(ce.beta_mean, vec![1.0]);
        assert_eq!(ce.iteration, 1);
    }

    #[test]
    fn smoothing_blends_with_previous_state() {
        let mut ce = state(vec![1.0, 0.0], 1.0, 1.0);
        let a = ChannelPlan { seeds: vec![1.into()], ..plan(0, 3.0, &[3.0]) };
        ce.refit(&[(&a, 1.0)], 0.7, false);
        assert!((ce.seed_probs[0] - 0.3).abs() < 1e-15);
        assert!((ce.seed_probs[1] - 0.7).abs() < 1e-15);
        assert!((ce.alpha_mean - 2.4).abs() < 1e-12);
    }

    #[test]
    fn weighted_refit_uses_objective_values() {
        let mut ce = state(vec![0.5; 2], 1.0, 1.0);
        let a = ChannelPlan { seeds: vec![0.into()], ..plan(0, 0.0, &[0.0]) };
        let b = ChannelPlan { seeds: vec![1.into()], ..plan(0, 0.0, &[0.0]) };
        ce.refit(&[(&a, 3.0), (&b, 1.0)], 1.0, true);
        assert_eq!(ce.seed_probs, vec![0.75, 0.25]);
    }
}
