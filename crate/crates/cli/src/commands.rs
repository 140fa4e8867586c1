use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

use multichannel::channels::attach_social_gadget;
use multichannel::diffusion::{default_max_steps, reaches_threshold, run_diffusion, sample_thresholds};
use multichannel::features::{format_products, parse_products};
use multichannel::fixtures::{fig2, fig3, toy, Fixture};
use multichannel::network::{format_edges, format_similarities, parse_network};
use multichannel::optimizer::{best_response_loop, ce_optimize, trace_csv, CeConfig, CostModel};
use multichannel::oracle::{exact_spread, GridSpec, ThresholdLaw};
use multichannel::streams::{derive_seed, replication_key, replication_rng};
use multichannel::{
    build_augmented, estimate_spread, ChannelPlan, EstimateOptions, GadgetParams, Network, NetworkBuilder, NodeKind,
    ProductId, ProductSet, SeedAssignment, ThresholdAssignment,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::output::{Artifacts, Meta};

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_SIMULATE_REPS: u64 = 100_000;
pub const DEFAULT_TRIALS: u64 = 10_000;

/// Input file paths shared by the model commands.
#[derive(Clone, Debug)]
pub struct InputPaths {
    pub net: PathBuf,
    pub sim: Option<PathBuf>,
    pub products: PathBuf,
    pub plans: Option<PathBuf>,
}

/// Loaded model inputs with their raw bytes for hashing.
pub struct Inputs {
    pub network: Network,
    pub products: ProductSet,
    pub plans: Vec<ChannelPlan>,
    raw: Vec<(&'static str, Vec<u8>)>,
}

impl Inputs {
    fn raw(&self) -> Vec<(&str, &[u8])> {
        self.raw.iter().map(|(n, b)| (*n, b.as_slice())).collect()
    }
}

/// Missing inputs are configuration errors, caught before any work starts.
pub fn require_paths<'a>(paths: impl IntoIterator<Item = &'a Path>) -> CliResult<()> {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::Config(format!("input file not found: {}", p.display())));
        }
    }
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn load_inputs(paths: &InputPaths) -> CliResult<Inputs> {
    require_paths(
        [Some(&paths.net), paths.sim.as_ref(), Some(&paths.products), paths.plans.as_ref()]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path),
    )?;
    let net_text = read_text(&paths.net)?;
    let sim_text = match &paths.sim {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let sim_path = paths.sim.clone().unwrap_or_default();
    let network = parse_network(&paths.net, &net_text, &sim_path, &sim_text)?;
    let products_text = read_text(&paths.products)?;
    let (products, _) = parse_products(&paths.products, &products_text)?;
    let plans_text = match &paths.plans {
        Some(p) => read_text(p)?,
        None => "[]".into(),
    };
    let plans: Vec<ChannelPlan> = serde_json::from_str(&plans_text).map_err(|e| {
        CliError::Config(format!("{}: {e}", paths.plans.as_deref().unwrap_or(Path::new("plans")).display()))
    })?;
    Ok(Inputs {
        network,
        products,
        plans,
        raw: vec![
            ("network", net_text.into_bytes()),
            ("similarity", sim_text.into_bytes()),
            ("products", products_text.into_bytes()),
            ("plans", plans_text.into_bytes()),
        ],
    })
}

fn csv_per_node(aug_base: usize, products: &ProductSet, counts: &[Vec<u64>], reps: u64) -> String {
    let mut s = String::from("node,product,probability\n");
    for v in 0..aug_base {
        for (p, row) in products.ids().zip(counts) {
            s.push_str(&format!("{v},{},{}\n", p.0, row[v] as f64 / reps as f64));
        }
    }
    s
}

#[derive(Serialize)]
struct SimulateSettings<'a> {
    command: &'a str,
    seed: u64,
    reps: u64,
    gadget: GadgetParams,
}

pub fn simulate(inputs: &Inputs, cfg: &FileConfig, seed: Option<u64>, reps: Option<u64>) -> CliResult<Artifacts> {
    let seed = seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let reps = reps.or(cfg.reps).unwrap_or(DEFAULT_SIMULATE_REPS);
    let gadget = cfg.gadget();
    let settings = SimulateSettings {
        command: "simulate",
        seed,
        reps,
        gadget,
    };
    let meta = Meta::new(seed, &settings, &inputs.raw());
    let (net, products, plans) = (&inputs.network, &inputs.products, &inputs.plans);
    let aug = build_augmented(net, products, plans, &gadget)?;
    let est = estimate_spread(&aug, products, plans, &EstimateOptions::new(reps, seed).with_per_node())?;

    let per_product: Vec<_> = products
        .ids()
        .map(|p| json!({ "product": p.0, "mean": est.mean(p), "stderr": est.stderr(p), "total": est.totals[p.0] }))
        .collect();
    let mut out = Artifacts::default();
    out.json(
        "simulate.json",
        &json!({
            "meta": meta,
            "replications": reps,
            "real_nodes": aug.base_nodes,
            "augmented_nodes": aug.net.node_count(),
            "spread": per_product,
        }),
    );
    let counts = est.node_counts.as_ref().expect("per-node counts requested");
    out.text("per_node.csv", csv_per_node(aug.base_nodes, products, counts, reps));

    // replication 0 as a sample trajectory
    let seeds = aug.seed_assignment(products, plans)?;
    let thresholds = sample_thresholds(&aug.net, &mut replication_rng(seed, 0));
    let trajectory = run_diffusion(
        &aug.net,
        products,
        &seeds,
        &thresholds,
        replication_key(seed, 0),
        default_max_steps(&aug.net, aug.horizon),
    )?;
    out.text("trajectory.csv", trajectory.to_csv());
    let provenance: Vec<_> = aug
        .provenance()
        .into_iter()
        .map(|(v, kind)| json!({ "node": v, "kind": kind }))
        .collect();
    out.json("pseudo.json", &json!({ "meta": meta, "base_nodes": aug.base_nodes, "pseudonodes": provenance }));
    Ok(out)
}

#[derive(Serialize)]
struct OptimizeSettings<'a> {
    command: &'a str,
    seed: u64,
    focal: usize,
    budget: f64,
    cost: CostModel,
    ce: &'a CeConfig,
}

fn horizon_of(cfg: &FileConfig, plans: &[ChannelPlan]) -> usize {
    cfg.horizon.or_else(|| plans.first().map(ChannelPlan::horizon)).unwrap_or(0)
}

pub fn optimize(
    inputs: &Inputs,
    cfg: &FileConfig,
    seed: Option<u64>,
    reps: Option<u64>,
    budget: Option<f64>,
    focal: Option<usize>,
) -> CliResult<Artifacts> {
    let seed = seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let budget = budget
        .or(cfg.budget)
        .ok_or_else(|| CliError::Config("optimize needs --budget or budget in the config".into()))?;
    let focal = ProductId(focal.or(cfg.focal).unwrap_or(0));
    inputs.products.get(focal)?;
    let competitors: Vec<ChannelPlan> = inputs.plans.iter().filter(|p| p.product != focal).cloned().collect();
    let cost = cfg.cost_model();
    let ce = cfg.ce_config(reps, horizon_of(cfg, &competitors));
    let settings = OptimizeSettings {
        command: "optimize",
        seed,
        focal: focal.0,
        budget,
        cost,
        ce: &ce,
    };
    let meta = Meta::new(seed, &settings, &inputs.raw());
    let result = ce_optimize(&inputs.network, &inputs.products, focal, &competitors, &cost, budget, &ce, seed)?;

    let mut all = competitors.clone();
    all.push(result.plan.clone());
    all.sort_by_key(|p| p.product);
    let mut out = Artifacts::default();
    out.json(
        "optimize.json",
        &json!({
            "meta": meta,
            "focal": focal.0,
            "budget": budget,
            "cost": cost,
            "plan": result.plan,
            "objective": result.objective,
            "converged": result.converged,
            "iterations": result.trace.len(),
            "distribution": result.state,
        }),
    );
    out.json("plans.json", &all);
    out.text("trace.csv", trace_csv(&result.trace));
    Ok(out)
}

#[derive(Serialize)]
struct BestResponseSettings<'a> {
    command: &'a str,
    seed: u64,
    rounds: usize,
    budgets: &'a [f64],
    cost: CostModel,
    ce: &'a CeConfig,
}

pub fn best_response(
    inputs: &Inputs,
    cfg: &FileConfig,
    seed: Option<u64>,
    reps: Option<u64>,
    budget: Option<f64>,
    rounds: Option<usize>,
) -> CliResult<Artifacts> {
    let seed = seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let k = inputs.products.len();
    let budgets = match (budget, &cfg.budgets, cfg.budget) {
        (Some(b), _, _) => vec![b; k],
        (None, Some(list), _) => list.clone(),
        (None, None, Some(b)) => vec![b; k],
        (None, None, None) => {
            return Err(CliError::Config("best-response needs --budget, budget or budgets".into()));
        }
    };
    if budgets.len() != k {
        return Err(CliError::Config(format!("{} budgets for {k} products", budgets.len())));
    }
    let rounds = rounds.or(cfg.rounds).unwrap_or(3);
    let cost = cfg.cost_model();
    let ce = cfg.ce_config(reps, cfg.horizon.unwrap_or(0));
    let settings = BestResponseSettings {
        command: "best-response",
        seed,
        rounds,
        budgets: &budgets,
        cost,
        ce: &ce,
    };
    let meta = Meta::new(seed, &settings, &inputs.raw());
    let costs = vec![cost; k];
    let result = best_response_loop(&inputs.network, &inputs.products, &costs, &budgets, rounds, &ce, seed)?;

    let mut csv = String::from("round,product,objective\n");
    for (r, row) in result.objectives.iter().enumerate() {
        for (p, v) in row.iter().enumerate() {
            csv.push_str(&format!("{},{p},{v}\n", r + 1));
        }
    }
    let mut out = Artifacts::default();
    out.json(
        "best_response.json",
        &json!({
            "meta": meta,
            "rounds_run": result.rounds_run,
            "budgets": budgets,
            "plans": result.plans,
            "objectives": result.objectives,
        }),
    );
    out.json("plans.json", &result.plans);
    out.text("objectives.csv", csv);
    Ok(out)
}

#[derive(Serialize)]
struct OracleSettings<'a> {
    command: &'a str,
    grid: Option<usize>,
    gadget: GadgetParams,
}

pub fn oracle(inputs: &Inputs, cfg: &FileConfig, grid: Option<usize>) -> CliResult<Artifacts> {
    let grid = grid.or(cfg.grid);
    let gadget = cfg.gadget();
    let settings = OracleSettings {
        command: "oracle",
        grid,
        gadget,
    };
    let meta = Meta::new(0, &settings, &inputs.raw());
    let (net, products, plans) = (&inputs.network, &inputs.products, &inputs.plans);
    let aug = build_augmented(net, products, plans, &gadget)?;
    let law = match grid {
        Some(m) => ThresholdLaw::Grid(GridSpec::new(m)),
        None => ThresholdLaw::Uniform,
    };
    let exact = exact_spread(&aug, products, plans, &law)?;
    let node_probability: Vec<&[f64]> = exact.node_probability.iter().map(|p| &p[..aug.base_nodes]).collect();
    let mut out = Artifacts::default();
    out.json(
        "oracle.json",
        &json!({
            "meta": meta,
            "law": match grid { Some(m) => json!({ "grid": m }), None => json!("uniform") },
            "spread": exact.per_product,
            "node_probability": node_probability,
            "leaves": exact.leaves,
        }),
    );
    Ok(out)
}

/// Gadget with `(chi_w, eps)` fed by `p`'s root and a friend seeded with a
/// product at angle `theta` to `p`. Whether the gadget activates, and with
/// what product.
fn gadget_trial(chi: f64, eps: f64, theta: f64) -> CliResult<(bool, Option<ProductId>)> {
    let products = ProductSet::from_raw(&[(vec![1.0, 0.0], 1), (vec![theta.cos().max(0.0), theta.sin()], 1)])?;
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
        ..GadgetParams::default()
    };
    let w = attach_social_gadget(&mut b, root, &plan, 0.into(), 1.into(), 1.0, 1.0, &params)?
        .ok_or_else(|| CliError::Internal("gadget not created".into()))?;
    let net = b.build();
    let sets = if theta == 0.0 {
        vec![vec![root, 0.into()], vec![]]
    } else {
        vec![vec![root], vec![0.into()]]
    };
    let seeds = SeedAssignment::new(&net, &products, sets)?;
    let out = run_diffusion(&net, &products, &seeds, &ThresholdAssignment::constant(&net, 1.0), 0, 10)?;
    Ok((out.activation_time[w.index()] == Some(1), out.purchased[w.index()]))
}

pub fn gadget_check(cfg: &FileConfig, seed: Option<u64>, trials: Option<u64>) -> CliResult<Artifacts> {
    let seed = seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let trials = trials.or(cfg.trials).unwrap_or(DEFAULT_TRIALS);
    let meta = Meta::new(seed, &json!({ "command": "gadget-check", "trials": trials }), &[]);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0));
    let mut engine = 0u64;
    let mut algebra = 0u64;
    let mut examples = Vec::new();
    for _ in 0..trials {
        let chi = rng.random_range(1e-3..=1.0);
        let eps = chi * rng.random_range(1e-3..1.0 - 1e-3);
        let theta = FRAC_PI_2 * (1.0 - rng.random::<f64>());
        let bad_engine = gadget_trial(chi, eps, theta)? != (false, None)
            || gadget_trial(chi, eps, 0.0)? != (true, Some(ProductId(0)));
        let wide = PI * (1.0 - rng.random::<f64>());
        let norm_sq = |t: f64| (chi - eps).powi(2) + eps * eps + 2.0 * (chi - eps) * eps * t.cos();
        let bad_algebra = reaches_threshold(norm_sq(wide), chi) || !reaches_threshold(norm_sq(0.0), chi);
        engine += bad_engine as u64;
        algebra += bad_algebra as u64;
        if (bad_engine || bad_algebra) && examples.len() < 10 {
            examples.push(json!({ "chi_w": chi, "epsilon": eps, "theta": theta, "theta_wide": wide }));
        }
    }
    let mut out = Artifacts::default();
    out.json(
        "gadget_check.json",
        &json!({
            "meta": meta,
            "trials": trials,
            "engine_counterexamples": engine,
            "algebraic_counterexamples": algebra,
            "examples": examples,
        }),
    );
    Ok(out)
}

fn add_fixture(out: &mut Artifacts, dir: &str, f: &Fixture) {
    out.text(format!("{dir}/network.txt"), format_edges(&f.network));
    out.text(format!("{dir}/similarity.txt"), format_similarities(&f.network));
    out.text(format!("{dir}/products.txt"), format_products(&f.products));
    out.json(format!("{dir}/plans.json"), &f.plans);
}

pub fn fixtures() -> Artifacts {
    let mut out = Artifacts::default();
    add_fixture(&mut out, "fig2", &fig2::fixture());
    add_fixture(&mut out, "fig3", &fig3::fixture(fig3::Variant::Base));
    out.json("fig3/plans_t.json", &fig3::plans(fig3::Variant::WithU));
    add_fixture(&mut out, "toy", &toy::fixture());
    out.text(
        "toy/config.toml",
        format!("focal = {}\nbudget = {}\nhorizon = {}\n", toy::FOCAL.0, toy::BUDGET, toy::HORIZON),
    );
    out
}
