//! Monte Carlo scenario harness: replicated simulations, matched limit-side
//! samples, empirical-law comparisons, and CSV/JSON emission.

use crate::domain::Site;
use crate::kingman::{
    entrance_count, marginal_distribution, n_alpha, n_mer, poisson_domination_rate,
    simulate_merging, simulate_rebirth,
};
use crate::lookdown::{build_graph, coalescent_groups, rebirth_from_lookdown};
use crate::par::replicate_map;
use crate::rebirth::{sample_rebirth_counts, RebirthFieldParams, RebirthState};
use crate::rng::{mix64, replicate_rng};
use crate::spatial::{
    init_configuration, region_half_for, Gamma, InitKind, InitialConfig, SimParams, SpatialState,
};
use crate::stats::{chi_square_homogeneity, mean_stderr, tv_distance};
use crate::walk::{contained_in_annulus, first_meeting_time, max_step_variance, WalkKernel};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ErdosTaylor,
    Theorem1,
    Theorem2,
    Theorem3,
    Theorem4,
    Theorem5,
    MomentBound,
    Exchangeability,
    SparseRecursion,
    LookdownCheck,
    PoissonDomination,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::ErdosTaylor => "erdos_taylor",
            Scenario::Theorem1 => "theorem1",
            Scenario::Theorem2 => "theorem2",
            Scenario::Theorem3 => "theorem3",
            Scenario::Theorem4 => "theorem4",
            Scenario::Theorem5 => "theorem5",
            Scenario::MomentBound => "moment_bound",
            Scenario::Exchangeability => "exchangeability",
            Scenario::SparseRecursion => "sparse_recursion",
            Scenario::LookdownCheck => "lookdown_check",
            Scenario::PoissonDomination => "poisson_domination",
        }
    }
}

#[derive(Debug, Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

fn d_t() -> f64 {
    1e4
}
fn d_alpha() -> f64 {
    0.3
}
fn d_beta() -> f64 {
    1.0
}
fn d_one() -> f64 {
    1.0
}
fn d_delta() -> f64 {
    0.5
}
fn d_u() -> Vec<f64> {
    vec![0.5, 0.8]
}
fn d_reps() -> usize {
    1000
}
fn d_buffer() -> f64 {
    3.0
}
fn d_trunc() -> u32 {
    128
}
fn d_eps() -> f64 {
    0.01
}
fn d_recn() -> u32 {
    5
}
fn d_c() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default = "d_t")]
    pub t: f64,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub alpha_grid: Option<Vec<f64>>,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default)]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default = "d_one")]
    pub rho: f64,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default = "d_one")]
    pub gamma: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_u")]
    pub u_vector: Vec<f64>,
    #[serde(default = "d_reps")]
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "d_buffer")]
    pub region_buffer: f64,
    #[serde(default = "d_trunc")]
    pub truncation: u32,
    #[serde(default = "d_eps")]
    pub tail_epsilon: f64,
    #[serde(default)]
    pub field_half: Option<i64>,
    #[serde(default = "d_recn")]
    pub recursion_n: u32,
    #[serde(default = "d_c")]
    pub annulus_c: f64,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        ScenarioConfig {
            scenario,
            t: d_t(),
            alpha: d_alpha(),
            alpha_grid: None,
            beta: d_beta(),
            beta_grid: None,
            rho: d_one(),
            p: None,
            gamma: d_one(),
            delta: d_delta(),
            u_vector: d_u(),
            replicates: d_reps(),
            master_seed: 0,
            region_buffer: d_buffer(),
            truncation: d_trunc(),
            tail_epsilon: d_eps(),
            field_half: None,
            recursion_n: d_recn(),
            annulus_c: d_c(),
            threads: None,
        }
    }

    fn beta_grid_or_default(&self) -> Vec<f64> {
        self.beta_grid
            .clone()
            .unwrap_or_else(|| match self.scenario {
                Scenario::MomentBound => vec![0.45, 0.5, 0.55, 0.6],
                _ => vec![0.6, 0.8, 1.0],
            })
    }

    fn alpha_grid_or_default(&self) -> Vec<f64> {
        self.alpha_grid.clone().unwrap_or_else(|| vec![0.4, 0.7])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError(msg));
        if self.t <= 1.0 {
            return fail(format!("t must exceed 1, got {}", self.t));
        }
        if self.replicates == 0 {
            return fail("replicates must be positive".into());
        }
        if self.gamma <= 0.0 {
            return fail(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.tail_epsilon > 0.0 && self.tail_epsilon < 1.0) {
            return fail(format!(
                "tail_epsilon must lie in (0,1), got {}",
                self.tail_epsilon
            ));
        }
        if self.region_buffer < 1.0 {
            return fail(format!(
                "region_buffer must be at least 1, got {}",
                self.region_buffer
            ));
        }
        match self.scenario {
            Scenario::ErdosTaylor => {
                if self.alpha <= 0.0 || self.beta <= 0.0 {
                    return fail("erdos_taylor requires alpha > 0 and beta > 0".into());
                }
            }
            Scenario::Theorem1 | Scenario::Theorem2 | Scenario::Theorem3 => {
                if !(self.alpha > 0.0 && self.alpha < 1.0) {
                    return fail(format!("alpha must lie in (0,1), got {}", self.alpha));
                }
                let grid = self.beta_grid_or_default();
                if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
                    return fail("beta_grid must be non-empty and increasing".into());
                }
                if grid.iter().any(|&b| b <= self.alpha) {
                    return fail(format!(
                        "every beta in the grid must exceed alpha = {}",
                        self.alpha
                    ));
                }
                if self.scenario == Scenario::Theorem2 && self.delta <= 0.0 {
                    return fail("theorem2 requires delta > 0".into());
                }
                if self.scenario == Scenario::Theorem3 {
                    if let Some(p) = self.p {
                        if !(p > 0.0 && p <= 1.0) {
                            return fail(format!("p must lie in (0,1], got {p}"));
                        }
                    }
                }
                if self.rho <= 0.0 {
                    return fail(format!("rho must be positive, got {}", self.rho));
                }
            }
            Scenario::Theorem4 => {
                let grid = self.alpha_grid_or_default();
                if grid.len() < 2 || grid.windows(2).any(|w| w[0] >= w[1]) {
                    return fail("alpha_grid must have at least 2 increasing entries".into());
                }
                if grid.iter().any(|&a| a <= 0.0 || a >= 1.0) {
                    return fail("alpha_grid entries must lie in (0,1)".into());
                }
                if let Some(p) = self.p {
                    if !(p > 0.0 && p <= 1.0) {
                        return fail(format!("p must lie in (0,1], got {p}"));
                    }
                }
            }
            Scenario::Theorem5 => {
                if !(self.alpha > 0.0 && self.alpha < 1.0) {
                    return fail(format!("alpha must lie in (0,1), got {}", self.alpha));
                }
                if self.u_vector.is_empty() || self.u_vector.windows(2).any(|w| w[0] >= w[1]) {
                    return fail("u_vector must be non-empty and increasing".into());
                }
                if self.u_vector.iter().any(|&u| u <= self.alpha || u > 1.0) {
                    return fail(format!(
                        "u_vector entries must lie in (alpha, 1] with alpha = {}",
                        self.alpha
                    ));
                }
                if self.rho <= 0.0 {
                    return fail(format!("rho must be positive, got {}", self.rho));
                }
            }
            Scenario::MomentBound => {
                let grid = self.beta_grid_or_default();
                if grid.iter().any(|&b| b <= self.alpha) {
                    return fail(format!(
                        "every beta in the grid must exceed alpha = {}",
                        self.alpha
                    ));
                }
            }
            Scenario::Exchangeability => {
                let g = self.t.powf(self.alpha) * self.t.ln().powi(3);
                if self.t.powf(self.beta) < g {
                    return fail(format!(
                        "observation time t^beta must be at least t^alpha log^3 t = {g:.3}"
                    ));
                }
            }
            Scenario::SparseRecursion => {
                if self.recursion_n < 1 || self.recursion_n > 6 {
                    return fail(format!(
                        "recursion_n must lie in 1..=6, got {}",
                        self.recursion_n
                    ));
                }
                let ratio = self.alpha / self.beta;
                if !(ratio > 0.0 && ratio <= 1.0) {
                    return fail(format!(
                        "alpha/beta must lie in (0,1], got {ratio}"
                    ));
                }
            }
            Scenario::LookdownCheck => {}
            Scenario::PoissonDomination => {
                if self.delta <= 0.0 {
                    return fail(format!("delta must be positive, got {}", self.delta));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRecord {
    pub scenario: String,
    pub t: f64,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub delta: f64,
    pub u: Option<f64>,
    pub replicate: u64,
    pub statistic: String,
    pub value: f64,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "scenario,t,alpha,beta,rho,gamma,delta,u,replicate,statistic,value,seed";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders records in the fixed CSV schema.
pub fn to_csv(records: &[ResultRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.t,
            r.alpha,
            fmt_opt(r.beta),
            r.rho,
            r.gamma,
            r.delta,
            fmt_opt(r.u),
            r.replicate,
            r.statistic,
            r.value,
            r.seed
        )
        .expect("string write");
    }
    out
}

struct RecordBuilder {
    scenario: String,
    t: f64,
    alpha: f64,
    rho: f64,
    gamma: f64,
    delta: f64,
}

impl RecordBuilder {
    fn from_config(cfg: &ScenarioConfig) -> Self {
        RecordBuilder {
            scenario: cfg.scenario.name().to_string(),
            t: cfg.t,
            alpha: cfg.alpha,
            rho: cfg.rho,
            gamma: cfg.gamma,
            delta: cfg.delta,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn rec(
        &self,
        replicate: u64,
        seed: u64,
        statistic: &str,
        value: f64,
        alpha: Option<f64>,
        beta: Option<f64>,
        u: Option<f64>,
    ) -> ResultRecord {
        ResultRecord {
            scenario: self.scenario.clone(),
            t: self.t,
            alpha: alpha.unwrap_or(self.alpha),
            beta,
            rho: self.rho,
            gamma: self.gamma,
            delta: self.delta,
            u,
            replicate,
            statistic: statistic.to_string(),
            value,
            seed,
        }
    }
}

/// Restricted-growth-string code of the partition of 0..n−1 given as groups;
/// identifies the unlabeled set partition. Base n, element order.
fn partition_code(groups: &[Vec<usize>], n: usize) -> f64 {
    let mut class = vec![usize::MAX; n];
    for (g, members) in groups.iter().enumerate() {
        for &m in members {
            class[m] = g;
        }
    }
    // renumber classes by first appearance
    let mut seen: Vec<usize> = Vec::new();
    let mut code = 0usize;
    for &c in &class {
        let r = match seen.iter().position(|&s| s == c) {
            Some(r) => r,
            None => {
                seen.push(c);
                seen.len() - 1
            }
        };
        code = code * n + r;
    }
    code as f64
}

fn run_erdos_taylor(cfg: &ScenarioConfig) -> Vec<ResultRecord> {
    let rb = RecordBuilder::from_config(cfg);
    let kernel = WalkKernel::simple();
    let d = cfg.t.powf(cfg.alpha / 2.0).round() as i64;
    let horizon = cfg.t.powf(cfg.beta);
    let rows = replicate_map(cfg.replicates, |k| {
        let seed = mix64(cfg.master_seed, k as u64);
        let mut rng = replicate_rng(cfg.master_seed, k as u64);
        let met = first_meeting_time(&kernel, (0, 0), (d, 0), horizon, &mut rng);
        vec![rb.rec(
            k as u64,
            seed,
            "no_meeting",
            if met.is_none() { 1.0 } else { 0.0 },
            None,
            Some(cfg.beta),
            None,
        )]
    });
    rows.into_iter().flatten().collect()
}

fn init_kind_for(cfg: &ScenarioConfig) -> InitKind {
    match cfg.scenario {
        Scenario::Theorem2 => InitKind::InfiniteThinned {
            delta: cfg.delta,
            tail_epsilon: cfg.tail_epsilon,
        },
        Scenario::Theorem3 => match cfg.p {
            Some(p) => InitKind::Bernoulli(p),
            None => InitKind::Poisson(cfg.rho),
        },
        _ => InitKind::Poisson(cfg.rho),
    }
}

fn run_counts_vs_entrance(cfg: &ScenarioConfig) -> Vec<ResultRecord> {
    let rb = RecordBuilder::from_config(cfg);
    let betas = cfg.beta_grid_or_default();
    let horizon_max = cfg.t.powf(*betas.last().unwrap());
    let params = SimParams {
        gamma: Gamma::Finite(cfg.gamma),
        kernel: WalkKernel::simple(),
        region_half: region_half_for(horizon_max, cfg.region_buffer),
    };
    let kind = init_kind_for(cfg);
    let rows = replicate_map(cfg.replicates, |k| {
        let seed = mix64(cfg.master_seed, k as u64);
        let mut rng = replicate_rng(cfg.master_seed, k as u64);
        let mut state =
            init_configuration(&InitialConfig { kind }, cfg.t, cfg.alpha, &params, &mut rng);
        let mut recs = Vec::with_capacity(2 * betas.len());
        for &b in &betas {
            state.evolve(cfg.t.powf(b), &mut rng);
            recs.push(rb.rec(
                k as u64,
                seed,
                "count",
                state.block_count() as f64,
                None,
                Some(b),
                None,
            ));
        }
        for &b in &betas {
            let e = entrance_count((b / cfg.alpha).ln(), 1.0, cfg.tail_epsilon, &mut rng)
                .expect("entrance truncation in range");
            recs.push(rb.rec(k as u64, seed, "entrance", e as f64, None, Some(b), None));
        }
        recs
    });
    rows.into_iter().flatten().collect()
}

fn run_theorem4(cfg: &ScenarioConfig) -> Vec<ResultRecord> {
    let rb = RecordBuilder::from_config(cfg);
    let grid = cfg.alpha_grid_or_default();
    let p = cfg.p.unwrap_or(1.0);
    let params = SimParams {
        gamma: Gamma::Finite(cfg.gamma),
        kernel: WalkKernel::simple(),
        region_half: region_half_for(cfg.t, cfg.region_buffer),
    };
    let (a_lo, a_hi) = (grid[0], *grid.last().unwrap());
    let rows = replicate_map(cfg.replicates, |k| {
        let seed = mix64(cfg.master_seed, k as u64);
        let mut rng = replicate_rng(cfg.master_seed, k as u64);
        let mut state = init_configuration(
            &InitialConfig {
                kind: InitKind::Bernoulli(p),
            },
            cfg.t,
            1.0,
            &params,
            &mut rng,
        );
        state.evolve(cfg.t, &mut rng);
        let mut recs = Vec::with_capacity(2 * grid.len());
        for &a in &grid {
            recs.push(rb.rec(
                k as u64,
                seed,
                "restricted_count",
                state.restricted_block_count(a, cfg.t) as f64,
                Some(a),
                None,
                None,
            ));
        }
        let limit = simulate_rebirth(a_lo.ln(), a_hi.ln(), 0.0, cfg.truncation, 1.0, &mut rng);
        for &a in &grid {
            recs.push(rb.rec(
                k as u64,
                seed,
                "n_alpha",
                n_alpha(&limit, a.ln()) as f64,
                Some(a),
                None,
                None,
            ));
        }
        recs
    });
    rows.into_iter().flatten().collect()
}

fn run_theorem5(cfg: &ScenarioConfig) -> Vec<ResultRecord> {
    let rb = RecordBuilder::from_config(cfg);
    let kernel = WalkKernel::simple();
    // the field must cover every walk that could plausibly reach the α-box by
    // the last checkpoint: box radius plus four standard deviations of the
    // per-coordinate displacement
    let field_half = cfg.field_half.unwrap_or_else(|| {
        let u_max = *cfg.u_vector.last().unwrap();
        let sd = (max_step_variance(&kernel) * cfg.t.powf(u_max)).sqrt();
        (cfg.t.powf(cfg.alpha / 2.0) + 4.0 * sd).ceil() as i64
    });
    let fparams = RebirthFieldParams {
        t: cfg.t,
        alpha: cfg.alpha,
        u_vector: cfg.u_vector.clone(),
        rho: cfg.rho,
        gamma: cfg.gamma,
        field_half,
        region_half: None,
        kernel,
    };
    let merge_times: Vec<f64> = cfg.u_vector.iter().map(|&u| (u / cfg.alpha).ln()).collect();
    let eval = (1.0 / cfg.alpha).ln();
    let rows = replicate_map(cfg.replicates, |k| {
        let seed = mix64(cfg.master_seed, k as u64);
        let mut rng = replicate_rng(cfg.master_seed, k as u64);
        let counts = sample_rebirth_counts(&fparams, &mut rng);
        let mut recs = Vec::with_capacity(2 * counts.len());
        for (i, &u) in cfg.u_vector.iter().enumerate() {
            recs.push(rb.rec(
                k as u64,
                seed,
                "n_rebirth",
                counts[i] as f64,
                None,
                None,
                Some(u),
            ));
        }
        let limit = simulate_merging(&merge_times, eval, cfg.truncation, &mut rng);
        for (i, &u) in cfg.u_vector.iter().enumerate() {
            recs.push(rb.rec(
                k as u64,
                seed,
                "n_mer",
                n_mer(&limit, i + 1) as f64,
                None,
                None,
                Some(u),
            ));
        }
        recs
    });
    rows.into_iter().flatten().collect()
}

fn run_moment_bound(cfg: &ScenarioConfig) -> Vec<ResultRecord> {
    let rb = RecordBuilder::from_config(cfg);
    let betas = cfg.beta_grid_or_default();
    let horizon_max = cfg.t.powf(*betas.last().unwrap());
    let params = SimParams {
        gamma: Gamma::Finite(cfg.gamma),
        kernel: WalkKernel::simple(),
        region_half: region_half_for(horizon_max, cfg.region_buffer),
    };
    let rows = replicate_map(cfg.replicates, |k| {
        let seed = mix64(cfg.master_seed, k as u64);
        let mut rng = replicate_rng(cfg.master_seed, k as u64);
        let mut state = init_configuration(
            &InitialConfig {
                kind: InitKind::Poisson(cfg.rho),
            },
            cfg.t,
            cfg.alpha,
            &params,
            &mut rng,
        );
        betas
            .iter()
            .map(|&b| {
                state.evolve(cfg.t.powf(b), &mut rng);
                rb.rec(
                    k as u64,
                    seed,
                    "count",
                    state.block_count() as f64,
                    None,
                    Some(b),
                    None,
                )
            })
            .collect::<Vec<_>>()
    });
    rows.into_iter().flatten().collect()
}

fn run_exchangeability(cfg: &ScenarioConfig) -> Vec<ResultRecord> {
    let rb = RecordBuilder::from_config(cfg);
    let d = cfg.t.powf(cfg.alpha / 2.0).round() as i64;
    let sites: [Site; 3] = [(0, 0), (d, 0), (0, d)];
    assert!(contained_in_annulus(&sites, cfg.alpha, cfg.annulus_c, cfg.t));
    // a fixed cyclic permutation of the starting sites
    let permuted: [Site; 3] = [(0, d), (0, 0), (d, 0)];
    let horizon = cfg.t.powf(cfg.beta);
    let params = SimParams {
        gamma: Gamma::Finite(cfg.gamma),
        kernel: WalkKernel::simple(),
        region_half: region_half_for(horizon, cfg.region_buffer),
    };
    let rows = replicate_map(cfg.replicates, |k| {
        let seed = mix64(cfg.master_seed, k as u64);
        let mut rng = replicate_rng(cfg.master_seed, k as u64);
        let mut a = SpatialState::from_sites(&sites, &params);
        a.evolve(horizon, &mut rng);
        let mut b = SpatialState::from_sites(&permuted, &params);
        b.evolve(horizon, &mut rng);
        vec![
            rb.rec(
                k as u64,
                seed,
                "count_id",
                a.block_count() as f64,
                None,
                Some(cfg.beta),
                None,
            ),
            rb.rec(
                k as u64,
                seed,
                "count_perm",
                b.block_count() as f64,
                None,
                Some(cfg.beta),
                None,
            ),
        ]
    });
    rows.into_iter().flatten().collect()
}

/// Numerical integration (RK4 on the forward Kolmogorov chain) of the sparse
/// recursion: d/dτ p_{n,k}(τ) = C(n,2)·(p_{n−1,k}(τ) − p_{n,k}(τ)) with
/// p_{n,k}(0) = 1{k=n}, evaluated at τ = −log ratio. Returns the vector over
/// k = 1..=n.
pub fn sparse_recursion_table(n: u32, alpha_over_beta: f64) -> Vec<f64> {
    assert!((1..=6).contains(&n), "recursion table supports n in 1..=6");
    assert!(
        alpha_over_beta > 0.0 && alpha_over_beta <= 1.0,
        "ratio must lie in (0,1]"
    );
    let n = n as usize;
    let horizon = (1.0 / alpha_over_beta).ln();
    if n == 1 || horizon == 0.0 {
        let mut v = vec![0.0; n];
        v[n - 1] = 1.0;
        return v;
    }
    // state y[m][k-1] = p_{m,k}(τ) for m in 2..=n (p_{1,1} ≡ 1)
    let rate = |m: usize| (m * (m - 1)) as f64 / 2.0;
    let deriv = |y: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let mut d = vec![Vec::new(); n + 1];
        for m in 2..=n {
            let c = rate(m);
            let mut row = vec![0.0; m];
            for k in 1..=m {
                let lower = if m == 2 {
                    if k == 1 {
                        1.0
                    } else {
                        0.0
                    }
                } else if k <= m - 1 {
                    y[m - 1][k - 1]
                } else {
                    0.0
                };
                row[k - 1] = c * (lower - y[m][k - 1]);
            }
            d[m] = row;
        }
        d
    };
    let mut y: Vec<Vec<f64>> = (0..=n)
        .map(|m| {
            if m < 2 {
                Vec::new()
            } else {
                let mut v = vec![0.0; m];
                v[m - 1] = 1.0;
                v
            }
        })
        .collect();
    let steps = 20_000usize;
    let h = horizon / steps as f64;
    let axpy = |y: &Vec<Vec<f64>>, k: &Vec<Vec<f64>>, s: f64| -> Vec<Vec<f64>> {
        y.iter()
            .zip(k)
            .map(|(yr, kr)| yr.iter().zip(kr).map(|(a, b)| a + s * b).collect())
            .collect()
    };
    for _ in 0..steps {
        let k1 = deriv(&y);
        let k2 = deriv(&axpy(&y, &k1, h / 2.0));
        let k3 = deriv(&axpy(&y, &k2, h / 2.0));
        let k4 = deriv(&axpy(&y, &k3, h));
        for m in 2..=n {
            for k in 0..m {
                y[m][k] += h / 6.0 * (k1[m][k] + 2.0 * k2[m][k] + 2.0 * k3[m][k] + k4[m][k]);
            }
        }
    }
    y[n].clone()
}

fn run_sparse_recursion(cfg: &ScenarioConfig) -> Vec<ResultRecord> {
    let rb = RecordBuilder::from_config(cfg);
    let ratio = cfg.alpha / cfg.beta;
    let n = cfg.recursion_n;
    let rec = sparse_recursion_table(n, ratio);
    let marg = marginal_distribution(n, (1.0 / ratio).ln(), 1.0).expect("n <= 6");
    let seed = mix64(cfg.master_seed, 0);
    let mut out = Vec::new();
    for (k0, (&r, &m)) in rec.iter().zip(&marg).enumerate() {
        out.push(rb.rec(0, seed, &format!("recursion_{}_{}", n, k0 + 1), r, None, None, None));
        out.push(rb.rec(0, seed, &format!("marginal_{}_{}", n, k0 + 1), m, None, None, None));
    }
    out
}

fn run_lookdown_check(cfg: &ScenarioConfig) -> Vec<ResultRecord> {
    let rb = RecordBuilder::from_config(cfg);
    let sites: [Site; 4] = [(0, 0), (0, 0), (1, 0), (1, 0)];
    let horizon = 1.0;
    let kernel = WalkKernel::simple();
    let params = SimParams {
        gamma: Gamma::Finite(cfg.gamma),
        kernel: kernel.clone(),
        region_half: 64,
    };
    let rows = replicate_map(cfg.replicates, |k| {
        let seed = mix64(cfg.master_seed, k as u64);
        let mut rng = replicate_rng(cfg.master_seed, k as u64);
        // look-down side: one graph read off both ways
        let graph = build_graph(&sites, horizon, cfg.gamma, &kernel, None, &mut rng);
        let groups = coalescent_groups(&graph, horizon);
        let ld_partition = partition_code(&groups, 4);
        let ld_rebirth = rebirth_from_lookdown(&graph, horizon);
        let ld_labels: f64 = {
            let mut hosts: Vec<usize> = ld_rebirth.iter().map(|b| b.host).collect();
            hosts.sort_unstable();
            hosts.iter().fold(0.0, |acc, &h| acc * 4.0 + h as f64)
        };
        let ld_sizes: f64 = ld_rebirth
            .iter()
            .fold(0.0, |acc, b| acc * 5.0 + b.members.len() as f64);
        // engine side, plain coalescent with member tracking
        let mut plain = SpatialState::from_sites(&sites, &params);
        plain.enable_member_tracking();
        plain.evolve(horizon, &mut rng);
        let sp_groups: Vec<Vec<usize>> = {
            let members = plain.members.as_ref().unwrap();
            let mut gs: Vec<Vec<usize>> = members
                .iter()
                .filter(|m| !m.is_empty())
                .map(|m| m.iter().map(|ind| ind.index as usize).collect())
                .collect();
            for g in &mut gs {
                g.sort_unstable();
            }
            gs.sort();
            gs
        };
        let sp_partition = partition_code(&sp_groups, 4);
        // engine side, rebirth
        let mut reb = RebirthState::new(SpatialState::from_sites(&sites, &params), 1.0, cfg.t);
        reb.state.evolve(horizon, &mut rng);
        let sp_labels: f64 = {
            let mut idx: Vec<u64> = reb.state.blocks.iter().map(|b| b.label.index).collect();
            idx.sort_unstable();
            idx.iter().fold(0.0, |acc, &h| acc * 4.0 + h as f64)
        };
        let sp_sizes: f64 = {
            let mut by_label: Vec<(u64, u64)> = reb
                .state
                .blocks
                .iter()
                .map(|b| (b.label.index, b.size))
                .collect();
            by_label.sort_unstable();
            by_label.iter().fold(0.0, |acc, &(_, s)| acc * 5.0 + s as f64)
        };
        vec![
            rb.rec(k as u64, seed, "partition_lookdown", ld_partition, None, None, None),
            rb.rec(k as u64, seed, "partition_spatial", sp_partition, None, None, None),
            rb.rec(k as u64, seed, "rebirth_lookdown", ld_labels, None, None, None),
            rb.rec(k as u64, seed, "rebirth_spatial", sp_labels, None, None, None),
            rb.rec(k as u64, seed, "rebirth_sizes_lookdown", ld_sizes, None, None, None),
            rb.rec(k as u64, seed, "rebirth_sizes_spatial", sp_sizes, None, None, None),
        ]
    });
    rows.into_iter().flatten().collect()
}

fn run_poisson_domination(cfg: &ScenarioConfig) -> Vec<ResultRecord> {
    let rb = RecordBuilder::from_config(cfg);
    let rho = poisson_domination_rate(cfg.delta).expect("domination grid covers delta");
    let mut out = vec![rb.rec(0, mix64(cfg.master_seed, 0), "poisson_rho", rho, None, None, None)];
    let rows = replicate_map(cfg.replicates, |k| {
        let seed = mix64(cfg.master_seed, k as u64);
        let mut rng = replicate_rng(cfg.master_seed, k as u64);
        let e = entrance_count(cfg.delta, 1.0, cfg.tail_epsilon, &mut rng)
            .expect("entrance truncation in range");
        rb.rec(k as u64, seed, "entrance_count", e as f64, None, None, None)
    });
    out.extend(rows);
    out
}

/// Runs one scenario; deterministic given (config, master_seed).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<ResultRecord>, ConfigError> {
    cfg.validate()?;
    Ok(match cfg.scenario {
        Scenario::ErdosTaylor => run_erdos_taylor(cfg),
        Scenario::Theorem1 | Scenario::Theorem2 | Scenario::Theorem3 => {
            run_counts_vs_entrance(cfg)
        }
        Scenario::Theorem4 => run_theorem4(cfg),
        Scenario::Theorem5 => run_theorem5(cfg),
        Scenario::MomentBound => run_moment_bound(cfg),
        Scenario::Exchangeability => run_exchangeability(cfg),
        Scenario::SparseRecursion => run_sparse_recursion(cfg),
        Scenario::LookdownCheck => run_lookdown_check(cfg),
        Scenario::PoissonDomination => run_poisson_domination(cfg),
    })
}

/// Total variation and chi-square homogeneity p-value between two integer
/// samples.
pub fn compare_distributions(sample_a: &[i64], sample_b: &[i64]) -> (f64, f64) {
    let tv = tv_distance(sample_a, sample_b);
    let chi = chi_square_homogeneity(sample_a, sample_b);
    (tv, chi.p_value)
}

/// (spatial statistic, matched limit statistic) pairs for the summary.
const PAIRS: &[(&str, &str)] = &[
    ("count", "entrance"),
    ("restricted_count", "n_alpha"),
    ("n_rebirth", "n_mer"),
    ("count_id", "count_perm"),
    ("partition_spatial", "partition_lookdown"),
    ("rebirth_spatial", "rebirth_lookdown"),
    ("rebirth_sizes_spatial", "rebirth_sizes_lookdown"),
];

fn param_key(r: &ResultRecord) -> String {
    match (r.beta, r.u) {
        (Some(b), _) => format!("@beta={b}"),
        (_, Some(u)) => format!("@u={u}"),
        _ => {
            if r.scenario == "theorem4" {
                format!("@alpha={}", r.alpha)
            } else {
                String::new()
            }
        }
    }
}

/// JSON summary {statistic(@param) → {mean, stderr, tv_vs_limit?, chi2_p?}}.
pub fn summarize(records: &[ResultRecord]) -> serde_json::Value {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.statistic.clone(), param_key(r)))
            .or_default()
            .push(r.value);
    }
    let mut out = BTreeMap::new();
    for ((stat, pk), values) in &groups {
        let (mean, stderr) = mean_stderr(values);
        let mut entry = json!({ "mean": mean, "stderr": stderr, "n": values.len() });
        if let Some(&(_, limit_stat)) = PAIRS.iter().find(|&&(s, _)| s == stat) {
            if let Some(limit_values) = groups.get(&(limit_stat.to_string(), pk.clone())) {
                let a: Vec<i64> = values.iter().map(|&v| v.round() as i64).collect();
                let b: Vec<i64> = limit_values.iter().map(|&v| v.round() as i64).collect();
                let (tv, p) = compare_distributions(&a, &b);
                entry["tv_vs_limit"] = json!(tv);
                entry["chi2_p"] = json!(p);
            }
        }
        out.insert(format!("{stat}{pk}"), entry);
    }
    json!(out)
}

/// Convenience: values of one statistic (optionally at one grid value) as an
/// integer sample in replicate order.
pub fn extract_sample(
    records: &[ResultRecord],
    statistic: &str,
    beta: Option<f64>,
    alpha: Option<f64>,
    u: Option<f64>,
) -> Vec<i64> {
    records
        .iter()
        .filter(|r| {
            r.statistic == statistic
                && beta.map_or(true, |b| r.beta == Some(b))
                && alpha.map_or(true, |a| r.alpha == a)
                && u.map_or(true, |x| r.u == Some(x))
        })
        .map(|r| r.value.round() as i64)
        .collect()
}
