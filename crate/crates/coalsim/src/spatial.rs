//! Event-driven simulation of the spatial delayed coalescent on Z²: blocks
//! migrate as rate-1 kernel walks on a periodic box and co-located pairs merge
//! at rate γ (or instantly). One global exponential clock with categorical
//! event selection; the pairwise-coalescence weight Σ k(k−1)/2 is an integer
//! maintained incrementally.

use crate::domain::{Block, Individual, LatticeBox, MarkedPartition, Site};
use crate::fasthash::FastMap;
use crate::kingman::entrance_count;
use crate::lookdown::{build_graph, coalescent_groups};
use crate::rng::exp_sample;
use crate::walk::{sample_displacement, WalkKernel};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Poisson};
use serde::Serialize;
use smallvec::SmallVec;
use thiserror::Error;

type IdList = SmallVec<[u32; 4]>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gamma {
    Finite(f64),
    /// γ = ∞: co-located blocks merge immediately.
    Instant,
}

#[derive(Clone, Debug)]
pub struct SimParams {
    pub gamma: Gamma,
    pub kernel: WalkKernel,
    /// Periodic region Λ(region_half).
    pub region_half: i64,
}

/// Simulation region radius Λ(B·√t·log t) for horizon `t` and buffer `B`.
pub fn region_half_for(t: f64, buffer: f64) -> i64 {
    (buffer * t.sqrt() * t.ln()).ceil() as i64
}

#[derive(Clone, Copy, Debug)]
pub enum InitKind {
    Poisson(f64),
    Bernoulli(f64),
    InfiniteThinned { delta: f64, tail_epsilon: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct InitialConfig {
    pub kind: InitKind,
}

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("evolve_coupled requires at least one state")]
    Empty,
    #[error("states must share clock, gamma and region")]
    Mismatched,
    #[error("states are not sitewise ordered at input")]
    NotOrdered,
    #[error("evolve_coupled supports finite gamma only")]
    InstantGamma,
}

#[derive(Clone)]
pub struct SpatialState {
    pub blocks: Vec<Block>,
    pub clock: f64,
    pub gamma: Gamma,
    pub kernel: WalkKernel,
    pub region_half: i64,
    /// Test hook: when enabled, every block's full member list is carried.
    pub members: Option<Vec<Vec<Individual>>>,
    /// Test hook: disables the migration channel.
    pub migration_enabled: bool,
    pub(crate) rebirth: bool,
    occ: FastMap<Site, IdList>,
    hot: Vec<Site>,
    hot_pos: FastMap<Site, u32>,
    pair_sum: u64,
}

impl SpatialState {
    pub fn from_blocks(blocks: Vec<Block>, params: &SimParams, clock: f64) -> Self {
        let mut st = SpatialState {
            blocks,
            clock,
            gamma: params.gamma,
            kernel: params.kernel.clone(),
            region_half: params.region_half,
            members: None,
            migration_enabled: true,
            rebirth: false,
            occ: FastMap::default(),
            hot: Vec::new(),
            hot_pos: FastMap::default(),
            pair_sum: 0,
        };
        for id in 0..st.blocks.len() {
            let site = st.wrap(st.blocks[id].site);
            st.blocks[id].site = site;
            st.occ_insert(site, id as u32);
        }
        st
    }

    /// One initial singleton per listed site, indexed in list order.
    pub fn from_sites(sites: &[Site], params: &SimParams) -> Self {
        let blocks = sites
            .iter()
            .enumerate()
            .map(|(i, &s)| Block::initial_singleton(i as u64, s))
            .collect();
        SpatialState::from_blocks(blocks, params, 0.0)
    }

    pub(crate) fn set_rebirth(&mut self, on: bool) {
        if on {
            assert!(
                matches!(self.gamma, Gamma::Finite(_)),
                "rebirth requires finite gamma"
            );
        }
        self.rebirth = on;
    }

    /// Starts carrying explicit member lists (small instances only).
    pub fn enable_member_tracking(&mut self) {
        self.members = Some(
            self.blocks
                .iter()
                .map(|b| vec![b.label])
                .collect(),
        );
    }

    #[inline]
    fn wrap(&self, site: Site) -> Site {
        let h = self.region_half;
        let side = 2 * h + 1;
        let w = |c: i64| (c + h).rem_euclid(side) - h;
        (w(site.0), w(site.1))
    }

    fn occ_insert(&mut self, site: Site, id: u32) {
        let v = self.occ.entry(site).or_default();
        let k_before = v.len() as u64;
        v.push(id);
        self.pair_sum += k_before;
        if k_before == 1 {
            self.hot_pos.insert(site, self.hot.len() as u32);
            self.hot.push(site);
        }
    }

    fn occ_remove(&mut self, site: Site, id: u32) {
        let v = self.occ.get_mut(&site).expect("occupied site");
        let pos = v.iter().position(|&x| x == id).expect("block in bucket");
        v.swap_remove(pos);
        let k_after = v.len() as u64;
        self.pair_sum -= k_after;
        if k_after == 1 {
            let hp = self.hot_pos.remove(&site).expect("hot site") as usize;
            self.hot.swap_remove(hp);
            if hp < self.hot.len() {
                self.hot_pos.insert(self.hot[hp], hp as u32);
            }
        } else if k_after == 0 {
            self.occ.remove(&site);
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Blocks containing an individual initially located in Λ^{α,t}.
    pub fn restricted_block_count(&self, alpha: f64, t: f64) -> usize {
        let half = t.powf(alpha / 2.0);
        self.blocks
            .iter()
            .filter(|b| b.contains_initial_within(half))
            .count()
    }

    pub fn partition(&self) -> MarkedPartition {
        MarkedPartition {
            blocks: self.blocks.clone(),
            clock: self.clock,
        }
    }

    /// Incrementally maintained Σ_sites k(k−1)/2 (an exact integer).
    pub fn pair_sum(&self) -> u64 {
        self.pair_sum
    }

    /// Full rebuild of the pairwise weight, for consistency checks.
    pub fn recompute_pair_sum(&self) -> u64 {
        self.occ
            .values()
            .map(|v| {
                let k = v.len() as u64;
                k * (k - 1) / 2
            })
            .sum()
    }

    fn merge_pair(&mut self, id_a: u32, id_b: u32, site: Site) {
        let (win, lose) = if self.blocks[id_a as usize]
            .label
            .leq(&self.blocks[id_b as usize].label)
        {
            (id_a as usize, id_b as usize)
        } else {
            (id_b as usize, id_a as usize)
        };
        let merged = Block::merged(&self.blocks[win], &self.blocks[lose], site);
        debug_assert_eq!(merged.size, self.blocks[win].size + self.blocks[lose].size);
        debug_assert_eq!(
            merged.earliest_birth,
            self.blocks[win]
                .earliest_birth
                .min(self.blocks[lose].earliest_birth)
        );
        debug_assert_eq!(
            merged.min_initial_norm,
            match (
                self.blocks[win].min_initial_norm,
                self.blocks[lose].min_initial_norm
            ) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, None) => x,
                (None, y) => y,
            }
        );
        let lose_label = self.blocks[lose].label;
        self.blocks[win] = merged;
        if let Some(members) = &mut self.members {
            let moved = std::mem::take(&mut members[lose]);
            members[win].extend(moved);
        }
        if self.rebirth {
            self.blocks[lose] = Block::reborn_singleton(lose_label.index, site, self.clock);
            if let Some(members) = &mut self.members {
                members[lose] = vec![self.blocks[lose].label];
            }
            // the bucket entry for `lose` stays: same site, same id
        } else {
            self.occ_remove(site, lose as u32);
            let last = self.blocks.len() - 1;
            if lose != last {
                // the block moved by swap_remove changes id: fix its bucket
                let moved_site = self.blocks[last].site;
                let v = self.occ.get_mut(&moved_site).expect("occupied site");
                let pos = v
                    .iter()
                    .position(|&x| x == last as u32)
                    .expect("moved block in bucket");
                v[pos] = lose as u32;
            }
            self.blocks.swap_remove(lose);
            if let Some(members) = &mut self.members {
                members.swap_remove(lose);
            }
        }
    }

    fn resolve_instant(&mut self, site: Site) {
        while self.occ.get(&site).map_or(0, |v| v.len()) >= 2 {
            let v = &self.occ[&site];
            let (a, b) = (v[0], v[1]);
            self.merge_pair(a, b, site);
        }
    }

    fn migrate_event<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let id = rng.gen_range(0..self.blocks.len()) as u32;
        let (dx, dy) = sample_displacement(&self.kernel, rng);
        let old = self.blocks[id as usize].site;
        let new = self.wrap((old.0 + dx, old.1 + dy));
        if new == old {
            return;
        }
        self.occ_remove(old, id);
        self.occ_insert(new, id);
        self.blocks[id as usize].site = new;
        if matches!(self.gamma, Gamma::Instant) {
            self.resolve_instant(new);
        }
    }

    fn coalesce_event<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        debug_assert!(self.pair_sum > 0);
        let mut target = rng.gen_range(0..self.pair_sum);
        let mut chosen: Option<Site> = None;
        for &site in &self.hot {
            let k = self.occ[&site].len() as u64;
            let w = k * (k - 1) / 2;
            if target < w {
                chosen = Some(site);
                break;
            }
            target -= w;
        }
        let site = chosen.expect("pair weight scan must land on a hot site");
        let v = &self.occ[&site];
        let k = v.len();
        let a = rng.gen_range(0..k);
        let mut b = rng.gen_range(0..k - 1);
        if b >= a {
            b += 1;
        }
        let (ida, idb) = (v[a], v[b]);
        self.merge_pair(ida, idb, site);
    }

    /// Exact Gillespie evolution to time `until`.
    pub fn evolve<R: Rng + ?Sized>(&mut self, until: f64, rng: &mut R) {
        assert!(until >= self.clock, "cannot evolve backwards");
        loop {
            let mig_rate = if self.migration_enabled {
                self.blocks.len() as f64
            } else {
                0.0
            };
            let coal_rate = match self.gamma {
                Gamma::Finite(g) => g * self.pair_sum as f64,
                Gamma::Instant => 0.0,
            };
            let total = mig_rate + coal_rate;
            if total <= 0.0 {
                break;
            }
            let dt = exp_sample(rng) / total;
            if self.clock + dt > until {
                break;
            }
            self.clock += dt;
            if rng.gen::<f64>() * total < mig_rate {
                self.migrate_event(rng);
            } else {
                self.coalesce_event(rng);
            }
        }
        self.clock = until;
    }
}

/// Initial state on the support box Λ^{α,t}. Poisson: i.i.d. Poisson(ρ)
/// singletons per site. Bernoulli: one singleton per site with probability p.
/// InfiniteThinned: per-site counts drawn from the rate-γ Kingman entrance law
/// at δ (the exact reduction of δ-thinning an infinite configuration); the
/// returned clock is δ in that mode and 0 otherwise.
pub fn init_configuration<R: Rng + ?Sized>(
    config: &InitialConfig,
    t: f64,
    alpha: f64,
    params: &SimParams,
    rng: &mut R,
) -> SpatialState {
    assert!(t > 1.0 && alpha > 0.0 && alpha <= 1.0);
    let support = LatticeBox::alpha_box(alpha, t);
    assert!(
        params.region_half >= support.integer_radius(),
        "simulation region smaller than the initial support"
    );
    let mut blocks = Vec::new();
    let mut index: u64 = 0;
    let mut clock = 0.0;
    match config.kind {
        InitKind::Poisson(rho) => {
            assert!(rho > 0.0);
            let pois = Poisson::new(rho).expect("positive intensity");
            for site in support.sites() {
                let n = pois.sample(rng) as u64;
                for _ in 0..n {
                    blocks.push(Block::initial_singleton(index, site));
                    index += 1;
                }
            }
        }
        InitKind::Bernoulli(p) => {
            assert!(p > 0.0 && p <= 1.0);
            let bern = Bernoulli::new(p).expect("valid probability");
            for site in support.sites() {
                if p >= 1.0 || bern.sample(rng) {
                    blocks.push(Block::initial_singleton(index, site));
                    index += 1;
                }
            }
        }
        InitKind::InfiniteThinned {
            delta,
            tail_epsilon,
        } => {
            assert!(delta > 0.0);
            let g = match params.gamma {
                Gamma::Finite(g) => g,
                Gamma::Instant => panic!("InfiniteThinned requires finite gamma"),
            };
            for site in support.sites() {
                let n = entrance_count(delta, g, tail_epsilon, rng)
                    .expect("entrance truncation within oracle range");
                for _ in 0..n {
                    blocks.push(Block::initial_singleton(index, site));
                    index += 1;
                }
            }
            clock = delta;
        }
    }
    SpatialState::from_blocks(blocks, params, clock)
}

#[derive(Serialize)]
struct BlockJson {
    index: u64,
    birth: f64,
    x: i64,
    y: i64,
    size: u64,
    min_initial_norm: Option<i64>,
}

#[derive(Serialize)]
struct StateJson {
    clock: f64,
    blocks: Vec<BlockJson>,
}

/// JSON snapshot of a state (clock plus per-block label, site, size, norm).
pub fn state_to_json(state: &SpatialState) -> String {
    let snapshot = StateJson {
        clock: state.clock,
        blocks: state
            .blocks
            .iter()
            .map(|b| BlockJson {
                index: b.label.index,
                birth: b.label.birth_time,
                x: b.site.0,
                y: b.site.1,
                size: b.size,
                min_initial_norm: b.min_initial_norm,
            })
            .collect(),
    };
    serde_json::to_string(&snapshot).expect("state serializes")
}

/// Evolves a nested family of states under one shared event stream, realized
/// through the look-down construction on the largest state: each smaller
/// state's blocks are identified sitewise with blocks of the next state, and
/// every state's coalescent is read off the same graph by restriction. The
/// sitewise partial order is preserved pathwise.
pub fn evolve_coupled<R: Rng + ?Sized>(
    states: &[SpatialState],
    until: f64,
    rng: &mut R,
) -> Result<Vec<SpatialState>, CouplingError> {
    if states.is_empty() {
        return Err(CouplingError::Empty);
    }
    let base = &states[states.len() - 1];
    let g = match base.gamma {
        Gamma::Finite(g) => g,
        Gamma::Instant => return Err(CouplingError::InstantGamma),
    };
    for s in states {
        if s.clock != base.clock || s.region_half != base.region_half || s.gamma != base.gamma {
            return Err(CouplingError::Mismatched);
        }
    }
    for w in states.windows(2) {
        if !crate::domain::partial_order_leq(&w[0].partition(), &w[1].partition()) {
            return Err(CouplingError::NotOrdered);
        }
    }
    assert!(until >= base.clock);

    // Identify each state's blocks with blocks of the next state, site by
    // site (label order within a site), then compose into the largest state.
    let m = states.len();
    let mut into_next: Vec<Vec<usize>> = Vec::with_capacity(m - 1);
    for w in states.windows(2) {
        let (small, large) = (&w[0], &w[1]);
        let mut per_site: FastMap<Site, Vec<usize>> = FastMap::default();
        for (i, b) in large.blocks.iter().enumerate() {
            per_site.entry(b.site).or_default().push(i);
        }
        for v in per_site.values_mut() {
            v.sort_by(|&a, &b| large.blocks[a].label.cmp_lex(&large.blocks[b].label));
        }
        let mut small_ids: Vec<usize> = (0..small.blocks.len()).collect();
        small_ids.sort_by(|&a, &b| {
            small.blocks[a]
                .site
                .cmp(&small.blocks[b].site)
                .then(small.blocks[a].label.cmp_lex(&small.blocks[b].label))
        });
        let mut map = vec![usize::MAX; small.blocks.len()];
        let mut cursor: FastMap<Site, usize> = FastMap::default();
        for &i in &small_ids {
            let site = small.blocks[i].site;
            let c = cursor.entry(site).or_insert(0);
            let targets = per_site.get(&site).ok_or(CouplingError::NotOrdered)?;
            if *c >= targets.len() {
                return Err(CouplingError::NotOrdered);
            }
            map[i] = targets[*c];
            *c += 1;
        }
        into_next.push(map);
    }
    let mut into_base: Vec<Vec<usize>> = Vec::with_capacity(m);
    for k in 0..m {
        let mut map: Vec<usize> = (0..states[k].blocks.len()).collect();
        for step in &into_next[k..] {
            for v in map.iter_mut() {
                *v = step[*v];
            }
        }
        into_base.push(map);
    }

    let horizon = until - base.clock;
    let sites: Vec<Site> = base.blocks.iter().map(|b| b.site).collect();
    let graph = build_graph(
        &sites,
        horizon,
        g,
        &base.kernel,
        Some(base.region_half),
        rng,
    );
    let groups = coalescent_groups(&graph, horizon);
    // base-index -> group id
    let mut group_of = vec![usize::MAX; base.blocks.len()];
    for (gi, grp) in groups.iter().enumerate() {
        for &i in grp {
            group_of[i] = gi;
        }
    }

    let params_for = |s: &SpatialState| SimParams {
        gamma: s.gamma,
        kernel: s.kernel.clone(),
        region_half: s.region_half,
    };
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let state = &states[k];
        let mut acc: FastMap<usize, Block> = FastMap::default();
        for (i, b) in state.blocks.iter().enumerate() {
            let gi = group_of[into_base[k][i]];
            let host = groups[gi][0];
            let site = graph.walks[host].position(horizon);
            let merged = match acc.get(&gi) {
                Some(existing) => Block::merged(existing, b, site),
                None => Block { site, ..*b },
            };
            acc.insert(gi, merged);
        }
        let mut blocks: Vec<Block> = acc.into_values().collect();
        blocks.sort_by(|a, b| a.label.cmp_lex(&b.label));
        out.push(SpatialState::from_blocks(blocks, &params_for(state), until));
    }
    Ok(out)
}
