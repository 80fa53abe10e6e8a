//! Spatial coalescent with rebirth: every merge spawns a replacement
//! singleton at the merge site (block count conserved), with label-location
//! snapshots at checkpoint times and the checkpoint-survival functionals.
//!
//! Two samplers are provided. `evolve_rebirth` is the literal block engine.
//! `sample_rebirth_counts` exploits the walk representation — every index
//! hosts exactly one block, located on an independent walk, whose label is
//! reset whenever a smaller co-located index fires an arrow — to compute the
//! same functionals while only tracking arrow ("pushout") hazards for blocks
//! that can still qualify. The two are checked against each other
//! distributionally on small instances.

use crate::domain::{inf_norm, LatticeBox, Site};
use crate::fasthash::FastMap;
use crate::rng::exp_sample;
use crate::spatial::SpatialState;
use crate::walk::{sample_displacement, sample_displacement_over, WalkKernel};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;
use smallvec::SmallVec;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SnapshotEntry {
    pub birth: f64,
    pub x: i64,
    pub y: i64,
    pub in_box: bool,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub time: f64,
    /// Keyed by label index; the birth time disambiguates label generations.
    pub entries: FastMap<u64, SnapshotEntry>,
}

#[derive(Clone)]
pub struct RebirthState {
    pub state: SpatialState,
    pub snapshots: Vec<Snapshot>,
    /// Λ^{α,t} membership recorded in snapshots.
    pub alpha_box: LatticeBox,
}

impl RebirthState {
    pub fn new(mut state: SpatialState, alpha: f64, t: f64) -> Self {
        state.set_rebirth(true);
        RebirthState {
            state,
            snapshots: Vec::new(),
            alpha_box: LatticeBox::alpha_box(alpha, t),
        }
    }

    fn take_snapshot(&mut self) {
        let mut entries: FastMap<u64, SnapshotEntry> = FastMap::default();
        for b in &self.state.blocks {
            entries.insert(
                b.label.index,
                SnapshotEntry {
                    birth: b.label.birth_time,
                    x: b.site.0,
                    y: b.site.1,
                    in_box: self.alpha_box.contains(b.site),
                },
            );
        }
        self.snapshots.push(Snapshot {
            time: self.state.clock,
            entries,
        });
    }
}

/// Evolves the rebirth coalescent to `until`, recording a label→location
/// snapshot at each checkpoint time.
pub fn evolve_rebirth<R: Rng + ?Sized>(
    state: &mut RebirthState,
    checkpoints: &[f64],
    until: f64,
    rng: &mut R,
) {
    assert!(checkpoints.windows(2).all(|w| w[0] < w[1]));
    assert!(checkpoints.iter().all(|&c| c <= until));
    for &c in checkpoints {
        assert!(c >= state.state.clock, "checkpoint before current clock");
        state.state.evolve(c, rng);
        state.take_snapshot();
    }
    state.state.evolve(until, rng);
}

/// N^{α,t,ū,ρ}_u: final blocks π for which some checkpoint i with u_i ≤ u has
/// birth(κ(π)) ≤ t^{u_i} and the block labeled κ(π) inside Λ^{α,t} at t^{u_i}.
pub fn n_rebirth(state: &RebirthState, u: f64, u_vector: &[f64]) -> usize {
    assert!(!u_vector.is_empty());
    assert!(
        u >= u_vector[0] && u <= 1.0,
        "u must lie in [u_vector[0], 1]"
    );
    assert_eq!(
        state.snapshots.len(),
        u_vector.len(),
        "one snapshot per checkpoint required"
    );
    state
        .state
        .blocks
        .iter()
        .filter(|b| {
            u_vector.iter().zip(&state.snapshots).any(|(&ui, snap)| {
                ui <= u
                    && matches!(
                        snap.entries.get(&b.label.index),
                        Some(e) if e.birth == b.label.birth_time && e.in_box
                    )
            })
        })
        .count()
}

#[derive(Serialize)]
struct SnapshotJsonEntry {
    index: u64,
    birth: f64,
    x: i64,
    y: i64,
    in_box: bool,
}

#[derive(Serialize)]
struct SnapshotJson {
    checkpoint: f64,
    entries: Vec<SnapshotJsonEntry>,
}

/// JSON dump of all recorded snapshots.
pub fn snapshots_to_json(state: &RebirthState) -> String {
    let dumps: Vec<SnapshotJson> = state
        .snapshots
        .iter()
        .map(|s| {
            let mut entries: Vec<SnapshotJsonEntry> = s
                .entries
                .iter()
                .map(|(&index, e)| SnapshotJsonEntry {
                    index,
                    birth: e.birth,
                    x: e.x,
                    y: e.y,
                    in_box: e.in_box,
                })
                .collect();
            entries.sort_by_key(|e| e.index);
            SnapshotJson {
                checkpoint: s.time,
                entries,
            }
        })
        .collect();
    serde_json::to_string(&dumps).expect("snapshots serialize")
}

/// Parameters of the walk-representation sampler for the checkpoint
/// functionals.
#[derive(Clone, Debug)]
pub struct RebirthFieldParams {
    pub t: f64,
    pub alpha: f64,
    /// Checkpoint exponents, increasing, in (0, 1].
    pub u_vector: Vec<f64>,
    /// Poisson intensity of the initial field.
    pub rho: f64,
    pub gamma: f64,
    /// Walks start from Poisson(ρ) seeds on Λ(field_half). Walks seeded
    /// outside have larger shell-major indices than every simulated walk and
    /// so can never reset a simulated label; the functional restricted to
    /// in-field seeds is therefore computed exactly, and the only truncation
    /// error is qualifiers seeded outside. Size the field so that reaching
    /// the α-box from beyond it by the last checkpoint is negligible:
    /// t^{α/2} + 4·sqrt(max_step_variance · t^{u_m}) or larger.
    pub field_half: i64,
    /// Wrap positions on Λ(region_half) when set (used for cross-checks
    /// against the block engine); free lattice otherwise.
    pub region_half: Option<i64>,
    pub kernel: WalkKernel,
}

/// One sample of (N_u)_{u ∈ u_vector}.
pub fn sample_rebirth_counts<R: Rng + ?Sized>(p: &RebirthFieldParams, rng: &mut R) -> Vec<u32> {
    assert!(p.t > 1.0 && p.rho > 0.0 && p.gamma > 0.0 && p.field_half >= 0);
    assert!(!p.u_vector.is_empty());
    assert!(p.u_vector.windows(2).all(|w| w[0] < w[1]));
    assert!(p.u_vector.iter().all(|&u| u > 0.0 && u <= 1.0));
    let box_half = p.t.powf(p.alpha / 2.0);
    let checkpoints: Vec<f64> = p.u_vector.iter().map(|&u| p.t.powf(u)).collect();
    let horizon = p.t;
    let n_checks = checkpoints.len();
    assert!(n_checks <= 32);

    let wrap = |site: Site| -> Site {
        match p.region_half {
            None => site,
            Some(h) => {
                let side = 2 * h + 1;
                let w = |c: i64| (c + h).rem_euclid(side) - h;
                (w(site.0), w(site.1))
            }
        }
    };

    // Poisson(ρ) walk seeds, shell-major so indices respect the global order.
    let pois = Poisson::new(p.rho).expect("positive intensity");
    let mut pos: Vec<Site> = Vec::new();
    for site in LatticeBox::new(p.field_half as f64).sites() {
        let n = pois.sample(rng) as u64;
        for _ in 0..n {
            pos.push(site);
        }
    }
    let n = pos.len();
    if n == 0 {
        return vec![0; n_checks];
    }

    // per-walk bitmask of checkpoints at which it qualified and has not been
    // pushed out since; walks with qual != 0 ("tracked") carry a pushout
    // hazard k = #{smaller co-located}
    let mut qual: Vec<u32> = vec![0; n];
    let mut tracked: Vec<u32> = Vec::new();
    let mut tracked_pos: Vec<u32> = vec![u32::MAX; n];
    let mut k_of: Vec<u32> = vec![0; n];

    let count_smaller = |occ: &FastMap<Site, SmallVec<[u32; 4]>>, site: Site, w: u32| -> u32 {
        occ.get(&site)
            .map_or(0, |v| v.iter().filter(|&&x| x < w).count() as u32)
    };

    let mut clock = 0.0;
    for seg in 0..=n_checks {
        let seg_start = clock;
        let seg_end = if seg < n_checks {
            checkpoints[seg]
        } else {
            horizon
        };
        let last = seg == n_checks;

        // Only walks with index at most the largest tracked index can fire or
        // receive a pushout during this segment; everyone else just needs a
        // position at the next checkpoint and is advanced in one draw at the
        // end of the segment (or, past the last checkpoint, dropped outright).
        let cutoff = tracked.iter().copied().max();
        let mut active: Vec<u32> = Vec::new();
        let mut deferred: Vec<u32> = Vec::new();
        for w in 0..n as u32 {
            match cutoff {
                Some(c) if w <= c => active.push(w),
                _ => {
                    if !last {
                        deferred.push(w);
                    }
                }
            }
        }

        let mut occ: FastMap<Site, SmallVec<[u32; 4]>> = FastMap::default();
        for &w in &active {
            occ.entry(pos[w as usize]).or_default().push(w);
        }
        // hazards over the active occupancy only; every index smaller than a
        // tracked one is active, so the counts are exact
        let mut sum_k: u64 = 0;
        for &w in &tracked {
            let k = count_smaller(&occ, pos[w as usize], w);
            k_of[w as usize] = k;
            sum_k += k as u64;
        }

        loop {
            let total = active.len() as f64 + p.gamma * sum_k as f64;
            let event_time = if total > 0.0 {
                clock + exp_sample(rng) / total
            } else {
                f64::INFINITY
            };
            if event_time > seg_end {
                break;
            }
            clock = event_time;
            if rng.gen::<f64>() * total < active.len() as f64 {
                // migration of a uniformly chosen active walk
                let w = active[rng.gen_range(0..active.len())];
                let wi = w as usize;
                let (dx, dy) = sample_displacement(&p.kernel, rng);
                let old = pos[wi];
                let new = wrap((old.0 + dx, old.1 + dy));
                if new == old {
                    continue;
                }
                {
                    let v = occ.get_mut(&old).expect("occupied site");
                    let at = v.iter().position(|&x| x == w).expect("walk in bucket");
                    v.swap_remove(at);
                    for &j in v.iter() {
                        if j > w && qual[j as usize] != 0 {
                            k_of[j as usize] -= 1;
                            sum_k -= 1;
                        }
                    }
                    if v.is_empty() {
                        occ.remove(&old);
                    }
                }
                {
                    let v = occ.entry(new).or_default();
                    for &j in v.iter() {
                        if j > w && qual[j as usize] != 0 {
                            k_of[j as usize] += 1;
                            sum_k += 1;
                        }
                    }
                    v.push(w);
                }
                pos[wi] = new;
                if qual[wi] != 0 {
                    let fresh = count_smaller(&occ, new, w);
                    sum_k = sum_k + fresh as u64 - k_of[wi] as u64;
                    k_of[wi] = fresh;
                }
            } else {
                // pushout: a tracked walk chosen with probability ∝ its hazard
                debug_assert!(sum_k > 0);
                let mut target = rng.gen_range(0..sum_k);
                let mut chosen: Option<u32> = None;
                for &w in &tracked {
                    let k = k_of[w as usize] as u64;
                    if target < k {
                        chosen = Some(w);
                        break;
                    }
                    target -= k;
                }
                let w = chosen.expect("hazard scan lands on a tracked walk");
                let wi = w as usize;
                qual[wi] = 0;
                sum_k -= k_of[wi] as u64;
                let tp = tracked_pos[wi] as usize;
                tracked.swap_remove(tp);
                tracked_pos[wi] = u32::MAX;
                if tp < tracked.len() {
                    tracked_pos[tracked[tp] as usize] = tp as u32;
                }
                // after the last checkpoint, walks above every tracked index
                // can no longer qualify or reset anyone still in play: retire
                // them
                if last {
                    let max_tracked = tracked.iter().copied().max();
                    let retire_above = match max_tracked {
                        Some(mx) => mx,
                        None => break, // nothing left that could qualify
                    };
                    let mut i = 0;
                    while i < active.len() {
                        let a = active[i];
                        if a > retire_above {
                            let ai = a as usize;
                            let v = occ.get_mut(&pos[ai]).expect("occupied site");
                            let at = v.iter().position(|&x| x == a).expect("walk in bucket");
                            v.swap_remove(at);
                            for &j in v.iter() {
                                if j > a && qual[j as usize] != 0 {
                                    k_of[j as usize] -= 1;
                                    sum_k -= 1;
                                }
                            }
                            if v.is_empty() {
                                occ.remove(&pos[ai]);
                            }
                            active.swap_remove(i);
                        } else {
                            i += 1;
                        }
                    }
                }
            }
        }
        clock = seg_end;

        if !last {
            let dt = seg_end - seg_start;
            for &w in &deferred {
                let (dx, dy) = sample_displacement_over(&p.kernel, dt, rng);
                let s = pos[w as usize];
                pos[w as usize] = wrap((s.0 + dx, s.1 + dy));
            }
            // record qualification for every walk inside the box; hazards for
            // the new tracked set are recomputed at the next segment start
            for w in 0..n as u32 {
                let wi = w as usize;
                if inf_norm(pos[wi]) as f64 <= box_half {
                    if qual[wi] == 0 {
                        tracked_pos[wi] = tracked.len() as u32;
                        tracked.push(w);
                    }
                    qual[wi] |= 1 << seg;
                }
            }
        }
    }
    p.u_vector
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let mask: u32 = (1u32 << (i + 1)) - 1;
            qual.iter().filter(|&&q| q & mask != 0).count() as u32
        })
        .collect()
}
