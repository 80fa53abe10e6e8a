//! Graphical look-down construction on a finite index set: independent walks
//! plus Poisson arrow processes between ordered pairs, from which the plain
//! and rebirth coalescents are read off deterministically.

use crate::domain::{Block, Individual, MarkedPartition, Site};
use crate::rng::exp_sample;
use crate::walk::{sample_displacement, WalkKernel};
use rand::Rng;

/// A càdlàg step trajectory: `sites[k]` holds on [times[k], times[k+1]).
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Jump times, strictly increasing; `times[0] = 0`.
    pub times: Vec<f64>,
    pub sites: Vec<Site>,
}

impl Trajectory {
    pub fn position(&self, t: f64) -> Site {
        let k = self.times.partition_point(|&s| s <= t);
        self.sites[k - 1]
    }
}

/// An arrow drawn at `time` from the smaller index to the larger; it is
/// effective only if the two walks are co-located at that time.
#[derive(Clone, Copy, Debug)]
pub struct Arrow {
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug)]
pub struct ArrowGraph {
    pub walks: Vec<Trajectory>,
    /// Sorted by time.
    pub arrows: Vec<Arrow>,
    pub horizon: f64,
    pub gamma: f64,
    /// Periodic wrap radius, matching the spatial engine's region; `None`
    /// means the free lattice.
    pub region_half: Option<i64>,
}

fn wrap(site: Site, region_half: Option<i64>) -> Site {
    match region_half {
        None => site,
        Some(h) => {
            let side = 2 * h + 1;
            let w = |c: i64| (c + h).rem_euclid(side) - h;
            (w(site.0), w(site.1))
        }
    }
}

/// Materializes walks and arrow times for indices 0..initial_sites.len().
pub fn build_graph<R: Rng + ?Sized>(
    initial_sites: &[Site],
    horizon: f64,
    gamma: f64,
    kernel: &WalkKernel,
    region_half: Option<i64>,
    rng: &mut R,
) -> ArrowGraph {
    assert!(horizon >= 0.0 && gamma >= 0.0);
    let n = initial_sites.len();
    let mut walks = Vec::with_capacity(n);
    for &start in initial_sites {
        let mut times = vec![0.0];
        let mut sites = vec![wrap(start, region_half)];
        let mut clock = 0.0;
        loop {
            clock += exp_sample(rng);
            if clock > horizon {
                break;
            }
            let (dx, dy) = sample_displacement(kernel, rng);
            let prev = *sites.last().unwrap();
            times.push(clock);
            sites.push(wrap((prev.0 + dx, prev.1 + dy), region_half));
        }
        walks.push(Trajectory { times, sites });
    }
    let mut arrows = Vec::new();
    if gamma > 0.0 {
        for from in 0..n {
            for to in from + 1..n {
                let mut clock = 0.0;
                loop {
                    clock += exp_sample(rng) / gamma;
                    if clock > horizon {
                        break;
                    }
                    arrows.push(Arrow {
                        time: clock,
                        from,
                        to,
                    });
                }
            }
        }
    }
    arrows.sort_by(|a, b| a.time.total_cmp(&b.time));
    ArrowGraph {
        walks,
        arrows,
        horizon,
        gamma,
        region_half,
    }
}

impl ArrowGraph {
    #[inline]
    pub fn effective(&self, arrow: &Arrow) -> bool {
        self.walks[arrow.from].position(arrow.time) == self.walks[arrow.to].position(arrow.time)
    }

    /// The graph restricted to the index subset `keep` (ascending), with
    /// indices renumbered to 0..keep.len(). Arrows touching dropped indices
    /// are removed.
    pub fn restricted(&self, keep: &[usize]) -> ArrowGraph {
        let mut renumber = vec![usize::MAX; self.walks.len()];
        for (new, &old) in keep.iter().enumerate() {
            renumber[old] = new;
        }
        ArrowGraph {
            walks: keep.iter().map(|&i| self.walks[i].clone()).collect(),
            arrows: self
                .arrows
                .iter()
                .filter(|a| renumber[a.from] != usize::MAX && renumber[a.to] != usize::MAX)
                .map(|a| Arrow {
                    time: a.time,
                    from: renumber[a.from],
                    to: renumber[a.to],
                })
                .collect(),
            horizon: self.horizon,
            gamma: self.gamma,
            region_half: self.region_half,
        }
    }
}

/// Ancestor trace A^i_{s,t}: starting from index `i` at time `s`, each
/// effective arrow into the current trace moves it to the arrow's source.
pub fn ancestor(graph: &ArrowGraph, i: usize, s: f64, t: f64) -> usize {
    assert!(s <= t && t <= graph.horizon);
    let mut a = i;
    for arrow in &graph.arrows {
        if arrow.time <= s {
            continue;
        }
        if arrow.time > t {
            break;
        }
        if arrow.to == a && graph.effective(arrow) {
            a = arrow.from;
        }
    }
    a
}

/// All indices whose ancestor trace over [s, t] ends at `j`.
pub fn descendants(graph: &ArrowGraph, j: usize, s: f64, t: f64) -> Vec<usize> {
    (0..graph.walks.len())
        .filter(|&i| ancestor(graph, i, s, t) == j)
        .collect()
}

/// Groups of indices sharing an ancestor at lookback `t`; each group is led by
/// its minimal index (the ancestor itself) and groups are sorted by leader.
pub fn coalescent_groups(graph: &ArrowGraph, t: f64) -> Vec<Vec<usize>> {
    assert!(t <= graph.horizon);
    let n = graph.walks.len();
    let mut host: Vec<usize> = (0..n).collect();
    for arrow in &graph.arrows {
        if arrow.time > t {
            break;
        }
        if graph.effective(arrow) {
            for h in host.iter_mut() {
                if *h == arrow.to {
                    *h = arrow.from;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &h) in host.iter().enumerate() {
        groups[h].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// The spatial coalescent read off the graph at lookback `t`: one block per
/// ancestor, marked with the ancestor walk's position.
pub fn coalescent_from_lookdown(graph: &ArrowGraph, t: f64) -> MarkedPartition {
    let groups = coalescent_groups(graph, t);
    let blocks = groups
        .iter()
        .map(|g| {
            let host = g[0];
            let min_norm = g
                .iter()
                .map(|&i| crate::domain::inf_norm(graph.walks[i].sites[0]))
                .min()
                .unwrap();
            Block {
                label: Individual::initial(host as u64),
                size: g.len() as u64,
                min_initial_norm: Some(min_norm),
                site: graph.walks[host].position(t),
                earliest_birth: 0.0,
            }
        })
        .collect();
    MarkedPartition { blocks, clock: t }
}

/// One block of the rebirth coalescent read off the graph: hosted on walk
/// `host`, labeled (host, label_birth), with members (index, birth).
#[derive(Clone, Debug, PartialEq)]
pub struct RebirthLookdownBlock {
    pub host: usize,
    pub label_birth: f64,
    pub members: Vec<(usize, f64)>,
}

/// The rebirth coalescent at lookback `t`: every walk hosts exactly one
/// block; an effective arrow a→b moves b's members onto a and reborns b as a
/// singleton with the arrow time as birth time.
pub fn rebirth_from_lookdown(graph: &ArrowGraph, t: f64) -> Vec<RebirthLookdownBlock> {
    assert!(t <= graph.horizon);
    let n = graph.walks.len();
    let mut blocks: Vec<RebirthLookdownBlock> = (0..n)
        .map(|j| RebirthLookdownBlock {
            host: j,
            label_birth: 0.0,
            members: vec![(j, 0.0)],
        })
        .collect();
    for arrow in &graph.arrows {
        if arrow.time > t {
            break;
        }
        if graph.effective(arrow) {
            let moved = std::mem::take(&mut blocks[arrow.to].members);
            blocks[arrow.from].members.extend(moved);
            blocks[arrow.to].members.push((arrow.to, arrow.time));
            blocks[arrow.to].label_birth = arrow.time;
        }
    }
    for b in &mut blocks {
        b.members.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    }
    blocks
}
