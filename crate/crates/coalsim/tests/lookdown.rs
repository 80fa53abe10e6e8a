//! Arrow-graph construction: trajectory lookup, arrow statistics, ancestor
//! traces on hand-built fixtures, prefix restriction, and the read-off
//! coalescents (plain and rebirth).

use coalsim::lookdown::{
    ancestor, build_graph, coalescent_from_lookdown, coalescent_groups, descendants,
    rebirth_from_lookdown, Arrow, ArrowGraph, Trajectory,
};
use coalsim::rng::replicate_rng;
use coalsim::stats::mean_stderr;
use coalsim::WalkKernel;

#[test]
fn trajectory_position_is_right_continuous() {
    let tr = Trajectory {
        times: vec![0.0, 1.0, 2.5],
        sites: vec![(0, 0), (1, 0), (1, 1)],
    };
    assert_eq!(tr.position(0.0), (0, 0));
    assert_eq!(tr.position(0.99), (0, 0));
    assert_eq!(tr.position(1.0), (1, 0));
    assert_eq!(tr.position(2.5), (1, 1));
    assert_eq!(tr.position(100.0), (1, 1));
}

#[test]
fn arrow_counts_match_the_pairwise_poisson_rate() {
    let kernel = WalkKernel::simple();
    let mut rng = replicate_rng(0x1D1, 0);
    let (gamma, horizon, n) = (2.0, 4.0, 3usize);
    let pairs = (n * (n - 1) / 2) as f64;
    let counts: Vec<f64> = (0..4000)
        .map(|_| {
            let g = build_graph(&[(0, 0); 3], horizon, gamma, &kernel, None, &mut rng);
            for w in g.arrows.windows(2) {
                assert!(w[0].time <= w[1].time);
            }
            for a in &g.arrows {
                assert!(a.from < a.to && a.to < n && a.time <= horizon);
            }
            g.arrows.len() as f64
        })
        .collect();
    let (mean, se) = mean_stderr(&counts);
    let expected = gamma * horizon * pairs;
    assert!(
        (mean - expected).abs() < 4.0 * se,
        "arrow mean {mean}, expected {expected} ± {se}"
    );
}

#[test]
fn zero_gamma_reads_off_singletons() {
    let kernel = WalkKernel::simple();
    let mut rng = replicate_rng(0x1D2, 1);
    let g = build_graph(&[(0, 0), (1, 1), (2, 2)], 5.0, 0.0, &kernel, None, &mut rng);
    assert!(g.arrows.is_empty());
    let groups = coalescent_groups(&g, 5.0);
    assert_eq!(groups, vec![vec![0], vec![1], vec![2]]);
    for (j, b) in rebirth_from_lookdown(&g, 5.0).iter().enumerate() {
        assert_eq!(b.host, j);
        assert_eq!(b.label_birth, 0.0);
        assert_eq!(b.members, vec![(j, 0.0)]);
    }
}

/// Three frozen walks: 0 and 1 share a site, 2 sits elsewhere. One effective
/// arrow 0→1 at time 1 and one ineffective arrow 0→2 at time 2.
fn fixture() -> ArrowGraph {
    let frozen = |s: (i64, i64)| Trajectory {
        times: vec![0.0],
        sites: vec![s],
    };
    ArrowGraph {
        walks: vec![frozen((0, 0)), frozen((0, 0)), frozen((5, 5))],
        arrows: vec![
            Arrow {
                time: 1.0,
                from: 0,
                to: 1,
            },
            Arrow {
                time: 2.0,
                from: 0,
                to: 2,
            },
        ],
        horizon: 3.0,
        gamma: 1.0,
        region_half: None,
    }
}

#[test]
fn ancestor_traces_follow_effective_arrows_only() {
    let g = fixture();
    assert!(g.effective(&g.arrows[0]));
    assert!(!g.effective(&g.arrows[1]));
    assert_eq!(ancestor(&g, 1, 0.0, 0.5), 1); // before the arrow
    assert_eq!(ancestor(&g, 1, 0.0, 1.0), 0); // the arrow fires at exactly 1
    assert_eq!(ancestor(&g, 1, 1.5, 3.0), 1); // trace started after it
    assert_eq!(ancestor(&g, 2, 0.0, 3.0), 2); // ineffective arrow ignored
    assert_eq!(descendants(&g, 0, 0.0, 3.0), vec![0, 1]);
    assert_eq!(descendants(&g, 1, 0.0, 3.0), Vec::<usize>::new());
}

#[test]
fn read_off_coalescent_marks_blocks_with_host_positions() {
    let g = fixture();
    let p = coalescent_from_lookdown(&g, 3.0);
    assert_eq!(p.clock, 3.0);
    assert_eq!(p.blocks.len(), 2);
    let merged = &p.blocks[0];
    assert_eq!(merged.label.index, 0);
    assert_eq!(merged.size, 2);
    assert_eq!(merged.site, (0, 0));
    assert_eq!(merged.min_initial_norm, Some(0));
    assert_eq!(p.blocks[1].label.index, 2);
    assert_eq!(p.blocks[1].site, (5, 5));
}

#[test]
fn rebirth_read_off_reborns_the_arrow_target() {
    let g = fixture();
    let blocks = rebirth_from_lookdown(&g, 3.0);
    assert_eq!(blocks.len(), 3);
    assert_eq!(blocks[0].members, vec![(0, 0.0), (1, 0.0)]);
    assert_eq!(blocks[0].label_birth, 0.0);
    // walk 1 hosts a fresh singleton born at the arrow time
    assert_eq!(blocks[1].members, vec![(1, 1.0)]);
    assert_eq!(blocks[1].label_birth, 1.0);
    assert_eq!(blocks[2].members, vec![(2, 0.0)]);
    // before the arrow everyone is a singleton
    let early = rebirth_from_lookdown(&g, 0.5);
    assert!(early.iter().all(|b| b.members.len() == 1 && b.label_birth == 0.0));
}

#[test]
fn prefix_restriction_commutes_with_the_read_off() {
    // arrows only ever point from a smaller index to a larger one, so the
    // ancestry of a prefix never depends on the dropped tail
    let kernel = WalkKernel::simple();
    let mut rng = replicate_rng(0x1D3, 2);
    for rep in 0..50 {
        let sites: Vec<(i64, i64)> = (0..6).map(|i| (i % 2, 0)).collect();
        let g = build_graph(&sites, 3.0, 1.5, &kernel, Some(2), &mut rng);
        let keep: Vec<usize> = (0..4).collect();
        let r = g.restricted(&keep);
        assert_eq!(r.walks.len(), 4);
        let full: Vec<Vec<usize>> = coalescent_groups(&g, 3.0)
            .into_iter()
            .map(|grp| grp.into_iter().filter(|&i| i < 4).collect())
            .filter(|grp: &Vec<usize>| !grp.is_empty())
            .collect();
        assert_eq!(coalescent_groups(&r, 3.0), full, "rep {rep}");
    }
}

#[test]
fn groups_coarsen_as_the_lookback_grows() {
    let kernel = WalkKernel::simple();
    let mut rng = replicate_rng(0x1D4, 3);
    for rep in 0..50 {
        let g = build_graph(&[(0, 0); 5], 4.0, 2.0, &kernel, Some(1), &mut rng);
        let early = coalescent_groups(&g, 1.5);
        let late = coalescent_groups(&g, 4.0);
        assert!(early.len() >= late.len());
        for grp in &early {
            let containers = late
                .iter()
                .filter(|l| grp.iter().all(|i| l.contains(i)))
                .count();
            assert_eq!(containers, 1, "rep {rep}: group {grp:?} split");
        }
        // every index appears exactly once at each lookback
        let mut all: Vec<usize> = late.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..5).collect::<Vec<_>>());
    }
}

#[test]
fn rebirth_read_off_conserves_hosts_and_members() {
    let kernel = WalkKernel::simple();
    let mut rng = replicate_rng(0x1D5, 4);
    for _ in 0..50 {
        let g = build_graph(&[(0, 0); 5], 4.0, 2.0, &kernel, Some(1), &mut rng);
        let t = 3.0;
        let effective = g
            .arrows
            .iter()
            .filter(|a| a.time <= t && g.effective(a))
            .count();
        let blocks = rebirth_from_lookdown(&g, t);
        assert_eq!(blocks.len(), 5);
        for (j, b) in blocks.iter().enumerate() {
            assert_eq!(b.host, j);
        }
        let members: usize = blocks.iter().map(|b| b.members.len()).sum();
        // every effective arrow reborns exactly one extra member entry
        assert_eq!(members, 5 + effective);
    }
}
