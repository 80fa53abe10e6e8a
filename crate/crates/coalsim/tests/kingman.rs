//! Non-spatial limit objects: the pure-death block count against its exact
//! marginals, the entrance law against the analytic mean, rebirth windows,
//! the discrete-grid identity, and the merging coalescents' reductions.

use coalsim::kingman::{
    apply_rebirth_merge, block_count_after, discrete_counts, entrance_count, entrance_truncation,
    marginal_distribution, n_alpha, n_mer, poisson_domination_rate, simulate_block_count,
    simulate_merging, simulate_rebirth, simulate_rebirth_discrete, RebirthBlock,
};
use coalsim::rng::replicate_rng;
use coalsim::stats::{chi_square_homogeneity, mean_stderr, tv_distance};
use coalsim::Individual;

const LN2: f64 = std::f64::consts::LN_2;

#[test]
fn marginals_match_closed_forms() {
    // from 2 blocks: P{1 at s} = 1 - e^{-s}
    let m2 = marginal_distribution(2, 0.7, 1.0).unwrap();
    assert!((m2[0] - (1.0 - (-0.7f64).exp())).abs() < 1e-12);
    // from 3 blocks at s = ln 2: (5/16, 9/16, 1/8) for counts (1, 2, 3)
    let m3 = marginal_distribution(3, LN2, 1.0).unwrap();
    assert!((m3[0] - 5.0 / 16.0).abs() < 1e-12);
    assert!((m3[1] - 9.0 / 16.0).abs() < 1e-12);
    assert!((m3[2] - 1.0 / 8.0).abs() < 1e-12);
    // pair_rate rescales time
    let fast = marginal_distribution(3, LN2 / 2.0, 2.0).unwrap();
    for (a, b) in fast.iter().zip(&m3) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(marginal_distribution(61, 1.0, 1.0).is_err());
    assert_eq!(marginal_distribution(1, 5.0, 1.0).unwrap(), vec![1.0]);
}

#[test]
fn simulated_block_count_matches_marginal_oracle() {
    let pmf = marginal_distribution(5, 4.0f64.ln(), 1.0).unwrap();
    let mut rng = replicate_rng(0x516, 0);
    let reps = 30_000;
    let sample: Vec<i64> = (0..reps)
        .map(|_| block_count_after(5, 4.0f64.ln(), 1.0, &mut rng) as i64)
        .collect();
    // oracle sample of the same size drawn from the exact pmf
    let mut oracle = Vec::with_capacity(reps);
    let mut acc = 0.0;
    let cum: Vec<f64> = pmf
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    use rand::Rng;
    for _ in 0..reps {
        let u: f64 = rng.gen();
        let k = cum.iter().position(|&c| u < c).unwrap_or(pmf.len() - 1);
        oracle.push(k as i64 + 1);
    }
    let r = chi_square_homogeneity(&sample, &oracle);
    assert!(r.p_value > 1e-3, "p = {}", r.p_value);
}

#[test]
fn time_to_single_block_has_mean_two_minus_two_over_n() {
    let mut rng = replicate_rng(0x517, 1);
    for n0 in [2u32, 5, 20] {
        let times: Vec<f64> = (0..20_000)
            .map(|_| {
                simulate_block_count(n0, f64::INFINITY, 1.0, &mut rng)
                    .last()
                    .unwrap()
                    .0
            })
            .collect();
        let (mean, se) = mean_stderr(&times);
        let expected = 2.0 * (1.0 - 1.0 / n0 as f64);
        assert!(
            (mean - expected).abs() < 5.0 * se,
            "n0 = {n0}: mean {mean}, expected {expected} ± {se}"
        );
    }
}

#[test]
fn entrance_law_mean_matches_analytic_series() {
    // E[#K_s] = Σ_{k≥1} (2k−1) e^{−k(k−1)s/2} = 3.24353 at s = ln 2
    let analytic: f64 = (1..200u64)
        .map(|k| (2 * k - 1) as f64 * (-((k * (k - 1)) as f64) / 2.0 * LN2).exp())
        .sum();
    let n = entrance_truncation(LN2, 0.01).unwrap();
    assert!(n >= 104, "truncation {n} too coarse for 1% accuracy");
    let mut rng = replicate_rng(0x518, 2);
    let counts: Vec<f64> = (0..30_000)
        .map(|_| entrance_count(LN2, 1.0, 0.01, &mut rng).unwrap() as f64)
        .collect();
    let (mean, se) = mean_stderr(&counts);
    assert!(
        (mean - analytic).abs() < 0.05 + 5.0 * se,
        "entrance mean {mean}, analytic {analytic}"
    );
}

#[test]
fn entrance_truncation_is_stable_under_doubling() {
    let n = entrance_truncation(LN2, 0.01).unwrap();
    let mut rng = replicate_rng(0x519, 3);
    let reps = 30_000;
    let a: Vec<i64> = (0..reps)
        .map(|_| block_count_after(n, LN2, 1.0, &mut rng) as i64)
        .collect();
    let b: Vec<i64> = (0..reps)
        .map(|_| block_count_after(2 * n, LN2, 1.0, &mut rng) as i64)
        .collect();
    let tv = tv_distance(&a, &b);
    assert!(tv < 0.02, "doubling the truncation moved the law by {tv}");
}

#[test]
fn entrance_marginal_series_is_a_proper_distribution() {
    for s in [0.2, 0.5, LN2, 1.2] {
        let pmf = coalsim::kingman::entrance_marginal(s, 60);
        let total: f64 = pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-8, "s = {s}: mass {total}");
        let mean: f64 = pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
        let analytic: f64 = (1..200u64)
            .map(|k| (2 * k - 1) as f64 * (-((k * (k - 1)) as f64) / 2.0 * s).exp())
            .sum();
        assert!((mean - analytic).abs() < 1e-7, "s = {s}: mean {mean} vs {analytic}");
        // the infinite start sits stochastically above any finite start
        let finite = marginal_distribution(60, s, 1.0).unwrap();
        let (mut c_inf, mut c_fin) = (1.0, 1.0);
        for k in 0..30 {
            assert!(c_inf >= c_fin - 1e-9, "s = {s}, n = {}", k + 1);
            c_inf -= pmf[k];
            c_fin -= finite[k];
        }
    }
}

#[test]
fn poisson_domination_rate_dominates_and_shrinks_with_time() {
    let rho = poisson_domination_rate(0.5).unwrap();
    assert!(rho > 0.0);
    assert!(poisson_domination_rate(0.7).unwrap() <= rho);
    // replay the defining inequality: entrance CCDF ≤ CCDF of 1 + Poisson(ρ)
    let pmf = marginal_distribution(60, 0.5, 1.0).unwrap();
    let mut ccdf = vec![0.0f64; 62];
    for k in (1..=60usize).rev() {
        ccdf[k] = ccdf[k + 1] + pmf[k - 1];
    }
    for n in 2..=30usize {
        // P{Poisson(ρ) ≥ n − 1}
        let mut term = (-rho).exp();
        let mut cdf = 0.0;
        for j in 0..(n - 1) as u32 {
            cdf += term;
            term *= rho / (j + 1) as f64;
        }
        assert!(
            ccdf[n] <= 1.0 - cdf + 1e-12,
            "domination fails at n = {n}: {} > {}",
            ccdf[n],
            1.0 - cdf
        );
    }
}

#[test]
fn rebirth_merge_keeps_smaller_label_and_conserves_count() {
    let blk = |i: u64, b: f64| RebirthBlock {
        label: Individual {
            index: i,
            birth_time: b,
        },
        earliest_birth: b,
    };
    let mut blocks = vec![blk(0, 0.0), blk(1, 0.0), blk(2, 0.0)];
    apply_rebirth_merge(&mut blocks, 1, 0, 0.4, true);
    assert_eq!(blocks.len(), 3);
    assert_eq!(blocks[0].label.index, 0); // survivor at the winner's slot
    // the loser's slot now holds a fresh singleton with index 1, born at 0.4
    assert_eq!(blocks[1].label, Individual { index: 1, birth_time: 0.4 });
    assert_eq!(blocks[1].earliest_birth, 0.4);
    // outside the window the loser just disappears
    apply_rebirth_merge(&mut blocks, 0, 2, 0.9, false);
    assert_eq!(blocks.len(), 2);
    assert!(blocks.iter().all(|b| b.label.index != 2));
}

#[test]
fn windowed_rebirth_conserves_count_inside_the_window() {
    let mut rng = replicate_rng(0x51A, 4);
    for _ in 0..50 {
        let state = simulate_rebirth(-2.0, 0.5, 0.5, 40, 1.0, &mut rng);
        assert_eq!(state.blocks.len(), 40);
        let after = simulate_rebirth(-2.0, 0.5, 3.0, 40, 1.0, &mut rng);
        assert!(after.blocks.len() <= 40);
    }
}

#[test]
fn discrete_counts_equal_continuous_counts_on_the_grid_pathwise() {
    let grid = [0.4f64, 0.55, 0.7, 1.0];
    for rep in 0..200u64 {
        let mut r1 = replicate_rng(0x51C, rep);
        let state = simulate_rebirth(grid[0].ln(), grid[3].ln(), 0.0, 64, 1.0, &mut r1);
        let discrete = discrete_counts(&state, &grid);
        for (k, &a) in grid.iter().enumerate() {
            assert_eq!(discrete[k], n_alpha(&state, a.ln()), "grid point {a}");
        }
        // the one-shot helper agrees in law with the replay (same rng path)
        let mut r2 = replicate_rng(0x51C, rep);
        assert_eq!(simulate_rebirth_discrete(&grid, 64, 1.0, &mut r2), discrete);
    }
}

#[test]
fn single_copy_merging_reduces_to_a_plain_kingman_chain() {
    let mut rng = replicate_rng(0x51D, 6);
    let reps = 20_000;
    let a: Vec<i64> = (0..reps)
        .map(|_| n_mer(&simulate_merging(&[0.3], 1.0, 30, &mut rng), 1) as i64)
        .collect();
    let b: Vec<i64> = (0..reps)
        .map(|_| block_count_after(30, 0.7, 1.0, &mut rng) as i64)
        .collect();
    let r = chi_square_homogeneity(&a, &b);
    assert!(r.p_value > 1e-3, "p = {}", r.p_value);
}

#[test]
fn coincident_merge_times_collapse_to_one_kingman_chain() {
    let mut rng = replicate_rng(0x51E, 7);
    let reps = 20_000;
    let a: Vec<i64> = (0..reps)
        .map(|_| {
            let st = simulate_merging(&[0.0, 0.0], 0.8, 25, &mut rng);
            assert!(n_mer(&st, 1) <= n_mer(&st, 2));
            n_mer(&st, 2) as i64
        })
        .collect();
    let b: Vec<i64> = (0..reps)
        .map(|_| block_count_after(50, 0.8, 1.0, &mut rng) as i64)
        .collect();
    let r = chi_square_homogeneity(&a, &b);
    assert!(r.p_value > 1e-3, "p = {}", r.p_value);
}
