//! Non-spatial limit objects: the Kingman coalescent block-count chain (finite
//! start and entrance law), the coalescent with rebirth on a time window, its
//! discrete-grid variant, and merging coalescents.

use crate::ctmc::transient_distribution;
use crate::domain::Individual;
use crate::numeric::{ln_gamma, poisson_cdf};
use crate::rng::exp_sample;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KingmanError {
    #[error("marginal oracle supports n0 in 1..=60, got {0}")]
    OracleScale(u32),
    #[error("entrance truncation search exhausted (duration {0}, epsilon {1})")]
    TruncationExhausted(f64, f64),
    #[error("poisson domination grid exhausted for duration {0}")]
    DominationGridExhausted(f64),
}

#[inline]
fn pair_count(k: u64) -> f64 {
    (k * k.saturating_sub(1)) as f64 / 2.0
}

/// Pure-death block-count path: holding time in state k is
/// Exp(pair_rate · k(k−1)/2). Returns the step path as (event time, count
/// after the event), beginning with (0, n0); times exceed `duration` never.
pub fn simulate_block_count<R: Rng + ?Sized>(
    n0: u32,
    duration: f64,
    pair_rate: f64,
    rng: &mut R,
) -> Vec<(f64, u32)> {
    assert!(n0 >= 1 && duration >= 0.0 && pair_rate > 0.0);
    let mut path = vec![(0.0, n0)];
    let mut k = n0 as u64;
    let mut clock = 0.0;
    while k > 1 {
        clock += exp_sample(rng) / (pair_rate * pair_count(k));
        if clock > duration {
            break;
        }
        k -= 1;
        path.push((clock, k as u32));
    }
    path
}

/// Block count at `duration` only (cheaper than the full path).
pub fn block_count_after<R: Rng + ?Sized>(
    n0: u32,
    duration: f64,
    pair_rate: f64,
    rng: &mut R,
) -> u32 {
    assert!(n0 >= 1 && duration >= 0.0 && pair_rate > 0.0);
    let mut k = n0 as u64;
    let mut clock = 0.0;
    while k > 1 {
        clock += exp_sample(rng) / (pair_rate * pair_count(k));
        if clock > duration {
            break;
        }
        k -= 1;
    }
    k as u32
}

/// Exact marginal P{count = k} at time `s` of the pure-death chain from `n0`
/// blocks, as a probability vector indexed by k−1 for k in 1..=n0.
pub fn marginal_distribution(n0: u32, s: f64, pair_rate: f64) -> Result<Vec<f64>, KingmanError> {
    if n0 < 1 || n0 > 60 {
        return Err(KingmanError::OracleScale(n0));
    }
    assert!(s >= 0.0 && pair_rate > 0.0);
    let n = n0 as usize;
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // state i holds count n0 - i
    let mut q = vec![vec![0.0f64; n]; n];
    for i in 0..n - 1 {
        let k = (n0 as u64) - i as u64;
        let r = pair_rate * pair_count(k);
        q[i][i] = -r;
        q[i][i + 1] = r;
    }
    let mut initial = vec![0.0f64; n];
    initial[0] = 1.0;
    let out = transient_distribution(&q, &initial, s);
    // re-index from state to count
    let mut probs = vec![0.0f64; n];
    for (i, &p) in out.iter().enumerate() {
        probs[n - 1 - i] = p;
    }
    Ok(probs)
}

/// The θ-dependent constant of the Chernoff bound on the entrance-count tail
/// above n, with θ = n log²n: returns (θ, Σ_{k≥n} θ/(k(k+1)/2 − θ)), or None
/// while the bound is vacuous (θ ≥ n(n+1)/2; resolves from n = 13 on). The
/// bound itself is then exp(−δθ + Σ).
fn entrance_tail_exponent(n: u32) -> Option<(f64, f64)> {
    let nf = n as f64;
    let theta = nf * nf.ln() * nf.ln();
    if theta >= nf * (nf + 1.0) / 2.0 {
        return None;
    }
    let mut s = 0.0f64;
    let mut k = n as u64;
    loop {
        let pairs = (k * (k + 1)) as f64 / 2.0;
        let term = theta / (pairs - theta);
        s += term;
        k += 1;
        if term < 1e-4 * (1.0 + s) {
            // analytic remainder of the ~2θ/k² tail
            s += 2.0 * theta / k as f64;
            break;
        }
    }
    Some((theta, s))
}

/// Expected pairwise-merge rate of the entrance law at time `u`:
/// Σ_{i≥2} (2i−1)·(i(i−1)/2)·e^{−i(i−1)u/2}. Dominates the merge rate of any
/// finite-start chain at the same time.
fn entrance_merge_rate(u: f64) -> f64 {
    assert!(u > 0.0);
    let mut total = 0.0;
    let mut i: u64 = 2;
    loop {
        let pairs = (i * (i - 1)) as f64 / 2.0;
        let term = (2 * i - 1) as f64 * pairs * (-pairs * u).exp();
        total += term;
        i += 1;
        if term < 1e-12 && (i * (i - 1)) as f64 / 2.0 * u > 1.0 {
            return total;
        }
    }
}

/// Smallest truncation N (on a geometric grid) such that starting the
/// pure-death chain from N instead of from infinity perturbs the law of the
/// count at `effective_duration` by less than `tail_epsilon` in total
/// variation. The error is bounded, for any intermediate δ₀, by
/// P{entrance count at δ₀ > N} (Chernoff, θ = n log²n) plus the chance of a
/// merge during the final δ₀ window (δ₀ · entrance merge rate), and δ₀ is
/// optimized over a geometric grid. `effective_duration` is
/// duration · pair_rate.
pub fn entrance_truncation(effective_duration: f64, tail_epsilon: f64) -> Result<u32, KingmanError> {
    assert!(effective_duration > 0.0 && tail_epsilon > 0.0 && tail_epsilon < 1.0);
    let s = effective_duration;
    let mut n = 13u32;
    while n < 100_000_000 {
        if let Some((theta, sum)) = entrance_tail_exponent(n) {
            let mut best = f64::INFINITY;
            let mut delta = s / 2.0;
            for _ in 0..60 {
                let chernoff = (-delta * theta + sum).exp().min(1.0);
                let err = chernoff + delta * entrance_merge_rate(s - delta);
                best = best.min(err);
                delta /= 2.0;
            }
            if best < tail_epsilon {
                return Ok(n);
            }
        }
        n = (n as f64 * 1.25).ceil() as u32;
    }
    Err(KingmanError::TruncationExhausted(
        effective_duration,
        tail_epsilon,
    ))
}

/// One sample of the entrance-law block count at `duration`: truncate at N
/// chosen from the Chernoff bound, then run the pure-death chain from N.
pub fn entrance_count<R: Rng + ?Sized>(
    duration: f64,
    pair_rate: f64,
    tail_epsilon: f64,
    rng: &mut R,
) -> Result<u32, KingmanError> {
    assert!(duration > 0.0, "entrance law undefined at duration 0");
    let n = entrance_truncation(duration * pair_rate, tail_epsilon)?;
    Ok(block_count_after(n, duration, pair_rate, rng))
}

/// Exact entrance-law marginal P{count = k} for k = 1..=k_max, by the
/// alternating series
/// p_k(s) = Σ_{j≥k} (−1)^{j−k} (2j−1) k_{(j−1)} / (k! (j−k)!) · e^{−j(j−1)s/2}
/// with k_{(m)} the rising factorial. Accurate to ~1e−8 absolute for
/// durations ≥ 0.05.
pub fn entrance_marginal(duration: f64, k_max: usize) -> Vec<f64> {
    assert!(duration > 0.0 && k_max >= 1);
    (1..=k_max)
        .map(|k| {
            let kf = k as f64;
            let mut sum = 0.0f64;
            for j in k..=400 {
                let jf = j as f64;
                let ln_mag = (2.0 * jf - 1.0).ln() + ln_gamma(kf + jf - 1.0)
                    - ln_gamma(kf)
                    - ln_gamma(kf + 1.0)
                    - ln_gamma(jf - kf + 1.0)
                    - jf * (jf - 1.0) / 2.0 * duration;
                let term = ln_mag.exp();
                sum += if (j - k) % 2 == 0 { term } else { -term };
                if j > k + 5 && term < 1e-18 {
                    break;
                }
            }
            sum.clamp(0.0, 1.0)
        })
        .collect()
}

/// Smallest rate ρ on the geometric grid 0.25·1.05^j such that
/// P{entrance count at `duration` ≥ n} ≤ P{1 + Poisson(ρ) ≥ n} for all
/// n in 2..=30 (n = 1 is trivially tight), with the left side taken from the
/// exact entrance marginal.
pub fn poisson_domination_rate(duration: f64) -> Result<f64, KingmanError> {
    assert!(duration > 0.0);
    let pmf = entrance_marginal(duration, 30);
    // ccdf[n] = 1 − Σ_{k<n} p_k: exact head-mass complement, so the unsummed
    // tail never biases the bound downward
    let mut ccdf = vec![0.0f64; 31];
    let mut head = 0.0;
    for n in 1..=30usize {
        ccdf[n] = 1.0 - head;
        head += pmf[n - 1];
    }
    for j in 0..240 {
        let rho = 0.25 * 1.05f64.powi(j);
        let ok = (2..=30u64).all(|n| {
            // P{1 + Poisson(rho) >= n} = P{Poisson(rho) > n - 2}
            let pois_ccdf = 1.0 - poisson_cdf(n - 2, rho);
            ccdf[n as usize] <= pois_ccdf + 1e-15
        });
        if ok {
            return Ok(rho);
        }
    }
    Err(KingmanError::DominationGridExhausted(duration))
}

/// A block of the non-spatial rebirth coalescent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RebirthBlock {
    pub label: Individual,
    pub earliest_birth: f64,
}

/// Labeled partition with birth times, for the rebirth and windowed limit
/// objects.
#[derive(Clone, Debug)]
pub struct KingmanState {
    pub blocks: Vec<RebirthBlock>,
    pub clock: f64,
    pub pair_rate: f64,
}

/// Merges blocks `a` and `b` (indices into `blocks`) at time `now`. The
/// survivor keeps the lexicographically smaller label; when `rebirth_active`,
/// a new singleton carrying the losing label's index and birth time `now`
/// replaces the loser, otherwise the loser is removed.
pub fn apply_rebirth_merge(
    blocks: &mut Vec<RebirthBlock>,
    a: usize,
    b: usize,
    now: f64,
    rebirth_active: bool,
) {
    assert!(a != b);
    let (win, lose) = if blocks[a].label.leq(&blocks[b].label) {
        (a, b)
    } else {
        (b, a)
    };
    blocks[win].earliest_birth = blocks[win].earliest_birth.min(blocks[lose].earliest_birth);
    if rebirth_active {
        let idx = blocks[lose].label.index;
        blocks[lose] = RebirthBlock {
            label: Individual {
                index: idx,
                birth_time: now,
            },
            earliest_birth: now,
        };
    } else {
        blocks.swap_remove(lose);
    }
}

/// Kingman coalescent with rebirth on the window [window_start, window_end],
/// evaluated at `eval_time`: starts from `truncation` singletons born at
/// `window_start`; every merge inside the window spawns a replacement
/// singleton (so the block count is constant there); merges after the window
/// are plain coalescences.
pub fn simulate_rebirth<R: Rng + ?Sized>(
    window_start: f64,
    window_end: f64,
    eval_time: f64,
    truncation: u32,
    pair_rate: f64,
    rng: &mut R,
) -> KingmanState {
    assert!(
        window_start <= window_end && window_end <= eval_time,
        "require window_start <= window_end <= eval_time"
    );
    assert!(truncation >= 1 && pair_rate > 0.0);
    let mut blocks: Vec<RebirthBlock> = (0..truncation as u64)
        .map(|i| RebirthBlock {
            label: Individual {
                index: i,
                birth_time: window_start,
            },
            earliest_birth: window_start,
        })
        .collect();
    let mut clock = window_start;
    loop {
        let k = blocks.len() as u64;
        if k < 2 {
            break;
        }
        clock += exp_sample(rng) / (pair_rate * pair_count(k));
        if clock > eval_time {
            break;
        }
        let a = rng.gen_range(0..blocks.len());
        let mut b = rng.gen_range(0..blocks.len() - 1);
        if b >= a {
            b += 1;
        }
        apply_rebirth_merge(&mut blocks, a, b, clock, clock <= window_end);
    }
    KingmanState {
        blocks,
        clock: eval_time,
        pair_rate,
    }
}

/// N_α: number of blocks containing some individual born by `log_alpha`.
pub fn n_alpha(state: &KingmanState, log_alpha: f64) -> usize {
    state
        .blocks
        .iter()
        .filter(|b| b.earliest_birth <= log_alpha)
        .count()
}

/// Grid counts obtained by mapping every birth time in
/// (log α_{k−1}, log α_k] up to log α_k (with α_0 = 0) and counting blocks
/// with mapped earliest birth ≤ log α_k.
pub fn discrete_counts(state: &KingmanState, alpha_grid: &[f64]) -> Vec<usize> {
    assert!(!alpha_grid.is_empty());
    assert!(alpha_grid.windows(2).all(|w| w[0] < w[1]));
    assert!(alpha_grid.iter().all(|&a| a > 0.0 && a <= 1.0));
    let logs: Vec<f64> = alpha_grid.iter().map(|a| a.ln()).collect();
    let mapped: Vec<Option<f64>> = state
        .blocks
        .iter()
        .map(|b| {
            logs.iter()
                .find(|&&la| b.earliest_birth <= la)
                .copied()
        })
        .collect();
    logs.iter()
        .map(|&la| {
            mapped
                .iter()
                .filter(|m| matches!(m, Some(v) if *v <= la))
                .count()
        })
        .collect()
}

/// Runs the windowed rebirth coalescent on [log α_1, log α_m] to time 0 and
/// returns the discrete-grid counts Ñ.
pub fn simulate_rebirth_discrete<R: Rng + ?Sized>(
    alpha_grid: &[f64],
    truncation: u32,
    pair_rate: f64,
    rng: &mut R,
) -> Vec<usize> {
    assert!(alpha_grid.len() >= 1);
    let lo = alpha_grid[0].ln();
    let hi = alpha_grid[alpha_grid.len() - 1].ln();
    let state = simulate_rebirth(lo, hi, 0.0, truncation, pair_rate, rng);
    discrete_counts(&state, alpha_grid)
}

/// The merging-coalescents state: per copy, the surviving copy-ranks. The
/// label of a block with copy n and rank k is mk + n.
#[derive(Clone, Debug)]
pub struct MergingState {
    pub per_copy: Vec<Vec<u64>>,
    pub clock: f64,
    pub merge_times: Vec<f64>,
}

/// m truncated Kingman copies started together at merge_log_times[0];
/// intra-copy pairs merge at rate 1 throughout, pairs across copies (n₁, n₂)
/// merge at rate 1 once the clock reaches max(merge_times[n₁],
/// merge_times[n₂]). The survivor of a merge is the (copy, rank)-lexicographic
/// minimum.
pub fn simulate_merging<R: Rng + ?Sized>(
    merge_log_times: &[f64],
    eval_log_time: f64,
    truncation_per_copy: u32,
    rng: &mut R,
) -> MergingState {
    let m = merge_log_times.len();
    assert!(m >= 1 && truncation_per_copy >= 1);
    assert!(merge_log_times.windows(2).all(|w| w[0] <= w[1]));
    assert!(merge_log_times[0] <= eval_log_time);
    let mut per_copy: Vec<Vec<u64>> = (0..m)
        .map(|_| (0..truncation_per_copy as u64).collect())
        .collect();
    let mut clock = merge_log_times[0];
    let mut next_breakpoint_idx = merge_log_times.iter().position(|&mt| mt > clock);
    loop {
        let counts: Vec<f64> = per_copy.iter().map(|v| v.len() as f64).collect();
        let intra: Vec<f64> = counts.iter().map(|&c| c * (c - 1.0) / 2.0).collect();
        let mut inter = vec![vec![0.0f64; m]; m];
        let mut total = intra.iter().sum::<f64>();
        for i in 0..m {
            for j in i + 1..m {
                if clock >= merge_log_times[j] {
                    inter[i][j] = counts[i] * counts[j];
                    total += inter[i][j];
                }
            }
        }
        if total <= 0.0 {
            // all enabled activity exhausted; jump to the next enabling time
            match next_breakpoint_idx {
                Some(bi) if merge_log_times[bi] <= eval_log_time => {
                    clock = merge_log_times[bi];
                    next_breakpoint_idx = merge_log_times.iter().position(|&mt| mt > clock);
                    continue;
                }
                _ => break,
            }
        }
        let dt = exp_sample(rng) / total;
        // an inter-copy pair scheduled past its enabling breakpoint must be
        // re-rated, so advance only to the breakpoint in that case
        if let Some(bi) = next_breakpoint_idx {
            let bt = merge_log_times[bi];
            if clock + dt > bt && bt <= eval_log_time {
                clock = bt;
                next_breakpoint_idx = merge_log_times.iter().position(|&mt| mt > clock);
                continue;
            }
        }
        if clock + dt > eval_log_time {
            break;
        }
        clock += dt;
        // categorical selection
        let mut u = rng.gen::<f64>() * total;
        let mut chosen: Option<(usize, usize)> = None;
        'outer: for i in 0..m {
            if u < intra[i] {
                chosen = Some((i, i));
                break 'outer;
            }
            u -= intra[i];
            for j in i + 1..m {
                if u < inter[i][j] {
                    chosen = Some((i, j));
                    break 'outer;
                }
                u -= inter[i][j];
            }
        }
        let (ci, cj) = chosen.unwrap_or((m - 1, m - 1));
        if ci == cj {
            let v = &mut per_copy[ci];
            let a = rng.gen_range(0..v.len());
            let mut b = rng.gen_range(0..v.len() - 1);
            if b >= a {
                b += 1;
            }
            // survivor is the smaller rank within the copy
            let lose = if v[a] < v[b] { b } else { a };
            v.swap_remove(lose);
        } else {
            // the lower copy index wins regardless of rank, so only the
            // losing member (in copy cj) needs to be identified
            let b = rng.gen_range(0..per_copy[cj].len());
            per_copy[cj].swap_remove(b);
        }
    }
    MergingState {
        per_copy,
        clock: eval_log_time,
        merge_times: merge_log_times.to_vec(),
    }
}

/// N^mer_i: number of blocks whose label is congruent to a copy index
/// ≤ i − 1 (i is 1-based).
pub fn n_mer(state: &MergingState, i: usize) -> usize {
    assert!(i >= 1 && i <= state.per_copy.len(), "copy index out of range");
    state.per_copy[..i].iter().map(|v| v.len()).sum()
}

/// CSV oracle table of Kingman marginals (columns: n0, s, k, probability).
pub fn marginal_table_csv(n0s: &[u32], ss: &[f64]) -> Result<String, KingmanError> {
    let mut out = String::from("n0,s,k,probability\n");
    for &n0 in n0s {
        for &s in ss {
            let pmf = marginal_distribution(n0, s, 1.0)?;
            for (k0, p) in pmf.iter().enumerate() {
                out.push_str(&format!("{},{:.12},{},{:.15e}\n", n0, s, k0 + 1, p));
            }
        }
    }
    Ok(out)
}
