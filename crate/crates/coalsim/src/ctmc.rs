//! Transient distributions of small dense CTMCs by uniformization; the exact
//! oracle behind the Kingman marginals, the tiny-torus merge probability, and
//! the first-meeting check.

use crate::numeric::ln_poisson_pmf;

/// Distribution at time `t` of the CTMC with generator `q` (row sums zero,
/// off-diagonals non-negative) started from `initial`.
///
/// Uniformization: with Λ ≥ max rate and P = I + Q/Λ, the answer is
/// Σ_k e^{−Λt}(Λt)^k/k! · initial·P^k, truncated once the accumulated Poisson
/// weight exceeds 1 − 1e−14.
pub fn transient_distribution(q: &[Vec<f64>], initial: &[f64], t: f64) -> Vec<f64> {
    let n = q.len();
    assert!(n > 0 && initial.len() == n);
    assert!(t >= 0.0);
    if t == 0.0 {
        return initial.to_vec();
    }
    let lambda = q
        .iter()
        .enumerate()
        .map(|(i, row)| -row[i])
        .fold(0.0f64, f64::max)
        .max(1e-12);
    // P = I + Q/Λ as a dense matrix
    let mut p = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            p[i][j] = q[i][j] / lambda + if i == j { 1.0 } else { 0.0 };
        }
    }
    let lt = lambda * t;
    let mut v = initial.to_vec();
    let mut out = vec![0.0f64; n];
    let mut weight_acc = 0.0f64;
    let mut k: u64 = 0;
    loop {
        let w = ln_poisson_pmf(k, lt).exp();
        weight_acc += w;
        for i in 0..n {
            out[i] += w * v[i];
        }
        if weight_acc >= 1.0 - 1e-14 {
            break;
        }
        // rounding across many terms can leave the accumulated weight just
        // below the threshold; past the Poisson mode a negligible term means
        // every remaining term is negligible too
        if k as f64 > lt && w < 1e-17 {
            break;
        }
        // v <- v P
        let mut next = vec![0.0f64; n];
        for i in 0..n {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for j in 0..n {
                next[j] += vi * p[i][j];
            }
        }
        v = next;
        k += 1;
        assert!(
            k < 10_000_000,
            "uniformization failed to converge (Λt = {lt})"
        );
    }
    // renormalize away the truncated Poisson tail
    let s: f64 = out.iter().sum();
    for x in &mut out {
        *x /= s;
    }
    out
}
