//! Continuous-time random walks on Z² with zero-mean finite-range kernels.

use crate::domain::{inf_norm, Site};
use crate::rng::exp_sample;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel step list is empty")]
    Empty,
    #[error("kernel probabilities must be positive, got {0}")]
    NonPositiveProbability(f64),
    #[error("kernel probabilities sum to {0}, expected 1")]
    BadSum(f64),
    #[error("kernel mean displacement is ({0}, {1}), expected (0, 0)")]
    NonZeroMean(f64, f64),
    #[error("kernel support does not generate Z² (walk not irreducible)")]
    NotIrreducible,
    #[error("invalid kernel JSON: {0}")]
    BadJson(String),
}

/// A jump distribution on Z²; the total jump rate is fixed at 1 per unit time.
#[derive(Clone, Debug)]
pub struct WalkKernel {
    steps: Vec<Site>,
    cum: Vec<f64>,
}

#[derive(Deserialize)]
struct JsonStep {
    dx: i64,
    dy: i64,
    p: f64,
}

impl WalkKernel {
    /// Nearest-neighbour simple walk: (±1,0), (0,±1) with probability 1/4.
    pub fn simple() -> Self {
        WalkKernel::from_steps(&[
            ((1, 0), 0.25),
            ((-1, 0), 0.25),
            ((0, 1), 0.25),
            ((0, -1), 0.25),
        ])
        .expect("simple walk kernel is valid")
    }

    pub fn from_steps(steps: &[(Site, f64)]) -> Result<Self, KernelError> {
        if steps.is_empty() {
            return Err(KernelError::Empty);
        }
        let mut sum = 0.0;
        let (mut mx, mut my) = (0.0, 0.0);
        for &((dx, dy), p) in steps {
            if p <= 0.0 {
                return Err(KernelError::NonPositiveProbability(p));
            }
            sum += p;
            mx += p * dx as f64;
            my += p * dy as f64;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(KernelError::BadSum(sum));
        }
        if mx.abs() > 1e-9 || my.abs() > 1e-9 {
            return Err(KernelError::NonZeroMean(mx, my));
        }
        let support: Vec<Site> = steps.iter().map(|&(s, _)| s).collect();
        if !generates_z2(&support) {
            return Err(KernelError::NotIrreducible);
        }
        Ok(Self::build(steps))
    }

    /// Bypasses validation; intended for test fixtures such as walks confined
    /// to one axis of a small torus.
    pub fn from_steps_unchecked(steps: &[(Site, f64)]) -> Self {
        Self::build(steps)
    }

    /// Parses the JSON kernel format: a list of {"dx": int, "dy": int, "p": float}.
    pub fn from_json(text: &str) -> Result<Self, KernelError> {
        let parsed: Vec<JsonStep> =
            serde_json::from_str(text).map_err(|e| KernelError::BadJson(e.to_string()))?;
        let steps: Vec<(Site, f64)> = parsed
            .into_iter()
            .map(|s| ((s.dx, s.dy), s.p))
            .collect();
        WalkKernel::from_steps(&steps)
    }

    fn build(steps: &[(Site, f64)]) -> Self {
        let mut cum = Vec::with_capacity(steps.len());
        let mut acc = 0.0;
        for &(_, p) in steps {
            acc += p;
            cum.push(acc);
        }
        if let Some(last) = cum.last_mut() {
            *last = f64::INFINITY; // guard against rounding in the final cell
        }
        WalkKernel {
            steps: steps.iter().map(|&(s, _)| s).collect(),
            cum,
        }
    }

    pub fn support(&self) -> &[Site] {
        &self.steps
    }

    /// The step distribution of the difference of two independent walks
    /// (which jumps at rate 2): the symmetrized kernel.
    pub fn symmetrized(&self) -> WalkKernel {
        let mut steps: Vec<(Site, f64)> = Vec::new();
        let probs = self.probabilities();
        for (&(dx, dy), p) in self.steps.iter().zip(&probs) {
            steps.push(((dx, dy), p / 2.0));
            steps.push(((-dx, -dy), p / 2.0));
        }
        Self::build(&steps)
    }

    fn probabilities(&self) -> Vec<f64> {
        let mut prev = 0.0;
        let mut out = Vec::with_capacity(self.cum.len());
        let n = self.cum.len();
        for (k, &c) in self.cum.iter().enumerate() {
            let c = if k + 1 == n { 1.0 } else { c };
            out.push(c - prev);
            prev = c;
        }
        out
    }
}

/// One step drawn from the kernel.
#[inline]
pub fn sample_displacement<R: Rng + ?Sized>(kernel: &WalkKernel, rng: &mut R) -> Site {
    let u: f64 = rng.gen();
    for (k, &c) in kernel.cum.iter().enumerate() {
        if u < c {
            return kernel.steps[k];
        }
    }
    *kernel.steps.last().unwrap()
}

/// Walk position after `duration` time units: a Poisson(duration) number of
/// kernel steps from `start`.
pub fn walk_position<R: Rng + ?Sized>(
    kernel: &WalkKernel,
    start: Site,
    duration: f64,
    rng: &mut R,
) -> Site {
    assert!(duration >= 0.0, "duration must be non-negative");
    let mut pos = start;
    if duration == 0.0 {
        return pos;
    }
    let n = Poisson::new(duration).expect("positive duration").sample(rng) as u64;
    for _ in 0..n {
        let (dx, dy) = sample_displacement(kernel, rng);
        pos.0 += dx;
        pos.1 += dy;
    }
    pos
}

/// Net displacement over `duration` time units in O(support) draws: the jump
/// count is Poisson(duration) and is split multinomially over the kernel
/// steps, instead of sampling the jumps one by one. Same law as taking
/// `walk_position(kernel, (0,0), duration)`.
pub fn sample_displacement_over<R: Rng + ?Sized>(
    kernel: &WalkKernel,
    duration: f64,
    rng: &mut R,
) -> Site {
    assert!(duration >= 0.0, "duration must be non-negative");
    if duration == 0.0 {
        return (0, 0);
    }
    let jumps = Poisson::new(duration).expect("positive duration").sample(rng) as u64;
    let probs = kernel.probabilities();
    let (mut dx, mut dy) = (0i64, 0i64);
    let mut remaining = jumps;
    let mut rem_p = 1.0f64;
    for (i, &(sx, sy)) in kernel.steps.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let c = if i + 1 == kernel.steps.len() {
            remaining
        } else {
            let q = (probs[i] / rem_p).clamp(0.0, 1.0);
            Binomial::new(remaining, q)
                .expect("valid binomial")
                .sample(rng)
        };
        dx += c as i64 * sx;
        dy += c as i64 * sy;
        remaining -= c;
        rem_p -= probs[i];
    }
    (dx, dy)
}

/// Larger of the per-jump coordinate variances E[Δx²], E[Δy²]; the walk's
/// per-coordinate displacement variance over time `d` is at most this times d.
pub fn max_step_variance(kernel: &WalkKernel) -> f64 {
    let probs = kernel.probabilities();
    let (mut vx, mut vy) = (0.0f64, 0.0f64);
    for (&(dx, dy), p) in kernel.steps.iter().zip(&probs) {
        vx += p * (dx * dx) as f64;
        vy += p * (dy * dy) as f64;
    }
    vx.max(vy)
}

/// First time two independent kernel walks from `x` and `y` share a site, or
/// `None` if they have not met by `horizon`. Simulated as the rate-2
/// symmetrized difference walk hitting the origin.
pub fn first_meeting_time<R: Rng + ?Sized>(
    kernel: &WalkKernel,
    x: Site,
    y: Site,
    horizon: f64,
    rng: &mut R,
) -> Option<f64> {
    assert!(horizon >= 0.0, "horizon must be non-negative");
    if x == y {
        return Some(0.0);
    }
    let diff = kernel.symmetrized();
    let mut z = (x.0 - y.0, x.1 - y.1);
    let mut clock = 0.0;
    loop {
        clock += exp_sample(rng) / 2.0;
        if clock > horizon {
            return None;
        }
        let (dx, dy) = sample_displacement(&diff, rng);
        z.0 += dx;
        z.1 += dy;
        if z == (0, 0) {
            return Some(clock);
        }
    }
}

/// The annulus predicate I_α(c, t): all pairwise infinity-norm distances lie
/// in [(c log t)⁻¹ t^{α/2}, (c log t) t^{α/2}]. Vacuously true for fewer than
/// two positions.
pub fn contained_in_annulus(positions: &[Site], alpha: f64, c: f64, t: f64) -> bool {
    assert!(t > 1.0 && c > 0.0, "require t > 1 and c > 0");
    let scale = t.powf(alpha / 2.0);
    let lo = scale / (c * t.ln());
    let hi = scale * (c * t.ln());
    for (k, &a) in positions.iter().enumerate() {
        for &b in &positions[k + 1..] {
            let d = inf_norm((a.0 - b.0, a.1 - b.1)) as f64;
            if d < lo || d > hi {
                return false;
            }
        }
    }
    true
}

/// True iff the given step vectors generate all of Z² as a group, i.e. the
/// Hermite form of the 2×n step matrix has unit determinant.
fn generates_z2(steps: &[Site]) -> bool {
    let mut cols: Vec<Site> = steps.to_vec();
    // Reduce first coordinates to a single gcd column by Euclid-style column
    // operations.
    loop {
        let mut pivot: Option<usize> = None;
        for (k, c) in cols.iter().enumerate() {
            if c.0 != 0 && pivot.map_or(true, |p: usize| c.0.abs() < cols[p].0.abs()) {
                pivot = Some(k);
            }
        }
        let p = match pivot {
            Some(p) => p,
            None => return false, // rank deficient in x
        };
        let mut reduced = false;
        let (px, py) = cols[p];
        for k in 0..cols.len() {
            if k != p && cols[k].0 != 0 {
                let q = cols[k].0.div_euclid(px);
                cols[k].0 -= q * px;
                cols[k].1 -= q * py;
                reduced = true;
            }
        }
        if !reduced {
            let d1 = px.abs();
            let mut d2: i64 = 0;
            for (k, c) in cols.iter().enumerate() {
                if k != p {
                    d2 = gcd(d2, c.1);
                }
            }
            return d1 == 1 && d2.abs() == 1;
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}
