//! Walk kernels: validation, displacement laws, the fast interval sampler,
//! and the first-meeting probability against a truncated-generator oracle.

use coalsim::ctmc::transient_distribution;
use coalsim::rng::replicate_rng;
use coalsim::stats::chi_square_homogeneity;
use coalsim::walk::{
    contained_in_annulus, first_meeting_time, max_step_variance, sample_displacement_over,
    walk_position, KernelError,
};
use coalsim::WalkKernel;

#[test]
fn kernel_validation_rejects_bad_inputs() {
    assert!(matches!(
        WalkKernel::from_steps(&[]),
        Err(KernelError::Empty)
    ));
    assert!(matches!(
        WalkKernel::from_steps(&[((1, 0), 0.6), ((-1, 0), 0.6)]),
        Err(KernelError::BadSum(_))
    ));
    assert!(matches!(
        WalkKernel::from_steps(&[((1, 0), 0.75), ((-1, 0), 0.25)]),
        Err(KernelError::NonZeroMean(_, _))
    ));
    assert!(matches!(
        WalkKernel::from_steps(&[((1, 0), 0.5), ((-1, 0), 0.5)]),
        Err(KernelError::NotIrreducible)
    ));
    // steps on the even sublattice generate a proper subgroup
    assert!(matches!(
        WalkKernel::from_steps(&[
            ((2, 0), 0.25),
            ((-2, 0), 0.25),
            ((0, 2), 0.25),
            ((0, -2), 0.25)
        ]),
        Err(KernelError::NotIrreducible)
    ));
    assert!(matches!(
        WalkKernel::from_steps(&[((1, 0), -0.5), ((-1, 0), 1.5)]),
        Err(KernelError::NonPositiveProbability(_))
    ));
}

#[test]
fn kernel_json_round_trip() {
    let k = WalkKernel::from_json(
        r#"[{"dx":1,"dy":0,"p":0.25},{"dx":-1,"dy":0,"p":0.25},
            {"dx":0,"dy":1,"p":0.25},{"dx":0,"dy":-1,"p":0.25}]"#,
    )
    .unwrap();
    assert_eq!(k.support(), WalkKernel::simple().support());
    assert!(matches!(
        WalkKernel::from_json("not json"),
        Err(KernelError::BadJson(_))
    ));
    assert!((max_step_variance(&k) - 0.5).abs() < 1e-12);
}

#[test]
fn mean_squared_displacement_is_linear_in_time() {
    // Wald: E‖X_t‖² = t · E‖step‖² = t for the simple kernel
    let kernel = WalkKernel::simple();
    let mut rng = replicate_rng(0xA110, 0);
    let duration = 40.0;
    let reps = 20_000;
    let mean: f64 = (0..reps)
        .map(|_| {
            let (x, y) = walk_position(&kernel, (0, 0), duration, &mut rng);
            (x * x + y * y) as f64
        })
        .sum::<f64>()
        / reps as f64;
    // Var(‖X‖²) ≈ 2t² + t for the Poissonized simple walk; allow 5 sigma
    let se = (2.0 * duration * duration + duration).sqrt() / (reps as f64).sqrt();
    assert!(
        (mean - duration).abs() < 5.0 * se,
        "mean square displacement {mean}, expected {duration} ± {se}"
    );
}

#[test]
fn interval_sampler_agrees_with_stepwise_walk() {
    let kernel = WalkKernel::simple();
    let mut rng = replicate_rng(0xA111, 1);
    let duration = 7.5;
    let reps = 30_000;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for _ in 0..reps {
        let (x, _) = walk_position(&kernel, (0, 0), duration, &mut rng);
        xs.push(x);
        let (_, dy) = sample_displacement_over(&kernel, duration, &mut rng);
        ys.push(dy);
    }
    // the x-marginal of the stepwise walk and the y-marginal of the interval
    // sampler share one law (the kernel is coordinate-symmetric)
    let r = chi_square_homogeneity(&xs, &ys);
    assert!(r.p_value > 1e-3, "p = {}", r.p_value);
    assert_eq!(sample_displacement_over(&kernel, 0.0, &mut rng), (0, 0));
}

/// Meeting probability of two adjacent walks by a short horizon, against the
/// exact transient distribution of the truncated difference walk (truncation
/// radius 14 adds ≤ 1e-4 error at this horizon).
#[test]
fn first_meeting_probability_matches_generator_oracle() {
    let r = 14i64;
    let horizon = 2.0;
    let side = (2 * r + 1) as usize;
    let n_states = side * side + 1; // sites plus one absorbing "escaped" state
    let idx = |x: i64, y: i64| ((x + r) as usize) * side + (y + r) as usize;
    let escaped = n_states - 1;
    let origin = idx(0, 0);
    let mut q = vec![vec![0.0f64; n_states]; n_states];
    // difference of two rate-1 simple walks: rate-2 simple walk
    for x in -r..=r {
        for y in -r..=r {
            let s = idx(x, y);
            if s == origin {
                continue; // absorbing: meeting
            }
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x + dx, y + dy);
                let tgt = if nx.abs().max(ny.abs()) > r {
                    escaped
                } else {
                    idx(nx, ny)
                };
                q[s][tgt] += 0.5;
                q[s][s] -= 0.5;
            }
        }
    }
    let mut initial = vec![0.0; n_states];
    initial[idx(1, 0)] = 1.0;
    let dist = transient_distribution(&q, &initial, horizon);
    let p_meet_oracle = dist[origin];

    let kernel = WalkKernel::simple();
    let mut rng = replicate_rng(0xA112, 2);
    let reps = 100_000;
    let hits = (0..reps)
        .filter(|_| first_meeting_time(&kernel, (3, 5), (2, 5), horizon, &mut rng).is_some())
        .count();
    let p_hat = hits as f64 / reps as f64;
    let se = (p_meet_oracle * (1.0 - p_meet_oracle) / reps as f64).sqrt();
    assert!(
        (p_hat - p_meet_oracle).abs() < 4.0 * se + 1e-4,
        "simulated {p_hat}, oracle {p_meet_oracle}, se {se}"
    );
}

#[test]
fn meeting_time_edge_cases() {
    let kernel = WalkKernel::simple();
    let mut rng = replicate_rng(0xA113, 3);
    assert_eq!(
        first_meeting_time(&kernel, (4, 4), (4, 4), 10.0, &mut rng),
        Some(0.0)
    );
    assert_eq!(
        first_meeting_time(&kernel, (0, 0), (1, 0), 0.0, &mut rng),
        None
    );
}

#[test]
fn annulus_predicate_brackets_pairwise_distances() {
    // t = e² so log t = 2; α = 1 gives scale e ≈ 2.718, c = 1: [e/2, 2e]
    let t = std::f64::consts::E.powi(2);
    assert!(contained_in_annulus(&[(0, 0), (3, 0)], 1.0, 1.0, t));
    assert!(!contained_in_annulus(&[(0, 0), (1, 0)], 1.0, 1.0, t)); // below e/2
    assert!(!contained_in_annulus(&[(0, 0), (6, 0)], 1.0, 1.0, t)); // above 2e
    assert!(!contained_in_annulus(&[(0, 0), (3, 0), (6, 0)], 1.0, 1.0, t));
    assert!(contained_in_annulus(&[(0, 0)], 1.0, 1.0, t)); // vacuous
}
