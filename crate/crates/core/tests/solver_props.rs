use noma_mec::benchmarks::{full_offload, local_only, oma_partial};
use noma_mec::binary::{solve_bnb, solve_exhaustive, BinarySettings};
use noma_mec::partial::{solve_p1, P1Settings};
use noma_mec::scenario::Scenario;

fn small(users: usize) -> Scenario {
    Scenario {
        users,
        ..Scenario::default()
    }
}

#[test]
fn scaling_all_weights_scales_the_optimum() {
    let (mut p, c) = small(3).instance::<f64>(11, 0).unwrap();
    let s = P1Settings::with_epsilon(1e-5);
    let base = solve_p1(&p, &c, &s).unwrap().weighted_total;
    for u in &mut p {
        u.weight *= 4.0;
    }
    let scaled = solve_p1(&p, &c, &s).unwrap().weighted_total;
    assert!(
        (scaled / base - 4.0).abs() < 4.0 * 2e-5,
        "{scaled} vs 4 × {base}"
    );
}

#[test]
fn energy_grows_with_task_size_and_shrinks_with_block_length() {
    let s = P1Settings::with_epsilon(1e-5);
    let energy = |sc: Scenario| {
        let (p, c) = sc.instance::<f64>(12, 0).unwrap();
        solve_p1(&p, &c, &s).unwrap().weighted_total
    };
    let mut prev = 0.0;
    for bits in [1e5, 3e5, 5e5, 7e5] {
        let e = energy(Scenario {
            task_bits: bits,
            ..small(3)
        });
        assert!(e > prev * (1.0 - 2e-5));
        prev = e;
    }
    let mut prev = f64::INFINITY;
    for t in [0.1, 0.2, 0.3, 0.5] {
        let e = energy(Scenario {
            block_length: t,
            ..small(3)
        });
        assert!(e < prev * (1.0 + 2e-5));
        prev = e;
    }
}

#[test]
fn partial_offloading_is_below_every_benchmark() {
    for seed in 0..5 {
        let (p, c) = small(4).instance::<f64>(20 + seed, 0).unwrap();
        let s = P1Settings::with_epsilon(1e-4);
        let e = solve_p1(&p, &c, &s).unwrap().weighted_total;
        let tol = 1.0 + 2e-4;
        assert!(e <= local_only(&p, &c).weighted_total * tol);
        assert!(e <= full_offload(&p, &c, &s).unwrap().weighted_total * tol);
        assert!(e <= oma_partial(&p, &c).unwrap().weighted_total * tol);
    }
}

#[test]
fn binary_optimum_is_sandwiched_by_its_bound() {
    for (i, zeta) in [1e-28, 1e-31, 1e-32].into_iter().enumerate() {
        let sc = Scenario {
            capacitance: zeta,
            ..small(5)
        };
        let (p, c) = sc.instance::<f64>(30 + i as u64, 0).unwrap();
        let settings = BinarySettings::default();
        let b = solve_bnb(&p, &c, &settings).unwrap();
        let lb = b.lower_bound.unwrap();
        let partial = solve_p1(&p, &c, &settings.inner).unwrap();
        let exact = solve_exhaustive(&p, &c, &settings.inner).unwrap().value;
        assert!(lb <= exact * (1.0 + 1e-9));
        assert!(b.value <= exact * (1.0 + settings.gap));
        assert!(partial.report.lower_bound <= b.value);
    }
}
