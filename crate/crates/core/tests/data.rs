mod common;

use fcnet::data::{
    fit_norm, gen_accel_rotor, gen_harmonic, gen_masspring_imitation, imitation_corpus, parse, read_trajectories, serialize, write_trajectories,
    Harmonic, MassSpring, RefSignal, Rotor, Trajectory,
};
use fcnet::Error;
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn harmonic(amplitude: f64, noise_std: f64) -> Harmonic {
    Harmonic {
        amplitude,
        omega: 2.0,
        phase: 0.3,
        n_steps: 300,
        dt: 0.01,
        noise_std,
        mirror_action: true,
    }
}

#[test]
fn harmonic_matches_closed_form() {
    let t = gen_harmonic(&harmonic(1.0, 0.0), 0).unwrap();
    for i in 0..300 {
        let time = i as f64 * 0.01;
        assert!((t.states[[i, 0]] - (2.0 * time + 0.3).sin()).abs() < 1e-12);
        assert!((t.states[[i, 1]] - 2.0 * (2.0 * time + 0.3).cos()).abs() < 1e-12);
        assert_eq!(t.actions[[i, 0]], t.states[[i, 0]]);
    }
    let zero = gen_harmonic(&harmonic(0.0, 0.0), 0).unwrap();
    assert!(zero.states.iter().all(|&v| v == 0.0));
    let bare = gen_harmonic(&Harmonic { mirror_action: false, ..harmonic(1.0, 0.0) }, 0).unwrap();
    assert_eq!(bare.d_a(), 0);
}

#[test]
fn rotor_matches_closed_form() {
    let p = Rotor {
        theta0: 0.1,
        omega0: 0.5,
        alpha: 0.2,
        n_steps: 200,
        dt: 0.02,
        noise_std: 0.0,
    };
    let t = gen_accel_rotor(&p, 0).unwrap();
    for i in 0..200 {
        let time = i as f64 * 0.02;
        assert!((t.states[[i, 0]] - (0.1 + 0.5 * time + 0.1 * time * time)).abs() < 1e-12);
        assert!((t.states[[i, 1]] - (0.5 + 0.2 * time)).abs() < 1e-12);
    }
    let still = gen_accel_rotor(&Rotor { omega0: 0.0, alpha: 0.0, ..p.clone() }, 0).unwrap();
    assert!(still.states.column(0).iter().all(|&v| v == 0.1));
    let linear = gen_accel_rotor(&Rotor { alpha: 0.0, ..p }, 0).unwrap();
    let th = linear.states.column(0);
    for i in 2..200 {
        assert!((th[i] - 2.0 * th[i - 1] + th[i - 2]).abs() < 1e-12);
    }
    assert!(linear.states.column(1).iter().all(|&v| v == 0.5));
}

#[test]
fn generators_are_deterministic_per_seed() {
    let a = gen_harmonic(&harmonic(1.0, 0.1), 7).unwrap();
    let b = gen_harmonic(&harmonic(1.0, 0.1), 7).unwrap();
    let c = gen_harmonic(&harmonic(1.0, 0.1), 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(imitation_corpus(5, 40, 3).unwrap(), imitation_corpus(5, 40, 3).unwrap());
}

#[test]
fn masspring_equilibrium_stays_at_rest() {
    let p = MassSpring::tracking(10.0, 2.0, RefSignal::default(), 100, 0.01);
    let t = gen_masspring_imitation(&p, 0).unwrap();
    assert!(t.states.iter().chain(t.actions.iter()).all(|&v| v == 0.0));
}

#[test]
fn masspring_step_response_converges() {
    let p = MassSpring {
        kp: 100.0,
        kd: 20.0,
        reference: RefSignal { offset: 1.0, sines: vec![] },
        n_steps: 500,
        dt: 0.01,
        x0: 0.0,
        v0: 0.0,
        disturbance_std: 0.0,
    };
    let t = gen_masspring_imitation(&p, 0).unwrap();
    let last = t.states.row(499);
    assert!((last[0] - last[2]).abs() < 0.05, "{last}");
    // The action column is the PD law evaluated on the recorded state.
    for i in 0..500 {
        let s = t.states.row(i);
        assert!((t.actions[[i, 0]] - (-100.0 * (s[0] - s[2]) - 20.0 * s[1])).abs() < 1e-9);
    }
}

#[test]
fn masspring_rejects_bad_inputs() {
    let stiff = MassSpring {
        x0: 0.0,
        ..MassSpring::tracking(1e6, 1.0, RefSignal { offset: 1.0, sines: vec![] }, 1000, 0.01)
    };
    assert!(matches!(gen_masspring_imitation(&stiff, 0), Err(Error::Unstable(_))));
    let neg = MassSpring::tracking(-1.0, 1.0, RefSignal::default(), 10, 0.01);
    assert!(gen_masspring_imitation(&neg, 0).is_err());
    let busy = RefSignal { offset: 0.0, sines: vec![(1.0, 1.0, 0.0); 4] };
    assert!(gen_masspring_imitation(&MassSpring::tracking(1.0, 1.0, busy, 10, 0.01), 0).is_err());
}

fn bits(t: &Trajectory) -> Vec<u64> {
    t.states.iter().chain(t.actions.iter()).chain(std::iter::once(&t.dt)).map(|v| v.to_bits()).collect()
}

#[test]
fn file_roundtrip_is_exact_for_generated_data() {
    let mut trajs = imitation_corpus(4, 50, 1).unwrap();
    trajs.push(gen_harmonic(&harmonic(1.0, 0.3), 2).unwrap());
    trajs.push(gen_harmonic(&Harmonic { mirror_action: false, ..harmonic(0.7, 0.3) }, 2).unwrap());
    trajs.push(
        gen_accel_rotor(
            &Rotor {
                theta0: -1e-300,
                omega0: 3.0,
                alpha: 1e10,
                n_steps: 20,
                dt: 1.0 / 3.0,
                noise_std: 0.1,
            },
            3,
        )
        .unwrap(),
    );
    let text = serialize(&trajs);
    assert!(text.starts_with("FCTRAJ v1 d_s=3 d_a=1 dt="));
    let back = parse(&text).unwrap();
    assert_eq!(back.len(), trajs.len());
    for (a, b) in trajs.iter().zip(&back) {
        assert_eq!(bits(a), bits(b));
        assert_eq!((a.d_s(), a.d_a()), (b.d_s(), b.d_a()));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.fctraj");
    write_trajectories(&path, &trajs).unwrap();
    let again = read_trajectories(&path).unwrap();
    assert!(trajs.iter().zip(&again).all(|(a, b)| bits(a) == bits(b)));
}

#[test]
fn malformed_files_are_rejected() {
    for bad in [
        "FCTRAJ v2 d_s=1 d_a=0 dt=0.1\n1\n",
        "FCTRAJ v1 d_s=1 d_a=1 dt=0.1\n1\n",
        "FCTRAJ v1 d_s=1 d_a=0 dt=0.1\n",
        "FCTRAJ v1 d_s=1 d_a=0 dt=0.1\nx\n",
        "FCTRAJ v1 d_s=1 d_a=0\n1\n",
        "FCTRAJ v1 d_s=1 d_a=0 dt=0.1\nNaN\n",
        "1 2\n",
    ] {
        assert!(parse(bad).is_err(), "{bad:?}");
    }
    assert!(parse("").unwrap().is_empty());
}

proptest! {
    #[test]
    fn roundtrip_arbitrary_finite_values(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..60), d_a in 0usize..3) {
        let width = 1 + d_a;
        let rows = values.len() / width;
        prop_assume!(rows > 0);
        let all = Array2::from_shape_vec((rows, width), values[..rows * width].to_vec()).unwrap();
        let t = Trajectory::new(all.slice(ndarray::s![.., ..1]).to_owned(), all.slice(ndarray::s![.., 1..]).to_owned(), 0.05).unwrap();
        let back = parse(&serialize(std::slice::from_ref(&t))).unwrap();
        prop_assert_eq!(bits(&t), bits(&back[0]));
    }
}

#[test]
fn norm_stats_of_standard_normal_samples() {
    let mut rng = common::rng(12);
    let states = Array2::from_shape_fn((10_000, 3), |_| StandardNormal.sample(&mut rng));
    let actions = Array2::from_shape_fn((10_000, 1), |_| StandardNormal.sample(&mut rng));
    let t = Trajectory::new(states, actions, 0.1).unwrap();
    let stats = fit_norm(std::slice::from_ref(&t)).unwrap();
    for v in stats.state_mean.iter().chain(stats.action_mean.iter()) {
        assert!(v.abs() < 0.1);
    }
    for v in stats.state_std.iter().chain(stats.action_std.iter()) {
        assert!((v - 1.0).abs() < 0.1);
    }
}

#[test]
fn norm_roundtrip_and_constant_columns() {
    let mut rng = common::rng(13);
    let mut states = common::random_seq(&mut rng, 50, 3).mapv(|v| 40.0 * v + 7.0);
    states.column_mut(1).fill(3.25);
    let actions = Array2::from_shape_fn((50, 2), |_| rng.random_range(-100.0..100.0));
    let t = Trajectory::new(states, actions, 0.1).unwrap();
    let stats = fit_norm(std::slice::from_ref(&t)).unwrap();
    assert_eq!(stats.state_std[1], 1e-8);
    let z = stats.apply(&t).unwrap();
    assert!(z.states.column(1).iter().all(|&v| v == 0.0));
    let back = stats.invert(&z).unwrap();
    for (a, b) in back.states.iter().chain(back.actions.iter()).zip(t.states.iter().chain(t.actions.iter())) {
        assert!((a - b).abs() < 1e-12);
    }
    // Normalized columns have zero mean and unit variance.
    let m = z.states.mean_axis(Axis(0)).unwrap();
    assert!(m[0].abs() < 1e-12 && m[2].abs() < 1e-12);
}
