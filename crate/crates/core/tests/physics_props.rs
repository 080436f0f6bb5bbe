use bilevel_core::env::{observe, reset, step, Action, EnvConfig, EnvState};
use proptest::prelude::*;

fn state() -> impl Strategy<Value = EnvState> {
    (
        -5.0..5.0f64,
        prop_oneof![Just(0.0), 0.0..1e-5f64, 0.0..3.0f64],
        -4.0..4.0f64,
        -4.0..4.0f64,
        -3.14..3.14f64,
        -5.0..5.0f64,
    )
        .prop_map(|(x, z, vx, vz, pitch, ang_vel)| EnvState {
            x,
            z,
            vx,
            vz,
            pitch,
            ang_vel,
            ..EnvState::default()
        })
}

fn action() -> impl Strategy<Value = Action> {
    (-1.5..1.5f64, -1.5..1.5f64).prop_map(|(t, r)| Action::new(t, r))
}

fn energy(s: &EnvState, g: f64) -> f64 {
    0.5 * (s.vx * s.vx + s.vz * s.vz) + g * s.z
}

#[test]
fn rest_is_held_for_a_full_episode() {
    let cfg = EnvConfig::default();
    let mut s = reset(&cfg, 0);
    for t in 0..200 {
        let (next, obs) = step(&s, Action::default(), &cfg);
        assert_eq!(EnvState { step: 0, ..next }, EnvState::default(), "step {t}");
        assert_eq!(obs.contact, 1.0);
        s = next;
    }
    assert_eq!(s.step, 200);
}

#[test]
fn full_thrust_from_rest() {
    let cfg = EnvConfig::default();
    let (next, _) = step(&EnvState::default(), Action::new(1.0, 0.0), &cfg);
    // dt * (thrust_max - g), computed by hand
    assert!((next.vz - 0.2595).abs() < 1e-12, "{}", next.vz);
    assert!((next.z - 0.05 * 0.2595).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn contact_flag_tracks_height(s in state()) {
        let cfg = EnvConfig::default();
        let obs = observe(&s, &cfg);
        prop_assert_eq!(obs.contact == 1.0, s.z <= cfg.contact_epsilon);
        prop_assert!(obs.contact == 0.0 || obs.contact == 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn step_invariants(s in state(), a in action()) {
        let cfg = EnvConfig::default();
        let (next, obs) = step(&s, a, &cfg);
        prop_assert!(next.z >= 0.0);
        prop_assert_eq!(obs.up_proj, next.pitch.cos());
        prop_assert!(next.pitch.abs() <= std::f64::consts::PI);
        prop_assert_eq!(obs.contact == 1.0, next.z <= cfg.contact_epsilon);
        prop_assert_eq!(next.prev_action, [a.thrust, a.torque]);
        prop_assert_eq!(next.step, s.step + 1);
        // determinism
        prop_assert_eq!(step(&s, a, &cfg), (next, obs));
    }

    #[test]
    fn mechanical_energy_never_grows_without_thrust(s in state(), torque in -1.0..1.0f64) {
        let cfg = EnvConfig::default();
        let mut cur = s;
        for _ in 0..50 {
            let (next, _) = step(&cur, Action::new(0.0, torque), &cfg);
            let (before, after) = (energy(&cur, cfg.gravity), energy(&next, cfg.gravity));
            prop_assert!(after <= before + 1e-9 * before.abs().max(1.0), "{before} -> {after}");
            cur = next;
        }
    }

    #[test]
    fn seeded_reset_is_reproducible(seed in any::<u64>(), noise in 0.0..0.5f64) {
        let cfg = EnvConfig { init_noise: noise, ..EnvConfig::default() };
        let s = reset(&cfg, seed);
        prop_assert_eq!(s, reset(&cfg, seed));
        prop_assert!(s.z >= 0.0 && s.z <= noise && s.x.abs() <= noise);
    }
}
