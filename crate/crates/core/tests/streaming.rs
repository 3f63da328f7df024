use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ruq_core::{score, Monitor32, Monitor64, Outcome, Rollout32, Rollout64, ScoreParams32, ScoreParams64, DOF};

fn rollout(seed: u64, steps: usize) -> Rollout64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entropy = (0..steps).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..5.0))).collect();
    let actions = (0..steps).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
    Rollout64::new("r", "s", "t", Outcome::Failure, actions, entropy).unwrap()
}

#[test]
fn reset_replays_identically() {
    let r = rollout(1, 90);
    let mut mon = Monitor64::new(ScoreParams64::sw_atr(20, 0.7), 1.2).unwrap();
    let push_all = |mon: &mut Monitor64| {
        r.entropy().iter().zip(r.actions()).map(|(e, a)| mon.push(e, a).unwrap()).collect::<Vec<_>>()
    };
    let first = push_all(&mut mon);
    assert!(mon.triggered());
    mon.reset();
    assert!(!mon.triggered());
    assert_eq!(mon.gamma(), 1.2);
    assert_eq!(mon.params(), &ScoreParams64::sw_atr(20, 0.7));
    assert_eq!(push_all(&mut mon), first);
    let mut fresh = Monitor64::new(ScoreParams64::sw_atr(20, 0.7), 1.2).unwrap();
    assert_eq!(push_all(&mut fresh), first);
}

#[test]
fn score_is_absent_until_a_full_window() {
    let r = rollout(2, 30);
    let mut mon = Monitor64::new(ScoreParams64::weighted(10, 0.5, [2.0; DOF]), f64::INFINITY).unwrap();
    for (t, (e, a)) in r.entropy().iter().zip(r.actions()).enumerate() {
        let out = mon.push(e, a).unwrap();
        assert_eq!(out.step, t);
        assert_eq!(out.current_score.is_some(), t >= 9);
    }
    assert_eq!(mon.finalize(), Some(score(&r, mon.params()).unwrap()));
}

#[test]
fn zero_entropy_never_triggers() {
    let mut mon = Monitor64::new(ScoreParams64::sw_atr(5, 0.9), 1e-9).unwrap();
    for t in 0..200 {
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        mon.push(&[0.0; DOF], &[sign; DOF]).unwrap();
    }
    assert_eq!(mon.finalize(), Some(0.0));
    assert!(!mon.triggered());
}

#[test]
fn invalid_rows_are_rejected() {
    let mut mon = Monitor64::new(ScoreParams64::sw_atr(5, 0.9), 1.0).unwrap();
    let mut e = [0.1; DOF];
    e[3] = 6.0;
    let err = mon.push(&e, &[0.0; DOF]).unwrap_err();
    assert!(err.to_string().contains("d=3"), "{err}");
    assert!(mon.push(&[0.1; DOF], &[f64::NAN; DOF]).is_err());
    assert!(Monitor64::new(ScoreParams64::sw(5), 1.0).is_err());
}

#[test]
fn single_precision_tracks_double() {
    let r = rollout(3, 150);
    let entropy: Vec<[f32; DOF]> = r.entropy().iter().map(|row| row.map(|v| v as f32)).collect();
    let actions: Vec<[f32; DOF]> = r.actions().iter().map(|row| row.map(|v| v as f32)).collect();
    let r32 = Rollout32::new("r", "s", "t", Outcome::Failure, actions.clone(), entropy.clone()).unwrap();
    let p32 = ScoreParams32::weighted(25, 0.8, [1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 5.0]);
    let p64 = ScoreParams64::weighted(25, 0.8, [1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 5.0]);
    let s32 = score(&r32, &p32).unwrap();
    let s64 = score(&r, &p64).unwrap();
    assert!(((s32 as f64) - s64).abs() < 1e-4 * s64.abs());

    let mut mon = Monitor32::new(p32, f32::INFINITY).unwrap();
    for (e, a) in entropy.iter().zip(&actions) {
        mon.push(e, a).unwrap();
    }
    assert_eq!(mon.finalize(), Some(s32));
}
