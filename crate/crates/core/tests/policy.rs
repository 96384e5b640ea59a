use dsfpo::ad::{Adam, Tape, Tensor};
use dsfpo::curriculum::CurriculumSample;
use dsfpo::policy::{
    actor_forward, build_critic, critic_forward, log_prob, sample_action, EstimatorTrainer,
    PolicyConfig, PolicyParams, INDEX_HEAD,
};
use dsfpo::world::{policy_dims, DribbleEnv, WorldConfig};
use dsfpo::policy::{EstimatedContext, HierAction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(seed: u64) -> PolicyParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PolicyParams::init(&PolicyConfig::small(), policy_dims(), &mut rng)
}

/// Observations, states and estimator windows from a random-action rollout.
fn rollout(steps: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = DribbleEnv::new(WorldConfig::default(), 5, ChaCha8Rng::seed_from_u64(seed + 1));
    env.reset(&CurriculumSample {
        command: [0.5, -0.3],
        cell: [20, 12],
        difficulty: 2,
    });
    let z = EstimatedContext::from_slice(&[0.0; 6]);
    let (mut obs, mut states, mut hist) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..steps {
        let o = env.observe(&z);
        obs.push(o.actor);
        states.push(o.state);
        hist.push(env.estimator_input());
        let action = HierAction {
            skill: rng.random_range(0..4),
            command: (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
            log_prob_index: 0.0,
            log_prob_command_per_skill: vec![],
            log_prob_command_full: 0.0,
            focus_weights: vec![],
        };
        let (_, fin) = env.step(&action).unwrap();
        if fin.is_some() {
            break;
        }
    }
    (obs, states, hist)
}

#[test]
fn categorical_frequency_matches_weights() {
    let mut p = params(1);
    let w = p.store.get_mut(&format!("{INDEX_HEAD}.weight")).unwrap();
    w.scale_in_place(0.0);
    let b = p.store.get_mut(&format!("{INDEX_HEAD}.bias")).unwrap();
    *b = Tensor::row(&[0.7f64.ln(), 0.1f64.ln(), 0.1f64.ln(), 0.1f64.ln()]);
    let (obs, ..) = rollout(1, 2);
    let out = actor_forward(&p, &obs[0]).unwrap();
    assert!((out.weights[0] - 0.7).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut runner = dsfpo::policy::PolicyRunner::new(&p);
    let n = 100_000;
    let batch = runner.actor(Tensor::row(&obs[0])).unwrap();
    let hits = (0..n)
        .filter(|_| dsfpo::policy::sample_row(&p.config, &batch, 0, &mut rng).skill == 0)
        .count();
    let freq = hits as f64 / n as f64;
    assert!((freq - 0.7).abs() < 0.01, "frequency {freq}");
}

#[test]
fn index_log_prob_matches_direct_softmax() {
    let p = params(4);
    let (obs, ..) = rollout(20, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for o in &obs {
        let a = sample_action(&p, o, &mut rng).unwrap();
        let logits = actor_forward(&p, o).unwrap().logits;
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        let direct = (logits[a.skill] - m).exp() / z;
        let (lp, _) = log_prob(&p, o, &a).unwrap();
        assert!((lp.exp() - direct).abs() < 1e-12);
    }
}

#[test]
fn critic_values_stay_finite_over_a_rollout() {
    let p = params(7);
    let (_, states, _) = rollout(200, 8);
    assert!(states.len() > 10);
    for s in &states {
        assert!(critic_forward(&p, s).unwrap().is_finite());
    }
}

#[test]
fn critic_fits_a_constant_return() {
    let mut p = params(9);
    let (_, states, _) = rollout(200, 10);
    let x = Tensor::from_rows(&states).unwrap();
    let mut tape = Tape::new();
    let s = tape.input("state");
    let v = build_critic(&mut tape, &p.config, s);
    let target = tape.constant(Tensor::full(states.len(), 1, 1.0));
    let d = tape.sub(v, target);
    let sq = tape.mul(d, d);
    let loss = tape.mean(sq);
    let mut adam = Adam::for_store(5e-3, &p.store, PolicyParams::is_critic);
    tape.bind("state", x).unwrap();
    for _ in 0..500 {
        p.store.bind_into(&mut tape);
        tape.forward().unwrap();
        let g = tape.backward(loss, Tensor::scalar(1.0)).unwrap();
        adam.step(&mut p.store, &g).unwrap();
    }
    for st in &states {
        let v = critic_forward(&p, st).unwrap();
        assert!((v - 1.0).abs() < 0.05, "value {v}");
    }
}

#[test]
fn estimator_loss_moving_average_decreases() {
    let mut p = params(11);
    let (_, _, hist) = rollout(64, 12);
    let x = Tensor::from_rows(&hist).unwrap();
    let y = Tensor::full(hist.len(), 6, 0.5);
    let mut trainer = EstimatorTrainer::new(&p, 1e-3);
    let before = p.store.clone();
    let losses: Vec<f64> = (0..400).map(|_| trainer.update(&mut p, &x, &y).unwrap()).collect();
    let avg: Vec<f64> = losses.windows(100).map(|w| w.iter().sum::<f64>() / 100.0).collect();
    for pair in avg.windows(2) {
        assert!(pair[1] <= pair[0], "moving average rose: {} -> {}", pair[0], pair[1]);
    }
    assert!(avg.last().unwrap() < &(avg[0] * 0.5));
    for (name, t) in p.store.iter() {
        if !PolicyParams::is_estimator(name) {
            assert_eq!(before.get(name).unwrap(), t, "{name} changed");
        }
    }
}

#[test]
fn estimator_loss_is_zero_at_its_own_prediction() {
    let mut p = params(13);
    let (_, _, hist) = rollout(10, 14);
    let x = Tensor::from_rows(&hist).unwrap();
    let mut runner = dsfpo::policy::PolicyRunner::new(&p);
    let pred = runner.estimate(x.clone()).unwrap();
    let mut trainer = EstimatorTrainer::new(&p, 1e-3);
    assert_eq!(trainer.loss(&p, &x, &pred).unwrap(), 0.0);
    assert_eq!(trainer.update(&mut p, &x, &pred).unwrap(), 0.0);
}
