use std::time::Instant;
use spectformer_core::autodiff::tape::Tape;
use spectformer_core::data::gen_frequency_dataset;
use spectformer_core::model::build::{build_model, forward_rec};
use spectformer_core::model::config::config_by_name;
use spectformer_core::numerics::rng::Rng;
use spectformer_core::training::{adamw_step, OptimState};

fn step_time(alpha: usize, layers: usize, batch: usize) -> (f64, f64) {
    let mut cfg = config_by_name("spectformer-mnist-toy").unwrap();
    cfg.alpha = alpha;
    cfg.layers = layers;
    cfg.num_classes = 4;
    let mut rng = Rng::seeded(1);
    let (mut params, plan) = build_model::<f32>(&cfg, &mut rng).unwrap();
    let mut opt = OptimState::new(&params, 0.9, 0.999, 1e-8, 0.05);
    let data = gen_frequency_dataset::<f32>(&mut rng, batch, 4, 32, 0.3).unwrap();
    let (images, labels) = data.gather(&(0..batch).collect::<Vec<_>>());
    for _ in 0..2 {
        let mut tape = Tape::new();
        let logits = forward_rec(&plan, &params, &mut tape, &images).unwrap();
        let loss = tape.cross_entropy(logits, &labels, 0.0).unwrap();
        let grads = tape.backward(loss).unwrap();
        adamw_step(&mut params, &grads, &mut opt, 1e-3).unwrap();
    }
    let reps = 8;
    let (mut t_fwd, mut t_bwd) = (0.0, 0.0);
    for _ in 0..reps {
        let t0 = Instant::now();
        let mut tape = Tape::new();
        let logits = forward_rec(&plan, &params, &mut tape, &images).unwrap();
        let loss = tape.cross_entropy(logits, &labels, 0.0).unwrap();
        t_fwd += t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let grads = tape.backward(loss).unwrap();
        t_bwd += t1.elapsed().as_secs_f64();
        adamw_step(&mut params, &grads, &mut opt, 1e-3).unwrap();
    }
    (1e3 * t_fwd / reps as f64, 1e3 * t_bwd / reps as f64)
}

#[test]
#[ignore]
fn step_decomposition() {
    for (alpha, layers, batch, tag) in [
        (0usize, 0usize, 64usize, "no blocks"),
        (0, 4, 64, "4 attention"),
        (4, 4, 64, "4 spectral"),
        (2, 4, 64, "2+2 mixed"),
        (2, 4, 128, "2+2 batch128"),
    ] {
        let (f, b) = step_time(alpha, layers, batch);
        println!("{tag:>14}: fwd {f:6.1}ms bwd {b:6.1}ms total {:6.1}ms", f + b);
    }
}
