use std::time::Instant;

use spectformer_core::autodiff::params::ParamStore;
use spectformer_core::autodiff::tape::Tape;
use spectformer_core::blocks::*;
use spectformer_core::numerics::rng::Rng;
use spectformer_core::numerics::tensor::Tensor;

fn time_block(name: &str, reps: usize, mut f: impl FnMut()) {
    let t = Instant::now();
    for _ in 0..reps {
        f();
    }
    println!("{name}: {:.1} ms", 1e3 * t.elapsed().as_secs_f64() / reps as f64);
}

#[test]
#[ignore]
fn component_times() {
    let grid = Grid { h: 8, w: 8 };
    let (b, c, heads, e) = (64usize, 64usize, 4usize, 2usize);
    let n = grid.tokens();
    let mut store = ParamStore::<f32>::new();
    let mut rng = Rng::seeded(1);
    init_layer_norm(&mut store, "b.norm1", c).unwrap();
    init_gate(&mut store, &mut rng, "b.gate", grid, c).unwrap();
    init_attention(&mut store, &mut rng, "b.attn", c, heads).unwrap();
    init_layer_norm(&mut store, "b.norm2", c).unwrap();
    init_mlp(&mut store, &mut rng, "b.mlp", c, e).unwrap();
    let x: Tensor<f32> = Rng::seeded(2).normal_tensor(&[b * n, c], 0.0, 1.0).unwrap();

    time_block("attn block fwd", 10, || {
        let mut tape = Tape::new();
        let xi = tape.input(x.clone());
        let _ = residual_block(&mut tape, &store, xi, "b", |tape, normed| {
            map_batch(tape, normed, b, n, |tape, el| {
                let wq = tape.param(&store, "b.attn.qkv.weight")?;
                let bq = tape.param(&store, "b.attn.qkv.bias")?;
                let wp = tape.param(&store, "b.attn.proj.weight")?;
                let bp = tape.param(&store, "b.attn.proj.bias")?;
                attention_mix(tape, el, heads, wq, bq, wp, bp)
            })
        })
        .unwrap();
    });
    time_block("spectral block fwd", 10, || {
        let mut tape = Tape::new();
        let xi = tape.input(x.clone());
        let _ = residual_block(&mut tape, &store, xi, "b", |tape, normed| {
            let kr = tape.param(&store, "b.gate.re")?;
            let ki = tape.param(&store, "b.gate.im")?;
            map_batch(tape, normed, b, n, |tape, el| {
                spectral_gate_mix(tape, el, grid, kr, ki)
            })
        })
        .unwrap();
    });
    time_block("mlp only fwd", 10, || {
        let mut tape = Tape::new();
        let xi = tape.input(x.clone());
        let _ = mlp(&mut tape, &store, xi, "b.mlp").unwrap();
    });
    time_block("layernorm only", 10, || {
        let mut tape = Tape::new();
        let xi = tape.input(x.clone());
        let _ = layer_norm_named(&mut tape, &store, xi, "b.norm1").unwrap();
    });
    time_block("attn block fwd+bwd", 10, || {
        let mut tape = Tape::new();
        let xi = tape.input(x.clone());
        let out = residual_block(&mut tape, &store, xi, "b", |tape, normed| {
            map_batch(tape, normed, b, n, |tape, el| {
                let wq = tape.param(&store, "b.attn.qkv.weight")?;
                let bq = tape.param(&store, "b.attn.qkv.bias")?;
                let wp = tape.param(&store, "b.attn.proj.weight")?;
                let bp = tape.param(&store, "b.attn.proj.bias")?;
                attention_mix(tape, el, heads, wq, bq, wp, bp)
            })
        })
        .unwrap();
        let loss = tape.sum(out).unwrap();
        let _ = tape.backward(loss).unwrap();
    });
    time_block("spectral block fwd+bwd", 10, || {
        let mut tape = Tape::new();
        let xi = tape.input(x.clone());
        let out = residual_block(&mut tape, &store, xi, "b", |tape, normed| {
            let kr = tape.param(&store, "b.gate.re").unwrap();
            let ki = tape.param(&store, "b.gate.im").unwrap();
            map_batch(tape, normed, b, n, |tape, el| {
                spectral_gate_mix(tape, el, grid, kr, ki)
            })
        })
        .unwrap();
        let loss = tape.sum(out).unwrap();
        let _ = tape.backward(loss).unwrap();
    });
}
