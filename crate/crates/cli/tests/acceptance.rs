//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured numbers (run with --nocapture to see them).

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use spectformer_cli::runconfig::RunConfig;
use spectformer_core::blocks::{spectral_gate_mix, wavelet_gate_mix, Grid};
use spectformer_core::autodiff::tape::Tape;
use spectformer_core::data::gen_frequency_dataset;
use spectformer_core::io::pnm::read_pnm;
use spectformer_core::model::build::{build_model, forward, make_plan};
use spectformer_core::model::config::{config_by_name, MixerKind, ModelConfig};
use spectformer_core::model::count::{count_flops, count_params};
use spectformer_core::numerics::fft::{dft2_oracle, irfft2, rfft2, spectrum_energy};
use spectformer_core::numerics::rng::Rng;
use spectformer_core::numerics::tensor::Tensor;
use spectformer_core::training::{fit, load_checkpoint, TrainHyper};
use spectformer_core::verify;

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spectformer_acceptance_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn criterion_01_parameter_parity() {
    let targets = [
        ("spectformer-ti", 9.0),
        ("spectformer-xs", 20.0),
        ("spectformer-s", 32.0),
        ("spectformer-b", 57.0),
    ];
    for (name, millions) in targets {
        let cfg = config_by_name(name).unwrap();
        let params = count_params(&cfg).unwrap() as f64 / 1e6;
        assert!(
            (params - millions).abs() <= 0.05 * millions,
            "{name}: {params:.2}M outside 5% of {millions}M"
        );
        println!("[criterion 1] {name}: {params:.2}M vs {millions}M (within 5%)");
    }
    println!("[criterion 1] PASS parameter parity");
}

#[test]
fn criterion_02_flop_parity() {
    let targets = [
        ("spectformer-ti", 1.8),
        ("spectformer-xs", 4.0),
        ("spectformer-s", 6.6),
        ("spectformer-b", 11.5),
    ];
    for (name, gigas) in targets {
        let cfg = config_by_name(name).unwrap();
        assert_eq!(cfg.resolution, 224);
        let flops = count_flops(&cfg).unwrap().total() as f64 / 1e9;
        assert!(
            (flops - gigas).abs() <= 0.15 * gigas,
            "{name}: {flops:.2}G outside 15% of {gigas}G"
        );
        println!("[criterion 2] {name}: {flops:.2}G vs {gigas}G (within 15%)");
    }
    println!("[criterion 2] PASS flop parity");
}

#[test]
fn criterion_03_alpha_monotonicity() {
    let mut prev = u64::MAX;
    for alpha in [0usize, 2, 4, 6, 8, 10, 12] {
        let cfg = ModelConfig::vanilla(12, alpha, 384, 6, 16, 224, 1000);
        let p = count_params(&cfg).unwrap();
        assert!(p < prev, "params not strictly decreasing at alpha {alpha}");
        prev = p;
    }
    let a0 = count_params(&ModelConfig::vanilla(12, 0, 384, 6, 16, 224, 1000)).unwrap() as f64 / 1e6;
    assert!(
        (a0 - 22.0).abs() <= 0.05 * 22.0,
        "alpha-0 count {a0:.2}M outside 5% of 22.0M"
    );
    println!("[criterion 3] PASS alpha monotonicity (alpha0 = {a0:.2}M)");
}

#[test]
fn criterion_04_fft_oracle_suite() {
    let mut checked = 0usize;
    for &h in &[2usize, 4, 8] {
        for &w in &[2usize, 4, 8] {
            for &c in &[1usize, 3] {
                let grid: Tensor<f64> = Rng::seeded(40_000 + (h * 64 + w * 8 + c) as u64)
                    .normal_tensor(&[h, w, c], 0.0, 1.0)
                    .unwrap();
                let fast = rfft2(&grid).unwrap();
                let slow = dft2_oracle(&grid).unwrap();
                for i in 0..fast.coeffs.numel() {
                    assert!((fast.coeffs.re[i] - slow.coeffs.re[i]).abs() < 1e-12);
                    assert!((fast.coeffs.im[i] - slow.coeffs.im[i]).abs() < 1e-12);
                }
                let back = irfft2(&fast).unwrap();
                for (a, b) in grid.data().iter().zip(back.data()) {
                    assert!((a - b).abs() < 1e-12, "round trip {h}x{w}x{c}");
                }
                let spatial: f64 = grid.data().iter().map(|&v| v * v).sum();
                let freq = spectrum_energy(&fast) / (h * w) as f64;
                assert!(
                    (spatial - freq).abs() / spatial.abs().max(1e-12) < 1e-9,
                    "Parseval {h}x{w}x{c}"
                );
                checked += 1;
            }
        }
    }
    println!("[criterion 4] PASS fft oracle suite ({checked} size/channel combinations)");
}

#[test]
fn criterion_05_gradient_suite() {
    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    for kind in [MixerKind::Fn, MixerKind::Fgn, MixerKind::Fno, MixerKind::Wgn] {
        let err = verify::mixer_grad_error(kind, EPS).unwrap();
        assert!(err < TOL, "{} mixer rel err {err}", kind.name());
        println!("[criterion 5] {} block: rel err {err:.2e}", kind.name());
    }
    let err = verify::attention_grad_error(EPS).unwrap();
    assert!(err < TOL, "MHSA rel err {err}");
    println!("[criterion 5] MHSA block: rel err {err:.2e}");
    let err = verify::tiny_model_grad_error(EPS).unwrap();
    assert!(err < TOL, "end-to-end rel err {err}");
    println!("[criterion 5] 2-block model end to end: rel err {err:.2e}");
    println!("[criterion 5] PASS gradient suite");
}

#[test]
fn criterion_06_gate_identity() {
    let grid = Grid { h: 8, w: 8 };
    let c = 5;
    let x: Tensor<f64> = Rng::seeded(60).normal_tensor(&[grid.tokens(), c], 0.0, 1.0).unwrap();

    let mut tape = Tape::<f64>::new();
    let xi = tape.input(x.clone());
    let kr = tape.input(Tensor::filled(&[8, 5, c], 1.0));
    let ki = tape.input(Tensor::zeros(&[8, 5, c]));
    let fgn = spectral_gate_mix(&mut tape, xi, grid, kr, ki).unwrap();
    let mut max_err: f64 = 0.0;
    for (a, b) in x.data().iter().zip(tape.real(fgn).unwrap().data()) {
        max_err = max_err.max((a - b).abs());
    }
    assert!(max_err < 1e-12, "FGN identity residual {max_err}");
    println!("[criterion 6] FGN all-ones gate: max residual {max_err:.2e}");

    let ones = Tensor::filled(&[4, 4, c], 1.0);
    let g0 = tape.input(ones.clone());
    let g1 = tape.input(ones.clone());
    let g2 = tape.input(ones.clone());
    let g3 = tape.input(ones);
    let wgn = wavelet_gate_mix(&mut tape, xi, grid, [g0, g1, g2, g3]).unwrap();
    let mut max_err: f64 = 0.0;
    for (a, b) in x.data().iter().zip(tape.real(wgn).unwrap().data()) {
        max_err = max_err.max((a - b).abs());
    }
    assert!(max_err < 1e-12, "WGN identity residual {max_err}");
    println!("[criterion 6] WGN all-ones gates: max residual {max_err:.2e}");
    println!("[criterion 6] PASS gate identity");
}

/// Shared artifact for criteria 7 and 10: the trained alpha = 2 model on
/// the synthetic frequency task, plus the comparison alpha = 0 run.
struct SpectralAdvantage {
    top1_alpha2: f64,
    top1_alpha0: f64,
    out_dir: PathBuf,
}

fn spectral_advantage() -> &'static SpectralAdvantage {
    static ARTIFACT: OnceLock<SpectralAdvantage> = OnceLock::new();
    ARTIFACT.get_or_init(|| {
        let seed = 11u64;
        let mut data_rng = Rng::new(seed, 0x6461_7461);
        let train = gen_frequency_dataset::<f32>(&mut data_rng, 2048, 4, 32, 0.3).unwrap();
        let test = gen_frequency_dataset::<f32>(&mut data_rng, 512, 4, 32, 0.3).unwrap();
        let hyper = TrainHyper {
            total_epochs: 20,
            warmup_epochs: 2,
            batch_size: 64,
            stop_at_top1: Some(0.95),
            ..TrainHyper::default()
        };
        let out_dir = temp_dir("spectral_advantage");

        let cfg2 = config_by_name("spectformer-tiny-toy").unwrap();
        assert_eq!((cfg2.layers, cfg2.alpha), (4, 2));
        let run2 = fit(&cfg2, &train, &test, &hyper, seed, Some(&out_dir), None).unwrap();

        let mut cfg0 = cfg2.clone();
        cfg0.alpha = 0;
        let run0 = fit(&cfg0, &train, &test, &hyper, seed, None, None).unwrap();

        SpectralAdvantage {
            top1_alpha2: run2.summary.final_top1,
            top1_alpha0: run0.summary.final_top1,
            out_dir,
        }
    })
}

#[test]
fn criterion_07_spectral_advantage() {
    let art = spectral_advantage();
    assert!(
        art.top1_alpha2 >= 0.95,
        "alpha=2 top-1 {:.4} below 0.95",
        art.top1_alpha2
    );
    println!(
        "[criterion 7] alpha=2 top-1 {:.4} (gate 0.95); alpha=0 same-budget top-1 {:.4} (reported, not gated)",
        art.top1_alpha2, art.top1_alpha0
    );
    println!("[criterion 7] PASS spectral advantage");
}

#[test]
fn criterion_08_mnist_gate() {
    let dir = Path::new("../../data/mnist");
    assert!(
        dir.exists(),
        "MNIST IDX files expected under data/mnist (see README)"
    );
    let train = spectformer_core::data::load_mnist_dir::<f32>(dir, true, Some(32)).unwrap();
    let test = spectformer_core::data::load_mnist_dir::<f32>(dir, false, Some(32)).unwrap();
    let cfg = config_by_name("spectformer-mnist-toy").unwrap();
    assert_eq!((cfg.layers, cfg.alpha, cfg.dim, cfg.patch), (4, 2, 64, 4));
    let hyper = TrainHyper {
        total_epochs: 10,
        warmup_epochs: 1,
        batch_size: 64,
        stop_at_top1: Some(0.97),
        ..TrainHyper::default()
    };
    let out = fit(&cfg, &train, &test, &hyper, 5, None, None).unwrap();
    assert!(
        out.summary.final_top1 >= 0.97,
        "MNIST top-1 {:.4} below 0.97 after {} epochs",
        out.summary.final_top1,
        out.summary.epochs_run
    );
    println!(
        "[criterion 8] PASS mnist gate: top-1 {:.4} after {} epochs",
        out.summary.final_top1, out.summary.epochs_run
    );
}

#[test]
fn criterion_09_determinism_and_resume() {
    // byte-identical summary.json across identical seeded invocations
    let bin = env!("CARGO_BIN_EXE_spectformer");
    let (dir_a, dir_b) = (temp_dir("det_a"), temp_dir("det_b"));
    for dir in [&dir_a, &dir_b] {
        let status = Command::new(bin)
            .args([
                "train",
                "--model",
                "spectformer-tiny-toy",
                "--data",
                "synth",
                "--seed",
                "1",
                "--out",
                dir.to_str().unwrap(),
                "--set",
                "data.n_train=256",
                "--set",
                "data.n_test=64",
                "--set",
                "train.total_epochs=3",
                "--set",
                "train.warmup_epochs=1",
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir_a.join("summary.json")).unwrap();
    let b = std::fs::read(dir_b.join("summary.json")).unwrap();
    assert_eq!(a, b, "summary.json differs between identical runs");
    println!("[criterion 9] identical seeds: summary.json byte-identical");

    // interrupt at epoch 5 of 10 and resume: loss trace matches bit for bit
    let mut cfg = ModelConfig::vanilla(2, 1, 16, 2, 4, 16, 2);
    cfg.in_channels = 1;
    cfg.expansion = 2;
    let mut rng = Rng::seeded(90);
    let train = gen_frequency_dataset::<f32>(&mut rng, 128, 2, 16, 0.2).unwrap();
    let test = gen_frequency_dataset::<f32>(&mut rng, 64, 2, 16, 0.2).unwrap();
    let mut hyper = TrainHyper {
        total_epochs: 10,
        warmup_epochs: 1,
        batch_size: 32,
        ..TrainHyper::default()
    };
    let full = fit(&cfg, &train, &test, &hyper, 3, None, None).unwrap();

    let ckdir = temp_dir("resume");
    hyper.stop_after_epochs = Some(5);
    let half = fit(&cfg, &train, &test, &hyper, 3, Some(&ckdir), None).unwrap();
    assert_eq!(half.report.records.len(), 5);
    let ck = load_checkpoint::<f32>(&ckdir.join("ckpt-final.spfm")).unwrap();
    hyper.stop_after_epochs = None;
    let resumed = fit(&cfg, &train, &test, &hyper, 3, None, Some(ck)).unwrap();

    let mut combined = half.report.records.clone();
    combined.extend(resumed.report.records.clone());
    assert_eq!(combined, full.report.records, "resumed trace diverged");
    println!("[criterion 9] PASS determinism + checkpoint resume (5 of 10 epochs)");
}

#[test]
fn criterion_10_filter_dump_contract() {
    let art = spectral_advantage();
    let ckpt = art.out_dir.join("ckpt-final.spfm");
    let filters_dir = temp_dir("filters");
    let status = Command::new(env!("CARGO_BIN_EXE_spectformer"))
        .args([
            "dump-filters",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--out",
            filters_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    // tiny-toy has 2 spectral layers at dim 48: exactly 24 files each
    for layer in 0..2 {
        let mut count = 0;
        for filter in 0..24 {
            let path = filters_dir.join(format!("layer{layer}_filter{filter}.pgm"));
            assert!(path.exists(), "missing {}", path.display());
            let bytes = std::fs::read(&path).unwrap();
            // half-spectrum width 17... grid 8x8 -> w/2+1 = 5 columns, 8 rows
            assert!(bytes.starts_with(b"P5\n5 8\n255\n"), "bad header in {}", path.display());
            assert_eq!(bytes.len(), "P5\n5 8\n255\n".len() + 40);
            let img = read_pnm(&path).unwrap();
            assert_eq!((img.width, img.height), (5, 8));
            count += 1;
        }
        assert_eq!(count, 24);
        assert!(
            !filters_dir.join(format!("layer{layer}_filter24.pgm")).exists(),
            "more than 24 filters dumped"
        );
    }
    assert!(filters_dir.join("index.json").exists());
    println!("[criterion 10] PASS filter dump contract (2 layers x 24 valid PGM files)");
}

#[test]
fn criterion_11_hierarchical_shape_contract() {
    let mut cfg = config_by_name("spectformer-h-s").unwrap();
    // stage 3 of the published table: 10 heads, 320 channels, 6 blocks
    let stage3 = cfg.stages[2];
    assert_eq!(stage3.heads, 10);
    assert_eq!(stage3.channels, 320);
    assert_eq!(stage3.spectral + stage3.attention, 6);

    cfg.resolution = 64;
    cfg.num_classes = 10;
    let plan = make_plan(&cfg).unwrap();
    let sides: Vec<usize> = plan.stages.iter().map(|s| s.grid.h).collect();
    assert_eq!(sides, vec![16, 8, 4, 2], "stage grids must be res/4 .. res/32");

    let mut rng = Rng::seeded(110);
    let (store, plan) = build_model::<f32>(&cfg, &mut rng).unwrap();
    let images: Tensor<f32> = Rng::seeded(111).normal_tensor(&[1, 64, 64, 3], 0.0, 1.0).unwrap();
    let logits = forward(&plan, &store, &images).unwrap();
    assert_eq!(logits.shape(), &[1, 10]);
    assert!(logits.all_finite());
    println!("[criterion 11] PASS hierarchical shape contract (grids {sides:?}, forward ok)");
}

#[test]
fn runconfig_round_trips_for_cli_surfaces() {
    // the config file interface: full tree and bare model section both load
    let run = RunConfig::resolve("spectformer-tiny-toy", None, None).unwrap();
    let dir = temp_dir("runconfig");
    let full = dir.join("full.json");
    std::fs::write(&full, serde_json::to_vec_pretty(&run).unwrap()).unwrap();
    let loaded = RunConfig::resolve(full.to_str().unwrap(), None, None).unwrap();
    assert_eq!(loaded, run);

    let bare = dir.join("model.json");
    std::fs::write(&bare, serde_json::to_vec_pretty(&run.model).unwrap()).unwrap();
    let loaded = RunConfig::resolve(bare.to_str().unwrap(), None, None).unwrap();
    assert_eq!(loaded.model, run.model);
}
