use std::path::Path;
use spectformer_core::data::load_mnist_dir;
use spectformer_core::model::config::config_by_name;
use spectformer_core::training::{fit, TrainHyper};

#[test]
#[ignore]
fn mnist_epochs_to_97() {
    let dir = Path::new("../../data/mnist");
    let t0 = std::time::Instant::now();
    let train = load_mnist_dir::<f32>(dir, true, Some(32)).unwrap();
    let test = load_mnist_dir::<f32>(dir, false, Some(32)).unwrap();
    println!("loaded {} train / {} test in {:.1}s", train.len(), test.len(), t0.elapsed().as_secs_f64());
    let cfg = config_by_name("spectformer-mnist-toy").unwrap();
    let hyper = TrainHyper {
        total_epochs: 10,
        warmup_epochs: 1,
        batch_size: 64,
        stop_at_top1: Some(0.97),
        ..TrainHyper::default()
    };
    let out = fit(&cfg, &train, &test, &hyper, 5, None, None).unwrap();
    for r in &out.report.records {
        println!(
            "epoch {} loss {:.4} top1 {:.4} ({:.0}s)",
            r.epoch, r.train_loss, r.val_top1, t0.elapsed().as_secs_f64()
        );
    }
}
