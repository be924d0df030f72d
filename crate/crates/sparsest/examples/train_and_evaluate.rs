//! Minimal library walkthrough: generate a tiny bouncing-blob dataset,
//! train a sparse model, and report rollout MSE plus the per-unit cost.
//!
//! Run with: `cargo run --release -p sparsest --example train_and_evaluate`

use sparsest::cell::CellKind;
use sparsest::data::{generate_blobs, BlobConfig};
use sparsest::rng::RngState;
use sparsest::train::{evaluate_prediction, train_prediction, TrainableModel, TrainConfig};

fn main() -> sparsest::Result<()> {
    let data = generate_blobs(&BlobConfig {
        height: 12,
        width: 12,
        frames: 12,
        train_sequences: 40,
        val_sequences: 8,
        test_sequences: 8,
        speed: (0.3, 0.8),
        seed: 7,
        ..Default::default()
    })?;

    let mut rng = RngState::new(7);
    let mut model = TrainableModel::random(CellKind::Sparsest, 1, &[6, 6], 3, &mut rng)?;
    let cfg = TrainConfig {
        epochs: 6,
        batch_size: 4,
        lr: 3e-3,
        w_mse: 0.7,
        mu: 0.01,
        seed: 7,
        ..Default::default()
    };
    let report = train_prediction(&mut model, &data.train, &data.val, &cfg)?;
    println!(
        "best epoch {} | val mse {:.5} | val occupancy {:.3}",
        report.best_epoch, report.final_val.mse, report.final_val.occupancy
    );

    let inference = model.to_sequence_model()?;
    let (test_mse, cost) = evaluate_prediction(&inference, &data.test, 6, 6)?;
    println!("rollout test mse {test_mse:.5}");
    for unit in &cost.units {
        println!(
            "unit {}: D_x {:.1} D_h {:.1} flops {} -> {:.0} (ar {:.3})",
            unit.unit,
            unit.d_x,
            unit.d_h,
            unit.flop_dense,
            unit.flop_sparse,
            unit.ar.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
