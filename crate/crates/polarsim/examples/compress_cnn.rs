//! Per-layer compression knobs on a small convolutional network.
//!
//! Convolution layers tolerate aggressive structured pruning; the classifier
//! head usually does not. This example prunes the two conv layers to half
//! their filters and filter positions while the head keeps all of its
//! weights (it is still polarized and quantized), then compares accuracy
//! against the dense float baseline.
//!
//! ```sh
//! cargo run --example compress_cnn
//! ```

use std::collections::BTreeMap;

use polarsim::compress::{
    compress_model, verify_constraints, CompressionConfig, LayerCompression,
};
use polarsim::model::data::{generate, DatasetSpec};
use polarsim::model::train::train_plain;
use polarsim::model::ModelSpec;
use polarsim::pipeline::build_configured_model;

fn main() -> polarsim::Result<()> {
    let config = CompressionConfig {
        // the narrow first layer is fragile, so it keeps all its filters and
        // only drops rows; the wide middle layer is pruned on both axes; `fc`
        // is deliberately absent and the default keeps every row and column
        layers: BTreeMap::from([
            ("conv1".to_string(), LayerCompression { alpha: 1.0, beta: 0.5, rho: 0.3 }),
            ("conv2".to_string(), LayerCompression { alpha: 0.75, beta: 0.5, rho: 0.3 }),
        ]),
        fragment_size: 8,
        quant_bits: 8,
        epochs: 24,
        sign_update_interval: 2,
        lr: 0.05,
        seed: 21,
        batch_size: 32,
        pretrain_epochs: 6,
        model: ModelSpec::Cnn { conv1: 6, conv2: 12 },
        dataset: DatasetSpec {
            classes: 6,
            channels: 1,
            height: 12,
            width: 12,
            train: 360,
            test: 120,
            ..DatasetSpec::default()
        },
        ..CompressionConfig::default()
    };
    config.validate()?;

    let data = generate(&config.dataset, config.seed);
    let mut model = build_configured_model(&config)?;
    train_plain(
        &mut model,
        &data.train,
        config.pretrain_epochs,
        config.lr as f32,
        config.batch_size,
        config.seed,
    )?;
    let dense_accuracy = model.accuracy(&data.test)?;

    let outcome = compress_model(&mut model, &data.train, &config, None)?;
    let compressed_accuracy = model.accuracy(&data.test)?;
    let report = verify_constraints(&model, &outcome.layers)?;

    println!("layer   view        kept        weights surviving");
    for (meta, check) in outcome.layers.iter().zip(&report.layers) {
        let keep = (check.kept_rows * check.kept_cols) as f64 / (check.rows * check.cols) as f64;
        println!(
            "{:<7} {:>4}x{:<6} {:>4}x{:<6} {:>5.1}%   (alpha {}, beta {})",
            check.name, check.rows, check.cols, check.kept_rows, check.kept_cols,
            100.0 * keep, meta.alpha, meta.beta
        );
    }
    println!(
        "\ndense accuracy {:.1}%, compressed accuracy {:.1}% ({:+.1} points)",
        100.0 * dense_accuracy,
        100.0 * compressed_accuracy,
        100.0 * (compressed_accuracy - dense_accuracy)
    );
    println!("constraint violations: {}", report.violations.len());
    report.into_result()?;
    Ok(())
}
