//! Three-phase compression of a small dense network.
//!
//! Pretrains a two-layer MLP on a synthetic image task, then runs the
//! prune → polarize → quantize schedule and verifies that the final weights
//! satisfy every declared constraint bit-exactly. Prints the per-phase
//! training curves and the accuracy cost of compression.
//!
//! ```sh
//! cargo run --example compress_mlp
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
        // prune the hidden layer to half its filters and positions; the
        // classifier head (absent here) keeps everything by default. The
        // penalty weight is strong enough that retraining actually reaches
        // the constraint set before the hard projection lands.
        layers: BTreeMap::from([(
            "fc1".to_string(),
            LayerCompression { alpha: 0.5, beta: 0.5, rho: 0.3 },
        )]),
        fragment_size: 4,
        quant_bits: 8,
        epochs: 24,
        sign_update_interval: 2,
        lr: 0.05,
        seed: 7,
        batch_size: 32,
        pretrain_epochs: 8,
        model: ModelSpec::Mlp { hidden: 24 },
        dataset: DatasetSpec {
            classes: 8,
            channels: 1,
            height: 8,
            width: 8,
            train: 480,
            test: 160,
            ..DatasetSpec::default()
        },
        ..CompressionConfig::default()
    };
    config.validate()?;

    let data = generate(&config.dataset, config.seed);
    let mut model = build_configured_model(&config)?;

    let pretrain = train_plain(
        &mut model,
        &data.train,
        config.pretrain_epochs,
        config.lr as f32,
        config.batch_size,
        config.seed,
    )?;
    let dense_accuracy = model.accuracy(&data.test)?;
    println!(
        "pretraining: {} epochs, loss {:.4} -> {:.4}, test accuracy {:.1}%",
        pretrain.epoch_losses.len(),
        pretrain.epoch_losses.first().unwrap(),
        pretrain.epoch_losses.last().unwrap(),
        100.0 * dense_accuracy
    );

    let outcome = compress_model(&mut model, &data.train, &config, None)?;
    for phase in &outcome.phases {
        println!("\nphase {:?} ({} sign updates)", phase.phase, phase.sign_updates);
        println!("  epoch       loss    penalty   residual");
        for (e, ((loss, penalty), residual)) in phase
            .epoch_losses
            .iter()
            .zip(&phase.penalties)
            .zip(&phase.residuals)
            .enumerate()
        {
            println!("  {e:>5} {loss:>10.4} {penalty:>10.4} {residual:>10.4}");
        }
    }

    let compressed_accuracy = model.accuracy(&data.test)?;
    let report = verify_constraints(&model, &outcome.layers)?;
    println!(
        "\ncompressed test accuracy {:.1}% ({:+.1} points vs dense)",
        100.0 * compressed_accuracy,
        100.0 * (compressed_accuracy - dense_accuracy)
    );
    println!("constraint violations: {}", report.violations.len());
    for check in &report.layers {
        println!(
            "  {:<4} {}x{} -> kept {}x{}, {:.1}% nonzero, {} magnitude levels in use",
            check.name,
            check.rows,
            check.cols,
            check.kept_rows,
            check.kept_cols,
            100.0 * check.nonzero_fraction,
            check.quant_levels_used
        );
    }
    report.into_result()?;
    Ok(())
}
