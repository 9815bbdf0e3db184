//! Placing compressed weights onto fixed-size crossbar arrays.
//!
//! Maps a compressed network onto 128x128 arrays with 2-bit cells and shows
//! where the array-count reduction comes from: pruning shrinks the weight
//! matrix, 8-bit quantization cuts the per-weight cell slices from 16 to 4,
//! and per-fragment signs retire the second (differential) column the dense
//! baseline needs. The mapping is exact — the example reconstructs every
//! weight from the cell codes and compares bit levels.
//!
//! ```sh
//! cargo run --example map_model
//! ```

use std::collections::BTreeMap;

use polarsim::compress::{compress_model, CompressionConfig, LayerCompression};
use polarsim::map::{map_model, CrossbarSpec};
use polarsim::model::data::{generate, DatasetSpec};
use polarsim::model::train::train_plain;
use polarsim::model::ModelSpec;
use polarsim::pipeline::build_configured_model;

fn main() -> polarsim::Result<()> {
    let config = CompressionConfig {
        layers: BTreeMap::from([(
            "fc1".to_string(),
            LayerCompression { alpha: 0.5, beta: 0.5, rho: 0.3 },
        )]),
        fragment_size: 8,
        quant_bits: 8,
        epochs: 3,
        sign_update_interval: 1,
        lr: 0.05,
        seed: 5,
        batch_size: 32,
        pretrain_epochs: 4,
        model: ModelSpec::Mlp { hidden: 32 },
        dataset: DatasetSpec {
            classes: 8,
            channels: 1,
            height: 8,
            width: 8,
            train: 320,
            test: 96,
            ..DatasetSpec::default()
        },
        ..CompressionConfig::default()
    };
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
    let outcome = compress_model(&mut model, &data.train, &config, None)?;

    let xb = CrossbarSpec::default();
    let mapped = map_model(&model, &outcome.layers, &xb)?;
    println!(
        "array geometry: {}x{} cells, {} bits per cell\n",
        xb.rows, xb.cols, xb.cell_bits
    );

    println!("layer  view        physical     slices  tiles    arrays  baseline  reduction");
    let mut baseline_total = 0usize;
    let mut compressed_total = 0usize;
    for ml in &mapped.layers {
        let r = ml.reduction(&xb)?;
        baseline_total += r.baseline_crossbars;
        compressed_total += r.compressed_crossbars;
        println!(
            "{:<6} {:>4}x{:<6} {:>4}x{:<6} {:>5}  {:>2}x{:<3} {:>8} {:>9} {:>9.2}x",
            ml.name,
            ml.full_rows,
            ml.full_cols,
            ml.padded_rows,
            ml.layout.kept_cols.len(),
            ml.slices,
            ml.plan.row_tiles,
            ml.plan.col_tiles,
            r.compressed_crossbars,
            r.baseline_crossbars,
            r.reduction
        );
    }
    println!(
        "total{:>48} {:>9} {:>9.2}x",
        compressed_total,
        baseline_total,
        baseline_total as f64 / compressed_total as f64
    );

    // the mapping is exact: cells + signs + scale reproduce every weight
    for (ml, meta) in mapped.layers.iter().zip(&outcome.layers) {
        let rebuilt = ml.reconstruct_view();
        let view = match &model.layers[meta.layer_index] {
            polarsim::model::Layer::Conv { weights, .. }
            | polarsim::model::Layer::Dense { weights, .. } => weights.to_view(),
            _ => unreachable!(),
        };
        for r in 0..view.rows() {
            for c in 0..view.cols() {
                assert_eq!(view.get(r, c), rebuilt.get(r, c), "{} ({r},{c})", ml.name);
            }
        }
        println!("{}: reconstructed {} weights exactly", ml.name, view.rows() * view.cols());
    }
    Ok(())
}
