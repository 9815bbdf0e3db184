//! Bit-serial inference on the mapped model.
//!
//! Runs the full flow in memory — compress, map, simulate — and compares the
//! cycle-accurate bit-serial accuracy against the compressed float model.
//! With ideal devices and a generous ADC the only differences are activation
//! requantization and ADC clamping, so the two stay close. Per-layer
//! counters show where the cycles and conversions go.
//!
//! ```sh
//! cargo run --example simulate_inference
//! ```

use std::collections::BTreeMap;

use polarsim::compress::{compress_model, CompressionConfig, LayerCompression};
use polarsim::map::{map_model, CrossbarSpec};
use polarsim::model::data::{generate, DatasetSpec};
use polarsim::model::train::train_plain;
use polarsim::model::ModelSpec;
use polarsim::pipeline::build_configured_model;
use polarsim::sim::{simulate_accuracy, Perturbation, SimOptions};

fn main() -> polarsim::Result<()> {
    let config = CompressionConfig {
        layers: BTreeMap::from([(
            "fc1".to_string(),
            LayerCompression { alpha: 0.5, beta: 0.5, rho: 0.3 },
        )]),
        fragment_size: 8,
        quant_bits: 8,
        epochs: 8,
        sign_update_interval: 1,
        lr: 0.05,
        seed: 13,
        batch_size: 32,
        pretrain_epochs: 5,
        model: ModelSpec::Mlp { hidden: 24 },
        dataset: DatasetSpec {
            classes: 6,
            channels: 1,
            height: 8,
            width: 8,
            train: 360,
            test: 120,
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
    let float_accuracy = model.accuracy(&data.test)?;
    let mapped = map_model(&model, &outcome.layers, &CrossbarSpec::default())?;

    let opts = SimOptions::default();
    let run = simulate_accuracy(&model, &mapped, &data.test, None, &Perturbation::ideal(), &opts)?;

    println!(
        "simulated {} images: bit-serial accuracy {:.1}%, compressed float accuracy {:.1}%",
        run.samples,
        100.0 * run.accuracy,
        100.0 * float_accuracy
    );
    println!(
        "({}-bit inputs, {}-bit ADC, zero-skipping {})\n",
        opts.requant.bits,
        opts.adc_bits,
        if opts.zero_skip { "on" } else { "off" }
    );

    println!("layer    waves  wave cycles  conversions  saturated  avg EIC  cycles skipped");
    for ls in &run.stats.layers {
        let saturation = if ls.adc_samples > 0 {
            ls.saturated_samples as f64 / ls.adc_samples as f64
        } else {
            0.0
        };
        println!(
            "{:<7} {:>6} {:>12} {:>12} {:>9.3}% {:>8.2} {:>14.1}%",
            ls.name,
            ls.waves,
            ls.wave_cycles,
            ls.adc_samples,
            100.0 * saturation,
            ls.eic.avg_eic(),
            100.0 * ls.eic.savings()
        );
    }
    Ok(())
}
