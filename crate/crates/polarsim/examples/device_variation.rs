//! Classification accuracy under lognormal conductance variation.
//!
//! Programmed cell conductances vary from device to device. The simulator
//! models this by scaling every cell with an independent lognormal factor
//! `exp(sigma * z)`. This example sweeps `sigma` and reports the mean
//! accuracy with a 95% confidence interval over independently seeded trials
//! (run in parallel). A fixed seed always reproduces the same factors, so
//! the sweep itself is deterministic.
//!
//! ```sh
//! cargo run --example device_variation
//! ```

use std::collections::BTreeMap;

use rayon::prelude::*;

use polarsim::compress::{compress_model, CompressionConfig, LayerCompression};
use polarsim::map::{map_model, CrossbarSpec};
use polarsim::model::data::{generate, DatasetSpec};
use polarsim::model::train::train_plain;
use polarsim::model::ModelSpec;
use polarsim::pipeline::build_configured_model;
use polarsim::sim::{perturb, simulate_accuracy, Perturbation, SimOptions};

const TRIALS: u64 = 16;

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
        seed: 29,
        batch_size: 32,
        pretrain_epochs: 8,
        model: ModelSpec::Mlp { hidden: 24 },
        dataset: DatasetSpec {
            classes: 6,
            channels: 1,
            height: 8,
            width: 8,
            train: 360,
            test: 90,
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
    let mapped = map_model(&model, &outcome.layers, &CrossbarSpec::default())?;
    let opts = SimOptions::default();

    let ideal = simulate_accuracy(&model, &mapped, &data.test, None, &Perturbation::ideal(), &opts)?
        .accuracy;
    println!("ideal devices: {:.1}% over {} images", 100.0 * ideal, data.test.len());
    println!("\nsigma   mean accuracy   95% CI ({TRIALS} trials)");

    for sigma in [0.05f64, 0.1, 0.2, 0.3] {
        let accuracies: Vec<f64> = (0..TRIALS)
            .into_par_iter()
            .map(|trial| {
                let factors = perturb(&mapped, sigma, 1000 + trial);
                simulate_accuracy(&model, &mapped, &data.test, None, &factors, &opts)
                    .map(|run| run.accuracy)
            })
            .collect::<polarsim::Result<_>>()?;

        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let half_width = 1.96 * (var / n).sqrt();
        println!(
            "{sigma:<7} {:>8.1}%       +/- {:.1} points",
            100.0 * mean,
            100.0 * half_width
        );

        // identical seeds give identical factors, and therefore identical runs
        let a = simulate_accuracy(&model, &mapped, &data.test, None, &perturb(&mapped, sigma, 1), &opts)?;
        let b = simulate_accuracy(&model, &mapped, &data.test, None, &perturb(&mapped, sigma, 1), &opts)?;
        assert_eq!(a.accuracy, b.accuracy);
    }
    Ok(())
}
