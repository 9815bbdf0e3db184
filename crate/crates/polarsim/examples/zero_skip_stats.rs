//! What input zero-skipping saves, and why fragment size matters.
//!
//! A fragment streams only as many input bit planes as its widest member
//! needs (its effective input cycles, EIC), so smaller fragments skip more.
//! This example compresses the same network at fragment sizes 4, 8, and 16,
//! simulates with skipping on and off, and shows that outputs are identical
//! while the cycle counts are not: skipping changes *when* bits stream,
//! never *what* is accumulated.
//!
//! ```sh
//! cargo run --example zero_skip_stats
//! ```

use std::collections::BTreeMap;

use polarsim::compress::{compress_model, CompressionConfig, LayerCompression};
use polarsim::map::{map_model, CrossbarSpec};
use polarsim::model::data::{generate, DatasetSpec};
use polarsim::model::train::train_plain;
use polarsim::model::ModelSpec;
use polarsim::pipeline::build_configured_model;
use polarsim::sim::{simulate_accuracy, Perturbation, SimOptions};
use polarsim::zeroskip::EicStats;

fn main() -> polarsim::Result<()> {
    println!("fragment size | avg EIC | cycles skipped | fragment cycles (skip / full)");
    let mut previous_avg = 0.0f64;
    for m in [4usize, 8, 16] {
        let config = CompressionConfig {
            layers: BTreeMap::from([(
                "fc1".to_string(),
                LayerCompression { alpha: 0.5, beta: 0.5, rho: 0.3 },
            )]),
            fragment_size: m,
            quant_bits: 8,
            epochs: 2,
            sign_update_interval: 1,
            lr: 0.05,
            seed: 17,
            batch_size: 32,
            pretrain_epochs: 4,
            model: ModelSpec::Mlp { hidden: 32 },
            dataset: DatasetSpec {
                classes: 6,
                channels: 1,
                height: 8,
                width: 8,
                train: 240,
                test: 60,
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

        let skip = SimOptions { zero_skip: true, ..SimOptions::default() };
        let full = SimOptions { zero_skip: false, ..skip };
        let ideal = Perturbation::ideal();
        let with_skip = simulate_accuracy(&model, &mapped, &data.test, None, &ideal, &skip)?;
        let without = simulate_accuracy(&model, &mapped, &data.test, None, &ideal, &full)?;

        // skipping is invisible to the results...
        assert_eq!(with_skip.accuracy, without.accuracy);

        // ...and the cycles it saves are exactly sum(input_bits - EIC)
        let mut eic = EicStats::new(skip.requant.bits);
        let mut skip_cycles = 0u64;
        let mut full_cycles = 0u64;
        for (a, b) in with_skip.stats.layers.iter().zip(&without.stats.layers) {
            eic.merge(&a.eic);
            skip_cycles += a.fragment_cycles;
            full_cycles += b.fragment_cycles;
        }
        let expected_saved =
            u64::from(skip.requant.bits) * eic.fragments - eic.total_eic;
        assert_eq!(full_cycles - skip_cycles, expected_saved);

        println!(
            "{m:>13} | {:>7.3} | {:>13.1}% | {skip_cycles:>10} / {full_cycles}",
            eic.avg_eic(),
            100.0 * eic.savings()
        );
        assert!(eic.avg_eic() >= previous_avg, "EIC must not shrink as fragments grow");
        previous_avg = eic.avg_eic();
    }
    println!("\nlarger fragments take the maximum over more inputs, so their EIC");
    println!("rises toward the full bit width and the savings shrink.");
    Ok(())
}
