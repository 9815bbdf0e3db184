//! The staged artifact pipeline: manifests, checksums, and determinism.
//!
//! Runs all five stages (compress, map, simulate, eic, report) into a
//! temporary directory through the same entry point the command-line tool
//! uses, prints each stage's manifest, then reruns the whole pipeline into a
//! second directory and checks that every artifact hash matches — the
//! pipeline is bit-reproducible from the seed. It ends by demonstrating the
//! stage-order guard: a stage whose upstream artifacts are missing refuses
//! to run.
//!
//! ```sh
//! cargo run --example experiment_pipeline
//! ```

use std::collections::BTreeMap;

use polarsim::compress::{CompressionConfig, LayerCompression};
use polarsim::model::data::DatasetSpec;
use polarsim::model::ModelSpec;
use polarsim::pipeline::{run_stage, ExperimentConfig, Stage};
use polarsim::sim::SimOptions;

fn main() -> polarsim::Result<()> {
    let config = ExperimentConfig {
        compression: CompressionConfig {
            layers: BTreeMap::from([(
                "fc1".to_string(),
                LayerCompression { alpha: 0.5, beta: 0.5, rho: 0.3 },
            )]),
            fragment_size: 8,
            quant_bits: 8,
            epochs: 2,
            sign_update_interval: 1,
            lr: 0.05,
            seed: 33,
            batch_size: 32,
            pretrain_epochs: 3,
            model: ModelSpec::Mlp { hidden: 16 },
            dataset: DatasetSpec {
                classes: 4,
                channels: 1,
                height: 6,
                width: 6,
                train: 160,
                test: 40,
                ..DatasetSpec::default()
            },
            ..CompressionConfig::default()
        },
        sim: SimOptions { seed: 33, ..SimOptions::default() },
        eval_limit: Some(20),
        ..ExperimentConfig::default()
    };

    let root_a = tempfile::tempdir()?;
    let root_b = tempfile::tempdir()?;

    let mut hashes_a: BTreeMap<String, String> = BTreeMap::new();
    for stage in Stage::ALL {
        let outcome = run_stage(stage, &config, root_a.path())?;
        println!("stage {stage}  (config {})", outcome.manifest.config_hash);
        for (name, sha) in &outcome.manifest.outputs {
            println!("  {name:<16} sha256:{}", &sha[..16]);
        }
        hashes_a.extend(outcome.manifest.outputs.clone());
    }

    let mut hashes_b: BTreeMap<String, String> = BTreeMap::new();
    for stage in Stage::ALL {
        hashes_b.extend(run_stage(stage, &config, root_b.path())?.manifest.outputs);
    }
    assert_eq!(hashes_a, hashes_b);
    println!("\nrerun into a second directory: all {} artifact hashes identical", hashes_a.len());

    // A stage will not run until the stages it reads from have produced
    // their artifacts.
    let fresh = tempfile::tempdir()?;
    let err = run_stage(Stage::Map, &config, fresh.path()).unwrap_err();
    println!("\nmapping without compressed artifacts fails (exit {}):", err.exit_code());
    println!("  {err}");
    assert_eq!(err.exit_code(), 2);
    Ok(())
}
