//! End-to-end performance reports for fragment sizes 4, 8, and 16.
//!
//! For each fragment size this compresses a small network, maps it, runs the
//! bit-serial simulator to collect activity statistics, and rolls everything
//! up into a run report: latency, energy, throughput, and a speedup
//! decomposition against the isaac baseline. It finishes with the published
//! cross-design table, whose rows are carried constants rather than
//! measurements.
//!
//! ```sh
//! cargo run --example performance_report
//! ```

use std::collections::BTreeMap;

use polarsim::compress::{compress_model, CompressionConfig, LayerCompression};
use polarsim::map::{map_model, CrossbarSpec};
use polarsim::model::data::{generate, DatasetSpec};
use polarsim::model::train::train_plain;
use polarsim::model::ModelSpec;
use polarsim::perf::{
    pooling_flags, published_throughput_table, sim_report, speedup_compare, HardwareSpec,
    NetworkWorkload, OptimizationToggles, PerfConfig,
};
use polarsim::pipeline::build_configured_model;
use polarsim::sim::{simulate_accuracy, Perturbation, SimOptions};

fn main() -> polarsim::Result<()> {
    for m in [4u32, 8, 16] {
        let config = CompressionConfig {
            layers: BTreeMap::from([(
                "fc1".to_string(),
                LayerCompression { alpha: 0.5, beta: 0.5, rho: 0.3 },
            )]),
            fragment_size: m as usize,
            quant_bits: 8,
            epochs: 8,
            sign_update_interval: 1,
            lr: 0.05,
            seed: 41,
            batch_size: 32,
            pretrain_epochs: 4,
            model: ModelSpec::Mlp { hidden: 32 },
            dataset: DatasetSpec {
                classes: 6,
                channels: 1,
                height: 8,
                width: 8,
                train: 300,
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
        let run = simulate_accuracy(
            &model,
            &mapped,
            &data.test,
            None,
            &Perturbation::ideal(),
            &SimOptions::default(),
        )?;

        let hw = HardwareSpec::polarized(m)?;
        let optimized = PerfConfig { hardware: hw.clone(), toggles: OptimizationToggles::ALL };
        let baseline =
            PerfConfig { hardware: HardwareSpec::isaac(), toggles: OptimizationToggles::NONE };
        let workload = NetworkWorkload::from_run(&mapped, &run.stats, run.samples as u64)?;
        let speedup = speedup_compare(&baseline, &optimized, &workload);
        let report = sim_report(
            &mapped,
            &run.stats,
            &pooling_flags(&model),
            &hw,
            run.samples as u64,
            Some(speedup),
        )?;

        println!("== {} ==", report.design);
        println!("  frames            {}", report.frames);
        println!("  accuracy          {:.1}%", 100.0 * run.accuracy);
        println!("  total cycles      {}", report.total_cycles);
        println!("  frame latency     {:.3} us", 1e6 * report.frame_latency_s);
        println!("  fps               {:.0}", report.fps);
        println!("  energy            {:.3} uJ", 1e6 * report.energy.total_j());
        println!("  mean power        {:.3} W", report.power_w);
        println!("  allocated area    {:.3} mm2", report.area_mm2);
        println!("  GOPs/s            {:.3}", report.throughput.gops_per_s);
        println!("  GOPs/(s*mm2)      {:.3}", report.throughput.gops_per_s_mm2);
        println!("  GOPs/W            {:.3}", report.throughput.gops_per_w);
        let s = report.speedup.as_ref().expect("comparison requested above");
        println!(
            "  speedup vs {}: {:.2}x = pruning {:.2} * quant {:.2} * polar {:.2} * skip {:.2} * hw {:.2}",
            s.baseline, s.total, s.pruning, s.quantization, s.polarization, s.zero_skip, s.hardware
        );
        let product = s.pruning * s.quantization * s.polarization * s.zero_skip * s.hardware;
        assert!((s.total - product).abs() <= 1e-9 * product);
        println!();
    }

    println!("published cross-design table (normalized to isaac):");
    println!("{:<44} {:>14} {:>10}  carried", "design", "GOPs/(s*mm2)", "GOPs/W");
    for row in published_throughput_table() {
        println!(
            "{:<44} {:>14.2} {:>10.2}  {}{}",
            row.design,
            row.gops_per_s_mm2,
            row.gops_per_w,
            row.constant_driven,
            if row.note.is_empty() { String::new() } else { format!("  ({})", row.note) }
        );
    }
    Ok(())
}
