//! Compression and simulation toolkit for polarized ReRAM crossbar
//! accelerators.
//!
//! Resistive crossbars compute matrix-vector products in the analog domain,
//! but three costs dominate real designs: every signed weight burns a
//! differential column pair, every input bit is streamed serially through the
//! DACs, and the ADCs account for most of the power. This crate implements a
//! co-designed answer — train the network so its weights already fit the
//! hardware, then exploit that shape at simulation time:
//!
//! * **Structured pruning** removes whole filters and filter positions, so
//!   entire crossbar rows and columns disappear instead of scattered cells.
//! * **Fragment polarization** forces every aligned group of `m` weights in a
//!   column to share one sign, retiring the negative half of each
//!   differential pair (2x density) at the cost of one sign bit per fragment.
//! * **Quantization** snaps weights to a uniform signed grid so each value
//!   fits a short stack of multi-bit cells.
//! * **Zero-skipping** stops the bit-serial input stream at each fragment's
//!   effective input cycle (EIC) — the highest nonzero bit over its `m`
//!   activations — shortening waves without changing any output bit.
//!
//! All three weight constraints are imposed jointly by an ADMM loop
//! ([`compress::compress_model`]): each phase alternates SGD on an augmented
//! loss with projections onto the constraint set, then hard-projects before
//! the next phase. The result maps onto explicit crossbar tiles
//! ([`map::map_model`]), simulates bit-for-bit against an integer oracle
//! ([`sim`]), and feeds an analytic performance model ([`perf`]) that
//! decomposes the end-to-end speedup into per-optimization factors.
//!
//! # Modules
//!
//! | Module | What it does |
//! |---|---|
//! | [`model`] | Tiny CNN/MLP training stack: tensors, synthetic datasets, SGD |
//! | [`compress`] | ADMM loop, projection operators, fragment layouts, constraint verification |
//! | [`map`] | Weight-to-crossbar mapping, cell slicing, array-reduction accounting |
//! | [`sim`] | Bit-serial functional simulation, requantization, device variation |
//! | [`zeroskip`] | Effective-input-cycle logic and skip statistics |
//! | [`perf`] | Cycle/energy/area model, speedup decomposition, cross-design tables |
//! | [`pipeline`] | Five-stage artifact pipeline with content-addressed, hash-stable outputs |
//! | [`container`] | Versioned JSON artifact envelope with integrity hashes |
//! | [`rng`] | Deterministic, purpose-keyed random streams |
//!
//! # Runnable examples
//!
//! Each major capability has a self-contained example under `examples/`;
//! run one with `cargo run --release --example <name>`:
//!
//! * `compress_mlp` — ADMM compression of a dense classifier, phase by phase.
//! * `compress_cnn` — heterogeneous per-layer compression of a small CNN.
//! * `map_model` — crossbar mapping, cell layout, and reduction accounting.
//! * `simulate_inference` — bit-serial inference vs the compressed float model.
//! * `zero_skip_stats` — EIC histograms and savings across fragment sizes.
//! * `device_variation` — accuracy under lognormal conductance spread.
//! * `performance_report` — fps/energy/area report with speedup factors.
//! * `experiment_pipeline` — the five-stage pipeline, hash-stable end to end.
//!
//! The same flows are scriptable through the `polarsim` binary
//! (`compress`, `map`, `simulate`, `eic`, `report`, and `selftest`
//! subcommands), which exchanges versioned JSON artifacts between stages.
//!
//! # Determinism
//!
//! Every stochastic choice — dataset synthesis, weight init, minibatch
//! shuffling, device perturbation — draws from a stream keyed by `(seed,
//! purpose, indices)` via [`rng::stream`]. Identical configs therefore
//! produce byte-identical artifacts, and the pipeline's content-addressed
//! output directories make that property observable (and testable).

pub mod compress;
pub mod container;
pub mod error;
pub mod map;
pub mod model;
pub mod perf;
pub mod pipeline;
pub mod rng;
pub mod sim;
pub mod zeroskip;

pub use error::{Error, Result};
