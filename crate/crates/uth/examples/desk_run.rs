//! Desk-scale comparison of UTH, the rotation-invariance ablation and LSH on
//! an MNIST subset.
//!
//! ```text
//! cargo run --release -p uth --example desk_run -- data/mnist 5000 0 1 2
//! ```
//!
//! Training knobs can be overridden with `UTH_<FIELD>` environment variables,
//! e.g. `UTH_LEARNING_RATE=0.005`.

use std::env;
use std::path::Path;
use std::time::Instant;

use uth::idx::load_mnist_idx;
use uth_core::network::{build_network, default_layers};
use uth_core::retrieval::{encode_dataset, lsh_encode_dataset};
use uth_core::training::{train_phase1, train_phase2, NoClock};
use uth_core::{eval, EvalConfig, Objective, TrainConfig, DEFAULT_THRESHOLD};

fn knob<T: std::str::FromStr>(name: &str, default: T) -> T {
    env::var(format!("UTH_{name}")).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = env::args().skip(1).collect();
    let dir = Path::new(args.first().map(String::as_str).unwrap_or("data/mnist"));
    let n: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(5000);
    let seeds: Vec<u64> = args.iter().skip(2).map(|s| s.parse()).collect::<Result<_, _>>()?;
    let seeds = if seeds.is_empty() { vec![0, 1, 2] } else { seeds };

    let data = load_mnist_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?.take(n);
    let d = TrainConfig::default();
    for seed in seeds {
        let mut cfg = TrainConfig {
            seed,
            phase1_epochs: knob("PHASE1_EPOCHS", d.phase1_epochs),
            phase2_epochs: knob("PHASE2_EPOCHS", d.phase2_epochs),
            batch_size: knob("BATCH_SIZE", d.batch_size),
            learning_rate: knob("LEARNING_RATE", d.learning_rate),
            momentum: knob("MOMENTUM", d.momentum),
            triplets_per_epoch: knob("TRIPLETS_PER_EPOCH", d.triplets_per_epoch),
            ..d.clone()
        };
        cfg.triplet.margin = knob("MARGIN", d.triplet.margin);
        let ev = EvalConfig { query_count: n / 10, top_k: 100, seed };

        let t = Instant::now();
        let net = build_network(&default_layers(cfg.bit_width), data.dims(), seed)?;
        let (p1, log1) = train_phase1(net, &data, &cfg, &NoClock)?;
        let q: Vec<String> = log1.iter().map(|e| format!("{:.4}", e.report.l_quant)).collect();
        println!("seed {seed} phase1 {:.1}s l_quant [{}]", t.elapsed().as_secs_f64(), q.join(" "));

        let p1_map = eval::evaluate(&encode_dataset(&p1, &data, DEFAULT_THRESHOLD)?, &ev)?.map;
        for objective in [Objective::Triplet, Objective::RotationInvariance] {
            let t = Instant::now();
            let c = TrainConfig { objective, ..cfg.clone() };
            let (p, log2) = train_phase2(p1.clone(), &data, &c, &NoClock)?;
            let tot: Vec<String> = log2.iter().map(|e| format!("{:.3}", e.report.l_total)).collect();
            let map = eval::evaluate(&encode_dataset(&p, &data, DEFAULT_THRESHOLD)?, &ev)?.map;
            println!("  {objective:?} {:.1}s map {map:.4} l_total [{}]", t.elapsed().as_secs_f64(), tot.join(" "));
        }
        let lsh = eval::evaluate(&lsh_encode_dataset(&data, cfg.bit_width, seed)?, &ev)?.map;
        println!("  phase1-only map {p1_map:.4} lsh map {lsh:.4}");
    }
    Ok(())
}
