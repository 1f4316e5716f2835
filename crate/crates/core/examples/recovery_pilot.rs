//! Pilot behind `tests/data/recovery_threshold.txt`: phone-boundary F of a
//! (3, P) layer on single-speaker synth corpora over a range of seeds.
//!
//! `cargo run --release --example recovery_pilot -- [seeds]`

use matdnn::eval::{match_boundaries, Prf};
use matdnn::synth::{generate_corpus, SynthConfig};
use matdnn::tokenizer::{train_layer, HyperParams, TrainOptions};

fn main() -> anyhow::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let mut scores = Vec::new();
    for seed in 0..seeds {
        let cfg = SynthConfig { num_speakers: 1, phone_noise_std: 0.5, seed, ..SynthConfig::default() };
        let c = generate_corpus(&cfg)?;
        let psi = HyperParams::new(3, cfg.num_phones)?;
        let layer = train_layer(&c.features, psi, &TrainOptions { seed, ..TrainOptions::default() }, None)?;
        let (mut hits, mut found, mut gold) = (0, 0, 0);
        for (u, g) in layer.labeling.utterances.iter().zip(&c.gold.utterances) {
            let d: Vec<usize> = u.segments[1..].iter().map(|s| s.start).collect();
            let gb: Vec<usize> = g.phones[1..].iter().map(|p| p.start).collect();
            hits += match_boundaries(&d, &gb, 2);
            found += d.len();
            gold += gb.len();
        }
        let f = Prf::from_counts(hits, found, gold).f;
        println!("seed {seed:>3}  F {f:.4}");
        scores.push(f);
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    println!("min {min:.4} mean {mean:.4}");
    println!("threshold (min rounded down to 0.05): {:.2}", (min * 20.0).floor() / 20.0);
    Ok(())
}
