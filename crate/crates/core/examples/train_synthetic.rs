//! Trains a small shallow forecaster on synthetic advecting blobs and compares
//! it with persistence.
//!
//! cargo run --release --example train_synthetic -- [n_train] [epochs] [channels] [gate]

use std::time::Instant;

use nowcast::forecaster::{train, Forecaster, ForecasterSpec, TrainConfig};
use nowcast::metrics::evaluate;
use nowcast::nn::GateType;
use nowcast::optim::OptimizerConfig;
use nowcast::predict::Persistence;
use nowcast::synth::{generate_synthetic, SynthConfig};
use nowcast::Split;

fn main() -> nowcast::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_train = args.first().and_then(|s| s.parse().ok()).unwrap_or(128);
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let channels: Vec<usize> = args
        .get(2)
        .map(|s| s.split(',').map(|c| c.parse().unwrap()).collect())
        .unwrap_or(vec![8, 12, 16]);

    let synth = SynthConfig {
        n_train,
        n_validation: 32,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&synth)?;
    let spec = ForecasterSpec::shallow(synth.channels.len(), 32, 32, 4, 8)
        .with_channels(channels)
        .with_gate(args.get(3).map_or(Ok(GateType::Conv), |s| s.parse())?);
    let mut model = Forecaster::<f32>::build(&spec, 0)?;
    println!("parameters: {}", model.parameter_count());

    let cfg = TrainConfig {
        epochs,
        batch_size: 8,
        optimizer: OptimizerConfig { lr: 3e-3, ..OptimizerConfig::adabelief() },
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let log = train(&mut model, &data, &cfg)?;
    print!("{}", log.to_text());
    println!("training took {:.1}s", start.elapsed().as_secs_f64());

    let m = evaluate(&model, &data, Split::Validation, "model")?;
    let p = evaluate(&Persistence { t_out: 8 }, &data, Split::Validation, "persistence")?;
    println!("{}", nowcast::metrics::compare_table(&[m, p]));
    Ok(())
}
