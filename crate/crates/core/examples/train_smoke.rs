use leapt_core::envs::{generate_dataset, Domain};
use leapt_core::worldmodel::{train, ModelKind, TrainConfig};

fn main() {
    let domain = Domain::FalseBelief;
    let regime = domain.training_regime();
    let data = generate_dataset(domain, regime.trajectories, regime.horizon, 1);
    let schema = domain.schema();
    for kind in [ModelKind::Leapt, ModelKind::LeaptAttn, ModelKind::BaselineS, ModelKind::BaselineD] {
        let t0 = std::time::Instant::now();
        let mut config = TrainConfig::new(kind, 1);
        config.epochs = regime.epochs;
        let (_, records) = train(&config, &schema, &data).unwrap();
        let first = records.first().unwrap().loss;
        let last = records.last().unwrap().loss;
        println!(
            "{:12} {} epochs: loss {:9.3} -> {:9.3}  ({:.2?})",
            kind.name(), records.len(), first, last, t0.elapsed()
        );
    }
}
