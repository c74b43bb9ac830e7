// Three database owners train local models on their own data; the aggregator averages them.

use pprl::data::{generate_training_set, SynthSpec};
use pprl::dp::{DpParams, Mechanism};
use pprl::encoding::EncodingParams;
use pprl::features::FeatureConfig;
use pprl::federation::{run_protocol_training, training_examples, PartyState, SharedConfig};
use pprl::nn::TrainConfig;
use pprl::seeds::derive_seed;

fn main() -> pprl::Result<()> {
    let spec = SynthSpec::default();
    let parties = (0..3)
        .map(|i| {
            let t = generate_training_set(&spec, i, 200)?;
            Ok(PartyState { party_id: format!("party{}", i + 1), dataset: t.dataset, training_pairs: t.pairs })
        })
        .collect::<pprl::Result<Vec<_>>>()?;
    let shared = SharedConfig::new(
        EncodingParams { q: 2, l: 1000, k: 10, hash_seed: 1, attributes: spec.schema() },
        DpParams::from_p(Mechanism::Blip, 0.05, 30, 10, 0)?,
        TrainConfig { init_seed: 11, ..Default::default() },
        FeatureConfig::default(),
    );

    // owners agree on everything except their private noise and shuffle seeds
    let run = run_protocol_training(&parties, |p| {
        let mut s = shared.clone();
        s.dp.noise_seed = derive_seed(1, &p.party_id);
        s.train.shuffle_seed = derive_seed(2, &p.party_id);
        s
    })?;

    let held_out = generate_training_set(&spec, 9, 200)?;
    let test = PartyState { party_id: "test".into(), dataset: held_out.dataset, training_pairs: held_out.pairs };
    let examples = training_examples(&test, &shared)?;
    for local in &run.local_models {
        println!("{} local accuracy {:.3}", local.party_id, local.model.accuracy(&examples)?);
    }
    println!(
        "global ({} contributors, round {}) accuracy {:.3}",
        run.global.contributors.len(),
        run.global.round,
        run.global.model.accuracy(&examples)?
    );
    Ok(())
}
