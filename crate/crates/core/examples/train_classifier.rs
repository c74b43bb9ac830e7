// Trains the dense classifier on noisy feature vectors and round-trips it through JSON.

use pprl::data::{generate_training_set, SynthSpec};
use pprl::dp::{DpParams, Mechanism};
use pprl::encoding::EncodingParams;
use pprl::features::FeatureConfig;
use pprl::federation::{run_local_training, training_examples, PartyState, SharedConfig};
use pprl::nn::{NeuralModel, TrainConfig};

fn main() -> pprl::Result<()> {
    let spec = SynthSpec::default();
    let party = |index: usize| -> pprl::Result<PartyState> {
        let t = generate_training_set(&spec, index, 300)?;
        Ok(PartyState { party_id: format!("party{}", index + 1), dataset: t.dataset, training_pairs: t.pairs })
    };
    let (train, held_out) = (party(0)?, party(1)?);
    let shared = SharedConfig::new(
        EncodingParams { q: 2, l: 1000, k: 10, hash_seed: 1, attributes: spec.schema() },
        DpParams::from_p(Mechanism::Blip, 0.01, 30, 10, 5)?,
        TrainConfig { init_seed: 3, shuffle_seed: 4, ..Default::default() },
        FeatureConfig::default(),
    );

    let model = run_local_training(&train, &shared)?;
    let examples = training_examples(&held_out, &shared)?;
    println!("layers {:?}, {} parameters", model.dims(), model.num_params());
    println!("held-out loss {:.4}, accuracy {:.3}", model.loss(&examples)?, model.accuracy(&examples)?);

    let path = std::env::temp_dir().join(format!("pprl-model-{}.json", std::process::id()));
    model.save(&path)?;
    let loaded = NeuralModel::load(&path)?;
    assert_eq!(loaded.forward(&examples[0].features)?, model.forward(&examples[0].features)?);
    println!("model saved to and reloaded from {}", path.display());
    std::fs::remove_file(&path).ok();
    Ok(())
}
