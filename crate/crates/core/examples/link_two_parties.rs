// Full linkage between two parties: noisy encoding, federated training, blocking,
// classification with the global model and the Dice-threshold baseline.

use pprl::config::RunConfig;
use pprl::linkage::evaluate;
use pprl::pipeline::{
    comparison_table, encode_party, link_databases, measure_max_qgrams, synthesize, train_parties, training_parties,
};

fn main() -> pprl::Result<()> {
    let cfg = RunConfig::from_json(r#"{"data": {"num_records": 500}, "dp": {"p": 0.05}}"#)?;
    let synth = synthesize(&cfg)?;
    let all = synth.linkage.datasets.iter().chain(synth.training.iter().map(|t| &t.dataset));
    let n = measure_max_qgrams(&cfg, all)?;

    let (a, dp) = encode_party(&cfg, &synth.linkage.datasets[0], n)?;
    let (b, _) = encode_party(&cfg, &synth.linkage.datasets[1], n)?;
    println!("p = {}, epsilon = {:.2}, n = {}, k = {}", dp.p, dp.epsilon, dp.n, dp.k);

    let run = train_parties(&cfg, &training_parties(&cfg, &synth.training), n)?;
    let linked = link_databases(&cfg, &a, &b, &run.global.model)?;
    println!("{} candidate pairs out of {}", linked.candidates.len(), a.len() * b.len());

    let truth = &synth.linkage.ground_truth[0].pairs;
    let dl = evaluate(&linked.dl, truth, None);
    let baseline = evaluate(&linked.baseline, truth, None);
    print!("{}", comparison_table(&[("dl", dl), ("baseline", baseline)]));
    Ok(())
}
