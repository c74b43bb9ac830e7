// Hamming locality-sensitive blocking: how many candidate pairs survive and how many
// true matches they keep.

use std::collections::HashSet;

use pprl::config::RunConfig;
use pprl::linkage::{candidate_ids, gen_blocks, BlockingParams};
use pprl::pipeline::{encode_party, measure_max_qgrams, synthesize};

fn main() -> pprl::Result<()> {
    let cfg = RunConfig::from_json(r#"{"data": {"num_records": 500}, "dp": {"p": 0.05}}"#)?;
    let synth = synthesize(&cfg)?;
    let n = measure_max_qgrams(&cfg, &synth.linkage.datasets)?;
    let (a, _) = encode_party(&cfg, &synth.linkage.datasets[0], n)?;
    let (b, _) = encode_party(&cfg, &synth.linkage.datasets[1], n)?;
    let truth: HashSet<(String, String)> =
        synth.linkage.ground_truth[0].pairs.iter().map(|p| (p.id_a.clone(), p.id_b.clone())).collect();

    println!("{:>6} {:>6} {:>10} {:>8}", "tables", "bits", "candidates", "recall");
    for (num_tables, bits_per_key) in [(8, 30), (8, 16), (30, 10), (30, 12)] {
        let bp = BlockingParams { num_tables, bits_per_key, block_seed: 1 };
        let candidates = gen_blocks(&a, &b, &bp)?;
        let ids = candidate_ids(&candidates, &a, &b);
        let kept = truth.iter().filter(|p| ids.contains(*p)).count();
        println!("{num_tables:>6} {bits_per_key:>6} {:>10} {:>8.3}", candidates.len(), kept as f64 / truth.len() as f64);
    }
    Ok(())
}
