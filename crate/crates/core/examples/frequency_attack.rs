// Frequency alignment attack on a skewed name column, without and with bit flipping.

use pprl::attack::{bf_frequencies, pattern_truth, run_attack, skewed_dataset, value_frequencies};
use pprl::dp::{perturb_database, DpParams, Mechanism};
use pprl::encoding::{encode_dataset, EncodingParams};

fn main() -> pprl::Result<()> {
    let attrs = vec!["first_name".to_owned()];
    let target = skewed_dataset(1000, 1);
    let public = value_frequencies(&skewed_dataset(1000, 2), &attrs)?;
    let enc = EncodingParams { q: 2, l: 1000, k: 10, hash_seed: 3, attributes: attrs.clone() };
    let clean = encode_dataset(&target, &enc)?;

    println!("{:<6} {:>5} {:>8} {:>8} {:>8} {:>8}", "p", "top_k", "1-1", "1-m", "wrong", "none");
    for p in [0.0, 0.05, 0.1] {
        let encoded = perturb_database(&clean, &DpParams::from_p(Mechanism::Blip, p, 10, 10, 4)?);
        let truth = pattern_truth(&encoded, &target, &attrs)?;
        let patterns = bf_frequencies(&encoded);
        for top_k in [10, 20, 50, 100] {
            let r = run_attack(&patterns, &public, top_k, &truth)?;
            println!(
                "{p:<6} {top_k:>5} {:>8.1} {:>8.1} {:>8.1} {:>8.1}",
                r.pct_1to1_correct, r.pct_1tom_correct, r.pct_wrong, r.pct_no_guess
            );
        }
    }
    Ok(())
}
