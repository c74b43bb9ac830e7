// Relates privacy budget and flip probability, then perturbs filters with both mechanisms.

use pprl::dp::{add_dp_noise, epsilon_from_flip_prob, expected_popcount, flip_prob_from_epsilon, DpParams, Mechanism, NoiseStream};
use pprl::encoding::BloomFilter;

fn main() -> pprl::Result<()> {
    let (n, k) = (10, 10);
    for p in [0.01, 0.05, 0.1] {
        let eps = epsilon_from_flip_prob(p, n, k)?;
        println!("p = {p:<5} epsilon = {eps:8.3}  back to p = {:.6}", flip_prob_from_epsilon(eps, n, k));
    }

    let l = 1000;
    println!("\n{:<8} {:>5} {:>6} {:>10} {:>10}", "mech", "m", "p", "mean", "expected");
    for mechanism in [Mechanism::Blip, Mechanism::Rappor] {
        for m in [250, 500, 750] {
            let mut bf = BloomFilter::new(l);
            (0..m).for_each(|i| bf.set(i));
            for p in [0.01, 0.05, 0.1] {
                let params = DpParams::from_p(mechanism, p, n, k, 7)?;
                let trials = 200;
                let total: usize =
                    (0..trials).map(|t| add_dp_noise(&bf, &params, NoiseStream::new(7, t)).popcount()).sum();
                let mean = total as f64 / trials as f64;
                let name = format!("{mechanism:?}").to_lowercase();
                println!("{name:<8} {m:>5} {p:>6} {mean:>10.1} {:>10.1}", expected_popcount(mechanism, l, m, p));
            }
        }
    }
    Ok(())
}
