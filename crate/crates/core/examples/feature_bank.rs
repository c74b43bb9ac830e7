// Computes the fifteen similarity and distance features for a pair of filters.

use pprl::encoding::BloomFilter;
use pprl::features::{feature_vector, pair_counts, FeatureConfig};

fn main() -> pprl::Result<()> {
    let x = BloomFilter::from_bit_str("1101001011010010")?;
    let y = BloomFilter::from_bit_str("1001001111010000")?;
    let c = pair_counts(&x, &y)?;
    println!("a={} b={} c={} d={} l={}", c.a, c.b, c.c, c.d, c.l);

    let cfg = FeatureConfig::default();
    let v = feature_vector(&x, &y, &cfg)?;
    for (name, value) in cfg.names().iter().zip(&v.values) {
        println!("{name:<20} {value:.6}");
    }
    Ok(())
}
