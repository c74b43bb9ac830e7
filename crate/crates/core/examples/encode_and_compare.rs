// Encodes two name variants into Bloom filters and compares them.

use pprl::data::Record;
use pprl::encoding::{dice, gen_bloom_filter, qgrams, EncodingParams};

fn main() -> pprl::Result<()> {
    let params = EncodingParams {
        q: 2,
        l: 1000,
        k: 10,
        hash_seed: 42,
        attributes: vec!["first_name".into(), "last_name".into()],
    };
    let a = Record::new("a1", [("first_name", "peter"), ("last_name", "smith")]);
    let b = Record::new("b1", [("first_name", "pete"), ("last_name", "smith")]);
    let c = Record::new("c1", [("first_name", "maria"), ("last_name", "jones")]);

    println!("q-grams of peter: {:?}", qgrams("peter", 2));
    let (x, y, z) = (gen_bloom_filter(&a, &params)?, gen_bloom_filter(&b, &params)?, gen_bloom_filter(&c, &params)?);
    println!("popcounts: {} {} {}", x.popcount(), y.popcount(), z.popcount());
    println!("dice(peter smith, pete smith)  = {:.3}", dice(&x, &y)?);
    println!("dice(peter smith, maria jones) = {:.3}", dice(&x, &z)?);
    println!("first bytes as hex: {}", &x.to_hex()[..16]);
    Ok(())
}
