// Generates corrupted duplicates for two parties, writes them as CSV and reads them back.

use pprl::data::{generate_synthetic, load_dataset, load_pairs, save_dataset, save_pairs, SynthSpec};

fn main() -> pprl::Result<()> {
    let spec = SynthSpec { num_records: 8, match_fraction: 0.5, corruption_rate: 1.0, ..Default::default() };
    let synth = generate_synthetic(&spec, 2)?;
    let truth = &synth.ground_truth[0].pairs;

    for pair in truth {
        let a = synth.datasets[0].find(&pair.id_a).expect("source record");
        let b = synth.datasets[1].find(&pair.id_b).expect("twin record");
        println!("{:<10} {:?}", a.rec_id, a.attrs.iter().map(|(_, v)| v.as_str()).collect::<Vec<_>>());
        println!("{:<10} {:?}\n", b.rec_id, b.attrs.iter().map(|(_, v)| v.as_str()).collect::<Vec<_>>());
    }

    let dir = std::env::temp_dir().join(format!("pprl-synthetic-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    save_dataset(&synth.datasets[0], dir.join("party1.csv"))?;
    save_pairs(truth, dir.join("truth.csv"))?;
    let reloaded = load_dataset(dir.join("party1.csv"), &spec.schema())?;
    assert_eq!(reloaded.records, synth.datasets[0].records);
    assert_eq!(&load_pairs(dir.join("truth.csv"))?, truth);
    println!("{} records and {} true matches round-tripped through {}", reloaded.len(), truth.len(), dir.display());
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
