// Linkage quality as the flip probability and the number of parties grow.

use pprl::config::RunConfig;
use pprl::pipeline::run_ablation;

fn main() -> pprl::Result<()> {
    let cfg = RunConfig::from_json(
        r#"{
            "data": {"num_records": 300, "training_pairs": 300},
            "ablation": {"p_values": [0.01, 0.05, 0.1], "k_values": [10, 20], "party_counts": [2, 3]}
        }"#,
    )?;
    println!("{:<8} {:>6} {:>9} {:>7} {:>7} {:>7} {:>7} {:>8}", "sweep", "value", "epsilon", "P", "R", "F", "F*", "seconds");
    for row in run_ablation(&cfg)? {
        let eps = row.epsilon.map_or("inf".to_owned(), |e| format!("{e:.1}"));
        println!(
            "{:<8} {:>6} {eps:>9} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>8.2}",
            row.sweep, row.value, row.precision, row.recall, row.f_measure, row.f_star, row.runtime_seconds
        );
    }
    Ok(())
}
