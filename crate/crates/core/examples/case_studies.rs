//! Run the three experiment protocols and print their summaries.
//!
//! ```text
//! cargo run --release -p losstopo-core --example case_studies [seed]
//! ```

use losstopo_core::experiments::{
    homotopy_classes_experiment, persistence_gap_experiment, transfer_comparison_experiment,
};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);

    let cs1 = homotopy_classes_experiment(seed).expect("homotopy classes");
    println!("homotopy classes (seed {seed}):");
    println!("  accuracies: {:?}", cs1.test_accuracies.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    println!("  classes: {:?}", cs1.partition.classes);
    println!(
        "  within-class max spread {:.4}  between-class mean gap {:.4}",
        cs1.statistics.within_class_max_spread, cs1.statistics.between_class_mean_gap
    );

    let cs2 = persistence_gap_experiment(seed).expect("persistence gap");
    println!("persistence vs gap (seed {seed}):");
    for r in &cs2.runs {
        println!(
            "  bs={:3}  pers={:8.2}  kept={:3}  train_loss={:.4} loss_gap={:+.4} acc_gap={:+.4}",
            r.batch_size, r.total_persistence, r.kept_samples, r.train_loss, r.loss_gap,
            r.accuracy_gap
        );
    }
    println!(
        "  fitted alpha={:+.6} beta={:+.4} r2={:.3}",
        cs2.model.alpha,
        cs2.model.beta,
        cs2.model.r_squared.unwrap_or(f64::NAN)
    );

    let cs3 = transfer_comparison_experiment(seed).expect("transfer comparison");
    println!("transfer comparison (seed {seed}):");
    for row in &cs3.rows {
        println!(
            "  {:14} acc={:.4}  params={:4}/{}  examples={}",
            row.method, row.test_accuracy, row.parameters_updated, cs3.total_parameters,
            row.target_examples
        );
    }
    println!("  factorization quality {:.4}", cs3.factorization_quality);
}
