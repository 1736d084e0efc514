//! Runs the bundled benchmark and prints the outcome as JSON (the source
//! of the numbers recorded in bench/manifest.json).

fn main() {
    let stats_only = std::env::args().any(|a| a == "--stats-only");
    if stats_only {
        let data = flowsense_core::bench::prepare_datasets().expect("benchmark corpus");
        eprintln!(
            "target flows: {} ({} normal / {} anomalous); source train {}, target train {}, target test {}",
            data.target_flows_total,
            data.target_normal,
            data.target_anomalous,
            data.source_train.len(),
            data.target_train.len(),
            data.target_test.len()
        );
        return;
    }
    let seed = std::env::args()
        .skip_while(|a| a != "--seed")
        .nth(1)
        .map(|s| s.parse().expect("seed must be a u64"))
        .unwrap_or(flowsense_core::bench::BENCH_SEED);
    let outcome = flowsense_core::bench::run_benchmark_seeded(seed).expect("benchmark run");
    println!("{}", serde_json::to_string_pretty(&outcome).expect("serializes"));
    eprintln!("{}", outcome.report.to_text());
    eprintln!(
        "transfer: finetuned {:.4} vs target-only {:.4}; elapsed {:.1}s",
        outcome.transfer.finetuned_acc, outcome.transfer.target_only_acc, outcome.elapsed_secs
    );
}
