//! Runs a 3x3 grid of communication delay and gradient sparsity at a fixed
//! iteration budget and checks whether error tracks total sparsity.
//!
//! cargo run --release --example sparsity_grid [-- OUT_DIR]

use sbc::harness::{diagonal_report, run_experiment, ExperimentSpec};

const CONFIG: &str = r#"
seed = 11
total_local_iterations = 1000

[dataset]
size = 3000
synthetic = { kind = "xor-ish", noise_dims = 2 }

[model]
kind = "mlp"
hidden = 32

[optimizer]
kind = "sgd"
learning_rate = 0.1

[rounds]
clients = 4
batch_size = 16

[grid]
temporal = [1, 10, 100]
gradient = [1.0, 0.1, 0.01]
"#;

fn main() -> sbc::Result<()> {
    let mut spec = ExperimentSpec::from_toml(CONFIG)?;
    spec.out = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("sbc-sparsity-grid"),
        Into::into,
    );
    let outcome = run_experiment(&spec)?;
    for cell in &outcome.cells {
        println!(
            "n={:<4} p={:<5} val error {:.4}  ratio x{:.0}",
            cell.n,
            cell.p,
            cell.summary.final_val_error().unwrap_or(f64::NAN),
            cell.summary.compression_ratio
        );
    }
    println!("\n{}", diagonal_report(&outcome.grid));
    println!("metrics in {}", spec.out.display());
    Ok(())
}
