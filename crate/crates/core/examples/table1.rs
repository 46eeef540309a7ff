//! Bits per parameter and compression rate of several update schemes.
//!
//! cargo run --example table1

use sbc::harness::{default_table1_rows, table1_report};

fn main() -> sbc::Result<()> {
    print!("{}", table1_report(&default_table1_rows())?);
    Ok(())
}
