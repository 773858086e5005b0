//! Per-channel gains and relative gains between two delta rows, as CSV.

use samttt::probe::{deltas_from_csv, gain_table, gain_table_to_csv};

const BASE: &str = "channel,delta\n0,-3.2e-3\n1,-0.9e-3\n2,-0.5e-3\n3,-0.3e-3\n4,-0.3e-3\n";
const VARIANT: &str = "channel,delta\n0,-3.9e-3\n1,-2.2e-3\n2,-1.8e-3\n3,-1.1e-3\n4,-1.1e-3\n";

fn main() -> samttt::Result<()> {
    let table = gain_table(&deltas_from_csv(BASE)?, &deltas_from_csv(VARIANT)?)?;
    print!("{}", gain_table_to_csv(&table));
    for r in &table.rows {
        println!("channel {}: gain {:+.1e}, relative {}", r.channel, r.gain, r.relative.map_or("undefined".into(), |p| format!("{p:.2}%")));
    }
    Ok(())
}
