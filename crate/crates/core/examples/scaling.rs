//! Times fitting as the data grow in size and in dimensionality.
//!
//! Usage: `scaling [repeats]`

use dif::cli::{cmd_scaling, RunConfig};

fn main() -> dif::Result<()> {
    let repeats = std::env::args().nth(1).map_or(1, |r| r.parse().expect("repeats"));
    let report = cmd_scaling(&RunConfig::default(), &[1000, 2000, 4000], &[16, 64, 256], repeats)?;
    let mut prev: Option<(usize, usize, f64)> = None;
    for row in &report.rows {
        let ratio = match prev {
            Some((n, d, s)) if n == row.n || d == row.d => format!("x{:.2}", row.seconds / s),
            _ => String::new(),
        };
        println!("N={:5} D={:5} {:8.3}s {ratio}", row.n, row.d, row.seconds);
        prev = Some((row.n, row.d, row.seconds));
    }
    Ok(())
}
