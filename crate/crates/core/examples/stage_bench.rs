//! Times matched CNN and ADWT stages across widths.

use wcc_core::complexity::StageSpec;
use wcc_core::harness::bench::BenchComparison;

fn main() -> wcc_core::Result<()> {
    for c in [8, 16, 32] {
        let spec = StageSpec::new(32, 32, 0, c, 2 * c, 1);
        let cmp = BenchComparison::run(&spec, 15, 8)?;
        println!("C = {c}, C' = {}", 2 * c);
        println!("{cmp}\n");
    }
    Ok(())
}
