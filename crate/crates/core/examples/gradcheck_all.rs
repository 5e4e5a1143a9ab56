//! Finite-difference validation of every hand-written backward pass.

use wcc_core::harness::experiments::{gradcheck_suite, gradcheck_table, GradLayer};

fn main() -> wcc_core::Result<()> {
    let rows = gradcheck_suite(&GradLayer::ALL, 1e-5)?;
    print!("{}", gradcheck_table(&rows));
    Ok(())
}
