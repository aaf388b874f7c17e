//! Writes the bundled corpus. Usage: `cargo run --example gen_corpus [DIR]`
//! (default `corpus/` at the workspace root).

use std::path::PathBuf;

fn main() -> brickfill::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus"));
    brickfill_cli::bundled::write_corpus(&dir)?;
    println!("{}", dir.display());
    Ok(())
}
