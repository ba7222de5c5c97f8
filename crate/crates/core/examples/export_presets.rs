//! Writes the bundled S&P 500 models as JSON, ready for the `arhmm` command line.
//!
//! cargo run -p arhmm --example export_presets -- <dir>

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(
        dir.join("sp500_arhmm.json"),
        arhmm::presets::sp500_arhmm().to_json(),
    )?;
    std::fs::write(
        dir.join("sp500_hmm.json"),
        arhmm::presets::sp500_hmm().to_json(),
    )?;
    Ok(())
}
