//! Writes a synthetic dump with planted conflict and source-selection signal.
//!
//! ```text
//! cargo run -p kcprobe --example planted_dump -- planted.acpd
//! ```

use kcprobe::store::LayerKind;
use kcprobe::synthetic::PlantedSpec;

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "planted.acpd".into());
    let spec = PlantedSpec {
        kinds: vec![LayerKind::Hidden, LayerKind::Mlp],
        selection_onset: Some(16),
        unmatched_fraction: 0.1,
        ..PlantedSpec::default()
    };
    let dump = spec.build();
    match dump.save(&path) {
        Ok(bytes) => eprintln!("wrote {} records ({bytes} bytes) to {path}", dump.records.len()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
