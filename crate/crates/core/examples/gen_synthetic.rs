//! Regenerate the bundled synthetic dataset under `data/synthetic/`.
//!
//! ```text
//! cargo run -p embias --example gen_synthetic
//! ```

use std::path::Path;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic");
    embias::synthetic::write_dataset(&dir, 7).expect("failed to write dataset");
    println!("wrote {}", dir.display());
}
