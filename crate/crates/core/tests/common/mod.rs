//! Shared helpers for the integration suites.

use std::path::PathBuf;

use lst2d_core::mnist::TRAIN_IMAGES;

/// Where the four IDX files live: `LST2D_DATA_DIR` if set, else the
/// workspace-level `data/` directory. `None` if the files are not there,
/// so dataset-dependent tests can skip loudly instead of failing.
pub fn data_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("LST2D_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    if dir.join(TRAIN_IMAGES).exists() {
        Some(dir)
    } else {
        None
    }
}

/// Standard skip message for suites that need the dataset.
#[allow(dead_code)]
pub fn skip_no_data(test: &str) {
    eprintln!(
        "SKIP {test}: dataset not found; place the four IDX files in ./data \
         or set LST2D_DATA_DIR"
    );
}
