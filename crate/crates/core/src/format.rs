//! Number formatting and atomic file output shared by every writer.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Rounds to `digits` significant digits and prints the shortest decimal
/// that reads back as the rounded value.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{:.*e}", digits - 1, x).parse().expect("formatted float parses");
    format!("{rounded}")
}

pub fn fmt_sig9(x: f64) -> String {
    fmt_sig(x, 9)
}

/// 17 significant digits in scientific notation: exact round trip for `f64`.
pub fn fmt_exact(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes via a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
