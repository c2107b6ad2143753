//! Reproducible file output: CSV with a comment metadata header and
//! pretty-printed JSON, both newline-terminated with LF endings.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::cli::RunConfig;
use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits: round-trip exact for f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("cannot write {}: {e}", path.display()))
}

/// Writes a CSV file whose first lines carry the library version and the
/// full resolved configuration as `#` comments. Identical configs yield
/// byte-identical files.
pub fn write_csv<I>(
    dir: &Path,
    name: &str,
    config: &RunConfig,
    extra_meta: &serde_json::Value,
    header: &str,
    rows: I,
) -> Result<PathBuf>
where
    I: IntoIterator<Item = String>,
{
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut w = BufWriter::new(file);
    let meta = json!({
        "qsched_version": VERSION,
        "config": config,
        "meta": extra_meta,
    });
    let result = (|| -> std::io::Result<()> {
        writeln!(w, "# qsched {VERSION}")?;
        writeln!(
            w,
            "# {}",
            serde_json::to_string(&meta).expect("metadata serializes")
        )?;
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{row}")?;
        }
        w.flush()
    })();
    result.map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Writes a JSON document `{qsched_version, config, ...payload}`.
pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    config: &RunConfig,
    payload: &T,
) -> Result<PathBuf> {
    let path = dir.join(name);
    let document = json!({
        "qsched_version": VERSION,
        "config": config,
        "result": payload,
    });
    let mut text = serde_json::to_string_pretty(&document).expect("document serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.82), "8.1999999999999995e-1");
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        let x = 0.1 + 0.2;
        let parsed: f64 = fmt_f64(x).parse().unwrap();
        assert_eq!(parsed, x);
    }
}
