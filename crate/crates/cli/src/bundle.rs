use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::args::Format;

/// Everything one run emits. `config` holds every parameter that affects
/// the payload; thread count and output locations are left out because
/// they do not.
#[derive(Debug, Serialize)]
pub struct ReportBundle {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: Value,
    pub payload: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

/// Named wall-clock phases, echoed to stderr as they finish.
#[derive(Debug, Default)]
pub struct Timings {
    phases: BTreeMap<String, f64>,
}

impl Timings {
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let ms = start.elapsed().as_secs_f64() * 1e3;
        eprintln!("[{phase}] {ms:.1} ms");
        self.phases.insert(phase.to_string(), ms);
        out
    }

    pub fn into_map(self) -> BTreeMap<String, f64> {
        self.phases
    }
}

/// CSV renderings keyed by a file-name suffix (empty for the main table).
pub type CsvParts = Vec<(&'static str, String)>;

/// Writes via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn csv_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = if suffix.is_empty() {
        format!("{stem}.csv")
    } else {
        format!("{stem}.{suffix}.csv")
    };
    out.with_file_name(name)
}

/// Emits the bundle as JSON and/or its CSV parts, to `out` or stdout.
pub fn emit(
    bundle: &ReportBundle,
    csv: &CsvParts,
    format: Format,
    out: Option<&Path>,
) -> Result<()> {
    let json = serde_json::to_string_pretty(bundle)? + "\n";
    let want_json = matches!(format, Format::Json | Format::Both);
    let want_csv = matches!(format, Format::Csv | Format::Both);
    match out {
        Some(out) => {
            if want_json {
                write_atomic(out, json.as_bytes())?;
            }
            if want_csv {
                for (suffix, text) in csv {
                    write_atomic(&csv_path(out, suffix), text.as_bytes())?;
                }
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            if want_json {
                stdout.write_all(json.as_bytes())?;
            }
            if want_csv {
                for (_, text) in csv {
                    stdout.write_all(text.as_bytes())?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_paths_sit_next_to_the_report() {
        let out = Path::new("/tmp/run/report.json");
        assert_eq!(csv_path(out, ""), Path::new("/tmp/run/report.csv"));
        assert_eq!(
            csv_path(out, "histogram"),
            Path::new("/tmp/run/report.histogram.csv")
        );
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
