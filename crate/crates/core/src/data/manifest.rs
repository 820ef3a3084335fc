use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One manifest line: what to mix and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub clean_path: PathBuf,
    pub noise_path: PathBuf,
    pub target_snr_db: f64,
    pub seed: u64,
}

/// Parses `clean<TAB>noise<TAB>snr<TAB>seed` lines. Blank lines and lines
/// starting with `#` are ignored; relative paths resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<MixtureSpec>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::data(format!(
                "manifest line {line_no}: expected 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let target_snr_db: f64 = fields[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::data(format!("manifest line {line_no}: bad SNR `{}`", fields[2])))?;
        let seed = fields[3]
            .parse()
            .map_err(|_| Error::data(format!("manifest line {line_no}: bad seed `{}`", fields[3])))?;
        out.push(MixtureSpec {
            clean_path: base.join(fields[0]),
            noise_path: base.join(fields[1]),
            target_snr_db,
            seed,
        });
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<MixtureSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_skips_comments() {
        let text = "# header\nc1.wav\tn1.wav\t-3\t1\n\nc2.wav\tn2.wav\t10.5\t2\n";
        let m = parse_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].clean_path, PathBuf::from("/data/c1.wav"));
        assert_eq!(m[1].target_snr_db, 10.5);
        assert_eq!(m[1].seed, 2);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "c1.wav\tn1.wav\t0\t1\nc2.wav\tn2.wav\tloud\t2\n";
        let err = parse_manifest(text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = parse_manifest("a\tb\n", Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }
}
