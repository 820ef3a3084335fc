use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::wav::read_wav;
use crate::dsp::{resample, AudioSignal};
use crate::error::{Error, Result};
use crate::metrics::{llr, seg_snr, si_sdr, stoi};
use crate::scalar::Scalar;

const SEGSNR_FRAME: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub seg_snr_db: f64,
    pub llr: f64,
    pub stoi: f64,
    pub si_sdr_db: f64,
}

/// All four measures for one (clean, enhanced) pair.
pub fn evaluate<T: Scalar>(clean: &AudioSignal<T>, enhanced: &AudioSignal<T>) -> Result<MetricReport> {
    Ok(MetricReport {
        seg_snr_db: seg_snr(clean, enhanced, SEGSNR_FRAME)?,
        llr: llr(clean, enhanced)?,
        stoi: stoi(clean, enhanced)?,
        si_sdr_db: si_sdr(clean, enhanced)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPair {
    pub clean: PathBuf,
    pub enhanced: PathBuf,
    /// Free-form grouping label such as `white/0dB`.
    pub condition: String,
}

/// Parses `clean<TAB>enhanced[<TAB>condition]` lines (`#` comments allowed).
pub fn parse_pairs(text: &str, base: &Path) -> Result<Vec<EvaluationPair>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = t.split('\t').map(str::trim).collect();
        if f.len() < 2 || f.len() > 3 {
            return Err(Error::data(format!(
                "pairs line {}: expected 2 or 3 tab-separated fields",
                i + 1
            )));
        }
        out.push(EvaluationPair {
            clean: base.join(f[0]),
            enhanced: base.join(f[1]),
            condition: f.get(2).copied().unwrap_or("all").to_string(),
        });
    }
    if out.is_empty() {
        return Err(Error::data("pairs manifest is empty"));
    }
    Ok(out)
}

fn evaluate_pair(pair: &EvaluationPair) -> Result<MetricReport> {
    let clean = read_wav::<f64>(&pair.clean)?;
    let mut enhanced = read_wav::<f64>(&pair.enhanced)?;
    if enhanced.sample_rate() != clean.sample_rate() {
        log::warn!(
            "{}: resampling {} Hz to {} Hz",
            pair.enhanced.display(),
            enhanced.sample_rate(),
            clean.sample_rate()
        );
        enhanced = resample(&enhanced, clean.sample_rate());
    }
    evaluate(&clean, &enhanced)
}

/// Evaluates every pair on up to `workers` threads; results keep input order.
pub fn evaluate_pairs(pairs: &[EvaluationPair], workers: usize) -> Result<Vec<MetricReport>> {
    let workers = workers.clamp(1, pairs.len().max(1));
    let chunk = pairs.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<MetricReport>>> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(evaluate_pair).collect::<Result<Vec<_>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("metric worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(pairs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Per-condition means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub count: usize,
    pub mean: MetricReport,
}

impl ConditionSummary {
    pub fn from_results(pairs: &[EvaluationPair], reports: &[MetricReport]) -> Vec<ConditionSummary> {
        let mut groups: BTreeMap<&str, Vec<&MetricReport>> = BTreeMap::new();
        for (p, r) in pairs.iter().zip(reports) {
            groups.entry(p.condition.as_str()).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|(condition, rs)| {
                let n = rs.len() as f64;
                let mean = |f: fn(&MetricReport) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
                ConditionSummary {
                    condition: condition.to_string(),
                    count: rs.len(),
                    mean: MetricReport {
                        seg_snr_db: mean(|r| r.seg_snr_db),
                        llr: mean(|r| r.llr),
                        stoi: mean(|r| r.stoi),
                        si_sdr_db: mean(|r| r.si_sdr_db),
                    },
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_parsing() {
        let p = parse_pairs("a.wav\tb.wav\n# x\nc.wav\td.wav\twhite/0\n", Path::new("/r")).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].condition, "all");
        assert_eq!(p[1].condition, "white/0");
        assert!(parse_pairs("\n# only comments\n", Path::new(".")).is_err());
        let e = parse_pairs("a.wav\n", Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("line 1"));
    }

    #[test]
    fn summary_groups_by_condition() {
        let pair = |c: &str| EvaluationPair {
            clean: "c".into(),
            enhanced: "e".into(),
            condition: c.into(),
        };
        let r = |v: f64| MetricReport {
            seg_snr_db: v,
            llr: v,
            stoi: v / 10.0,
            si_sdr_db: v,
        };
        let s = ConditionSummary::from_results(&[pair("a"), pair("b"), pair("a")], &[r(1.0), r(5.0), r(3.0)]);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].count, 2);
        assert_eq!(s[0].mean.seg_snr_db, 2.0);
    }
}
