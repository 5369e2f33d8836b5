//! JSONL logs and CSV / plain-text reports.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::abx::AbxScore;
use super::f0_stats::F0StatsTable;
use super::preference::{Condition, PreferenceScore};
use super::query_match::QueryMatchScore;
use crate::error::{Error, Result};

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads one JSON value per non-blank line; a missing file reads as empty.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse { path: path.into(), line: i + 1, msg: e.to_string() })?);
    }
    Ok(out)
}

pub fn f0_csv(t: &F0StatsTable) -> String {
    let mut s = String::from("style,mean_hz,std_hz,count\n");
    for r in &t.rows {
        let _ = writeln!(s, "{},{:.1},{:.1},{}", r.style, r.mean, r.std, r.count);
    }
    s
}

pub fn f0_text(t: &F0StatsTable) -> String {
    let mut s = format!("{:<10}{:>12}{:>12}{:>8}\n", "Style", "Mean (Hz)", "Std (Hz)", "N");
    for r in &t.rows {
        let _ = writeln!(s, "{:<10}{:>12.1}{:>12.1}{:>8}", r.style.to_string(), r.mean, r.std, r.count);
    }
    for a in &t.absent {
        let _ = writeln!(s, "{:<10}{:>12}{:>12}{:>8}", a.to_string(), "-", "-", 0);
    }
    s
}

pub fn abx_csv(score: &AbxScore) -> String {
    let mut s = String::from("style_1,style_2,correct,total,accuracy_pct\n");
    for p in &score.per_pair {
        let _ = writeln!(s, "{},{},{},{},{:.2}", p.styles.0, p.styles.1, p.correct, p.total, p.accuracy());
    }
    let _ = writeln!(s, "all,all,{},{},{:.2}", score.correct, score.total, score.accuracy);
    s
}

pub fn abx_text(score: &AbxScore) -> String {
    let mut s = format!("ABX accuracy: {:.2}% ({} of {})\n", score.accuracy, score.correct, score.total);
    for p in &score.per_pair {
        let _ = writeln!(s, "  {:<8} vs {:<8} {:>7.2}% ({}/{})", p.styles.0.to_string(), p.styles.1.to_string(), p.accuracy(), p.correct, p.total);
    }
    s
}

pub fn preference_csv(score: &PreferenceScore) -> String {
    let mut s = String::from("condition,count,percent\n");
    for (i, c) in Condition::ALL.iter().enumerate() {
        let _ = writeln!(s, "{},{},{:.1}", c.name(), score.counts[i], score.percent[i]);
    }
    s
}

pub fn preference_text(score: &PreferenceScore) -> String {
    let mut s = format!("{:<16}{:>18}{:>18}\n", "", "Multi-style", "Multi-style");
    let _ = writeln!(s, "{:<16}{:>18}{:>18}{:>18}", "", "Baseline", "Neutral", "Other");
    let _ = writeln!(s, "{:<16}{:>18.1}{:>18.1}{:>18.1}", "Preference (%)", score.percent[0], score.percent[1], score.percent[2]);
    let _ = writeln!(s, "answers: {}", score.total);
    s
}

pub fn query_match_text(score: &QueryMatchScore) -> String {
    format!("good matches: {:.1}% ({} of {})\n", score.rate, score.good, score.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::preference::preference_from_counts;

    #[test]
    fn jsonl_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        assert!(read_jsonl::<u32>(&p).unwrap().is_empty());
        write_jsonl(&p, &[1u32, 2, 3]).unwrap();
        assert_eq!(read_jsonl::<u32>(&p).unwrap(), [1, 2, 3]);
        fs::write(&p, "1\n{oops\n").unwrap();
        assert!(read_jsonl::<u32>(&p).unwrap_err().to_string().contains(":2:"));
    }

    #[test]
    fn preference_table_layout() {
        let s = preference_from_counts([140, 271, 89]);
        assert!(preference_text(&s).contains("28.0"));
        assert_eq!(preference_csv(&s).lines().nth(2).unwrap(), "multi_style_neutral,271,54.2");
    }
}
