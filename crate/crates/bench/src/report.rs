//! Plain-text summary of a `comparison.csv` table.

use std::fmt::Write as _;
use std::path::Path;

use fedalloc::Method;

use crate::error::{BenchError, Result};
use crate::suite::COMPARISON_CSV;

/// Final objective of one method on one seed, as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub seed: u64,
    /// `None` when the run failed; indexed like `Method::ALL`.
    pub values: [Option<f64>; 4],
    pub flags: Vec<String>,
}

impl ComparisonRow {
    pub fn feasible(&self, method: Method) -> bool {
        let slot = slot(method);
        self.values[slot].is_some() && !self.flags.iter().any(|f| f.starts_with(&format!("{}:", method.tag())))
    }
}

fn slot(method: Method) -> usize {
    Method::ALL.iter().position(|m| *m == method).expect("method listed")
}

pub fn read_comparison<R: std::io::Read>(reader: R) -> Result<Vec<ComparisonRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let seed = field(0).parse().map_err(|_| BenchError::Invalid {
            key: "seed".into(),
            reason: format!("bad seed `{}` in {COMPARISON_CSV}", field(0)),
        })?;
        let mut values = [None; 4];
        for (i, v) in values.iter_mut().enumerate() {
            *v = field(i + 1).parse().ok();
        }
        let flags = field(5).split(';').filter(|s| !s.is_empty()).map(str::to_string).collect();
        rows.push(ComparisonRow { seed, values, flags });
    }
    Ok(rows)
}

pub fn load_comparison(dir: &Path) -> Result<Vec<ComparisonRow>> {
    let path = dir.join(COMPARISON_CSV);
    let file = std::fs::File::open(&path).map_err(|source| BenchError::Io { path, source })?;
    read_comparison(file)
}

/// Share of rows where the proposed method is feasible and no worse than
/// every feasible baseline. `None` without any proposed value.
pub fn win_rate(rows: &[ComparisonRow]) -> Option<f64> {
    let mut total = 0;
    let mut wins = 0;
    for row in rows {
        let Some(ours) = row.values[slot(Method::Proposed)] else {
            continue;
        };
        total += 1;
        let beaten = Method::ALL[1..].iter().all(|&m| match row.values[slot(m)] {
            Some(v) if row.feasible(m) => row.feasible(Method::Proposed) && ours <= v,
            _ => true,
        });
        if beaten {
            wins += 1;
        }
    }
    (total > 0).then(|| wins as f64 / total as f64)
}

/// Summary text: per-method statistics, feasibility counts, win rate and
/// one warning line per method that never produced a feasible run.
pub fn summarize(rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "rows: {}", rows.len());
    let _ = writeln!(
        s,
        "{:<14}{:>14}{:>14}{:>14}{:>10}{:>8}",
        "method", "mean", "min", "max", "feasible", "runs"
    );
    let mut warnings = Vec::new();
    for m in Method::ALL {
        let present: Vec<&ComparisonRow> = rows.iter().filter(|r| r.values[slot(m)].is_some() || r.flags.iter().any(|f| f.starts_with(&format!("{}:", m.tag())))).collect();
        let values: Vec<f64> = rows.iter().filter_map(|r| r.values[slot(m)]).collect();
        let feasible = rows.iter().filter(|r| r.feasible(m)).count();
        let (mean, min, max) = if values.is_empty() {
            ("-".to_string(), "-".to_string(), "-".to_string())
        } else {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (format!("{mean:.4}"), format!("{min:.4}"), format!("{max:.4}"))
        };
        let _ = writeln!(
            s,
            "{:<14}{:>14}{:>14}{:>14}{:>10}{:>8}",
            m.tag(),
            mean,
            min,
            max,
            feasible,
            present.len()
        );
        if !present.is_empty() && feasible == 0 {
            warnings.push(format!("warning: method {} has no feasible runs", m.tag()));
        }
    }
    match win_rate(rows) {
        Some(rate) => {
            let _ = writeln!(s, "proposed win rate: {:.1}%", 100.0 * rate);
        }
        None => {
            let _ = writeln!(s, "proposed win rate: n/a");
        }
    }
    for w in warnings {
        let _ = writeln!(s, "{w}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "seed,proposed,random_pf,random_theta,random_all,flags\n";

    fn rows(body: &str) -> Vec<ComparisonRow> {
        read_comparison(format!("{HEADER}{body}").as_bytes()).unwrap()
    }

    #[test]
    fn empty_table() {
        let text = summarize(&rows(""));
        assert!(text.starts_with("rows: 0\n"));
        assert!(text.contains("proposed win rate: n/a"));
        assert!(!text.contains("warning"));
    }

    #[test]
    fn all_infeasible_method_is_named() {
        let text = summarize(&rows("1,1.0,2.0,3.0,,random_all:error\n2,1.0,2.0,3.0,5.0,random_all:infeasible\n"));
        assert!(text.contains("warning: method random_all has no feasible runs"), "{text}");
        assert!(!text.contains("method proposed has"));
    }

    #[test]
    fn win_rate_has_one_decimal() {
        let body = "1,1.0,2.0,3.0,4.0,\n2,1.0,0.5,3.0,4.0,\n3,1.0,2.0,3.0,4.0,\n";
        let r = rows(body);
        assert!((win_rate(&r).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(summarize(&r).contains("proposed win rate: 66.7%"));
    }

    #[test]
    fn statistics() {
        let text = summarize(&rows("1,1.0,2.0,,,random_theta:error\n2,3.0,4.0,,,random_theta:error\n"));
        let line = text.lines().find(|l| l.starts_with("proposed")).unwrap();
        let cols: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cols, ["proposed", "2.0000", "1.0000", "3.0000", "2", "2"]);
        let line = text.lines().find(|l| l.starts_with("random_theta")).unwrap();
        assert!(line.contains(" 0 "), "{line}");
    }
}
