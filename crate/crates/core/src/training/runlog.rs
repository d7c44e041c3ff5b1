//! Per-epoch metric log and its CSV form.
//!
//! ```text
//! # key = value            config echo, one line per entry
//! epoch,train_loss,noisy_val_acc,clean_val_acc,clean_test_acc[,g1..gc]
//! 1,0.93,0.41,0.52,0.53
//! ...
//! #chosen NES=<e> ES=<e> WES=<e>
//! ```
//!
//! Policies that were not run are written as `-`. Numbers use the shortest representation that
//! parses back to the same `f64`.

use std::fmt::Write as _;

use super::PolicyKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    pub train_loss: f64,
    pub noisy_val_acc: f64,
    pub clean_val_acc: f64,
    pub clean_test_acc: f64,
    pub gvector: Option<Vec<f64>>,
}

/// Metric records of one run plus the epoch each policy selected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    /// Configuration echo, written as `# key = value` lines.
    pub config: Vec<(String, String)>,
    pub records: Vec<EpochRecord>,
    /// Chosen epochs for NES, ES and WES.
    pub chosen: [Option<usize>; 3],
    /// Seconds spent training; written as a comment so CSV bodies stay reproducible.
    pub wall_time_s: Option<f64>,
}

impl RunLog {
    pub fn chosen(&self, policy: PolicyKind) -> Option<usize> {
        self.chosen[policy.index()]
    }

    pub fn record(&self, epoch: usize) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == epoch)
    }

    pub fn last_epoch(&self) -> usize {
        self.records.last().map_or(0, |r| r.epoch)
    }

    pub fn echo(&mut self, key: impl Into<String>, value: impl ToString) {
        self.config.push((key.into(), value.to_string()));
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.config {
            let _ = writeln!(out, "# {k} = {v}");
        }
        if let Some(t) = self.wall_time_s {
            let _ = writeln!(out, "# wall_time_s = {t:.3}");
        }
        out.push_str("epoch,train_loss,noisy_val_acc,clean_val_acc,clean_test_acc");
        let gc = self
            .records
            .iter()
            .find_map(|r| r.gvector.as_ref().map(Vec::len))
            .unwrap_or(0);
        for k in 1..=gc {
            let _ = write!(out, ",g{k}");
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.noisy_val_acc, r.clean_val_acc, r.clean_test_acc
            );
            for k in 0..gc {
                match r.gvector.as_ref().and_then(|g| g.get(k)) {
                    Some(v) => write!(out, ",{v}").unwrap(),
                    None => out.push_str(",nan"),
                }
            }
            out.push('\n');
        }
        let fmt = |c: Option<usize>| c.map_or_else(|| "-".to_string(), |e| e.to_string());
        let _ = writeln!(
            out,
            "#chosen NES={} ES={} WES={}",
            fmt(self.chosen[0]),
            fmt(self.chosen[1]),
            fmt(self.chosen[2])
        );
        out
    }

    pub fn from_csv(text: &str) -> Result<RunLog> {
        let mut log = RunLog::default();
        let mut header: Option<usize> = None;
        let mut offset = 0u64;
        for raw in text.split_inclusive('\n') {
            let line = raw.trim_end_matches(['\n', '\r']);
            let here = offset;
            offset += raw.len() as u64;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#chosen") {
                for tok in rest.split_whitespace() {
                    let (name, val) = tok.split_once('=').ok_or_else(|| {
                        Error::parse(here, format!("bad selection token {tok:?}"))
                    })?;
                    let policy: PolicyKind = name
                        .parse()
                        .map_err(|_| Error::parse(here, format!("unknown policy {name:?}")))?;
                    log.chosen[policy.index()] = if val == "-" {
                        None
                    } else {
                        Some(
                            val.parse()
                                .map_err(|_| Error::parse(here, format!("bad epoch {val:?}")))?,
                        )
                    };
                }
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    let (k, v) = (k.trim(), v.trim());
                    if k == "wall_time_s" {
                        log.wall_time_s = v.parse().ok();
                    } else {
                        log.config.push((k.to_string(), v.to_string()));
                    }
                }
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if header.is_none() {
                if cols.len() < 5
                    || cols[..5]
                        != [
                            "epoch",
                            "train_loss",
                            "noisy_val_acc",
                            "clean_val_acc",
                            "clean_test_acc",
                        ]
                {
                    return Err(Error::parse(here, "missing run log header"));
                }
                header = Some(cols.len());
                continue;
            }
            let width = header.unwrap();
            if cols.len() != width {
                return Err(Error::parse(
                    here,
                    format!("row has {} columns, header has {width}", cols.len()),
                ));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(here, format!("bad number {s:?}")))
            };
            let epoch = cols[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(here, format!("bad epoch {:?}", cols[0])))?;
            let gvector = if width > 5 {
                Some(
                    cols[5..]
                        .iter()
                        .map(|s| num(s))
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            log.records.push(EpochRecord {
                epoch,
                train_loss: num(cols[1])?,
                noisy_val_acc: num(cols[2])?,
                clean_val_acc: num(cols[3])?,
                clean_test_acc: num(cols[4])?,
                gvector,
            });
        }
        if header.is_none() {
            return Err(Error::parse(offset, "missing run log header"));
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(g: bool) -> RunLog {
        let mut log = RunLog::default();
        log.echo("loss", "ce");
        log.echo("noise.eta", 0.36);
        for e in 1..=3 {
            log.records.push(EpochRecord {
                epoch: e,
                train_loss: 1.0 / e as f64,
                noisy_val_acc: 0.1 * e as f64,
                clean_val_acc: 0.2 * e as f64,
                clean_test_acc: 1.0 / 3.0,
                gvector: g.then(|| vec![0.7, 0.2, 0.1]),
            });
        }
        log.chosen = [Some(3), Some(2), None];
        log.wall_time_s = Some(1.25);
        log
    }

    #[test]
    fn csv_round_trip() {
        for g in [false, true] {
            let log = sample(g);
            let text = log.to_csv();
            assert_eq!(RunLog::from_csv(&text).unwrap(), log);
        }
    }

    #[test]
    fn csv_layout() {
        let text = sample(true).to_csv();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# loss = ce");
        assert_eq!(
            lines[3],
            "epoch,train_loss,noisy_val_acc,clean_val_acc,clean_test_acc,g1,g2,g3"
        );
        assert_eq!(*lines.last().unwrap(), "#chosen NES=3 ES=2 WES=-");
    }

    #[test]
    fn rejects_malformed() {
        assert!(RunLog::from_csv("").is_err());
        assert!(RunLog::from_csv(
            "epoch,train_loss,noisy_val_acc,clean_val_acc,clean_test_acc\n1,2\n"
        )
        .is_err());
        assert!(RunLog::from_csv(
            "epoch,train_loss,noisy_val_acc,clean_val_acc,clean_test_acc\n#chosen FOO=1\n"
        )
        .is_err());
    }
}
