//! Evaluation records: a human-readable table and line-delimited JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::metrics::{mean, F1Score};

/// One measured F1 (per seed) or a mean over seeds (`seed = None`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub section: String,
    pub method: String,
    pub setting: String,
    pub seed: Option<u64>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl EvalRecord {
    pub fn new(section: &str, method: &str, setting: &str, seed: u64, score: &F1Score) -> Self {
        Self {
            section: section.into(),
            method: method.into(),
            setting: setting.into(),
            seed: Some(seed),
            f1: score.f1,
            precision: score.precision,
            recall: score.recall,
            extra: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.extra.insert(key.into(), value);
        self
    }

    fn key(&self) -> (String, String, String) {
        (self.section.clone(), self.method.clone(), self.setting.clone())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn push(&mut self, r: EvalRecord) {
        self.records.push(r);
    }

    pub fn extend(&mut self, other: EvalReport) {
        self.records.extend(other.records);
    }

    pub fn per_seed(&self) -> impl Iterator<Item = &EvalRecord> {
        self.records.iter().filter(|r| r.seed.is_some())
    }

    /// Mean over seeds for each (section, method, setting), in first-seen order.
    pub fn means(&self) -> Vec<EvalRecord> {
        let mut order: Vec<(String, String, String)> = Vec::new();
        let mut groups: BTreeMap<(String, String, String), Vec<&EvalRecord>> = BTreeMap::new();
        for r in self.per_seed() {
            let k = r.key();
            if !groups.contains_key(&k) {
                order.push(k.clone());
            }
            groups.entry(k).or_default().push(r);
        }
        order
            .into_iter()
            .map(|k| {
                let rs = &groups[&k];
                let col = |f: fn(&EvalRecord) -> f64| mean(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
                let mut extra = BTreeMap::new();
                for key in rs[0].extra.keys() {
                    let vals: Vec<f64> = rs.iter().filter_map(|r| r.extra.get(key).copied()).collect();
                    extra.insert(key.clone(), mean(&vals));
                }
                extra.insert("seeds".into(), rs.len() as f64);
                EvalRecord {
                    section: k.0.clone(),
                    method: k.1.clone(),
                    setting: k.2.clone(),
                    seed: None,
                    f1: col(|r| r.f1),
                    precision: col(|r| r.precision),
                    recall: col(|r| r.recall),
                    extra,
                }
            })
            .collect()
    }

    /// Mean F1 of one (section, method, setting) group.
    pub fn mean_f1(&self, section: &str, method: &str, setting: &str) -> Option<f64> {
        self.means()
            .into_iter()
            .find(|r| r.section == section && r.method == method && r.setting == setting)
            .map(|r| r.f1)
    }

    /// Per-seed F1 values of one group, ordered by seed.
    pub fn seed_f1s(&self, section: &str, method: &str, setting: &str) -> Vec<(u64, f64)> {
        let mut v: Vec<(u64, f64)> = self
            .per_seed()
            .filter(|r| r.section == section && r.method == method && r.setting == setting)
            .map(|r| (r.seed.expect("per-seed"), r.f1))
            .collect();
        v.sort_by_key(|x| x.0);
        v
    }

    /// Per-seed records followed by the means, one JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.per_seed().cloned().chain(self.means()) {
            out.push_str(&serde_json::to_string(&r).expect("records serialise"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: EvalRecord = serde_json::from_str(line).map_err(|e| Error::Load {
                path: "<report>".into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if r.seed.is_some() {
                records.push(r);
            }
        }
        Ok(Self { records })
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// Fixed-width table of the means.
    pub fn to_table(&self) -> String {
        let means = self.means();
        let extra_keys: Vec<String> = {
            let mut k: Vec<String> = means
                .iter()
                .flat_map(|r| r.extra.keys().cloned())
                .filter(|k| k != "seeds")
                .collect();
            k.sort();
            k.dedup();
            k
        };
        let mut out = String::new();
        let _ = write!(out, "{:<10} {:<16} {:<14} {:>5} {:>7} {:>7} {:>7}", "section", "method", "setting", "seeds", "F1", "P", "R");
        for k in &extra_keys {
            let _ = write!(out, " {k:>9}");
        }
        out.push('\n');
        for r in &means {
            let _ = write!(
                out,
                "{:<10} {:<16} {:<14} {:>5} {:>7.2} {:>7.2} {:>7.2}",
                r.section,
                r.method,
                r.setting,
                r.extra["seeds"],
                100.0 * r.f1,
                100.0 * r.precision,
                100.0 * r.recall
            );
            for k in &extra_keys {
                match r.extra.get(k) {
                    Some(v) => {
                        let _ = write!(out, " {v:>9.4}");
                    }
                    None => {
                        let _ = write!(out, " {:>9}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(f1: f64) -> F1Score {
        F1Score {
            tp: 0,
            fp: 0,
            fn_: 0,
            precision: f1,
            recall: f1,
            f1,
        }
    }

    #[test]
    fn means_and_round_trip() {
        let mut r = EvalReport::default();
        r.push(EvalRecord::new("main", "safer", "gcn", 1, &score(0.5)).with("rho", 1.0));
        r.push(EvalRecord::new("main", "safer", "gcn", 2, &score(0.7)).with("rho", 0.5));
        r.push(EvalRecord::new("main", "text", "cnn", 1, &score(0.2)));
        let m = r.means();
        assert_eq!(m.len(), 2);
        assert!((m[0].f1 - 0.6).abs() < 1e-15);
        assert_eq!(m[0].extra["rho"], 0.75);
        let back = EvalReport::from_jsonl(&r.to_jsonl()).unwrap();
        assert_eq!(back, r);
        assert!(r.to_table().contains("safer"));
    }
}
