use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::recommend::{Recommendation, Verdict};
use crate::error::{Error, Result};
use crate::grid::{ControlAction, PowerNetwork};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub recommendation_id: u64,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default)]
    pub substitute: Option<ControlAction>,
    /// Full recommendation at the time of the verdict, for audit.
    pub recommendation: Recommendation,
}

/// Recommendations awaiting or holding a verdict, plus the append-only log.
#[derive(Debug, Default)]
pub struct FeedbackStore {
    path: Option<PathBuf>,
    recommendations: BTreeMap<u64, Recommendation>,
    records: Vec<FeedbackRecord>,
}

impl FeedbackStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens or creates an NDJSON log, replaying any verdicts it holds.
    pub fn open(path: &Path) -> Result<Self> {
        let mut store = Self { path: Some(path.to_path_buf()), ..Self::default() };
        if path.exists() {
            let f = std::io::BufReader::new(std::fs::File::open(path)?);
            for (n, line) in f.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: FeedbackRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::InvalidArgument(format!("{}:{}: {e}", path.display(), n + 1)))?;
                store.apply(rec);
            }
        }
        Ok(store)
    }

    fn apply(&mut self, rec: FeedbackRecord) {
        let mut r = rec.recommendation.clone();
        r.verdict = Some(rec.verdict);
        self.recommendations.insert(rec.recommendation_id, r);
        self.records.push(rec);
    }

    pub fn insert(&mut self, rec: Recommendation) {
        self.recommendations.insert(rec.id, rec);
    }

    pub fn get(&self, id: u64) -> Option<&Recommendation> {
        self.recommendations.get(&id)
    }

    pub fn recommendations(&self) -> impl Iterator<Item = &Recommendation> {
        self.recommendations.values()
    }

    pub fn records(&self) -> &[FeedbackRecord] {
        &self.records
    }

    pub fn next_id(&self) -> u64 {
        self.recommendations.keys().next_back().map_or(1, |k| k + 1)
    }

    /// Stores a verdict. Repeating the latest verdict for an id changes
    /// nothing and returns `false`.
    pub fn record(
        &mut self,
        id: u64,
        verdict: Verdict,
        note: Option<String>,
        substitute: Option<ControlAction>,
        net: &PowerNetwork,
    ) -> Result<(FeedbackRecord, bool)> {
        let rec = self.recommendations.get(&id).ok_or(Error::UnknownRecommendation(id))?;
        if let Some(s) = &substitute {
            s.validate(net)?;
        }
        if rec.verdict == Some(verdict) {
            let last = self.records.iter().rev().find(|r| r.recommendation_id == id).cloned();
            if let Some(last) = last {
                return Ok((last, false));
            }
        }
        let mut snapshot = rec.clone();
        snapshot.verdict = None;
        let entry = FeedbackRecord { recommendation_id: id, verdict, note, substitute, recommendation: snapshot };
        if let Some(path) = &self.path {
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{}", serde_json::to_string(&entry)?)?;
        }
        self.apply(entry.clone());
        Ok((entry, true))
    }
}
