//! Corpus manifests: CSV parsing, split hygiene checks, per-split
//! statistics, and composition-level merging of two corpora.
//!
//! A manifest row is one recorded performance. Compositions are
//! identified by case- and whitespace-insensitive (composer, title)
//! pairs; split rules operate at the composition level.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact manifest header, in column order.
pub const MANIFEST_HEADER: [&str; 8] =
    ["audio", "midi", "composer", "title", "year", "split", "duration_sec", "notes"];

/// Allowed deviation from the 80/10/10 split targets, in percentage
/// points.
pub const DEFAULT_SPLIT_SLACK: f64 = 3.0;

const SPLIT_TARGETS: [(Split, f64); 3] =
    [(Split::Train, 80.0), (Split::Validation, 10.0), (Split::Test, 10.0)];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("manifest header must be `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("manifest row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One recorded performance: audio/label paths plus catalogue metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio: String,
    pub midi: String,
    pub composer: String,
    pub title: String,
    pub year: i32,
    pub split: Split,
    pub duration_sec: f64,
    pub notes: u64,
}

impl ManifestEntry {
    fn check(&self, row: usize) -> Result<(), DatasetError> {
        if self.audio.trim().is_empty() || self.midi.trim().is_empty() {
            return Err(DatasetError::Row { row, message: "audio and midi paths must be non-empty".into() });
        }
        if !(self.duration_sec > 0.0) {
            return Err(DatasetError::Row {
                row,
                message: format!("duration_sec {} must be positive", self.duration_sec),
            });
        }
        Ok(())
    }

    /// Composition identity: composer and title lowercased with
    /// whitespace runs folded to single spaces.
    pub fn composition_key(&self) -> String {
        normalize_key(&self.composer, &self.title)
    }
}

pub fn normalize_key(composer: &str, title: &str) -> String {
    let fold = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    format!("{}::{}", fold(composer), fold(title))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn from_entries(entries: Vec<ManifestEntry>) -> Result<Self, DatasetError> {
        for (i, e) in entries.iter().enumerate() {
            e.check(i + 1)?;
        }
        Ok(Self { entries })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DatasetError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let found: Vec<String> =
            rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if found != MANIFEST_HEADER {
            return Err(DatasetError::Header {
                expected: MANIFEST_HEADER.join(","),
                found: found.join(","),
            });
        }
        let mut entries = Vec::new();
        for (i, record) in rdr.deserialize::<ManifestEntry>().enumerate() {
            let entry = record.map_err(|e| DatasetError::Row {
                row: i + 1,
                message: e.to_string(),
            })?;
            entry.check(i + 1)?;
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for entry in &self.entries {
            wtr.serialize(entry)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn composition_keys(&self) -> BTreeSet<String> {
        self.entries.iter().map(|e| e.composition_key()).collect()
    }
}

/// A hard split-hygiene failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SplitViolation {
    /// The same composition appears in more than one split.
    CrossSplit { composition: String, splits: Vec<Split> },
    /// A split's share of total time is outside its target band.
    Proportion { split: Split, share_percent: f64, target_percent: f64, slack_points: f64 },
}

impl fmt::Display for SplitViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitViolation::CrossSplit { composition, splits } => {
                let names: Vec<&str> = splits.iter().map(Split::as_str).collect();
                write!(f, "composition `{}` appears in splits {}", composition, names.join(", "))
            }
            SplitViolation::Proportion { split, share_percent, target_percent, slack_points } => {
                write!(
                    f,
                    "split {} holds {:.1}% of total time, outside {:.0}% +/- {:.0} points",
                    split, share_percent, target_percent, slack_points
                )
            }
        }
    }
}

/// Hard violations plus advisory warnings from the split checks.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SplitCheckReport {
    pub violations: Vec<SplitViolation>,
    pub warnings: Vec<String>,
}

impl SplitCheckReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks split hygiene: no composition may straddle splits (hard
/// violation), total time must divide roughly 80/10/10 within
/// `slack_points` (hard violation), and per-composer imbalance or
/// popular compositions held out of train are reported as warnings only,
/// since they cannot always be avoided.
pub fn validate_splits(
    manifest: &Manifest,
    slack_points: f64,
) -> Result<SplitCheckReport, DatasetError> {
    if manifest.entries.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    let mut report = SplitCheckReport::default();

    // (a) compositions present in more than one split
    let mut splits_by_key: BTreeMap<String, BTreeSet<Split>> = BTreeMap::new();
    for e in &manifest.entries {
        splits_by_key.entry(e.composition_key()).or_default().insert(e.split);
    }
    for (composition, splits) in &splits_by_key {
        if splits.len() > 1 {
            report.violations.push(SplitViolation::CrossSplit {
                composition: composition.clone(),
                splits: splits.iter().copied().collect(),
            });
        }
    }

    // (b) global time proportions
    let total: f64 = manifest.entries.iter().map(|e| e.duration_sec).sum();
    for (split, target) in SPLIT_TARGETS {
        let held: f64 = manifest
            .entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.duration_sec)
            .sum();
        // + 0.0 turns the -0.0 an empty sum yields into +0.0 for display
        let share = 100.0 * held / total + 0.0;
        if (share - target).abs() > slack_points {
            report.violations.push(SplitViolation::Proportion {
                split,
                share_percent: share,
                target_percent: target,
                slack_points,
            });
        }
    }

    // (c) advisory: per-composer time balance, for composers with more
    // than one performance
    let mut composer_time: BTreeMap<String, BTreeMap<Split, f64>> = BTreeMap::new();
    let mut composer_entries: BTreeMap<String, usize> = BTreeMap::new();
    for e in &manifest.entries {
        let name = e.composer.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        *composer_time.entry(name.clone()).or_default().entry(e.split).or_default() +=
            e.duration_sec;
        *composer_entries.entry(name).or_default() += 1;
    }
    for (composer, by_split) in &composer_time {
        if composer_entries[composer] < 2 {
            continue;
        }
        let composer_total: f64 = by_split.values().sum();
        for (split, target) in SPLIT_TARGETS {
            let share = 100.0 * by_split.get(&split).copied().unwrap_or(0.0) / composer_total;
            if (share - target).abs() > slack_points {
                report.warnings.push(format!(
                    "composer `{}`: {:.1}% of their time in {} (target {:.0}%)",
                    composer, share, split, target
                ));
            }
        }
    }

    // (c) advisory: widely performed compositions are preferably trained on
    for (key, splits) in &splits_by_key {
        let performances =
            manifest.entries.iter().filter(|e| &e.composition_key() == key).count();
        if performances >= 3 && !splits.contains(&Split::Train) {
            report.warnings.push(format!(
                "popular composition `{}` ({} performances) has none in train",
                key, performances
            ));
        }
    }

    Ok(report)
}

/// One statistics row: counts and sums for a split (or the whole
/// corpus).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub split: String,
    pub performances: usize,
    pub compositions: usize,
    pub duration_hours: f64,
    pub notes: u64,
}

/// Per-split rows plus a totals row. The totals row counts distinct
/// compositions over the whole corpus, so it can be smaller than the sum
/// of the per-split composition counts when a composition straddles
/// splits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
    pub total: StatsRow,
}

fn stats_row(name: &str, entries: &[&ManifestEntry]) -> StatsRow {
    let compositions: BTreeSet<String> =
        entries.iter().map(|e| e.composition_key()).collect();
    StatsRow {
        split: name.to_string(),
        performances: entries.len(),
        compositions: compositions.len(),
        // + 0.0 turns the -0.0 an empty sum yields into +0.0 for display
        duration_hours: entries.iter().map(|e| e.duration_sec).sum::<f64>() / 3600.0 + 0.0,
        notes: entries.iter().map(|e| e.notes).sum(),
    }
}

pub fn stats(manifest: &Manifest) -> StatsTable {
    let rows = Split::ALL
        .iter()
        .map(|split| {
            let entries: Vec<&ManifestEntry> =
                manifest.entries.iter().filter(|e| e.split == *split).collect();
            stats_row(split.as_str(), &entries)
        })
        .collect();
    let all: Vec<&ManifestEntry> = manifest.entries.iter().collect();
    StatsTable { rows, total: stats_row("total", &all) }
}

/// Where each composition in a merged manifest came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionProvenance {
    pub composition: String,
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeResult {
    pub manifest: Manifest,
    pub provenance: Vec<CompositionProvenance>,
}

/// Union of two manifests with composition-level deduplication: every
/// performance of the first manifest is kept; performances from the
/// second are kept only for compositions the first does not contain.
/// Provenance records which source(s) held each composition.
pub fn merge_manifests(
    first: &Manifest,
    first_label: &str,
    second: &Manifest,
    second_label: &str,
) -> MergeResult {
    let first_keys = first.composition_keys();
    let second_keys = second.composition_keys();
    let mut entries = first.entries.clone();
    entries.extend(
        second
            .entries
            .iter()
            .filter(|e| !first_keys.contains(&e.composition_key()))
            .cloned(),
    );
    let provenance = first_keys
        .union(&second_keys)
        .map(|key| {
            let mut sources = Vec::new();
            if first_keys.contains(key) {
                sources.push(first_label.to_string());
            }
            if second_keys.contains(key) {
                sources.push(second_label.to_string());
            }
            CompositionProvenance { composition: key.clone(), sources }
        })
        .collect();
    MergeResult { manifest: Manifest { entries }, provenance }
}
