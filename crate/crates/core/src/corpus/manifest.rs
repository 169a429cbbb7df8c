//! Tab-separated corpus metadata files.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "dev" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub split: Split,
    /// `None` for untranscribed audio.
    pub transcript_keywords: Option<BTreeSet<String>>,
}

/// Utterance list. On disk: `id<TAB>path<TAB>split<TAB>keywords`, where
/// keywords is a comma-separated list, empty for "no keywords", or `-` for
/// untranscribed entries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        file: file.display().to_string(),
        line,
        msg: msg.into(),
    }
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(CorpusError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let kws = match &e.transcript_keywords {
                None => "-".to_string(),
                Some(set) => set.iter().cloned().collect::<Vec<_>>().join(","),
            };
            writeln!(s, "{}\t{}\t{}\t{}", e.id, e.path, e.split, kws).unwrap();
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(parse_err(
                    origin,
                    i + 1,
                    format!("expected 4 columns, found {}", cols.len()),
                ));
            }
            let split = Split::parse(cols[2])
                .ok_or_else(|| parse_err(origin, i + 1, format!("unknown split {:?}", cols[2])))?;
            let transcript_keywords = match cols[3] {
                "-" => None,
                "" => Some(BTreeSet::new()),
                list => Some(list.split(',').map(str::to_string).collect()),
            };
            entries.push(ManifestEntry {
                id: cols[0].to_string(),
                path: cols[1].to_string(),
                split,
                transcript_keywords,
            });
        }
        Self::new(entries)
    }

    /// Loads a manifest and checks that every path resolves relative to the
    /// manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let m = Self::parse(&fs::read_to_string(path)?, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &m.entries {
            if !base.join(&e.path).exists() {
                return Err(CorpusError::MissingPath(e.path.clone()));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn resolve(&self, manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
        manifest_path.parent().unwrap_or(Path::new(".")).join(&entry.path)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> + '_ {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Keyword labels for the transcribed entries of `split`.
    pub fn labels(&self, split: Split) -> BTreeMap<String, BTreeSet<String>> {
        self.split(split)
            .filter_map(|e| e.transcript_keywords.clone().map(|k| (e.id.clone(), k)))
            .collect()
    }
}

/// Ordered keyword vocabulary with exemplar ids per keyword.
///
/// Keyword order is lexicographic by id and fixes the column order of every
/// score and target table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSet {
    keywords: Vec<String>,
    exemplars: BTreeMap<String, Vec<String>>,
}

impl KeywordSet {
    pub fn new(exemplars: BTreeMap<String, Vec<String>>) -> Result<Self, CorpusError> {
        if exemplars.is_empty() {
            return Err(CorpusError::InvalidKeywordSet("no keywords".into()));
        }
        let mut seen = HashSet::new();
        for (kw, exs) in &exemplars {
            if exs.is_empty() {
                return Err(CorpusError::InvalidKeywordSet(format!(
                    "keyword {kw:?} has no exemplars"
                )));
            }
            for ex in exs {
                if !seen.insert(ex.as_str()) {
                    return Err(CorpusError::DuplicateId(ex.clone()));
                }
            }
        }
        Ok(Self {
            keywords: exemplars.keys().cloned().collect(),
            exemplars,
        })
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn exemplars(&self, keyword: &str) -> &[String] {
        self.exemplars.get(keyword).map_or(&[], Vec::as_slice)
    }

    pub fn index_of(&self, keyword: &str) -> Option<usize> {
        self.keywords.binary_search_by(|k| k.as_str().cmp(keyword)).ok()
    }

    /// One `keyword<TAB>exemplar_id` line per exemplar.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (kw, exs) in &self.exemplars {
            for ex in exs {
                writeln!(s, "{kw}\t{ex}").unwrap();
            }
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self, CorpusError> {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (kw, ex) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(origin, i + 1, "expected keyword<TAB>exemplar"))?;
            map.entry(kw.to_string()).or_default().push(ex.to_string());
        }
        Self::new(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path)?, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

/// One keyword splice, frames `start..end` (end exclusive).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Occurrence {
    pub utterance: String,
    pub keyword: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub occurrences: Vec<Occurrence>,
}

impl GroundTruth {
    pub fn keywords_of(&self, utterance: &str) -> BTreeSet<String> {
        self.occurrences
            .iter()
            .filter(|o| o.utterance == utterance)
            .map(|o| o.keyword.clone())
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for o in &self.occurrences {
            writeln!(s, "{}\t{}\t{}\t{}", o.utterance, o.keyword, o.start, o.end).unwrap();
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self, CorpusError> {
        let mut occurrences = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(parse_err(origin, i + 1, "expected 4 columns"));
            }
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| parse_err(origin, i + 1, format!("bad frame index {s:?}")))
            };
            occurrences.push(Occurrence {
                utterance: cols[0].to_string(),
                keyword: cols[1].to_string(),
                start: num(cols[2])?,
                end: num(cols[3])?,
            });
        }
        Ok(Self { occurrences })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path)?, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }
}
