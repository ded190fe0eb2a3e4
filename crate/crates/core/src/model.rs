//! Problems, reformulated variants, and the JSON Lines dataset schema shared
//! by every other module.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate problem id {0:?}")]
    DuplicateId(String),
    #[error("unknown problem id {0:?}")]
    UnknownProblem(String),
    #[error("variant for {problem_id} at level {level} rejected: {reason}")]
    InvalidVariant {
        problem_id: String,
        level: DifficultyLevel,
        reason: String,
    },
    #[error("{problem_id} missing level {level}")]
    MissingLevel {
        problem_id: String,
        level: DifficultyLevel,
    },
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// An open-ended question with its exact gold answer.
///
/// The gold answer is kept verbatim (LaTeX included); canonicalization happens
/// on demand in [`crate::verify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_rate_prior: Option<f64>,
}

/// Reformulation difficulty, easiest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum DifficultyLevel {
    Mcq4 = 1,
    Mcq10 = 2,
    Cloze = 3,
    OpenEnded = 4,
}

impl DifficultyLevel {
    pub const ALL: [DifficultyLevel; 4] = [
        DifficultyLevel::Mcq4,
        DifficultyLevel::Mcq10,
        DifficultyLevel::Cloze,
        DifficultyLevel::OpenEnded,
    ];

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    /// Zero-based slot, handy for fixed-size per-level arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn next(self) -> Option<DifficultyLevel> {
        match self {
            DifficultyLevel::Mcq4 => Some(DifficultyLevel::Mcq10),
            DifficultyLevel::Mcq10 => Some(DifficultyLevel::Cloze),
            DifficultyLevel::Cloze => Some(DifficultyLevel::OpenEnded),
            DifficultyLevel::OpenEnded => None,
        }
    }

    /// Number of answer options for the multiple-choice levels.
    pub fn option_count(self) -> Option<usize> {
        match self {
            DifficultyLevel::Mcq4 => Some(4),
            DifficultyLevel::Mcq10 => Some(10),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DifficultyLevel::Mcq4 => "mcq4",
            DifficultyLevel::Mcq10 => "mcq10",
            DifficultyLevel::Cloze => "cloze",
            DifficultyLevel::OpenEnded => "oeq",
        }
    }
}

impl TryFrom<u8> for DifficultyLevel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(DifficultyLevel::Mcq4),
            2 => Ok(DifficultyLevel::Mcq10),
            3 => Ok(DifficultyLevel::Cloze),
            4 => Ok(DifficultyLevel::OpenEnded),
            other => Err(format!("difficulty level must be 1..=4, got {other}")),
        }
    }
}

impl From<DifficultyLevel> for u8 {
    fn from(l: DifficultyLevel) -> u8 {
        l as u8
    }
}

impl fmt::Display for DifficultyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum Validation {
    Valid,
    Invalid(String),
}

impl Validation {
    pub fn invalid(reason: impl Into<String>) -> Self {
        Validation::Invalid(reason.into())
    }

    pub fn is_valid(&self) -> bool {
        matches!(self, Validation::Valid)
    }
}

/// A reformulated question at one difficulty level.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub problem_id: String,
    pub level: DifficultyLevel,
    pub prompt: String,
    /// Present for the multiple-choice levels only.
    pub options: Option<Vec<String>>,
    /// Present for cloze only.
    pub mask: Option<String>,
    pub validation: Validation,
    /// Set when the gold holds several separate numbers and the cloze mask
    /// semantics are ambiguous.
    pub needs_review: bool,
}

impl Variant {
    /// The level-4 variant: the original question, untouched.
    pub fn open_ended(problem: &Problem) -> Variant {
        Variant {
            problem_id: problem.id.clone(),
            level: DifficultyLevel::OpenEnded,
            prompt: problem.question.clone(),
            options: None,
            mask: None,
            validation: Validation::Valid,
            needs_review: false,
        }
    }

    pub fn to_record(&self) -> VariantRecord {
        VariantRecord {
            problem_id: self.problem_id.clone(),
            level: self.level,
            prompt: self.prompt.clone(),
            options: self.options.clone(),
            mask: self.mask.clone(),
        }
    }
}

/// One line of the variant sidecar file. Validation is not serialized; it is
/// recomputed against the gold answer when the sidecar is read back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantRecord {
    pub problem_id: String,
    pub level: DifficultyLevel,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    problems: Vec<Problem>,
    index: HashMap<String, usize>,
    variants: BTreeMap<String, BTreeMap<DifficultyLevel, Variant>>,
    hard_flag: BTreeMap<String, bool>,
}

impl Dataset {
    pub fn from_problems(problems: Vec<Problem>) -> Result<Dataset, DatasetError> {
        let mut ds = Dataset::default();
        for p in problems {
            ds.push_problem(p)?;
        }
        Ok(ds)
    }

    fn push_problem(&mut self, p: Problem) -> Result<(), DatasetError> {
        if self.index.contains_key(&p.id) {
            return Err(DatasetError::DuplicateId(p.id));
        }
        self.index.insert(p.id.clone(), self.problems.len());
        self.problems.push(p);
        Ok(())
    }

    pub fn problems(&self) -> &[Problem] {
        &self.problems
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn problem(&self, id: &str) -> Option<&Problem> {
        self.index.get(id).map(|&i| &self.problems[i])
    }

    pub fn variant(&self, id: &str, level: DifficultyLevel) -> Option<&Variant> {
        self.variants.get(id).and_then(|m| m.get(&level))
    }

    pub fn variants_of(&self, id: &str) -> Option<&BTreeMap<DifficultyLevel, Variant>> {
        self.variants.get(id)
    }

    pub fn all_variants(&self) -> impl Iterator<Item = &Variant> {
        self.variants.values().flat_map(|m| m.values())
    }

    /// Store a validated variant; a second variant at the same level replaces
    /// the first.
    pub fn attach_variant(&mut self, variant: Variant) -> Result<(), DatasetError> {
        if !self.index.contains_key(&variant.problem_id) {
            return Err(DatasetError::UnknownProblem(variant.problem_id));
        }
        if let Validation::Invalid(reason) = &variant.validation {
            return Err(DatasetError::InvalidVariant {
                problem_id: variant.problem_id.clone(),
                level: variant.level,
                reason: reason.clone(),
            });
        }
        self.variants
            .entry(variant.problem_id.clone())
            .or_default()
            .insert(variant.level, variant);
        Ok(())
    }

    pub fn is_hard(&self, id: &str) -> bool {
        self.hard_flag.get(id).copied().unwrap_or(false)
    }

    pub fn set_hard(&mut self, id: &str, hard: bool) -> Result<(), DatasetError> {
        if !self.index.contains_key(id) {
            return Err(DatasetError::UnknownProblem(id.to_string()));
        }
        self.hard_flag.insert(id.to_string(), hard);
        Ok(())
    }

    pub fn hard_ids(&self) -> Vec<&str> {
        self.problems
            .iter()
            .filter(|p| self.is_hard(&p.id))
            .map(|p| p.id.as_str())
            .collect()
    }

    /// Every hard-flagged problem must carry a valid variant at all four levels.
    pub fn check_ready(&self) -> Result<(), DatasetError> {
        for id in self.hard_ids() {
            for level in DifficultyLevel::ALL {
                match self.variant(id, level) {
                    Some(v) if v.validation.is_valid() => {}
                    _ => {
                        return Err(DatasetError::MissingLevel {
                            problem_id: id.to_string(),
                            level,
                        })
                    }
                }
            }
        }
        Ok(())
    }

    /// Keep only the problems accepted by `keep`, along with their variants and flags.
    pub fn retain(&mut self, mut keep: impl FnMut(&Problem) -> bool) {
        self.problems.retain(|p| keep(p));
        self.index = self
            .problems
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        let index = &self.index;
        self.variants.retain(|id, _| index.contains_key(id));
        self.hard_flag.retain(|id, _| index.contains_key(id));
    }

    pub fn save_problems(&self, path: &Path) -> Result<(), DatasetError> {
        write_jsonl(path, self.problems.iter())
    }

    pub fn save_variants(&self, path: &Path) -> Result<(), DatasetError> {
        let records: Vec<VariantRecord> = self.all_variants().map(Variant::to_record).collect();
        write_jsonl(path, records.iter())
    }
}

/// Read a JSON Lines problem file. Blank lines are skipped.
pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let problems: Vec<(usize, Problem)> = read_jsonl(path)?;
    let mut ds = Dataset::default();
    for (line, p) in problems {
        if p.gold_answer.trim().is_empty() {
            return Err(DatasetError::Parse {
                line,
                message: "field `gold_answer` is empty".into(),
            });
        }
        if let Some(r) = p.pass_rate_prior {
            if !(0.0..=1.0).contains(&r) {
                return Err(DatasetError::Parse {
                    line,
                    message: format!("field `pass_rate_prior` out of [0,1]: {r}"),
                });
            }
        }
        ds.push_problem(p)?;
    }
    Ok(ds)
}

pub fn load_variant_records(path: &Path) -> Result<Vec<VariantRecord>, DatasetError> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<Vec<(usize, T)>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, value));
    }
    Ok(out)
}

pub(crate) fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl Iterator<Item = &'a T>,
) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("serializable record");
        writeln!(w, "{line}").map_err(|e| DatasetError::io(path, e))?;
    }
    w.flush().map_err(|e| DatasetError::io(path, e))
}
