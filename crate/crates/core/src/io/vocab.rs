use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub const NO_RELATIONSHIP: &str = "no_relationship";
pub const NO_ATTRIBUTE: &str = "no_attribute";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabKind {
    Object,
    Predicate,
    Attribute,
}

impl VocabKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VocabKind::Object => "object",
            VocabKind::Predicate => "predicate",
            VocabKind::Attribute => "attribute",
        }
    }

    /// Name required at index 0, if any.
    pub fn background(self) -> Option<&'static str> {
        match self {
            VocabKind::Object => None,
            VocabKind::Predicate => Some(NO_RELATIONSHIP),
            VocabKind::Attribute => Some(NO_ATTRIBUTE),
        }
    }
}

impl fmt::Display for VocabKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered label space. A label's index is its position.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    kind: VocabKind,
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(kind: VocabKind, names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidArgument(format!("empty {kind} vocabulary")));
        }
        if let Some(bg) = kind.background() {
            if names[0] != bg {
                return Err(Error::InvalidArgument(format!(
                    "{kind} vocabulary must start with {bg:?}, found {:?}",
                    names[0]
                )));
            }
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidArgument(format!("empty name in {kind} vocabulary")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate {kind} name {name:?}"
                )));
            }
        }
        Ok(Vocabulary { kind, names, index })
    }

    pub fn from_names<S: AsRef<str>>(kind: VocabKind, names: &[S]) -> Result<Self> {
        Self::new(kind, names.iter().map(|s| s.as_ref().to_string()).collect())
    }

    pub fn read(path: impl AsRef<Path>, kind: VocabKind) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Self::new(kind, names)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.names.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn lookup(&self, name: &str) -> Result<usize> {
        self.get(name).ok_or_else(|| Error::UnknownLabel {
            kind: self.kind.as_str(),
            label: name.to_string(),
        })
    }
}

/// The three label spaces a dataset needs.
#[derive(Debug, Clone)]
pub struct Vocabularies {
    pub objects: Vocabulary,
    pub predicates: Vocabulary,
    pub attributes: Vocabulary,
}
