//! Contexts, labels, tabular selective classifiers and finite classes.
//!
//! Contexts are dense ids `1..=domain_size` and labels are dense ids
//! `1..=num_labels`. A classifier is a lookup table from context to either a
//! label or [`Prediction::Abstain`]. Every [`FunctionClass`] contains exactly one
//! all-abstaining classifier.

use std::fmt;

use rand::Rng;

use crate::error::{param, Error, Result};
use crate::rng::stream;

mod transcript;

pub use transcript::{Coin, RoundRecord, Transcript};

/// Context id, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Context(pub u32);

impl Context {
    #[inline]
    pub(crate) fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Class label, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub u16);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Output of a selective classifier, and the learner's action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Prediction {
    Label(Label),
    Abstain,
}

impl Prediction {
    #[inline]
    pub fn is_abstain(self) -> bool {
        matches!(self, Prediction::Abstain)
    }

    /// True when this prediction is a label different from `truth`.
    #[inline]
    pub fn is_mistake(self, truth: Label) -> bool {
        matches!(self, Prediction::Label(l) if l != truth)
    }

    pub fn label(self) -> Option<Label> {
        match self {
            Prediction::Label(l) => Some(l),
            Prediction::Abstain => None,
        }
    }
}

impl From<Label> for Prediction {
    fn from(l: Label) -> Self {
        Prediction::Label(l)
    }
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prediction::Label(l) => write!(f, "{l}"),
            Prediction::Abstain => f.write_str("_"),
        }
    }
}

/// A selective classifier stored as a total lookup table.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SelectiveClassifier {
    pub id: usize,
    table: Vec<Prediction>,
}

impl SelectiveClassifier {
    pub fn new(id: usize, table: Vec<Prediction>) -> Self {
        Self { id, table }
    }

    pub fn table(&self) -> &[Prediction] {
        &self.table
    }

    pub fn domain_size(&self) -> u32 {
        self.table.len() as u32
    }

    /// Looks up the classifier's output on `x`.
    pub fn evaluate(&self, x: Context) -> Result<Prediction> {
        if x.0 == 0 || x.0 as usize > self.table.len() {
            return Err(Error::Domain {
                context: x.0,
                domain_size: self.table.len() as u32,
            });
        }
        Ok(self.table[x.index()])
    }

    /// Unchecked lookup for hot loops; `x` must already be validated.
    #[inline]
    pub fn at(&self, x: Context) -> Prediction {
        self.table[x.index()]
    }

    pub fn abstains_everywhere(&self) -> bool {
        self.table.iter().all(|p| p.is_abstain())
    }

    pub fn abstention_count(&self) -> usize {
        self.table.iter().filter(|p| p.is_abstain()).count()
    }
}

/// A finite class of selective classifiers over a shared domain and label set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionClass {
    domain_size: u32,
    num_labels: u16,
    functions: Vec<SelectiveClassifier>,
    abstain_index: usize,
}

impl FunctionClass {
    /// Builds a class from raw tables.
    ///
    /// Every table must cover the whole domain with labels in range. The first
    /// all-abstaining table is kept as `f_⊥`, later copies are dropped, and one
    /// is appended when none is present. Ids are reassigned to list positions.
    pub fn new(domain_size: u32, num_labels: u16, tables: Vec<Vec<Prediction>>) -> Result<Self> {
        if domain_size == 0 {
            return Err(param("domain_size must be at least 1"));
        }
        if num_labels == 0 {
            return Err(param("num_labels must be at least 1"));
        }
        let mut kept: Vec<Vec<Prediction>> = Vec::with_capacity(tables.len() + 1);
        let mut abstain_index = None;
        for (i, table) in tables.into_iter().enumerate() {
            if table.len() != domain_size as usize {
                return Err(param(format!(
                    "function {i} has {} entries, domain has {domain_size}",
                    table.len()
                )));
            }
            for p in &table {
                if let Prediction::Label(Label(l)) = p {
                    if *l == 0 || *l > num_labels {
                        return Err(param(format!(
                            "function {i} uses label {l} outside [1, {num_labels}]"
                        )));
                    }
                }
            }
            if table.iter().all(|p| p.is_abstain()) {
                if abstain_index.is_some() {
                    continue;
                }
                abstain_index = Some(kept.len());
            }
            kept.push(table);
        }
        let abstain_index = match abstain_index {
            Some(i) => i,
            None => {
                kept.push(vec![Prediction::Abstain; domain_size as usize]);
                kept.len() - 1
            }
        };
        let functions = kept
            .into_iter()
            .enumerate()
            .map(|(id, table)| SelectiveClassifier::new(id, table))
            .collect();
        Ok(Self {
            domain_size,
            num_labels,
            functions,
            abstain_index,
        })
    }

    pub fn domain_size(&self) -> u32 {
        self.domain_size
    }

    pub fn num_labels(&self) -> u16 {
        self.num_labels
    }

    /// `N`, the number of classifiers.
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[SelectiveClassifier] {
        &self.functions
    }

    pub fn get(&self, id: usize) -> Option<&SelectiveClassifier> {
        self.functions.get(id)
    }

    pub fn abstain_index(&self) -> usize {
        self.abstain_index
    }

    pub fn contains_context(&self, x: Context) -> bool {
        x.0 >= 1 && x.0 <= self.domain_size
    }

    pub fn contains_label(&self, y: Label) -> bool {
        y.0 >= 1 && y.0 <= self.num_labels
    }

    /// Line-oriented text form.
    ///
    /// ```text
    /// class <|X|> <K> <N>
    /// <entry> <entry> ...      one line per function, `_` for abstain
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "class {} {} {}\n",
            self.domain_size,
            self.num_labels,
            self.functions.len()
        );
        for f in &self.functions {
            let row: Vec<String> = f.table.iter().map(|p| p.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the format written by [`FunctionClass::to_text`].
    ///
    /// The all-abstaining row must appear exactly once.
    pub fn from_text(text: &str) -> Result<Self> {
        let fmt_err = |line: usize, message: String| Error::Format { line, message };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (hline, header) = lines
            .next()
            .ok_or_else(|| fmt_err(1, "missing `class` header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "class" {
            return Err(fmt_err(hline, "expected `class <|X|> <K> <N>`".into()));
        }
        let num = |s: &str, what: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| fmt_err(hline, format!("bad {what} `{s}`")))
        };
        let domain_size = num(fields[1], "domain size")? as u32;
        let num_labels = num(fields[2], "label count")? as u16;
        let n = num(fields[3], "function count")? as usize;

        let mut tables = Vec::with_capacity(n);
        let mut abstain_rows = 0;
        for (lineno, line) in lines {
            let mut row = Vec::with_capacity(domain_size as usize);
            for tok in line.split_whitespace() {
                if tok == "_" {
                    row.push(Prediction::Abstain);
                } else {
                    let l = tok
                        .parse::<u16>()
                        .map_err(|_| fmt_err(lineno, format!("bad entry `{tok}`")))?;
                    if l == 0 || l > num_labels {
                        return Err(fmt_err(
                            lineno,
                            format!("label {l} outside [1, {num_labels}]"),
                        ));
                    }
                    row.push(Prediction::Label(Label(l)));
                }
            }
            if row.len() != domain_size as usize {
                return Err(fmt_err(
                    lineno,
                    format!("expected {domain_size} entries, found {}", row.len()),
                ));
            }
            if row.iter().all(|p| p.is_abstain()) {
                abstain_rows += 1;
            }
            tables.push(row);
        }
        if tables.len() != n {
            return Err(fmt_err(
                hline,
                format!("header declares {n} functions, found {}", tables.len()),
            ));
        }
        if abstain_rows != 1 {
            return Err(fmt_err(
                hline,
                format!("expected exactly one all-abstain row, found {abstain_rows}"),
            ));
        }
        Self::new(domain_size, num_labels, tables)
    }
}

/// The threshold class on `[1:n]`: `f_t(x) = ⊥` for `x ≤ t`, label 1 otherwise,
/// for `t = 0..=n`. Labels are `{1, 2}`; label 2 is never predicted.
pub fn make_threshold_class(n: u32) -> Result<FunctionClass> {
    if n == 0 {
        return Err(param("threshold class needs n >= 1"));
    }
    let tables = (0..=n)
        .map(|t| {
            (1..=n)
                .map(|x| {
                    if x <= t {
                        Prediction::Abstain
                    } else {
                        Prediction::Label(Label(1))
                    }
                })
                .collect()
        })
        .collect();
    FunctionClass::new(n, 2, tables)
}

/// Random tabular class: each entry abstains with probability `abstain_prob`,
/// otherwise takes a uniform label. Deterministic in `seed`.
pub fn make_random_class(
    domain_size: u32,
    num_labels: u16,
    n_functions: usize,
    abstain_prob: f64,
    seed: u64,
) -> Result<FunctionClass> {
    if n_functions == 0 {
        return Err(param("n_functions must be at least 1"));
    }
    if !(0.0..=1.0).contains(&abstain_prob) {
        return Err(param(format!("abstain_prob {abstain_prob} outside [0, 1]")));
    }
    if domain_size == 0 || num_labels == 0 {
        return Err(param("domain_size and num_labels must be positive"));
    }
    let mut rng = stream(seed);
    let tables = (0..n_functions)
        .map(|_| {
            (0..domain_size)
                .map(|_| {
                    if rng.random::<f64>() < abstain_prob {
                        Prediction::Abstain
                    } else {
                        Prediction::Label(Label(rng.random_range(1..=num_labels)))
                    }
                })
                .collect()
        })
        .collect();
    FunctionClass::new(domain_size, num_labels, tables)
}
