//! Experiment configuration files.
//!
//! The format is line oriented: `key = value` pairs grouped under `[class]`,
//! `[adversary]`, `[learner]` and `[run]` headers. A top-level `name` may
//! precede the first header. `#` starts a comment. Unknown sections or keys
//! are errors, and every error carries the 1-based line it came from.
//!
//! ```text
//! name = tight-vue
//!
//! [class]
//! kind = threshold
//! n = 15
//!
//! [adversary]
//! kind = threshold_tight
//! t_star = 8
//!
//! [learner]
//! algorithms = vue, vue_prod
//! p = T^-0.5, sqrt(N/T), 0.05
//! eta = p
//!
//! [run]
//! horizons = 1024, 2048, 4096
//! seeds = 10
//! ```
//!
//! Grid keys (`algorithms`, `p`, `eta`, `lambda`, `epsilon`, `horizons`) take
//! comma-separated lists; the sweep runs their Cartesian product.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use osc_core::adversary::{AdversarySpec, ContextLaw, LowerBoundVariant};
use osc_core::learner::{Algorithm, LearnerConfig, TieBreak};
use osc_core::model::{make_random_class, make_threshold_class, Context, FunctionClass, Label};

use crate::error::CliError;
use crate::sweep::{grid, GridPoint};

/// Source of the function class.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassSpec {
    Threshold {
        n: u32,
    },
    Random {
        domain_size: u32,
        num_labels: u16,
        n_functions: usize,
        abstain_prob: f64,
        seed: u64,
    },
    File(PathBuf),
}

impl ClassSpec {
    pub fn build(&self) -> Result<FunctionClass, CliError> {
        Ok(match self {
            ClassSpec::Threshold { n } => make_threshold_class(*n)?,
            ClassSpec::Random {
                domain_size,
                num_labels,
                n_functions,
                abstain_prob,
                seed,
            } => make_random_class(*domain_size, *num_labels, *n_functions, *abstain_prob, *seed)?,
            ClassSpec::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                FunctionClass::from_text(&text)?
            }
        })
    }
}

/// Exploration rate, possibly depending on the horizon and class size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateExpr {
    Fixed(f64),
    /// `T^e`.
    Power(f64),
    /// `min(√(N/T), 1/2)`.
    SqrtNOverT,
}

impl RateExpr {
    pub fn resolve(&self, n: usize, horizon: u32) -> f64 {
        match *self {
            RateExpr::Fixed(v) => v,
            RateExpr::Power(e) => (horizon as f64).powf(e),
            RateExpr::SqrtNOverT => (n as f64 / horizon as f64).sqrt().min(0.5),
        }
    }
}

impl fmt::Display for RateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateExpr::Fixed(v) => write!(f, "{v}"),
            RateExpr::Power(e) => write!(f, "T^{e}"),
            RateExpr::SqrtNOverT => f.write_str("sqrt(N/T)"),
        }
    }
}

impl FromStr for RateExpr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("sqrt(N/T)") {
            return Ok(RateExpr::SqrtNOverT);
        }
        if let Some(e) = s.strip_prefix("T^") {
            let e: f64 = e.trim().parse().map_err(|_| format!("bad exponent in `{s}`"))?;
            if e > 0.0 {
                return Err(format!("`{s}` grows with T; use a non-positive exponent"));
            }
            return Ok(RateExpr::Power(e));
        }
        s.parse::<f64>()
            .map(RateExpr::Fixed)
            .map_err(|_| format!("`{s}` is not a number, `T^e` or `sqrt(N/T)`"))
    }
}

/// Learning rate: a number, or tied to the exploration rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EtaExpr {
    Fixed(f64),
    SameAsP,
}

impl EtaExpr {
    pub fn resolve(&self, p: f64) -> f64 {
        match *self {
            EtaExpr::Fixed(v) => v,
            EtaExpr::SameAsP => p,
        }
    }
}

impl fmt::Display for EtaExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaExpr::Fixed(v) => write!(f, "{v}"),
            EtaExpr::SameAsP => f.write_str("p"),
        }
    }
}

impl FromStr for EtaExpr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "p" {
            return Ok(EtaExpr::SameAsP);
        }
        s.parse::<f64>()
            .map(EtaExpr::Fixed)
            .map_err(|_| format!("`{s}` is not a number or `p`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputMode {
    SummaryOnly,
    FullTranscript,
}

impl fmt::Display for OutputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputMode::SummaryOnly => "summary_only",
            OutputMode::FullTranscript => "full_transcript",
        })
    }
}

/// A validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub class: ClassSpec,
    pub adversary: AdversarySpec,
    pub algorithms: Vec<Algorithm>,
    pub p: Vec<RateExpr>,
    pub eta: Vec<EtaExpr>,
    pub lambda: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub mu: f64,
    pub theta: Option<f64>,
    pub tie_break: TieBreak,
    pub horizons: Vec<u32>,
    pub seeds: u32,
    pub base_seed: u64,
    pub output: PathBuf,
    pub mode: OutputMode,
    /// Also report every `k`-th prefix of each run.
    pub checkpoint_every: Option<u32>,
}

impl ExperimentSpec {
    /// Learner configuration of one grid point, validated.
    pub fn learner_config(&self, gp: &GridPoint, class_size: usize) -> Result<LearnerConfig, CliError> {
        let GridPoint {
            algorithm,
            p,
            eta,
            lambda,
            epsilon,
            horizon,
        } = *gp;
        let p = p.resolve(class_size, horizon);
        let mut cfg = LearnerConfig::new(algorithm, horizon)
            .with_p(p)
            .with_eta(eta.resolve(p))
            .with_lambda(lambda)
            .with_epsilon(epsilon)
            .with_mu(self.mu)
            .with_tie_break(self.tie_break);
        cfg.theta = self.theta;
        if algorithm == Algorithm::MixedLossProd && lambda > p {
            return Err(CliError::config(
                None,
                format!(
                    "mixed_loss_prod requires lambda <= p (the mixed-loss guarantee assumes eta = 1/2, lambda <= p); got lambda = {lambda}, p = {p} at T = {horizon}"
                ),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every grid point against the class size.
    pub fn validate(&self, class_size: usize) -> Result<(), CliError> {
        for gp in grid(self) {
            self.learner_config(&gp, class_size)?;
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal spec.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        out.push_str("\n[class]\n");
        match &self.class {
            ClassSpec::Threshold { n } => {
                let _ = writeln!(out, "kind = threshold\nn = {n}");
            }
            ClassSpec::Random {
                domain_size,
                num_labels,
                n_functions,
                abstain_prob,
                seed,
            } => {
                let _ = writeln!(
                    out,
                    "kind = random\ndomain_size = {domain_size}\nnum_labels = {num_labels}\nn_functions = {n_functions}\nabstain_prob = {abstain_prob}\nseed = {seed}"
                );
            }
            ClassSpec::File(path) => {
                let _ = writeln!(out, "kind = file\npath = {}", path.display());
            }
        }
        out.push_str("\n[adversary]\n");
        match &self.adversary {
            AdversarySpec::Stochastic { support } => {
                let items: Vec<String> = support.iter().map(|(x, y, w)| format!("{x}:{y}:{w}")).collect();
                let _ = writeln!(out, "kind = stochastic\nsupport = {}", items.join(", "));
            }
            AdversarySpec::ThresholdTight { t_star } => {
                let _ = writeln!(out, "kind = threshold_tight\nt_star = {t_star}");
            }
            AdversarySpec::LowerBound { variant, gamma, context } => {
                let kind = match variant {
                    LowerBoundVariant::P1 => "lower_bound_p1",
                    LowerBoundVariant::P2 => "lower_bound_p2",
                };
                let _ = writeln!(out, "kind = {kind}\ngamma = {gamma}\ncontext = {context}");
            }
            AdversarySpec::NoisySynthetic {
                target,
                noise_rate,
                context_law,
            } => {
                let _ = writeln!(
                    out,
                    "kind = noisy_synthetic\ntarget = {target}\nnoise_rate = {noise_rate}\ncontext_law = {}",
                    context_law_string(context_law)
                );
            }
        }
        out.push_str("\n[learner]\n");
        let _ = writeln!(out, "algorithms = {}", join(&self.algorithms));
        let _ = writeln!(out, "p = {}", join(&self.p));
        let _ = writeln!(out, "eta = {}", join(&self.eta));
        let _ = writeln!(out, "lambda = {}", join(&self.lambda));
        let _ = writeln!(out, "epsilon = {}", join(&self.epsilon));
        let _ = writeln!(out, "mu = {}", self.mu);
        if let Some(theta) = self.theta {
            let _ = writeln!(out, "theta = {theta}");
        }
        let _ = writeln!(out, "tie_break = {}", self.tie_break);
        out.push_str("\n[run]\n");
        let _ = writeln!(out, "horizons = {}", join(&self.horizons));
        let _ = writeln!(out, "seeds = {}", self.seeds);
        let _ = writeln!(out, "base_seed = {}", self.base_seed);
        let _ = writeln!(out, "output = {}", self.output.display());
        let _ = writeln!(out, "mode = {}", self.mode);
        if let Some(k) = self.checkpoint_every {
            let _ = writeln!(out, "checkpoint_every = {k}");
        }
        out
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

fn context_law_string(law: &ContextLaw) -> String {
    match law {
        ContextLaw::Uniform => "uniform".into(),
        ContextLaw::Point(x) => format!("point({x})"),
        ContextLaw::Weights(w) => format!("weights({})", join(w)),
    }
}

/// One `key = value` with its line number.
#[derive(Clone, Debug)]
struct Entry {
    line: usize,
    value: String,
    used: bool,
}

#[derive(Default)]
struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| CliError::config(Some(line), format!("`{key}`: {e}"))),
        }
    }

    fn require<T: FromStr>(&mut self, key: &str, section: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| CliError::config(Some(self.line), format!("[{section}] needs `{key}`")))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => {
                let items: Result<Vec<T>, _> = v
                    .split(',')
                    .map(|s| s.trim())
                    .map(|s| s.parse::<T>().map_err(|e| CliError::config(Some(line), format!("`{key}`: {e}"))))
                    .collect();
                let items = items?;
                if items.is_empty() {
                    return Err(CliError::config(Some(line), format!("`{key}` is empty")));
                }
                Ok(Some(items))
            }
        }
    }

    fn finish(&self, section: &str) -> Result<(), CliError> {
        if let Some((k, e)) = self.entries.iter().find(|(_, e)| !e.used) {
            return Err(CliError::config(Some(e.line), format!("unknown key `{k}` in [{section}]")));
        }
        Ok(())
    }
}

/// Wrapper so `FromStr` errors from the core crate display cleanly.
struct Parsed<T>(T);

impl FromStr for Parsed<Algorithm> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<Algorithm>().map(Parsed).map_err(|e| e.to_string())
    }
}

impl FromStr for Parsed<TieBreak> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<TieBreak>().map(Parsed).map_err(|e| e.to_string())
    }
}

fn parse_context_law(s: &str) -> Result<ContextLaw, String> {
    let s = s.trim();
    if s == "uniform" {
        return Ok(ContextLaw::Uniform);
    }
    if let Some(x) = s.strip_prefix("point(").and_then(|r| r.strip_suffix(')')) {
        return x.trim().parse().map(|x| ContextLaw::Point(Context(x))).map_err(|_| format!("bad context in `{s}`"));
    }
    if let Some(w) = s.strip_prefix("weights(").and_then(|r| r.strip_suffix(')')) {
        let w: Result<Vec<f64>, _> = w.split(',').map(|v| v.trim().parse::<f64>()).collect();
        return w.map(ContextLaw::Weights).map_err(|_| format!("bad weights in `{s}`"));
    }
    Err(format!("`{s}` is not uniform, point(x) or weights(...)"))
}

fn parse_support(s: &str) -> Result<Vec<(Context, Label, f64)>, String> {
    s.split(',')
        .map(|item| {
            let parts: Vec<&str> = item.trim().split(':').collect();
            if parts.len() != 3 {
                return Err(format!("support entry `{}` is not x:y:prob", item.trim()));
            }
            let x = parts[0].parse().map_err(|_| format!("bad context `{}`", parts[0]))?;
            let y = parts[1].parse().map_err(|_| format!("bad label `{}`", parts[1]))?;
            let w = parts[2].parse().map_err(|_| format!("bad probability `{}`", parts[2]))?;
            Ok((Context(x), Label(y), w))
        })
        .collect()
}

const SECTIONS: [&str; 4] = ["class", "adversary", "learner", "run"];

/// Parses configuration text.
pub fn parse_config_str(text: &str) -> Result<ExperimentSpec, CliError> {
    let mut top = Section::default();
    let mut sections: BTreeMap<&'static str, Section> = BTreeMap::new();
    let mut current: Option<&'static str> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| CliError::config(Some(line_no), "unterminated section header"))?
                .trim();
            let known = SECTIONS
                .iter()
                .find(|s| **s == name)
                .ok_or_else(|| CliError::config(Some(line_no), format!("unknown section [{name}]")))?;
            if sections.contains_key(known) {
                return Err(CliError::config(Some(line_no), format!("duplicate section [{name}]")));
            }
            sections.insert(
                known,
                Section {
                    line: line_no,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(known);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(Some(line_no), format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(CliError::config(Some(line_no), "empty key"));
        }
        let section = match current {
            None => &mut top,
            Some(s) => sections.get_mut(s).expect("section was inserted"),
        };
        if section.entries.contains_key(&key) {
            return Err(CliError::config(Some(line_no), format!("duplicate key `{key}`")));
        }
        section.entries.insert(
            key,
            Entry {
                line: line_no,
                value,
                used: false,
            },
        );
    }

    let name = top.get::<String>("name")?.unwrap_or_else(|| "experiment".into());
    top.finish("top level")?;

    let mut missing = |s: &'static str| -> Result<Section, CliError> {
        sections
            .remove(s)
            .ok_or_else(|| CliError::config(None, format!("missing section [{s}]")))
    };

    let mut cs = missing("class")?;
    let class_kind: String = cs.require("kind", "class")?;
    let class = match class_kind.as_str() {
        "threshold" => ClassSpec::Threshold {
            n: cs.require("n", "class")?,
        },
        "random" => ClassSpec::Random {
            domain_size: cs.require("domain_size", "class")?,
            num_labels: cs.require("num_labels", "class")?,
            n_functions: cs.require("n_functions", "class")?,
            abstain_prob: cs.require("abstain_prob", "class")?,
            seed: cs.get("seed")?.unwrap_or(0),
        },
        "file" => ClassSpec::File(PathBuf::from(cs.require::<String>("path", "class")?)),
        other => return Err(CliError::config(Some(cs.line), format!("unknown class kind `{other}`"))),
    };
    cs.finish("class")?;

    let mut adv = missing("adversary")?;
    let kind: String = adv.require("kind", "adversary")?;
    let adversary = match kind.as_str() {
        "stochastic" => {
            let (line, v) = adv
                .take("support")
                .ok_or_else(|| CliError::config(Some(adv.line), "[adversary] needs `support`"))?;
            AdversarySpec::Stochastic {
                support: parse_support(&v).map_err(|e| CliError::config(Some(line), e))?,
            }
        }
        "threshold_tight" => AdversarySpec::ThresholdTight {
            t_star: adv.require("t_star", "adversary")?,
        },
        "lower_bound_p1" | "lower_bound_p2" => AdversarySpec::LowerBound {
            variant: if kind.ends_with("p1") {
                LowerBoundVariant::P1
            } else {
                LowerBoundVariant::P2
            },
            gamma: adv.require("gamma", "adversary")?,
            context: Context(adv.get("context")?.unwrap_or(1)),
        },
        "noisy_synthetic" => {
            let context_law = match adv.take("context_law") {
                None => ContextLaw::Uniform,
                Some((line, v)) => parse_context_law(&v).map_err(|e| CliError::config(Some(line), e))?,
            };
            AdversarySpec::NoisySynthetic {
                target: adv.require("target", "adversary")?,
                noise_rate: adv.require("noise_rate", "adversary")?,
                context_law,
            }
        }
        other => return Err(CliError::config(Some(adv.line), format!("unknown adversary kind `{other}`"))),
    };
    adv.finish("adversary")?;

    let mut ls = missing("learner")?;
    let algorithms: Vec<Parsed<Algorithm>> = ls
        .list("algorithms")?
        .ok_or_else(|| CliError::config(Some(ls.line), "[learner] needs `algorithms`"))?;
    let defaults = LearnerConfig::new(Algorithm::Vue, 1);
    let learner_line = ls.line;
    let p = ls.list("p")?.unwrap_or_else(|| vec![RateExpr::Fixed(defaults.p)]);
    let eta = ls.list("eta")?.unwrap_or_else(|| vec![EtaExpr::Fixed(defaults.eta)]);
    let lambda = ls.list("lambda")?.unwrap_or_else(|| vec![defaults.lambda]);
    let epsilon = ls.list("epsilon")?.unwrap_or_else(|| vec![defaults.epsilon]);
    let mu = ls.get("mu")?.unwrap_or(defaults.mu);
    let theta = ls.get("theta")?;
    let tie_break = ls.get::<Parsed<TieBreak>>("tie_break")?.map_or(defaults.tie_break, |t| t.0);
    ls.finish("learner")?;

    let mut rs = missing("run")?;
    let horizons: Vec<u32> = rs
        .list("horizons")?
        .ok_or_else(|| CliError::config(Some(rs.line), "[run] needs `horizons`"))?;
    let seeds: u32 = rs.get("seeds")?.unwrap_or(1);
    let base_seed = rs.get("base_seed")?.unwrap_or(0);
    let output = PathBuf::from(rs.get::<String>("output")?.unwrap_or_else(|| "out".into()));
    let mode = match rs.take("mode") {
        None => OutputMode::SummaryOnly,
        Some((_, v)) if v == "summary_only" => OutputMode::SummaryOnly,
        Some((_, v)) if v == "full_transcript" => OutputMode::FullTranscript,
        Some((line, v)) => return Err(CliError::config(Some(line), format!("unknown mode `{v}`"))),
    };
    let checkpoint_every = rs.get::<u32>("checkpoint_every")?;
    let run_line = rs.line;
    rs.finish("run")?;

    if seeds == 0 {
        return Err(CliError::config(Some(run_line), "seeds must be at least 1"));
    }
    if horizons.contains(&0) {
        return Err(CliError::config(Some(run_line), "horizons must be positive"));
    }
    if checkpoint_every == Some(0) {
        return Err(CliError::config(Some(run_line), "checkpoint_every must be positive"));
    }
    if p.is_empty() || eta.is_empty() || lambda.is_empty() || epsilon.is_empty() {
        return Err(CliError::config(Some(learner_line), "grids must be non-empty"));
    }

    Ok(ExperimentSpec {
        name,
        class,
        adversary,
        algorithms: algorithms.into_iter().map(|a| a.0).collect(),
        p,
        eta,
        lambda,
        epsilon,
        mu,
        theta,
        tie_break,
        horizons,
        seeds,
        base_seed,
        output,
        mode,
        checkpoint_every,
    })
}

/// Reads, parses and validates a configuration file against its class.
pub fn parse_config(path: &std::path::Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let spec = parse_config_str(&text)?;
    let class = spec.class.build()?;
    spec.validate(class.len())?;
    Ok(spec)
}
