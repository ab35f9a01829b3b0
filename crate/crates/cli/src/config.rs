//! Experiment configuration: a TOML file with `[problem]`, `[graph]`,
//! `[[algorithm]]`, and `[run]` sections. Unknown keys are rejected.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use next_core::apps::Likelihood;
use next_core::solver::{InexactSchedule, StepSizeRule};
use serde::Deserialize;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemBlock,
    pub graph: GraphBlock,
    #[serde(default)]
    pub algorithm: Vec<AlgorithmBlock>,
    #[serde(default)]
    pub run: RunBlock,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "app", rename_all = "snake_case")]
pub enum ProblemBlock {
    Localization(LocalizationBlock),
    Cartography(CartographyBlock),
    FlowControl(FlowControlBlock),
    SparseMl(SparseMlBlock),
}

impl ProblemBlock {
    pub fn app(&self) -> &'static str {
        match self {
            ProblemBlock::Localization(_) => "localization",
            ProblemBlock::Cartography(_) => "cartography",
            ProblemBlock::FlowControl(_) => "flow_control",
            ProblemBlock::SparseMl(_) => "sparse_ml",
        }
    }

    /// Default proximal weight `τ` for this application.
    pub fn default_tau(&self) -> f64 {
        match self {
            ProblemBlock::Localization(_) => 10.0,
            ProblemBlock::Cartography(_) => 0.8,
            ProblemBlock::FlowControl(_) | ProblemBlock::SparseMl(_) => 1.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationBlock {
    pub agents: Option<usize>,
    pub targets: Option<usize>,
    pub target_positions: Option<Vec<Vec<f64>>>,
    /// Minimum per-node SNR in dB.
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub noiseless: bool,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartographyBlock {
    pub agents: Option<usize>,
    pub sources: Option<Vec<[f64; 2]>>,
    pub basis: Option<usize>,
    pub channels: Option<usize>,
    pub lambda: Option<f64>,
    pub p_max: Option<f64>,
    pub side: Option<f64>,
    pub band: Option<[f64; 2]>,
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default)]
    pub seed: u64,
}

/// Either a random topology (`sources`, `links`, `seed`) or an explicit one
/// (`capacities`, `paths`, rates, and sigmoid parameters).
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowControlBlock {
    pub sources: Option<usize>,
    pub links: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub capacities: Option<Vec<f64>>,
    pub paths: Option<Vec<Vec<usize>>>,
    pub min_rate: Option<Vec<f64>>,
    pub max_rate: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

impl FlowControlBlock {
    pub fn explicit(&self) -> bool {
        self.capacities.is_some()
            || self.paths.is_some()
            || self.min_rate.is_some()
            || self.max_rate.is_some()
            || self.alpha.is_some()
            || self.beta.is_some()
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodName {
    Gaussian,
    StudentT,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseMlBlock {
    pub agents: Option<usize>,
    pub dim: Option<usize>,
    pub samples: Option<usize>,
    pub sparsity: Option<usize>,
    pub lambda: Option<f64>,
    pub bound: Option<f64>,
    pub noise_std: Option<f64>,
    pub likelihood: Option<LikelihoodName>,
    /// Degrees of freedom of the Student-t likelihood.
    pub nu: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SparseMlBlock {
    pub fn likelihood(&self) -> Likelihood {
        match self.likelihood {
            Some(LikelihoodName::StudentT) => Likelihood::StudentT { nu: self.nu.unwrap_or(3.0) },
            _ => Likelihood::Gaussian,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Ring,
    DirectedRing,
    Path,
    Complete,
    ErdosRenyi,
    RandomGeometric,
    File,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphBlock {
    pub generator: Generator,
    /// Edge probability for `erdos_renyi`.
    pub p: Option<f64>,
    /// Connection radius for `random_geometric`.
    pub radius: Option<f64>,
    /// Schedule file for `file`.
    pub path: Option<PathBuf>,
    /// Every `window` consecutive snapshots form a strongly connected union.
    #[serde(default = "one")]
    pub window: usize,
    /// Snapshots generated before the schedule repeats; rounded up to a
    /// multiple of `window`.
    pub horizon: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl GraphBlock {
    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(16 * self.window)
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
pub enum AlgorithmKind {
    #[serde(rename = "next-pl")]
    NextPl,
    #[serde(rename = "next-l")]
    NextL,
    #[serde(rename = "next-inexact")]
    NextInexact,
    #[serde(rename = "dgradient")]
    DGradient,
}

impl AlgorithmKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmKind::NextPl => "next-pl",
            AlgorithmKind::NextL => "next-l",
            AlgorithmKind::NextInexact => "next-inexact",
            AlgorithmKind::DGradient => "dgradient",
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepBlock {
    Polynomial { alpha0: f64, beta: f64 },
    Recursive { alpha0: f64, mu: f64 },
    Constant { alpha: f64 },
}

impl StepBlock {
    pub fn rule(self) -> StepSizeRule {
        match self {
            StepBlock::Polynomial { alpha0, beta } => StepSizeRule::Polynomial { alpha0, beta },
            StepBlock::Recursive { alpha0, mu } => StepSizeRule::Recursive { alpha0, mu },
            StepBlock::Constant { alpha } => StepSizeRule::Constant(alpha),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmBlock {
    pub kind: AlgorithmKind,
    pub label: Option<String>,
    pub tau: Option<f64>,
    pub step: StepBlock,
    /// `ε_i[n] = eps_constant · α[n]` for `next-inexact`.
    pub eps_constant: Option<f64>,
}

impl AlgorithmBlock {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.as_str().to_string())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Seed of the initial points; repetition `r` uses `seed + r`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub cadence: usize,
    /// `J` level for the exchanges-to-threshold column.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Stop a run once `J` falls to this level.
    pub stop_below: Option<f64>,
    pub out_dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub track_error: bool,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            repetitions: default_repetitions(),
            seed: 0,
            cadence: 1,
            threshold: default_threshold(),
            stop_below: None,
            out_dir: None,
            track_error: true,
        }
    }
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_iterations() -> usize {
    1000
}
fn default_repetitions() -> usize {
    20
}
fn default_threshold() -> f64 {
    1e-2
}

impl ExperimentConfig {
    /// Parses TOML text; syntax and schema errors carry line and key.
    pub fn parse(text: &str) -> Result<Self, Vec<String>> {
        toml::from_str(text).map_err(|e| vec![e.to_string().trim_end().to_string()])
    }

    /// Reads, parses, and checks a config. A relative graph file path that
    /// does not exist from the working directory is taken relative to the
    /// config file.
    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
        let mut cfg = Self::parse(&text)?;
        if let (Some(p), Some(dir)) = (&cfg.graph.path, path.parent()) {
            if p.is_relative() && !p.exists() {
                cfg.graph.path = Some(dir.join(p));
            }
        }
        let diagnostics = cfg.check();
        if diagnostics.is_empty() {
            Ok(cfg)
        } else {
            Err(diagnostics)
        }
    }

    /// Semantic checks that need no run. Returns every problem found.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push("name: must not be empty".to_string());
        }
        check_problem(&self.problem, &mut out);
        check_graph(&self.graph, &mut out);
        if self.algorithm.is_empty() {
            out.push("algorithm: at least one [[algorithm]] block is required".to_string());
        }
        let mut labels = BTreeSet::new();
        for (k, a) in self.algorithm.iter().enumerate() {
            let at = format!("algorithm[{k}] ({})", a.label());
            if !labels.insert(a.label()) {
                out.push(format!("{at}.label: duplicate label"));
            }
            if a.label().is_empty() || !a.label().chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                out.push(format!("{at}.label: use letters, digits, '-', '_', or '.'"));
            }
            let rule = a.step.rule();
            if let Err(e) = rule.validate() {
                out.push(format!("{at}.step: {e}"));
            }
            match (a.kind, a.tau) {
                (AlgorithmKind::DGradient, Some(_)) => {
                    out.push(format!("{at}.tau: dgradient has no surrogate"));
                }
                (_, Some(t)) if !(t.is_finite() && t > 0.0) => {
                    out.push(format!("{at}.tau: must be positive and finite (got {t})"));
                }
                _ => {}
            }
            match (a.kind, a.eps_constant) {
                (AlgorithmKind::NextInexact, c) => {
                    let schedule = InexactSchedule::uniform(1, c.unwrap_or(1.0));
                    if let Err(e) = schedule.validate(&rule) {
                        out.push(format!("{at}.eps_constant: {e}"));
                    }
                }
                (_, Some(_)) => out.push(format!("{at}.eps_constant: only next-inexact takes an accuracy schedule")),
                _ => {}
            }
            if let (ProblemBlock::SparseMl(s), AlgorithmKind::NextPl | AlgorithmKind::NextInexact) = (&self.problem, a.kind) {
                if s.likelihood == Some(LikelihoodName::StudentT) {
                    out.push(format!(
                        "{at}.kind: the structure-preserving surrogate keeps the cost and needs a convex likelihood; use next-l"
                    ));
                }
            }
        }
        let r = &self.run;
        if r.repetitions == 0 {
            out.push("run.repetitions: must be at least 1".to_string());
        }
        if r.cadence == 0 {
            out.push("run.cadence: must be at least 1".to_string());
        }
        if !(r.threshold.is_finite() && r.threshold > 0.0) {
            out.push(format!("run.threshold: must be positive (got {})", r.threshold));
        }
        if let Some(s) = r.stop_below {
            if !(s.is_finite() && s > 0.0) {
                out.push(format!("run.stop_below: must be positive (got {s})"));
            }
        }
        out
    }
}

fn positive(out: &mut Vec<String>, key: &str, v: Option<f64>) {
    if let Some(v) = v {
        if !(v.is_finite() && v > 0.0) {
            out.push(format!("problem.{key}: must be positive and finite (got {v})"));
        }
    }
}

fn nonzero(out: &mut Vec<String>, key: &str, v: Option<usize>) {
    if v == Some(0) {
        out.push(format!("problem.{key}: must be at least 1"));
    }
}

fn check_problem(p: &ProblemBlock, out: &mut Vec<String>) {
    match p {
        ProblemBlock::Localization(b) => {
            nonzero(out, "agents", b.agents);
            nonzero(out, "targets", b.targets);
            if b.noiseless && b.snr_db.is_some() {
                out.push("problem.snr_db: conflicts with noiseless = true".to_string());
            }
            if let Some(db) = b.snr_db {
                if db.is_nan() || db == f64::NEG_INFINITY {
                    out.push(format!("problem.snr_db: must be a number above -inf (got {db})"));
                }
            }
            if let (Some(lo), Some(hi)) = (b.lower, b.upper) {
                if !(lo < hi) {
                    out.push(format!("problem.lower: must be below upper ({lo} >= {hi})"));
                }
            }
            if let Some(t) = &b.target_positions {
                if t.iter().any(|p| p.len() != 2) {
                    out.push("problem.target_positions: every target needs two coordinates".to_string());
                }
            }
        }
        ProblemBlock::Cartography(b) => {
            nonzero(out, "agents", b.agents);
            nonzero(out, "basis", b.basis);
            nonzero(out, "channels", b.channels);
            positive(out, "p_max", b.p_max);
            positive(out, "side", b.side);
            if let Some(l) = b.lambda {
                if !(l.is_finite() && l >= 0.0) {
                    out.push(format!("problem.lambda: must be nonnegative (got {l})"));
                }
            }
            if b.noiseless && b.snr_db.is_some() {
                out.push("problem.snr_db: conflicts with noiseless = true".to_string());
            }
            if let Some([lo, hi]) = b.band {
                if !(lo < hi) {
                    out.push(format!("problem.band: lower edge must be below the upper edge ({lo} >= {hi})"));
                }
            }
            if b.sources.as_ref().is_some_and(|s| s.is_empty()) {
                out.push("problem.sources: at least one source is required".to_string());
            }
        }
        ProblemBlock::FlowControl(b) => {
            if b.explicit() {
                for (key, present) in [
                    ("capacities", b.capacities.is_some()),
                    ("paths", b.paths.is_some()),
                    ("min_rate", b.min_rate.is_some()),
                    ("max_rate", b.max_rate.is_some()),
                    ("alpha", b.alpha.is_some()),
                    ("beta", b.beta.is_some()),
                ] {
                    if !present {
                        out.push(format!("problem.{key}: required for an explicit flow topology"));
                    }
                }
                if b.sources.is_some() || b.links.is_some() {
                    out.push("problem.sources: a random topology cannot be combined with an explicit one".to_string());
                }
            } else {
                nonzero(out, "sources", b.sources);
                nonzero(out, "links", b.links);
            }
        }
        ProblemBlock::SparseMl(b) => {
            nonzero(out, "agents", b.agents);
            nonzero(out, "dim", b.dim);
            nonzero(out, "samples", b.samples);
            positive(out, "bound", b.bound);
            positive(out, "noise_std", b.noise_std);
            positive(out, "nu", b.nu);
            if let Some(l) = b.lambda {
                if !(l.is_finite() && l >= 0.0) {
                    out.push(format!("problem.lambda: must be nonnegative (got {l})"));
                }
            }
            if b.nu.is_some() && b.likelihood != Some(LikelihoodName::StudentT) {
                out.push("problem.nu: only the student_t likelihood takes ν".to_string());
            }
            if let (Some(s), Some(d)) = (b.sparsity, b.dim) {
                if s > d {
                    out.push(format!("problem.sparsity: exceeds dim ({s} > {d})"));
                }
            }
        }
    }
}

fn check_graph(g: &GraphBlock, out: &mut Vec<String>) {
    if g.window == 0 {
        out.push("graph.window: must be at least 1".to_string());
    }
    if g.horizon == Some(0) {
        out.push("graph.horizon: must be at least 1".to_string());
    }
    let needs = |key: &str, ok: bool, out: &mut Vec<String>| {
        if !ok {
            out.push(format!("graph.{key}: required by the {:?} generator", g.generator));
        }
    };
    let forbids = |key: &str, present: bool, out: &mut Vec<String>| {
        if present {
            out.push(format!("graph.{key}: not used by the {:?} generator", g.generator));
        }
    };
    match g.generator {
        Generator::ErdosRenyi => {
            needs("p", g.p.is_some(), out);
            if let Some(p) = g.p {
                if !(p > 0.0 && p <= 1.0) {
                    out.push(format!("graph.p: must lie in (0, 1] (got {p})"));
                }
            }
            forbids("radius", g.radius.is_some(), out);
            forbids("path", g.path.is_some(), out);
        }
        Generator::RandomGeometric => {
            needs("radius", g.radius.is_some(), out);
            if let Some(r) = g.radius {
                if !(r.is_finite() && r > 0.0) {
                    out.push(format!("graph.radius: must be positive (got {r})"));
                }
            }
            forbids("p", g.p.is_some(), out);
            forbids("path", g.path.is_some(), out);
        }
        Generator::File => {
            needs("path", g.path.is_some(), out);
            forbids("p", g.p.is_some(), out);
            forbids("radius", g.radius.is_some(), out);
        }
        _ => {
            forbids("p", g.p.is_some(), out);
            forbids("radius", g.radius.is_some(), out);
            forbids("path", g.path.is_some(), out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
[problem]
app = "localization"
agents = 5
targets = 1
noiseless = true
[graph]
generator = "ring"
[[algorithm]]
kind = "next-pl"
step = { rule = "recursive", alpha0 = 0.1, mu = 0.01 }
[run]
iterations = 10
"#;

    fn diagnostics(text: &str) -> Vec<String> {
        match ExperimentConfig::parse(text) {
            Ok(c) => c.check(),
            Err(e) => e,
        }
    }

    #[test]
    fn minimal_config_is_clean() {
        assert!(diagnostics(BASE).is_empty(), "{:?}", diagnostics(BASE));
        let c = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(c.run.repetitions, 20);
        assert_eq!(c.graph.window, 1);
        assert_eq!(c.algorithm[0].label(), "next-pl");
    }

    #[test]
    fn beta_outside_range_is_named() {
        let text = BASE.replace(
            r#"{ rule = "recursive", alpha0 = 0.1, mu = 0.01 }"#,
            r#"{ rule = "polynomial", alpha0 = 0.1, beta = 0.4 }"#,
        );
        let d = diagnostics(&text);
        assert_eq!(d.len(), 1);
        assert!(d[0].contains("β must lie in (0.5, 1]"), "{d:?}");
    }

    #[test]
    fn mu_outside_range_is_named() {
        let d = diagnostics(&BASE.replace("mu = 0.01", "mu = 1.5"));
        assert_eq!(d.len(), 1);
        assert!(d[0].contains("μ must lie in (0, 1)"), "{d:?}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        for (from, to) in [
            ("targets = 1", "targets = 1\ncolour = 3"),
            ("iterations = 10", "iterations = 10\nspeed = 2"),
            ("generator = \"ring\"", "generator = \"ring\"\nfoo = 1"),
            ("mu = 0.01", "mu = 0.01, beta = 0.7"),
        ] {
            let d = diagnostics(&BASE.replace(from, to));
            assert_eq!(d.len(), 1, "{d:?}");
            assert!(d[0].contains("unknown field") && d[0].contains("line"), "{d:?}");
        }
    }

    #[test]
    fn empty_algorithm_list_is_an_error() {
        let text = BASE.replace("[[algorithm]]\nkind = \"next-pl\"\nstep = { rule = \"recursive\", alpha0 = 0.1, mu = 0.01 }\n", "");
        let d = diagnostics(&text);
        assert!(d.iter().any(|m| m.contains("at least one")), "{d:?}");
    }

    #[test]
    fn diagnostics_aggregate() {
        let text = BASE
            .replace("mu = 0.01", "mu = 1.5")
            .replace("iterations = 10", "iterations = 10\ncadence = 0\nrepetitions = 0")
            .replace("generator = \"ring\"", "generator = \"erdos_renyi\"");
        assert_eq!(diagnostics(&text).len(), 4, "{:?}", diagnostics(&text));
    }

    #[test]
    fn inexact_needs_a_square_summable_rule() {
        let text = BASE
            .replace("next-pl", "next-inexact")
            .replace(r#"{ rule = "recursive", alpha0 = 0.1, mu = 0.01 }"#, r#"{ rule = "constant", alpha = 0.1 }"#);
        let d = diagnostics(&text);
        assert!(d.iter().any(|m| m.contains("diverges")), "{d:?}");
    }

    #[test]
    fn student_t_rejects_the_structured_surrogate() {
        let text = r#"
name = "t"
[problem]
app = "sparse_ml"
likelihood = "student_t"
[graph]
generator = "complete"
[[algorithm]]
kind = "next-pl"
step = { rule = "recursive", alpha0 = 0.1, mu = 0.01 }
"#;
        let d = diagnostics(text);
        assert!(d.iter().any(|m| m.contains("convex likelihood")), "{d:?}");
        assert!(diagnostics(&text.replace("next-pl", "next-l")).is_empty());
    }
}
