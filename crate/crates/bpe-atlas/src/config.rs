//! JSON run configuration: which operator to build, how to scan, where to
//! write.
//!
//! A config file has up to five top-level keys; only `operator` is
//! required. Everything else falls back to defaults chosen so that the two
//! built-in example families run out of the box:
//!
//! ```json
//! {
//!   "operator": { "family": "example1", "depth": 2100 },
//!   "scan":     { "N": 256, "grid": { "kind": "polar", "rays": 64, "r_step": 0.01 } },
//!   "kernel":   { "N": 256, "w": [0.4, 0.0], "levels": 16 },
//!   "output":   { "dir": "out", "prefix": "atlas" },
//!   "seed":     24301
//! }
//! ```
//!
//! Unknown keys anywhere are a hard parse error: a typo must never silently
//! fall back to a default. Structural invariants (materialized depth large
//! enough for the requested iteration counts, positive thresholds) are
//! checked at parse time so every command fails fast with exit code 1.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bpe::GridSpec;
use crate::graph::{
    build_classical, build_custom, build_example1, build_example2, example1_weight, ShiftGraph,
    TailKind, TailRule, WeightAssignment,
};
use crate::{Error, Result};

/// Default RNG seed for sphere sampling; any fixed value works, this one is
/// just recognizable in reports.
pub const DEFAULT_SEED: u64 = 0x5EED;

const DEFAULT_DEPTH: usize = 2100;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Example1,
    Example2,
    Classical,
    CustomPhiGraph,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::Example1 => "example1",
            Family::Example2 => "example2",
            Family::Classical => "classical",
            Family::CustomPhiGraph => "custom-phi-graph",
        }
    }
}

/// Weight source for the distinguished branch of the `example2` tree:
/// either the name of a built-in rule or an explicit per-level list.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BranchBase {
    Rule(String),
    List(Vec<f64>),
}

impl Default for BranchBase {
    fn default() -> Self {
        BranchBase::Rule("example1-rule".to_string())
    }
}

/// Declared weight bounds (as log2) for the un-materialized tail of a
/// custom graph.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    pub sup_log2: f64,
    pub inf_log2: f64,
}

/// Which operator to build. `depth` is the number of materialized levels;
/// every computation that would peek past it errors instead of truncating.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub family: Family,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Branch count of the `example2` tree. Ignored by other families.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Distinguished-branch weights for `example2`.
    #[serde(default)]
    pub base: BranchBase,
    /// Weight list for `classical` (level n gets `weights[n-1]`) and
    /// `custom-phi-graph` (vertex v gets `weights[v]`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Parent function for `custom-phi-graph`; `null` marks a root. A loop
    /// is a vertex that is its own parent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parents: Option<Vec<Option<usize>>>,
    /// Tail certificate for `custom-phi-graph`; defaults to the min/max of
    /// the supplied weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailSpec>,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    /// Finite-section horizon: the scan looks at `B_n` for `n <= N`.
    #[serde(rename = "N", default = "default_scan_n")]
    pub n: usize,
    #[serde(default)]
    pub grid: GridSpec,
    /// Fraction of the `n` range (counted from the top) used for the
    /// growth-slope fit.
    #[serde(default = "default_tail_fraction")]
    pub tail_fraction: f64,
    /// Slope above which a point is called UNBOUNDED; below a quarter of it
    /// (with a sane `B_N`) BOUNDED.
    #[serde(default = "default_slope_threshold")]
    pub slope_threshold: f64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec {
            n: default_scan_n(),
            grid: GridSpec::default(),
            tail_fraction: default_tail_fraction(),
            slope_threshold: default_slope_threshold(),
        }
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    /// Truncation order of the evaluation series.
    #[serde(rename = "N", default = "default_scan_n")]
    pub n: usize,
    /// Evaluation point as `[re, im]`.
    #[serde(default = "default_kernel_w")]
    pub w: [f64; 2],
    /// Optional second point for the two-point kernel block; defaults to `w`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<[f64; 2]>,
    /// Truncation level for the adjoint eigenvector solve.
    #[serde(default = "default_levels")]
    pub levels: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            n: default_scan_n(),
            w: default_kernel_w(),
            z: None,
            levels: default_levels(),
        }
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for report files; `None` means current directory. The CLI
    /// `--out` flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// File name stem for emitted reports.
    #[serde(default = "default_prefix")]
    pub prefix: String,
    #[serde(default = "default_true")]
    pub csv: bool,
    #[serde(default = "default_true")]
    pub json: bool,
    #[serde(default = "default_true")]
    pub heatmap: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            prefix: default_prefix(),
            csv: true,
            json: true,
            heatmap: true,
        }
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub operator: OperatorSpec,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_depth() -> usize {
    DEFAULT_DEPTH
}

fn default_k() -> usize {
    3
}

fn default_scan_n() -> usize {
    256
}

fn default_tail_fraction() -> f64 {
    0.5
}

fn default_slope_threshold() -> f64 {
    1e-3
}

fn default_kernel_w() -> [f64; 2] {
    [0.4, 0.0]
}

fn default_levels() -> usize {
    16
}

fn default_prefix() -> String {
    "atlas".to_string()
}

fn default_true() -> bool {
    true
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl OperatorSpec {
    /// Materializes the graph and weights at the configured depth.
    pub fn build(&self) -> Result<(ShiftGraph, WeightAssignment)> {
        self.build_at_depth(self.depth)
    }

    /// Materializes at an explicit depth (the CLI `--depth` override, and
    /// the verify commands which need deeper graphs than the default).
    /// Custom graphs carry their vertex set in `parents` and reject an
    /// override rather than ignore it.
    pub fn build_at_depth(&self, depth: usize) -> Result<(ShiftGraph, WeightAssignment)> {
        match self.family {
            Family::Example1 => build_example1(depth),
            Family::Example2 => {
                let base = self.branch_weights(depth)?;
                build_example2(self.k, &base, depth)
            }
            Family::Classical => {
                let weights = self.weights.as_ref().ok_or_else(|| {
                    Error::Config("classical family needs a \"weights\" list".to_string())
                })?;
                build_classical(weights, depth)
            }
            Family::CustomPhiGraph => {
                if depth != self.depth {
                    return Err(Error::InvalidArgument(
                        "custom-phi-graph has a fixed vertex set; a depth override does not apply"
                            .to_string(),
                    ));
                }
                let parents = self.parents.as_ref().ok_or_else(|| {
                    Error::Config("custom-phi-graph needs a \"parents\" array".to_string())
                })?;
                let weights = self.weights.as_ref().ok_or_else(|| {
                    Error::Config("custom-phi-graph needs a \"weights\" list".to_string())
                })?;
                let tail = match self.tail {
                    Some(t) => TailRule {
                        kind: TailKind::DeclaredBound,
                        weight_log2_sup: t.sup_log2,
                        weight_log2_inf: t.inf_log2,
                    },
                    None => derive_tail(weights)?,
                };
                build_custom(parents, weights, tail)
            }
        }
    }

    /// Weights for the distinguished tree branch, one per level `1..=depth`.
    fn branch_weights(&self, depth: usize) -> Result<Vec<f64>> {
        match &self.base {
            BranchBase::Rule(name) if name == "example1-rule" => {
                Ok((1..=depth as u64).map(example1_weight).collect())
            }
            BranchBase::Rule(name) => Err(Error::Config(format!(
                "unknown base rule {name:?}; the only built-in rule is \"example1-rule\""
            ))),
            BranchBase::List(list) => {
                if list.len() < depth {
                    return Err(Error::Config(format!(
                        "base weight list has {} entries but depth is {depth}",
                        list.len()
                    )));
                }
                Ok(list.clone())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self.family {
            Family::Example1 => Ok(()),
            Family::Example2 => {
                if self.k < 1 {
                    return Err(Error::Config(format!(
                        "example2 branch count k must be at least 1, got {}",
                        self.k
                    )));
                }
                if let BranchBase::Rule(name) = &self.base {
                    if name != "example1-rule" {
                        return Err(Error::Config(format!(
                            "unknown base rule {name:?}; the only built-in rule is \"example1-rule\""
                        )));
                    }
                }
                Ok(())
            }
            Family::Classical => {
                if self.weights.as_ref().map_or(true, |w| w.is_empty()) {
                    return Err(Error::Config(
                        "classical family needs a nonempty \"weights\" list".to_string(),
                    ));
                }
                Ok(())
            }
            Family::CustomPhiGraph => {
                let parents = self.parents.as_ref().ok_or_else(|| {
                    Error::Config("custom-phi-graph needs a \"parents\" array".to_string())
                })?;
                let weights = self.weights.as_ref().ok_or_else(|| {
                    Error::Config("custom-phi-graph needs a \"weights\" list".to_string())
                })?;
                if parents.len() != weights.len() {
                    return Err(Error::Config(format!(
                        "parents has {} entries but weights has {}",
                        parents.len(),
                        weights.len()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Depth the structural invariants are checked against. For custom
    /// graphs the `depth` field is irrelevant; what matters is how deep the
    /// supplied vertex set actually goes.
    fn effective_depth(&self) -> Result<usize> {
        if self.family != Family::CustomPhiGraph {
            return Ok(self.depth);
        }
        let (graph, _) = self.build()?;
        Ok(graph.depth())
    }
}

fn derive_tail(weights: &[f64]) -> Result<TailRule> {
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    for &w in weights {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Config(format!("weights must be positive and finite, got {w}")));
        }
        sup = sup.max(w.log2());
        inf = inf.min(w.log2());
    }
    Ok(TailRule { kind: TailKind::DeclaredBound, weight_log2_sup: sup, weight_log2_inf: inf })
}

impl RunConfig {
    /// Structural invariants beyond what serde can express. Every violation
    /// names the invariant so the CLI message is actionable.
    pub fn validate(&self) -> Result<()> {
        self.operator.validate()?;
        let depth = self.operator.effective_depth()?;
        if self.scan.n < 4 {
            return Err(Error::Config(format!(
                "scan N must be at least 4, got {}",
                self.scan.n
            )));
        }
        if depth < self.scan.n + 2 {
            return Err(Error::Config(format!(
                "operator depth must satisfy depth >= N + 2 (depth = {depth}, scan N = {})",
                self.scan.n
            )));
        }
        if depth < self.kernel.n + 2 {
            return Err(Error::Config(format!(
                "operator depth must satisfy depth >= N + 2 (depth = {depth}, kernel N = {})",
                self.kernel.n
            )));
        }
        if !(self.scan.tail_fraction > 0.0 && self.scan.tail_fraction < 1.0) {
            return Err(Error::Config(format!(
                "tail_fraction must lie strictly between 0 and 1, got {}",
                self.scan.tail_fraction
            )));
        }
        if !(self.scan.slope_threshold > 0.0 && self.scan.slope_threshold.is_finite()) {
            return Err(Error::Config(format!(
                "slope_threshold must be positive, got {}",
                self.scan.slope_threshold
            )));
        }
        if self.kernel.levels < 8 {
            return Err(Error::Config(format!(
                "kernel levels must be at least 8, got {}",
                self.kernel.levels
            )));
        }
        for (label, [re, im]) in [("w", self.kernel.w)]
            .into_iter()
            .chain(self.kernel.z.map(|z| ("z", z)))
        {
            if !(re.is_finite() && im.is_finite()) {
                return Err(Error::Config(format!(
                    "kernel point {label} must be finite, got [{re}, {im}]"
                )));
            }
        }
        self.scan.grid.validate()
    }

    /// Pretty JSON round-trippable through `parse_config`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// The config used when the CLI is run without `--config`.
    pub fn builtin_default() -> RunConfig {
        RunConfig {
            operator: OperatorSpec {
                family: Family::Example1,
                depth: DEFAULT_DEPTH,
                k: default_k(),
                base: BranchBase::default(),
                weights: None,
                parents: None,
                tail: None,
            },
            scan: ScanSpec::default(),
            kernel: KernelSpec::default(),
            output: OutputSpec::default(),
            seed: DEFAULT_SEED,
        }
    }
}

/// Parses and validates a config. Parse failures carry serde's line/column
/// context; validation failures name the violated invariant. Both map to
/// CLI exit code 1.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{tree_vertex_index, GraphKind, VertexId};

    #[test]
    fn minimal_config_gets_all_defaults() {
        let cfg = parse_config(r#"{"operator": {"family": "example1"}}"#).unwrap();
        assert_eq!(cfg.operator.family, Family::Example1);
        assert_eq!(cfg.operator.depth, 2100);
        assert_eq!(cfg.scan.n, 256);
        assert_eq!(cfg.scan.grid, GridSpec::default());
        assert_eq!(cfg.kernel.n, 256);
        assert_eq!(cfg.kernel.w, [0.4, 0.0]);
        assert_eq!(cfg.kernel.levels, 16);
        assert_eq!(cfg.seed, 0x5EED);
        assert_eq!(cfg.seed, 24301);
        assert!(cfg.output.csv && cfg.output.json && cfg.output.heatmap);
    }

    #[test]
    fn deep_scan_fits_default_depth() {
        let cfg =
            parse_config(r#"{"operator": {"family": "example1", "depth": 2100}, "scan": {"N": 2048}}"#)
                .unwrap();
        assert_eq!(cfg.scan.n, 2048);
        assert_eq!(cfg.operator.depth, 2100);
    }

    #[test]
    fn depth_invariant_is_checked_at_parse_time() {
        let err =
            parse_config(r#"{"operator": {"family": "example1", "depth": 100}, "scan": {"N": 2048}}"#)
                .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("depth >= N + 2"), "unexpected message: {msg}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected_with_context() {
        let err = parse_config(r#"{"operator": {"family": "example1", "depht": 50}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("depht"), "unexpected message: {msg}");
        assert_eq!(err.exit_code(), 1);

        let err = parse_config(r#"{"operator": {"family": "example1"}, "scans": {}}"#).unwrap_err();
        assert!(err.to_string().contains("scans"));
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_config("{\"operator\": {\"family\": \"example1\",}}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("parse error"), "unexpected message: {msg}");
        assert!(msg.contains("line"), "unexpected message: {msg}");
    }

    #[test]
    fn example2_rule_builds_tree_with_banded_branch() {
        let cfg = parse_config(
            r#"{"operator": {"family": "example2", "k": 3, "base": "example1-rule", "depth": 40}, "scan": {"N": 16}, "kernel": {"N": 16}}"#,
        )
        .unwrap();
        let (graph, weights) = cfg.operator.build().unwrap();
        assert_eq!(graph.kind(), GraphKind::Tree { k: 3 });
        assert_eq!(graph.depth(), 40);
        // Distinguished branch follows the dyadic band rule; other branches
        // are unweighted.
        for m in 1..=40u64 {
            let v1 = VertexId(tree_vertex_index(3, m as usize, 1) as u32);
            assert_eq!(weights.lambda(v1), example1_weight(m));
            for j in 2..=3 {
                let vj = VertexId(tree_vertex_index(3, m as usize, j) as u32);
                assert_eq!(weights.lambda(vj), 1.0);
            }
        }
    }

    #[test]
    fn classical_and_custom_families_build() {
        let cfg = parse_config(
            r#"{"operator": {"family": "classical", "weights": [0.5, 1.0, 0.5, 1.0, 0.5, 1.0, 0.5, 1.0], "depth": 8},
                "scan": {"N": 4}, "kernel": {"N": 4}}"#,
        )
        .unwrap();
        let (graph, weights) = cfg.operator.build().unwrap();
        assert_eq!(graph.kind(), GraphKind::Chain);
        assert_eq!(weights.lambda(VertexId(1)), 0.5);

        let cfg = parse_config(
            r#"{"operator": {"family": "custom-phi-graph",
                             "parents": [null, 0, 1, 2, 3, 4, 5],
                             "weights": [1.0, 0.5, 1.0, 0.5, 1.0, 0.5, 1.0]},
                "scan": {"N": 4}, "kernel": {"N": 4}}"#,
        )
        .unwrap();
        let (graph, _) = cfg.operator.build().unwrap();
        assert_eq!(graph.kind(), GraphKind::Custom);
        assert_eq!(graph.depth(), 6);
        let tail = graph.tail();
        assert_eq!(tail.weight_log2_sup, 0.0);
        assert_eq!(tail.weight_log2_inf, -1.0);
    }

    #[test]
    fn custom_depth_comes_from_parent_array() {
        // Only 7 levels of custom graph: a default-size scan cannot fit.
        let err = parse_config(
            r#"{"operator": {"family": "custom-phi-graph",
                             "parents": [null, 0, 1, 2, 3, 4, 5],
                             "weights": [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("depth >= N + 2"));
    }

    #[test]
    fn family_specific_requirements_are_enforced() {
        let err = parse_config(r#"{"operator": {"family": "classical"}}"#).unwrap_err();
        assert!(err.to_string().contains("weights"));

        let err = parse_config(
            r#"{"operator": {"family": "example2", "k": 0, "depth": 30}, "scan": {"N": 8}, "kernel": {"N": 8}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("k"));

        let err = parse_config(
            r#"{"operator": {"family": "example2", "base": "fibonacci", "depth": 30}, "scan": {"N": 8}, "kernel": {"N": 8}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("example1-rule"));

        let err = parse_config(
            r#"{"operator": {"family": "custom-phi-graph", "parents": [null, 0], "weights": [1.0]}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("parents"));
    }

    #[test]
    fn threshold_and_grid_validation() {
        let err = parse_config(
            r#"{"operator": {"family": "example1"}, "scan": {"tail_fraction": 1.5}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("tail_fraction"));

        let err = parse_config(
            r#"{"operator": {"family": "example1"}, "scan": {"slope_threshold": 0.0}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("slope_threshold"));

        let err = parse_config(
            r#"{"operator": {"family": "example1"}, "scan": {"grid": {"kind": "polar", "rays": 0}}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("ray"));
    }

    #[test]
    fn round_trip_preserves_every_field() {
        let text = r#"{
            "operator": {"family": "example2", "k": 5, "base": [0.5, 1.0, 0.5, 1.0, 0.5, 1.0, 0.5, 1.0, 0.5, 1.0], "depth": 10},
            "scan": {"N": 8, "grid": {"kind": "cartesian", "nx": 10, "ny": 12, "re": [-1.0, 1.0], "im": [-0.5, 0.5]},
                     "tail_fraction": 0.25, "slope_threshold": 0.01},
            "kernel": {"N": 6, "w": [0.3, -0.2], "z": [0.1, 0.1], "levels": 12},
            "output": {"dir": "reports", "prefix": "tree", "csv": true, "json": false, "heatmap": false},
            "seed": 17
        }"#;
        let cfg = parse_config(text).unwrap();
        let cfg2 = parse_config(&cfg.to_json()).unwrap();
        assert_eq!(cfg, cfg2);

        let dflt = RunConfig::builtin_default();
        let dflt2 = parse_config(&dflt.to_json()).unwrap();
        assert_eq!(dflt, dflt2);
    }
}
