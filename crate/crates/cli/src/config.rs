use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sensa_core::adapter::SimulatorSpec;
use sensa_core::compare::Correlation;
use sensa_core::regress::{ForestConfig, GprConfig, TreeConfig};
use sensa_core::sampling::BlockSampler;
use sensa_core::testbed::{AnalyticFn, Gr6jParams, WARMUP_DAYS};
use sensa_core::{Method, ParameterDef, ParameterSpace};

use crate::error::CliError;

/// Names accepted in `methods`.
pub const METHOD_NAMES: [&str; 7] = ["morris", "sobol", "vars", "ols", "tree", "forest", "gpr"];

/// The measure columns of the comparison table, in order.
pub const DEFAULT_COMPARE: [Method; 8] = [
    Method::MorrisDgsm,
    Method::SobolT,
    Method::VarsTo,
    Method::RegSrc,
    Method::TreeImportance,
    Method::ForestPermutation,
    Method::GprSlope,
    Method::GprInvRange,
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_dir")]
    pub report_dir: PathBuf,
    #[serde(default)]
    pub params: Vec<ParameterDef>,
    pub target: Target,
    pub outputs: Vec<OutputSel>,
    pub methods: Vec<String>,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default)]
    pub design: DesignOpts,
    #[serde(default)]
    pub options: Options,
}

fn default_dir() -> PathBuf {
    PathBuf::from("sensa_out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    Builtin {
        function: AnalyticFn,
    },
    Gr6j {
        /// Forcing CSV; synthetic forcing when absent.
        #[serde(default)]
        forcing: Option<PathBuf>,
        #[serde(default)]
        synthetic: SyntheticOpts,
        /// Day whose outputs are analysed.
        date: NaiveDate,
        #[serde(default = "default_warmup")]
        warmup: usize,
        #[serde(default)]
        kge: Option<KgeOpts>,
    },
    External {
        simulator: SimulatorSpec,
    },
}

fn default_warmup() -> usize {
    WARMUP_DAYS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticOpts {
    pub start: NaiveDate,
    pub days: usize,
    pub seed: u64,
}

impl Default for SyntheticOpts {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
            days: 3 * 365,
            seed: 1,
        }
    }
}

/// Adds a `KGE` output comparing simulated Qsim against the Qsim of a
/// reference parameter set over `[start, end]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgeOpts {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSel {
    pub name: String,
    #[serde(default)]
    pub log: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Filter {
    pub output: String,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignOpts {
    pub lhs_n: usize,
    pub lhs_sweeps: usize,
    pub morris_r: usize,
    pub morris_levels: usize,
    pub sobol_base_n: usize,
    pub sobol_sampler: BlockSampler,
    pub vars_centers: usize,
    pub vars_h: f64,
}

impl Default for DesignOpts {
    fn default() -> Self {
        Self {
            lhs_n: 500,
            lhs_sweeps: 0,
            morris_r: 50,
            morris_levels: 4,
            sobol_base_n: 1024,
            sobol_sampler: BlockSampler::Qrn,
            vars_centers: 50,
            vars_h: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    pub boot_reps: usize,
    pub conf_level: f64,
    pub ols_quadratic: bool,
    pub tree_min_node_size: usize,
    pub tree_min_improve: f64,
    pub forest_trees: usize,
    pub forest_mtry: Option<usize>,
    pub forest_min_node_size: usize,
    pub gpr_max_n: usize,
    pub gpr_alpha: f64,
    pub gpr_restarts: usize,
    /// Fractions of the design re-analysed for rank stability.
    pub ladder: Vec<f64>,
    pub correlation: Correlation,
    /// Measure columns for `compare`; the eight table columns when empty.
    pub compare: Vec<Method>,
}

impl Default for Options {
    fn default() -> Self {
        let tree = TreeConfig::default();
        let forest = ForestConfig::new(0);
        let gpr = GprConfig::new(0);
        Self {
            boot_reps: 1000,
            conf_level: 0.95,
            ols_quadratic: false,
            tree_min_node_size: tree.min_node_size,
            tree_min_improve: tree.min_improve,
            forest_trees: forest.trees,
            forest_mtry: forest.mtry,
            forest_min_node_size: forest.min_node_size,
            gpr_max_n: gpr.max_n,
            gpr_alpha: gpr.alpha,
            gpr_restarts: gpr.restarts,
            ladder: Vec::new(),
            correlation: Correlation::Pearson,
            compare: Vec::new(),
        }
    }
}

/// A validated config plus the values derived from it.
#[derive(Debug, Clone)]
pub struct Study {
    pub cfg: StudyConfig,
    pub seed: u64,
    pub space: ParameterSpace,
    /// Output directory, resolved against the config file location.
    pub dir: PathBuf,
    /// Directory relative paths in the config are resolved against.
    pub base: PathBuf,
    pub hash: String,
}

impl Study {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Study, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: StudyConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        Study::new(cfg, seed_override, base)
    }

    pub fn new(mut cfg: StudyConfig, seed_override: Option<u64>, base: PathBuf) -> Result<Study, CliError> {
        if let Some(s) = seed_override {
            cfg.seed = Some(s);
        }
        let seed = cfg
            .seed
            .ok_or_else(|| CliError::Config("a seed is required (config `seed` or --seed)".into()))?;
        if cfg.methods.is_empty() {
            return Err(CliError::Config("at least one method is required".into()));
        }
        for (i, m) in cfg.methods.iter().enumerate() {
            if cfg.methods[..i].contains(m) {
                return Err(CliError::Config(format!("method `{m}` listed twice")));
            }
            if !METHOD_NAMES.contains(&m.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown method `{m}`; expected one of {}",
                    METHOD_NAMES.join(", ")
                )));
            }
        }
        if cfg.outputs.is_empty() {
            return Err(CliError::Config("at least one output is required".into()));
        }
        let space = if cfg.params.is_empty() {
            match &cfg.target {
                Target::Builtin { function } => ParameterSpace::unit(function.k())?,
                Target::Gr6j { .. } => Gr6jParams::space(),
                Target::External { .. } => {
                    return Err(CliError::Config("external targets need [[params]]".into()))
                }
            }
        } else {
            ParameterSpace::new(cfg.params.clone())?
        };
        if let Target::Builtin { function } = &cfg.target {
            if function.k() != space.len() {
                return Err(CliError::Config(format!(
                    "builtin function takes {} inputs, the space has {}",
                    function.k(),
                    space.len()
                )));
            }
        }
        for f in &cfg.options.ladder {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(CliError::Config(format!("ladder fraction {f} not in (0, 1]")));
            }
        }
        let names = output_names(&cfg);
        for o in &cfg.outputs {
            if !names.contains(&o.name) {
                return Err(CliError::Config(format!(
                    "output `{}` is not produced by the target (available: {})",
                    o.name,
                    names.join(", ")
                )));
            }
        }
        for f in &cfg.filters {
            if !names.contains(&f.output) {
                return Err(CliError::Config(format!("filter on unknown output `{}`", f.output)));
            }
        }
        let json = serde_json::to_vec(&cfg).expect("config serializes");
        let hash = hex::encode(Sha256::digest(&json));
        let dir = base.join(&cfg.report_dir);
        Ok(Study {
            cfg,
            seed,
            space,
            dir,
            base,
            hash,
        })
    }

    pub fn has(&self, method: &str) -> bool {
        self.cfg.methods.iter().any(|m| m == method)
    }

    pub fn output_names(&self) -> Vec<String> {
        output_names(&self.cfg)
    }

    /// Measures `compare` tabulates, restricted to those the configured
    /// methods produce.
    pub fn compare_measures(&self) -> Vec<Method> {
        let wanted: Vec<Method> = if self.cfg.options.compare.is_empty() {
            DEFAULT_COMPARE.to_vec()
        } else {
            self.cfg.options.compare.clone()
        };
        wanted
            .into_iter()
            .filter(|m| self.has(method_family(*m)))
            .collect()
    }

    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            min_node_size: self.cfg.options.tree_min_node_size,
            min_leaf: None,
            min_improve: self.cfg.options.tree_min_improve,
        }
    }

    pub fn forest_config(&self) -> ForestConfig {
        let o = &self.cfg.options;
        ForestConfig {
            trees: o.forest_trees,
            mtry: o.forest_mtry,
            min_node_size: o.forest_min_node_size,
            seed: self.seed,
        }
    }

    pub fn gpr_config(&self) -> GprConfig {
        let o = &self.cfg.options;
        GprConfig {
            max_n: o.gpr_max_n,
            alpha: o.gpr_alpha,
            restarts: o.gpr_restarts,
            ..GprConfig::new(self.seed)
        }
    }
}

/// Config-level method name producing `m`.
pub fn method_family(m: Method) -> &'static str {
    match m {
        Method::MorrisDgsm => "morris",
        Method::SobolS1 | Method::SobolT => "sobol",
        Method::VarsTo => "vars",
        Method::RegSrc => "ols",
        Method::TreeImportance => "tree",
        Method::ForestPermutation | Method::ForestImpurity => "forest",
        Method::GprSlope | Method::GprInvRange => "gpr",
    }
}

pub fn output_names(cfg: &StudyConfig) -> Vec<String> {
    match &cfg.target {
        Target::Builtin { .. } => vec!["y".to_string()],
        Target::Gr6j { kge, .. } => {
            let mut v: Vec<String> = sensa_core::testbed::OUTPUT_NAMES.iter().map(|s| s.to_string()).collect();
            if kge.is_some() {
                v.push("KGE".into());
            }
            v
        }
        Target::External { simulator } => simulator.output_names.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"
seed = 1
methods = ["sobol"]
[target]
type = "builtin"
function = { name = "ishigami", a = 7.0, b = 0.1 }
[[outputs]]
name = "y"
"#;

    fn study(text: &str) -> Result<Study, CliError> {
        Study::new(toml::from_str(text).unwrap(), None, PathBuf::from("/tmp"))
    }

    #[test]
    fn defaults_and_unit_space() {
        let s = study(MIN).unwrap();
        assert_eq!(s.space.names(), ["x1", "x2", "x3"]);
        assert_eq!(s.cfg.design.sobol_base_n, 1024);
        assert_eq!(s.dir, PathBuf::from("/tmp/sensa_out"));
        assert_eq!(s.compare_measures(), vec![Method::SobolT]);
        assert_eq!(s.hash.len(), 64);
    }

    #[test]
    fn hash_tracks_config_and_seed_override() {
        let a = study(MIN).unwrap();
        let b = Study::new(toml::from_str(MIN).unwrap(), Some(2), PathBuf::from("/tmp")).unwrap();
        let c = Study::new(toml::from_str(MIN).unwrap(), Some(1), PathBuf::from("/elsewhere")).unwrap();
        assert_ne!(a.hash, b.hash);
        assert_eq!(b.seed, 2);
        // location of the config file does not enter the hash
        assert_eq!(a.hash, c.hash);
    }

    #[test]
    fn duplicate_methods_are_rejected() {
        let text = MIN.replace("[\"sobol\"]", "[\"sobol\", \"sobol\"]");
        assert!(matches!(study(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(toml::from_str::<StudyConfig>(&format!("{MIN}\n[design]\nlhs = 3\n")).is_err());
    }

    #[test]
    fn arity_mismatch_is_a_config_error() {
        let text = MIN.replace("[[outputs]]", "[[params]]\nname = \"a\"\nlower = 0.0\nupper = 1.0\n[[outputs]]");
        assert!(matches!(study(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn gr6j_outputs_include_kge_only_when_configured() {
        let base = r#"
seed = 1
methods = ["morris"]
[target]
type = "gr6j"
date = "2001-05-01"
[[outputs]]
name = "Qsim"
"#;
        let s = study(base).unwrap();
        assert_eq!(s.space.len(), 6);
        assert!(!s.output_names().contains(&"KGE".to_string()));
        let with = base.replace(
            "[[outputs]]",
            "kge = { start = \"2001-03-01\", end = \"2001-03-31\", reference = [350.0, -0.3, 90.0, 1.7, 0.2, 5.0] }\n[[outputs]]",
        );
        assert!(study(&with).unwrap().output_names().contains(&"KGE".to_string()));
    }

    #[test]
    fn every_measure_maps_to_a_method_name() {
        for m in Method::ALL {
            assert!(METHOD_NAMES.contains(&method_family(m)));
        }
    }
}
