use gradmatch::estimator::WeightSpec;
use gradmatch::knot_select::KnotPolicy;
use gradmatch::montecarlo::{ExperimentConfig, ModelKind};
use serde::{Deserialize, Serialize};

pub const RUN_CONFIG_SCHEMA: u32 = 1;

/// Top level of an `mc` configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub cases: Vec<CaseConfig>,
}

/// One experiment design, run once per entry of `n_values`. Output files
/// are named after `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    pub model: ModelKind,
    pub theta_star: Vec<f64>,
    #[serde(default)]
    pub fixed: Vec<usize>,
    pub x0: Vec<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    pub n_values: Vec<usize>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub knot_policy: KnotPolicy,
    #[serde(default = "default_weights")]
    pub weights: Vec<WeightSpec>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed: u64,
    /// Also write one CSV row per replication and weight.
    #[serde(default)]
    pub raw_dump: bool,
}

fn default_t_end() -> f64 {
    20.0
}

fn default_sigma() -> f64 {
    0.2
}

fn default_weights() -> Vec<WeightSpec> {
    vec![WeightSpec::boundary(), WeightSpec::Uniform]
}

fn default_replications() -> usize {
    1000
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if cfg.schema != RUN_CONFIG_SCHEMA {
            return Err(format!("unsupported schema {} (expected {RUN_CONFIG_SCHEMA})", cfg.schema));
        }
        if cfg.cases.is_empty() {
            return Err("no cases".into());
        }
        for case in &cfg.cases {
            if case.name.is_empty() || !case.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(format!("case name {:?} must be non-empty and use [A-Za-z0-9_-]", case.name));
            }
            if case.n_values.is_empty() {
                return Err(format!("case {}: n_values is empty", case.name));
            }
            for e in case.experiments() {
                e.validate().map_err(|err| format!("case {}: {err}", case.name))?;
            }
        }
        let mut names: Vec<&str> = cfg.cases.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err("case names must be unique".into());
        }
        Ok(cfg)
    }
}

impl CaseConfig {
    pub fn experiments(&self) -> Vec<ExperimentConfig> {
        self.n_values
            .iter()
            .map(|&n| ExperimentConfig {
                model: self.model,
                theta_star: self.theta_star.clone(),
                fixed: self.fixed.clone(),
                x0: self.x0.clone(),
                t_end: self.t_end,
                n,
                sigma: self.sigma,
                knot_policy: self.knot_policy.clone(),
                weights: self.weights.clone(),
                replications: self.replications,
                seed: self.seed,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_parse() {
        for text in [
            include_str!("../../../configs/desk_case1.json"),
            include_str!("../../../configs/desk_case2.json"),
            include_str!("../../../configs/full_reproduction.json"),
        ] {
            let config = RunConfig::parse(text).unwrap();
            for case in &config.cases {
                assert_eq!(case.experiments().len(), case.n_values.len());
            }
        }
        let full = RunConfig::parse(include_str!("../../../configs/full_reproduction.json")).unwrap();
        assert_eq!(full.cases.len(), 2);
        assert!(full.cases.iter().all(|c| c.n_values == [20, 30, 50, 100, 200, 500, 1000] && c.replications == 1000));
    }
}
