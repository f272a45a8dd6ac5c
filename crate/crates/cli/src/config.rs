//! TOML experiment configs and the built-in presets.
//!
//! A config file either describes one experiment with top-level keys, or
//! lists `[[preset]]` tables; top-level keys then act as defaults for every
//! preset.
//!
//! ```toml
//! N = 5
//! M = 10
//! occupations = "0,0,1,1,0,0,0,0,0,0,0,0,0,0,0"   # or [0, 0, 1, ...] or excited = [3, 4]
//! t_max = 2000.0
//! t_steps = 2001                                 # number of samples
//! analyses = ["dynamics", "gge"]
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use quenchlab_core::dynamics::RecurrenceConfig;
use quenchlab_core::model::{ChainSpec, FockExcitation, QuenchSpec, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Dynamics,
    Gge,
    Covariance,
    FockOracle,
    Delocalization,
    Sweep,
}

impl Analysis {
    pub fn name(self) -> &'static str {
        match self {
            Analysis::Dynamics => "dynamics",
            Analysis::Gge => "gge",
            Analysis::Covariance => "covariance",
            Analysis::FockOracle => "fock-oracle",
            Analysis::Delocalization => "delocalization",
            Analysis::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Occupations {
    List(Vec<u32>),
    Text(String),
}

impl Occupations {
    fn parse(&self) -> Result<Vec<u32>, CliError> {
        match self {
            Occupations::List(v) => Ok(v.clone()),
            Occupations::Text(s) => s
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<u32>()
                        .map_err(|_| CliError::Config(format!("bad occupation {t:?} in {s:?}")))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupations: Option<Occupations>,
    /// 1-based excited modes, one quantum each (repeat for more).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excited: Option<Vec<usize>>,
}

/// Raw preset as written in TOML; every field optional so presets can inherit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupations: Option<Occupations>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excited: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyses: Option<Vec<Analysis>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_total: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recurrence_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation_skip: Option<f64>,
}

macro_rules! inherit {
    ($out:ident, $base:ident, $($field:ident),*) => {
        $( if $out.$field.is_none() { $out.$field = $base.$field.clone(); } )*
    };
}

impl PresetConfig {
    fn inherit(mut self, base: &PresetConfig) -> Self {
        inherit!(
            self,
            base,
            name,
            n,
            m,
            mass,
            omega0,
            hbar,
            occupations,
            excited,
            t_max,
            t_steps,
            analyses,
            sweep,
            cutoff,
            order,
            max_total,
            floor,
            covariance_dt,
            windows,
            recurrence_threshold,
            relaxation_skip
        );
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Options {
    pub cutoff: Option<u8>,
    pub order: Option<usize>,
    pub max_total: Option<u32>,
    pub floor: f64,
    pub covariance_dt: f64,
    pub windows: Option<Vec<f64>>,
    pub recurrence_threshold: f64,
    pub relaxation_skip: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPreset {
    pub name: String,
    pub spec: QuenchSpec,
    pub analyses: Vec<Analysis>,
    pub sweep: Vec<(usize, usize, FockExcitation)>,
    pub options: Options,
    /// The merged raw config, echoed into the manifest.
    pub echo: PresetConfig,
}

fn state_for(
    n: usize,
    m: usize,
    occupations: &Option<Occupations>,
    excited: &Option<Vec<usize>>,
) -> Result<FockExcitation, CliError> {
    let size = n + m;
    match (occupations, excited) {
        (Some(_), Some(_)) => Err(CliError::Config(
            "give either occupations or excited, not both".into(),
        )),
        (Some(occ), None) => {
            let occ = occ.parse()?;
            if occ.len() != size {
                return Err(CliError::Config(format!(
                    "{} occupations given for N + M = {size} modes",
                    occ.len()
                )));
            }
            Ok(FockExcitation::new(occ))
        }
        (None, Some(modes)) => {
            let zero_based = modes
                .iter()
                .map(|&k| {
                    if k == 0 || k > size {
                        Err(CliError::Config(format!(
                            "excited mode {k} outside 1..={size}"
                        )))
                    } else {
                        Ok(k - 1)
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(FockExcitation::excited(size, &zero_based)?)
        }
        (None, None) => Ok(FockExcitation::vacuum(size)),
    }
}

impl ExperimentPreset {
    pub fn from_config(raw: PresetConfig, fallback_name: &str) -> Result<Self, CliError> {
        let name = raw
            .name
            .clone()
            .unwrap_or_else(|| fallback_name.to_string());
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(CliError::Config(format!(
                "preset name {name:?} must be [A-Za-z0-9_-]+"
            )));
        }
        let n = raw
            .n
            .ok_or_else(|| CliError::Config(format!("preset {name}: N is required")))?;
        let m = raw
            .m
            .ok_or_else(|| CliError::Config(format!("preset {name}: M is required")))?;
        let chain = |size| {
            ChainSpec::with_constants(
                size,
                raw.mass.unwrap_or(1.0),
                raw.omega0.unwrap_or(1.0),
                raw.hbar.unwrap_or(1.0),
            )
        };
        let state = state_for(n, m, &raw.occupations, &raw.excited)?;
        let grid = TimeGrid::uniform(raw.t_max.unwrap_or(2000.0), raw.t_steps.unwrap_or(2001))?;
        let spec = QuenchSpec::new(chain(n)?, chain(m)?, state, grid)?;

        let mut analyses = raw
            .analyses
            .clone()
            .unwrap_or_else(|| vec![Analysis::Dynamics, Analysis::Gge]);
        let unique: BTreeSet<Analysis> = analyses.iter().copied().collect();
        if unique.len() != analyses.len() {
            return Err(CliError::Config(format!(
                "preset {name}: duplicate analyses"
            )));
        }
        analyses.sort();

        let sweep = raw
            .sweep
            .iter()
            .flatten()
            .map(|e| Ok((e.n, e.m, state_for(e.n, e.m, &e.occupations, &e.excited)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        if analyses.contains(&Analysis::Sweep) && sweep.is_empty() {
            return Err(CliError::Config(format!(
                "preset {name}: the sweep analysis needs a sweep list"
            )));
        }

        let defaults = RecurrenceConfig::default();
        let options = Options {
            cutoff: raw.cutoff,
            order: raw.order,
            max_total: raw.max_total,
            floor: raw.floor.unwrap_or(1e-12),
            covariance_dt: raw.covariance_dt.unwrap_or(0.25),
            windows: raw.windows.clone(),
            recurrence_threshold: raw.recurrence_threshold.unwrap_or(defaults.threshold),
            relaxation_skip: raw.relaxation_skip.unwrap_or(defaults.relaxation_skip),
        };
        if !(options.floor > 0.0) {
            return Err(CliError::Config(format!(
                "preset {name}: floor must be positive"
            )));
        }
        if !(options.covariance_dt > 0.0) {
            return Err(CliError::Config(format!(
                "preset {name}: covariance_dt must be positive"
            )));
        }
        if options.order == Some(0) {
            return Err(CliError::Config(format!(
                "preset {name}: order must be at least 1"
            )));
        }
        let mut echo = raw;
        echo.name = Some(name.clone());
        Ok(Self {
            name,
            spec,
            analyses,
            sweep,
            options,
            echo,
        })
    }
}

pub fn parse_config(text: &str) -> Result<Vec<ExperimentPreset>, CliError> {
    let mut table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
    let listed = table.remove("preset");
    let top: PresetConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let presets = match listed {
        None => vec![ExperimentPreset::from_config(top, "run")?],
        Some(value) => {
            let raw: Vec<PresetConfig> = value
                .try_into()
                .map_err(|e: toml::de::Error| CliError::Config(format!("[[preset]]: {e}")))?;
            if raw.is_empty() {
                return Err(CliError::Config("[[preset]] list is empty".into()));
            }
            let base = PresetConfig { name: None, ..top };
            raw.into_iter()
                .enumerate()
                .map(|(i, p)| {
                    ExperimentPreset::from_config(p.inherit(&base), &format!("preset{}", i + 1))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    let mut names = BTreeSet::new();
    for p in &presets {
        if !names.insert(p.name.clone()) {
            return Err(CliError::Config(format!(
                "duplicate preset name {:?}",
                p.name
            )));
        }
    }
    Ok(presets)
}

pub fn load_config(path: &Path) -> Result<Vec<ExperimentPreset>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

pub const BUILTIN_PRESETS: [&str; 5] = ["fig1", "table1", "sweep", "oracle", "covariance"];

/// Built-in experiments reproducing the figures and tables.
pub fn builtin(name: &str) -> Option<Vec<ExperimentPreset>> {
    let toml = match name {
        "fig1" => {
            r#"
            N = 5
            t_max = 2000.0
            t_steps = 2001
            analyses = ["dynamics", "gge"]
            [[preset]]
            name = "fig1_M10"
            M = 10
            excited = [3, 4]
            [[preset]]
            name = "fig1_M16"
            M = 16
            excited = [3, 4]
            [[preset]]
            name = "fig1_M20"
            M = 20
            excited = [3, 4]
            "#
        }
        "table1" => {
            r#"
            name = "table1"
            N = 5
            M = 10
            analyses = ["delocalization"]
            order = 1
            floor = 1e-12
            sweep = [
                { N = 5, M = 10, excited = [3] },
                { N = 5, M = 10, excited = [3, 4] },
                { N = 5, M = 16, excited = [3] },
                { N = 5, M = 16, excited = [3, 4] },
                { N = 5, M = 20, excited = [3] },
                { N = 5, M = 20, excited = [3, 4] },
            ]
            "#
        }
        "sweep" => {
            r#"
            name = "sweep"
            N = 5
            M = 5
            analyses = ["sweep"]
            sweep = [
                { N = 5, M = 5, excited = [1] },
                { N = 10, M = 10, excited = [1] },
                { N = 20, M = 20, excited = [1] },
                { N = 40, M = 40, excited = [1] },
            ]
            "#
        }
        "oracle" => {
            r#"
            name = "oracle"
            N = 2
            M = 2
            occupations = "0,1,1,0"
            t_max = 50.0
            t_steps = 501
            analyses = ["dynamics", "fock-oracle"]
            cutoff = 8
            order = 14
            "#
        }
        "covariance" => {
            r#"
            name = "covariance"
            N = 5
            M = 10
            t_max = 3200.0
            t_steps = 801
            analyses = ["covariance", "gge"]
            "#
        }
        _ => return None,
    };
    Some(parse_config(toml).expect("built-in presets are valid"))
}
