use std::path::Path;

use picard_nls::channel::Channel;
use picard_nls::experiments::{ConvergenceRecord, SchemeConfig};
use picard_nls::oracles::{GaussianOracleConfig, OracleCase, OracleRule};
use picard_nls::turbulence::TurbulenceConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauSweep {
    pub case: OracleCase,
    pub taus: Vec<f64>,
    pub channels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_tau0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_rule: Option<OracleRule>,
}

impl TauSweep {
    pub fn oracle(&self, final_time: f64) -> GaussianOracleConfig {
        let mut o = GaussianOracleConfig::new(self.case, final_time);
        if let Some(t) = self.oracle_tau0 {
            o.tau0 = t;
        }
        if let Some(r) = self.oracle_rule {
            o.rule = r;
        }
        o
    }

    pub fn channels(&self) -> Result<Vec<Channel>, CliError> {
        self.channels.iter().map(|c| Channel::parse(c).map_err(CliError::from)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsSweep {
    pub epsilons: Vec<f64>,
    pub reference_tau: f64,
}

/// Acceptance window on one channel of a convergence record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub channel: String,
    /// Abscissa range `[lo, hi]`; the whole sweep when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_error: Option<f64>,
}

impl Check {
    fn bounds(&self) -> (f64, f64) {
        self.window.map_or((0.0, f64::INFINITY), |[a, b]| (a, b))
    }

    /// One report line and the verdict.
    pub fn evaluate(&self, rec: &ConvergenceRecord) -> (String, bool) {
        let (lo, hi) = self.bounds();
        let Some((xs, ys)) = rec.series(&self.channel) else {
            return (format!("{}: no such channel", self.channel), false);
        };
        let range = match self.window {
            Some([a, b]) => format!(" on [{a:e}, {b:e}]"),
            None => String::new(),
        };
        let mut ok = true;
        let mut parts = Vec::new();
        if self.min_slope.is_some() || self.max_slope.is_some() {
            match rec.slope(&self.channel, lo, hi) {
                Some(fit) => {
                    let pass = self.min_slope.map_or(true, |m| fit.slope >= m) && self.max_slope.map_or(true, |m| fit.slope <= m);
                    ok &= pass;
                    parts.push(format!(
                        "slope {:.3} in [{}, {}] ({} points)",
                        fit.slope,
                        self.min_slope.map_or("-inf".into(), |v| v.to_string()),
                        self.max_slope.map_or("inf".into(), |v| v.to_string()),
                        fit.points
                    ));
                }
                None => {
                    ok = false;
                    parts.push("slope undefined (fewer than two points)".into());
                }
            }
        }
        if let Some(max) = self.max_error {
            let worst = xs
                .iter()
                .zip(&ys)
                .filter(|(x, _)| **x >= lo && **x <= hi)
                .map(|(_, y)| *y)
                .fold(0.0, f64::max);
            ok &= worst <= max;
            parts.push(format!("max error {worst:.3e} <= {max:e}"));
        }
        let verdict = if ok { "PASS" } else { "FAIL" };
        (format!("{}{range}: {} {verdict}", self.channel, parts.join(", ")), ok)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauFile {
    pub scheme: SchemeConfig,
    pub sweep: TauSweep,
    #[serde(default)]
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsFile {
    pub scheme: SchemeConfig,
    pub sweep: EpsSweep,
    #[serde(default)]
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurbulenceChecks {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_diagnostic: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurbulenceFile {
    pub run: TurbulenceConfig,
    #[serde(default)]
    pub checks: TurbulenceChecks,
}

pub fn preset(name: &str) -> Option<&'static str> {
    Some(match name {
        "convergence_tau_quintic1d" => include_str!("../presets/convergence_tau_quintic1d.toml"),
        "convergence_tau_cubic2d" => include_str!("../presets/convergence_tau_cubic2d.toml"),
        "convergence_eps_quintic1d" => include_str!("../presets/convergence_eps_quintic1d.toml"),
        "convergence_eps_cubic2d" => include_str!("../presets/convergence_eps_cubic2d.toml"),
        "turbulence_desk" => include_str!("../presets/turbulence_desk.toml"),
        "turbulence_full" => include_str!("../presets/turbulence_full.toml"),
        _ => return None,
    })
}

/// Parses `path` when given, otherwise the named preset.
pub fn load<T: DeserializeOwned>(path: Option<&Path>, preset_name: &str) -> Result<T, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => preset(preset_name).ok_or_else(|| CliError::Config(format!("no preset '{preset_name}'")))?.to_string(),
    };
    toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
}

/// Comma-separated list of numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"))).collect()
}
