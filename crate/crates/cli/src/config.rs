//! Scenario configuration files.
//!
//! Scenarios are flat TOML files with units spelled out in the key names
//! (`t_r_us`, `rabi_mhz`, `gamma13_khz`). Pulse areas accept either plain
//! radians or `pi` literals (`"0.5pi"`, `"3pi"`) so fixtures stay free of
//! decimal-π drift. Unknown keys are rejected.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use plecho_core::analysis::SimSetup;
use plecho_core::integrator::Sampling;
use plecho_core::model::{gaussian_grid, RelaxationParams, SequenceKind};
use plecho_core::protocol::ProtocolParams;

use crate::CliError;

/// A pulse area, remembered in the form it was written so config echoes
/// round-trip verbatim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AreaValue {
    /// Multiple of π, written like "0.5pi" or "3pi".
    PiMultiple(f64),
    /// Plain radians.
    Radians(f64),
}

impl AreaValue {
    pub fn radians(&self) -> f64 {
        match self {
            AreaValue::PiMultiple(m) => m * std::f64::consts::PI,
            AreaValue::Radians(r) => *r,
        }
    }
}

/// Parses one numeric token that may carry a `pi` suffix.
pub fn parse_pi_token(token: &str) -> Result<AreaValue, String> {
    let t = token.trim();
    if let Some(prefix) = t.strip_suffix("pi") {
        let m = if prefix.is_empty() {
            1.0
        } else {
            prefix
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("bad pi-multiple in {t:?}"))?
        };
        Ok(AreaValue::PiMultiple(m))
    } else {
        t.parse::<f64>().map(AreaValue::Radians).map_err(|_| format!("bad number {t:?}"))
    }
}

impl Serialize for AreaValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            AreaValue::PiMultiple(m) => serializer.serialize_str(&format!("{m}pi")),
            AreaValue::Radians(r) => serializer.serialize_f64(*r),
        }
    }
}

impl<'de> Deserialize<'de> for AreaValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct AreaVisitor;
        impl Visitor<'_> for AreaVisitor {
            type Value = AreaValue;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number in radians or a string like \"0.5pi\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<AreaValue, E> {
                Ok(AreaValue::Radians(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<AreaValue, E> {
                Ok(AreaValue::Radians(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<AreaValue, E> {
                parse_pi_token(v).map_err(E::custom)
            }
        }
        deserializer.deserialize_any(AreaVisitor)
    }
}

/// Protocol selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolKind {
    #[serde(rename = "two-pulse")]
    TwoPulse,
    #[serde(rename = "phase-locked")]
    PhaseLocked,
}

impl From<ProtocolKind> for SequenceKind {
    fn from(k: ProtocolKind) -> SequenceKind {
        match k {
            ProtocolKind::TwoPulse => SequenceKind::TwoPulse,
            ProtocolKind::PhaseLocked => SequenceKind::PhaseLocked,
        }
    }
}

fn default_dt_pulse() -> f64 {
    1e-3
}

fn default_dt_sample() -> f64 {
    0.02
}

/// One scenario: protocol parameters, grid, relaxation, sampling and output
/// options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub protocol: ProtocolKind,
    pub t_d_us: f64,
    pub t_r_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_b1_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_b2_us: Option<f64>,
    pub area_d: AreaValue,
    pub area_r: AreaValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_b1: Option<AreaValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_b2: Option<AreaValue>,
    pub rabi_mhz: f64,
    pub grid_fwhm_mhz: f64,
    pub grid_spacing_mhz: f64,
    pub grid_count: usize,
    #[serde(default)]
    pub gamma_pop_31_khz: f64,
    #[serde(default)]
    pub gamma_pop_32_khz: f64,
    #[serde(default)]
    pub gamma_pop_21_khz: f64,
    #[serde(default)]
    pub gamma13_khz: f64,
    #[serde(default)]
    pub gamma23_khz: f64,
    #[serde(default)]
    pub gamma12_khz: f64,
    #[serde(default = "default_dt_pulse")]
    pub dt_pulse_us: f64,
    #[serde(default = "default_dt_sample")]
    pub dt_sample_us: f64,
    /// Record ensemble-averaged populations in the signal CSV.
    #[serde(default)]
    pub record_populations: bool,
    /// Also run the matching conventional two-pulse configuration and report
    /// the signed efficiency against its echo.
    #[serde(default)]
    pub with_reference: bool,
    /// Horizon override; the default covers the predicted echo plus margin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub echo_window_start_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub echo_window_end_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_d: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_b1: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_b2: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_d_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_b1_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_b2_mhz: Option<f64>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    fn require<T: Copy>(&self, value: Option<T>, key: &str) -> Result<T, CliError> {
        value.ok_or_else(|| {
            CliError::Config(format!("missing key {key} (required for protocol \"phase-locked\")"))
        })
    }

    /// Converts the file-level schema into a core simulation setup.
    pub fn to_setup(&self) -> Result<SimSetup, CliError> {
        let (t_b1, t_b2, area_b1, area_b2) = match self.protocol {
            ProtocolKind::PhaseLocked => (
                self.require(self.t_b1_us, "t_b1_us")?,
                self.require(self.t_b2_us, "t_b2_us")?,
                self.require(self.area_b1, "area_b1")?.radians(),
                self.require(self.area_b2, "area_b2")?.radians(),
            ),
            // Unused by the two-pulse builder; keep them ordered so the
            // parameter struct stays self-consistent.
            ProtocolKind::TwoPulse => (
                self.t_b1_us.unwrap_or(self.t_r_us + 1.0),
                self.t_b2_us.unwrap_or(self.t_r_us + 2.0),
                self.area_b1.map(|a| a.radians()).unwrap_or(std::f64::consts::PI),
                self.area_b2.map(|a| a.radians()).unwrap_or(3.0 * std::f64::consts::PI),
            ),
        };
        let protocol = ProtocolParams {
            t_d: self.t_d_us,
            t_r: self.t_r_us,
            t_b1,
            t_b2,
            area_d: self.area_d.radians(),
            area_r: self.area_r.radians(),
            area_b1,
            area_b2,
            rabi_freq: self.rabi_mhz,
            k_d: self.k_d,
            k_b1: self.k_b1,
            k_b2: self.k_b2,
            omega_d: self.omega_d_mhz,
            omega_b1: self.omega_b1_mhz,
            omega_b2: self.omega_b2_mhz,
        };
        let grid = gaussian_grid(self.grid_fwhm_mhz, self.grid_spacing_mhz, self.grid_count)
            .map_err(|e| {
                CliError::Config(format!("grid_fwhm_mhz/grid_spacing_mhz/grid_count: {e}"))
            })?;
        let relax = RelaxationParams {
            gamma_pop_31: self.gamma_pop_31_khz,
            gamma_pop_32: self.gamma_pop_32_khz,
            gamma_pop_21: self.gamma_pop_21_khz,
            gamma_13: self.gamma13_khz,
            gamma_23: self.gamma23_khz,
            gamma_12: self.gamma12_khz,
        };
        relax
            .validate()
            .map_err(|e| CliError::Config(format!("relaxation rates: {e}")))?;
        let sampling = Sampling {
            dt_pulse: self.dt_pulse_us,
            dt_sample: self.dt_sample_us,
            record_populations: self.record_populations,
        };
        sampling
            .validate()
            .map_err(|e| CliError::Config(format!("dt_pulse_us/dt_sample_us: {e}")))?;
        Ok(SimSetup { kind: self.protocol.into(), protocol, grid, relax, sampling })
    }
}

/// Parses a `--values` argument: either a comma list (`10,20,30`) or an
/// inclusive range `start:stop:step`. Tokens accept `pi` literals.
pub fn parse_values(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |msg: String| CliError::Config(format!("--values {spec:?}: {msg}"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("range form is start:stop:step".into()));
        }
        let start = parse_pi_token(parts[0]).map_err(bad)?.radians();
        let stop = parse_pi_token(parts[1]).map_err(bad)?.radians();
        let step = parse_pi_token(parts[2]).map_err(bad)?.radians();
        if !step.is_finite() || step <= 0.0 || stop < start {
            return Err(bad("need step > 0 and stop >= start".into()));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| start + k as f64 * step).collect())
    } else {
        spec.split(',')
            .map(|tok| parse_pi_token(tok).map(|v| v.radians()).map_err(&bad))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn pi_tokens_parse() {
        assert_eq!(parse_pi_token("pi").unwrap().radians(), PI);
        assert_eq!(parse_pi_token("0.5pi").unwrap().radians(), 0.5 * PI);
        assert_eq!(parse_pi_token("3pi").unwrap().radians(), 3.0 * PI);
        assert_eq!(parse_pi_token("1.25").unwrap().radians(), 1.25);
        assert!(parse_pi_token("xpi").is_err());
        assert!(parse_pi_token("").is_err());
    }

    #[test]
    fn values_range_is_inclusive() {
        let v = parse_values("0.5pi:12pi:0.25pi").unwrap();
        assert_eq!(v.len(), 47);
        assert!((v[0] - 0.5 * PI).abs() < 1e-12);
        assert!((v.last().unwrap() - 12.0 * PI).abs() < 1e-9);
        let v = parse_values("10,20,30").unwrap();
        assert_eq!(v, vec![10.0, 20.0, 30.0]);
    }

    #[test]
    fn scenario_round_trips_through_toml() {
        let text = r#"
protocol = "phase-locked"
t_d_us = 5.0
t_r_us = 10.0
t_b1_us = 10.1
t_b2_us = 55.0
area_d = "0.5pi"
area_r = "pi"
area_b1 = "pi"
area_b2 = "3pi"
rabi_mhz = 5.0
grid_fwhm_mhz = 0.68
grid_spacing_mhz = 0.01
grid_count = 161
gamma_pop_31_khz = 5.0
gamma_pop_32_khz = 5.0
gamma13_khz = 10.0
gamma23_khz = 10.0
"#;
        let config: ScenarioConfig = toml::from_str(text).unwrap();
        assert_eq!(config.area_d, AreaValue::PiMultiple(0.5));
        let echoed = toml::to_string(&config).unwrap();
        let reparsed: ScenarioConfig = toml::from_str(&echoed).unwrap();
        assert_eq!(config, reparsed);
        let setup = config.to_setup().unwrap();
        assert!((setup.protocol.area_b2 - 3.0 * PI).abs() < 1e-12);
        assert_eq!(setup.grid.len(), 161);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let text = r#"
protocol = "two-pulse"
t_d_us = 5.0
t_r_us = 10.0
area_d = "0.5pi"
area_r = "pi"
rabi_mhz = 5.0
grid_fwhm_mhz = 0.68
grid_spacing_mhz = 0.01
grid_count = 161
rabbi_mhz = 5.0
"#;
        let err = toml::from_str::<ScenarioConfig>(text).unwrap_err().to_string();
        assert!(err.contains("rabbi_mhz"), "{err}");
    }

    #[test]
    fn phase_locked_requires_lock_keys() {
        let text = r#"
protocol = "phase-locked"
t_d_us = 5.0
t_r_us = 10.0
area_d = "0.5pi"
area_r = "pi"
rabi_mhz = 5.0
grid_fwhm_mhz = 0.68
grid_spacing_mhz = 0.01
grid_count = 161
"#;
        let config: ScenarioConfig = toml::from_str(text).unwrap();
        let err = config.to_setup().unwrap_err();
        assert!(format!("{err}").contains("t_b1_us"), "{err}");
    }
}
