//! Run configuration: a TOML file merged with command-line overrides.
//!
//! ```toml
//! [scenario]
//! M = 100
//! d_over_lambda = 0.25
//! K = 10
//! L = 50
//! theta0_deg = 30.0
//! spread_deg = 40.0
//! snr_db = 0.0
//! phi_mode = "auto"   # auto | manual | optimal
//! seed = 1
//!
//! [run]
//! experiment = "fig3"
//! trials = 1000
//! arch = "infinite,sigma_delta,onebit"
//! receiver = "mrc"
//! csi = "perfect"
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::array_model::{db_to_linear, PhiSetting};
use crate::experiments::{builtin, ExperimentKind, ExperimentSpec, Sweep, FULL_SCALE_TRIALS};
use crate::receivers::{Architecture, CsiMode, ReceiverKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub d_over_lambda: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    pub theta0_deg: Option<f64>,
    pub spread_deg: Option<f64>,
    pub snr_db: Option<f64>,
    pub phi_mode: Option<String>,
    pub phi_deg: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub experiment: Option<String>,
    pub trials: Option<usize>,
    /// Comma-separated architectures.
    pub arch: Option<String>,
    pub receiver: Option<String>,
    /// Comma-separated CSI modes.
    pub csi: Option<String>,
    pub full_scale: Option<bool>,
}

/// Parsed configuration; every field optional so layers can be merged.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub run: RunSection,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($f:ident),+) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )+
    };
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// `self` with every field set in `over` replaced.
    pub fn merged(mut self, over: &Settings) -> Self {
        overlay!(
            self.scenario,
            over.scenario,
            m,
            d_over_lambda,
            k,
            l,
            theta0_deg,
            spread_deg,
            snr_db,
            phi_mode,
            phi_deg,
            seed
        );
        overlay!(self.run, over.run, experiment, trials, arch, receiver, csi, full_scale);
        self
    }

    /// Builds the `ExperimentSpec` for `kind`, starting from the named (or given default)
    /// builtin experiment. All problems are collected before returning.
    pub fn to_spec(&self, kind: ExperimentKind, default_experiment: &str) -> Result<ExperimentSpec> {
        let mut errors = Vec::new();
        let name = self.run.experiment.as_deref().unwrap_or(default_experiment);
        let mut spec = match builtin(name) {
            Ok(s) => s,
            Err(e) => return Err(Error::InvalidConfig(vec![format!("experiment: {e}")])),
        };
        spec.kind = kind;
        let sc = &self.scenario;

        if let Some(m) = sc.m {
            if m < 1 {
                errors.push("M: antenna count must be at least 1".into());
            }
            spec.geometry.m = m;
            if matches!(spec.sweep, Sweep::M(_)) {
                spec.sweep = Sweep::M(vec![m]);
            }
        }
        if let Some(d) = sc.d_over_lambda {
            if !(d > 0.0 && d.is_finite()) {
                errors.push(format!("d_over_lambda: spacing must be positive, got {d}"));
            }
            spec.geometry.d_over_lambda = d;
            if matches!(spec.sweep, Sweep::DOverLambda(_)) {
                spec.sweep = Sweep::DOverLambda(vec![d]);
            }
        }
        if let Some(k) = sc.k {
            if k < 1 {
                errors.push("K: need at least one user".into());
            }
            spec.scenario.k = k;
            spec.scenario.beta = vec![1.0; k];
        }
        if let Some(l) = sc.l {
            if l < 1 {
                errors.push("L: need at least one path".into());
            }
            spec.scenario.l = l;
        }
        if let Some(t) = sc.theta0_deg {
            spec.scenario.theta0 = t.to_radians();
        }
        if let Some(s) = sc.spread_deg {
            if !(s > 0.0) {
                errors.push(format!("spread_deg: angular spread must be positive, got {s}"));
            }
            spec.scenario.spread = s.to_radians();
        }
        let (t0, sp) = (
            spec.scenario.theta0.to_degrees(),
            spec.scenario.spread.to_degrees(),
        );
        if sp > 0.0 && t0.abs() + sp / 2.0 > 90.0 + 1e-9 {
            errors.push(format!(
                "theta0_deg: sector {t0}° ± {}° leaves [-90°, 90°]",
                sp / 2.0
            ));
        }
        if let Some(s) = sc.snr_db {
            if !s.is_finite() {
                errors.push("snr_db: must be finite".into());
            }
            spec.scenario.p0 = db_to_linear(s) * spec.scenario.sigma_n2;
            if matches!(spec.sweep, Sweep::SnrDb(_)) {
                spec.sweep = Sweep::SnrDb(vec![s]);
            }
        }
        match (sc.phi_mode.as_deref(), sc.phi_deg) {
            (None | Some("auto"), None) => spec.scenario.phi = PhiSetting::Auto,
            (Some("optimal"), None) => spec.scenario.phi = PhiSetting::Optimal,
            (Some("manual"), Some(p)) => spec.scenario.phi = PhiSetting::Manual(p.to_radians()),
            (None, Some(p)) => spec.scenario.phi = PhiSetting::Manual(p.to_radians()),
            (Some("manual"), None) => errors.push("phi_mode: `manual` requires phi_deg".into()),
            (Some(m @ ("auto" | "optimal")), Some(_)) => errors.push(format!(
                "phi_deg: conflicts with phi_mode `{m}` (use phi_mode = manual)"
            )),
            (Some(other), _) => errors.push(format!(
                "phi_mode: expected one of auto, manual, optimal, got `{other}`"
            )),
        }
        if let Some(seed) = sc.seed {
            spec.seed = seed;
        }

        let run = &self.run;
        if run.full_scale == Some(true) {
            spec.trials = FULL_SCALE_TRIALS;
        }
        if let Some(t) = run.trials {
            if run.full_scale == Some(true) {
                errors.push("trials: conflicts with full_scale".into());
            }
            if t < 1 {
                errors.push("trials: must be at least 1".into());
            }
            spec.trials = t;
        }
        if let Some(a) = &run.arch {
            match parse_list::<Architecture>(a) {
                Ok(v) => spec.architectures = v,
                Err(e) => errors.push(format!("arch: {e}")),
            }
        }
        if let Some(r) = &run.receiver {
            match r.parse::<ReceiverKind>() {
                Ok(v) => spec.receiver = v,
                Err(e) => errors.push(format!("receiver: {e}")),
            }
        }
        if let Some(c) = &run.csi {
            match parse_list::<CsiMode>(c) {
                Ok(v) => spec.csi = v,
                Err(e) => errors.push(format!("csi: {e}")),
            }
        }

        if errors.is_empty() {
            for p in spec.problems() {
                if !errors.iter().any(|e| e.split(':').next() == p.split(':').next()) {
                    errors.push(p);
                }
            }
        }
        if errors.is_empty() {
            Ok(spec)
        } else {
            Err(Error::InvalidConfig(errors))
        }
    }
}

fn parse_list<T: std::str::FromStr<Err = String>>(text: &str) -> std::result::Result<Vec<T>, String> {
    let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err("empty list".into());
    }
    let mut out = Vec::with_capacity(items.len());
    for i in items {
        out.push(i.parse::<T>()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_merges() {
        let file = Settings::from_toml(
            "[scenario]\nM = 64\nsnr_db = 5.0\nphi_mode = \"optimal\"\n[run]\nexperiment = \"fig3\"\ntrials = 300\n",
        )
        .unwrap();
        let mut over = Settings::default();
        over.run.trials = Some(200);
        let spec = file.merged(&over).to_spec(ExperimentKind::Se, "fig1").unwrap();
        assert_eq!(spec.geometry.m, 64);
        assert_eq!(spec.trials, 200);
        assert_eq!(spec.sweep, Sweep::SnrDb(vec![5.0]));
        assert_eq!(spec.scenario.phi, PhiSetting::Optimal);
        assert_eq!(spec.name, "fig3");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            Settings::from_toml("[scenario]\nbogus = 1\n"),
            Err(Error::ConfigParse(_))
        ));
        assert!(Settings::from_toml("[extra]\n").is_err());
    }

    #[test]
    fn errors_are_collected_and_name_fields() {
        let mut s = Settings::default();
        s.scenario.d_over_lambda = Some(0.0);
        s.scenario.phi_mode = Some("auto".into());
        s.scenario.phi_deg = Some(10.0);
        s.run.arch = Some("twobit".into());
        let Err(Error::InvalidConfig(list)) = s.to_spec(ExperimentKind::Spectrum, "fig1") else {
            panic!("expected a configuration error");
        };
        let text = list.join("\n");
        assert!(text.contains("d_over_lambda"));
        assert!(text.contains("phi_deg"));
        assert!(text.contains("arch"));
    }

    #[test]
    fn manual_phase_in_degrees() {
        let mut s = Settings::default();
        s.scenario.phi_mode = Some("manual".into());
        s.scenario.phi_deg = Some(90.0);
        let spec = s.to_spec(ExperimentKind::PhiOpt, "fig1").unwrap();
        assert_eq!(spec.scenario.phi, PhiSetting::Manual(std::f64::consts::FRAC_PI_2));
        s.scenario.phi_deg = None;
        assert!(s.to_spec(ExperimentKind::PhiOpt, "fig1").is_err());
    }

    #[test]
    fn full_scale_sets_large_trial_count() {
        let mut s = Settings::default();
        s.run.full_scale = Some(true);
        assert_eq!(
            s.to_spec(ExperimentKind::Se, "fig3").unwrap().trials,
            FULL_SCALE_TRIALS
        );
    }
}
