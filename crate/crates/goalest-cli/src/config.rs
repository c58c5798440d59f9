//! Study configuration: defaults, an optional key=value config file, and
//! command-line flags, in increasing priority.

use std::collections::HashMap;
use std::path::PathBuf;

use goalest::localize::EstimatorChoice;
use goalest::problem::QoI;
use serde::Serialize;

use crate::CommonArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProblemKind {
    Manufactured,
    Singular,
}

impl ProblemKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "manufactured" => Some(ProblemKind::Manufactured),
            "singular" => Some(ProblemKind::Singular),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ProblemKind::Manufactured => "manufactured",
            ProblemKind::Singular => "singular",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Uniform,
    Adapt,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Some(Mode::Uniform),
            "adapt" => Some(Mode::Adapt),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Uniform => "uniform",
            Mode::Adapt => "adapt",
        }
    }
}

/// Fully resolved configuration of one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct StudyConfig {
    pub problem: ProblemKind,
    #[serde(serialize_with = "serialize_qoi")]
    pub qoi: QoI,
    pub alpha: f64,
    pub cycles: usize,
    #[serde(serialize_with = "serialize_estimator")]
    pub estimator: EstimatorChoice,
    pub mode: Mode,
    pub target_factor: f64,
    pub out: PathBuf,
    #[serde(skip)]
    pub verbose: bool,
    /// Whether alpha/qoi were given explicitly (fixes the sweep commands to
    /// a single row).
    #[serde(skip)]
    pub alpha_explicit: bool,
    #[serde(skip)]
    pub qoi_explicit: bool,
}

fn serialize_qoi<S: serde::Serializer>(qoi: &QoI, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(qoi.label())
}

fn serialize_estimator<S: serde::Serializer>(
    choice: &EstimatorChoice,
    s: S,
) -> Result<S::Ok, S::Error> {
    s.serialize_str(match choice {
        EstimatorChoice::Eta1 => "eta1",
        EstimatorChoice::Eta2 => "eta2",
    })
}

impl StudyConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, Box<dyn std::error::Error>> {
        let file: HashMap<String, String> = match &args.config {
            Some(path) => parse_key_values(&std::fs::read_to_string(path)?)?,
            None => HashMap::new(),
        };
        let pick = |flag: &Option<String>, key: &str| -> Option<String> {
            flag.clone().or_else(|| file.get(key).cloned())
        };

        let problem = match pick(&args.problem, "problem") {
            Some(s) => ProblemKind::parse(&s).ok_or(format!("unknown problem '{s}'"))?,
            None => ProblemKind::Manufactured,
        };

        let qoi_raw = pick(&args.qoi, "qoi");
        let qoi_explicit = qoi_raw.is_some();
        let qoi = match qoi_raw {
            Some(s) => QoI::parse(&s).ok_or(format!("unknown qoi '{s}'"))?,
            None => QoI::J1,
        };

        let alpha_raw = args
            .alpha
            .map(|a| a.to_string())
            .or_else(|| file.get("alpha").cloned());
        let alpha_explicit = alpha_raw.is_some();
        let alpha = match alpha_raw {
            Some(s) => s.parse::<f64>().map_err(|_| format!("bad alpha '{s}'"))?,
            None => 1e-2,
        };
        if alpha < 0.0 {
            return Err("alpha must be non-negative".into());
        }

        let cycles = match args
            .cycles
            .map(|c| c.to_string())
            .or_else(|| file.get("cycles").cloned())
        {
            Some(s) => s
                .parse::<usize>()
                .map_err(|_| format!("bad cycles '{s}'"))?,
            None => 5,
        };
        if cycles < 1 {
            return Err("cycles must be at least 1".into());
        }

        let estimator = match pick(&args.estimator, "estimator") {
            Some(s) => EstimatorChoice::parse(&s).ok_or(format!("unknown estimator '{s}'"))?,
            None => EstimatorChoice::Eta2,
        };

        let mode = match pick(&args.mode, "mode") {
            Some(s) => Mode::parse(&s).ok_or(format!("unknown mode '{s}'"))?,
            None => Mode::Uniform,
        };

        let target_factor = match args
            .target_factor
            .map(|f| f.to_string())
            .or_else(|| file.get("target-factor").cloned())
        {
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| format!("bad target-factor '{s}'"))?,
            None => 2.0,
        };
        if !target_factor.is_finite() || target_factor <= 0.0 {
            return Err("target-factor must be positive".into());
        }

        let out = args
            .out
            .clone()
            .or_else(|| file.get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("goalest-out"));

        Ok(StudyConfig {
            problem,
            qoi,
            alpha,
            cycles,
            estimator,
            mode,
            target_factor,
            out,
            verbose: args.verbose,
            alpha_explicit,
            qoi_explicit,
        })
    }
}

fn parse_key_values(text: &str) -> Result<HashMap<String, String>, Box<dyn std::error::Error>> {
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(format!("config line {} is not key=value", lineno + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_parsing_skips_comments_and_blanks() {
        let text = "# study\nproblem = singular\n\nqoi=j3\ntarget-factor = 2.5\n";
        let map = parse_key_values(text).unwrap();
        assert_eq!(map["problem"], "singular");
        assert_eq!(map["qoi"], "j3");
        assert_eq!(map["target-factor"], "2.5");
    }

    #[test]
    fn flags_override_config_file() {
        let dir = std::env::temp_dir().join("goalest_config_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("study.cfg");
        std::fs::write(&path, "problem=singular\nqoi=j2\ncycles=3\n").unwrap();
        let args = CommonArgs {
            config: Some(path),
            qoi: Some("j4".into()),
            ..Default::default()
        };
        let config = StudyConfig::resolve(&args).unwrap();
        assert_eq!(config.problem, ProblemKind::Singular);
        assert_eq!(config.qoi, QoI::J4);
        assert_eq!(config.cycles, 3);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_bad_values() {
        let args = CommonArgs {
            qoi: Some("j9".into()),
            ..Default::default()
        };
        assert!(StudyConfig::resolve(&args).is_err());
        let args = CommonArgs {
            cycles: Some(0),
            ..Default::default()
        };
        assert!(StudyConfig::resolve(&args).is_err());
    }
}
