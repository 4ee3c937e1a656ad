//! Run configuration: flat `key = value` text with `[section]` headers.
//!
//! Only the problem name is required; everything else defaults to the
//! problem's bundled values. Unknown keys are rejected with their line
//! number, and `serialize` emits the canonical form (every key in section
//! order), so parse(serialize(c)) round-trips.

use morphosim_core::models::{ProblemKind, SchemeKind};
use morphosim_core::stepper::PredictorMode;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: missing required key 'problem'")]
    MissingProblem { path: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub scheme: Option<SchemeKind>,
    pub n_boundary: Option<usize>,
    pub target_h: Option<f64>,
    pub outer_radius: Option<f64>,
    pub grading: Option<f64>,
    pub out_dir: PathBuf,
    pub snapshot_every: usize,
    pub conservation_check: bool,
    pub curve_tau: Option<f64>,
    pub mmpde_tau_hat: Option<f64>,
    pub picard_tol: Option<f64>,
    pub picard_max_iters: Option<usize>,
    pub mesh_jiggle: Option<f64>,
    pub predictor: PredictorMode,
    pub sigma_l: Option<f64>,
    pub trigger_distance: Option<f64>,
}

impl RunConfig {
    pub fn new(problem: ProblemKind) -> Self {
        Self {
            problem,
            dt: None,
            t_end: None,
            scheme: None,
            n_boundary: None,
            target_h: None,
            outer_radius: None,
            grading: None,
            out_dir: PathBuf::from("out"),
            snapshot_every: 200,
            conservation_check: true,
            curve_tau: None,
            mmpde_tau_hat: None,
            picard_tol: None,
            picard_max_iters: None,
            mesh_jiggle: None,
            predictor: PredictorMode::Normal,
            sigma_l: None,
            trigger_distance: None,
        }
    }

    /// Canonical text form; `parse_config` of this reproduces the config.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let push = |out: &mut String, k: &str, v: String| {
            out.push_str(&format!("{k} = {v}\n"));
        };
        push(&mut out, "problem", self.problem.name().to_string());
        out.push_str("\n[time]\n");
        if let Some(v) = self.dt {
            push(&mut out, "dt", format!("{v:e}"));
        }
        if let Some(v) = self.t_end {
            push(&mut out, "t_end", format!("{v:e}"));
        }
        if let Some(s) = self.scheme {
            let name = match s {
                SchemeKind::CrankNicolson => "crank_nicolson",
                SchemeKind::ImexEuler => "imex_euler",
            };
            push(&mut out, "scheme", name.to_string());
        }
        out.push_str("\n[mesh]\n");
        if let Some(v) = self.n_boundary {
            push(&mut out, "n_boundary", v.to_string());
        }
        if let Some(v) = self.target_h {
            push(&mut out, "target_h", format!("{v:e}"));
        }
        if let Some(v) = self.outer_radius {
            push(&mut out, "outer_radius", format!("{v:e}"));
        }
        if let Some(v) = self.grading {
            push(&mut out, "grading", format!("{v:e}"));
        }
        out.push_str("\n[output]\n");
        push(&mut out, "directory", self.out_dir.display().to_string());
        push(&mut out, "snapshot_every", self.snapshot_every.to_string());
        out.push_str("\n[stepper]\n");
        push(
            &mut out,
            "conservation_check",
            if self.conservation_check { "on" } else { "off" }.to_string(),
        );
        if let Some(v) = self.curve_tau {
            push(&mut out, "curve_tau", format!("{v:e}"));
        }
        if let Some(v) = self.mmpde_tau_hat {
            push(&mut out, "mmpde_tau_hat", format!("{v:e}"));
        }
        if let Some(v) = self.picard_tol {
            push(&mut out, "picard_tol", format!("{v:e}"));
        }
        if let Some(v) = self.picard_max_iters {
            push(&mut out, "picard_max_iters", v.to_string());
        }
        if let Some(v) = self.mesh_jiggle {
            push(&mut out, "mesh_jiggle", format!("{v:e}"));
        }
        if self.predictor == PredictorMode::UsePreviousSurface {
            push(&mut out, "predictor", "previous".to_string());
        }
        out.push_str("\n[chemotaxis]\n");
        if let Some(v) = self.sigma_l {
            push(&mut out, "sigma_l", format!("{v:e}"));
        }
        if let Some(v) = self.trigger_distance {
            push(&mut out, "trigger_distance", format!("{v:e}"));
        }
        out
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text, &path.display().to_string())
}

pub fn parse_config_str(text: &str, path: &str) -> Result<RunConfig, ConfigError> {
    let err = |line: usize, message: String| ConfigError::Parse {
        path: path.to_string(),
        line: line + 1,
        message,
    };
    let mut problem: Option<ProblemKind> = None;
    let mut pairs: Vec<(usize, String, String, String)> = Vec::new(); // (line, section, key, value)
    let mut section = String::new();
    for (lno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(err(lno, format!("malformed section header '{line}'")));
            }
            section = line[1..line.len() - 1].trim().to_string();
            let known = ["time", "mesh", "output", "stepper", "chemotaxis"];
            if !known.contains(&section.as_str()) {
                return Err(err(lno, format!("unknown section '[{section}]'")));
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(lno, format!("expected 'key = value', got '{line}'")));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if section.is_empty() && key == "problem" {
            problem = Some(ProblemKind::from_name(&value).ok_or_else(|| {
                err(
                    lno,
                    format!(
                        "unknown problem '{value}' (expected one of moving_diffusion, \
                         moving_advection_diffusion, strychalski, wave_pinning, chemotaxis)"
                    ),
                )
            })?);
            continue;
        }
        pairs.push((lno, section.clone(), key, value));
    }
    let problem = problem.ok_or_else(|| ConfigError::MissingProblem {
        path: path.to_string(),
    })?;
    let mut cfg = RunConfig::new(problem);

    let parse_f64 = |lno: usize, key: &str, v: &str| -> Result<f64, ConfigError> {
        v.parse::<f64>()
            .map_err(|_| err(lno, format!("key '{key}': expected a number, got '{v}'")))
    };
    let parse_pos = |lno: usize, key: &str, v: &str| -> Result<f64, ConfigError> {
        let x = parse_f64(lno, key, v)?;
        if !(x > 0.0) {
            return Err(err(lno, format!("key '{key}' must be positive, got {x}")));
        }
        Ok(x)
    };
    let parse_usize = |lno: usize, key: &str, v: &str| -> Result<usize, ConfigError> {
        v.parse::<usize>()
            .map_err(|_| err(lno, format!("key '{key}': expected a count, got '{v}'")))
    };

    for (lno, section, key, value) in pairs {
        match (section.as_str(), key.as_str()) {
            ("time", "dt") => cfg.dt = Some(parse_pos(lno, "dt", &value)?),
            ("time", "t_end") => cfg.t_end = Some(parse_pos(lno, "t_end", &value)?),
            ("time", "scheme") => {
                cfg.scheme = Some(match value.as_str() {
                    "crank_nicolson" => SchemeKind::CrankNicolson,
                    "imex_euler" => SchemeKind::ImexEuler,
                    other => {
                        return Err(err(
                            lno,
                            format!("key 'scheme': expected crank_nicolson or imex_euler, got '{other}'"),
                        ))
                    }
                })
            }
            ("mesh", "n_boundary") => {
                let v = parse_usize(lno, "n_boundary", &value)?;
                if v < 8 {
                    return Err(err(lno, format!("key 'n_boundary' must be >= 8, got {v}")));
                }
                cfg.n_boundary = Some(v);
            }
            ("mesh", "target_h") => cfg.target_h = Some(parse_pos(lno, "target_h", &value)?),
            ("mesh", "outer_radius") => {
                cfg.outer_radius = Some(parse_pos(lno, "outer_radius", &value)?)
            }
            ("mesh", "grading") => {
                let v = parse_pos(lno, "grading", &value)?;
                if v < 1.0 {
                    return Err(err(lno, format!("key 'grading' must be >= 1, got {v}")));
                }
                cfg.grading = Some(v);
            }
            ("output", "directory") => cfg.out_dir = PathBuf::from(value),
            ("output", "snapshot_every") => {
                let v = parse_usize(lno, "snapshot_every", &value)?;
                if v == 0 {
                    return Err(err(lno, "key 'snapshot_every' must be >= 1, got 0".into()));
                }
                cfg.snapshot_every = v;
            }
            ("stepper", "conservation_check") => {
                cfg.conservation_check = match value.as_str() {
                    "on" | "true" => true,
                    "off" | "false" => false,
                    other => {
                        return Err(err(
                            lno,
                            format!("key 'conservation_check': expected on/off, got '{other}'"),
                        ))
                    }
                }
            }
            ("stepper", "curve_tau") => cfg.curve_tau = Some(parse_pos(lno, "curve_tau", &value)?),
            ("stepper", "mmpde_tau_hat") => {
                cfg.mmpde_tau_hat = Some(parse_pos(lno, "mmpde_tau_hat", &value)?)
            }
            ("stepper", "picard_tol") => {
                cfg.picard_tol = Some(parse_pos(lno, "picard_tol", &value)?)
            }
            ("stepper", "picard_max_iters") => {
                cfg.picard_max_iters = Some(parse_usize(lno, "picard_max_iters", &value)?)
            }
            ("stepper", "mesh_jiggle") => {
                cfg.mesh_jiggle = Some(parse_pos(lno, "mesh_jiggle", &value)?)
            }
            ("stepper", "predictor") => {
                cfg.predictor = match value.as_str() {
                    "normal" => PredictorMode::Normal,
                    "previous" => PredictorMode::UsePreviousSurface,
                    other => {
                        return Err(err(
                            lno,
                            format!("key 'predictor': expected normal or previous, got '{other}'"),
                        ))
                    }
                }
            }
            ("chemotaxis", "sigma_l") => cfg.sigma_l = Some(parse_pos(lno, "sigma_l", &value)?),
            ("chemotaxis", "trigger_distance") => {
                cfg.trigger_distance = Some(parse_pos(lno, "trigger_distance", &value)?)
            }
            (sec, k) => {
                return Err(err(
                    lno,
                    if sec.is_empty() {
                        format!("unknown key '{k}'")
                    } else {
                        format!("unknown key '{k}' in section [{sec}]")
                    },
                ))
            }
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_applies_defaults() {
        let cfg = parse_config_str("problem = wave_pinning\n", "test").unwrap();
        assert_eq!(cfg.problem, ProblemKind::WavePinning);
        assert!(cfg.dt.is_none());
        assert_eq!(cfg.snapshot_every, 200);
        assert!(cfg.conservation_check);
    }

    #[test]
    fn negative_dt_names_the_key() {
        let e = parse_config_str("problem = wave_pinning\n[time]\ndt = -1\n", "test")
            .unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("dt"), "{msg}");
        assert!(msg.contains("positive"), "{msg}");
        assert!(msg.contains(":3:"), "{msg}");
    }

    #[test]
    fn unknown_key_rejected_with_location() {
        let e = parse_config_str("problem = chemotaxis\n[mesh]\nwibble = 3\n", "test")
            .unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("wibble") && msg.contains(":3:"), "{msg}");
    }

    #[test]
    fn serialize_parse_round_trip() {
        let text = "problem = strychalski\n[time]\ndt = 2.5e-3\nscheme = imex_euler\n\
                    [output]\nsnapshot_every = 40\n[stepper]\nmesh_jiggle = 0.05\n";
        let cfg = parse_config_str(text, "test").unwrap();
        let canon = cfg.serialize();
        let cfg2 = parse_config_str(&canon, "canon").unwrap();
        let canon2 = cfg2.serialize();
        assert_eq!(canon, canon2);
        assert_eq!(cfg2.dt, Some(2.5e-3));
        assert_eq!(cfg2.scheme, Some(SchemeKind::ImexEuler));
        assert_eq!(cfg2.snapshot_every, 40);
        assert_eq!(cfg2.mesh_jiggle, Some(0.05));
    }
}
