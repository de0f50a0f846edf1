//! Run configuration parsing.
//!
//! The format is plain `key = value` lines with `#` comments and no
//! sections. Unknown keys, malformed lines and out-of-range values are
//! rejected with the offending key and line number. Command-line overrides
//! reuse the same key names and run through the same validation.

use crate::flux::FluxParams;
use crate::stepper::{ForcingKind, InitKind, RunConfig};
use crate::thermo::GasParams;
use std::fmt;

/// Parse or validation failure, carrying the key and source line when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(
                f,
                "config line {line}, key '{}': {}",
                self.key, self.message
            ),
            None => write!(f, "config key '{}': {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

/// Parse config text into a [`RunConfig`], starting from defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut config = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(Some(line_no), line, "expected 'key = value'"))?;
        set_key(&mut config, key.trim(), value.trim(), Some(line_no))?;
    }
    validate(&config)?;
    Ok(config)
}

/// Apply `key=value` overrides (e.g. from command-line flags) on top of an
/// existing configuration, then re-validate.
pub fn apply_overrides(
    config: &mut RunConfig,
    overrides: &[(String, String)],
) -> Result<(), ConfigError> {
    for (key, value) in overrides {
        set_key(config, key, value, None)?;
    }
    validate(config)
}

fn parse_f64(key: &str, value: &str, line: Option<usize>) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .map_err(|_| err(line, key, format!("not a number: '{value}'")))
}

fn parse_usize(key: &str, value: &str, line: Option<usize>) -> Result<usize, ConfigError> {
    value
        .parse::<usize>()
        .map_err(|_| err(line, key, format!("not a nonnegative integer: '{value}'")))
}

fn set_key(
    config: &mut RunConfig,
    key: &str,
    value: &str,
    line: Option<usize>,
) -> Result<(), ConfigError> {
    match key {
        "dim" => config.dim = parse_usize(key, value, line)?,
        "n" => config.n = parse_usize(key, value, line)?,
        "length" => config.length = parse_f64(key, value, line)?,
        "epsilon" => config.epsilon = parse_f64(key, value, line)?,
        "c_v" => config.gas.c_v = parse_f64(key, value, line)?,
        "mu" => config.gas.mu = parse_f64(key, value, line)?,
        "lambda" => config.gas.lambda = parse_f64(key, value, line)?,
        "kappa" => config.gas.kappa = parse_f64(key, value, line)?,
        "c_dt" => config.c_dt = parse_f64(key, value, line)?,
        "t_end" => config.t_end = parse_f64(key, value, line)?,
        "picard_tol" => config.solver.picard_tol = parse_f64(key, value, line)?,
        "max_picard" => config.solver.max_picard = parse_usize(key, value, line)?,
        "under_relaxation" => config.solver.omega = parse_f64(key, value, line)?,
        "linear_tol" => config.solver.linear_tol = parse_f64(key, value, line)?,
        "max_linear" => config.solver.max_linear = parse_usize(key, value, line)?,
        "init" => {
            config.init = match value {
                "smooth" => InitKind::Smooth,
                "mms" => InitKind::Mms,
                "constant" => InitKind::Constant {
                    rho: 1.0,
                    velocity: [0.0; 3],
                    theta: 1.0,
                },
                other => {
                    return Err(err(
                        line,
                        key,
                        format!("unknown initial data '{other}' (smooth | mms | constant)"),
                    ))
                }
            }
        }
        "init_rho" | "init_theta" | "init_ux" | "init_uy" | "init_uz" => {
            let v = parse_f64(key, value, line)?;
            let (mut rho, mut velocity, mut theta) = match config.init {
                InitKind::Constant {
                    rho,
                    velocity,
                    theta,
                } => (rho, velocity, theta),
                _ => (1.0, [0.0; 3], 1.0),
            };
            match key {
                "init_rho" => rho = v,
                "init_theta" => theta = v,
                "init_ux" => velocity[0] = v,
                "init_uy" => velocity[1] = v,
                _ => velocity[2] = v,
            }
            config.init = InitKind::Constant {
                rho,
                velocity,
                theta,
            };
        }
        "forcing" => {
            config.forcing = match value {
                "none" => ForcingKind::None,
                "mms" => ForcingKind::Mms,
                other => {
                    return Err(err(
                        line,
                        key,
                        format!("unknown forcing '{other}' (none | mms)"),
                    ))
                }
            }
        }
        "diagnostics_csv" => config.output.diagnostics_path = value.to_string(),
        "snapshot_every" => config.output.snapshot_every = parse_usize(key, value, line)?,
        "snapshot_prefix" => config.output.snapshot_prefix = value.to_string(),
        other => return Err(err(line, other, "unknown key")),
    }
    Ok(())
}

/// Range checks shared by file parsing and flag overrides.
pub fn validate(config: &RunConfig) -> Result<(), ConfigError> {
    if config.dim != 2 && config.dim != 3 {
        return Err(err(
            None,
            "dim",
            format!("must be 2 or 3, got {}", config.dim),
        ));
    }
    if config.n < 2 {
        return Err(err(
            None,
            "n",
            format!("need at least 2 cells, got {}", config.n),
        ));
    }
    if !(config.length > 0.0) {
        return Err(err(None, "length", "must be positive"));
    }
    FluxParams::new(config.epsilon, 1.0)
        .map_err(|_| err(None, "epsilon", "epsilon must lie in (0,1)"))?;
    GasParams::new(
        config.gas.c_v,
        config.gas.mu,
        config.gas.lambda,
        config.gas.kappa,
    )
    .map_err(|e| {
        let key = if !(config.gas.c_v > 0.0) {
            "c_v"
        } else if !(config.gas.mu > 0.0) {
            "mu"
        } else if !(config.gas.lambda >= 0.0) {
            "lambda"
        } else {
            "kappa"
        };
        err(None, key, e.to_string())
    })?;
    if !(config.c_dt > 0.0) {
        return Err(err(None, "c_dt", "must be positive"));
    }
    if config.t_end < 0.0 {
        return Err(err(None, "t_end", "must be nonnegative"));
    }
    if !(config.solver.picard_tol > 0.0) {
        return Err(err(None, "picard_tol", "must be positive"));
    }
    if !(config.solver.linear_tol > 0.0) {
        return Err(err(None, "linear_tol", "must be positive"));
    }
    if config.solver.max_picard == 0 {
        return Err(err(None, "max_picard", "must be at least 1"));
    }
    if !(config.solver.omega > 0.0 && config.solver.omega <= 1.0) {
        return Err(err(None, "under_relaxation", "must lie in (0,1]"));
    }
    if config.forcing == ForcingKind::Mms && config.dim != 2 {
        return Err(err(None, "forcing", "mms forcing requires dim = 2"));
    }
    if config.init == InitKind::Mms && config.dim != 2 {
        return Err(err(None, "init", "mms initial data requires dim = 2"));
    }
    Ok(())
}

/// Human-readable echo of the resolved configuration.
pub fn summarize(config: &RunConfig) -> String {
    let init = match config.init {
        InitKind::Smooth => "smooth".to_string(),
        InitKind::Mms => "mms".to_string(),
        InitKind::Constant {
            rho,
            velocity,
            theta,
        } => format!(
            "constant (rho={rho}, u=({},{},{}), theta={theta})",
            velocity[0], velocity[1], velocity[2]
        ),
    };
    format!(
        "dim={} n={} length={} epsilon={} c_v={} mu={} lambda={} kappa={}\n\
         c_dt={} t_end={} picard_tol={:e} max_picard={} under_relaxation={} linear_tol={:e}\n\
         init={} forcing={}",
        config.dim,
        config.n,
        config.length,
        config.epsilon,
        config.gas.c_v,
        config.gas.mu,
        config.gas.lambda,
        config.gas.kappa,
        config.c_dt,
        config.t_end,
        config.solver.picard_tol,
        config.solver.max_picard,
        config.solver.omega,
        config.solver.linear_tol,
        init,
        match config.forcing {
            ForcingKind::None => "none",
            ForcingKind::Mms => "mms",
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_yields_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.dim, 2);
        assert_eq!(c.n, 32);
        assert_eq!(c.epsilon, 0.6);
        assert_eq!(c.gas.c_v, 1.5);
        assert_eq!(c.gas.mu, 0.01);
        assert_eq!(c.gas.lambda, 0.0);
        assert_eq!(c.gas.kappa, 0.01);
        assert_eq!(c.c_dt, 0.1);
        assert_eq!(c.t_end, 0.1);
        assert_eq!(c.solver.picard_tol, 1e-10);
        assert_eq!(c.solver.max_picard, 200);
        assert_eq!(c.solver.omega, 1.0);
        assert_eq!(c.solver.linear_tol, 1e-12);
    }

    #[test]
    fn comments_and_values_parse() {
        let text = "\n# a comment\nn = 16   # trailing comment\nepsilon = 0.4\ninit = mms\nforcing = mms\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.n, 16);
        assert_eq!(c.epsilon, 0.4);
        assert_eq!(c.init, InitKind::Mms);
        assert_eq!(c.forcing, ForcingKind::Mms);
    }

    #[test]
    fn out_of_range_epsilon_is_rejected_with_key() {
        let e = parse_config("epsilon = 1.0").unwrap_err();
        assert_eq!(e.key, "epsilon");
        assert!(e.message.contains("(0,1)"), "message: {}", e.message);
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let e = parse_config("lambda = -0.1").unwrap_err();
        assert_eq!(e.key, "lambda");
    }

    #[test]
    fn unknown_keys_and_syntax_report_line_numbers() {
        let e = parse_config("n = 8\nwibble = 3\n").unwrap_err();
        assert_eq!(e.key, "wibble");
        assert_eq!(e.line, Some(2));
        let e = parse_config("n 8").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = parse_config("n = eight").unwrap_err();
        assert_eq!(e.key, "n");
    }

    #[test]
    fn overrides_rerun_validation() {
        let mut c = parse_config("n = 8").unwrap();
        apply_overrides(&mut c, &[("t_end".to_string(), "0.5".to_string())]).unwrap();
        assert_eq!(c.t_end, 0.5);
        let e = apply_overrides(
            &mut c,
            &[("under_relaxation".to_string(), "1.5".to_string())],
        )
        .unwrap_err();
        assert_eq!(e.key, "under_relaxation");
    }

    #[test]
    fn constant_init_accumulates_components() {
        let c = parse_config("init = constant\ninit_rho = 1.2\ninit_ux = 0.3\ninit_theta = 0.8\n")
            .unwrap();
        assert_eq!(
            c.init,
            InitKind::Constant {
                rho: 1.2,
                velocity: [0.3, 0.0, 0.0],
                theta: 0.8
            }
        );
    }

    #[test]
    fn mms_in_three_dimensions_is_rejected() {
        let e = parse_config("dim = 3\nforcing = mms\nn = 4").unwrap_err();
        assert_eq!(e.key, "forcing");
    }
}
