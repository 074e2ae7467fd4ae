//! Experiment configuration: `key = value` files with `#` comments, CLI
//! overlay (flags win), validation, and builtin signal generators.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flux::FluxKind;
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Explicit,
    Fsi,
    Implicit,
    Multigrid,
}

impl Scheme {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "explicit" => Ok(Scheme::Explicit),
            "fsi" => Ok(Scheme::Fsi),
            "implicit" => Ok(Scheme::Implicit),
            "multigrid" => Ok(Scheme::Multigrid),
            other => Err(Error::Config(format!(
                "unknown scheme {other:?} (expected explicit, fsi, implicit, or multigrid)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Explicit => "explicit",
            Scheme::Fsi => "fsi",
            Scheme::Implicit => "implicit",
            Scheme::Multigrid => "multigrid",
        }
    }
}

/// Time step: a number, or `auto` to use the stability bound at run start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSpec {
    Auto,
    Fixed(f64),
}

impl TauSpec {
    pub fn parse(text: &str) -> Result<Self> {
        if text == "auto" {
            return Ok(TauSpec::Auto);
        }
        let value: f64 = text
            .parse()
            .map_err(|_| Error::Config(format!("tau must be a number or \"auto\", got {text:?}")))?;
        Ok(TauSpec::Fixed(value))
    }
}

/// Parse `"m:alpha[,m:alpha...]"` into derivative weights.
pub fn parse_weights(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut weights = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        let (m, alpha) = item
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("weight {item:?} is not of the form m:alpha")))?;
        let m: usize = m
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("derivative order {m:?} is not an integer")))?;
        let alpha: f64 = alpha
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("weight {alpha:?} is not a number")))?;
        weights.push((m, alpha));
    }
    if weights.is_empty() {
        return Err(Error::Config("weights must name at least one m:alpha pair".into()));
    }
    Ok(weights)
}

/// A partially specified configuration; file values are overridden by
/// flag values field by field.
#[derive(Debug, Clone, Default)]
pub struct ConfigDraft {
    pub scheme: Option<Scheme>,
    pub flux: Option<FluxKind>,
    pub lambda: Option<f64>,
    pub weights: Option<Vec<(usize, f64)>>,
    pub h: Option<f64>,
    pub tau: Option<TauSpec>,
    pub steps: Option<usize>,
    pub cycle_length: Option<usize>,
    pub inner_iters: Option<usize>,
    pub tol: Option<f64>,
    pub levels: Option<usize>,
    pub pre_smooth: Option<usize>,
    pub post_smooth: Option<usize>,
    pub omega: Option<f64>,
    pub cycles: Option<usize>,
    pub input: Option<PathBuf>,
    pub generator: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $over:expr, $($field:ident),+) => {
        $(if $over.$field.is_some() { $base.$field = $over.$field; })+
    };
}

impl ConfigDraft {
    /// Fieldwise merge; values in `flags` win.
    pub fn merge(mut self, flags: ConfigDraft) -> ConfigDraft {
        overlay!(
            self, flags, scheme, flux, lambda, weights, h, tau, steps, cycle_length, inner_iters,
            tol, levels, pre_smooth, post_smooth, omega, cycles, input, generator, n, seed, output,
            trajectory
        );
        self
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let bad_num = |what: &str| Error::Parse {
            line,
            message: format!("{what} is not a valid number: {value:?}"),
        };
        match key {
            "scheme" => self.scheme = Some(Scheme::parse(value)?),
            "flux" => self.flux = Some(FluxKind::parse(value)?),
            "lambda" => self.lambda = Some(value.parse().map_err(|_| bad_num("lambda"))?),
            "weights" => self.weights = Some(parse_weights(value)?),
            "h" => self.h = Some(value.parse().map_err(|_| bad_num("h"))?),
            "tau" => self.tau = Some(TauSpec::parse(value)?),
            "steps" => self.steps = Some(value.parse().map_err(|_| bad_num("steps"))?),
            "cycle_length" => {
                self.cycle_length = Some(value.parse().map_err(|_| bad_num("cycle_length"))?)
            }
            "inner_iters" => {
                self.inner_iters = Some(value.parse().map_err(|_| bad_num("inner_iters"))?)
            }
            "tol" => self.tol = Some(value.parse().map_err(|_| bad_num("tol"))?),
            "levels" => self.levels = Some(value.parse().map_err(|_| bad_num("levels"))?),
            "pre_smooth" => {
                self.pre_smooth = Some(value.parse().map_err(|_| bad_num("pre_smooth"))?)
            }
            "post_smooth" => {
                self.post_smooth = Some(value.parse().map_err(|_| bad_num("post_smooth"))?)
            }
            "omega" => self.omega = Some(value.parse().map_err(|_| bad_num("omega"))?),
            "cycles" => self.cycles = Some(value.parse().map_err(|_| bad_num("cycles"))?),
            "input" => self.input = Some(PathBuf::from(value)),
            "generator" => self.generator = Some(value.to_string()),
            "n" => self.n = Some(value.parse().map_err(|_| bad_num("n"))?),
            "seed" => self.seed = Some(value.parse().map_err(|_| bad_num("seed"))?),
            "output" => self.output = Some(PathBuf::from(value)),
            "trajectory" => self.trajectory = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key {other:?} (line {line})"))),
        }
        Ok(())
    }

    /// Apply defaults and cross-field validation.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let scheme = self.scheme.ok_or_else(|| Error::Config("scheme is required".into()))?;

        // Keys that make no sense for the chosen scheme are rejected when
        // explicitly set; defaults never conflict.
        let mut conflicts: Vec<&str> = Vec::new();
        let mut forbid = |set: bool, key: &'static str| {
            if set {
                conflicts.push(key);
            }
        };
        match scheme {
            Scheme::Explicit => {
                forbid(self.cycle_length.is_some(), "cycle_length");
                forbid(self.inner_iters.is_some(), "inner_iters");
                forbid(self.levels.is_some(), "levels");
                forbid(self.pre_smooth.is_some(), "pre_smooth");
                forbid(self.post_smooth.is_some(), "post_smooth");
                forbid(self.omega.is_some(), "omega");
                forbid(self.cycles.is_some(), "cycles");
                forbid(self.tol.is_some(), "tol");
            }
            Scheme::Fsi => {
                forbid(self.inner_iters.is_some(), "inner_iters");
                forbid(self.levels.is_some(), "levels");
                forbid(self.pre_smooth.is_some(), "pre_smooth");
                forbid(self.post_smooth.is_some(), "post_smooth");
                forbid(self.omega.is_some(), "omega");
                forbid(self.cycles.is_some(), "cycles");
                forbid(self.tol.is_some(), "tol");
            }
            Scheme::Implicit => {
                forbid(self.cycle_length.is_some(), "cycle_length");
                forbid(self.levels.is_some(), "levels");
                forbid(self.pre_smooth.is_some(), "pre_smooth");
                forbid(self.post_smooth.is_some(), "post_smooth");
                forbid(self.omega.is_some(), "omega");
                forbid(self.cycles.is_some(), "cycles");
            }
            Scheme::Multigrid => {
                forbid(self.steps.is_some(), "steps");
                forbid(self.cycle_length.is_some(), "cycle_length");
                forbid(self.inner_iters.is_some(), "inner_iters");
                forbid(self.flux.is_some(), "flux");
                forbid(self.lambda.is_some(), "lambda");
            }
        }
        if !conflicts.is_empty() {
            return Err(Error::Config(format!(
                "keys {conflicts:?} do not apply to scheme {}",
                scheme.name()
            )));
        }
        if self.input.is_some() && self.generator.is_some() {
            return Err(Error::Config("input and generator are mutually exclusive".into()));
        }

        let cycle_length = self.cycle_length.unwrap_or(4);
        if cycle_length < 1 {
            return Err(Error::Parameter("cycle_length must be at least 1".into()));
        }
        let inner_iters = self.inner_iters.unwrap_or(10);
        if inner_iters < 1 {
            return Err(Error::Parameter("inner_iters must be at least 1".into()));
        }

        let tau = match (scheme, self.tau) {
            // The stability bound needs a flux; the multigrid problem
            // family fixes tau directly.
            (Scheme::Multigrid, Some(TauSpec::Auto)) => {
                return Err(Error::Config("tau = auto is not defined for multigrid".into()))
            }
            (Scheme::Multigrid, None) => TauSpec::Fixed(10.0),
            (_, spec) => spec.unwrap_or(TauSpec::Auto),
        };
        if let TauSpec::Fixed(t) = tau {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::Parameter(format!("tau must be positive, got {t}")));
            }
        }

        Ok(ExperimentConfig {
            scheme,
            flux: self.flux.unwrap_or(FluxKind::Linear),
            lambda: self.lambda.unwrap_or(1.0),
            weights: self.weights.unwrap_or_else(|| vec![(1, 1.0)]),
            h: self.h.unwrap_or(1.0),
            tau,
            steps: self.steps.unwrap_or(100),
            cycle_length,
            inner_iters,
            tol: self.tol.unwrap_or(1e-12),
            levels: self.levels.unwrap_or(2),
            pre_smooth: self.pre_smooth.unwrap_or(2),
            post_smooth: self.post_smooth.unwrap_or(2),
            omega: self.omega.unwrap_or(2.0 / 3.0),
            cycles: self.cycles.unwrap_or(10),
            input: self.input,
            generator: self.generator.unwrap_or_else(|| "step".to_string()),
            n: self.n.unwrap_or(129),
            seed: self.seed.unwrap_or(42),
            output: self.output,
            trajectory: self.trajectory,
        })
    }
}

/// A fully resolved experiment configuration. Identical configs with
/// identical inputs produce bit-identical outputs.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub flux: FluxKind,
    pub lambda: f64,
    pub weights: Vec<(usize, f64)>,
    pub h: f64,
    pub tau: TauSpec,
    pub steps: usize,
    pub cycle_length: usize,
    pub inner_iters: usize,
    pub tol: f64,
    pub levels: usize,
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub omega: f64,
    pub cycles: usize,
    pub input: Option<PathBuf>,
    pub generator: String,
    pub n: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
}

/// Parse a `key = value` config text; `#` lines are comments.
pub fn parse_config_str(text: &str) -> Result<ConfigDraft> {
    let mut draft = ConfigDraft::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: format!("expected key = value, found {line:?}"),
        })?;
        draft.set(key.trim(), value.trim(), idx + 1)?;
    }
    Ok(draft)
}

pub fn parse_config_file(path: &Path) -> Result<ConfigDraft> {
    parse_config_str(&fs::read_to_string(path)?)
}

/// Deterministic builtin test signals.
///
/// * `step`: 0 on the left half, 1 from the midpoint on.
/// * `ramp`: linear from 0 to 1.
/// * `sine`: one full period over the grid.
/// * `random`: seeded uniform samples in [0, 1).
pub fn builtin_signal(name: &str, n: usize, seed: u64, h: f64) -> Result<Signal> {
    if n < 2 {
        return Err(Error::Size(format!("builtin signals need n ≥ 2, got {n}")));
    }
    let values: Vec<f64> = match name {
        "step" => (0..n).map(|i| if i < n / 2 { 0.0 } else { 1.0 }).collect(),
        "ramp" => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
        "sine" => (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).sin())
            .collect(),
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random::<f64>()).collect()
        }
        other => {
            return Err(Error::Parameter(format!(
                "unknown generator {other:?} (expected step, ramp, sine, or random)"
            )))
        }
    };
    Signal::new(values, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_plain_config() {
        let draft = parse_config_str(
            "# demo\nscheme = explicit\nflux = pm_exp\nlambda = 1.0\ntau = auto\nsteps = 100\n",
        )
        .unwrap();
        let cfg = draft.resolve().unwrap();
        assert_eq!(cfg.scheme, Scheme::Explicit);
        assert_eq!(cfg.flux, FluxKind::PeronaMalikExp);
        assert_eq!(cfg.steps, 100);
        assert_eq!(cfg.tau, TauSpec::Auto);
    }

    #[test]
    fn zero_cycle_length_is_a_parameter_error() {
        let draft = parse_config_str("scheme = fsi\ncycle_length = 0\n").unwrap();
        assert!(matches!(draft.resolve(), Err(Error::Parameter(_))));
    }

    #[test]
    fn empty_file_plus_flags_is_valid() {
        let file = parse_config_str("").unwrap();
        let flags = ConfigDraft { scheme: Some(Scheme::Explicit), ..Default::default() };
        let cfg = file.merge(flags).resolve().unwrap();
        assert_eq!(cfg.scheme, Scheme::Explicit);
    }

    #[test]
    fn unknown_keys_are_named() {
        match parse_config_str("schme = explicit\n") {
            Err(Error::Config(msg)) => assert!(msg.contains("schme"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn scheme_conflicts_are_rejected() {
        let draft = parse_config_str("scheme = explicit\ncycle_length = 4\n").unwrap();
        match draft.resolve() {
            Err(Error::Config(msg)) => assert!(msg.contains("cycle_length"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn flags_override_file_values() {
        let file = parse_config_str("scheme = explicit\nsteps = 10\n").unwrap();
        let flags = ConfigDraft { steps: Some(25), ..Default::default() };
        assert_eq!(file.merge(flags).resolve().unwrap().steps, 25);
    }

    #[test]
    fn builtin_generator_examples() {
        assert_eq!(builtin_signal("step", 4, 0, 1.0).unwrap().values(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(builtin_signal("ramp", 3, 0, 1.0).unwrap().values(), &[0.0, 0.5, 1.0]);
        let a = builtin_signal("random", 16, 7, 1.0).unwrap();
        let b = builtin_signal("random", 16, 7, 1.0).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a.values().iter().all(|&v| (0.0..1.0).contains(&v)));
        assert!(builtin_signal("spike", 8, 0, 1.0).is_err());
    }

    #[test]
    fn weights_syntax() {
        assert_eq!(parse_weights("1:1.0").unwrap(), vec![(1, 1.0)]);
        assert_eq!(parse_weights("0:0.5, 2:-1").unwrap(), vec![(0, 0.5), (2, -1.0)]);
        assert!(parse_weights("1;1").is_err());
    }
}
