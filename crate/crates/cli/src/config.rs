//! Parser for the `key = value` experiment files.
//!
//! ```text
//! [chain]
//! distances_um = 15, 15     # one entry per hop
//! drift = 7e-6              # m/s, one value or one per hop
//! slot = 2.5                # s
//! molecules = 60            # one value or one per transmitter
//! relay1_pd = 0.99
//! relay1_pfa = 0.01
//!
//! [sweep]
//! variable = drift
//! min = 5e-6
//! max = 1.5e-5
//! step = 2e-6
//!
//! [output]
//! path = drift.csv
//! ```

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use molrelay_core::{ChainConfig, DiffusionLink, MsiParams, Rates, RelayMode};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            key: key.map(str::to_owned),
            message: message.into(),
        }
    }

    pub fn field(key: &str, message: impl Into<String>) -> Self {
        Self {
            line: None,
            key: Some(key.to_owned()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if let Some(line) = self.line {
            write!(f, " at line {line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, " in `{key}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

const CHAIN_KEYS: &[&str] = &[
    "distances_um",
    "drift",
    "diffusion",
    "degradation",
    "slot",
    "molecules",
    "prior",
    "msi_mean",
    "msi_var",
    "slots",
    "relay1_pd",
    "relay1_pfa",
];
const SWEEP_KEYS: &[&str] = &["variable", "min", "max", "step", "frames", "budget", "seed"];
const OUTPUT_KEYS: &[&str] = &["path"];

/// Raw `key = value` entries grouped by section, with their line numbers.
#[derive(Debug, Default)]
struct Sections {
    entries: HashMap<(String, String), (usize, String)>,
}

impl Sections {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = Sections::default();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| {
                        ConfigError::at(line_no, None, format!("malformed section header `{line}`"))
                    })?
                    .trim();
                if !matches!(name, "chain" | "sweep" | "output") {
                    return Err(ConfigError::at(
                        line_no,
                        None,
                        format!("unknown section `[{name}]`"),
                    ));
                }
                section = Some(name.to_owned());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::at(
                    line_no,
                    None,
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.clone().ok_or_else(|| {
                ConfigError::at(line_no, Some(key), "key appears before any section header")
            })?;
            let allowed = match sec.as_str() {
                "chain" => CHAIN_KEYS,
                "sweep" => SWEEP_KEYS,
                _ => OUTPUT_KEYS,
            };
            if !allowed.contains(&key) {
                return Err(ConfigError::at(
                    line_no,
                    Some(key),
                    format!("unknown key in [{sec}]"),
                ));
            }
            if value.is_empty() {
                return Err(ConfigError::at(line_no, Some(key), "missing value"));
            }
            if out
                .entries
                .insert((sec.clone(), key.to_owned()), (line_no, value.to_owned()))
                .is_some()
            {
                return Err(ConfigError::at(line_no, Some(key), "duplicate key"));
            }
        }
        Ok(out)
    }

    fn raw(&self, section: &str, key: &str) -> Option<&(usize, String)> {
        self.entries.get(&(section.to_owned(), key.to_owned()))
    }

    fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError::at(*line, Some(key), format!("cannot parse `{v}`"))),
        }
    }

    fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| {
                    let s = s.trim();
                    s.parse().map_err(|_| {
                        ConfigError::at(*line, Some(key), format!("cannot parse `{s}`"))
                    })
                })
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.raw(section, key).map(|(l, _)| *l)
    }
}

/// Chain parameters as written in the file, before unit conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub distances_um: Vec<f64>,
    /// One value shared by all hops, or one per hop (m/s).
    pub drift: Vec<f64>,
    pub diffusion: f64,
    pub degradation: f64,
    pub slot: f64,
    /// One value shared by all transmitters, or one per transmitter.
    pub molecules: Vec<u32>,
    pub prior: f64,
    pub msi_mean: f64,
    pub msi_var: f64,
    pub slots: usize,
    pub relay1: Option<(f64, f64)>,
}

fn broadcast<T: Copy>(values: &[T], n: usize, key: &str) -> Result<Vec<T>, ConfigError> {
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values.to_vec()),
        len => Err(ConfigError::field(
            key,
            format!("expected 1 or {n} values, got {len}"),
        )),
    }
}

/// Maps core parameter names to the config keys that set them.
fn config_key(core_name: &str) -> &str {
    match core_name {
        "distance" => "distances_um",
        "drift_velocity" => "drift",
        "diffusion_coeff" => "diffusion",
        "degradation_rate" => "degradation",
        "slot_duration" => "slot",
        "num_slots" => "slots",
        "pd" => "relay1_pd",
        "pfa" => "relay1_pfa",
        other => other,
    }
}

impl ChainSpec {
    pub fn relays(&self) -> usize {
        self.distances_um.len().saturating_sub(1)
    }

    /// Converts to a validated core chain.
    pub fn build(&self) -> Result<ChainConfig, ConfigError> {
        let hops = self.distances_um.len();
        if hops == 0 {
            return Err(ConfigError::field(
                "distances_um",
                "at least one hop is required",
            ));
        }
        let drift = broadcast(&self.drift, hops, "drift")?;
        let molecules = broadcast(&self.molecules, hops, "molecules")?;
        let links = self
            .distances_um
            .iter()
            .zip(&drift)
            .map(|(&d, &v)| DiffusionLink {
                distance: d / 1e6,
                drift_velocity: v,
                diffusion_coeff: self.diffusion,
                degradation_rate: self.degradation,
                slot_duration: self.slot,
            })
            .collect();
        let relay_mode = match self.relay1 {
            Some((pd, pfa)) => RelayMode::Pinned(Rates { pd, pfa }),
            None => RelayMode::Computed,
        };
        let cfg = ChainConfig::with_constant_emissions(
            links,
            &molecules,
            self.prior,
            MsiParams {
                mean: self.msi_mean,
                var: self.msi_var,
            },
            self.slots,
            relay_mode,
        );
        cfg.validate().map_err(|e| match e {
            molrelay_core::Error::InvalidParameter { name, reason } => {
                ConfigError::field(config_key(name), reason)
            }
            other => ConfigError::field("chain", other.to_string()),
        })?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Threshold,
    Drift,
    MsiVar,
    Slot,
}

impl SweepVariable {
    pub fn key(self) -> &'static str {
        match self {
            SweepVariable::Threshold => "threshold",
            SweepVariable::Drift => "drift",
            SweepVariable::MsiVar => "msi_var",
            SweepVariable::Slot => "slot",
        }
    }

    /// Copy of `spec` with this variable set to `value`.
    pub fn apply(self, spec: &ChainSpec, value: f64) -> ChainSpec {
        let mut s = spec.clone();
        match self {
            SweepVariable::Drift => s.drift = vec![value],
            SweepVariable::MsiVar => s.msi_var = value,
            SweepVariable::Slot => s.slot = value,
            SweepVariable::Threshold => {}
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl SweepSpec {
    /// `min, min + step, ...` up to `max`, each point computed from its index.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.min + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExperimentKind {
    Roc,
    PeVsDrift,
    ThresholdSweep,
    CapacityVsNoise,
    CapacityVsSlot,
    BudgetSweep,
    Validate,
}

impl ExperimentKind {
    fn sweep_variable(self) -> Option<SweepVariable> {
        match self {
            ExperimentKind::Roc | ExperimentKind::ThresholdSweep => Some(SweepVariable::Threshold),
            ExperimentKind::PeVsDrift => Some(SweepVariable::Drift),
            ExperimentKind::CapacityVsNoise => Some(SweepVariable::MsiVar),
            ExperimentKind::CapacityVsSlot => Some(SweepVariable::Slot),
            ExperimentKind::BudgetSweep | ExperimentKind::Validate => None,
        }
    }

    fn uses_frames(self) -> bool {
        matches!(self, ExperimentKind::PeVsDrift | ExperimentKind::Validate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub chain: ChainSpec,
    pub sweep: Option<SweepSpec>,
    /// Monte Carlo frames per point.
    pub frames: u64,
    /// Total molecules per slot and allocation step for budget sweeps.
    pub budget: Option<(u32, u32)>,
    pub seed: u64,
    pub output: Option<String>,
}

pub const DEFAULT_FRAMES: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 1;

impl ExperimentConfig {
    pub fn parse(kind: ExperimentKind, text: &str) -> Result<Self, ConfigError> {
        let s = Sections::parse(text)?;
        let required = |key: &str| ConfigError::field(key, "required key is missing from [chain]");
        let chain = ChainSpec {
            distances_um: s
                .list("chain", "distances_um")?
                .ok_or_else(|| required("distances_um"))?,
            drift: s.list("chain", "drift")?.ok_or_else(|| required("drift"))?,
            diffusion: s.get("chain", "diffusion")?.unwrap_or(2.2e-11),
            degradation: s.get("chain", "degradation")?.unwrap_or(0.2),
            slot: s.get("chain", "slot")?.ok_or_else(|| required("slot"))?,
            molecules: s
                .list("chain", "molecules")?
                .ok_or_else(|| required("molecules"))?,
            prior: s.get("chain", "prior")?.unwrap_or(0.5),
            msi_mean: s.get("chain", "msi_mean")?.unwrap_or(20.0),
            msi_var: s.get("chain", "msi_var")?.unwrap_or(20.0),
            slots: s.get("chain", "slots")?.unwrap_or(30),
            relay1: match (
                s.get::<f64>("chain", "relay1_pd")?,
                s.get::<f64>("chain", "relay1_pfa")?,
            ) {
                (Some(pd), Some(pfa)) => Some((pd, pfa)),
                (None, None) => None,
                (Some(_), None) => {
                    return Err(ConfigError::field(
                        "relay1_pfa",
                        "must be given with relay1_pd",
                    ))
                }
                (None, Some(_)) => {
                    return Err(ConfigError::field(
                        "relay1_pd",
                        "must be given with relay1_pfa",
                    ))
                }
            },
        };
        if chain.relay1.is_some() && chain.relays() == 0 {
            return Err(ConfigError::field(
                "relay1_pd",
                "pinned relay rates need at least one relay",
            ));
        }

        let sweep = match kind.sweep_variable() {
            None => None,
            Some(var) => {
                if let Some(name) = s.get::<String>("sweep", "variable")? {
                    if name != var.key() {
                        return Err(ConfigError {
                            line: s.line("sweep", "variable"),
                            key: Some("variable".into()),
                            message: format!(
                                "this experiment sweeps `{}`, not `{name}`",
                                var.key()
                            ),
                        });
                    }
                }
                let need =
                    |key: &str| ConfigError::field(key, "required key is missing from [sweep]");
                let sweep = SweepSpec {
                    variable: var,
                    min: s.get("sweep", "min")?.ok_or_else(|| need("min"))?,
                    max: s.get("sweep", "max")?.ok_or_else(|| need("max"))?,
                    step: s.get("sweep", "step")?.ok_or_else(|| need("step"))?,
                };
                if !(sweep.step > 0.0 && sweep.step.is_finite()) {
                    return Err(ConfigError::field("step", "must be finite and > 0"));
                }
                if !(sweep.min.is_finite() && sweep.max.is_finite()) || sweep.max < sweep.min {
                    return Err(ConfigError::field(
                        "max",
                        "sweep bounds must be finite with min <= max",
                    ));
                }
                Some(sweep)
            }
        };

        let budget = if kind == ExperimentKind::BudgetSweep {
            let total: u32 = s.get("sweep", "budget")?.ok_or_else(|| {
                ConfigError::field("budget", "required key is missing from [sweep]")
            })?;
            let step: u32 = s.get("sweep", "step")?.ok_or_else(|| {
                ConfigError::field("step", "required key is missing from [sweep]")
            })?;
            let parts = chain.distances_um.len() as u32;
            if step == 0 || !total.is_multiple_of(step) || total < parts * step {
                return Err(ConfigError::field(
                    "budget",
                    format!("must be a multiple of step giving each of {parts} transmitters at least one step"),
                ));
            }
            Some((total, step))
        } else {
            None
        };

        let frames = s.get("sweep", "frames")?.unwrap_or(DEFAULT_FRAMES);
        if kind.uses_frames() && frames == 0 {
            return Err(ConfigError::field("frames", "must be >= 1"));
        }
        let cfg = Self {
            kind,
            chain,
            sweep,
            frames,
            budget,
            seed: s.get("sweep", "seed")?.unwrap_or(DEFAULT_SEED),
            output: s.get("output", "path")?,
        };
        cfg.check_points()?;
        Ok(cfg)
    }

    /// Validates the chain at every sweep point so bad values fail before any work.
    fn check_points(&self) -> Result<(), ConfigError> {
        match &self.sweep {
            Some(sweep) if sweep.variable != SweepVariable::Threshold => {
                for v in sweep.grid() {
                    sweep
                        .variable
                        .apply(&self.chain, v)
                        .build()
                        .map_err(|mut e| {
                            if e.key.as_deref() == Some(sweep.variable.key()) {
                                e.message = format!("sweep value {v}: {}", e.message);
                            }
                            e
                        })?;
                }
                Ok(())
            }
            _ => self.chain.build().map(|_| ()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "
[chain]
distances_um = 15, 15
drift = 7e-6
slot = 2.5
molecules = 60
relay1_pd = 0.99
relay1_pfa = 0.01

[sweep]
min = 5e-6
max = 1.5e-5
step = 2e-6
frames = 1000
";

    #[test]
    fn parses_a_full_file() {
        let cfg = ExperimentConfig::parse(ExperimentKind::PeVsDrift, BASE).unwrap();
        assert_eq!(cfg.chain.relays(), 1);
        assert_eq!(cfg.frames, 1000);
        assert_eq!(cfg.sweep.as_ref().unwrap().grid().len(), 6);
        let chain = cfg.chain.build().unwrap();
        assert_eq!(chain.hops[1].distance, 15e-6);
        assert_eq!(
            chain.relay_mode,
            RelayMode::Pinned(Rates {
                pd: 0.99,
                pfa: 0.01
            })
        );
        assert_eq!(chain.emissions[1].len(), 31);
    }

    #[test]
    fn grid_has_no_drift() {
        let s = SweepSpec {
            variable: SweepVariable::Threshold,
            min: 0.0,
            max: 1.0,
            step: 0.1,
        };
        let g = s.grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[10], 1.0);
    }

    #[test]
    fn unknown_key_names_the_line() {
        let text = BASE.replace("slot = 2.5", "slot = 2.5\ncolour = red");
        let e = ExperimentConfig::parse(ExperimentKind::PeVsDrift, &text).unwrap_err();
        assert_eq!(e.line, Some(6));
        assert_eq!(e.key.as_deref(), Some("colour"));
    }

    #[test]
    fn negative_slot_names_the_field() {
        let text = BASE.replace("slot = 2.5", "slot = -2.5");
        let e = ExperimentConfig::parse(ExperimentKind::PeVsDrift, &text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("slot"));
        assert!(e.to_string().contains("`slot`"));
    }

    #[test]
    fn structural_errors() {
        for (text, key) in [
            (BASE.replace("[sweep]", "[sweeps]"), None),
            (
                BASE.replace("molecules = 60", "molecules = 60, 60, 60"),
                Some("molecules"),
            ),
            (BASE.replace("relay1_pfa = 0.01", ""), Some("relay1_pfa")),
            (BASE.replace("step = 2e-6", "step = 0"), Some("step")),
            (BASE.replace("drift = 7e-6", "drift = fast"), Some("drift")),
            (BASE.replace("drift = 7e-6", ""), Some("drift")),
            (format!("{BASE}\nmin = 1"), Some("min")),
            (format!("x = 1\n{BASE}"), Some("x")),
        ] {
            let e = ExperimentConfig::parse(ExperimentKind::PeVsDrift, &text).unwrap_err();
            assert_eq!(e.key.as_deref(), key, "{e}");
        }
    }

    #[test]
    fn wrong_sweep_variable() {
        let text = BASE.replace("[sweep]", "[sweep]\nvariable = slot");
        let e = ExperimentConfig::parse(ExperimentKind::PeVsDrift, &text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("variable"));
    }

    #[test]
    fn sweep_points_are_validated() {
        let text = BASE.replace("min = 5e-6", "min = -5e-6");
        let e = ExperimentConfig::parse(ExperimentKind::PeVsDrift, &text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("drift"));
    }

    #[test]
    fn budget_needs_room_for_every_node() {
        let text = BASE
            .replace("frames = 1000", "budget = 10\nstep = 10")
            .replace("step = 2e-6\n", "");
        let e = ExperimentConfig::parse(ExperimentKind::BudgetSweep, &text).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("budget"));
    }
}
