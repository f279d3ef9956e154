//! Run configuration: a flat table of dotted keys, read from TOML.

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;
use toml::Value;

use thzcov_core::analysis::{AnalysisOptions, AssociationMethod};
use thzcov_core::beamtrain::{EtaSource, InterferenceForm, TrainingOptions};
use thzcov_core::params::{db_to_linear, dbm_to_watts, ParamError, DEFAULT_PHI_SCALE};
use thzcov_core::simulate::{HumanModel, SimOptions, MIN_TRIALS};
use thzcov_core::{PointingModel, SystemParams, Topology};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Syntax(String),
    #[error("unknown config key '{0}' (run with --help for the list of keys)")]
    UnknownKey(String),
    #[error("config key '{key}' expects {expected}, got {got}")]
    Type {
        key: String,
        expected: &'static str,
        got: String,
    },
    #[error("config key '{key}': {msg}")]
    Invalid { key: String, msg: String },
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamError),
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Bool,
    Str,
    IntList,
    FloatList,
    /// A string or a list of strings.
    Strs,
}

impl Kind {
    fn expected(self) -> &'static str {
        match self {
            Kind::Float => "a number",
            Kind::Int => "a non-negative integer",
            Kind::Bool => "a boolean",
            Kind::Str => "a string",
            Kind::IntList => "a list of integers",
            Kind::FloatList => "a list of numbers",
            Kind::Strs => "a string or a list of strings",
        }
    }

    fn accepts(self, v: &Value) -> bool {
        let number = |v: &Value| matches!(v, Value::Float(_) | Value::Integer(_));
        match (self, v) {
            (Kind::Float, v) => number(v),
            (Kind::Int, Value::Integer(i)) => *i >= 0,
            (Kind::Bool, Value::Boolean(_)) => true,
            (Kind::Str, Value::String(_)) => true,
            (Kind::IntList, Value::Array(a)) => a.iter().all(|x| matches!(x, Value::Integer(_))),
            (Kind::FloatList, Value::Array(a)) => a.iter().all(number),
            (Kind::Strs, Value::String(_)) => true,
            (Kind::Strs, Value::Array(a)) => a.iter().all(|x| matches!(x, Value::String(_))),
            _ => false,
        }
    }
}

pub struct KeySpec {
    pub key: &'static str,
    pub kind: Kind,
    /// TOML literal, or `None` when the default depends on other keys.
    pub default: Option<&'static str>,
    pub unit: &'static str,
    pub help: &'static str,
}

const fn key(
    key: &'static str,
    kind: Kind,
    default: Option<&'static str>,
    unit: &'static str,
    help: &'static str,
) -> KeySpec {
    KeySpec {
        key,
        kind,
        default,
        unit,
        help,
    }
}

use Kind::*;

pub const KEYS: &[KeySpec] = &[
    key("h_A", Float, Some("3.0"), "m", "AP height"),
    key("h_U", Float, Some("1.3"), "m", "UE height"),
    key("h_B", Float, Some("1.7"), "m", "human body height"),
    key("R_B", Float, Some("0.25"), "m", "human body radius"),
    key("lambda_B", Float, Some("0.1"), "m^-2", "human density"),
    key("lambda_W", Float, Some("0.02"), "m^-1", "wall density per axis"),
    key("d_AP", Float, Some("15.0"), "m", "inter-AP distance"),
    key("R_A", Float, Some("15.0"), "m", "coverage radius"),
    key("N_A", Int, Some("16"), "", "AP array side (N_A x N_A elements)"),
    key("N_U", Int, Some("2"), "", "UE array side"),
    key("f", Float, Some("3.0e11"), "Hz", "carrier frequency"),
    key("B", Float, Some("5.0e9"), "Hz", "bandwidth"),
    key("eps_f", Float, Some("0.00143"), "m^-1", "molecular absorption coefficient"),
    key("P_t", Float, Some("5.0"), "dBm", "transmit power"),
    key("N_0", Float, Some("-77.0"), "dBm", "noise power"),
    key("omega_T", Float, Some("0.0554"), "rad", "residual beam offset half-width after training"),
    key("N_RF", Int, Some("6"), "", "RF chains per AP"),
    key("beta_ct", Float, Some("10.0"), "dB", "beam-training SINR threshold"),
    key("topology", Strs, Some("\"all\""), "", "square, hexagonal, ppp, all, or a list of these"),
    key("sidelobe.phi_scale", Float, None, "1.06/N", "cone-model mainlobe beamwidth (default: half-power width, 1.6717)"),
    key("analysis.trunc_epsilon", Float, Some("1.0e-24"), "W", "bound on the interference left out by lattice truncation"),
    key("analysis.association", Str, Some("\"auto\""), "", "auto, inclusion_exclusion or wall_state"),
    key("analysis.ie_cap", Int, Some("20"), "", "largest closer set expanded by inclusion-exclusion"),
    key("experiment.name", Str, Some("\"coverage_vs_beta\""), "", "coverage_vs_beta, association_vs_lambda_w, coverage_vs_density, training_vs_array, pe_distribution or validate"),
    key("experiment.locations", IntList, Some("[1, 2, 3]"), "", "representative UE locations (1 centre, 2 interior, 3 cell edge)"),
    key("experiment.beta_db", Float, Some("20.0"), "dB", "SINR threshold of the density and association experiments"),
    key("sweep.name", Str, None, "", "swept quantity: beta, lambda_W, lambda_A, N_A or h (default: the experiment's)"),
    key("sweep.start", Float, None, "", "first sweep point, in the sweep scale's units"),
    key("sweep.stop", Float, None, "", "last sweep point"),
    key("sweep.n", Int, None, "", "number of sweep points"),
    key("sweep.scale", Str, None, "", "linear, log or dB (dB points are converted to linear values)"),
    key("sweep.values", FloatList, None, "", "explicit sweep points, overriding start/stop/n"),
    key("sim.enabled", Bool, Some("false"), "", "also simulate under the sweep subcommand"),
    key("sim.n_trials", Int, Some("100000"), "", "Monte Carlo trials per point"),
    key("sim.seed", Int, Some("1"), "", "random seed"),
    key("sim.pe_model", Str, Some("\"gaussian\""), "", "pointing loss model: gaussian or array_factor"),
    key("sim.human_model", Str, Some("\"independent_zones\""), "", "independent_zones or shared_field"),
    key("sim.trunc_epsilon", Float, Some("1.0e-15"), "W", "truncation bound for simulated interference"),
    key("beamtrain.omega_mode", Str, Some("\"tied\""), "", "fixed or tied (omega_T = kappa 1.06 / N_A) in array sweeps"),
    key("beamtrain.kappa", Float, None, "", "tie constant (default: reproduces omega_T at the configured N_A)"),
    key("beamtrain.eta_source", Str, Some("\"approx\""), "", "approx or exact inter-AP interference in eta"),
    key("beamtrain.form", Str, Some("\"full\""), "", "full (with sidelobe gain and walls) or bare inter-AP sum"),
    key("beamtrain.n_ct", Int, None, "", "fixed number of concurrent beams, bypassing the bound"),
    key("output.path", Str, None, "", "CSV output file (default: standard output)"),
    key("output.json", Bool, Some("false"), "", "also write a JSON sidecar next to the CSV"),
    key("validate.tolerance", Float, Some("0.03"), "", "largest |analytic - simulated| that passes"),
];

pub fn spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.key == key)
}

/// Text listing every key with its default and unit.
pub fn keys_help() -> String {
    let mut s = String::from("Configuration keys (TOML; dotted keys or [sections]):\n");
    for k in KEYS {
        let unit = if k.unit.is_empty() { String::new() } else { format!(" [{}]", k.unit) };
        let default = k.default.map(|d| format!(" (default {d})")).unwrap_or_default();
        let _ = writeln!(s, "  {:<24} {}{}{}", k.key, k.help, unit, default);
    }
    s
}

/// Effective value of every key, in table order.
#[derive(Clone, Debug)]
pub struct ConfigValues {
    values: Vec<Option<Value>>,
    explicit: Vec<bool>,
}

impl Default for ConfigValues {
    fn default() -> Self {
        let values = KEYS
            .iter()
            .map(|k| {
                k.default.map(|lit| {
                    let t: toml::Table = format!("v = {lit}").parse().expect("default literal");
                    t["v"].clone()
                })
            })
            .collect();
        ConfigValues {
            values,
            explicit: vec![false; KEYS.len()],
        }
    }
}

fn flatten(prefix: &str, table: toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let name = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&name, t, out),
            v => out.push((name, v)),
        }
    }
}

fn type_name(v: &Value) -> String {
    match v {
        Value::String(s) => format!("string \"{s}\""),
        Value::Integer(i) => format!("integer {i}"),
        Value::Float(x) => format!("float {x}"),
        Value::Boolean(b) => format!("boolean {b}"),
        Value::Datetime(_) => "a datetime".into(),
        Value::Array(_) => "an array".into(),
        Value::Table(_) => "a table".into(),
    }
}

impl ConfigValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        let mut flat = Vec::new();
        flatten("", table, &mut flat);
        let mut cv = ConfigValues::default();
        for (k, v) in flat {
            cv.set(&k, v)?;
        }
        Ok(cv)
    }

    pub fn set(&mut self, key: &str, value: Value) -> Result<(), ConfigError> {
        let pos = KEYS
            .iter()
            .position(|k| k.key == key)
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        let kind = KEYS[pos].kind;
        if !kind.accepts(&value) {
            return Err(ConfigError::Type {
                key: key.to_string(),
                expected: kind.expected(),
                got: type_name(&value),
            });
        }
        self.values[pos] = Some(value);
        self.explicit[pos] = true;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        let pos = KEYS.iter().position(|k| k.key == key).expect("key in table");
        self.values[pos].as_ref()
    }

    pub fn is_set(&self, key: &str) -> bool {
        let pos = KEYS.iter().position(|k| k.key == key).expect("key in table");
        self.explicit[pos]
    }

    fn float(&self, key: &str) -> Option<f64> {
        self.get(key).map(|v| match v {
            Value::Integer(i) => *i as f64,
            Value::Float(x) => *x,
            _ => unreachable!("type checked"),
        })
    }

    fn int(&self, key: &str) -> Option<u64> {
        self.get(key).map(|v| v.as_integer().expect("type checked") as u64)
    }

    fn uint32(&self, key: &str) -> Result<Option<u32>, ConfigError> {
        self.int(key)
            .map(|v| u32::try_from(v).map_err(|_| invalid(key, "value too large")))
            .transpose()
    }

    fn string(&self, key: &str) -> Option<String> {
        self.get(key).map(|v| v.as_str().expect("type checked").to_string())
    }

    fn boolean(&self, key: &str) -> Option<bool> {
        self.get(key).map(|v| v.as_bool().expect("type checked"))
    }

    fn strings(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| match v {
            Value::String(s) => vec![s.clone()],
            Value::Array(a) => a.iter().map(|x| x.as_str().expect("type checked").to_string()).collect(),
            _ => unreachable!("type checked"),
        })
    }

    /// `key = value` lines of the resolved configuration, unset keys and
    /// the output path omitted.
    pub fn resolved_lines(&self) -> Vec<String> {
        KEYS.iter()
            .zip(&self.values)
            .filter(|(k, _)| k.key != "output.path")
            .filter_map(|(k, v)| {
                v.as_ref().map(|v| match v {
                    Value::Float(x) => format!("{} = {}", k.key, crate::output::fmt_f64(*x)),
                    v => format!("{} = {}", k.key, v),
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    CoverageVsBeta,
    AssociationVsLambdaW,
    CoverageVsDensity,
    TrainingVsArray,
    PeDistribution,
    Validate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::CoverageVsBeta => "coverage_vs_beta",
            Experiment::AssociationVsLambdaW => "association_vs_lambda_w",
            Experiment::CoverageVsDensity => "coverage_vs_density",
            Experiment::TrainingVsArray => "training_vs_array",
            Experiment::PeDistribution => "pe_distribution",
            Experiment::Validate => "validate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Experiment::CoverageVsBeta,
            Experiment::AssociationVsLambdaW,
            Experiment::CoverageVsDensity,
            Experiment::TrainingVsArray,
            Experiment::PeDistribution,
            Experiment::Validate,
        ]
        .into_iter()
        .find(|e| e.name() == s)
    }

    /// Name of the swept quantity.
    pub fn axis(self) -> &'static str {
        match self {
            Experiment::CoverageVsBeta | Experiment::Validate => "beta",
            Experiment::AssociationVsLambdaW => "lambda_W",
            Experiment::CoverageVsDensity => "lambda_A",
            Experiment::TrainingVsArray => "N_A",
            Experiment::PeDistribution => "h",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
    Db,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub name: String,
    pub scale: Scale,
    /// Points as written, in the scale's units.
    pub points: Vec<f64>,
}

impl Sweep {
    /// Value of the swept quantity at a point.
    pub fn value(&self, point: f64) -> f64 {
        match self.scale {
            Scale::Db => db_to_linear(point),
            _ => point,
        }
    }
}

fn spaced(start: f64, stop: f64, n: u64, scale: Scale) -> Result<Vec<f64>, ConfigError> {
    if n == 0 {
        return Err(invalid("sweep.n", "must be at least 1"));
    }
    if n == 1 {
        return Ok(vec![start]);
    }
    let k = (n - 1) as f64;
    match scale {
        Scale::Linear | Scale::Db => Ok((0..n).map(|i| start + (stop - start) * i as f64 / k).collect()),
        Scale::Log => {
            if !(start > 0.0 && stop > 0.0) {
                return Err(invalid("sweep.start", "log sweeps need positive start and stop"));
            }
            let (a, b) = (start.log10(), stop.log10());
            Ok((0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / k)).collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub enabled: bool,
    pub n_trials: u64,
    pub seed: u64,
    pub options: SimOptions,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OmegaModeConfig {
    Fixed,
    Tied,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub omega_mode: OmegaModeConfig,
    pub kappa: f64,
    pub options: TrainingOptions,
    pub n_ct: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub params: SystemParams,
    pub topologies: Vec<Topology>,
    pub analysis: AnalysisOptions,
    pub experiment: Experiment,
    pub locations: Vec<u8>,
    pub beta_db: f64,
    pub sweep: Sweep,
    pub sim: SimConfig,
    pub training: TrainingConfig,
    pub output: Option<PathBuf>,
    pub json: bool,
    pub tolerance: f64,
    pub values: ConfigValues,
}

fn choice<T>(key: &str, s: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, ConfigError> {
    parse(s).map_err(|e| invalid(key, e))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        RunConfig::from_values(ConfigValues::parse(text)?)
    }

    pub fn from_values(v: ConfigValues) -> Result<Self, ConfigError> {
        let f = |k: &str| v.float(k).expect("has default");
        let u32_of = |k: &str| -> Result<u32, ConfigError> { Ok(v.uint32(k)?.expect("has default")) };
        let mut params = SystemParams {
            h_a: f("h_A"),
            h_u: f("h_U"),
            h_b: f("h_B"),
            r_b: f("R_B"),
            lambda_b: f("lambda_B"),
            lambda_w: f("lambda_W"),
            d_ap: f("d_AP"),
            r_a: f("R_A"),
            n_a: u32_of("N_A")?,
            n_u: u32_of("N_U")?,
            freq: f("f"),
            bandwidth: f("B"),
            eps_f: f("eps_f"),
            p_t: dbm_to_watts(f("P_t")),
            n_0: dbm_to_watts(f("N_0")),
            omega_t: f("omega_T"),
            n_rf: u32_of("N_RF")?,
            beta_ct: db_to_linear(f("beta_ct")),
            topology: Topology::Square,
            phi_scale: v.float("sidelobe.phi_scale").unwrap_or(DEFAULT_PHI_SCALE),
        };

        let experiment = {
            let s = v.string("experiment.name").expect("has default");
            Experiment::parse(&s).ok_or_else(|| invalid("experiment.name", format!("unknown experiment '{s}'")))?
        };

        let mut topologies = Vec::new();
        for s in v.strings("topology").expect("has default") {
            let add: Vec<Topology> = match s.as_str() {
                "all" => {
                    let mut t = vec![Topology::Square, Topology::Hexagonal];
                    if experiment == Experiment::CoverageVsDensity {
                        t.push(Topology::Ppp);
                    }
                    t
                }
                other => vec![choice("topology", other, |x| x.parse::<Topology>().map_err(|e| e.to_string()))?],
            };
            for t in add {
                if !topologies.contains(&t) {
                    topologies.push(t);
                }
            }
        }
        if topologies.is_empty() {
            return Err(invalid("topology", "at least one topology is required"));
        }
        params.topology = topologies[0];
        params.validate()?;

        let locations: Vec<u8> = match v.get("experiment.locations") {
            Some(Value::Array(a)) => a
                .iter()
                .map(|x| match x.as_integer() {
                    Some(i @ 1..=3) => Ok(i as u8),
                    _ => Err(invalid("experiment.locations", format!("locations are 1, 2 or 3 (got {x})"))),
                })
                .collect::<Result<_, _>>()?,
            _ => unreachable!("has default"),
        };
        if locations.is_empty() {
            return Err(invalid("experiment.locations", "at least one location is required"));
        }

        let analysis = AnalysisOptions {
            trunc_epsilon: f("analysis.trunc_epsilon"),
            association: choice(
                "analysis.association",
                &v.string("analysis.association").expect("has default"),
                |s| s.parse::<AssociationMethod>(),
            )?,
            ie_cap: v.int("analysis.ie_cap").expect("has default") as usize,
        };
        if !(analysis.trunc_epsilon > 0.0) {
            return Err(invalid("analysis.trunc_epsilon", "must be positive"));
        }

        let sweep = Self::sweep(&v, experiment, &params)?;

        let sim = SimConfig {
            enabled: v.boolean("sim.enabled").expect("has default"),
            n_trials: v.int("sim.n_trials").expect("has default"),
            seed: v.int("sim.seed").expect("has default"),
            options: SimOptions {
                trunc_epsilon: f("sim.trunc_epsilon"),
                human_model: choice("sim.human_model", &v.string("sim.human_model").expect("has default"), |s| {
                    s.parse::<HumanModel>()
                })?,
                pointing: choice("sim.pe_model", &v.string("sim.pe_model").expect("has default"), |s| {
                    s.parse::<PointingModel>()
                })?,
            },
        };
        if !(sim.options.trunc_epsilon > 0.0) {
            return Err(invalid("sim.trunc_epsilon", "must be positive"));
        }

        let training = TrainingConfig {
            omega_mode: match v.string("beamtrain.omega_mode").expect("has default").as_str() {
                "fixed" => OmegaModeConfig::Fixed,
                "tied" => OmegaModeConfig::Tied,
                other => return Err(invalid("beamtrain.omega_mode", format!("expected fixed or tied (got '{other}')"))),
            },
            kappa: v
                .float("beamtrain.kappa")
                .unwrap_or(params.omega_t * params.n_a as f64 / thzcov_core::params::GAUSSIAN_BEAM_SCALE),
            options: TrainingOptions {
                form: match v.string("beamtrain.form").expect("has default").as_str() {
                    "full" => InterferenceForm::Full,
                    "bare" => InterferenceForm::Bare,
                    other => return Err(invalid("beamtrain.form", format!("expected full or bare (got '{other}')"))),
                },
                eta_source: match v.string("beamtrain.eta_source").expect("has default").as_str() {
                    "approx" => EtaSource::Approx,
                    "exact" => EtaSource::Exact,
                    other => return Err(invalid("beamtrain.eta_source", format!("expected approx or exact (got '{other}')"))),
                },
                trunc_epsilon: analysis.trunc_epsilon,
            },
            n_ct: v.int("beamtrain.n_ct"),
        };
        if !(training.kappa > 0.0) {
            return Err(invalid("beamtrain.kappa", "must be positive"));
        }

        let tolerance = f("validate.tolerance");
        if !(tolerance >= 0.0) {
            return Err(invalid("validate.tolerance", "must be non-negative"));
        }
        Ok(RunConfig {
            params,
            topologies,
            analysis,
            experiment,
            locations,
            beta_db: f("experiment.beta_db"),
            sweep,
            sim,
            training,
            output: v.string("output.path").map(PathBuf::from),
            json: v.boolean("output.json").expect("has default"),
            tolerance,
            values: v,
        })
    }

    fn sweep(v: &ConfigValues, experiment: Experiment, params: &SystemParams) -> Result<Sweep, ConfigError> {
        let axis = experiment.axis();
        if let Some(name) = v.string("sweep.name") {
            if name != axis {
                return Err(invalid(
                    "sweep.name",
                    format!("experiment {} sweeps '{axis}', not '{name}'", experiment.name()),
                ));
            }
        }
        let (start, stop, n, scale) = match axis {
            "beta" => (-10.0, 40.0, 11, Scale::Db),
            "lambda_W" => (0.0, 0.1, 11, Scale::Linear),
            "lambda_A" => (1e-3, 2e-2, 8, Scale::Log),
            "N_A" => (4.0, 64.0, 16, Scale::Linear),
            _ => {
                let w1 = (-(params.omega_t * params.n_a as f64 / thzcov_core::params::GAUSSIAN_BEAM_SCALE).powi(2)).exp();
                (w1 * w1, 1.0, 41, Scale::Linear)
            }
        };
        let scale = match v.string("sweep.scale").as_deref() {
            None => scale,
            Some("linear") => Scale::Linear,
            Some("log") => Scale::Log,
            Some("dB") | Some("db") => Scale::Db,
            Some(other) => return Err(invalid("sweep.scale", format!("expected linear, log or dB (got '{other}')"))),
        };
        let points = match v.get("sweep.values") {
            Some(Value::Array(a)) => a
                .iter()
                .map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64)).expect("type checked"))
                .collect(),
            _ => spaced(
                v.float("sweep.start").unwrap_or(start),
                v.float("sweep.stop").unwrap_or(stop),
                v.int("sweep.n").unwrap_or(n),
                scale,
            )?,
        };
        if points.is_empty() || points.iter().any(|p| !p.is_finite()) {
            return Err(invalid("sweep.values", "sweep points must be finite and non-empty"));
        }
        let sweep = Sweep {
            name: axis.to_string(),
            scale,
            points,
        };
        for &p in &sweep.points {
            let x = sweep.value(p);
            let ok = match axis {
                "beta" | "lambda_A" => x > 0.0,
                "lambda_W" => x >= 0.0,
                "N_A" => x >= 1.0 && x.fract() == 0.0 && x <= u32::MAX as f64,
                _ => (0.0..=1.0).contains(&x),
            };
            if !ok {
                return Err(invalid("sweep.values", format!("{p} is not a valid {axis} value")));
            }
        }
        Ok(sweep)
    }

    /// Rejects simulation runs with too few trials.
    pub fn check_trials(&self) -> Result<(), ConfigError> {
        if self.sim.n_trials < MIN_TRIALS {
            return Err(invalid(
                "sim.n_trials",
                format!("simulation needs at least {MIN_TRIALS} trials (got {})", self.sim.n_trials),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_table_one() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.params, SystemParams::default());
        assert_eq!(c.topologies, vec![Topology::Square, Topology::Hexagonal]);
        assert_eq!(c.sweep.points.len(), 11);
        assert_eq!(c.locations, vec![1, 2, 3]);
    }

    #[test]
    fn every_default_parses() {
        let v = ConfigValues::default();
        for (k, val) in KEYS.iter().zip(&v.values) {
            if let Some(val) = val {
                assert!(k.kind.accepts(val), "{}", k.key);
            }
        }
    }

    #[test]
    fn db_fields_convert() {
        let c = RunConfig::parse("P_t = 5").unwrap();
        assert!((c.params.p_t - 3.1623e-3).abs() < 1e-7);
        let c = RunConfig::parse("beta_ct = 0").unwrap();
        assert_eq!(c.params.beta_ct, 1.0);
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::parse("h_U = 5").unwrap_err().to_string();
        assert!(e.contains("h_U < h_B < h_A"), "{e}");
        let e = RunConfig::parse("h_u = 1.0").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey(ref k) if k == "h_u"));
        let e = RunConfig::parse("[sim]\nn_trial = 5").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey(ref k) if k == "sim.n_trial"));
        let e = RunConfig::parse("d_AP = \"far\"").unwrap_err().to_string();
        assert!(e.contains("d_AP") && e.contains("number"), "{e}");
        let e = RunConfig::parse("sim.n_trials = -3").unwrap_err().to_string();
        assert!(e.contains("sim.n_trials"), "{e}");
        let e = RunConfig::parse("d_AP = -1").unwrap_err().to_string();
        assert!(e.contains("d_AP"), "{e}");
        let e = RunConfig::parse("experiment.name = \"coverage_vs_beta\"\nsweep.name = \"lambda_W\"").unwrap_err().to_string();
        assert!(e.contains("sweep.name"), "{e}");
        assert!(RunConfig::parse("topology = \"triangle\"").is_err());
        assert!(RunConfig::parse("not toml at all = = 3").is_err());
    }

    #[test]
    fn sections_and_dotted_keys_agree() {
        let a = RunConfig::parse("[sim]\nseed = 9\nn_trials = 2000").unwrap();
        let b = RunConfig::parse("sim.seed = 9\nsim.n_trials = 2000").unwrap();
        assert_eq!(a.sim, b.sim);
        assert_eq!(a.sim.seed, 9);
    }

    #[test]
    fn sweeps() {
        let c = RunConfig::parse("experiment.name = \"coverage_vs_density\"").unwrap();
        assert_eq!(c.topologies.len(), 3);
        assert!((c.sweep.points[0] - 1e-3).abs() < 1e-15);
        assert!((c.sweep.points[7] - 2e-2).abs() < 1e-15);
        let c = RunConfig::parse("experiment.name = \"training_vs_array\"").unwrap();
        assert_eq!(c.sweep.points, (1..=16).map(|k| 4.0 * k as f64).collect::<Vec<_>>());
        let c = RunConfig::parse("sweep.values = [0, 10]").unwrap();
        assert_eq!(c.sweep.value(10.0), 10.0);
        let c = RunConfig::parse("sweep.scale = \"linear\"\nsweep.values = [0.5]").unwrap();
        assert_eq!(c.sweep.value(0.5), 0.5);
        assert!(RunConfig::parse("experiment.name = \"training_vs_array\"\nsweep.values = [4.5]").is_err());
    }

    #[test]
    fn help_lists_every_key() {
        let h = keys_help();
        for k in KEYS {
            assert!(h.contains(k.key));
        }
    }

    #[test]
    fn resolved_lines_round_trip() {
        let c = RunConfig::parse("d_AP = 12.5\ntopology = [\"hexagonal\"]").unwrap();
        let text = c.values.resolved_lines().join("\n");
        let again = RunConfig::parse(&text).unwrap();
        assert_eq!(again.params, c.params);
        assert_eq!(again.topologies, c.topologies);
    }
}
