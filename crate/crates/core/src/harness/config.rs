use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::secagg::{FixedPointCodec, PrimeField, DEFAULT_PRIME};
use crate::threats::{DlgConfig, PoisonMode};
use crate::topology::default_subset_size;
use crate::{Error, Result, Strategy};

/// One experiment, read from and written back to TOML.
///
/// ```toml
/// strategy = "dms"
/// agents = 30
/// rounds = 500
/// seed = 7
/// tolerance = 1e-8
///
/// [task]
/// kind = "quadratic"
/// dim = 5
///
/// [learning]
/// gamma_scale = 1.0
///
/// [noise]
/// variance = 0.01
///
/// [secure]
/// enabled = true
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    pub agents: usize,
    /// Round budget.
    pub rounds: usize,
    pub seed: u64,
    /// Stop once the worst squared error to the optimum is below this.
    /// Only meaningful for quadratic tasks.
    pub tolerance: Option<f64>,
    /// Stop when validation loss has not improved for this many rounds.
    /// Only meaningful for forecast tasks.
    pub patience: Option<usize>,
    /// Consensus step size in `(0, 1]`.
    pub alpha: f64,
    pub allow_unstable: bool,
    pub halt_on_divergence: bool,
    /// Independent noise realisations averaged by the convergence check.
    pub repetitions: usize,
    pub task: TaskSpec,
    pub learning: LearningSpec,
    pub noise: NoiseSpec,
    pub dms: DmsSpec,
    pub secure: SecureSpec,
    pub attack: Option<AttackSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Dms,
            agents: 30,
            rounds: 500,
            seed: 0,
            tolerance: None,
            patience: None,
            alpha: 1.0,
            allow_unstable: false,
            halt_on_divergence: true,
            repetitions: 1,
            task: TaskSpec::Quadratic(QuadraticSpec::default()),
            learning: LearningSpec::default(),
            noise: NoiseSpec::default(),
            dms: DmsSpec::default(),
            secure: SecureSpec::default(),
            attack: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Quadratic(QuadraticSpec),
    Forecast(ForecastSpec),
}

impl TaskSpec {
    pub fn model_label(&self) -> String {
        match self {
            TaskSpec::Quadratic(q) => format!("quadratic-{}", q.dim),
            TaskSpec::Forecast(f) => {
                let sizes: Vec<String> = f.layer_sizes().iter().map(usize::to_string).collect();
                format!("mlp-{}", sizes.join("-"))
            }
        }
    }
}

/// How local objectives relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadraticLayout {
    /// Every agent shares one minimizer; curvatures differ.
    #[default]
    CommonOptimum,
    /// Only the first `informed` agents see the objective; the rest have a
    /// flat local loss and learn purely through mixing.
    Anchored,
    /// Local minimizers scattered around a centre by `heterogeneity`.
    Heterogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticSpec {
    pub dim: usize,
    pub p_lower: f64,
    pub p_upper: f64,
    pub layout: QuadraticLayout,
    pub informed: usize,
    pub heterogeneity: f64,
}

impl Default for QuadraticSpec {
    fn default() -> Self {
        Self {
            dim: 5,
            p_lower: 0.5,
            p_upper: 2.0,
            layout: QuadraticLayout::CommonOptimum,
            informed: 1,
            heterogeneity: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSpec {
    /// Households generated before clustering.
    pub households: usize,
    pub days: usize,
    pub noise_level: f64,
    pub clusters: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub hidden: Vec<usize>,
}

impl Default for ForecastSpec {
    fn default() -> Self {
        Self {
            households: 100,
            days: 28,
            noise_level: 1.0,
            clusters: 3,
            lookback: 48,
            horizon: 1,
            hidden: vec![16],
        }
    }
}

impl ForecastSpec {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.lookback];
        sizes.extend(&self.hidden);
        sizes.push(self.horizon);
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningSpec {
    /// Fixed learning rate for every agent. When absent, quadratic agents
    /// use `gamma_scale / p_upper` of their own objective and forecast
    /// agents use [`DEFAULT_FORECAST_GAMMA`].
    pub gamma: Option<f64>,
    pub gamma_scale: f64,
    /// Local gradient steps per FedAvg round.
    pub local_epochs: usize,
    /// Standard deviation of the initial quadratic weights, or the half-width
    /// of the uniform MLP initialisation.
    pub init_scale: f64,
    /// Start every decentralized agent from the same model.
    pub shared_init: bool,
}

pub const DEFAULT_FORECAST_GAMMA: f64 = 0.2;

impl Default for LearningSpec {
    fn default() -> Self {
        Self {
            gamma: None,
            gamma_scale: 1.0,
            local_epochs: 1,
            init_scale: 1.0,
            shared_init: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Bound on `E‖w‖²` for the per-step gradient noise; zero disables it.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmsSpec {
    /// Aggregation subset size; 70% of the agents when absent.
    pub subset_size: Option<usize>,
    pub substructures: usize,
    /// Row-stochastic transition matrix; uniform switching when absent.
    pub transition: Option<Vec<Vec<f64>>>,
}

impl Default for DmsSpec {
    fn default() -> Self {
        Self {
            subset_size: None,
            substructures: 8,
            transition: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecureSpec {
    pub enabled: bool,
    #[serde(serialize_with = "prime_out", deserialize_with = "prime_in")]
    pub prime: u128,
    pub fraction_bits: u32,
    pub integer_bits: u32,
    /// Keep share payloads in the transcript, not only their sizes.
    pub keep_payloads: bool,
}

impl Default for SecureSpec {
    fn default() -> Self {
        let codec = FixedPointCodec::default();
        Self {
            enabled: false,
            prime: DEFAULT_PRIME,
            fraction_bits: codec.fraction_bits,
            integer_bits: codec.integer_bits,
            keep_payloads: false,
        }
    }
}

// TOML integers are 64-bit, so the modulus travels as a decimal string.
fn prime_out<S: Serializer>(p: &u128, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&p.to_string())
}

fn prime_in<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u128, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Text(String),
        Int(u64),
    }
    match Repr::deserialize(d)? {
        Repr::Text(s) => s.trim().parse().map_err(serde::de::Error::custom),
        Repr::Int(v) => Ok(v as u128),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackSpec {
    /// `malicious` randomly chosen agents perturb their broadcasts.
    Poison(PoisonSpec),
    /// Gradient-leakage comparison between FedAvg and DMS eavesdroppers.
    Dlg(DlgConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoisonSpec {
    pub malicious: usize,
    pub epsilon: f64,
    pub mode: PoisonMode,
}

impl Default for PoisonSpec {
    fn default() -> Self {
        Self {
            malicious: 3,
            epsilon: 0.2,
            mode: PoisonMode::Constant,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// DMS subset size after applying the default rule.
    pub fn subset_size(&self) -> usize {
        self.dms
            .subset_size
            .unwrap_or_else(|| default_subset_size(self.agents))
    }

    pub fn field(&self) -> Result<PrimeField> {
        PrimeField::new(self.secure.prime).map_err(|e| config_err(format!("secure.prime: {e}")))
    }

    pub fn codec(&self) -> Result<FixedPointCodec> {
        FixedPointCodec::new(self.secure.fraction_bits, self.secure.integer_bits)
            .map_err(|e| config_err(format!("secure codec: {e}")))
    }

    /// Checks everything that can be checked without building the tasks.
    /// Learning rates against local curvature are checked once the agents
    /// exist.
    pub fn validate(&self) -> Result<()> {
        let n = self.agents;
        if n == 0 {
            return Err(config_err("agents must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(config_err("rounds must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(config_err(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.repetitions == 0 {
            return Err(config_err("repetitions must be at least 1"));
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return Err(config_err(format!("tolerance must be positive, got {t}")));
            }
        }
        if self.patience == Some(0) {
            return Err(config_err("patience must be at least 1"));
        }
        if !(self.noise.variance >= 0.0 && self.noise.variance.is_finite()) {
            return Err(config_err(format!(
                "noise variance must be finite and >= 0, got {}",
                self.noise.variance
            )));
        }
        let l = &self.learning;
        if let Some(g) = l.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(config_err(format!(
                    "learning rate must be positive, got {g}"
                )));
            }
        }
        if !(l.gamma_scale > 0.0 && l.gamma_scale.is_finite()) {
            return Err(config_err(format!(
                "gamma_scale must be positive, got {}",
                l.gamma_scale
            )));
        }
        if l.local_epochs == 0 {
            return Err(config_err("local_epochs must be at least 1"));
        }
        if !(l.init_scale >= 0.0 && l.init_scale.is_finite()) {
            return Err(config_err("init_scale must be finite and >= 0"));
        }
        match &self.task {
            TaskSpec::Quadratic(q) => {
                if q.dim == 0 {
                    return Err(config_err("task.dim must be at least 1"));
                }
                if !(q.p_lower > 0.0 && q.p_lower <= q.p_upper && q.p_upper.is_finite()) {
                    return Err(config_err(format!(
                        "curvature bounds need 0 < p_lower <= p_upper, got [{}, {}]",
                        q.p_lower, q.p_upper
                    )));
                }
                if q.layout == QuadraticLayout::Anchored && !(1..=n).contains(&q.informed) {
                    return Err(config_err(format!(
                        "informed must lie in 1..={n}, got {}",
                        q.informed
                    )));
                }
                if !(q.heterogeneity >= 0.0) {
                    return Err(config_err("heterogeneity must be >= 0"));
                }
                if !self.allow_unstable {
                    let too_big = match l.gamma {
                        Some(g) => g > 2.0 / q.p_upper,
                        None => l.gamma_scale > 2.0,
                    };
                    if too_big {
                        return Err(config_err(
                            "learning rate exceeds the stability bound 2/p_upper (use allow_unstable to override)",
                        ));
                    }
                }
            }
            TaskSpec::Forecast(f) => {
                if f.households < n {
                    return Err(config_err(format!(
                        "{} households cannot supply {n} agents",
                        f.households
                    )));
                }
                if f.clusters == 0 || f.clusters > f.households {
                    return Err(config_err(format!(
                        "clusters must lie in 1..={}",
                        f.households
                    )));
                }
                if f.lookback == 0 || f.horizon == 0 || f.hidden.contains(&0) {
                    return Err(config_err(
                        "lookback, horizon and hidden widths must be at least 1",
                    ));
                }
                if f.days * super::SLOTS_PER_DAY < f.lookback + f.horizon {
                    return Err(config_err("too few days for one window"));
                }
                if !(f.noise_level >= 0.0) {
                    return Err(config_err("noise_level must be >= 0"));
                }
                if self.tolerance.is_some() {
                    return Err(config_err(
                        "tolerance needs a known optimum; use patience for forecast tasks",
                    ));
                }
            }
        }
        if matches!(self.strategy, Strategy::Dms | Strategy::Ctl) {
            let m = self.subset_size();
            if m < 2 || m > n {
                return Err(config_err(format!(
                    "dms.subset_size must lie in 2..={n}, got {m}"
                )));
            }
            if self.dms.substructures == 0 {
                return Err(config_err("dms.substructures must be at least 1"));
            }
            if let Some(t) = &self.dms.transition {
                if t.len() != self.dms.substructures {
                    return Err(config_err(
                        "dms.transition must be substructures × substructures",
                    ));
                }
            }
        }
        if self.strategy == Strategy::Dring && n < 3 {
            return Err(config_err("a ring needs at least 3 agents"));
        }
        if self.secure.enabled {
            self.field()?;
            self.codec()?;
            let smallest_group = match self.strategy {
                Strategy::Dms | Strategy::Ctl => self.subset_size(),
                Strategy::Dring => 3,
                Strategy::Dfc | Strategy::FedAvg => n,
                Strategy::Centralized => {
                    return Err(config_err(
                        "secure aggregation needs a multi-agent strategy",
                    ))
                }
            };
            if smallest_group < 3 {
                return Err(config_err(
                    "secure aggregation needs groups of at least 3 agents",
                ));
            }
        }
        match &self.attack {
            Some(AttackSpec::Poison(p)) => {
                if p.malicious > n {
                    return Err(config_err(format!(
                        "{} malicious agents out of {n}",
                        p.malicious
                    )));
                }
                if !(p.epsilon >= 0.0) {
                    return Err(config_err("poison epsilon must be >= 0"));
                }
            }
            Some(AttackSpec::Dlg(d)) => {
                if d.layer_sizes.len() < 2 || d.victim >= d.agents {
                    return Err(config_err(
                        "dlg attack needs at least two layers and a victim among the agents",
                    ));
                }
            }
            None => {}
        }
        Ok(())
    }
}
