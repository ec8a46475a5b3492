//! Scenario configuration and seeded instance generation.
//!
//! A cluster is a disk of configurable diameter holding `J` small-cell base
//! stations and `N` users, all dropped uniformly at random. Base stations are
//! redrawn until every pair is at least one tenth of the diameter apart. The
//! power gain between SBS `j` and user `i` on RB `c` is
//!
//! ```text
//! g = 10^(-PL(d)/10) * E,   PL(d) = a + b*log10(max(d, 1 m)),   E ~ Exp(1)
//! ```
//!
//! i.e. distance-dependent pathloss times unit-mean Rayleigh power fading,
//! independent across `(i, j, c)`. Every draw comes from a single ChaCha stream
//! seeded with [`ScenarioConfig::rng_seed`], so instances are bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::radio::{Dims, PowerMatrix};
use crate::{Error, Result};

const PLACEMENT_RETRIES: usize = 10_000;

/// Converts a power level in dBm to watts.
pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Per-RB noise power in watts: the noise density integrated over one RB.
pub fn noise_power(cfg: &ScenarioConfig) -> f64 {
    noise_power_for(cfg.noise_psd_dbm_hz, cfg.rb_bandwidth_hz)
}

pub(crate) fn noise_power_for(psd_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watt(psd_dbm_hz + 10.0 * bandwidth_hz.log10())
}

/// Pathloss in dB at distance `d` meters, clamped below at 1 m.
pub fn pathloss_db(d: f64, a_db: f64, b: f64) -> f64 {
    a_db + b * d.max(1.0).log10()
}

/// Linear channel gain for a given distance and fading realization.
pub fn channel_gain(d: f64, fading: f64, a_db: f64, b: f64) -> f64 {
    10f64.powf(-pathloss_db(d, a_db, b) / 10.0) * fading
}

/// A scalar applied to every SBS, or one value per SBS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerSbs {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerSbs {
    pub fn resolve(&self, num_sbs: usize) -> Result<Vec<f64>> {
        match self {
            PerSbs::Uniform(v) => Ok(vec![*v; num_sbs]),
            PerSbs::Each(vs) if vs.len() == num_sbs => Ok(vs.clone()),
            PerSbs::Each(vs) => Err(Error::Config(format!(
                "expected {num_sbs} per-SBS values, got {}",
                vs.len()
            ))),
        }
    }
}

/// Iteration budgets for the association, pricing and power-control loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Iterations {
    /// Maximum ζ sweeps per SBS before its ν update.
    pub i_zeta: usize,
    /// Maximum outer ν iterations.
    pub i_nu: usize,
    /// Power-control inner iterations (exchanges plus sum-power adjustments).
    pub i_p: usize,
    /// Association/power-control alternations.
    pub outer_rounds: usize,
}

impl Iterations {
    pub const HIGH: Iterations = Iterations {
        i_zeta: 10,
        i_nu: 400,
        i_p: 2000,
        outer_rounds: 3,
    };
    pub const LOW: Iterations = Iterations {
        i_zeta: 1,
        i_nu: 40,
        i_p: 10,
        outer_rounds: 3,
    };
}

impl Default for Iterations {
    fn default() -> Self {
        Iterations::HIGH
    }
}

/// Step sizes and tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Steps {
    /// Base ν step (1/(Mbit/s)²).
    pub alpha: f64,
    /// Sum-power step per unit multiplier (W²/nat).
    pub gamma: f64,
    /// Power-exchange stopping threshold on the marginal gap (nat/W).
    pub epsilon_f: f64,
    /// Relative utility change that stops the outer alternation.
    pub epsilon_conv: f64,
}

impl Default for Steps {
    fn default() -> Self {
        Steps {
            alpha: 1e-4,
            gamma: 0.5,
            epsilon_f: 1e-9,
            epsilon_conv: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub num_sbs: usize,
    pub num_users: usize,
    pub num_rbs: usize,
    pub rb_bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub tx_power_dbm: PerSbs,
    pub backhaul_capacity_bps: PerSbs,
    pub cluster_diameter_m: f64,
    pub pathloss_a_db: f64,
    pub pathloss_b: f64,
    pub rng_seed: u64,
    pub iters: Iterations,
    pub steps: Steps,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_sbs: 4,
            num_users: 40,
            num_rbs: 100,
            rb_bandwidth_hz: 180e3,
            noise_psd_dbm_hz: -174.0,
            tx_power_dbm: PerSbs::Uniform(35.0),
            backhaul_capacity_bps: PerSbs::Uniform(60e6),
            cluster_diameter_m: 1000.0,
            pathloss_a_db: 38.0,
            pathloss_b: 30.0,
            rng_seed: 1,
            iters: Iterations::default(),
            steps: Steps::default(),
        }
    }
}

impl ScenarioConfig {
    /// Parses a TOML document; absent keys take their defaults.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.num_users, self.num_sbs, self.num_rbs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_sbs == 0 || self.num_users == 0 || self.num_rbs == 0 {
            return Err(Error::Config(
                "num_sbs, num_users and num_rbs must be at least 1".into(),
            ));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("rb_bandwidth_hz", self.rb_bandwidth_hz)?;
        positive("cluster_diameter_m", self.cluster_diameter_m)?;
        if !self.noise_psd_dbm_hz.is_finite() {
            return Err(Error::Config("noise_psd_dbm_hz must be finite".into()));
        }
        for p in self.tx_power_dbm.resolve(self.num_sbs)? {
            if !p.is_finite() {
                return Err(Error::Config(format!("tx_power_dbm must be finite, got {p}")));
            }
        }
        for z in self.backhaul_capacity_bps.resolve(self.num_sbs)? {
            positive("backhaul_capacity_bps", z)?;
        }
        if !self.pathloss_a_db.is_finite() || !self.pathloss_b.is_finite() {
            return Err(Error::Config("pathloss coefficients must be finite".into()));
        }
        let it = &self.iters;
        if it.i_zeta == 0 || it.i_nu == 0 || it.i_p == 0 || it.outer_rounds == 0 {
            return Err(Error::Config("iteration budgets must be at least 1".into()));
        }
        let st = &self.steps;
        positive("steps.alpha", st.alpha)?;
        positive("steps.gamma", st.gamma)?;
        positive("steps.epsilon_f", st.epsilon_f)?;
        positive("steps.epsilon_conv", st.epsilon_conv)?;
        Ok(())
    }
}

/// Per-(user, SBS, RB) linear power gains |h|².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTensor {
    dims: Dims,
    gains: Vec<f64>,
}

impl ChannelTensor {
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut gains = Vec::with_capacity(dims.len());
        for i in 0..dims.users {
            for j in 0..dims.sbs {
                for c in 0..dims.rbs {
                    gains.push(f(i, j, c));
                }
            }
        }
        ChannelTensor { dims, gains }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.gains[self.dims.idx(i, j, c)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gains
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub sbs: Vec<Point>,
    pub users: Vec<Point>,
}

fn uniform_in_disk(rng: &mut impl Rng, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    Point {
        x: r * theta.cos(),
        y: r * theta.sin(),
    }
}

/// Drops SBSs (with minimum separation) and users uniformly in the cluster disk.
pub fn generate_layout(cfg: &ScenarioConfig, rng: &mut impl Rng) -> Result<Layout> {
    let radius = cfg.cluster_diameter_m / 2.0;
    let min_sep = cfg.cluster_diameter_m / 10.0;
    let mut sbs: Vec<Point> = Vec::with_capacity(cfg.num_sbs);
    let mut attempts = 0;
    while sbs.len() < cfg.num_sbs {
        if attempts == PLACEMENT_RETRIES {
            return Err(Error::Placement {
                count: cfg.num_sbs,
                min_sep_m: min_sep,
                retries: PLACEMENT_RETRIES,
            });
        }
        attempts += 1;
        let cand = uniform_in_disk(rng, radius);
        if sbs.iter().all(|s| s.distance(&cand) >= min_sep) {
            sbs.push(cand);
        }
    }
    let users = (0..cfg.num_users)
        .map(|_| uniform_in_disk(rng, radius))
        .collect();
    Ok(Layout { sbs, users })
}

/// Samples a channel tensor for `cfg`; deterministic in `cfg.rng_seed`.
pub fn generate_instance(cfg: &ScenarioConfig) -> Result<ChannelTensor> {
    generate_with_layout(cfg).map(|(h, _)| h)
}

pub fn generate_with_layout(cfg: &ScenarioConfig) -> Result<(ChannelTensor, Layout)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let layout = generate_layout(cfg, &mut rng)?;
    let h = ChannelTensor::from_fn(cfg.dims(), |i, j, _c| {
        let d = layout.users[i].distance(&layout.sbs[j]);
        let fading: f64 = rng.sample(Exp1);
        // Exp1 can return exactly 0 with negligible probability; keep gains positive.
        channel_gain(d, fading.max(f64::MIN_POSITIVE), cfg.pathloss_a_db, cfg.pathloss_b)
    });
    Ok((h, layout))
}

/// Everything the optimizers need about one cluster realization, in internal units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub gains: ChannelTensor,
    /// Per-RB noise power (W).
    pub noise_w: f64,
    /// RB bandwidth (Hz).
    pub bandwidth_hz: f64,
    /// Per-SBS sum-power caps (W).
    pub p_max_w: Vec<f64>,
    /// Per-SBS backhaul capacities (Mbit/s).
    pub backhaul_mbps: Vec<f64>,
}

impl Cluster {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let gains = generate_instance(cfg)?;
        Self::with_gains(cfg, gains)
    }

    pub fn with_gains(cfg: &ScenarioConfig, gains: ChannelTensor) -> Result<Self> {
        cfg.validate()?;
        if gains.dims() != cfg.dims() {
            return Err(Error::Argument(format!(
                "channel dims {:?} do not match config dims {:?}",
                gains.dims(),
                cfg.dims()
            )));
        }
        Ok(Cluster {
            gains,
            noise_w: noise_power(cfg),
            bandwidth_hz: cfg.rb_bandwidth_hz,
            p_max_w: cfg
                .tx_power_dbm
                .resolve(cfg.num_sbs)?
                .into_iter()
                .map(dbm_to_watt)
                .collect(),
            backhaul_mbps: cfg
                .backhaul_capacity_bps
                .resolve(cfg.num_sbs)?
                .into_iter()
                .map(|z| z / 1e6)
                .collect(),
        })
    }

    pub fn dims(&self) -> Dims {
        self.gains.dims()
    }

    /// RB bandwidth in MHz, the unit that pairs with Mbit/s rates.
    pub fn bandwidth_mhz(&self) -> f64 {
        self.bandwidth_hz / 1e6
    }

    /// Every SBS spreads its full power evenly over its RBs.
    pub fn uniform_power(&self) -> PowerMatrix {
        PowerMatrix::uniform(&self.p_max_w, self.dims().rbs)
    }

    pub fn rates(&self, p: &PowerMatrix) -> crate::radio::RateTensor {
        crate::radio::compute_rates(&self.gains, p, self.noise_w, self.bandwidth_hz)
    }

    /// Throughputs, utility and loads of `x` under `p`.
    pub fn report(&self, x: &crate::radio::Assignment, p: &PowerMatrix) -> crate::radio::UtilityReport {
        crate::radio::served_utility(&self.gains, x, p, self.noise_w, self.bandwidth_hz)
    }
}
