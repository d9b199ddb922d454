//! Scenario matrix: presets, sweeps, scenario files and execution.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::netlink::NetworkProfile;
use crate::session::{self, SessionConfig, TimingSample};
use crate::suites::{Catalog, CryptoProvider};
use crate::transport::TransportParams;

pub const MIB: u64 = 1 << 20;
/// "2 MB", read as binary megabytes.
pub const BASE_FILE_BYTES: u64 = 2 * MIB;
pub const PRESET_RUNS: u32 = 100;
/// Runs per point for sweeps at desk scale.
pub const SWEEP_RUNS: u32 = 10;
pub const SWEEP_MIN_FILE_BYTES: u64 = 244;
pub const SWEEP_DEFAULT_MAX_BYTES: u64 = 64 * MIB;
/// Upper end of the full file-size range (16 GB).
pub const SWEEP_FULL_MAX_BYTES: u64 = 16 * 1024 * MIB;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub suites: Vec<String>,
    pub profile: NetworkProfile,
    pub file_bytes: u64,
    pub runs: u32,
    pub base_seed: u64,
    pub session: SessionConfig,
}

impl ScenarioSpec {
    pub fn transport(&self) -> &TransportParams {
        &self.session.transport
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        if !crate::is_identifier(&self.name) {
            return Err(Error::Config(format!(
                "scenario name {:?} must be non-empty and use only [A-Za-z0-9_.-]",
                self.name
            )));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.suites.is_empty() {
            return Err(Error::Config("suites must not be empty".into()));
        }
        let mut seen = HashSet::new();
        for s in &self.suites {
            if catalog.get(s).is_none() {
                return Err(Error::Config(format!(
                    "unknown suite {s:?} (known: {})",
                    catalog.names().join(", ")
                )));
            }
            if !seen.insert(s) {
                return Err(Error::Config(format!("suite {s:?} listed twice")));
            }
        }
        self.profile.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.session.transport.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Reinterprets the configured latency as a round-trip time.
    pub fn with_latency_as_rtt(mut self) -> Self {
        self.profile.one_way_latency_s /= 2.0;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Ideal,
    Normal,
    Congested,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Ideal, Preset::Normal, Preset::Congested];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Ideal => "ideal",
            Preset::Normal => "normal",
            Preset::Congested => "congested",
        }
    }

    /// (latency in ms, loss in tenths of a percent)
    fn impairment(self) -> (u32, u32) {
        match self {
            Preset::Ideal => (0, 0),
            Preset::Normal => (100, 15),
            Preset::Congested => (200, 25),
        }
    }

    pub fn spec(self) -> ScenarioSpec {
        let (ms, loss_permille) = self.impairment();
        ScenarioSpec {
            name: self.name().to_string(),
            suites: Catalog::builtin().names(),
            profile: profile_ms_permille(ms, loss_permille),
            file_bytes: BASE_FILE_BYTES,
            runs: PRESET_RUNS,
            base_seed: 0,
            session: SessionConfig::default(),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::Parameter(format!("unknown preset {s:?} (valid presets: ideal, normal, congested)"))
        })
    }
}

pub fn preset(name: &str) -> Result<ScenarioSpec> {
    Ok(name.parse::<Preset>()?.spec())
}

fn profile_ms_permille(ms: u32, loss_permille: u32) -> NetworkProfile {
    NetworkProfile {
        one_way_latency_s: ms as f64 / 1000.0,
        loss_rate: loss_permille as f64 / 1000.0,
        ..Default::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    FileSize,
    Latency,
    Loss,
}

impl SweepKind {
    pub const ALL: [SweepKind; 3] = [SweepKind::FileSize, SweepKind::Latency, SweepKind::Loss];

    pub fn name(self) -> &'static str {
        match self {
            SweepKind::FileSize => "file-size",
            SweepKind::Latency => "latency",
            SweepKind::Loss => "loss",
        }
    }

    /// Value of the swept variable in display units (bytes, ms, percent).
    pub fn value_of(self, spec: &ScenarioSpec) -> f64 {
        match self {
            SweepKind::FileSize => spec.file_bytes as f64,
            SweepKind::Latency => (spec.profile.one_way_latency_s * 1e6).round() / 1e3,
            SweepKind::Loss => (spec.profile.loss_rate * 1e5).round() / 1e3,
        }
    }

    pub fn generate(self, max_bytes: u64) -> Vec<ScenarioSpec> {
        match self {
            SweepKind::FileSize => sweep_file_size(max_bytes),
            SweepKind::Latency => sweep_latency(),
            SweepKind::Loss => sweep_loss(),
        }
    }
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::Parameter(format!("unknown sweep kind {s:?} (valid: file-size, latency, loss)"))
        })
    }
}

fn sweep_base(name: &str) -> ScenarioSpec {
    ScenarioSpec {
        name: name.to_string(),
        runs: SWEEP_RUNS,
        ..Preset::Congested.spec()
    }
}

/// 244-byte doubling up to `max_bytes`, at 200 ms / 2.5 %.
pub fn sweep_file_size(max_bytes: u64) -> Vec<ScenarioSpec> {
    let base = sweep_base("sweep-file-size");
    std::iter::successors(Some(SWEEP_MIN_FILE_BYTES), |b| b.checked_mul(2))
        .take_while(|&b| b <= max_bytes)
        .map(|file_bytes| ScenarioSpec {
            file_bytes,
            ..base.clone()
        })
        .collect()
}

/// 0 to 400 ms in 50 ms steps, at 2.5 % loss.
pub fn sweep_latency() -> Vec<ScenarioSpec> {
    let base = sweep_base("sweep-latency");
    (0..=8)
        .map(|k| ScenarioSpec {
            profile: NetworkProfile {
                one_way_latency_s: profile_ms_permille(50 * k, 0).one_way_latency_s,
                ..base.profile
            },
            ..base.clone()
        })
        .collect()
}

/// 0 % to 5 % in 0.5 % steps, at 200 ms.
pub fn sweep_loss() -> Vec<ScenarioSpec> {
    let base = sweep_base("sweep-loss");
    (0..=10)
        .map(|k| ScenarioSpec {
            profile: NetworkProfile {
                loss_rate: profile_ms_permille(0, 5 * k).loss_rate,
                ..base.profile
            },
            ..base.clone()
        })
        .collect()
}

/// Per-run seed shared by every suite of a scenario, so suites see
/// identically seeded loss draws per flight position.
pub fn derive_run_seed(base_seed: u64, scenario: &str, run: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(b"qsc-bench/run-seed\0");
    h.update(base_seed.to_le_bytes());
    h.update((scenario.len() as u64).to_le_bytes());
    h.update(scenario.as_bytes());
    h.update(run.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn run_seeds(spec: &ScenarioSpec) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = (0..spec.runs)
        .map(|i| derive_run_seed(spec.base_seed, &spec.name, i))
        .collect();
    let distinct: HashSet<_> = seeds.iter().collect();
    if distinct.len() != seeds.len() {
        return Err(Error::Config(format!(
            "seed collision in scenario {:?} with base seed {}",
            spec.name, spec.base_seed
        )));
    }
    Ok(seeds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSamples {
    pub suite: String,
    pub samples: Vec<TimingSample>,
}

impl SuiteSamples {
    pub fn valid(&self) -> impl Iterator<Item = &TimingSample> {
        self.samples.iter().filter(|s| s.valid)
    }

    pub fn excluded_n(&self) -> usize {
        self.samples.iter().filter(|s| !s.valid).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub scenario: ScenarioSpec,
    /// One group per suite, in scenario order; samples in run order.
    pub groups: Vec<SuiteSamples>,
}

impl RunResults {
    pub fn samples(&self) -> impl Iterator<Item = &TimingSample> {
        self.groups.iter().flat_map(|g| g.samples.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon pool with the given worker count (`None` = rayon default).
    /// Falls back to sequential without the `parallel` feature.
    Parallel { workers: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        Execution::Parallel { workers: None }
    }
}

pub fn execute(spec: &ScenarioSpec, catalog: &Catalog, provider: &dyn CryptoProvider) -> Result<RunResults> {
    execute_with(spec, catalog, provider, Execution::default())
}

pub fn execute_with(
    spec: &ScenarioSpec,
    catalog: &Catalog,
    provider: &dyn CryptoProvider,
    execution: Execution,
) -> Result<RunResults> {
    spec.validate(catalog)?;
    let seeds = run_seeds(spec)?;
    let jobs: Vec<(usize, u32)> = (0..spec.suites.len())
        .flat_map(|s| (0..spec.runs).map(move |r| (s, r)))
        .collect();

    let run_one = |&(s, r): &(usize, u32)| -> Result<TimingSample> {
        let suite = catalog.get(&spec.suites[s]).expect("validated");
        let seed = seeds[r as usize];
        let mut sample = match session::run_session(suite, &spec.profile, spec.file_bytes, &spec.session, provider, seed) {
            Ok(sample) => sample,
            Err(Error::SessionFailed { sample, .. }) => *sample,
            Err(e) => return Err(e),
        };
        sample.run = r;
        Ok(sample)
    };

    let samples = map_jobs(&jobs, run_one, execution)?;

    let mut it = samples.into_iter();
    let groups = spec
        .suites
        .iter()
        .map(|name| SuiteSamples {
            suite: name.clone(),
            samples: it.by_ref().take(spec.runs as usize).collect(),
        })
        .collect();
    Ok(RunResults {
        scenario: spec.clone(),
        groups,
    })
}

#[cfg(feature = "parallel")]
fn map_jobs<F>(jobs: &[(usize, u32)], f: F, execution: Execution) -> Result<Vec<TimingSample>>
where
    F: Fn(&(usize, u32)) -> Result<TimingSample> + Sync + Send,
{
    use rayon::prelude::*;

    match execution {
        Execution::Sequential => jobs.iter().map(f).collect(),
        Execution::Parallel { workers } => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = workers {
                builder = builder.num_threads(n.max(1));
            }
            let pool = builder
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
            // Indexed collect keeps job order.
            pool.install(|| jobs.par_iter().map(f).collect())
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn map_jobs<F>(jobs: &[(usize, u32)], f: F, _execution: Execution) -> Result<Vec<TimingSample>>
where
    F: Fn(&(usize, u32)) -> Result<TimingSample>,
{
    jobs.iter().map(f).collect()
}

/// Scenario file schema (TOML). Every field except `name` is optional;
/// unset fields come from `preset`, or from the `ideal` preset when no
/// preset is named.
///
/// ```toml
/// name = "normal-5"
/// preset = "normal"
/// runs = 5
/// latency_ms = 120
/// loss_pct = 1.5          # or loss_rate = 0.015, not both
/// bandwidth_Bps = 12500000
/// file_bytes = 2097152
/// base_seed = 42
/// suites = ["classical", "kyber_falcon"]
/// latency_is_rtt = false
///
/// [transport]
/// initial_cwnd_segments = 4
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub preset: Option<String>,
    pub latency_ms: Option<f64>,
    pub loss_pct: Option<f64>,
    pub loss_rate: Option<f64>,
    #[serde(alias = "bandwidth_Bps")]
    pub bandwidth_bps: Option<f64>,
    pub mtu_bytes: Option<u32>,
    pub ack_loss: Option<bool>,
    pub file_bytes: Option<u64>,
    pub runs: Option<u32>,
    pub base_seed: Option<u64>,
    pub suites: Option<Vec<String>>,
    pub transport: Option<TransportParams>,
    pub latency_is_rtt: Option<bool>,
    pub piggyback_handshake_acks: Option<bool>,
}

impl ScenarioFile {
    pub fn into_spec(self, catalog: &Catalog) -> Result<ScenarioSpec> {
        let preset: Preset = match &self.preset {
            Some(p) => p.parse().map_err(|e: Error| Error::Config(format!("field `preset`: {e}")))?,
            None => Preset::Ideal,
        };
        let mut spec = preset.spec();
        spec.name = self.name;

        if let Some(ms) = self.latency_ms {
            if !(ms.is_finite() && ms >= 0.0) {
                return Err(Error::Config(format!("field `latency_ms`: must be >= 0, got {ms}")));
            }
            spec.profile.one_way_latency_s = ms / 1000.0;
        }
        match (self.loss_pct, self.loss_rate) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("set either `loss_pct` or `loss_rate`, not both".into()));
            }
            (Some(pct), None) => {
                if !(0.0..100.0).contains(&pct) {
                    return Err(Error::Config(format!(
                        "field `loss_pct`: {pct} is outside the valid range [0,100)"
                    )));
                }
                spec.profile.loss_rate = pct / 100.0;
            }
            (None, Some(rate)) => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Config(format!(
                        "field `loss_rate`: {rate} is outside the valid range [0,1) (use loss_pct for percentages)"
                    )));
                }
                spec.profile.loss_rate = rate;
            }
            (None, None) => {}
        }
        if let Some(bw) = self.bandwidth_bps {
            spec.profile.bandwidth_bps = Some(bw);
        }
        if let Some(mtu) = self.mtu_bytes {
            spec.profile.mtu_bytes = mtu;
        }
        if let Some(ack_loss) = self.ack_loss {
            spec.profile.ack_loss = ack_loss;
        }
        if let Some(b) = self.file_bytes {
            spec.file_bytes = b;
        }
        if let Some(r) = self.runs {
            spec.runs = r;
        }
        if let Some(s) = self.base_seed {
            spec.base_seed = s;
        }
        if let Some(s) = self.suites {
            spec.suites = s;
        }
        if let Some(t) = self.transport {
            spec.session.transport = t;
        }
        if let Some(p) = self.piggyback_handshake_acks {
            spec.session.piggyback_handshake_acks = p;
        }
        if self.latency_is_rtt.unwrap_or(false) {
            spec = spec.with_latency_as_rtt();
        }
        spec.validate(catalog)?;
        Ok(spec)
    }
}

pub fn parse_scenario(text: &str, origin: &Path, catalog: &Catalog) -> Result<ScenarioSpec> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    file.into_spec(catalog).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", origin.display())),
        other => other,
    })
}

pub fn load_scenario(path: &Path, catalog: &Catalog) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text, path, catalog)
}
