//! TOML scenario files: run settings, noise recipes, topology, frequency
//! plan, selection thresholds and uptime fixtures.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::constants::{DEFAULT_GATE, DEFAULT_KAPPA, DEFAULT_NU0, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::link::{
    Compensation, FrequencyPlan, LinkNoise, LinkTopology, PlanStage, RepeaterStation, ShortLinkNoise, Span,
    SpanNoise, TwoWayMonitor,
};
use crate::noise::{white_pm_h2, AmplitudeConvention, GapModel, NoiseSpec, Sinusoid, ThermalModel, Waveform};
use crate::postproc::{CenterPolicy, Limit, SelectionConfig};

/// Hex SHA-256 of a configuration file's bytes.
pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub spans: Vec<SpanConfig>,
    #[serde(default)]
    pub stations: Vec<StationConfig>,
    #[serde(default)]
    pub short_links: Vec<ShortLinkConfig>,
    pub plan: Option<PlanConfig>,
    pub select: Option<SelectConfig>,
    pub uptime: Option<UptimeConfig>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| Error::Config(e.to_string()))?;
        Ok((Self::parse(&text)?, config_hash(&bytes)))
    }

    pub fn topology(&self) -> Result<LinkTopology> {
        let topo = LinkTopology {
            spans: self.spans.iter().map(SpanConfig::span).collect::<Result<_>>()?,
            stations: self.stations.iter().map(StationConfig::station).collect(),
            short_links: self
                .short_links
                .iter()
                .map(|s| s.monitor(self.run.gate, self.run.nu0))
                .collect::<Result<_>>()?,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn link_noise(&self) -> Result<LinkNoise> {
        let gate = self.run.gate;
        let nu0 = self.run.nu0;
        Ok(LinkNoise {
            spans: self
                .spans
                .iter()
                .map(|s| {
                    Ok(SpanNoise {
                        free_running: s.noise.as_ref().map(|n| n.spec(gate)).transpose()?.unwrap_or_default(),
                        floor: s.floor.as_ref().map(|n| n.spec(gate)).transpose()?,
                    })
                })
                .collect::<Result<_>>()?,
            short_links: self
                .short_links
                .iter()
                .map(|s| {
                    Ok(ShortLinkNoise {
                        reciprocal: s.noise.as_ref().map(|n| n.spec(gate)).transpose()?.unwrap_or_default(),
                        thermal: s.thermal.as_ref().map(|t| t.model(s.fiber_length_m, nu0)).transpose()?,
                        uncompensated: s.uncompensated.as_ref().map(|t| t.model(0.0, nu0)).transpose()?,
                        nonreciprocal: s.nonreciprocal.as_ref().map(|n| n.spec(gate)).transpose()?,
                    })
                })
                .collect::<Result<_>>()?,
            stations: self
                .stations
                .iter()
                .map(|s| s.environment.as_ref().map(|t| t.model(s.imbalance_m, nu0)).transpose())
                .collect::<Result<_>>()?,
        })
    }
}

fn default_gate() -> f64 {
    DEFAULT_GATE
}

fn default_nu0() -> f64 {
    DEFAULT_NU0
}

fn default_t0() -> f64 {
    58000.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Record length; `days` is converted with the gate.
    pub samples: Option<usize>,
    pub days: Option<f64>,
    #[serde(default = "default_gate")]
    pub gate: f64,
    #[serde(default = "default_t0")]
    pub t0_mjd: f64,
    #[serde(default = "default_nu0")]
    pub nu0: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            samples: None,
            days: None,
            gate: DEFAULT_GATE,
            t0_mjd: default_t0(),
            nu0: DEFAULT_NU0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn samples(&self) -> Result<usize> {
        if !(self.gate > 0.0) {
            return Err(Error::Config("run.gate must be > 0".into()));
        }
        match (self.samples, self.days) {
            (Some(n), None) => Ok(n),
            (None, Some(d)) if d > 0.0 => Ok((d * SECONDS_PER_DAY / self.gate).round() as usize),
            (None, None) => Ok(86_400),
            _ => Err(Error::Config("give one of run.samples or a positive run.days".into())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidConfig {
    pub amplitude: f64,
    pub period_s: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

/// Noise recipe. Power-law levels may be given directly as `h` values or as
/// white-noise ADEV levels at `tau = gate`; the contributions add.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub h2: Option<f64>,
    pub h1: Option<f64>,
    pub h0: Option<f64>,
    pub hm1: Option<f64>,
    pub hm2: Option<f64>,
    pub white_pm_adev_at_gate: Option<f64>,
    pub white_fm_adev_at_gate: Option<f64>,
    #[serde(default)]
    pub drift_per_s: f64,
    #[serde(default)]
    pub sinusoids: Vec<SinusoidConfig>,
    #[serde(default)]
    pub slip_rate_per_s: f64,
    #[serde(default)]
    pub gap_rate_per_s: f64,
    #[serde(default)]
    pub gap_mean_s: f64,
}

impl NoiseConfig {
    pub fn spec(&self, gate: f64) -> Result<NoiseSpec> {
        let mut h = BTreeMap::new();
        let mut add = |a: i32, v: f64| *h.entry(a).or_insert(0.0) += v;
        for (a, v) in [(2, self.h2), (1, self.h1), (0, self.h0), (-1, self.hm1), (-2, self.hm2)] {
            if let Some(v) = v {
                add(a, v);
            }
        }
        if let Some(adev) = self.white_pm_adev_at_gate {
            add(2, white_pm_h2(adev, gate));
        }
        if let Some(adev) = self.white_fm_adev_at_gate {
            add(0, 2.0 * adev * adev * gate);
        }
        let spec = NoiseSpec {
            h,
            drift_rate: self.drift_per_s,
            sinusoids: self
                .sinusoids
                .iter()
                .map(|s| Sinusoid {
                    amplitude: s.amplitude,
                    period: s.period_s,
                    phase: s.phase_rad,
                })
                .collect(),
            slip_rate: self.slip_rate_per_s,
            gaps: GapModel {
                rate: self.gap_rate_per_s,
                mean_duration: self.gap_mean_s,
            },
            seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ConventionConfig {
    Peak,
    #[default]
    PeakToPeak,
}

#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WaveformConfig {
    #[default]
    Sinusoid,
    Triangle,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    /// Section length; defaults to the length of the owning element.
    pub length_m: Option<f64>,
    pub excursion_k: f64,
    #[serde(default)]
    pub amplitude_convention: ConventionConfig,
    #[serde(default)]
    pub waveform: WaveformConfig,
    pub period_s: Option<f64>,
    #[serde(default)]
    pub phase_rad: f64,
    pub kappa: Option<f64>,
}

impl ThermalConfig {
    pub fn model(&self, default_length: f64, nu0: f64) -> Result<ThermalModel> {
        let convention = match self.amplitude_convention {
            ConventionConfig::Peak => AmplitudeConvention::Peak,
            ConventionConfig::PeakToPeak => AmplitudeConvention::PeakToPeak,
        };
        let mut tm = ThermalModel::daily(self.length_m.unwrap_or(default_length), self.excursion_k, convention);
        tm.temp_period = self.period_s.unwrap_or(SECONDS_PER_DAY);
        tm.temp_phase = self.phase_rad;
        tm.kappa = self.kappa.unwrap_or(DEFAULT_KAPPA);
        tm.nu0 = nu0;
        tm.waveform = match self.waveform {
            WaveformConfig::Sinusoid => Waveform::Sinusoid,
            WaveformConfig::Triangle => Waveform::Triangle,
        };
        if !(self.excursion_k >= 0.0) {
            return Err(Error::Config("thermal excursion must be >= 0".into()));
        }
        tm.validate()?;
        Ok(tm)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanConfig {
    pub label: String,
    pub length_km: f64,
    pub loss_db_per_km: f64,
    pub compensation: String,
    pub noise: Option<NoiseConfig>,
    pub floor: Option<NoiseConfig>,
}

impl SpanConfig {
    fn span(&self) -> Result<Span> {
        Ok(Span {
            label: self.label.clone(),
            length_km: self.length_km,
            loss_db_per_km: self.loss_db_per_km,
            compensation: self.compensation.parse::<Compensation>()?,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    pub label: String,
    #[serde(default)]
    pub aom_offset_hz: f64,
    #[serde(default)]
    pub pll_offset_hz: f64,
    #[serde(default)]
    pub imbalance_m: f64,
    pub environment: Option<ThermalConfig>,
}

impl StationConfig {
    fn station(&self) -> RepeaterStation {
        RepeaterStation {
            label: self.label.clone(),
            aom_offset: self.aom_offset_hz,
            pll_offset: self.pll_offset_hz,
            interferometer_imbalance: self.imbalance_m,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShortLinkConfig {
    pub label: String,
    pub fiber_length_m: f64,
    /// Round-trip carrier; defaults to twice the AOM offset.
    pub carrier_rf_hz: Option<f64>,
    pub aom_offset_hz: Option<f64>,
    #[serde(default = "one")]
    pub divide_by: u32,
    pub noise: Option<NoiseConfig>,
    pub thermal: Option<ThermalConfig>,
    pub uncompensated: Option<ThermalConfig>,
    pub nonreciprocal: Option<NoiseConfig>,
}

fn one() -> u32 {
    1
}

impl ShortLinkConfig {
    fn monitor(&self, gate: f64, nu0: f64) -> Result<TwoWayMonitor> {
        let carrier_rf = match (self.carrier_rf_hz, self.aom_offset_hz) {
            (Some(c), _) => c,
            (None, Some(a)) => 2.0 * a,
            (None, None) => {
                return Err(Error::Config(format!(
                    "short link `{}` needs carrier_rf_hz or aom_offset_hz",
                    self.label
                )))
            }
        };
        Ok(TwoWayMonitor {
            label: self.label.clone(),
            fiber_length: self.fiber_length_m,
            carrier_rf,
            divide_by: self.divide_by,
            gate,
            nu0,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub kind: String,
    pub label: String,
    #[serde(default)]
    pub offset_hz: f64,
    #[serde(default = "one")]
    pub passes: u32,
    #[serde(default)]
    pub reference_hz: f64,
    #[serde(default = "one")]
    pub divide_by: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub counter_max_hz: f64,
    #[serde(default)]
    pub filter_bands_hz: Vec<(f64, f64)>,
    pub stages: Vec<StageConfig>,
}

impl PlanConfig {
    pub fn plan(&self) -> Result<FrequencyPlan> {
        let stages = self
            .stages
            .iter()
            .map(|s| match s.kind.as_str() {
                "shift" => Ok(PlanStage::Shift {
                    label: s.label.clone(),
                    offset_hz: s.offset_hz,
                    passes: s.passes,
                }),
                "detect" => Ok(PlanStage::Detect {
                    label: s.label.clone(),
                    reference_hz: s.reference_hz,
                    divide_by: s.divide_by,
                }),
                other => Err(Error::Config(format!("unknown plan stage kind `{other}`"))),
            })
            .collect::<Result<_>>()?;
        Ok(FrequencyPlan {
            stages,
            counter_max: self.counter_max_hz,
            filter_bands: self.filter_bands_hz.clone(),
        })
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    pub coarse_bw_hz: Option<f64>,
    pub fine_bw_hz: Option<f64>,
    pub median_center_window_s: Option<f64>,
    pub mean_window_s: Option<f64>,
    pub std_window_s: Option<f64>,
    pub qf_window_s: Option<f64>,
    pub mean_limit: Option<f64>,
    pub std_limit: Option<f64>,
    pub qf_limit: Option<f64>,
}

impl SelectConfig {
    pub fn config(&self) -> SelectionConfig {
        let d = SelectionConfig::default();
        let limit = |v: Option<f64>, dflt: Limit| v.map(Limit::Fixed).unwrap_or(dflt);
        SelectionConfig {
            coarse_bw: self.coarse_bw_hz.unwrap_or(d.coarse_bw),
            fine_bw: self.fine_bw_hz.unwrap_or(d.fine_bw),
            center: self
                .median_center_window_s
                .map(|w| CenterPolicy::RollingMedian { window_s: w })
                .unwrap_or(d.center),
            mean_window: self.mean_window_s.unwrap_or(d.mean_window),
            std_window: self.std_window_s.unwrap_or(d.std_window),
            qf_window: self.qf_window_s.unwrap_or(d.qf_window),
            mean_limit: limit(self.mean_limit, d.mean_limit),
            std_limit: limit(self.std_limit, d.std_limit),
            qf_limit: limit(self.qf_limit, d.qf_limit),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UptimeElement {
    pub label: String,
    pub uptime: f64,
}

/// Seeded fixture of independent element masks.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UptimeConfig {
    pub mean_outage_s: f64,
    pub elements: Vec<UptimeElement>,
}
