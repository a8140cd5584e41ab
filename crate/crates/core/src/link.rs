//! Link topology and physics: spans, repeater stations, the two-way
//! monitored short interconnect, delay-limited residuals, loss budgets and
//! frequency planning.
//!
//! Sign convention for the short-link correction: the corrected series is
//! `comparison - y_corr`, with `y_corr` from [`two_way_correction`].

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;

use crate::constants::{fiber_delay, C_LIGHT, DEFAULT_NU0, GROUP_INDEX};
use crate::error::{Error, Result};
use crate::noise::{self, derive_seed, NoiseSpec, Spectrum, ThermalModel, Waveform};
use crate::postproc::apply_correction;
use crate::series::{check_same_timebase, FreqSeries, INVALID};
use crate::stability::{psd_avar, sinusoid_fm_adev, Kernel, StabilityCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compensation {
    Active,
    Passive,
    Hybrid,
    None,
}

impl Compensation {
    pub fn is_compensated(self) -> bool {
        !matches!(self, Compensation::None)
    }
}

impl std::str::FromStr for Compensation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "active" => Ok(Compensation::Active),
            "passive" => Ok(Compensation::Passive),
            "hybrid" => Ok(Compensation::Hybrid),
            "none" => Ok(Compensation::None),
            other => Err(Error::param("compensation", format!("unknown kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Span {
    pub label: String,
    pub length_km: f64,
    pub loss_db_per_km: f64,
    pub compensation: Compensation,
}

impl Span {
    pub fn delay(&self) -> f64 {
        fiber_delay(self.length_km * 1e3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeaterStation {
    pub label: String,
    pub aom_offset: f64,
    pub pll_offset: f64,
    /// Length difference of the interferometer reference arms (m).
    pub interferometer_imbalance: f64,
}

/// Short fiber between two stations, monitored by a round-trip beat that is
/// tracked, divided and counted.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoWayMonitor {
    pub label: String,
    pub fiber_length: f64,
    pub carrier_rf: f64,
    pub divide_by: u32,
    pub gate: f64,
    pub nu0: f64,
}

impl TwoWayMonitor {
    /// Monitor fed by a double-passed AOM at `aom_offset`.
    pub fn double_pass(label: &str, fiber_length: f64, aom_offset: f64, divide_by: u32) -> Self {
        Self {
            label: label.to_string(),
            fiber_length,
            carrier_rf: 2.0 * aom_offset,
            divide_by,
            gate: 1.0,
            nu0: DEFAULT_NU0,
        }
    }

    pub fn delay(&self) -> f64 {
        fiber_delay(self.fiber_length)
    }

    /// Nominal frequency seen by the counter.
    pub fn counted_frequency(&self) -> f64 {
        self.carrier_rf / self.divide_by as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.divide_by < 1 {
            return Err(Error::param("divide_by", "must be >= 1"));
        }
        if !(self.fiber_length > 0.0) {
            return Err(Error::param("fiber_length", "must be > 0"));
        }
        if !(self.gate > 0.0) || !(self.nu0 > 0.0) {
            return Err(Error::param("monitor", "gate and nu0 must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkTopology {
    pub spans: Vec<Span>,
    pub stations: Vec<RepeaterStation>,
    pub short_links: Vec<TwoWayMonitor>,
}

impl LinkTopology {
    pub fn validate(&self) -> Result<()> {
        for s in &self.spans {
            if !(s.length_km > 0.0) {
                return Err(Error::param("spans", format!("span `{}` length must be > 0", s.label)));
            }
            if !(s.loss_db_per_km >= 0.0) {
                return Err(Error::param("spans", format!("span `{}` loss must be >= 0", s.label)));
            }
        }
        for st in &self.stations {
            if !(st.interferometer_imbalance >= 0.0) {
                return Err(Error::param("stations", format!("station `{}` imbalance must be >= 0", st.label)));
            }
            if !st.aom_offset.is_finite() || !st.pll_offset.is_finite() {
                return Err(Error::param("stations", format!("station `{}` offsets must be finite", st.label)));
            }
        }
        self.short_links.iter().try_for_each(TwoWayMonitor::validate)
    }
}

/// Counted record of the divided round-trip beat: deviations in Hz from the
/// nominal counted frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatRecord {
    pub t0: f64,
    pub gate: f64,
    pub df_hz: Vec<f64>,
    pub valid: Vec<bool>,
}

impl BeatRecord {
    pub fn len(&self) -> usize {
        self.df_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df_hz.is_empty()
    }

    /// View as a series (values in Hz) for the shared file format.
    pub fn as_series(&self, nu0: f64) -> Result<FreqSeries> {
        FreqSeries::from_parts(self.t0, self.gate, nu0, self.df_hz.clone(), self.valid.clone())
    }

    pub fn from_series(s: &FreqSeries) -> Self {
        Self {
            t0: s.t0(),
            gate: s.gate(),
            df_hz: s.y().to_vec(),
            valid: s.valid().to_vec(),
        }
    }
}

/// One-way fractional correction from the counted round-trip record,
/// `divide_by * df / (2 nu0)`. Reciprocal fiber noise is assumed.
pub fn two_way_correction(counted: &BeatRecord, mon: &TwoWayMonitor) -> Result<FreqSeries> {
    mon.validate()?;
    if (counted.gate - mon.gate).abs() > 1e-12 * mon.gate {
        return Err(Error::TimebaseMismatch(format!(
            "record gate {} s, monitor gate {} s",
            counted.gate, mon.gate
        )));
    }
    let k = mon.divide_by as f64 / (2.0 * mon.nu0);
    let y = counted
        .df_hz
        .iter()
        .zip(&counted.valid)
        .map(|(&d, &ok)| if ok { d * k } else { INVALID })
        .collect();
    FreqSeries::from_parts(counted.t0, counted.gate, mon.nu0, y, counted.valid.clone())
}

/// PSD suppression of a post-corrected or compensated link with one-way
/// delay `delay`: `(2 pi f delay)^2 / 3`, for noise spread uniformly along
/// the fiber.
pub fn delay_suppression(f: f64, delay: f64) -> f64 {
    (2.0 * PI * f * delay).powi(2) / 3.0
}

/// Free-running noise of a link, as a model or as a measured curve.
#[derive(Debug, Clone)]
pub enum FreeRunning {
    Spec(NoiseSpec),
    Curve(StabilityCurve),
}

/// Least-squares power-law model of an ADEV curve under `kernel`. Only
/// non-negative coefficients are allowed; among equally good fits the one
/// with fewer terms and bluer noise wins (a single point is read as white
/// phase noise).
pub fn fit_power_law(curve: &StabilityCurve, kernel: Kernel) -> Result<NoiseSpec> {
    if curve.is_empty() {
        return Err(Error::param("curve", "no points to fit"));
    }
    let exps = [2, 1, 0, -1, -2];
    let n = curve.len();
    // rows weighted by 1/sigma^2 so every point counts in relative terms
    let mut basis = DMatrix::<f64>::zeros(n, exps.len());
    for (i, (tau, v)) in curve.points().enumerate() {
        if !(v > 0.0) {
            return Err(Error::param("curve", format!("deviation at tau {tau} must be > 0")));
        }
        for (j, &a) in exps.iter().enumerate() {
            basis[(i, j)] = psd_avar(&|f: f64| f.powi(a), tau, kernel) / (v * v);
        }
    }
    let norms: Vec<f64> = (0..exps.len()).map(|j| basis.column(j).norm()).collect();
    let target = DVector::<f64>::from_element(n, 1.0);

    let mut best: Option<(f64, usize, Vec<(i32, f64)>)> = None;
    for subset in 1u32..(1 << exps.len()) {
        let cols: Vec<usize> = (0..exps.len()).filter(|j| subset & (1 << j) != 0).collect();
        if cols.len() > n {
            continue;
        }
        let a = DMatrix::from_fn(n, cols.len(), |i, k| basis[(i, cols[k])] / norms[cols[k]]);
        let Ok(sol) = a.clone().svd(true, true).solve(&target, 1e-14) else {
            continue;
        };
        if sol.iter().any(|&x| !(x >= 0.0)) {
            continue;
        }
        let resid = (&a * &sol - &target).norm_squared();
        let coeffs: Vec<(i32, f64)> = cols
            .iter()
            .zip(sol.iter())
            .map(|(&j, &x)| (exps[j], x / norms[j]))
            .collect();
        let better = match &best {
            None => true,
            Some((r, size, _)) => resid < r - 1e-12 || (resid <= r + 1e-12 && cols.len() < *size),
        };
        if better {
            best = Some((resid, cols.len(), coeffs));
        }
    }
    let (_, _, coeffs) = best.ok_or_else(|| Error::param("curve", "no non-negative power-law fit"))?;
    let mut spec = NoiseSpec::quiet(0);
    for (a, h) in coeffs {
        spec.h.insert(a, h);
    }
    Ok(spec)
}

/// Stability left after two-way correction (or compensation) of a link with
/// one-way delay `delay`, given its free-running noise.
pub fn residual_floor(free: &FreeRunning, delay: f64, taus: &[f64], kernel: Kernel) -> Result<StabilityCurve> {
    if !(delay >= 0.0) {
        return Err(Error::param("delay", format!("must be >= 0, got {delay}")));
    }
    let spec = match free {
        FreeRunning::Spec(s) => {
            s.validate()?;
            s.clone()
        }
        FreeRunning::Curve(c) => fit_power_law(c, kernel)?,
    };
    let mut out = StabilityCurve::default();
    for &tau in taus {
        if !(tau > 0.0) {
            return Err(Error::param("taus", format!("tau must be > 0, got {tau}")));
        }
        let avar = psd_avar(&|f: f64| spec.psd(f) * delay_suppression(f, delay), tau, kernel);
        out.taus.push(tau);
        out.values.push(avar.max(0.0).sqrt());
        out.counts.push(1);
    }
    Ok(out)
}

/// Instability left by a thermally driven, uncompensated fiber section at
/// averaging time `tau`.
pub fn uncompensated_thermal_limit(tm: &ThermalModel, tau: f64) -> Result<f64> {
    tm.validate()?;
    if !(tau > 0.0) {
        return Err(Error::param("tau", format!("must be > 0, got {tau}")));
    }
    let fm = 1.0 / tm.temp_period;
    Ok(match tm.waveform {
        Waveform::Sinusoid => sinusoid_fm_adev(tm.peak_y(), fm, tau),
        Waveform::Triangle => {
            // square-wave frequency: odd harmonics, Allan variances add
            let peak = tm.peak_y();
            (1..2000)
                .step_by(2)
                .map(|k| {
                    let k = k as f64;
                    sinusoid_fm_adev(4.0 * peak / (PI * k), k * fm, tau).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBudget {
    pub total_db: f64,
    pub db_per_km: f64,
}

pub fn loss_budget(spans: &[Span]) -> Result<LossBudget> {
    if spans.is_empty() {
        return Err(Error::param("spans", "need at least one span"));
    }
    let length: f64 = spans.iter().map(|s| s.length_km).sum();
    let total_db: f64 = spans.iter().map(|s| s.length_km * s.loss_db_per_km).sum();
    if !(length > 0.0) {
        return Err(Error::param("spans", "total length must be > 0"));
    }
    Ok(LossBudget {
        total_db,
        db_per_km: total_db / length,
    })
}

/// Contribution of the RF reference used to count a beat note.
pub fn rf_reference_contribution(beat: f64, sigma_rf: f64, nu0: f64) -> Result<f64> {
    if !(beat >= 0.0) || !(sigma_rf >= 0.0) || !(nu0 > 0.0) {
        return Err(Error::param("rf_reference", "beat, sigma and nu0 must be positive"));
    }
    Ok(beat * sigma_rf / nu0)
}

/// Bias from de-synchronised measurements on a drifting laser.
pub fn desync_error(drift_hz_per_s: f64, dt: f64, nu0: f64) -> Result<f64> {
    if !(dt >= 0.0) || !(nu0 > 0.0) {
        return Err(Error::param("desync", "dt must be >= 0 and nu0 > 0"));
    }
    Ok(drift_hz_per_s * dt / nu0)
}

/// One step of a frequency plan.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanStage {
    /// Frequency shift applied `passes` times (2 for a double-passed AOM).
    Shift { label: String, offset_hz: f64, passes: u32 },
    /// Beat against a reference at `reference_hz` (same offset frame),
    /// optionally divided before counting.
    Detect { label: String, reference_hz: f64, divide_by: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyPlan {
    pub stages: Vec<PlanStage>,
    pub counter_max: f64,
    /// Pass bands available for the beat notes; empty means unrestricted.
    pub filter_bands: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    AboveCounter { counted_hz: f64, max_hz: f64 },
    OutsideFilters { beat_hz: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::AboveCounter { counted_hz, max_hz } => {
                write!(f, "counted {:.3} MHz above counter limit {:.3} MHz", counted_hz / 1e6, max_hz / 1e6)
            }
            Violation::OutsideFilters { beat_hz } => {
                write!(f, "beat {:.3} MHz outside every filter band", beat_hz / 1e6)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRow {
    pub label: String,
    pub cumulative_hz: f64,
    pub beat_hz: Option<f64>,
    pub counted_hz: Option<f64>,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanReport {
    pub rows: Vec<PlanRow>,
}

impl PlanReport {
    pub fn ok(&self) -> bool {
        self.rows.iter().all(|r| r.violations.is_empty())
    }

    /// Counted frequency of the first divided detection.
    pub fn monitor_hz(&self) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| matches!((r.beat_hz, r.counted_hz), (Some(b), Some(c)) if b != c))
            .and_then(|r| r.counted_hz)
    }

    pub fn flagged(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| !r.violations.is_empty())
            .map(|r| r.label.as_str())
            .collect()
    }
}

impl fmt::Display for PlanReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mhz = |v: Option<f64>| v.map(|x| format!("{:.6}", x / 1e6)).unwrap_or_else(|| "-".into());
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
        writeln!(
            f,
            "{:<width$}  {:>14}  {:>14}  {:>14}  status",
            "stage", "offset_MHz", "beat_MHz", "counted_MHz"
        )?;
        for r in &self.rows {
            let status = if r.violations.is_empty() {
                "ok".to_string()
            } else {
                r.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
            };
            writeln!(
                f,
                "{:<width$}  {:>14}  {:>14}  {:>14}  {}",
                r.label,
                format!("{:.6}", r.cumulative_hz / 1e6),
                mhz(r.beat_hz),
                mhz(r.counted_hz),
                status
            )?;
        }
        Ok(())
    }
}

/// Walk the plan, tracking the cumulative offset and checking every beat
/// against the filters and every counted frequency against the counter.
pub fn check_plan(plan: &FrequencyPlan) -> PlanReport {
    let mut offset = 0.0;
    let mut rows = Vec::with_capacity(plan.stages.len());
    for stage in &plan.stages {
        match stage {
            PlanStage::Shift { label, offset_hz, passes } => {
                offset += offset_hz * *passes as f64;
                rows.push(PlanRow {
                    label: label.clone(),
                    cumulative_hz: offset,
                    beat_hz: None,
                    counted_hz: None,
                    violations: Vec::new(),
                });
            }
            PlanStage::Detect { label, reference_hz, divide_by } => {
                let beat = (offset - reference_hz).abs();
                let counted = beat / (*divide_by).max(1) as f64;
                let mut violations = Vec::new();
                if !plan.filter_bands.is_empty()
                    && !plan.filter_bands.iter().any(|&(lo, hi)| beat >= lo && beat <= hi)
                {
                    violations.push(Violation::OutsideFilters { beat_hz: beat });
                }
                if counted > plan.counter_max {
                    violations.push(Violation::AboveCounter {
                        counted_hz: counted,
                        max_hz: plan.counter_max,
                    });
                }
                rows.push(PlanRow {
                    label: label.clone(),
                    cumulative_hz: offset,
                    beat_hz: Some(beat),
                    counted_hz: Some(counted),
                    violations,
                });
            }
        }
    }
    PlanReport { rows }
}

/// Noise recipe for one span.
#[derive(Debug, Clone, Default)]
pub struct SpanNoise {
    pub free_running: NoiseSpec,
    /// Measurement or interferometer floor added after compensation.
    pub floor: Option<NoiseSpec>,
}

/// Noise recipe for one monitored short link.
#[derive(Debug, Clone, Default)]
pub struct ShortLinkNoise {
    /// Reciprocal fiber noise (seen identically in both directions). Its
    /// slip and gap events act on the monitor tracking.
    pub reciprocal: NoiseSpec,
    /// Temperature-driven reciprocal path variation of the short fiber.
    pub thermal: Option<ThermalModel>,
    /// Section outside the round trip (e.g. between mirror and coupler).
    pub uncompensated: Option<ThermalModel>,
    pub nonreciprocal: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Default)]
pub struct LinkNoise {
    pub spans: Vec<SpanNoise>,
    pub short_links: Vec<ShortLinkNoise>,
    /// Environment of each station; its length is replaced by the
    /// interferometer imbalance.
    pub stations: Vec<Option<ThermalModel>>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// End-to-end series after subtracting the short-link corrections.
    pub remote: FreqSeries,
    /// Uncorrected end-to-end series.
    pub end_to_end: FreqSeries,
    /// Counted record of each short-link monitor.
    pub monitors: Vec<BeatRecord>,
}

/// Segments used to spread short-link noise along the fiber.
const SEGMENTS: usize = 8;

/// Simulate the link end to end.
///
/// Compensated spans contribute their delay-limited residual plus optional
/// floor; uncompensated spans their full free-running noise. Monitored
/// short links are simulated as fibers with noise spread along their length,
/// so the two-way correction leaves the delay-limited residual.
pub fn simulate_end_to_end(
    topo: &LinkTopology,
    noise_cfg: &LinkNoise,
    n: usize,
    gate: f64,
    t0: f64,
    nu0: f64,
    seed: u64,
) -> Result<Simulation> {
    topo.validate()?;
    if noise_cfg.spans.len() != topo.spans.len() {
        return Err(Error::Config(format!(
            "{} span noise recipes for {} spans",
            noise_cfg.spans.len(),
            topo.spans.len()
        )));
    }
    if noise_cfg.short_links.len() != topo.short_links.len() {
        return Err(Error::Config(format!(
            "{} short-link noise recipes for {} short links",
            noise_cfg.short_links.len(),
            topo.short_links.len()
        )));
    }
    if !noise_cfg.stations.is_empty() && noise_cfg.stations.len() != topo.stations.len() {
        return Err(Error::Config(format!(
            "{} station environments for {} stations",
            noise_cfg.stations.len(),
            topo.stations.len()
        )));
    }
    if n < 2 {
        return Err(Error::param("n", "need at least 2 samples"));
    }
    for m in &topo.short_links {
        if (m.gate - gate).abs() > 1e-12 * gate {
            return Err(Error::Config(format!("monitor `{}` gate differs from run gate", m.label)));
        }
    }

    let mut parts: Vec<FreqSeries> = Vec::new();
    for (i, (span, sn)) in topo.spans.iter().zip(&noise_cfg.spans).enumerate() {
        let seed = derive_seed(seed, &format!("span{i}"));
        parts.push(span_contribution(span, sn, n, gate, t0, nu0, seed)?);
    }
    for (i, (st, env)) in topo.stations.iter().zip(&noise_cfg.stations).enumerate() {
        if let Some(tm) = env {
            let tm = ThermalModel {
                length: st.interferometer_imbalance,
                nu0,
                ..*tm
            };
            let s = noise::thermal_phase_series(&tm, n, gate)?.with_t0(t0);
            log::debug!("station {i} imbalance contributes peak y {:.3e}", tm.peak_y());
            parts.push(s);
        }
    }
    let mut corrections = Vec::new();
    let mut monitors = Vec::new();
    for (i, (mon, sl)) in topo.short_links.iter().zip(&noise_cfg.short_links).enumerate() {
        let seed = derive_seed(seed, &format!("short{i}"));
        let mon = TwoWayMonitor { nu0, ..mon.clone() };
        let (raw, counted) = short_link(&mon, sl, n, gate, t0, seed)?;
        corrections.push(two_way_correction(&counted, &mon)?);
        parts.push(raw);
        monitors.push(counted);
    }
    let end_to_end = if parts.is_empty() {
        FreqSeries::zeros(t0, gate, nu0, n)?
    } else {
        noise::compose(&parts)?
    };
    let mut remote = end_to_end.clone();
    for c in &corrections {
        remote = apply_correction(&remote, c)?;
    }
    Ok(Simulation {
        remote,
        end_to_end,
        monitors,
    })
}

fn span_contribution(
    span: &Span,
    sn: &SpanNoise,
    n: usize,
    gate: f64,
    t0: f64,
    nu0: f64,
    seed: u64,
) -> Result<FreqSeries> {
    let free = NoiseSpec {
        seed,
        ..sn.free_running.clone()
    };
    free.validate()?;
    let mut s = if span.compensation.is_compensated() {
        let delay = span.delay();
        let mut rng = noise::rng(seed, 0);
        let mut sp = Spectrum::gaussian(n, gate, &mut rng);
        sp.shape_psd(|f| free.psd(f) * delay_suppression(f, delay));
        FreqSeries::from_parts(t0, gate, nu0, sp.to_samples(n), vec![true; n])?
    } else {
        noise::gen_power_law(&free, n, gate)?.with_t0(t0).with_nu0(nu0)?
    };
    if let Some(floor) = &sn.floor {
        let floor = NoiseSpec {
            seed: derive_seed(seed, "floor"),
            ..floor.clone()
        };
        let f = noise::realize(&floor, n, gate, t0, nu0)?;
        s = noise::compose(&[s, f])?;
    }
    let (slips, gaps) = noise::sample_events(&free, n, gate);
    let s = noise::inject_cycle_slips(&s, &slips)?;
    noise::inject_gaps(&s, &gaps)
}

/// Raw contribution of a short link to the far end and its counted record.
fn short_link(
    mon: &TwoWayMonitor,
    sl: &ShortLinkNoise,
    n: usize,
    gate: f64,
    t0: f64,
    seed: u64,
) -> Result<(FreqSeries, BeatRecord)> {
    let nu0 = mon.nu0;
    let spec = &sl.reciprocal;
    spec.validate()?;
    let velocity = C_LIGHT / GROUP_INDEX;
    // delay from each segment midpoint to the far end
    let delays: Vec<f64> = (0..SEGMENTS)
        .map(|k| {
            let z = (k as f64 + 0.5) * mon.fiber_length / SEGMENTS as f64;
            (mon.fiber_length - z) / velocity
        })
        .collect();

    let mut far = vec![0.0; n];
    let mut corr = vec![0.0; n];
    if spec.h.values().any(|&h| h > 0.0) {
        let mut far_sp: Option<Spectrum> = None;
        let mut corr_sp: Option<Spectrum> = None;
        for (k, &a) in delays.iter().enumerate() {
            let mut rng = noise::rng(derive_seed(seed, &format!("seg{k}")), 0);
            let mut seg = Spectrum::gaussian(n, gate, &mut rng);
            seg.shape_psd(|f| spec.psd(f) / SEGMENTS as f64);
            let mut f_part = seg.clone();
            f_part.shape(|f| Complex64::from_polar(1.0, -2.0 * PI * f * a));
            seg.shape(|f| Complex64::new((2.0 * PI * f * a).cos(), 0.0));
            match (&mut far_sp, &mut corr_sp) {
                (Some(fs), Some(cs)) => {
                    fs.add(&f_part);
                    cs.add(&seg);
                }
                _ => {
                    far_sp = Some(f_part);
                    corr_sp = Some(seg);
                }
            }
        }
        far = far_sp.expect("at least one segment").to_samples(n);
        corr = corr_sp.expect("at least one segment").to_samples(n);
    }
    // drift and sinusoids are slow enough to treat as lumped
    noise::add_deterministic(spec, &mut far, gate);
    noise::add_deterministic(spec, &mut corr, gate);

    if let Some(tm) = &sl.thermal {
        let seg_tm = ThermalModel {
            length: tm.length / SEGMENTS as f64,
            nu0,
            ..*tm
        };
        seg_tm.validate()?;
        for (i, (f, c)) in far.iter_mut().zip(corr.iter_mut()).enumerate() {
            let t = i as f64 * gate;
            for &a in &delays {
                let early = seg_tm.y(t - a);
                *f += early;
                *c += 0.5 * (early + seg_tm.y(t + a));
            }
        }
    }

    // counted record of the divided round trip, aligned on the far-end time
    let scale = 2.0 * nu0 / mon.divide_by as f64;
    let mut counted = BeatRecord {
        t0,
        gate,
        df_hz: corr.iter().map(|c| c * scale).collect(),
        valid: vec![true; n],
    };
    let (slips, gaps) = noise::sample_events(spec, n, gate);
    for (i, sign) in slips {
        // one cycle of the tracked carrier, after division
        counted.df_hz[i] += sign as f64 / (mon.divide_by as f64 * gate);
    }
    for (start, len) in gaps {
        for i in start..start + len {
            counted.df_hz[i] = INVALID;
            counted.valid[i] = false;
        }
    }

    let mut parts = vec![FreqSeries::from_parts(t0, gate, nu0, far, vec![true; n])?];
    if let Some(tm) = &sl.uncompensated {
        let tm = ThermalModel { nu0, ..*tm };
        parts.push(noise::thermal_phase_series(&tm, n, gate)?.with_t0(t0));
    }
    if let Some(nr) = &sl.nonreciprocal {
        let nr = NoiseSpec {
            seed: derive_seed(seed, "nonreciprocal"),
            ..nr.clone()
        };
        parts.push(noise::realize(&nr, n, gate, t0, nu0)?);
    }
    Ok((noise::compose(&parts)?, counted))
}

/// Check that a counted record and a comparison share a timebase.
pub fn check_alignment(counted: &BeatRecord, comparison: &FreqSeries) -> Result<()> {
    if counted.len() != comparison.len() {
        return Err(Error::TimebaseMismatch(format!(
            "{} counted samples vs {} comparison samples",
            counted.len(),
            comparison.len()
        )));
    }
    check_same_timebase(counted.t0, counted.gate, comparison.t0(), comparison.gate())
}
