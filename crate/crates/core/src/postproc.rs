//! Data validation: bandwidth filtering, the three-observable selection,
//! uptime accounting and uncertainty budgets.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::noise;
use crate::series::{
    centered, check_same_timebase, mask_and, rolling_mean, rolling_std, window_samples, FreqSeries,
    ValidityMask, INVALID,
};

/// Reason bits of the selection sidecar.
pub const REASON_COARSE: u8 = 1;
pub const REASON_MEAN: u8 = 2;
pub const REASON_STD: u8 = 4;
pub const REASON_QF: u8 = 8;

/// Reference the coarse filter measures deviations from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CenterPolicy {
    /// Fixed setpoint in Hz.
    Setpoint(f64),
    /// Centered rolling median of the valid samples.
    RollingMedian { window_s: f64 },
}

impl Default for CenterPolicy {
    fn default() -> Self {
        CenterPolicy::Setpoint(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Limit {
    /// Robust default derived from the observable itself.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    /// Hz; defines the quality factor.
    pub coarse_bw: f64,
    /// Hz; applied together with the coarse filter.
    pub fine_bw: f64,
    pub center: CenterPolicy,
    pub mean_window: f64,
    pub std_window: f64,
    pub qf_window: f64,
    pub mean_limit: Limit,
    pub std_limit: Limit,
    pub qf_limit: Limit,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            coarse_bw: 10.0,
            fine_bw: 1.0,
            center: CenterPolicy::default(),
            mean_window: 9.0,
            std_window: 2750.0,
            qf_window: 2750.0,
            mean_limit: Limit::Auto,
            std_limit: Limit::Auto,
            qf_limit: Limit::Fixed(0.1),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.coarse_bw > 0.0) || !(self.fine_bw > 0.0) {
            return Err(Error::param("bandwidth", "must be > 0"));
        }
        for (name, l) in [("mean_limit", self.mean_limit), ("std_limit", self.std_limit), ("qf_limit", self.qf_limit)] {
            if let Limit::Fixed(v) = l {
                if !(v >= 0.0) {
                    return Err(Error::param(name, format!("must be >= 0, got {v}")));
                }
            }
        }
        if let CenterPolicy::RollingMedian { window_s } = self.center {
            if !(window_s > 0.0) {
                return Err(Error::param("center", "median window must be > 0"));
            }
        }
        Ok(())
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

fn rolling_median_hz(s: &FreqSeries, window_s: f64) -> Result<Vec<f64>> {
    let w = window_samples(s, window_s)?;
    let (before, after) = centered(w);
    let n = s.len();
    let nu0 = s.nu0();
    let mut buf = Vec::with_capacity(w);
    Ok((0..n)
        .map(|i| {
            buf.clear();
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(n - 1);
            buf.extend((lo..=hi).filter(|&j| s.valid()[j]).map(|j| s.y()[j] * nu0));
            median(&mut buf).unwrap_or(0.0)
        })
        .collect())
}

/// Remove samples deviating from the center by more than `bw` Hz.
///
/// The returned series has the rejected samples invalidated; the mask is the
/// quality factor (true = kept, false for rejected or already-invalid input).
pub fn coarse_filter(s: &FreqSeries, bw: f64, center: CenterPolicy) -> Result<(FreqSeries, ValidityMask)> {
    if !(bw > 0.0) {
        return Err(Error::param("bw", format!("must be > 0, got {bw}")));
    }
    let centers: Vec<f64> = match center {
        CenterPolicy::Setpoint(c) => vec![c; s.len()],
        CenterPolicy::RollingMedian { window_s } => rolling_median_hz(s, window_s)?,
    };
    let nu0 = s.nu0();
    let bits: Vec<bool> = s
        .y()
        .iter()
        .zip(s.valid())
        .zip(&centers)
        .map(|((&y, &ok), &c)| ok && (y * nu0 - c).abs() <= bw)
        .collect();
    let mask = ValidityMask::new(s.t0(), s.gate(), bits)?;
    Ok((s.masked(&mask)?, mask))
}

/// Observables of the selection, kept for plotting.
#[derive(Debug, Clone)]
pub struct Observables {
    /// 0/1 quality factor; invalid where the input was.
    pub quality: FreqSeries,
    pub rolling_mean: FreqSeries,
    pub rolling_std: FreqSeries,
    pub qf_std: FreqSeries,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    /// Center of the rolling-mean test.
    pub mean_center: f64,
    pub mean: f64,
    pub std: f64,
    pub qf: f64,
}

#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub mask: ValidityMask,
    /// Per-sample OR of the reason bits that rejected it.
    pub reasons: Vec<u8>,
    pub observables: Observables,
    pub limits: Limits,
}

impl SelectionOutcome {
    /// Mask of samples passing the step with reason `bit`.
    pub fn step_mask(&self, bit: u8) -> ValidityMask {
        ValidityMask {
            t0: self.mask.t0,
            gate: self.mask.gate,
            bits: self.reasons.iter().map(|r| r & bit == 0).collect(),
        }
    }

    pub fn removed(&self) -> usize {
        self.mask.len() - self.mask.kept()
    }

    /// The input series with rejected samples invalidated.
    pub fn apply(&self, s: &FreqSeries) -> Result<FreqSeries> {
        s.masked(&self.mask)
    }
}

fn valid_vec(s: &FreqSeries) -> Vec<f64> {
    s.valid_values().collect()
}

/// Three-observable selection: bandwidth filters, then thresholds on the
/// rolling mean, the rolling standard deviation and the rolling standard
/// deviation of the quality factor.
///
/// Samples whose observable is undefined (series edges, sparse windows) are
/// rejected by that step.
pub fn three_observable_select(s: &FreqSeries, cfg: &SelectionConfig) -> Result<SelectionOutcome> {
    cfg.validate()?;
    if s.is_empty() {
        return Err(Error::EmptySeries);
    }
    if s.valid_count() == 0 {
        return Err(Error::NoValidSamples);
    }
    for w in [cfg.mean_window, cfg.std_window, cfg.qf_window] {
        window_samples(s, w)?;
    }
    let n = s.len();

    let (_, quality_mask) = coarse_filter(s, cfg.coarse_bw, cfg.center)?;
    let (filtered, fine_mask) = if cfg.fine_bw < cfg.coarse_bw {
        coarse_filter(s, cfg.fine_bw, cfg.center)?
    } else {
        (s.masked(&quality_mask)?, quality_mask.clone())
    };
    if filtered.valid_count() == 0 {
        return Err(Error::NoValidSamples);
    }

    let q: Vec<f64> = (0..n)
        .map(|i| match (s.valid()[i], quality_mask.bits[i]) {
            (false, _) => INVALID,
            (true, true) => 1.0,
            (true, false) => 0.0,
        })
        .collect();
    let quality = FreqSeries::from_parts(s.t0(), s.gate(), s.nu0(), q, s.valid().to_vec())?;

    let mean_obs = rolling_mean(&filtered, cfg.mean_window)?;
    let std_obs = rolling_std(&filtered, cfg.std_window)?;
    let qf_obs = rolling_std(&quality, cfg.qf_window)?;

    let mean_center = median(&mut valid_vec(&mean_obs)).unwrap_or(0.0);
    let mean_limit = match cfg.mean_limit {
        Limit::Fixed(v) => v,
        Limit::Auto => {
            let mut dev: Vec<f64> = mean_obs.valid_values().map(|v| (v - mean_center).abs()).collect();
            5.0 * 1.4826 * median(&mut dev).unwrap_or(0.0)
        }
    };
    let std_limit = match cfg.std_limit {
        Limit::Fixed(v) => v,
        Limit::Auto => 2.0 * median(&mut valid_vec(&std_obs)).unwrap_or(0.0),
    };
    let qf_limit = match cfg.qf_limit {
        Limit::Fixed(v) => v,
        Limit::Auto => 0.1,
    };

    let mut reasons = vec![0u8; n];
    for i in 0..n {
        let mut r = 0;
        if !fine_mask.bits[i] {
            r |= REASON_COARSE;
        }
        if !mean_obs.valid()[i] || (mean_obs.y()[i] - mean_center).abs() > mean_limit {
            r |= REASON_MEAN;
        }
        if !std_obs.valid()[i] || std_obs.y()[i] > std_limit {
            r |= REASON_STD;
        }
        if !qf_obs.valid()[i] || qf_obs.y()[i] > qf_limit {
            r |= REASON_QF;
        }
        reasons[i] = r;
    }
    let mask = ValidityMask::new(s.t0(), s.gate(), reasons.iter().map(|&r| r == 0).collect())?;
    log::info!(
        "selection kept {} of {} samples (limits: mean {:.3e}, std {:.3e}, qf {:.3})",
        mask.kept(),
        n,
        mean_limit,
        std_limit,
        qf_limit
    );
    Ok(SelectionOutcome {
        mask,
        reasons,
        observables: Observables {
            quality,
            rolling_mean: mean_obs,
            rolling_std: std_obs,
            qf_std: qf_obs,
        },
        limits: Limits {
            mean_center,
            mean: mean_limit,
            std: std_limit,
            qf: qf_limit,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UptimeReport {
    pub per_element: Vec<(String, f64)>,
    pub combined: f64,
    /// Samples in the common interval.
    pub samples: usize,
}

/// Uptime of each element and of their conjunction over the common interval.
pub fn uptime(masks: &[(String, ValidityMask)]) -> Result<UptimeReport> {
    let (_, first) = masks.first().ok_or_else(|| Error::param("masks", "need at least one mask"))?;
    let mut frame = ValidityMask::all(first.t0, first.gate, first.len(), true);
    for (_, m) in &masks[1..] {
        frame = mask_and(&frame, &ValidityMask::all(m.t0, m.gate, m.len(), true))?;
    }
    let mut combined = frame.clone();
    let mut per_element = Vec::with_capacity(masks.len());
    for (label, m) in masks {
        let clipped = mask_and(&frame, m)?;
        per_element.push((label.clone(), clipped.uptime()));
        combined = mask_and(&combined, &clipped)?;
    }
    Ok(UptimeReport {
        per_element,
        combined: combined.uptime(),
        samples: combined.len(),
    })
}

pub fn uptime_product(fractions: &[f64]) -> Result<f64> {
    if let Some(&bad) = fractions.iter().find(|&&u| !(0.0..=1.0).contains(&u)) {
        return Err(Error::param("uptime", format!("fraction {bad} outside [0, 1]")));
    }
    Ok(fractions.iter().product())
}

/// Seeded on/off mask from an alternating renewal process with exponential
/// up and down times, reaching `target` uptime on average.
pub fn renewal_mask(
    target: f64,
    mean_outage_s: f64,
    n: usize,
    gate: f64,
    t0: f64,
    seed: u64,
) -> Result<ValidityMask> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::param("uptime", format!("target {target} outside [0, 1]")));
    }
    if !(mean_outage_s > 0.0) {
        return Err(Error::param("mean_outage", "must be > 0"));
    }
    if target == 1.0 || target == 0.0 {
        return ValidityMask::new(t0, gate, vec![target == 1.0; n]);
    }
    let mean_up = mean_outage_s * target / (1.0 - target);
    let up = Exp::new(1.0 / mean_up).expect("positive mean");
    let down = Exp::new(1.0 / mean_outage_s).expect("positive mean");
    let mut rng = noise::rng(seed, 1);
    let span = n as f64 * gate;
    let mut bits = vec![true; n];
    // start in the stationary state
    let mut t = if rng.random::<f64>() < target { up.sample(&mut rng) } else { 0.0 };
    while t < span {
        let end = t + down.sample(&mut rng);
        let a = (t / gate).round() as usize;
        let b = ((end / gate).round() as usize).min(n);
        bits[a.min(n)..b].iter_mut().for_each(|x| *x = false);
        t = end + up.sample(&mut rng);
    }
    ValidityMask::new(t0, gate, bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Policy {
    Quadrature,
    #[default]
    ConservativeCeiling,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadrature" => Ok(Policy::Quadrature),
            "conservative" | "ceiling" | "conservative_ceiling" => Ok(Policy::ConservativeCeiling),
            other => Err(Error::param("policy", format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetEntry {
    pub label: String,
    pub bias: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UncertaintyBudget {
    pub entries: Vec<BudgetEntry>,
    pub policy: Policy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetTotal {
    pub bias: f64,
    pub quadrature: f64,
    /// Uncertainty under the budget's policy.
    pub uncertainty: f64,
}

/// Round up to one significant digit. Values already on a one-digit grid
/// (to within 1e-12 relative) are kept.
pub fn ceil_one_digit(x: f64) -> f64 {
    if x <= 0.0 || !x.is_finite() {
        return x.max(0.0);
    }
    let e = x.log10().floor();
    let scale = 10f64.powf(e);
    let mantissa = x / scale;
    let digit = (mantissa * (1.0 - 1e-12)).ceil();
    digit * scale
}

pub fn combine_budget(b: &UncertaintyBudget) -> Result<BudgetTotal> {
    if b.entries.is_empty() {
        return Err(Error::param("budget", "need at least one entry"));
    }
    if let Some(e) = b.entries.iter().find(|e| !(e.uncertainty >= 0.0) || !e.bias.is_finite()) {
        return Err(Error::param("budget", format!("entry `{}` has an invalid value", e.label)));
    }
    let bias = b.entries.iter().map(|e| e.bias).sum();
    let quadrature = b.entries.iter().map(|e| e.uncertainty.powi(2)).sum::<f64>().sqrt();
    let uncertainty = match b.policy {
        Policy::Quadrature => quadrature,
        Policy::ConservativeCeiling => ceil_one_digit(quadrature),
    };
    Ok(BudgetTotal {
        bias,
        quadrature,
        uncertainty,
    })
}

/// `comparison - correction` on an identical timebase; validity is the AND.
pub fn apply_correction(comparison: &FreqSeries, correction: &FreqSeries) -> Result<FreqSeries> {
    if comparison.len() != correction.len() {
        return Err(Error::TimebaseMismatch(format!(
            "{} vs {} samples",
            comparison.len(),
            correction.len()
        )));
    }
    check_same_timebase(comparison.t0(), comparison.gate(), correction.t0(), correction.gate())?;
    let (y, valid): (Vec<f64>, Vec<bool>) = comparison
        .y()
        .iter()
        .zip(correction.y())
        .zip(comparison.valid().iter().zip(correction.valid()))
        .map(|((&a, &b), (&va, &vb))| if va && vb { (a - b, true) } else { (INVALID, false) })
        .unzip();
    FreqSeries::from_parts(comparison.t0(), comparison.gate(), comparison.nu0(), y, valid)
}
