//! Seeded synthesis of fractional-frequency disturbances.
//!
//! Power-law noise is produced by shaping complex Gaussian noise in the
//! Fourier domain with the one-sided PSD `S_y(f) = sum h_a f^a` and
//! transforming back. The record is generated on a zero-padded grid of at
//! least twice its length so the circular wrap of the FFT does not correlate
//! its two ends.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::constants::{C_LIGHT, DEFAULT_KAPPA, DEFAULT_NU0, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::series::FreqSeries;

/// Power-law exponents accepted in a [`NoiseSpec`].
pub const EXPONENTS: [i32; 5] = [-2, -1, 0, 1, 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    /// Peak fractional-frequency amplitude.
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GapModel {
    /// Expected gap starts per second.
    pub rate: f64,
    /// Mean gap duration in seconds (exponentially distributed).
    pub mean_duration: f64,
}

/// Recipe for one noise realization.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseSpec {
    /// `h_a` keyed by exponent `a`.
    pub h: BTreeMap<i32, f64>,
    /// Linear frequency drift, fractional frequency per second.
    pub drift_rate: f64,
    pub sinusoids: Vec<Sinusoid>,
    /// Expected cycle slips per second.
    pub slip_rate: f64,
    pub gaps: GapModel,
    pub seed: u64,
}

/// `integral_0^{1/2} u^2 sin^2(pi u) du`
const WHITE_PM_SAMPLED: f64 = 1.0 / 48.0 + 1.0 / (8.0 * PI * PI);

impl NoiseSpec {
    pub fn quiet(seed: u64) -> Self {
        Self {
            seed,
            ..Default::default()
        }
    }

    pub fn with_h(mut self, exponent: i32, h: f64) -> Self {
        self.h.insert(exponent, h);
        self
    }

    /// White phase noise whose sampled ADEV at `tau = gate` is `adev`.
    pub fn white_pm(adev: f64, gate: f64, seed: u64) -> Self {
        Self::quiet(seed).with_h(2, white_pm_h2(adev, gate))
    }

    /// White frequency noise whose ADEV at `tau = gate` is `adev`.
    pub fn white_fm(adev: f64, gate: f64, seed: u64) -> Self {
        Self::quiet(seed).with_h(0, 2.0 * adev * adev * gate)
    }

    pub fn validate(&self) -> Result<()> {
        for (&a, &h) in &self.h {
            if !EXPONENTS.contains(&a) {
                return Err(Error::param("h", format!("exponent {a} outside -2..=2")));
            }
            if !(h >= 0.0) || !h.is_finite() {
                return Err(Error::param("h", format!("h_{a} = {h} must be finite and >= 0")));
            }
        }
        for s in &self.sinusoids {
            if !(s.period > 0.0) {
                return Err(Error::param("sinusoids", format!("period {} must be > 0", s.period)));
            }
        }
        if !(self.slip_rate >= 0.0) {
            return Err(Error::param("slip_rate", "must be >= 0"));
        }
        if !(self.gaps.rate >= 0.0) || !(self.gaps.mean_duration >= 0.0) {
            return Err(Error::param("gaps", "rate and mean duration must be >= 0"));
        }
        Ok(())
    }

    /// One-sided PSD of the power-law part at Fourier frequency `f`.
    pub fn psd(&self, f: f64) -> f64 {
        self.h.iter().map(|(&a, &h)| h * f.powi(a)).sum()
    }

    fn has_power_law(&self) -> bool {
        self.h.values().any(|&h| h > 0.0)
    }
}

/// `h_2` giving a sampled white-PM series an ADEV of `adev` at `tau = gate`.
pub fn white_pm_h2(adev: f64, gate: f64) -> f64 {
    adev * adev * gate.powi(3) / (2.0 * WHITE_PM_SAMPLED)
}

/// Deterministic stream for `seed`. Stream 0 drives noise, stream 1 events.
pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Derive an independent seed for a named sub-component.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, folded through splitmix64
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Positive-frequency half of a random spectrum on an FFT grid of `m`
/// points. Bin `k` (for `0 < k < m/2`) holds the complex amplitude at
/// `f_k = k / (m * gate)`; DC and Nyquist stay zero.
#[derive(Debug, Clone)]
pub struct Spectrum {
    m: usize,
    gate: f64,
    bins: Vec<Complex64>,
}

impl Spectrum {
    /// Complex Gaussian spectrum with unit one-sided PSD.
    pub fn gaussian(n: usize, gate: f64, rng: &mut impl Rng) -> Self {
        let m = (2 * n).next_power_of_two().max(4);
        let df = 1.0 / (m as f64 * gate);
        // a bin pair of amplitude c contributes variance 2 c^2 = S df
        let c = (df / 2.0).sqrt();
        let mut bins = vec![Complex64::new(0.0, 0.0); m / 2 + 1];
        for b in bins.iter_mut().take(m / 2).skip(1) {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *b = Complex64::new(re, im) * (c / 2f64.sqrt());
        }
        Self { m, gate, bins }
    }

    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 / (self.m as f64 * self.gate)
    }

    /// Multiply bin `k` by `g(f_k)`.
    pub fn shape(&mut self, g: impl Fn(f64) -> Complex64) {
        let (m, gate) = (self.m, self.gate);
        for (k, b) in self.bins.iter_mut().enumerate().take(m / 2).skip(1) {
            *b *= g(k as f64 / (m as f64 * gate));
        }
    }

    /// Scale amplitudes by `sqrt(psd(f))`.
    pub fn shape_psd(&mut self, psd: impl Fn(f64) -> f64) {
        self.shape(|f| Complex64::new(psd(f).max(0.0).sqrt(), 0.0));
    }

    pub fn add(&mut self, other: &Spectrum) {
        debug_assert_eq!(self.m, other.m);
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
    }

    pub fn scaled(&self, c: f64) -> Spectrum {
        let mut out = self.clone();
        out.bins.iter_mut().for_each(|b| *b *= c);
        out
    }

    /// First `n` samples of the real time series.
    pub fn to_samples(&self, n: usize) -> Vec<f64> {
        let m = self.m;
        let mut full = vec![Complex64::new(0.0, 0.0); m];
        for k in 1..m / 2 {
            full[k] = self.bins[k];
            full[m - k] = self.bins[k].conj();
        }
        FftPlanner::new().plan_fft_inverse(m).process(&mut full);
        full.iter().take(n).map(|c| c.re).collect()
    }
}

/// Power-law noise plus drift and sinusoids, without events.
pub fn gen_power_law(spec: &NoiseSpec, n: usize, gate: f64) -> Result<FreqSeries> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::param("n", format!("need at least 2 samples, got {n}")));
    }
    if !(gate > 0.0) {
        return Err(Error::param("gate", format!("must be > 0, got {gate}")));
    }
    let mut y = if spec.has_power_law() {
        let mut r = rng(spec.seed, 0);
        let mut sp = Spectrum::gaussian(n, gate, &mut r);
        sp.shape_psd(|f| spec.psd(f));
        sp.to_samples(n)
    } else {
        vec![0.0; n]
    };
    add_deterministic(spec, &mut y, gate);
    FreqSeries::new(0.0, gate, y)
}

pub(crate) fn add_deterministic(spec: &NoiseSpec, y: &mut [f64], gate: f64) {
    for (i, v) in y.iter_mut().enumerate() {
        let t = i as f64 * gate;
        *v += spec.drift_rate * t;
        for s in &spec.sinusoids {
            *v += s.amplitude * (2.0 * PI * t / s.period + s.phase).sin();
        }
    }
}

/// Random slip and gap events for a record of `n` samples.
pub fn sample_events(spec: &NoiseSpec, n: usize, gate: f64) -> (Vec<(usize, i32)>, Vec<(usize, usize)>) {
    let mut r = rng(spec.seed, 1);
    let span = n as f64 * gate;
    let mut slips = Vec::new();
    if spec.slip_rate > 0.0 {
        let wait = Exp::new(spec.slip_rate).expect("positive rate");
        let mut t = wait.sample(&mut r);
        while t < span {
            let sign = if r.random::<bool>() { 1 } else { -1 };
            slips.push(((t / gate) as usize, sign));
            t += wait.sample(&mut r);
        }
    }
    let mut gaps = Vec::new();
    if spec.gaps.rate > 0.0 && spec.gaps.mean_duration > 0.0 {
        let wait = Exp::new(spec.gaps.rate).expect("positive rate");
        let dur = Exp::new(1.0 / spec.gaps.mean_duration).expect("positive duration");
        let mut t = wait.sample(&mut r);
        while t < span {
            let start = (t / gate) as usize;
            let len = ((dur.sample(&mut r) / gate).round() as usize).max(1).min(n - start);
            gaps.push((start, len));
            t += len as f64 * gate + wait.sample(&mut r);
        }
    }
    (slips, gaps)
}

/// Full realization: power law, drift, sinusoids, slips and gaps.
pub fn realize(spec: &NoiseSpec, n: usize, gate: f64, t0: f64, nu0: f64) -> Result<FreqSeries> {
    let base = gen_power_law(spec, n, gate)?.with_t0(t0).with_nu0(nu0)?;
    let (slips, gaps) = sample_events(spec, n, gate);
    let slipped = inject_cycle_slips(&base, &slips)?;
    inject_gaps(&slipped, &gaps)
}

/// How a quoted temperature excursion maps onto the waveform amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmplitudeConvention {
    Peak,
    #[default]
    PeakToPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Waveform {
    #[default]
    Sinusoid,
    /// Linear ramps between the extremes.
    Triangle,
}

/// Temperature-driven optical path variation of a fiber section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalModel {
    pub length: f64,
    /// Relative optical path change per kelvin.
    pub kappa: f64,
    /// Peak temperature excursion (K).
    pub temp_amplitude: f64,
    pub temp_period: f64,
    pub temp_phase: f64,
    pub nu0: f64,
    pub waveform: Waveform,
}

impl ThermalModel {
    /// Daily cycle of a fiber section; `excursion` is read with `convention`.
    pub fn daily(length: f64, excursion: f64, convention: AmplitudeConvention) -> Self {
        let temp_amplitude = match convention {
            AmplitudeConvention::Peak => excursion,
            AmplitudeConvention::PeakToPeak => excursion / 2.0,
        };
        Self {
            length,
            kappa: DEFAULT_KAPPA,
            temp_amplitude,
            temp_period: SECONDS_PER_DAY,
            temp_phase: 0.0,
            nu0: DEFAULT_NU0,
            waveform: Waveform::Sinusoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length >= 0.0) {
            return Err(Error::param("length", "must be >= 0"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::param("kappa", "must be > 0"));
        }
        if !(self.temp_period > 0.0) {
            return Err(Error::param("temp_period", "must be > 0"));
        }
        if !(self.nu0 > 0.0) {
            return Err(Error::param("nu0", "must be > 0"));
        }
        Ok(())
    }

    fn omega(&self) -> f64 {
        2.0 * PI / self.temp_period
    }

    /// Temperature excursion at time `t` (K).
    pub fn temperature(&self, t: f64) -> f64 {
        let th = self.omega() * t + self.temp_phase;
        match self.waveform {
            Waveform::Sinusoid => self.temp_amplitude * th.sin(),
            Waveform::Triangle => self.temp_amplitude * (2.0 / PI) * th.sin().asin(),
        }
    }

    /// Optical phase in cycles at time `t`.
    pub fn phase_cycles(&self, t: f64) -> f64 {
        self.nu0 / C_LIGHT * self.length * self.kappa * self.temperature(t)
    }

    /// Fractional frequency, the time derivative of the phase over `nu0`.
    pub fn y(&self, t: f64) -> f64 {
        let th = self.omega() * t + self.temp_phase;
        let slope = match self.waveform {
            Waveform::Sinusoid => th.cos(),
            Waveform::Triangle => (2.0 / PI) * th.cos().signum(),
        };
        self.length * self.kappa * self.temp_amplitude * self.omega() * slope / C_LIGHT
    }

    /// Peak of `|y|`.
    pub fn peak_y(&self) -> f64 {
        let shape = match self.waveform {
            Waveform::Sinusoid => 1.0,
            Waveform::Triangle => 2.0 / PI,
        };
        self.length * self.kappa * self.temp_amplitude * self.omega() * shape / C_LIGHT
    }
}

/// Sampled fractional frequency of a thermal model, sample `i` at `i * gate`.
pub fn thermal_phase_series(tm: &ThermalModel, n: usize, gate: f64) -> Result<FreqSeries> {
    tm.validate()?;
    let y = (0..n).map(|i| tm.y(i as f64 * gate)).collect();
    FreqSeries::new(0.0, gate, y)?.with_nu0(tm.nu0)
}

/// Frequency hop of one optical cycle counted over one gate.
pub fn slip_step(gate: f64, nu0: f64) -> f64 {
    1.0 / (gate * nu0)
}

/// Add `sign` cycles at each listed sample.
pub fn inject_cycle_slips(s: &FreqSeries, slips: &[(usize, i32)]) -> Result<FreqSeries> {
    let step = slip_step(s.gate(), s.nu0());
    let mut out = s.clone();
    let n = out.len();
    let y = out.y_mut();
    for &(i, sign) in slips {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        y[i] += sign as f64 * step;
    }
    Ok(out)
}

/// Invalidate the union of `(start, length)` ranges.
pub fn inject_gaps(s: &FreqSeries, gaps: &[(usize, usize)]) -> Result<FreqSeries> {
    let n = s.len();
    for &(start, len) in gaps {
        if start.checked_add(len).is_none_or(|end| end > n) {
            return Err(Error::IndexOutOfRange {
                index: start.saturating_add(len),
                len: n,
            });
        }
    }
    let mut out = s.clone();
    for &(start, len) in gaps {
        for i in start..start + len {
            out.invalidate(i)?;
        }
    }
    Ok(out)
}

/// Pointwise sum of records on one timebase; validity is the AND.
pub fn compose(parts: &[FreqSeries]) -> Result<FreqSeries> {
    let first = parts.first().ok_or(Error::EmptySeries)?;
    for p in &parts[1..] {
        if !first.same_timebase(p) {
            return Err(Error::TimebaseMismatch(format!(
                "cannot compose {} samples at t0={} with {} samples at t0={}",
                first.len(),
                first.t0(),
                p.len(),
                p.t0()
            )));
        }
        if (p.nu0() - first.nu0()).abs() > 1e-9 * first.nu0() {
            return Err(Error::TimebaseMismatch("carrier frequencies differ".into()));
        }
    }
    let n = first.len();
    let mut y = vec![0.0; n];
    let mut valid = vec![true; n];
    for p in parts {
        for i in 0..n {
            y[i] += p.y()[i];
            valid[i] &= p.valid()[i];
        }
    }
    FreqSeries::from_parts(first.t0(), first.gate(), first.nu0(), y, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::{adev, mdev, Kernel};

    fn log_slope(taus: &[f64], vals: &[f64]) -> f64 {
        let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
        let ys: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn quiet_spec_is_zero() {
        let s = gen_power_law(&NoiseSpec::quiet(1), 100, 1.0).unwrap();
        assert!(s.y().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let spec = NoiseSpec::white_fm(1e-15, 1.0, 42).with_h(-1, 1e-33);
        let a = realize(&spec, 5000, 1.0, 0.0, DEFAULT_NU0).unwrap();
        let b = realize(&spec, 5000, 1.0, 0.0, DEFAULT_NU0).unwrap();
        assert_eq!(a.y().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.y().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let c = realize(&NoiseSpec { seed: 43, ..spec }, 5000, 1.0, 0.0, DEFAULT_NU0).unwrap();
        assert_ne!(a.y(), c.y());
    }

    #[test]
    fn white_fm_scaling() {
        let s = gen_power_law(&NoiseSpec::white_fm(1e-15, 1.0, 7), 200_000, 1.0).unwrap();
        let c = adev(&s, &[1.0, 100.0]).unwrap();
        assert!((c.values[0] / 1e-15 - 1.0).abs() < 0.02, "{:?}", c.values);
        assert!((c.values[1] / 1e-16 - 1.0).abs() < 0.05, "{:?}", c.values);
    }

    #[test]
    fn white_pm_calibration_and_mdev_slope() {
        let s = gen_power_law(&NoiseSpec::white_pm(2.3e-16, 1.0, 3), 200_000, 1.0).unwrap();
        let a = adev(&s, &[1.0]).unwrap();
        assert!((a.values[0] / 2.3e-16 - 1.0).abs() < 0.03, "{:?}", a.values);
        let taus = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];
        let m = mdev(&s, &taus).unwrap();
        let slope = log_slope(&m.taus, &m.values);
        assert!((slope + 1.5).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn white_pm_h2_matches_sampled_kernel() {
        let h2 = white_pm_h2(1.0, 1.0);
        let k = crate::stability::psd_adev(|f| h2 * f * f, 1.0, Kernel::Sampled { gate: 1.0 });
        assert!((k - 1.0).abs() < 1e-6, "{k}");
    }

    #[test]
    fn thermal_matches_derivative_of_phase() {
        let tm = ThermalModel::daily(5.0, 1.6, AmplitudeConvention::PeakToPeak);
        for i in 0..50 {
            let t = i as f64 * 1733.0;
            let h = 1e-2;
            let num = (tm.phase_cycles(t + h) - tm.phase_cycles(t - h)) / (2.0 * h) / tm.nu0;
            let y = tm.y(t);
            assert!((num - y).abs() <= 1e-6 * tm.peak_y(), "{num} vs {y}");
        }
        // closed form of the sinusoid derivative
        let s = thermal_phase_series(&tm, 1000, 60.0).unwrap();
        let w = 2.0 * PI / tm.temp_period;
        for (i, &y) in s.y().iter().enumerate() {
            let exact = tm.length * tm.kappa * tm.temp_amplitude * w * (w * i as f64 * 60.0).cos() / C_LIGHT;
            assert!((y - exact).abs() <= 1e-12 * exact.abs().max(tm.peak_y() * 1e-3));
        }
    }

    #[test]
    fn thermal_zero_amplitude_and_half_day_ramp() {
        let mut tm = ThermalModel::daily(1.0, 0.0, AmplitudeConvention::Peak);
        assert!(thermal_phase_series(&tm, 100, 1.0).unwrap().y().iter().all(|&v| v == 0.0));
        // 0.5 K swings over each half day
        tm = ThermalModel::daily(1.0, 0.5, AmplitudeConvention::PeakToPeak);
        let s = thermal_phase_series(&tm, 86_400, 1.0).unwrap();
        let mean_abs = s.y().iter().map(|v| v.abs()).sum::<f64>() / s.len() as f64;
        let ramp = 1.0 * 1.1e-5 * (0.5 / 43_200.0) / C_LIGHT;
        assert!((mean_abs / ramp - 1.0).abs() < 1e-3, "{mean_abs} vs {ramp}");
        assert!((mean_abs / 4.3e-19 - 1.0).abs() < 0.15);
        tm.waveform = Waveform::Triangle;
        let tri = thermal_phase_series(&tm, 86_400, 1.0).unwrap();
        assert!(tri.y().iter().all(|v| (v.abs() / ramp - 1.0).abs() < 1e-9));
    }

    #[test]
    fn slips() {
        let s = FreqSeries::zeros(0.0, 1.0, 194.4e12, 10).unwrap();
        let one = inject_cycle_slips(&s, &[(4, 1)]).unwrap();
        assert!((one.y()[4] - 5.144e-15).abs() < 1e-18);
        assert_eq!(one.y().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(inject_cycle_slips(&s, &[]).unwrap(), s);
        assert_eq!(inject_cycle_slips(&s, &[(3, 1), (3, -1)]).unwrap(), s);
        assert!(matches!(inject_cycle_slips(&s, &[(10, 1)]), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn gaps() {
        let s = FreqSeries::zeros(0.0, 1.0, 194.4e12, 1000).unwrap();
        assert_eq!(inject_gaps(&s, &[]).unwrap().uptime(), 1.0);
        assert!((inject_gaps(&s, &[(100, 15)]).unwrap().uptime() - 0.985).abs() < 1e-12);
        let u = inject_gaps(&s, &[(100, 20), (110, 20)]).unwrap();
        assert_eq!(u.valid_count(), 970);
        assert!(inject_gaps(&s, &[(995, 10)]).is_err());
    }

    #[test]
    fn compose_examples() {
        let s = gen_power_law(&NoiseSpec::white_fm(1e-15, 1.0, 9), 256, 1.0).unwrap();
        let zero = FreqSeries::zeros(0.0, 1.0, s.nu0(), 256).unwrap();
        assert_eq!(compose(&[zero.clone(), s.clone()]).unwrap(), s);
        let diff = compose(&[s.clone(), s.scaled(-1.0)]).unwrap();
        assert!(diff.y().iter().all(|&v| v == 0.0));
        let short = FreqSeries::zeros(0.0, 1.0, s.nu0(), 10).unwrap();
        assert!(compose(&[s, short]).is_err());
    }

    #[test]
    fn events_follow_rates() {
        let spec = NoiseSpec {
            slip_rate: 1e-3,
            gaps: GapModel {
                rate: 1e-4,
                mean_duration: 100.0,
            },
            ..NoiseSpec::quiet(5)
        };
        let (slips, gaps) = sample_events(&spec, 1_000_000, 1.0);
        assert!((800..1200).contains(&slips.len()), "{}", slips.len());
        assert!((70..130).contains(&gaps.len()), "{}", gaps.len());
    }
}
