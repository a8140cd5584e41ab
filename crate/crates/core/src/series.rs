//! Time-series containers, rolling statistics, histograms and mask algebra.

use crate::constants::{DEFAULT_GATE, DEFAULT_NU0, SECONDS_PER_DAY};
use crate::error::{Error, Result};

/// Value stored in `y` for samples that carry no data.
pub const INVALID: f64 = f64::NAN;

/// Uniformly sampled fractional-frequency record.
///
/// Sample `i` is stamped `t0 + i * gate` (with `t0` in MJD and `gate` in
/// seconds). Samples whose `valid` flag is false are ignored by every
/// statistic, whatever their stored value.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqSeries {
    t0: f64,
    gate: f64,
    nu0: f64,
    y: Vec<f64>,
    valid: Vec<bool>,
}

impl FreqSeries {
    /// All-valid series with the default carrier frequency.
    pub fn new(t0: f64, gate: f64, y: Vec<f64>) -> Result<Self> {
        let valid = vec![true; y.len()];
        Self::from_parts(t0, gate, DEFAULT_NU0, y, valid)
    }

    pub fn from_parts(t0: f64, gate: f64, nu0: f64, y: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if !(gate > 0.0) || !gate.is_finite() {
            return Err(Error::param("gate", format!("must be > 0, got {gate}")));
        }
        if !(nu0 > 0.0) || !nu0.is_finite() {
            return Err(Error::param("nu0", format!("must be > 0, got {nu0}")));
        }
        if y.len() != valid.len() {
            return Err(Error::param(
                "valid",
                format!("length {} differs from y length {}", valid.len(), y.len()),
            ));
        }
        Ok(Self { t0, gate, nu0, y, valid })
    }

    /// All-zero series on the given timebase.
    pub fn zeros(t0: f64, gate: f64, nu0: f64, n: usize) -> Result<Self> {
        Self::from_parts(t0, gate, nu0, vec![0.0; n], vec![true; n])
    }

    pub fn with_nu0(mut self, nu0: f64) -> Result<Self> {
        if !(nu0 > 0.0) {
            return Err(Error::param("nu0", format!("must be > 0, got {nu0}")));
        }
        self.nu0 = nu0;
        Ok(self)
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn gate(&self) -> f64 {
        self.gate
    }

    pub fn nu0(&self) -> f64 {
        self.nu0
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Timestamp of sample `i` in MJD.
    pub fn timestamp(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.gate / SECONDS_PER_DAY
    }

    /// Duration covered by the record, in seconds.
    pub fn span(&self) -> f64 {
        self.len() as f64 * self.gate
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn uptime(&self) -> f64 {
        self.mask().uptime()
    }

    /// Valid values, in order.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.y
            .iter()
            .zip(&self.valid)
            .filter_map(|(&y, &v)| v.then_some(y))
    }

    /// Frequency deviations in Hz at the optical carrier, `y * nu0`.
    pub fn df_hz(&self) -> Vec<f64> {
        self.y.iter().map(|y| y * self.nu0).collect()
    }

    pub fn mask(&self) -> ValidityMask {
        ValidityMask {
            t0: self.t0,
            gate: self.gate,
            bits: self.valid.clone(),
        }
    }

    /// Copy with `y` multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.y.iter_mut().for_each(|y| *y *= c);
        out
    }

    /// Copy whose validity is the AND of the current flags and `mask`.
    /// The mask must share the series' timebase exactly.
    pub fn masked(&self, mask: &ValidityMask) -> Result<Self> {
        if mask.bits.len() != self.len() {
            return Err(Error::TimebaseMismatch(format!(
                "mask has {} samples, series has {}",
                mask.bits.len(),
                self.len()
            )));
        }
        check_same_timebase(self.t0, self.gate, mask.t0, mask.gate)?;
        let mut out = self.clone();
        for (v, &m) in out.valid.iter_mut().zip(&mask.bits) {
            *v &= m;
        }
        Ok(out)
    }

    /// Mark sample `i` invalid and overwrite it with the sentinel.
    pub fn invalidate(&mut self, i: usize) -> Result<()> {
        let len = self.len();
        match (self.y.get_mut(i), self.valid.get_mut(i)) {
            (Some(y), Some(v)) => {
                *y = INVALID;
                *v = false;
                Ok(())
            }
            _ => Err(Error::IndexOutOfRange { index: i, len }),
        }
    }

    pub fn y_mut(&mut self) -> &mut [f64] {
        &mut self.y
    }

    pub fn into_parts(self) -> (f64, f64, f64, Vec<f64>, Vec<bool>) {
        (self.t0, self.gate, self.nu0, self.y, self.valid)
    }

    /// True when `other` has the same start, gate and length.
    pub fn same_timebase(&self, other: &FreqSeries) -> bool {
        self.len() == other.len() && check_same_timebase(self.t0, self.gate, other.t0, other.gate).is_ok()
    }
}

pub(crate) fn check_same_timebase(t0a: f64, gate_a: f64, t0b: f64, gate_b: f64) -> Result<()> {
    if (gate_a - gate_b).abs() > 1e-12 * gate_a.max(gate_b) {
        return Err(Error::TimebaseMismatch(format!("gate {gate_a} s vs {gate_b} s")));
    }
    let shift = (t0b - t0a) * SECONDS_PER_DAY / gate_a;
    if shift.abs() > 1e-3 {
        return Err(Error::TimebaseMismatch(format!(
            "start epochs differ by {shift:.4} samples"
        )));
    }
    Ok(())
}

/// Boolean sample-quality flags on a timebase (true = usable).
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMask {
    pub t0: f64,
    pub gate: f64,
    pub bits: Vec<bool>,
}

impl ValidityMask {
    pub fn new(t0: f64, gate: f64, bits: Vec<bool>) -> Result<Self> {
        if !(gate > 0.0) {
            return Err(Error::param("gate", format!("must be > 0, got {gate}")));
        }
        Ok(Self { t0, gate, bits })
    }

    pub fn all(t0: f64, gate: f64, len: usize, value: bool) -> Self {
        Self { t0, gate, bits: vec![value; len] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Fraction of true samples; zero for an empty mask.
    pub fn uptime(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.kept() as f64 / self.bits.len() as f64
        }
    }
}

/// Sample offsets of the common interval of two records:
/// `(start in a, start in b, length)`.
pub(crate) fn overlap(
    t0a: f64,
    len_a: usize,
    t0b: f64,
    len_b: usize,
    gate: f64,
) -> Result<(usize, usize, usize)> {
    let shift = (t0b - t0a) * SECONDS_PER_DAY / gate;
    let k = shift.round();
    if (shift - k).abs() > 1e-3 {
        return Err(Error::TimebaseMismatch(format!(
            "sample grids are offset by a fraction of a gate ({shift:.4} samples)"
        )));
    }
    let k = k as i64;
    let (start_a, start_b) = if k >= 0 { (k, 0) } else { (0, -k) };
    let end_a = len_a as i64;
    let end_b = len_b as i64;
    let len = (end_a - start_a).min(end_b - start_b);
    if len <= 0 {
        return Err(Error::TimebaseMismatch("records do not overlap".into()));
    }
    Ok((start_a as usize, start_b as usize, len as usize))
}

/// Pointwise AND of two masks on their common interval.
pub fn mask_and(a: &ValidityMask, b: &ValidityMask) -> Result<ValidityMask> {
    if (a.gate - b.gate).abs() > 1e-12 * a.gate.max(b.gate) {
        return Err(Error::TimebaseMismatch(format!(
            "gate {} s vs {} s",
            a.gate, b.gate
        )));
    }
    let (sa, sb, len) = overlap(a.t0, a.len(), b.t0, b.len(), a.gate)?;
    let bits = a.bits[sa..sa + len]
        .iter()
        .zip(&b.bits[sb..sb + len])
        .map(|(&x, &y)| x && y)
        .collect();
    Ok(ValidityMask {
        t0: a.t0 + sa as f64 * a.gate / SECONDS_PER_DAY,
        gate: a.gate,
        bits,
    })
}

/// Number of samples a window of `window_s` seconds holds, checked against
/// the series span.
pub(crate) fn window_samples(s: &FreqSeries, window_s: f64) -> Result<usize> {
    if s.is_empty() {
        return Err(Error::EmptySeries);
    }
    let bad = || Error::BadWindow {
        window_s,
        span_s: s.span(),
        gate: s.gate(),
    };
    if !(window_s >= s.gate() * (1.0 - 1e-9)) || window_s > s.span() * (1.0 + 1e-9) {
        return Err(bad());
    }
    let w = (window_s / s.gate()).round().max(1.0) as usize;
    if w > s.len() {
        return Err(bad());
    }
    Ok(w)
}

/// Offsets `(before, after)` of a centered window of `w` samples. Even
/// windows reach one sample further into the past.
pub(crate) fn centered(w: usize) -> (usize, usize) {
    let before = w / 2;
    (before, w - 1 - before)
}

#[derive(Clone, Copy)]
enum Moment {
    Mean,
    Std,
}

/// Sliding sums over the valid samples of a centered window. The sums are
/// taken relative to a local reference and rebuilt from scratch once per
/// window length so rounding does not accumulate.
fn rolling(s: &FreqSeries, window_s: f64, moment: Moment) -> Result<FreqSeries> {
    let w = window_samples(s, window_s)?;
    let n = s.len();
    let (before, after) = centered(w);
    let y = s.y();
    let ok = s.valid();
    let mut out = vec![INVALID; n];
    let mut out_valid = vec![false; n];
    let min_count = match moment {
        Moment::Mean => 1,
        Moment::Std => 2,
    };

    let mut reference = 0.0;
    let mut count = 0usize;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut since_rebuild = usize::MAX;

    for i in before..n.saturating_sub(after) {
        let lo = i - before;
        let hi = i + after;
        if since_rebuild >= w {
            let vals = || (lo..=hi).filter(|&j| ok[j]).map(|j| y[j]);
            count = vals().count();
            reference = if count > 0 {
                vals().sum::<f64>() / count as f64
            } else {
                0.0
            };
            s1 = vals().map(|v| v - reference).sum();
            s2 = vals().map(|v| (v - reference) * (v - reference)).sum();
            since_rebuild = 0;
        } else {
            let gone = lo - 1;
            if ok[gone] {
                let d = y[gone] - reference;
                s1 -= d;
                s2 -= d * d;
                count -= 1;
            }
            if ok[hi] {
                let d = y[hi] - reference;
                s1 += d;
                s2 += d * d;
                count += 1;
            }
        }
        since_rebuild += 1;

        if 2 * count < w || count < min_count {
            continue;
        }
        let c = count as f64;
        out[i] = match moment {
            Moment::Mean => reference + s1 / c,
            Moment::Std => ((s2 - s1 * s1 / c) / (c - 1.0)).max(0.0).sqrt(),
        };
        out_valid[i] = true;
    }
    FreqSeries::from_parts(s.t0(), s.gate(), s.nu0(), out, out_valid)
}

/// Centered moving average over the valid samples of each window.
///
/// Output samples whose window is incomplete (series edges) or holds fewer
/// than half valid samples are invalid.
pub fn rolling_mean(s: &FreqSeries, window_s: f64) -> Result<FreqSeries> {
    rolling(s, window_s, Moment::Mean)
}

/// Centered moving sample standard deviation (N-1 denominator), same window
/// and validity rules as [`rolling_mean`].
pub fn rolling_std(s: &FreqSeries, window_s: f64) -> Result<FreqSeries> {
    rolling(s, window_s, Moment::Std)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub count: usize,
}

impl Summary {
    /// The same statistics expressed in another unit, e.g. Hz via `nu0`.
    pub fn scaled(&self, factor: f64) -> Summary {
        Summary {
            mean: self.mean * factor,
            median: self.median * factor,
            count: self.count,
        }
    }
}

/// Mean and median of the valid samples.
pub fn summary_stats(s: &FreqSeries) -> Result<Summary> {
    let mut vals: Vec<f64> = s.valid_values().collect();
    if vals.is_empty() {
        return Err(Error::NoValidSamples);
    }
    let count = vals.len();
    let mean = vals.iter().sum::<f64>() / count as f64;
    vals.sort_by(f64::total_cmp);
    let median = if count % 2 == 1 {
        vals[count / 2]
    } else {
        0.5 * (vals[count / 2 - 1] + vals[count / 2])
    };
    Ok(Summary { mean, median, count })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    /// `counts.len() + 1` uniformly spaced edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1]))
    }
}

/// Histogram of the frequency deviations `y * nu0` in Hz. Bins start at the
/// smallest valid deviation; the last bin is closed on the right.
pub fn histogram(s: &FreqSeries, bin_width_hz: f64) -> Result<Histogram> {
    if !(bin_width_hz > 0.0) {
        return Err(Error::param("bin_width", format!("must be > 0, got {bin_width_hz}")));
    }
    if s.is_empty() {
        return Err(Error::EmptySeries);
    }
    let values: Vec<f64> = s.valid_values().map(|y| y * s.nu0()).collect();
    if values.is_empty() {
        return Err(Error::NoValidSamples);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nbins = ((max - min) / bin_width_hz).floor() as usize + 1;
    let mut counts = vec![0u64; nbins];
    for v in values {
        let k = (((v - min) / bin_width_hz).floor() as usize).min(nbins - 1);
        counts[k] += 1;
    }
    let edges = (0..=nbins).map(|k| min + k as f64 * bin_width_hz).collect();
    Ok(Histogram {
        bin_width: bin_width_hz,
        edges,
        counts,
    })
}

impl Default for FreqSeries {
    fn default() -> Self {
        Self {
            t0: 0.0,
            gate: DEFAULT_GATE,
            nu0: DEFAULT_NU0,
            y: Vec::new(),
            valid: Vec::new(),
        }
    }
}
