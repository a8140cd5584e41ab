//! Overlapping Allan and modified Allan deviations with gap tolerance, and
//! analytic deviations computed from a one-sided PSD.
//!
//! Counter data are taken as delivered. Records from a dead-time-free
//! counter in Λ mode are triangular-weighted averages; the deviations below
//! are computed from those averages without converting them to Π-mode
//! equivalents, so they are the deviations the instrument reports.
//!
//! An estimator term is kept only when every sample it touches is valid.
//! Terms are never interpolated across gaps.

use std::f64::consts::PI;
use std::io::Write;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::series::FreqSeries;

/// Deviation versus averaging time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StabilityCurve {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    /// Number of estimator terms behind each value.
    pub counts: Vec<usize>,
}

impl StabilityCurve {
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// Value at `tau` if it is on the curve.
    pub fn at(&self, tau: f64) -> Option<f64> {
        self.taus
            .iter()
            .position(|&t| (t - tau).abs() <= 1e-9 * tau.abs().max(1.0))
            .map(|i| self.values[i])
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.taus.iter().copied().zip(self.values.iter().copied())
    }
}

/// Running sum that keeps a compensation term (Neumaier).
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Prefix sums of the mean-removed valid samples and prefix counts of the
/// invalid ones.
struct Prefix {
    sums: Vec<f64>,
    bad: Vec<usize>,
}

impl Prefix {
    fn new(s: &FreqSeries) -> Self {
        let n = s.len();
        let count = s.valid_count();
        let mean = if count > 0 {
            s.valid_values().sum::<f64>() / count as f64
        } else {
            0.0
        };
        let mut sums = Vec::with_capacity(n + 1);
        let mut bad = Vec::with_capacity(n + 1);
        let mut acc = CompensatedSum::default();
        let mut nbad = 0;
        sums.push(0.0);
        bad.push(0);
        for (&y, &ok) in s.y().iter().zip(s.valid()) {
            if ok {
                acc.add(y - mean);
            } else {
                nbad += 1;
            }
            sums.push(acc.value());
            bad.push(nbad);
        }
        Self { sums, bad }
    }

    fn clean(&self, from: usize, to: usize) -> bool {
        self.bad[to] == self.bad[from]
    }

    /// `m` times the difference of adjacent `m`-sample means starting at `i`.
    fn second_difference(&self, i: usize, m: usize) -> f64 {
        self.sums[i + 2 * m] - 2.0 * self.sums[i + m] + self.sums[i]
    }
}

fn averaging_factor(s: &FreqSeries, tau: f64) -> Result<usize> {
    let m = tau / s.gate();
    let k = m.round();
    if k < 1.0 || (m - k).abs() > 1e-6 * m.max(1.0) {
        return Err(Error::param(
            "taus",
            format!("tau {tau} s is not a positive multiple of the {} s gate", s.gate()),
        ));
    }
    Ok(k as usize)
}

fn adev_point(p: &Prefix, n: usize, m: usize) -> Option<(f64, usize)> {
    if n < 2 * m + 1 {
        return None;
    }
    let mut acc = CompensatedSum::default();
    let mut count = 0usize;
    for i in 0..=n - 2 * m {
        if p.clean(i, i + 2 * m) {
            let d = p.second_difference(i, m) / m as f64;
            acc.add(d * d);
            count += 1;
        }
    }
    (count > 0).then(|| ((acc.value() / (2.0 * count as f64)).sqrt(), count))
}

fn mdev_point(p: &Prefix, n: usize, m: usize) -> Option<(f64, usize)> {
    if n + 1 < 3 * m {
        return None;
    }
    // prefix of the second differences, which the inner sum runs over
    let len = n - 2 * m + 1;
    let mut q = Vec::with_capacity(len + 1);
    let mut acc = CompensatedSum::default();
    q.push(0.0);
    for i in 0..len {
        acc.add(p.second_difference(i, m));
        q.push(acc.value());
    }
    let mut total = CompensatedSum::default();
    let mut count = 0usize;
    for j in 0..=len - m {
        // phase points j..j+3m touch samples j..j+3m-1
        if p.clean(j, j + 3 * m - 1) {
            let inner = q[j + m] - q[j];
            total.add(inner * inner);
            count += 1;
        }
    }
    let mf = m as f64;
    (count > 0).then(|| ((total.value() / (2.0 * mf.powi(4) * count as f64)).sqrt(), count))
}

fn curve(
    s: &FreqSeries,
    taus: &[f64],
    name: &str,
    point: fn(&Prefix, usize, usize) -> Option<(f64, usize)>,
) -> Result<StabilityCurve> {
    if s.is_empty() {
        return Err(Error::EmptySeries);
    }
    let factors = taus
        .iter()
        .map(|&t| averaging_factor(s, t))
        .collect::<Result<Vec<_>>>()?;
    let prefix = Prefix::new(s);
    let results: Vec<Option<(f64, usize)>> = factors
        .par_iter()
        .map(|&m| point(&prefix, s.len(), m))
        .collect();
    let mut pairs: Vec<(f64, f64, usize)> = Vec::new();
    for ((&tau, &m), r) in taus.iter().zip(&factors).zip(results) {
        match r {
            Some((v, c)) => pairs.push((m as f64 * s.gate(), v, c)),
            None => warn!("{name}: no usable terms at tau = {tau} s, point omitted"),
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.dedup_by(|a, b| a.0 == b.0);
    Ok(StabilityCurve {
        taus: pairs.iter().map(|p| p.0).collect(),
        values: pairs.iter().map(|p| p.1).collect(),
        counts: pairs.iter().map(|p| p.2).collect(),
    })
}

/// Overlapping Allan deviation at each `tau` (a multiple of the gate).
pub fn adev(s: &FreqSeries, taus: &[f64]) -> Result<StabilityCurve> {
    curve(s, taus, "adev", adev_point)
}

/// Modified Allan deviation at each `tau`.
pub fn mdev(s: &FreqSeries, taus: &[f64]) -> Result<StabilityCurve> {
    curve(s, taus, "mdev", mdev_point)
}

/// `tau` values on a 1-2-5 grid per decade, from the gate up to
/// `max_m * gate`.
pub fn grid_125(gate: f64, max_m: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut decade = 1usize;
    'outer: loop {
        for k in [1usize, 2, 5] {
            let m = k * decade;
            if m > max_m {
                break 'outer;
            }
            out.push(m as f64 * gate);
        }
        decade *= 10;
    }
    out
}

/// How `--taus` selects averaging times.
#[derive(Debug, Clone, PartialEq)]
pub enum TauSpec {
    /// 1-2-5 per decade.
    Grid125,
    /// Powers of two.
    Octave,
    /// Explicit list in seconds.
    List(Vec<f64>),
}

impl std::str::FromStr for TauSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "125" | "1-2-5" | "default" => Ok(TauSpec::Grid125),
            "octave" | "2" => Ok(TauSpec::Octave),
            list => list
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::param("taus", format!("`{t}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(TauSpec::List),
        }
    }
}

impl TauSpec {
    /// Averaging times usable on `n` samples: at least one MDEV term.
    pub fn resolve(&self, n: usize, gate: f64) -> Vec<f64> {
        let max_m = (n / 3).max(1);
        match self {
            TauSpec::Grid125 => grid_125(gate, max_m),
            TauSpec::Octave => {
                let mut out = Vec::new();
                let mut m = 1;
                while m <= max_m {
                    out.push(m as f64 * gate);
                    m *= 2;
                }
                out
            }
            TauSpec::List(v) => v.clone(),
        }
    }
}

/// Write an ADEV/MDEV table. Rows follow the ADEV curve; `n_terms` is the
/// ADEV term count and MDEV is `nan` where it has no terms.
pub fn write_table(w: &mut impl Write, adev: &StabilityCurve, mdev: &StabilityCurve) -> std::io::Result<()> {
    for (i, &tau) in adev.taus.iter().enumerate() {
        let m = mdev.at(tau).unwrap_or(f64::NAN);
        writeln!(w, "{tau}\t{:.6e}\t{m:.6e}\t{}", adev.values[i], adev.counts[i])?;
    }
    Ok(())
}

/// ADEV of sinusoidal frequency modulation of peak amplitude `y0` at
/// modulation frequency `fm`.
pub fn sinusoid_fm_adev(y0: f64, fm: f64, tau: f64) -> f64 {
    let x = PI * fm * tau;
    y0 * x.sin().powi(2) / x
}

/// Frequency response assumed when turning a PSD into a deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// Continuous averaging with a sharp cutoff at `bandwidth` Hz.
    Averaged { bandwidth: f64 },
    /// Point samples every `gate` seconds (Nyquist cutoff), averaged in
    /// blocks of `tau / gate`.
    Sampled { gate: f64 },
}

impl Kernel {
    fn cutoff(&self) -> f64 {
        match *self {
            Kernel::Averaged { bandwidth } => bandwidth,
            Kernel::Sampled { gate } => 0.5 / gate,
        }
    }

    /// Allan-variance weight of Fourier frequency `f` at `tau`.
    fn weight(&self, f: f64, tau: f64) -> f64 {
        let s4 = (PI * f * tau).sin().powi(4);
        match *self {
            Kernel::Averaged { .. } => 2.0 * s4 / (PI * f * tau).powi(2),
            Kernel::Sampled { gate } => {
                let m = (tau / gate).round().max(1.0);
                2.0 * s4 / (m * (PI * f * gate).sin()).powi(2)
            }
        }
    }
}

/// Allan deviation at `tau` implied by the one-sided PSD `psd` of `y`.
pub fn psd_adev(psd: impl Fn(f64) -> f64, tau: f64, kernel: Kernel) -> f64 {
    psd_avar(&psd, tau, kernel).max(0.0).sqrt()
}

pub(crate) fn psd_avar(psd: &dyn Fn(f64) -> f64, tau: f64, kernel: Kernel) -> f64 {
    let fmax = kernel.cutoff();
    let oscillations = (fmax * tau).ceil() as usize;
    let mut intervals = (64 * oscillations).clamp(4096, 1 << 24);
    intervals += intervals % 2;
    let h = fmax / intervals as f64;
    let f0 = fmax * 1e-9;
    let g = |f: f64| {
        let f = f.max(f0);
        psd(f) * kernel.weight(f, tau)
    };
    let mut acc = CompensatedSum::default();
    acc.add(g(0.0));
    acc.add(g(fmax));
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc.add(w * g(k as f64 * h));
    }
    acc.value() * h / 3.0
}
