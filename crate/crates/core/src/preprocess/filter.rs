//! IIR filter design (Butterworth bandpass, biquad notch) and zero-phase
//! application as cascaded second-order sections.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterKind {
    ButterworthBandpass,
    Notch,
}

/// One second-order section, `a[0] == 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2) / (self.a[0] + self.a[1] * z_inv + self.a[2] * z2)
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    fn poles(&self) -> [Complex64; 2] {
        // z^2 + a1 z + a2 = 0
        let disc = Complex64::new(self.a[1] * self.a[1] - 4.0 * self.a[2], 0.0).sqrt();
        [(-self.a[1] + disc) / 2.0, (-self.a[1] - disc) / 2.0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    pub kind: FilterKind,
    /// Prototype order (bandpass) or 2 (notch).
    pub order: usize,
    pub corners_hz: Vec<f64>,
    pub fs_hz: f64,
    pub gain: f64,
    pub sections: Vec<Biquad>,
}

impl FilterCoefficients {
    /// Order of the expanded transfer function.
    pub fn transfer_order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Expanded numerator polynomial in `z^-1`, gain included.
    pub fn numerator(&self) -> Vec<f64> {
        let mut poly = vec![self.gain];
        for s in &self.sections {
            poly = poly_mul(&poly, &s.b);
        }
        poly
    }

    /// Expanded denominator polynomial in `z^-1`, leading coefficient 1.
    pub fn denominator(&self) -> Vec<f64> {
        let mut poly = vec![1.0];
        for s in &self.sections {
            poly = poly_mul(&poly, &s.a);
        }
        poly
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * PI * f_hz / self.fs_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections.iter().fold(Complex64::new(self.gain, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude(&self, f_hz: f64) -> f64 {
        self.response(f_hz).norm()
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Digital Butterworth bandpass via the analog lowpass→bandpass transform and
/// a prewarped bilinear transform. `order` is the prototype order, so the
/// result has `2 * order` poles in `order` sections.
pub fn design_butterworth_bandpass(low_hz: f64, high_hz: f64, order: usize, fs_hz: f64) -> Result<FilterCoefficients> {
    let nyquist = fs_hz / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::InvalidBand(format!(
            "need 0 < low ({low_hz}) < high ({high_hz}) < fs/2 ({nyquist})"
        )));
    }
    if order == 0 {
        return Err(Error::InvalidBand("order must be at least 1".into()));
    }
    let two_fs = 2.0 * fs_hz;
    let prewarp = |f: f64| two_fs * (PI * f / fs_hz).tan();
    let (w1, w2) = (prewarp(low_hz), prewarp(high_hz));
    let w0_sq = w1 * w2;
    let bw = w2 - w1;

    let mut poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let pb = p * bw;
        let root = (pb * pb - 4.0 * w0_sq).sqrt();
        for s in [(pb + root) / 2.0, (pb - root) / 2.0] {
            poles.push((two_fs + s) / (two_fs - s));
        }
    }

    let sections = pair_poles(&poles)?;
    let mut coeffs = FilterCoefficients {
        kind: FilterKind::ButterworthBandpass,
        order,
        corners_hz: vec![low_hz, high_hz],
        fs_hz,
        gain: 1.0,
        sections,
    };
    // unity gain at the digital image of the analog centre frequency
    let f0 = fs_hz / PI * (w0_sq.sqrt() / two_fs).atan();
    coeffs.gain = 1.0 / coeffs.magnitude(f0);
    if let Some(p) = coeffs.poles().into_iter().find(|p| p.norm() >= 1.0) {
        return Err(Error::UnstableDesign(p.norm()));
    }
    Ok(coeffs)
}

/// Groups poles into biquads with one zero at `z = 1` and one at `z = -1` each.
fn pair_poles(poles: &[Complex64]) -> Result<Vec<Biquad>> {
    let tol = 1e-12;
    let mut sections = Vec::new();
    let mut reals: Vec<f64> = Vec::new();
    let mut n_lower = 0;
    for p in poles {
        if p.im > tol {
            sections.push(Biquad { b: [1.0, 0.0, -1.0], a: [1.0, -2.0 * p.re, p.norm_sqr()] });
        } else if p.im < -tol {
            n_lower += 1;
        } else {
            reals.push(p.re);
        }
    }
    if n_lower != sections.len() || reals.len() % 2 != 0 {
        return Err(Error::UnstableDesign(f64::NAN));
    }
    reals.sort_by(|a, b| a.total_cmp(b));
    for pair in reals.chunks(2) {
        sections.push(Biquad { b: [1.0, 0.0, -1.0], a: [1.0, -(pair[0] + pair[1]), pair[0] * pair[1]] });
    }
    Ok(sections)
}

/// Second-order notch with quality factor `q` (bandwidth `center_hz / q`).
pub fn design_notch(center_hz: f64, q: f64, fs_hz: f64) -> Result<FilterCoefficients> {
    if !(center_hz > 0.0 && center_hz < fs_hz / 2.0) {
        return Err(Error::InvalidBand(format!(
            "notch centre {center_hz} Hz outside (0, {})",
            fs_hz / 2.0
        )));
    }
    if !(q > 0.0) {
        return Err(Error::InvalidBand(format!("notch q {q} must be positive")));
    }
    let w0 = 2.0 * PI * center_hz / fs_hz;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let c = -2.0 * w0.cos() / a0;
    let section = Biquad { b: [1.0 / a0, c, 1.0 / a0], a: [1.0, c, (1.0 - alpha) / a0] };
    Ok(FilterCoefficients {
        kind: FilterKind::Notch,
        order: 2,
        corners_hz: vec![center_hz],
        fs_hz,
        gain: 1.0,
        sections: vec![section],
    })
}

/// Causal cascade, transposed direct form II, with optional per-section state.
fn sosfilt(coeffs: &FilterCoefficients, x: &[f64], zi: Option<&[[f64; 2]]>) -> Vec<f64> {
    let mut y: Vec<f64> = x.iter().map(|v| v * coeffs.gain).collect();
    for (k, s) in coeffs.sections.iter().enumerate() {
        let [mut z1, mut z2] = zi.map(|z| z[k]).unwrap_or([0.0, 0.0]);
        for v in y.iter_mut() {
            let input = *v;
            let out = s.b[0] * input + z1;
            z1 = s.b[1] * input - s.a[1] * out + z2;
            z2 = s.b[2] * input - s.a[2] * out;
            *v = out;
        }
    }
    y
}

/// Section states giving a steady-state response to a constant input `x0`.
fn steady_state(coeffs: &FilterCoefficients, x0: f64) -> Vec<[f64; 2]> {
    let mut level = x0 * coeffs.gain;
    coeffs
        .sections
        .iter()
        .map(|s| {
            let dc = s.dc_gain();
            let z2 = (s.b[2] - s.a[2] * dc) * level;
            let z1 = (s.b[1] - s.a[1] * dc) * level + z2;
            level *= dc;
            [z1, z2]
        })
        .collect()
}

/// Decay time constant, in samples, of the slowest pole.
fn slowest_time_constant(coeffs: &FilterCoefficients) -> f64 {
    let r = coeffs.poles().iter().map(|p| p.norm()).fold(0.0, f64::max);
    if r <= 0.0 {
        0.0
    } else {
        -1.0 / r.ln()
    }
}

fn forward_backward(coeffs: &FilterCoefficients, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let tau = slowest_time_constant(coeffs);
    let pad = ((3.0 * tau).ceil() as usize).max(3 * coeffs.transfer_order()).min(n - 1);
    // odd extension about both end points
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    // start each pass in steady state for the local mean level
    let settle = (tau.ceil() as usize).clamp(1, ext.len());
    let level = |v: &[f64]| v[..settle].iter().sum::<f64>() / settle as f64;
    let zi = steady_state(coeffs, 1.0);
    let scaled = |z: &[[f64; 2]], v: f64| -> Vec<[f64; 2]> { z.iter().map(|s| [s[0] * v, s[1] * v]).collect() };
    let mut y = sosfilt(coeffs, &ext, Some(&scaled(&zi, level(&ext))));
    y.reverse();
    let mut y = sosfilt(coeffs, &y, Some(&scaled(&zi, level(&y))));
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Zero-phase filtering: the forward-backward pass averaged with its
/// time-reversed counterpart, which makes the operator commute with time
/// reversal exactly.
pub fn filter_zero_phase(signal: &[f64], coeffs: &FilterCoefficients) -> Result<Vec<f64>> {
    let min = 3 * coeffs.transfer_order();
    if signal.len() <= min {
        return Err(Error::SignalTooShort { len: signal.len(), min });
    }
    let a = forward_backward(coeffs, signal);
    let rev: Vec<f64> = signal.iter().rev().cloned().collect();
    let b = forward_backward(coeffs, &rev);
    Ok(a.iter().zip(b.iter().rev()).map(|(x, y)| (x + y) * 0.5).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form magnitude of a prewarped bilinear Butterworth bandpass.
    fn analytic_bandpass(f: f64, low: f64, high: f64, order: usize, fs: f64) -> f64 {
        let w = |x: f64| 2.0 * fs * (PI * x / fs).tan();
        let (w1, w2, wf) = (w(low), w(high), w(f));
        let ratio = (wf * wf - w1 * w2) / (wf * (w2 - w1));
        1.0 / (1.0 + ratio.powi(2 * order as i32)).sqrt()
    }

    #[test]
    fn bandpass_matches_analytic_magnitude() {
        let c = design_butterworth_bandpass(0.1, 60.0, 4, 250.0).unwrap();
        for f in [0.05, 0.1, 0.5, 1.0, 10.0, 30.0, 60.0, 80.0, 110.0] {
            let want = analytic_bandpass(f, 0.1, 60.0, 4, 250.0);
            assert!((c.magnitude(f) - want).abs() < 1e-6, "f={f}: {} vs {want}", c.magnitude(f));
        }
        assert!((c.magnitude(10.0) - 1.0).abs() < 0.01);
        assert!((c.magnitude(0.1) - 0.5f64.sqrt()).abs() < 1e-3);
        assert!((c.magnitude(60.0) - 0.5f64.sqrt()).abs() < 1e-3);
        assert!(c.is_stable());
        assert_eq!(c.denominator()[0], 1.0);
        assert_eq!(c.transfer_order(), 8);
    }

    #[test]
    fn bandpass_is_monotone_in_stopbands() {
        let c = design_butterworth_bandpass(0.1, 60.0, 4, 250.0).unwrap();
        let lower: Vec<f64> = (1..100).map(|i| c.magnitude(i as f64 * 0.001)).collect();
        assert!(lower.windows(2).all(|w| w[1] >= w[0]));
        let upper: Vec<f64> = (0..60).map(|i| c.magnitude(60.0 + i as f64)).collect();
        assert!(upper.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bandpass_rejects_bad_bands() {
        assert!(matches!(design_butterworth_bandpass(60.0, 0.1, 4, 250.0), Err(Error::InvalidBand(_))));
        assert!(matches!(design_butterworth_bandpass(0.1, 130.0, 4, 250.0), Err(Error::InvalidBand(_))));
        assert!(matches!(design_butterworth_bandpass(0.1, 60.0, 0, 250.0), Err(Error::InvalidBand(_))));
    }

    #[test]
    fn odd_order_design_is_stable() {
        let c = design_butterworth_bandpass(1.0, 40.0, 3, 250.0).unwrap();
        assert!(c.is_stable());
        assert!((c.magnitude(1.0) - 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn notch_response() {
        let c = design_notch(50.0, 30.0, 250.0).unwrap();
        assert!(c.magnitude(50.0) <= 0.01);
        assert!(c.magnitude(40.0) >= 0.7);
        assert!(c.magnitude(50.0 - 50.0 / 30.0) >= 0.7);
        assert!(c.magnitude(50.0 + 50.0 / 30.0) >= 0.7);
        assert!(matches!(design_notch(200.0, 30.0, 250.0), Err(Error::InvalidBand(_))));
        assert!(matches!(design_notch(50.0, 0.0, 250.0), Err(Error::InvalidBand(_))));
    }

    #[test]
    fn zero_phase_preserves_in_band_sinusoid() {
        let fs = 250.0;
        let c = design_butterworth_bandpass(0.1, 60.0, 4, fs).unwrap();
        let n = 5000;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * 10.0 * i as f64 / fs).sin()).collect();
        let y = filter_zero_phase(&x, &c).unwrap();
        assert_eq!(y.len(), n);
        let mid = &y[1500..3500];
        let amp = mid.iter().cloned().fold(0.0, f64::max);
        assert!((amp - 1.0).abs() < 0.02, "amplitude {amp}");
        // cross-correlation peak at zero lag
        let xc = |lag: i64| -> f64 {
            (1500..3500).map(|i| x[i] * y[(i as i64 + lag) as usize]).sum()
        };
        let best = (-12..=12).max_by(|a, b| xc(*a).total_cmp(&xc(*b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let c = design_butterworth_bandpass(0.1, 60.0, 4, 250.0).unwrap();
        let y = filter_zero_phase(&vec![0.0; 300], &c).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn short_signal_is_rejected() {
        let c = design_butterworth_bandpass(0.1, 60.0, 4, 250.0).unwrap();
        assert!(matches!(filter_zero_phase(&[1.0, 2.0, 3.0], &c), Err(Error::SignalTooShort { .. })));
    }
}
