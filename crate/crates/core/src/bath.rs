//! Reservoir spectral densities, Bose-weighted spectral functions, and the
//! quadrature oracle for bath autocorrelation functions.
//!
//! Frequencies are in simulation units with `hbar = k_B = 1`; the bandgap
//! width scale defaults to `xi = 1` so dimensionless bandwidths are of order
//! unity.

use crate::error::{ModelError, QuadError};
use crate::quad;
use crate::tls::DrivenTls;
use num_complex::Complex64 as C64;
use std::fmt::Write as _;
use std::str::FromStr;

/// Continuum reservoir spectral density `J(omega)`, odd in `omega`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectralDensity {
    /// `J = kappa xi^8 omega / ((omega^2 - Omega^2)^6 + omega^2 xi^10)`:
    /// weight localized around `Omega`, bandgap elsewhere.
    Bandgap { kappa: f64, omega_c: f64, xi: f64 },
    /// `J = kappa omega / ((omega^4 - Omega^4)^6 + omega^2)`: a weakly damped
    /// mode with width much smaller than `Omega`.
    Narrow { kappa: f64, omega_c: f64 },
}

impl SpectralDensity {
    pub fn bandgap(kappa: f64, omega_c: f64, xi: f64) -> Result<Self, ModelError> {
        if !(kappa > 0.0) {
            return Err(ModelError::Invalid("kappa must be > 0".into()));
        }
        if !(omega_c > 0.0) {
            return Err(ModelError::Invalid("omega_c must be > 0".into()));
        }
        if !(xi > 0.0) {
            return Err(ModelError::Invalid("xi must be > 0".into()));
        }
        Ok(Self::Bandgap { kappa, omega_c, xi })
    }

    pub fn narrow(kappa: f64, omega_c: f64) -> Result<Self, ModelError> {
        if !(kappa > 0.0) {
            return Err(ModelError::Invalid("kappa must be > 0".into()));
        }
        if !(omega_c > 0.0) {
            return Err(ModelError::Invalid("omega_c must be > 0".into()));
        }
        Ok(Self::Narrow { kappa, omega_c })
    }

    /// `J(omega)`; total and odd in `omega`.
    pub fn value(&self, omega: f64) -> f64 {
        match *self {
            Self::Bandgap { kappa, omega_c, xi } => {
                let x2 = omega * omega;
                let band = x2 - omega_c * omega_c;
                let xi2 = xi * xi;
                let xi8 = xi2 * xi2 * xi2 * xi2;
                kappa * xi8 * omega / (band.powi(6) + x2 * xi8 * xi2)
            }
            Self::Narrow { kappa, omega_c } => {
                let x4 = (omega * omega) * (omega * omega);
                let band = x4 - omega_c.powi(4);
                kappa * omega / (band.powi(6) + omega * omega)
            }
        }
    }

    pub fn kappa(&self) -> f64 {
        match *self {
            Self::Bandgap { kappa, .. } | Self::Narrow { kappa, .. } => kappa,
        }
    }

    pub fn omega_c(&self) -> f64 {
        match *self {
            Self::Bandgap { omega_c, .. } | Self::Narrow { omega_c, .. } => omega_c,
        }
    }

    /// `dJ/domega` at zero, the slope that controls the classical
    /// low-frequency limit of the spectral function.
    pub fn slope_at_zero(&self) -> f64 {
        match *self {
            Self::Bandgap { kappa, omega_c, xi } => {
                kappa * xi.powi(8) / omega_c.powi(12)
            }
            Self::Narrow { kappa, omega_c } => kappa / omega_c.powi(24),
        }
    }

    /// `kappa_eff = J(Omega)/Omega`, the resonant coupling strength.
    pub fn effective_coupling(&self) -> f64 {
        self.value(self.omega_c()) / self.omega_c()
    }

    /// Half width at half maximum of the peak around `omega_c`, to leading
    /// order in the band shape.
    pub fn half_width(&self) -> f64 {
        match *self {
            Self::Bandgap { omega_c, xi, .. } => {
                xi.powf(5.0 / 3.0) / (2.0 * omega_c.powf(2.0 / 3.0))
            }
            Self::Narrow { omega_c, .. } => 1.0 / (4.0 * omega_c.powf(8.0 / 3.0)),
        }
    }

    /// Reorganization counter-term `mu = (2/pi) int_0^inf J(omega)/omega domega`.
    /// The scalar only enters energy bookkeeping, never the reduced dynamics.
    pub fn counter_term(&self) -> Result<f64, QuadError> {
        let w = self.decay_radius(1e-12);
        let hw = self.half_width();
        let oc = self.omega_c();
        let mut breaks = vec![0.0];
        for j in [-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0] {
            let x = oc + j * hw;
            if x > 0.0 && x < w {
                breaks.push(x);
            }
        }
        breaks.push(w);
        breaks.sort_by(f64::total_cmp);
        let breaks = refine_breakpoints(&breaks, hw.min(0.5));
        let f = |omega: f64| {
            if omega == 0.0 {
                self.slope_at_zero()
            } else {
                self.value(omega) / omega
            }
        };
        let v = quad::integrate_real(f, &breaks, 1e-11, 200_000)?;
        Ok(2.0 / std::f64::consts::PI * v)
    }

    /// Smallest radius beyond which `J` stays below `frac * J(peak)`.
    fn decay_radius(&self, frac: f64) -> f64 {
        let peak = self.value(self.omega_c()).abs();
        let mut w = self.omega_c() + 5.0 * self.half_width() + 1.0;
        let step = 0.25;
        while self.value(w).abs() > frac * peak && w < 1e4 {
            w += step;
        }
        w
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Bandgap { .. } => "bandgap",
            Self::Narrow { .. } => "narrow",
        }
    }
}

/// Whether a reservoir sits below (`Slow`) or above (`Fast`) the static
/// transition frequency of the working medium.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BathLabel {
    Slow,
    Fast,
}

impl BathLabel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Slow => "slow",
            Self::Fast => "fast",
        }
    }
}

impl FromStr for BathLabel {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "slow" => Ok(Self::Slow),
            "fast" => Ok(Self::Fast),
            other => Err(ModelError::Invalid(format!("unknown bath label `{other}`"))),
        }
    }
}

/// A thermal reservoir: spectral density plus temperature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BathSpec {
    pub spectral: SpectralDensity,
    pub temperature: f64,
    pub label: BathLabel,
}

impl BathSpec {
    pub fn new(
        spectral: SpectralDensity,
        temperature: f64,
        label: BathLabel,
    ) -> Result<Self, ModelError> {
        if !(temperature >= 0.0) {
            return Err(ModelError::Invalid("temperature must be >= 0".into()));
        }
        Ok(Self { spectral, temperature, label })
    }

    /// Inverse temperature; infinity sentinel at T = 0.
    pub fn beta(&self) -> f64 {
        if self.temperature > 0.0 { 1.0 / self.temperature } else { f64::INFINITY }
    }

    /// The label constraint is relative to the working medium, so it is
    /// checked at assembly time rather than construction.
    pub fn validate_against(&self, tls: &DrivenTls) -> Result<(), ModelError> {
        let oc = self.spectral.omega_c();
        match self.label {
            BathLabel::Slow if oc >= tls.omega0() => Err(ModelError::Invalid(format!(
                "slow bath requires omega_c < omega0 (got {} >= {})",
                oc,
                tls.omega0()
            ))),
            BathLabel::Fast if oc <= tls.omega0() => Err(ModelError::Invalid(format!(
                "fast bath requires omega_c > omega0 (got {} <= {})",
                oc,
                tls.omega0()
            ))),
            _ => Ok(()),
        }
    }

    /// Bose-weighted spectral function `S(omega) = J(omega) n_beta(omega)`
    /// with `n_beta = 1/(1 - e^{-beta omega})`. At T = 0 this reduces to a
    /// step: `S = J` for `omega > 0`, zero for `omega < 0`. The `omega = 0`
    /// value is the analytic limit `T * dJ/domega(0)`.
    pub fn spectral_function(&self, omega: f64) -> f64 {
        if self.temperature == 0.0 {
            return if omega > 0.0 { self.spectral.value(omega) } else { 0.0 };
        }
        if omega == 0.0 {
            return self.temperature * self.spectral.slope_at_zero();
        }
        let beta = 1.0 / self.temperature;
        // 1 - e^{-x} computed as -expm1(-x): accurate for small |x| too.
        self.spectral.value(omega) / (-f64::exp_m1(-beta * omega))
    }

    /// Prepare the Fourier-quadrature oracle for `C(t)`.
    pub fn correlation_oracle(&self) -> Result<CorrelationOracle, QuadError> {
        CorrelationOracle::new(*self)
    }

    /// `C(t) = (1/pi) int domega S(omega) e^{-i omega t}`, evaluated by
    /// adaptive quadrature. For repeated evaluation build a
    /// [`CorrelationOracle`] once instead.
    pub fn correlation_quadrature(&self, t: f64) -> Result<C64, QuadError> {
        self.correlation_oracle()?.eval(t)
    }
}

/// Reusable quadrature context for `C(t)`: frequency window and breakpoints
/// are computed once per bath.
pub struct CorrelationOracle {
    bath: BathSpec,
    window: f64,
    knots: Vec<f64>,
    abs_tol: f64,
}

impl CorrelationOracle {
    const REL_CUTOFF: f64 = 1e-10;

    fn new(bath: BathSpec) -> Result<Self, QuadError> {
        let sd = &bath.spectral;
        let oc = sd.omega_c();
        let hw = sd.half_width();
        // peak of |S| on the positive axis (the negative side is damped by
        // detailed balance)
        let mut s_max = 0.0f64;
        let mut w_scan = 0.0;
        while w_scan <= oc + 10.0 * hw {
            s_max = s_max.max(bath.spectral_function(w_scan).abs());
            w_scan += (hw / 50.0).min(0.01);
        }
        if !(s_max > 0.0) {
            return Err(QuadError::Window("spectral function vanishes on scan".into()));
        }
        let mut window = oc + 5.0 * hw + 1.0;
        while bath.spectral_function(window).abs() > Self::REL_CUTOFF * s_max {
            window += 0.25;
            if window > 1e4 {
                return Err(QuadError::Window("no decay of S within omega <= 1e4".into()));
            }
        }
        // knots at the band peaks and at zero (kink of the T = 0 step)
        let mut knots = vec![0.0];
        for sgn in [-1.0, 1.0] {
            for j in [-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0] {
                let x = sgn * (oc + j * hw);
                if x.abs() < window {
                    knots.push(x);
                }
            }
        }
        knots.push(-window);
        knots.push(window);
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        Ok(Self { bath, window, knots, abs_tol: 1e-9 })
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    /// Evaluate `C(t)`; `t >= 0`.
    pub fn eval(&self, t: f64) -> Result<C64, QuadError> {
        assert!(t >= 0.0, "correlation oracle is defined for t >= 0");
        // resolve both the band structure and the e^{-i omega t} oscillation
        let width = (self.bath.spectral.half_width() / 2.0)
            .min(std::f64::consts::PI / (2.0 * (t + 1.0)))
            .max(self.window * 2.0 / 4000.0);
        let zero_temp = self.bath.temperature == 0.0;
        let mut breaks: Vec<f64> = Vec::new();
        for w in self.knots.windows(2) {
            if zero_temp && w[1] <= 0.0 {
                continue;
            }
            let a = if zero_temp { w[0].max(0.0) } else { w[0] };
            let seg = quad::uniform_breakpoints(a, w[1], width);
            if breaks.is_empty() {
                breaks.extend_from_slice(&seg);
            } else {
                breaks.extend_from_slice(&seg[1..]);
            }
        }
        let bath = self.bath;
        let f = move |omega: f64| {
            let s = bath.spectral_function(omega);
            let phase = -omega * t;
            C64::new(s * phase.cos(), s * phase.sin())
        };
        let v = quad::integrate_complex(f, &breaks, self.abs_tol, 400_000)?;
        Ok(v / std::f64::consts::PI)
    }

    /// First time where `|C|` has decayed below `frac * |C(0)|`, scanned on a
    /// unit grid; `None` if it stays above through `t_scan_max`.
    pub fn memory_time(&self, frac: f64, t_scan_max: f64) -> Result<Option<f64>, QuadError> {
        let c0 = self.eval(0.0)?.norm();
        let mut t = 1.0;
        while t <= t_scan_max {
            if self.eval(t)?.norm() < frac * c0 {
                return Ok(Some(t));
            }
            t += 1.0;
        }
        Ok(None)
    }
}

/// One term `d e^{-gamma t}` of a correlation-function decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentialMode {
    pub d: C64,
    pub gamma: C64,
}

impl ExponentialMode {
    pub fn new(d: C64, gamma: C64) -> Result<Self, ModelError> {
        if !(gamma.re > 0.0) {
            return Err(ModelError::Invalid(format!(
                "mode must decay: Re(gamma) = {} <= 0",
                gamma.re
            )));
        }
        Ok(Self { d, gamma })
    }
}

/// Certified exponential decomposition of one bath's `C(t)` on `[0, t_max]`.
#[derive(Clone, Debug)]
pub struct BathDecomposition {
    pub spec: BathSpec,
    pub modes: Vec<ExponentialMode>,
    pub t_max: f64,
    /// Max absolute deviation from the quadrature oracle on the fit grid.
    pub certified_error: f64,
}

impl BathDecomposition {
    /// `sum_k d_k e^{-gamma_k t}`.
    pub fn reconstruct(&self, t: f64) -> C64 {
        self.modes.iter().map(|m| m.d * (-m.gamma * t).exp()).sum()
    }

    /// Reconstructed `C(0) = sum_k d_k`; its imaginary part is bounded by the
    /// certified error.
    pub fn c0(&self) -> C64 {
        self.modes.iter().map(|m| m.d).sum()
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// Plain-text interchange table: header with the bath parameters, then
    /// one mode per line as `re_d im_d re_gamma im_gamma`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# bath decomposition v1");
        let _ = writeln!(out, "# family = {}", self.spec.spectral.family_name());
        let _ = writeln!(out, "# kappa = {}", self.spec.spectral.kappa());
        let _ = writeln!(out, "# omega_c = {}", self.spec.spectral.omega_c());
        if let SpectralDensity::Bandgap { xi, .. } = self.spec.spectral {
            let _ = writeln!(out, "# xi = {}", xi);
        }
        let _ = writeln!(out, "# temperature = {}", self.spec.temperature);
        let _ = writeln!(out, "# label = {}", self.spec.label.name());
        let _ = writeln!(out, "# t_max = {}", self.t_max);
        let _ = writeln!(out, "# certified_error = {}", self.certified_error);
        let _ = writeln!(out, "# columns: re_d im_d re_gamma im_gamma");
        for m in &self.modes {
            let _ = writeln!(out, "{} {} {} {}", m.d.re, m.d.im, m.gamma.re, m.gamma.im);
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self, ModelError> {
        let mut kv = std::collections::HashMap::new();
        let mut modes = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    kv.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| ModelError::Invalid(format!("bad number `{tok}`")))
                })
                .collect::<Result<_, _>>()?;
            if nums.len() != 4 {
                return Err(ModelError::Invalid(format!(
                    "mode line must have 4 columns, got {}",
                    nums.len()
                )));
            }
            modes.push(ExponentialMode::new(
                C64::new(nums[0], nums[1]),
                C64::new(nums[2], nums[3]),
            )?);
        }
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| ModelError::Invalid(format!("missing header key `{k}`")))
        };
        let parse = |k: &str| -> Result<f64, ModelError> {
            get(k)?
                .parse::<f64>()
                .map_err(|_| ModelError::Invalid(format!("bad value for `{k}`")))
        };
        let spectral = match get("family")?.as_str() {
            "bandgap" => SpectralDensity::bandgap(parse("kappa")?, parse("omega_c")?, parse("xi")?)?,
            "narrow" => SpectralDensity::narrow(parse("kappa")?, parse("omega_c")?)?,
            other => return Err(ModelError::Invalid(format!("unknown family `{other}`"))),
        };
        let spec = BathSpec::new(spectral, parse("temperature")?, get("label")?.parse()?)?;
        Ok(Self { spec, modes, t_max: parse("t_max")?, certified_error: parse("certified_error")? })
    }
}

fn refine_breakpoints(knots: &[f64], max_width: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for w in knots.windows(2) {
        let seg = quad::uniform_breakpoints(w[0], w[1], max_width);
        if out.is_empty() {
            out.extend_from_slice(&seg);
        } else {
            out.extend_from_slice(&seg[1..]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bandgap_fast_hot() -> BathSpec {
        BathSpec::new(SpectralDensity::bandgap(1.0, 4.0, 1.0).unwrap(), 2.0, BathLabel::Fast)
            .unwrap()
    }

    fn bandgap_slow_cold() -> BathSpec {
        BathSpec::new(SpectralDensity::bandgap(1.0, 2.0, 1.0).unwrap(), 0.0, BathLabel::Slow)
            .unwrap()
    }

    #[test]
    fn bandgap_value_at_center() {
        let sd = SpectralDensity::bandgap(1.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(sd.value(2.0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(sd.effective_coupling(), 0.25, max_relative = 1e-15);
        assert_eq!(sd.value(0.0), 0.0);
        assert_relative_eq!(sd.value(-2.0), -0.5, max_relative = 1e-15);
    }

    #[test]
    fn label_constraints_checked_at_assembly() {
        let tls = DrivenTls::new(3.0, 1.0, 1.0).unwrap();
        assert!(bandgap_fast_hot().validate_against(&tls).is_ok());
        assert!(bandgap_slow_cold().validate_against(&tls).is_ok());
        let bad = BathSpec::new(
            SpectralDensity::bandgap(1.0, 4.0, 1.0).unwrap(),
            0.0,
            BathLabel::Slow,
        )
        .unwrap();
        assert!(bad.validate_against(&tls).is_err());
    }

    #[test]
    fn zero_temperature_spectral_function_is_one_sided() {
        let b = bandgap_slow_cold();
        assert_eq!(b.spectral_function(1.5), b.spectral.value(1.5));
        assert_eq!(b.spectral_function(-1.5), 0.0);
        assert_eq!(b.spectral_function(0.0), 0.0);
    }

    #[test]
    fn spectral_function_sum_rule() {
        // S(omega) - S(-omega) = J(omega)
        let b = bandgap_fast_hot();
        let omega = 1.3;
        let lhs = b.spectral_function(omega) - b.spectral_function(-omega);
        assert_relative_eq!(lhs, b.spectral.value(omega), max_relative = 1e-12);
    }

    #[test]
    fn spectral_function_low_frequency_limit() {
        // S(omega -> 0+) -> T * dJ/domega(0) = 2 kappa xi^8 / Omega^12
        let b = bandgap_fast_hot();
        let expected = 2.0 / 4.0f64.powi(12);
        assert_relative_eq!(b.spectral_function(0.0), expected, max_relative = 1e-12);
        assert_relative_eq!(b.spectral_function(1e-5), expected, max_relative = 1e-4);
        assert_relative_eq!(b.spectral_function(-1e-5), expected, max_relative = 1e-4);
    }

    #[test]
    fn correlation_at_zero_is_real_positive() {
        for bath in [bandgap_fast_hot(), bandgap_slow_cold()] {
            let c0 = bath.correlation_quadrature(0.0).unwrap();
            assert!(c0.re > 0.0, "C(0) = {c0}");
            assert!(c0.im.abs() < 1e-9);
        }
    }

    #[test]
    fn fast_hot_bath_memory_extends_past_thirty() {
        let oracle = bandgap_fast_hot().correlation_oracle().unwrap();
        let c0 = oracle.eval(0.0).unwrap().norm();
        let c30 = oracle.eval(30.0).unwrap().norm();
        assert!(
            c30 > 1e-3 * c0,
            "expected long memory: |C(30)|/|C(0)| = {:.3e}",
            c30 / c0
        );
    }

    #[test]
    fn zero_temperature_fast_bath_oscillates_at_band_center() {
        let bath = BathSpec::new(
            SpectralDensity::bandgap(1.0, 4.0, 1.0).unwrap(),
            0.0,
            BathLabel::Fast,
        )
        .unwrap();
        let oracle = bath.correlation_oracle().unwrap();
        let dt = 0.05;
        let n = (20.0 / dt) as usize;
        let vals: Vec<f64> = (0..=n).map(|i| oracle.eval(i as f64 * dt).unwrap().re).collect();
        let crossings = vals.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
        // cos(Omega t) has Omega*T/pi ~ 25.5 sign changes over [0, 20]
        let expected = 4.0 * 20.0 / std::f64::consts::PI;
        assert!(
            (crossings as f64 - expected).abs() < 4.0,
            "zero crossings {crossings} vs {expected:.1}"
        );
        // slowly decaying envelope
        let c0 = oracle.eval(0.0).unwrap().norm();
        let tail: f64 = vals[n - 20..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(tail > 0.05 * c0);
    }

    #[test]
    fn counter_term_values() {
        let sd = SpectralDensity::bandgap(1.0, 2.0, 1.0).unwrap();
        let mu = sd.counter_term().unwrap();
        assert!(mu.is_finite() && mu > 0.0);
        // linear in kappa
        let sd_small = SpectralDensity::bandgap(1e-6, 2.0, 1.0).unwrap();
        assert_relative_eq!(sd_small.counter_term().unwrap(), 1e-6 * mu, max_relative = 1e-6);
        let nr = SpectralDensity::narrow(1.0, 2.0).unwrap();
        let mu_n = nr.counter_term().unwrap();
        assert!(mu_n.is_finite() && mu_n > 0.0);
    }

    #[test]
    fn decomposition_table_round_trip() {
        let dec = BathDecomposition {
            spec: bandgap_fast_hot(),
            modes: vec![
                ExponentialMode::new(C64::new(0.125, -0.5), C64::new(0.25, 4.0)).unwrap(),
                ExponentialMode::new(C64::new(1e-3, 2e-7), C64::new(1.75, -0.125)).unwrap(),
            ],
            t_max: 50.0,
            certified_error: 3.5e-5,
        };
        let text = dec.to_table();
        let back = BathDecomposition::from_table(&text).unwrap();
        assert_eq!(back.spec, dec.spec);
        assert_eq!(back.modes, dec.modes);
        assert_eq!(back.t_max, dec.t_max);
        assert_eq!(back.certified_error, dec.certified_error);
    }

    #[test]
    fn growing_mode_rejected() {
        assert!(ExponentialMode::new(C64::new(1.0, 0.0), C64::new(-0.1, 1.0)).is_err());
    }
}
