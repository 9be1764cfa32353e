//! Closed-form sideband analytics for the modulated two-level system.
//!
//! The bare propagator expands into quasi-energy sidebands
//! `omega^(k) = omega0 + k omega_s` weighted by Bessel functions
//! `J_k(lambda/omega_s)`. In the weak-coupling golden-rule picture the
//! reservoirs are probed only at these sidebands, which yields transition
//! rates, steady populations, analytic heat currents, and the resonance
//! conditions used to annotate sweep outputs.

use crate::bath::{BathLabel, BathSpec};
use crate::tls::DrivenTls;

/// Bessel function of the first kind `J_k(x)`, by Miller's downward
/// recurrence with sum-rule normalization. Accurate to ~1e-13 for the
/// argument range used here (|x| <~ 50).
pub fn bessel_j(k: i32, x: f64) -> f64 {
    let n = k.unsigned_abs() as usize;
    // J_{-k}(x) = (-1)^k J_k(x), J_n(-x) = (-1)^n J_n(x)
    let mut sign = 1.0;
    if k < 0 && n % 2 == 1 {
        sign = -sign;
    }
    if x < 0.0 && n % 2 == 1 {
        sign = -sign;
    }
    let ax = x.abs();
    if ax == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let start = 2 * ((n.max(ax as usize) + 30 + (ax.sqrt() as usize)) / 2) + 2;
    let mut jp = 0.0_f64; // J_{m+1}
    let mut j = 1e-300_f64; // J_m (arbitrary seed)
    let mut norm = 0.0_f64; // accumulates J_0 + 2 sum J_{2m}
    let mut out = 0.0_f64;
    for m in (0..=start).rev() {
        let jm = 2.0 * (m as f64 + 1.0) / ax * j - jp;
        jp = j;
        j = jm;
        if m % 2 == 0 {
            norm += if m == 0 { j } else { 2.0 * j };
        }
        if m == n {
            out = j;
        }
        if j.abs() > 1e250 {
            jp /= 1e250;
            j /= 1e250;
            norm /= 1e250;
            out /= 1e250;
        }
    }
    sign * out / norm
}

/// Truncated sideband expansion of the bare propagator.
#[derive(Clone, Debug)]
pub struct FloquetExpansion {
    tls: DrivenTls,
    k_max: i32,
    /// `J_k(lambda/omega_s)` for `k = -k_max ..= k_max`.
    weights: Vec<f64>,
}

impl FloquetExpansion {
    pub const DEFAULT_DEFICIT: f64 = 1e-8;

    /// Smallest symmetric window whose Bessel sum-rule deficit
    /// `1 - sum_k J_k^2` is below `deficit_tol`.
    pub fn new(tls: DrivenTls, deficit_tol: f64) -> Self {
        let x = tls.modulation_index();
        let mut k_max = 0i32;
        loop {
            let deficit = sum_rule_deficit(x, k_max);
            if deficit < deficit_tol || k_max > 400 {
                break;
            }
            k_max += 1;
        }
        let weights = (-k_max..=k_max).map(|k| bessel_j(k, x)).collect();
        Self { tls, k_max, weights }
    }

    pub fn tls(&self) -> &DrivenTls {
        &self.tls
    }

    pub fn k_max(&self) -> i32 {
        self.k_max
    }

    pub fn k_range(&self) -> impl Iterator<Item = i32> {
        -self.k_max..=self.k_max
    }

    /// Quasi-energy `omega^(k) = omega0 + k omega_s`.
    pub fn quasi_energy(&self, k: i32) -> f64 {
        self.tls.omega0() + k as f64 * self.tls.omega_s()
    }

    pub fn weight(&self, k: i32) -> f64 {
        if k.abs() > self.k_max {
            0.0
        } else {
            self.weights[(k + self.k_max) as usize]
        }
    }

    pub fn sum_rule_deficit(&self) -> f64 {
        sum_rule_deficit(self.tls.modulation_index(), self.k_max)
    }
}

fn sum_rule_deficit(x: f64, k_max: i32) -> f64 {
    let mut s = bessel_j(0, x).powi(2);
    for k in 1..=k_max {
        s += 2.0 * bessel_j(k, x).powi(2);
    }
    1.0 - s
}

/// How each sideband term is weighted in the golden-rule rates: the
/// `lambda^2/(4 omega_s^2)` prefactor, or the Bessel weight `J_k^2` of the
/// sideband.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RateWeighting {
    #[default]
    QuadraticPrefactor,
    BesselSquared,
}

/// Golden-rule description of the driven system between a hot and a cold
/// reservoir: per-sideband rates, totals, steady populations and currents.
#[derive(Clone, Debug)]
pub struct BornMarkovModel {
    expansion: FloquetExpansion,
    hot: BathSpec,
    cold: BathSpec,
    weighting: RateWeighting,
    /// `(Gamma0^(k), Gamma1^(k))` for `k = -k_max ..= k_max`.
    rates: Vec<(f64, f64)>,
    gamma0: f64,
    gamma1: f64,
}

impl BornMarkovModel {
    pub fn new(tls: DrivenTls, hot: BathSpec, cold: BathSpec, weighting: RateWeighting) -> Self {
        let expansion = FloquetExpansion::new(tls, FloquetExpansion::DEFAULT_DEFICIT);
        let mut rates = Vec::with_capacity((2 * expansion.k_max() + 1) as usize);
        let mut gamma0 = 0.0;
        let mut gamma1 = 0.0;
        for k in expansion.k_range() {
            let pref = match weighting {
                RateWeighting::QuadraticPrefactor => {
                    let r = tls.lambda() / (2.0 * tls.omega_s());
                    r * r
                }
                RateWeighting::BesselSquared => expansion.weight(k).powi(2),
            };
            let w_k = expansion.quasi_energy(k);
            let w_mk = expansion.quasi_energy(-k);
            let g0 = pref * (hot.spectral_function(-w_k) + cold.spectral_function(-w_mk));
            let g1 = pref * (hot.spectral_function(w_k) + cold.spectral_function(w_mk));
            rates.push((g0, g1));
            gamma0 += g0;
            gamma1 += g1;
        }
        Self { expansion, hot, cold, weighting, rates, gamma0, gamma1 }
    }

    pub fn expansion(&self) -> &FloquetExpansion {
        &self.expansion
    }

    pub fn hot(&self) -> &BathSpec {
        &self.hot
    }

    pub fn cold(&self) -> &BathSpec {
        &self.cold
    }

    pub fn rate_pair(&self, k: i32) -> (f64, f64) {
        self.rates[(k + self.expansion.k_max()) as usize]
    }

    pub fn totals(&self) -> (f64, f64) {
        (self.gamma0, self.gamma1)
    }

    /// Population ratio `w = Gamma0 / Gamma1`.
    pub fn population_ratio(&self) -> f64 {
        self.gamma0 / self.gamma1
    }

    /// Steady populations `P_i = Gamma_i / (Gamma0 + Gamma1)`.
    pub fn steady_populations(&self) -> (f64, f64) {
        let tot = self.gamma0 + self.gamma1;
        (self.gamma0 / tot, self.gamma1 / tot)
    }

    /// Steady-state heat currents `(I_hot, I_cold)`, positive into the
    /// system. Boltzmann factors are eliminated via the detailed-balance
    /// identity `S(omega) e^{-beta omega} = S(-omega)`, which is exact at
    /// T = 0 as well.
    pub fn heat_currents(&self) -> (f64, f64) {
        if self.gamma0 == 0.0 && self.gamma1 == 0.0 {
            return (0.0, 0.0);
        }
        let w = self.population_ratio();
        let mut i_hot = 0.0;
        let mut i_cold = 0.0;
        for k in self.expansion.k_range() {
            let pref = match self.weighting {
                RateWeighting::QuadraticPrefactor => {
                    let tls = self.expansion.tls();
                    let r = tls.lambda() / (2.0 * tls.omega_s());
                    r * r
                }
                RateWeighting::BesselSquared => self.expansion.weight(k).powi(2),
            };
            let w_k = self.expansion.quasi_energy(k);
            let w_mk = self.expansion.quasi_energy(-k);
            let balance = |s_plus: f64, s_minus: f64| {
                if w.is_finite() {
                    (s_minus - w * s_plus) / (w + 1.0)
                } else {
                    // Gamma1 = 0: all population sits in the excited state
                    -s_plus
                }
            };
            i_hot += pref
                * w_k
                * balance(self.hot.spectral_function(w_k), self.hot.spectral_function(-w_k));
            i_cold += pref
                * w_mk
                * balance(self.cold.spectral_function(w_mk), self.cold.spectral_function(-w_mk));
        }
        (i_hot, i_cold)
    }
}

/// Analytic solution of `dP0/dt = Gamma0 (1 - P0) - Gamma1 P0` from `p0` at
/// time zero; asymptote `Gamma0/(Gamma0 + Gamma1)`.
pub fn population_ode(gamma0: f64, gamma1: f64, p0: f64, t: f64) -> f64 {
    let tot = gamma0 + gamma1;
    if tot == 0.0 {
        return p0;
    }
    let p_inf = gamma0 / tot;
    p_inf + (p0 - p_inf) * (-tot * t).exp()
}

/// A predicted resonance of the period-averaged heat current.
#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceMarker {
    pub omega_s: f64,
    pub bath: Option<BathLabel>,
    pub mechanism: String,
}

/// Resonant driving frequencies: the sideband conditions
/// `|Omega_alpha - omega0| / k` for slow-to-moderate driving, and the
/// collective-response set (`Omega_alpha`, `2 Omega_alpha`,
/// `(omega0 + Omega_alpha)/2`, `(Omega_f -+ Omega_s)/2`) that emerges under
/// fast driving. Independent of the modulation amplitude.
pub fn predict_resonances(
    omega0: f64,
    omega_c_slow: f64,
    omega_c_fast: f64,
    k_max: usize,
) -> Vec<ResonanceMarker> {
    let mut out = Vec::new();
    for (label, oc) in [(BathLabel::Slow, omega_c_slow), (BathLabel::Fast, omega_c_fast)] {
        for k in 1..=k_max {
            out.push(ResonanceMarker {
                omega_s: (oc - omega0).abs() / k as f64,
                bath: Some(label),
                mechanism: format!("sideband k={k}"),
            });
        }
        out.push(ResonanceMarker {
            omega_s: oc,
            bath: Some(label),
            mechanism: "reservoir fundamental".into(),
        });
        out.push(ResonanceMarker {
            omega_s: 2.0 * oc,
            bath: Some(label),
            mechanism: "reservoir second harmonic".into(),
        });
        out.push(ResonanceMarker {
            omega_s: 0.5 * (omega0 + oc),
            bath: Some(label),
            mechanism: "half sum with carrier".into(),
        });
    }
    out.push(ResonanceMarker {
        omega_s: 0.5 * (omega_c_fast - omega_c_slow),
        bath: None,
        mechanism: "half difference of reservoirs".into(),
    });
    out.push(ResonanceMarker {
        omega_s: 0.5 * (omega_c_fast + omega_c_slow),
        bath: None,
        mechanism: "half sum of reservoirs".into(),
    });
    out.sort_by(|a, b| a.omega_s.total_cmp(&b.omega_s));
    out
}
