//! Hierarchy of auxiliary density operators (ADOs) over the exponential bath
//! modes of both reservoirs.
//!
//! ADOs carry the rescaling `rho~_n = (prod_k n_k! |d_k|^{n_k})^{-1/2} rho_n`,
//! which keeps deep levels bounded and makes a single filtering threshold
//! meaningful across the hierarchy. Filtered ADOs are zeroed but stay in the
//! index set, so they repopulate automatically when the dynamics drives them
//! back above threshold.

use crate::bath::{BathDecomposition, ExponentialMode};
use crate::error::HierarchyError;
use crate::mat2::Mat2;
use crate::tls::DrivenTls;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::collections::HashMap;
use std::ops::Range;

/// Blow-up guard on any rescaled matrix element; exceeding it signals an
/// insufficient depth or too large a step.
pub const BLOWUP_GUARD: f64 = 1e6;

/// Initial state of the working medium.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitialState {
    #[default]
    Ground,
    Excited,
    MaxMixed,
}

impl InitialState {
    pub fn density(&self) -> Mat2 {
        match self {
            Self::Ground => Mat2::ground(),
            Self::Excited => Mat2::excited(),
            Self::MaxMixed => Mat2::mixed(),
        }
    }
}

/// Numerical knobs of a hierarchy propagation.
#[derive(Clone, Copy, Debug)]
pub struct HeomConfig {
    /// Truncation depth `L` (maximum total excitation of the multi-index).
    pub depth: usize,
    /// Filtering threshold on the max absolute rescaled matrix element.
    pub delta: f64,
    /// Integrator step; `None` selects the default rule
    /// `tau_min / 200` with `tau_min = min(2pi/omega_s, 2pi/omega0, 1/max Re gamma_k)`.
    pub step: Option<f64>,
    pub initial: InitialState,
    /// Ceiling on the ADO count.
    pub max_ados: usize,
    /// Parallelize the generator evaluation over ADOs.
    pub parallel: bool,
}

impl Default for HeomConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            delta: 1e-7,
            step: None,
            initial: InitialState::Ground,
            max_ados: 500_000,
            parallel: true,
        }
    }
}

impl HeomConfig {
    pub fn validate(&self) -> Result<(), HierarchyError> {
        if self.depth < 1 {
            return Err(HierarchyError::Invalid("depth must be >= 1".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(HierarchyError::Invalid("delta must be >= 0".into()));
        }
        if let Some(h) = self.step {
            if !(h > 0.0) {
                return Err(HierarchyError::Invalid("step must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Default integrator step for the given system and modes.
pub fn default_step(tls: &DrivenTls, gammas_re_max: f64) -> f64 {
    let tau = (std::f64::consts::TAU / tls.omega_s())
        .min(std::f64::consts::TAU / tls.omega0())
        .min(if gammas_re_max > 0.0 { 1.0 / gammas_re_max } else { f64::INFINITY });
    tau / 200.0
}

/// All multi-indices with `|n| <= depth` over `n_modes` modes, in graded
/// lexicographic order, with up/down neighbor tables.
pub struct AdoIndexSet {
    n_modes: usize,
    depth: usize,
    /// Flattened counts, `n_ados * n_modes`.
    counts: Vec<u8>,
    /// `up[i*K + k]`: index of `n + e_k`, `u32::MAX` if absent.
    up: Vec<u32>,
    /// `down[i*K + k]`: index of `n - e_k`, `u32::MAX` if absent.
    down: Vec<u32>,
}

pub const NO_NEIGHBOR: u32 = u32::MAX;

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

impl AdoIndexSet {
    /// Enumerate all multi-indices with level at most `depth`.
    pub fn build(n_modes: usize, depth: usize, max_ados: usize) -> Result<Self, HierarchyError> {
        if n_modes == 0 {
            return Err(HierarchyError::Invalid("need at least one mode".into()));
        }
        let count = binomial((n_modes + depth) as u128, depth as u128);
        if count > max_ados as u128 {
            return Err(HierarchyError::Capacity { count, ceiling: max_ados });
        }
        let n_ados = count as usize;
        let mut counts: Vec<u8> = Vec::with_capacity(n_ados * n_modes);
        let mut scratch = vec![0u8; n_modes];
        for level in 0..=depth {
            push_compositions(level as u8, 0, &mut scratch, &mut counts);
        }
        debug_assert_eq!(counts.len(), n_ados * n_modes);

        let mut lookup: HashMap<&[u8], u32> = HashMap::with_capacity(n_ados);
        for i in 0..n_ados {
            lookup.insert(&counts[i * n_modes..(i + 1) * n_modes], i as u32);
        }
        let mut up = vec![NO_NEIGHBOR; n_ados * n_modes];
        let mut down = vec![NO_NEIGHBOR; n_ados * n_modes];
        let mut probe = vec![0u8; n_modes];
        for i in 0..n_ados {
            let base = &counts[i * n_modes..(i + 1) * n_modes];
            for k in 0..n_modes {
                probe.copy_from_slice(base);
                if probe[k] < u8::MAX {
                    probe[k] += 1;
                    if let Some(&j) = lookup.get(probe.as_slice()) {
                        up[i * n_modes + k] = j;
                    }
                    probe[k] -= 1;
                }
                if probe[k] > 0 {
                    probe[k] -= 1;
                    if let Some(&j) = lookup.get(probe.as_slice()) {
                        down[i * n_modes + k] = j;
                    }
                }
            }
        }
        Ok(Self { n_modes, depth, counts, up, down })
    }

    pub fn len(&self) -> usize {
        self.counts.len() / self.n_modes
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn counts(&self, i: usize) -> &[u8] {
        &self.counts[i * self.n_modes..(i + 1) * self.n_modes]
    }

    pub fn level(&self, i: usize) -> usize {
        self.counts(i).iter().map(|&c| c as usize).sum()
    }

    pub fn up_neighbor(&self, i: usize, mode: usize) -> Option<usize> {
        let j = self.up[i * self.n_modes + mode];
        (j != NO_NEIGHBOR).then_some(j as usize)
    }

    pub fn down_neighbor(&self, i: usize, mode: usize) -> Option<usize> {
        let j = self.down[i * self.n_modes + mode];
        (j != NO_NEIGHBOR).then_some(j as usize)
    }

    pub fn find(&self, index: &[u8]) -> Option<usize> {
        (0..self.len()).find(|&i| self.counts(i) == index)
    }
}

fn push_compositions(remaining: u8, mode: usize, scratch: &mut Vec<u8>, out: &mut Vec<u8>) {
    let n_modes = scratch.len();
    if mode == n_modes - 1 {
        scratch[mode] = remaining;
        out.extend_from_slice(scratch);
        return;
    }
    for v in (0..=remaining).rev() {
        scratch[mode] = v;
        push_compositions(remaining - v, mode + 1, scratch, out);
    }
}

/// A coupling term `a * sigma_x rho_j + b * rho_j sigma_x` feeding one ADO
/// from a neighbor `j`.
#[derive(Clone, Copy)]
struct Link {
    nbr: u32,
    a: C64,
    b: C64,
}

/// Conjugate-partner permutation of a mode list: `gamma_{pi(k)}` is exactly
/// the complex conjugate of `gamma_k` (real exponents are self-paired). The
/// partner carries the backward-kernel amplitude of mode `k`, so that the
/// hierarchy couples `C(t)` forward and exactly `C*(t)` backward; see the
/// fit module.
pub fn conjugate_partners(modes: &[ExponentialMode]) -> Result<Vec<usize>, HierarchyError> {
    let n = modes.len();
    let mut partner = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for k in 0..n {
        if partner[k] != usize::MAX {
            continue;
        }
        let g = modes[k].gamma;
        if g.im == 0.0 {
            partner[k] = k;
            used[k] = true;
            continue;
        }
        let mut found = None;
        for j in 0..n {
            if j == k || used[j] || partner[j] != usize::MAX {
                continue;
            }
            let h = modes[j].gamma;
            if h.re == g.re && h.im == -g.im {
                found = Some(j);
                break;
            }
        }
        match found {
            Some(j) => {
                partner[k] = j;
                partner[j] = k;
                used[k] = true;
                used[j] = true;
            }
            None => {
                return Err(HierarchyError::Invalid(format!(
                    "decomposition is not conjugate-closed: mode with gamma = \
                     {:+e}{:+e}i has no conjugate partner",
                    g.re, g.im
                )));
            }
        }
    }
    Ok(partner)
}

/// The rescaled hierarchy generator for a driven two-level system coupled to
/// one or more exponentially decomposed reservoirs.
pub struct HeomGenerator {
    tls: DrivenTls,
    index_set: AdoIndexSet,
    /// `sum_k n_k gamma_k` per ADO.
    gamma_sum: Vec<C64>,
    links: Vec<Link>,
    offsets: Vec<u32>,
    /// ADO index of each single-excitation multi-index `e_k`.
    level1: Vec<u32>,
    /// `sqrt(|d_k|)` un-rescaling factor per mode.
    unrescale1: Vec<f64>,
    /// Mode ranges per bath, in the order the decompositions were given.
    bath_ranges: Vec<Range<usize>>,
    /// Cross-bath double excitations `(ado, sqrt(|d_k| |d_l|))` and the
    /// normalization `C_s(0) C_f(0)`; empty unless two baths and depth >= 2.
    mixed_pairs: Vec<(u32, f64)>,
    mixed_norm: f64,
    gamma_re_max: f64,
    parallel: bool,
}

impl HeomGenerator {
    pub fn new(
        tls: DrivenTls,
        decomps: &[BathDecomposition],
        cfg: &HeomConfig,
    ) -> Result<Self, HierarchyError> {
        cfg.validate()?;
        if decomps.is_empty() {
            return Err(HierarchyError::Invalid("need at least one bath decomposition".into()));
        }
        let mut modes = Vec::new();
        let mut bath_ranges = Vec::new();
        for dec in decomps {
            let start = modes.len();
            modes.extend(dec.modes.iter().copied());
            bath_ranges.push(start..modes.len());
        }
        let n_modes = modes.len();
        let index_set = AdoIndexSet::build(n_modes, cfg.depth, cfg.max_ados)?;
        let n_ados = index_set.len();

        // forward amplitude a_k = d_k, backward amplitude b_k from the
        // conjugate partner; the rescaling weight is symmetric in the pair
        let partner = conjugate_partners(&modes)?;
        let fwd: Vec<C64> = modes.iter().map(|m| m.d).collect();
        let bwd: Vec<C64> = (0..n_modes).map(|k| modes[partner[k]].d.conj()).collect();
        let scale: Vec<f64> =
            (0..n_modes).map(|k| 0.5 * (fwd[k].norm() + bwd[k].norm())).collect();

        let mut gamma_sum = Vec::with_capacity(n_ados);
        let mut links = Vec::new();
        let mut offsets = Vec::with_capacity(n_ados + 1);
        offsets.push(0u32);
        for i in 0..n_ados {
            let counts = index_set.counts(i);
            let mut gs = C64::new(0.0, 0.0);
            for (k, &nk) in counts.iter().enumerate() {
                if nk > 0 {
                    gs += modes[k].gamma * nk as f64;
                }
            }
            gamma_sum.push(gs);
            for k in 0..n_modes {
                if scale[k] == 0.0 {
                    continue;
                }
                if let Some(j) = index_set.up_neighbor(i, k) {
                    let c = ((counts[k] as f64 + 1.0) * scale[k]).sqrt();
                    links.push(Link {
                        nbr: j as u32,
                        a: C64::new(0.0, -c),
                        b: C64::new(0.0, c),
                    });
                }
                if let Some(j) = index_set.down_neighbor(i, k) {
                    let c = (counts[k] as f64 / scale[k]).sqrt();
                    let minus_i = C64::new(0.0, -1.0);
                    links.push(Link {
                        nbr: j as u32,
                        a: minus_i * c * fwd[k],
                        b: -minus_i * c * bwd[k],
                    });
                }
            }
            offsets.push(links.len() as u32);
        }

        let mut level1 = Vec::with_capacity(n_modes);
        let mut probe = vec![0u8; n_modes];
        for k in 0..n_modes {
            probe.fill(0);
            probe[k] = 1;
            let idx = index_set
                .find(&probe)
                .ok_or_else(|| HierarchyError::Invalid("missing level-1 index".into()))?;
            level1.push(idx as u32);
        }
        let unrescale1 = scale.iter().map(|s| s.sqrt()).collect();

        let mut mixed_pairs = Vec::new();
        let mut mixed_norm = 1.0;
        if decomps.len() == 2 && cfg.depth >= 2 {
            let (ra, rb) = (bath_ranges[0].clone(), bath_ranges[1].clone());
            for k in ra {
                for l in rb.clone() {
                    probe.fill(0);
                    probe[k] = 1;
                    probe[l] = 1;
                    if let Some(idx) = index_set.find(&probe) {
                        let w = (scale[k] * scale[l]).sqrt();
                        mixed_pairs.push((idx as u32, w));
                    }
                }
            }
            mixed_norm = decomps[0].c0().re * decomps[1].c0().re;
        }

        let gamma_re_max = modes.iter().map(|m| m.gamma.re).fold(0.0, f64::max);
        Ok(Self {
            tls,
            index_set,
            gamma_sum,
            links,
            offsets,
            level1,
            unrescale1,
            bath_ranges,
            mixed_pairs,
            mixed_norm,
            gamma_re_max,
            parallel: cfg.parallel,
        })
    }

    pub fn tls(&self) -> &DrivenTls {
        &self.tls
    }

    pub fn index_set(&self) -> &AdoIndexSet {
        &self.index_set
    }

    pub fn n_ados(&self) -> usize {
        self.index_set.len()
    }

    pub fn n_modes(&self) -> usize {
        self.index_set.n_modes()
    }

    pub fn n_baths(&self) -> usize {
        self.bath_ranges.len()
    }

    pub fn bath_modes(&self, bath: usize) -> Range<usize> {
        self.bath_ranges[bath].clone()
    }

    pub fn gamma_re_max(&self) -> f64 {
        self.gamma_re_max
    }

    pub fn default_step(&self) -> f64 {
        default_step(&self.tls, self.gamma_re_max)
    }

    /// Un-rescaled first-order ADO `rho_{0_k^+} = sqrt(|d_k|) rho~_{e_k}`.
    pub fn first_order_ado(&self, state: &HierarchyState, mode: usize) -> Mat2 {
        let m = state.ados[self.level1[mode] as usize];
        m.scale(C64::new(self.unrescale1[mode], 0.0))
    }

    /// Normalized cross-reservoir correlation
    /// `<X_s X_f> = sum_{k,l} Tr rho_{e_k+e_l} / (C_s(0) C_f(0))`;
    /// requires two baths and depth >= 2.
    pub fn bath_bath_correlation(&self, state: &HierarchyState) -> Option<C64> {
        if self.mixed_pairs.is_empty() {
            return None;
        }
        let mut acc = C64::new(0.0, 0.0);
        for &(idx, w) in &self.mixed_pairs {
            acc += state.ados[idx as usize].trace() * w;
        }
        Some(acc / self.mixed_norm)
    }

    /// Evaluate the generator at time `t` into `out`. Contributions from
    /// filtered neighbors are skipped; an inactive ADO with no active
    /// neighbor has a vanishing derivative.
    pub fn rhs(&self, t: f64, y: &[Mat2], active: &[bool], out: &mut [Mat2]) {
        assert_eq!(y.len(), self.n_ados(), "state length mismatch");
        assert_eq!(out.len(), self.n_ados(), "output length mismatch");
        let omega = self.tls.omega(t);
        let eval = |i: usize| -> Mat2 {
            let links =
                &self.links[self.offsets[i] as usize..self.offsets[i + 1] as usize];
            if !active[i] && !links.iter().any(|l| active[l.nbr as usize]) {
                return Mat2::ZERO;
            }
            let rho = &y[i].0;
            let gs = self.gamma_sum[i];
            let iw = C64::new(0.0, omega);
            let mut acc = Mat2([
                -gs * rho[0],
                (iw - gs) * rho[1],
                (-iw - gs) * rho[2],
                -gs * rho[3],
            ]);
            for l in links {
                if !active[l.nbr as usize] {
                    continue;
                }
                let n = &y[l.nbr as usize].0;
                acc.0[0] += l.a * n[2] + l.b * n[1];
                acc.0[1] += l.a * n[3] + l.b * n[0];
                acc.0[2] += l.a * n[0] + l.b * n[3];
                acc.0[3] += l.a * n[1] + l.b * n[2];
            }
            acc
        };
        if self.parallel && self.n_ados() >= 1024 {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = eval(i));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = eval(i);
            }
        }
    }
}

/// The hierarchy state: all rescaled ADO matrices plus filtering bookkeeping.
#[derive(Clone)]
pub struct HierarchyState {
    pub t: f64,
    pub ados: Vec<Mat2>,
    pub active: Vec<bool>,
}

impl HierarchyState {
    pub fn new(gen: &HeomGenerator, initial: Mat2) -> Self {
        let n = gen.n_ados();
        let mut ados = vec![Mat2::ZERO; n];
        ados[0] = initial;
        let mut active = vec![false; n];
        active[0] = true;
        Self { t: 0.0, ados, active }
    }

    /// The reduced density operator of the working medium.
    pub fn rho(&self) -> &Mat2 {
        &self.ados[0]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Zero every ADO whose max absolute element is below `delta` (the root is
/// exempt). Zeroed entries stay in the index set and can reactivate later.
pub fn filter(state: &mut HierarchyState, delta: f64) {
    for (i, (m, act)) in state.ados.iter_mut().zip(state.active.iter_mut()).enumerate() {
        if i == 0 {
            *act = true;
            continue;
        }
        if m.max_abs() >= delta {
            *act = true;
        } else {
            *act = false;
            *m = Mat2::ZERO;
        }
    }
}

/// Fixed-step classical Runge-Kutta propagator with per-step filtering and a
/// blow-up guard.
pub struct HeomPropagator<'a> {
    gen: &'a HeomGenerator,
    pub delta: f64,
    k1: Vec<Mat2>,
    k2: Vec<Mat2>,
    k3: Vec<Mat2>,
    k4: Vec<Mat2>,
    tmp: Vec<Mat2>,
}

impl<'a> HeomPropagator<'a> {
    pub fn new(gen: &'a HeomGenerator, delta: f64) -> Self {
        let n = gen.n_ados();
        Self {
            gen,
            delta,
            k1: vec![Mat2::ZERO; n],
            k2: vec![Mat2::ZERO; n],
            k3: vec![Mat2::ZERO; n],
            k4: vec![Mat2::ZERO; n],
            tmp: vec![Mat2::ZERO; n],
        }
    }

    pub fn generator(&self) -> &HeomGenerator {
        self.gen
    }

    /// Advance one RK4 step of size `h`, then filter.
    pub fn step(&mut self, state: &mut HierarchyState, h: f64) -> Result<(), HierarchyError> {
        let n = self.gen.n_ados();
        if state.ados.len() != n {
            return Err(HierarchyError::DimensionMismatch(format!(
                "state has {} ADOs, generator {}",
                state.ados.len(),
                n
            )));
        }
        let t = state.t;
        let y = &state.ados;
        let act = &state.active;
        self.gen.rhs(t, y, act, &mut self.k1);
        let half = C64::new(0.5 * h, 0.0);
        for i in 0..n {
            self.tmp[i] = y[i];
            self.tmp[i].axpy(half, &self.k1[i]);
        }
        self.gen.rhs(t + 0.5 * h, &self.tmp, act, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i];
            self.tmp[i].axpy(half, &self.k2[i]);
        }
        self.gen.rhs(t + 0.5 * h, &self.tmp, act, &mut self.k3);
        let full = C64::new(h, 0.0);
        for i in 0..n {
            self.tmp[i] = y[i];
            self.tmp[i].axpy(full, &self.k3[i]);
        }
        self.gen.rhs(t + h, &self.tmp, act, &mut self.k4);

        let w = h / 6.0;
        let mut max_abs = 0.0f64;
        for i in 0..n {
            let m = &mut state.ados[i];
            m.axpy(C64::new(w, 0.0), &self.k1[i]);
            m.axpy(C64::new(2.0 * w, 0.0), &self.k2[i]);
            m.axpy(C64::new(2.0 * w, 0.0), &self.k3[i]);
            m.axpy(C64::new(w, 0.0), &self.k4[i]);
            max_abs = max_abs.max(m.max_abs());
        }
        state.t = t + h;
        if !max_abs.is_finite() || max_abs > BLOWUP_GUARD {
            return Err(HierarchyError::Instability {
                t: state.t,
                max_abs,
                guard: BLOWUP_GUARD,
            });
        }
        filter(state, self.delta);
        Ok(())
    }
}

/// Propagate `state` to `t_end` with fixed step `h` (a shortened final step
/// lands exactly on `t_end`).
pub fn propagate(
    gen: &HeomGenerator,
    state: &mut HierarchyState,
    t_end: f64,
    h: f64,
    delta: f64,
) -> Result<(), HierarchyError> {
    if t_end < state.t {
        return Err(HierarchyError::Invalid("t_end must be >= state.t".into()));
    }
    if !(h > 0.0) {
        return Err(HierarchyError::Invalid("step must be > 0".into()));
    }
    let mut prop = HeomPropagator::new(gen, delta);
    let n_full = ((t_end - state.t) / h + 1e-9).floor() as usize;
    for _ in 0..n_full {
        prop.step(state, h)?;
    }
    let rem = t_end - state.t;
    if rem > 1e-12 * h.max(1.0) {
        prop.step(state, rem)?;
    }
    state.t = t_end;
    Ok(())
}

/// Bit-exact text checkpoint of a hierarchy state: the time stamp, the
/// defining mode list, and every ADO matrix, all as hex-encoded f64 bits.
pub fn write_checkpoint(state: &HierarchyState, gen: &HeomGenerator) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "# hierarchy checkpoint v1");
    let _ = writeln!(out, "t {:016x}", state.t.to_bits());
    let _ = writeln!(out, "depth {}", gen.index_set().depth());
    let _ = writeln!(out, "ados {}", state.ados.len());
    let _ = writeln!(out, "modes {}", gen.n_modes());
    for m in &state.ados {
        for z in &m.0 {
            let _ = write!(out, "{:016x}{:016x} ", z.re.to_bits(), z.im.to_bits());
        }
        let _ = writeln!(out);
    }
    out
}

pub fn read_checkpoint(text: &str, gen: &HeomGenerator) -> Result<HierarchyState, HierarchyError> {
    let mut t = None;
    let mut n_ados = None;
    let mut matrices = Vec::new();
    let bad = |msg: &str| HierarchyError::Checkpoint(msg.to_string());
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("t ") {
            let bits = u64::from_str_radix(rest.trim(), 16).map_err(|_| bad("bad time bits"))?;
            t = Some(f64::from_bits(bits));
        } else if let Some(rest) = line.strip_prefix("depth ") {
            let d: usize = rest.trim().parse().map_err(|_| bad("bad depth"))?;
            if d != gen.index_set().depth() {
                return Err(bad("checkpoint depth does not match generator"));
            }
        } else if let Some(rest) = line.strip_prefix("ados ") {
            n_ados = Some(rest.trim().parse::<usize>().map_err(|_| bad("bad ado count"))?);
        } else if let Some(rest) = line.strip_prefix("modes ") {
            let k: usize = rest.trim().parse().map_err(|_| bad("bad mode count"))?;
            if k != gen.n_modes() {
                return Err(bad("checkpoint mode count does not match generator"));
            }
        } else {
            let mut vals = [C64::new(0.0, 0.0); 4];
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(bad("matrix line must have 4 tokens"));
            }
            for (slot, tok) in vals.iter_mut().zip(&toks) {
                if tok.len() != 32 {
                    return Err(bad("matrix token must be 32 hex digits"));
                }
                let re = u64::from_str_radix(&tok[..16], 16).map_err(|_| bad("bad hex"))?;
                let im = u64::from_str_radix(&tok[16..], 16).map_err(|_| bad("bad hex"))?;
                *slot = C64::new(f64::from_bits(re), f64::from_bits(im));
            }
            matrices.push(Mat2(vals));
        }
    }
    let t = t.ok_or_else(|| bad("missing time"))?;
    let n = n_ados.ok_or_else(|| bad("missing ado count"))?;
    if matrices.len() != n || n != gen.n_ados() {
        return Err(bad("ado count mismatch"));
    }
    let mut state = HierarchyState { t, ados: matrices, active: vec![false; n] };
    filter(&mut state, 0.0);
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{BathLabel, BathSpec, ExponentialMode, SpectralDensity};

    fn toy_decomposition(modes: Vec<ExponentialMode>) -> BathDecomposition {
        BathDecomposition {
            spec: BathSpec::new(
                SpectralDensity::bandgap(1.0, 2.0, 1.0).unwrap(),
                0.0,
                BathLabel::Slow,
            )
            .unwrap(),
            modes,
            t_max: 50.0,
            certified_error: 0.0,
        }
    }

    #[test]
    fn index_set_counts() {
        let s = AdoIndexSet::build(2, 1, 10_000).unwrap();
        assert_eq!(s.len(), 3);
        let expected: Vec<&[u8]> = vec![&[0, 0], &[1, 0], &[0, 1]];
        for (i, e) in expected.iter().enumerate() {
            assert_eq!(s.counts(i), *e);
        }
        assert_eq!(AdoIndexSet::build(3, 2, 10_000).unwrap().len(), 10);
        // C(14, 4) = 1001, cross-checked against the explicit enumeration
        let big = AdoIndexSet::build(10, 4, 10_000).unwrap();
        assert_eq!(big.len(), 1001);
        let mut seen = std::collections::HashSet::new();
        for i in 0..big.len() {
            assert!(big.level(i) <= 4);
            assert!(seen.insert(big.counts(i).to_vec()));
        }
    }

    #[test]
    fn capacity_ceiling_enforced() {
        match AdoIndexSet::build(10, 4, 1000) {
            Err(HierarchyError::Capacity { count, ceiling }) => {
                assert_eq!(count, 1001);
                assert_eq!(ceiling, 1000);
            }
            other => panic!("expected capacity error, got {:?}", other.map(|s| s.len())),
        }
    }

    #[test]
    fn neighbors_are_mutual() {
        let s = AdoIndexSet::build(3, 3, 10_000).unwrap();
        for i in 0..s.len() {
            for k in 0..3 {
                if let Some(j) = s.up_neighbor(i, k) {
                    assert_eq!(s.down_neighbor(j, k), Some(i));
                }
            }
        }
    }

    #[test]
    fn decoupled_limit_is_unitary() {
        // d_k = 0: the top-level derivative reduces to -i[H0(t), rho]
        let tls = DrivenTls::new(3.0, 1.0, 2.0).unwrap();
        let dec = toy_decomposition(vec![ExponentialMode {
            d: C64::new(0.0, 0.0),
            gamma: C64::new(1.0, 0.0),
        }]);
        let cfg = HeomConfig { depth: 2, delta: 0.0, ..Default::default() };
        let gen = HeomGenerator::new(tls, &[dec], &cfg).unwrap();
        let plus = Mat2::new(
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
        );
        let mut state = HierarchyState::new(&gen, plus);
        let period = tls.period();
        propagate(&gen, &mut state, period, 1e-3, 0.0).unwrap();
        // populations unchanged, coherence picked up the phase int omega dt
        let rho = state.rho();
        assert!((rho.0[0].re - 0.5).abs() < 1e-9);
        assert!((rho.0[3].re - 0.5).abs() < 1e-9);
        let expect = C64::new(0.0, tls.phase(period)).exp() * 0.5;
        assert!((rho.0[1] - expect).norm() < 1e-9, "rho01 = {}", rho.0[1]);
        // every off-root ADO stays empty
        assert!(state.ados[1..].iter().all(|m| m.max_abs() == 0.0));
    }

    #[test]
    fn filter_limits() {
        let tls = DrivenTls::new(3.0, 1.0, 2.0).unwrap();
        let dec = toy_decomposition(vec![
            ExponentialMode { d: C64::new(0.2, 0.1), gamma: C64::new(0.5, 2.0) },
            ExponentialMode { d: C64::new(0.03, -0.05), gamma: C64::new(0.5, -2.0) },
        ]);
        let cfg = HeomConfig { depth: 3, delta: 0.0, ..Default::default() };
        let gen = HeomGenerator::new(tls, &[dec], &cfg).unwrap();
        let mut state = HierarchyState::new(&gen, Mat2::ground());
        propagate(&gen, &mut state, 2.0, 1e-3, 0.0).unwrap();

        // delta = 0 keeps everything
        let before = state.clone();
        filter(&mut state, 0.0);
        for (a, b) in state.ados.iter().zip(before.ados.iter()) {
            assert_eq!(a, b);
        }
        assert_eq!(state.active_count(), gen.n_ados());

        // delta = inf zeroes everything but the root, and the subsequent
        // dynamics of the root alone is unitary (populations frozen)
        filter(&mut state, f64::INFINITY);
        assert_eq!(state.active_count(), 1);
        assert!(state.ados[1..].iter().all(|m| m.max_abs() == 0.0));
        let p1_before = state.rho().p1();
        let mut prop = HeomPropagator::new(&gen, f64::INFINITY);
        for _ in 0..200 {
            prop.step(&mut state, 1e-3).unwrap();
        }
        assert!((state.rho().p1() - p1_before).abs() < 1e-12);
    }

    #[test]
    fn trace_and_hermiticity_preserved() {
        let tls = DrivenTls::new(3.0, 1.0, 3.0).unwrap();
        let dec = toy_decomposition(vec![
            ExponentialMode { d: C64::new(0.3, -0.1), gamma: C64::new(0.4, 2.0) },
            ExponentialMode { d: C64::new(0.05, 0.02), gamma: C64::new(0.4, -2.0) },
            ExponentialMode { d: C64::new(0.07, 0.01), gamma: C64::new(1.1, 0.0) },
        ]);
        let cfg = HeomConfig { depth: 4, delta: 1e-9, ..Default::default() };
        let gen = HeomGenerator::new(tls, &[dec], &cfg).unwrap();
        let mut state = HierarchyState::new(&gen, Mat2::ground());
        let mut prop = HeomPropagator::new(&gen, 1e-9);
        for _ in 0..1000 {
            prop.step(&mut state, 0.002).unwrap();
        }
        assert!((state.rho().trace().re - 1.0).abs() < 1e-8);
        assert!(state.rho().trace().im.abs() < 1e-12);
        assert!(state.rho().herm_defect() < 1e-10);
        assert!(state.rho().is_finite());
        // the conjugate-pair symmetry holds level by level: rho~_n against
        // the adjoint of the partner-permuted index
        let set = gen.index_set();
        for i in 0..set.len() {
            let c = set.counts(i);
            // partner permutation swaps modes 0 <-> 1, fixes mode 2
            let tilde = [c[1], c[0], c[2]];
            let j = set.find(&tilde).unwrap();
            let defect = (state.ados[i] - state.ados[j].adjoint()).max_abs();
            assert!(defect < 1e-10, "pair defect {defect:.2e} at index {i}");
        }
    }

    #[test]
    fn unpaired_modes_are_rejected() {
        let tls = DrivenTls::new(3.0, 1.0, 3.0).unwrap();
        let dec = toy_decomposition(vec![ExponentialMode {
            d: C64::new(0.3, -0.1),
            gamma: C64::new(0.4, 2.0),
        }]);
        let cfg = HeomConfig::default();
        assert!(matches!(
            HeomGenerator::new(tls, &[dec], &cfg),
            Err(HierarchyError::Invalid(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let tls = DrivenTls::new(3.0, 1.0, 3.0).unwrap();
        let dec = toy_decomposition(vec![
            ExponentialMode { d: C64::new(0.3, -0.1), gamma: C64::new(0.4, 2.0) },
            ExponentialMode { d: C64::new(0.1, 0.05), gamma: C64::new(0.4, -2.0) },
        ]);
        let cfg = HeomConfig { depth: 3, delta: 1e-7, ..Default::default() };
        let gen = HeomGenerator::new(tls, &[dec.clone()], &cfg).unwrap();

        let mut full = HierarchyState::new(&gen, Mat2::ground());
        let mut prop = HeomPropagator::new(&gen, 1e-7);
        for _ in 0..100 {
            prop.step(&mut full, 0.005).unwrap();
        }
        let dump = write_checkpoint(&full, &gen);
        let mut resumed = read_checkpoint(&dump, &gen).unwrap();
        assert_eq!(resumed.t.to_bits(), full.t.to_bits());
        filter(&mut resumed, 1e-7);
        filter(&mut full, 1e-7);
        for _ in 0..100 {
            prop.step(&mut full, 0.005).unwrap();
            prop.step(&mut resumed, 0.005).unwrap();
        }
        for (a, b) in full.ados.iter().zip(resumed.ados.iter()) {
            for (za, zb) in a.0.iter().zip(b.0.iter()) {
                assert_eq!(za.re.to_bits(), zb.re.to_bits());
                assert_eq!(za.im.to_bits(), zb.im.to_bits());
            }
        }
    }

    #[test]
    fn blow_up_guard_reports_instability() {
        let tls = DrivenTls::new(3.0, 1.0, 3.0).unwrap();
        // absurdly stiff mode with a huge step
        let dec = toy_decomposition(vec![ExponentialMode {
            d: C64::new(40.0, 0.0),
            gamma: C64::new(0.1, 30.0),
        }]);
        let cfg = HeomConfig { depth: 6, delta: 0.0, ..Default::default() };
        let gen = HeomGenerator::new(tls, &[dec], &cfg).unwrap();
        let mut state = HierarchyState::new(&gen, Mat2::ground());
        let r = propagate(&gen, &mut state, 50.0, 0.5, 0.0);
        assert!(matches!(r, Err(HierarchyError::Instability { .. })));
    }
}
