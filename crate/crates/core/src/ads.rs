//! Adaptive dynamic sampler.
//!
//! Each cascade turns the data acquired so far into a probability field over
//! Ω, rescales it so its expectation matches the cascade budget, binarizes it
//! with an exact-budget straight-through estimator and acquires the selected
//! locations. The same post-processing chain drives the input-independent
//! optimized sampler.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, RescaleRow, Tape, Var};
use crate::error::{bail, Result};
use crate::forward::{self, SampleMode, SamplingSet};
use crate::nn::{Encoder3d, Mlp};
use crate::schemes::FramePolicy;
use crate::tensor::Tensor;

/// Slope of the logistic surrogate used by the straight-through estimator.
pub const STE_SLOPE: f64 = 10.0;
/// Bernoulli rounds before the deterministic fill.
pub const STE_MAX_ROUNDS: usize = 100;

/// How the per-frame budget is distributed over frames.
#[derive(Debug, Clone, PartialEq)]
pub enum Allocation {
    Uniform,
    /// Total budget redistributed proportionally to positive weights.
    Weighted(Vec<f64>),
}

/// Forward value of the straight-through estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteMode {
    /// 0/1 indicator of the selected locations.
    Hard,
    /// `sigmoid(slope * (p - u))` at free locations; used to check gradients
    /// against finite differences with frozen `u`.
    Surrogate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdsConfig {
    pub cascades: usize,
    pub enc_scales: usize,
    pub enc_channels: usize,
    pub mlp_layers: usize,
    pub mlp_hidden: usize,
    pub policy: FramePolicy,
    pub sampling: SampleMode,
    pub allocation: Allocation,
    pub ste: SteMode,
}

impl Default for AdsConfig {
    fn default() -> Self {
        Self {
            cascades: 2,
            enc_scales: 3,
            enc_channels: 8,
            mlp_layers: 3,
            mlp_hidden: 64,
            policy: FramePolicy::FrameSpecific,
            sampling: SampleMode::Lines,
            allocation: Allocation::Uniform,
            ste: SteMode::Hard,
        }
    }
}

impl AdsConfig {
    pub fn validate(&self, nf: usize) -> Result<()> {
        if self.cascades == 0 || self.enc_scales == 0 || self.mlp_layers == 0 || self.enc_channels == 0 {
            bail!(Invalid, "cascades, encoder scales, encoder width and MLP depth must be >= 1");
        }
        if self.mlp_layers > 1 && self.mlp_hidden == 0 {
            bail!(Invalid, "MLP hidden width must be >= 1");
        }
        if let Allocation::Weighted(w) = &self.allocation {
            if w.len() != nf || w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                bail!(Invalid, "allocation weights must be {} positive values", nf);
            }
        }
        Ok(())
    }
}

/// Budget per mask row and its split over cascades.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Budget {
    /// `n_b^t` per row.
    pub per_frame: Vec<usize>,
    /// `per_cascade[m][t]`; columns sum to `per_frame`.
    pub per_cascade: Vec<Vec<usize>>,
}

/// Splits `n` into `parts` amounts of `n / parts`, the remainder going one
/// each to the last parts.
pub fn split_even(n: usize, parts: usize) -> Vec<usize> {
    let (q, r) = (n / parts, n % parts);
    (0..parts).map(|m| q + usize::from(m >= parts - r)).collect()
}

/// Proportional integer allocation with per-entry caps (largest remainder).
fn allocate_weighted(total: usize, weights: &[f64], caps: &[usize]) -> Result<Vec<usize>> {
    if total > caps.iter().sum::<usize>() {
        bail!(Budget, "weighted budget {} exceeds the free capacity", total);
    }
    let n = weights.len();
    let mut out = vec![0usize; n];
    let mut capped = vec![false; n];
    let mut left = total;
    loop {
        let wsum: f64 = (0..n).filter(|&t| !capped[t]).map(|t| weights[t]).sum();
        let ideal: Vec<f64> = (0..n)
            .map(|t| if capped[t] { 0.0 } else { left as f64 * weights[t] / wsum })
            .collect();
        let over: Vec<usize> = (0..n).filter(|&t| !capped[t] && ideal[t] >= caps[t] as f64).collect();
        if over.is_empty() {
            let mut rem: Vec<(f64, usize)> = Vec::new();
            let mut used = 0;
            for t in (0..n).filter(|&t| !capped[t]) {
                let f = libm::floor(ideal[t]) as usize;
                out[t] = f;
                used += f;
                rem.push((ideal[t] - f as f64, t));
            }
            rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut extra = left - used;
            for &(_, t) in rem.iter().cycle() {
                if extra == 0 {
                    break;
                }
                if out[t] < caps[t] {
                    out[t] += 1;
                    extra -= 1;
                }
            }
            return Ok(out);
        }
        for t in over {
            capped[t] = true;
            out[t] = caps[t];
            left -= caps[t];
        }
    }
}

/// `n_b^t = floor(n_a / R) - |Λ0^t|`, optionally reweighted across rows,
/// then split over `cascades`.
pub fn compute_budget(
    n_a: usize,
    acquired: &[usize],
    r: f64,
    allocation: &Allocation,
    cascades: usize,
) -> Result<Budget> {
    if cascades == 0 {
        bail!(Invalid, "at least one cascade is required");
    }
    let target = forward::budget_count(n_a, r)?;
    let mut per_frame = Vec::with_capacity(acquired.len());
    for (t, &a) in acquired.iter().enumerate() {
        if a > target {
            bail!(
                Budget,
                "row {} already holds {} samples, more than floor({} / {}) = {}",
                t,
                a,
                n_a,
                r,
                target
            );
        }
        per_frame.push(target - a);
    }
    if let Allocation::Weighted(w) = allocation {
        if w.len() != acquired.len() {
            bail!(Invalid, "{} allocation weights for {} rows", w.len(), acquired.len());
        }
        let total = per_frame.iter().sum();
        let caps: Vec<usize> = acquired.iter().map(|&a| n_a - a).collect();
        per_frame = allocate_weighted(total, w, &caps)?;
    }
    let splits: Vec<Vec<usize>> = per_frame.iter().map(|&n| split_even(n, cascades)).collect();
    let per_cascade = (0..cascades).map(|m| splits.iter().map(|s| s[m]).collect()).collect();
    Ok(Budget { per_frame, per_cascade })
}

/// Rescales a nonnegative row so that the mean over `free` indices equals
/// `target_mean`, keeping every entry in `[0, 1]` and non-free entries at 0.
///
/// The row is first divided by its free-index maximum. With current mean μ
/// the down branch (μ >= m) scales by `m / μ`; the up branch maps
/// `p -> 1 - (1 - p)(1 - m)/(1 - μ)`. An all-zero row falls back to the
/// uniform value `m`; targets at or above 1 select everything.
pub fn rescale(src: &[f64], free: &[bool], target_mean: f64) -> Result<Vec<f64>> {
    if src.len() != free.len() {
        bail!(Shape, "row of {} with free mask of {}", src.len(), free.len());
    }
    if src.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        bail!(Numeric, "rescale expects finite nonnegative probabilities");
    }
    if !(target_mean >= 0.0) {
        bail!(Invalid, "target mean {} is negative", target_mean);
    }
    let n_free = free.iter().filter(|&&f| f).count();
    let mut out = vec![0.0; src.len()];
    if n_free == 0 || target_mean == 0.0 {
        return Ok(out);
    }
    let m = target_mean;
    if m >= 1.0 {
        for (o, &f) in out.iter_mut().zip(free) {
            *o = if f { 1.0 } else { 0.0 };
        }
        return Ok(out);
    }
    let max = src.iter().zip(free).filter(|(_, &f)| f).map(|(&x, _)| x).fold(0.0, f64::max);
    if max <= 0.0 {
        for (o, &f) in out.iter_mut().zip(free) {
            *o = if f { m } else { 0.0 };
        }
        return Ok(out);
    }
    let mu = src.iter().zip(free).filter(|(_, &f)| f).map(|(&x, _)| x / max).sum::<f64>() / n_free as f64;
    for ((o, &x), &f) in out.iter_mut().zip(src).zip(free) {
        if !f {
            continue;
        }
        let q = x / max;
        *o = if mu >= m {
            q * (m / mu)
        } else {
            1.0 - (1.0 - q) * ((1.0 - m) / (1.0 - mu))
        };
        *o = o.clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Vector-Jacobian product of [`rescale`] with respect to `src`.
pub fn rescale_vjp(src: &[f64], free: &[bool], target_mean: f64, g: &[f64]) -> Vec<f64> {
    let n = src.len();
    let mut out = vec![0.0; n];
    let n_free = free.iter().filter(|&&f| f).count();
    let m = target_mean;
    if n_free == 0 || !(m > 0.0) || m >= 1.0 {
        return out;
    }
    let mut argmax = None;
    let mut max = 0.0;
    for i in 0..n {
        if free[i] && src[i] > max {
            max = src[i];
            argmax = Some(i);
        }
    }
    let Some(a) = argmax else {
        return out;
    };
    let nf = n_free as f64;
    let q: Vec<f64> = src.iter().map(|&x| x / max).collect();
    let mu = (0..n).filter(|&i| free[i]).map(|i| q[i]).sum::<f64>() / nf;
    let mut gq = vec![0.0; n];
    if mu >= m {
        let s: f64 = (0..n).filter(|&i| free[i]).map(|i| g[i] * q[i]).sum();
        let shared = s * m / (mu * mu * nf);
        for i in (0..n).filter(|&i| free[i]) {
            gq[i] = g[i] * m / mu - shared;
        }
    } else {
        let c = (1.0 - m) / (1.0 - mu);
        let s: f64 = (0..n).filter(|&i| free[i]).map(|i| g[i] * (1.0 - q[i])).sum();
        let shared = s * (1.0 - m) / ((1.0 - mu) * (1.0 - mu) * nf);
        for i in (0..n).filter(|&i| free[i]) {
            gq[i] = g[i] * c - shared;
        }
    }
    let mut through_max = 0.0;
    for i in (0..n).filter(|&i| free[i]) {
        out[i] = gq[i] / max;
        through_max += gq[i] * src[i];
    }
    out[a] -= through_max / (max * max);
    out
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `grad_i * slope * σ(z)(1 - σ(z))` with `z = slope (p_i - u_i)`.
pub fn ste_backward(grad_out: &[f64], p: &[f64], u: &[f64], slope: f64) -> Vec<f64> {
    grad_out
        .iter()
        .zip(p)
        .zip(u)
        .map(|((&g, &pi), &ui)| {
            let s = logistic(slope * (pi - ui));
            g * slope * s * (1.0 - s)
        })
        .collect()
}

/// Result of one exact-budget binarization.
#[derive(Debug, Clone, PartialEq)]
pub struct SteDraw {
    /// Selected indices, ascending.
    pub selected: Vec<usize>,
    /// Last uniform drawn per index (fresh for never-drawn indices).
    pub u: Vec<f64>,
}

/// Selects exactly `k` free indices: Bernoulli rounds accepting `u < p`,
/// a uniform subset of the overshooting round, then a fill by descending
/// `p` after [`STE_MAX_ROUNDS`].
pub fn ste_forward<R: Rng + ?Sized>(p: &[f64], free: &[bool], k: usize, rng: &mut R) -> Result<SteDraw> {
    if p.len() != free.len() {
        bail!(Shape, "row of {} with free mask of {}", p.len(), free.len());
    }
    let n = p.len();
    let n_free = free.iter().filter(|&&f| f).count();
    if k > n_free {
        bail!(Budget, "cannot select {} of {} free locations", k, n_free);
    }
    let mut u: Vec<Option<f64>> = vec![None; n];
    let mut taken = vec![false; n];
    let mut count = 0;
    let mut rounds = 0;
    while count < k && rounds < STE_MAX_ROUNDS {
        rounds += 1;
        let mut accepted = Vec::new();
        for i in 0..n {
            if free[i] && !taken[i] {
                let ui: f64 = rng.random();
                u[i] = Some(ui);
                if ui < p[i] {
                    accepted.push(i);
                }
            }
        }
        if count + accepted.len() > k {
            let (chosen, _) = accepted.partial_shuffle(rng, k - count);
            for &i in chosen.iter() {
                taken[i] = true;
            }
            count = k;
        } else {
            count += accepted.len();
            for i in accepted {
                taken[i] = true;
            }
        }
    }
    if count < k {
        let mut rest: Vec<(f64, f64, usize)> = (0..n)
            .filter(|&i| free[i] && !taken[i])
            .map(|i| (p[i], rng.random::<f64>(), i))
            .collect();
        rest.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
        for &(_, _, i) in rest.iter().take(k - count) {
            taken[i] = true;
        }
    }
    let u = u.into_iter().map(|x| x.unwrap_or_else(|| rng.random())).collect();
    let selected = (0..n).filter(|&i| taken[i]).collect();
    Ok(SteDraw { selected, u })
}

/// Encoder and MLP of one cascade.
#[derive(Debug, Clone)]
pub struct Cascade {
    pub encoder: Encoder3d,
    pub mlp: Mlp,
}

/// Everything one sampling pass leaves on the tape.
#[derive(Debug, Clone)]
pub struct SampleOutput {
    /// Final sampling set Λ = Λ0 ∪ Λ1 ∪ ... ∪ ΛN.
    pub lambda: SamplingSet,
    /// Λ1..ΛN.
    pub cascades: Vec<SamplingSet>,
    /// Rescaled probabilities per cascade, `(rows, n_a)`.
    pub probs: Vec<Var>,
    /// ỹ0..ỹN.
    pub stages: Vec<Var>,
    /// Aggregated measurements ỹN.
    pub y: Var,
    /// Total mask `(rows, n_a)` including Λ0.
    pub mask: Var,
}

/// Shared state of a cascade run.
struct Run<'a> {
    mode: SampleMode,
    policy: FramePolicy,
    ste: SteMode,
    full_y: Var,
    lambda0: &'a SamplingSet,
    budget: Budget,
    rows: usize,
}

fn rows_of(lambda0: &SamplingSet, policy: FramePolicy) -> Result<usize> {
    match policy {
        FramePolicy::FrameSpecific => Ok(lambda0.nf()),
        FramePolicy::Unified => {
            if !lambda0.is_unified() {
                bail!(Invalid, "unified sampling needs the same initial set in every frame");
            }
            Ok(1)
        }
    }
}

impl Run<'_> {
    fn new<'a>(
        lambda0: &'a SamplingSet,
        full_y: Var,
        r: f64,
        policy: FramePolicy,
        allocation: &Allocation,
        cascades: usize,
        ste: SteMode,
    ) -> Result<Run<'a>> {
        let rows = rows_of(lambda0, policy)?;
        let acquired: Vec<usize> = (0..rows).map(|t| lambda0.frame(t).len()).collect();
        let budget = compute_budget(lambda0.omega(), &acquired, r, allocation, cascades)?;
        Ok(Run {
            mode: lambda0.mode(),
            policy,
            ste,
            full_y,
            lambda0,
            budget,
            rows,
        })
    }

    /// Runs every cascade; `raw(tape, ỹ, m)` yields the `(rows, n_a)`
    /// pre-activation field of cascade `m`.
    fn execute<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        rng: &mut R,
        mut raw: impl FnMut(&mut Tape, Var, usize) -> Result<Var>,
    ) -> Result<SampleOutput> {
        let (n1, n2, nf) = (self.lambda0.n1(), self.lambda0.n2(), self.lambda0.nf());
        let n_a = self.lambda0.omega();
        let rows = self.rows;
        let mut acquired: Vec<Vec<usize>> = (0..rows).map(|t| self.lambda0.frame(t).to_vec()).collect();
        let mask0 = self.lambda0.to_rows(self.rows == 1);
        let mut mask = tape.constant(mask0);
        let mut y = tape.mask_kspace(self.full_y, mask, self.mode.layout())?;
        let mut stages = vec![y];
        let mut probs = Vec::new();
        let mut cascade_sets = Vec::new();
        for (m, counts) in self.budget.per_cascade.iter().enumerate() {
            let free: Vec<Vec<bool>> = acquired
                .iter()
                .map(|a| {
                    let mut f = vec![true; n_a];
                    for &i in a {
                        f[i] = false;
                    }
                    f
                })
                .collect();
            let logits = raw(tape, y, m)?;
            let dims = tape.value(logits).dims().to_vec();
            if dims != [rows, n_a] {
                bail!(Shape, "cascade {} produced {:?}, expected [{}, {}]", m, dims, rows, n_a);
            }
            let p = tape.softplus(logits)?;
            let keep: Vec<f64> = free.iter().flatten().map(|&f| if f { 1.0 } else { 0.0 }).collect();
            let p = tape.mask_const(p, keep)?;
            let spec: Vec<RescaleRow> = free
                .iter()
                .zip(counts)
                .map(|(f, &k)| {
                    let n_free = f.iter().filter(|&&x| x).count();
                    RescaleRow {
                        free: f.clone(),
                        target_mean: if n_free == 0 { 0.0 } else { k as f64 / n_free as f64 },
                    }
                })
                .collect();
            let p = tape.rescale(p, spec)?;
            probs.push(p);
            let pv = tape.value(p).data().to_vec();
            let mut value = vec![0.0; rows * n_a];
            let mut us = Vec::with_capacity(rows * n_a);
            let mut picked = Vec::with_capacity(rows);
            for t in 0..rows {
                let span = t * n_a..(t + 1) * n_a;
                let draw = ste_forward(&pv[span.clone()], &free[t], counts[t], rng)?;
                match self.ste {
                    SteMode::Hard => {
                        for &i in &draw.selected {
                            value[t * n_a + i] = 1.0;
                        }
                    }
                    SteMode::Surrogate => {
                        for i in 0..n_a {
                            if free[t][i] {
                                value[t * n_a + i] = logistic(STE_SLOPE * (pv[t * n_a + i] - draw.u[i]));
                            }
                        }
                    }
                }
                us.extend_from_slice(&draw.u);
                acquired[t].extend_from_slice(&draw.selected);
                picked.push(draw.selected);
            }
            let mv = tape.ste(p, Tensor::real(&[rows, n_a], value)?, us, STE_SLOPE)?;
            let gained = tape.mask_kspace(self.full_y, mv, self.mode.layout())?;
            y = tape.add(y, gained)?;
            mask = tape.add(mask, mv)?;
            stages.push(y);
            cascade_sets.push(self.broadcast(picked, n1, n2, nf)?);
        }
        let lambda = self.broadcast(acquired, n1, n2, nf)?;
        Ok(SampleOutput {
            lambda,
            cascades: cascade_sets,
            probs,
            stages,
            y,
            mask,
        })
    }

    fn broadcast(&self, rows: Vec<Vec<usize>>, n1: usize, n2: usize, nf: usize) -> Result<SamplingSet> {
        let frames = match self.policy {
            FramePolicy::FrameSpecific => rows,
            FramePolicy::Unified => vec![rows[0].clone(); nf],
        };
        SamplingSet::new(self.mode, n1, n2, frames)
    }
}

/// The learned adaptive sampler: `cascades` independent encoder + MLP heads.
#[derive(Debug, Clone)]
pub struct AdsNet {
    pub config: AdsConfig,
    pub cascades: Vec<Cascade>,
    dims: [usize; 4],
}

impl AdsNet {
    /// `dims` is `(n1, n2, nc, nf)` of the k-space it will sample.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: &AdsConfig,
        dims: [usize; 4],
        rng: &mut R,
    ) -> Result<Self> {
        let [n1, n2, _, nf] = dims;
        config.validate(nf)?;
        let rows = match config.policy {
            FramePolicy::FrameSpecific => nf,
            FramePolicy::Unified => 1,
        };
        let n_a = config.sampling.omega(n1, n2);
        let mut cascades = Vec::with_capacity(config.cascades);
        for m in 0..config.cascades {
            let prefix = format!("{name}.cascade{m}");
            let encoder = Encoder3d::new(store, &format!("{prefix}.encoder"), 2, config.enc_channels, config.enc_scales, rng);
            let feat = encoder.output_len([n1, n2, nf]);
            let mut sizes = vec![feat];
            sizes.extend(core::iter::repeat_n(config.mlp_hidden, config.mlp_layers - 1));
            sizes.push(rows * n_a);
            let mlp = Mlp::new(store, &format!("{prefix}.mlp"), &sizes, rng);
            cascades.push(Cascade { encoder, mlp });
        }
        Ok(Self {
            config: config.clone(),
            cascades,
            dims,
        })
    }

    /// Raw `(rows, n_a)` field of cascade `m` from measurements `y` and maps
    /// `s`; softplus and zeroing happen in [`AdsNet::sample`].
    pub fn cascade_logits(&self, tape: &mut Tape, store: &ParamStore, m: usize, y: Var, s: Var) -> Result<Var> {
        let [n1, n2, _, nf] = self.dims;
        let img = forward::sense_reduce_var(tape, y, s)?;
        let ch = tape.to_channels(img)?;
        let x = tape.reshape(ch, &[1, 2, n1, n2, nf])?;
        let c = &self.cascades[m];
        let feat = c.encoder.forward(tape, store, x)?;
        let out = c.mlp.forward(tape, store, feat)?;
        let rows = match self.config.policy {
            FramePolicy::FrameSpecific => nf,
            FramePolicy::Unified => 1,
        };
        tape.reshape(out, &[rows, self.config.sampling.omega(n1, n2)])
    }

    /// Probability field of cascade `m` after softplus and zeroing at the
    /// locations already in `acquired` (rows as in the configured policy).
    pub fn cascade_probs(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        m: usize,
        y: Var,
        s: Var,
        acquired: &SamplingSet,
    ) -> Result<Var> {
        let logits = self.cascade_logits(tape, store, m, y, s)?;
        let p = tape.softplus(logits)?;
        let rows = tape.value(p).dims()[0];
        let n_a = acquired.omega();
        let mut keep = vec![1.0; rows * n_a];
        for t in 0..rows {
            for &i in acquired.frame(t) {
                keep[t * n_a + i] = 0.0;
            }
        }
        tape.mask_const(p, keep)
    }

    /// Adaptive acquisition starting from `lambda0` on fully sampled `full_y`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        full_y: Var,
        s: Var,
        lambda0: &SamplingSet,
        r: f64,
        rng: &mut R,
    ) -> Result<SampleOutput> {
        let [n1, n2, _, nf] = self.dims;
        if lambda0.n1() != n1 || lambda0.n2() != n2 || lambda0.nf() != nf || lambda0.mode() != self.config.sampling {
            bail!(Shape, "initial sampling set does not match the sampler grid");
        }
        let run = Run::new(
            lambda0,
            full_y,
            r,
            self.config.policy,
            &self.config.allocation,
            self.config.cascades,
            self.config.ste,
        )?;
        run.execute(tape, rng, |tape, y, m| self.cascade_logits(tape, store, m, y, s))
    }
}

/// Input-independent learned sampler: one logit per location and row, pushed
/// through the same softplus, rescale and straight-through chain.
#[derive(Debug, Clone)]
pub struct OptSampler {
    pub logits: ParamId,
    pub policy: FramePolicy,
    pub mode: SampleMode,
    pub ste: SteMode,
}

impl OptSampler {
    pub fn new(store: &mut ParamStore, name: &str, policy: FramePolicy, mode: SampleMode, n1: usize, n2: usize, nf: usize) -> Self {
        let rows = match policy {
            FramePolicy::FrameSpecific => nf,
            FramePolicy::Unified => 1,
        };
        let n_a = mode.omega(n1, n2);
        let logits = store.add(format!("{name}.logits"), Tensor::full(&[rows, n_a], 0.0));
        Self {
            logits,
            policy,
            mode,
            ste: SteMode::Hard,
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        full_y: Var,
        lambda0: &SamplingSet,
        r: f64,
        rng: &mut R,
    ) -> Result<SampleOutput> {
        if lambda0.mode() != self.mode {
            bail!(Shape, "initial sampling set uses a different sample space");
        }
        let run = Run::new(lambda0, full_y, r, self.policy, &Allocation::Uniform, 1, self.ste)?;
        let logits = tape.param(store, self.logits);
        run.execute(tape, rng, |_, _, _| Ok(logits))
    }
}
