//! Zero-forcing and recursive uplink detectors.
//!
//! The recursive detectors consume the array one antenna at a time:
//! `ŝ_n = f(ŝ_{n−1}, h_n, y_n)`. Each update only touches the local CSI row
//! and observation of antenna `n`, which is what lets the chain simulator
//! run them on isolated cluster nodes.
//!
//! RLS splits into a per-coherence-block preprocessing pass producing
//! `(α_n, z_n)` from `Γ_{n−1}` (O(K²) per antenna) and an O(K) per-RE update.
//! Starting from `Γ₀ = I` and `ŝ₀ = 0` the final RLS estimate equals the ridge
//! solution `(I + HᴴH)⁻¹ Hᴴ y`.

use crate::linalg::{self, axpy, dot_t, hermitianize, matvec_conj, rank1_sub, scale_real};
use crate::signal_model::ChannelMatrix;
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Condition number above which the ZF Gramian is treated as singular.
pub const ZF_CONDITION_LIMIT: f64 = 1e12;

/// Estimate of the user vector after `antenna_index` antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateVector {
    pub values: Vec<C64>,
    pub antenna_index: usize,
}

impl EstimateVector {
    pub fn new(values: Vec<C64>) -> Self {
        Self {
            values,
            antenna_index: 0,
        }
    }

    pub fn zeros(k: usize) -> Self {
        Self::new(vec![C64::new(0.0, 0.0); k])
    }

    /// CN(0, 1) entries, for initial-value fade-out experiments.
    pub fn random(k: usize, seed: u64) -> Self {
        let mut rng = crate::rng::rng_from_seed(seed);
        Self::new(
            (0..k)
                .map(|_| crate::rng::complex_gaussian(&mut rng, 1.0))
                .collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }
}

impl AsRef<[C64]> for EstimateVector {
    fn as_ref(&self) -> &[C64] {
        &self.values
    }
}

/// Outcome of one per-antenna update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Prediction error `ε_n = y_n − h_nᵀ ŝ_{n−1}`.
    pub epsilon: C64,
    pub estimate_after: EstimateVector,
}

/// `Γ_n`, the K × K Hermitian matrix tracked by RLS, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Gamma {
    k: usize,
    data: Vec<C64>,
}

impl Gamma {
    pub fn identity(k: usize) -> Self {
        let mut data = vec![C64::new(0.0, 0.0); k * k];
        for i in 0..k {
            data[i * k + i] = C64::new(1.0, 0.0);
        }
        Self { k, data }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.k + j]
    }

    /// Absorbs antenna row `h`: returns `(α, z)` with `z = Γ h*`,
    /// `α = 1 / (1 + hᵀ z)` and replaces `Γ` by `Γ − α z zᴴ`.
    pub fn absorb(&mut self, h: &[C64]) -> Result<RlsCoeff> {
        if h.len() != self.k {
            return Err(Error::Dimension(format!(
                "CSI row has {} entries, expected K = {}",
                h.len(),
                self.k
            )));
        }
        let z = matvec_conj(&self.data, h);
        let denom = C64::new(1.0, 0.0) + dot_t(h, &z);
        if !denom.re.is_finite() || !denom.im.is_finite() {
            return Err(Error::NonFinite("RLS preprocessing"));
        }
        if denom.im.abs() > 1e-12 * denom.re.abs().max(1.0) {
            return Err(Error::NonRealAlpha { imag: denom.im });
        }
        let alpha = denom.re.recip();
        let az = scale_real(alpha, &z);
        rank1_sub(&mut self.data, &az, &z);
        hermitianize(&mut self.data, self.k);
        if !linalg::all_finite(&self.data) {
            return Err(Error::NonFinite("RLS preprocessing"));
        }
        Ok(RlsCoeff { alpha, z })
    }
}

/// Per-antenna RLS coefficients `(α_n, z_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsCoeff {
    pub alpha: f64,
    pub z: Vec<C64>,
}

/// RLS preprocessing for one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsPrecomp {
    pub block_id: u64,
    pub coeffs: Vec<RlsCoeff>,
    /// `Γ_M` after the last antenna.
    pub gamma: Gamma,
}

/// Runs the `Γ` recursion from `Γ₀ = I_K` over `rows` in order.
pub fn rls_preprocess<'a, I>(rows: I, k: usize) -> Result<RlsPrecomp>
where
    I: IntoIterator<Item = &'a [C64]>,
{
    let mut gamma = Gamma::identity(k);
    let coeffs = rows
        .into_iter()
        .map(|h| gamma.absorb(h))
        .collect::<Result<Vec<_>>>()?;
    Ok(RlsPrecomp {
        block_id: 0,
        coeffs,
        gamma,
    })
}

/// Per-RE RLS update: `ŝ_n = ŝ_{n−1} + α_n z_n ε_n`.
pub fn rls_step(prev: &EstimateVector, h: &[C64], y: C64, coeff: &RlsCoeff) -> StepRecord {
    let mut next = prev.clone();
    let epsilon = rls_update(&mut next, h, y, coeff);
    StepRecord {
        epsilon,
        estimate_after: next,
    }
}

fn rls_update(s: &mut EstimateVector, h: &[C64], y: C64, coeff: &RlsCoeff) -> C64 {
    let epsilon = y - dot_t(h, &s.values);
    linalg::opcount::add(1);
    axpy(epsilon * coeff.alpha, &coeff.z, &mut s.values);
    s.antenna_index += 1;
    epsilon
}

/// SGD update: `ŝ_n = ŝ_{n−1} + μ h_n* ε_n`.
pub fn sgd_step(prev: &EstimateVector, h: &[C64], y: C64, mu: f64) -> StepRecord {
    let mut next = prev.clone();
    let epsilon = sgd_update(&mut next.values, h, y, mu);
    next.antenna_index += 1;
    StepRecord {
        epsilon,
        estimate_after: next,
    }
}

fn sgd_update(x: &mut [C64], h: &[C64], y: C64, mu: f64) -> C64 {
    let epsilon = y - dot_t(h, x);
    linalg::opcount::add(1);
    linalg::axpy_conj(epsilon * mu, h, x);
    epsilon
}

/// Averaged SGD state: raw iterate `x̂_n` and its running average `ŝ_n`,
/// averaged from antenna `n0` on.
#[derive(Debug, Clone, PartialEq)]
pub struct AsgdState {
    pub x: Vec<C64>,
    pub s_avg: EstimateVector,
    pub n: usize,
    pub n0: usize,
}

impl AsgdState {
    pub fn new(s0: EstimateVector, n0: usize) -> Result<Self> {
        if n0 == 0 {
            return Err(Error::InvalidParameter(
                "ASGD averaging onset n0 must be >= 1".into(),
            ));
        }
        Ok(Self {
            x: s0.values.clone(),
            n: s0.antenna_index,
            s_avg: s0,
            n0,
        })
    }

    /// Applies one antenna and returns its prediction error.
    pub fn advance(&mut self, h: &[C64], y: C64, mu: f64) -> C64 {
        let epsilon = sgd_update(&mut self.x, h, y, mu);
        self.n += 1;
        // n' = 1 at the onset: the average of a single iterate is the iterate
        if self.n <= self.n0 {
            self.s_avg.values.copy_from_slice(&self.x);
        } else {
            let weight = ((self.n - self.n0 + 1) as f64).recip();
            for (s, x) in self.s_avg.values.iter_mut().zip(&self.x) {
                *s += (x - *s) * weight;
            }
        }
        self.s_avg.antenna_index = self.n;
        epsilon
    }
}

pub fn asgd_step(state: &AsgdState, h: &[C64], y: C64, mu: f64) -> AsgdState {
    let mut next = state.clone();
    next.advance(h, y, mu);
    next
}

/// SGD step sizes `μ_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSize {
    Constant(f64),
    /// `μ_n` for antennas `1, 2, ...`; the last entry repeats.
    Schedule(Vec<f64>),
}

impl StepSize {
    /// Step size for antenna `n` (1-based).
    pub fn at(&self, n: usize) -> f64 {
        match self {
            Self::Constant(mu) => *mu,
            Self::Schedule(v) => v[(n.max(1) - 1).min(v.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |mu: f64| mu.is_finite() && mu > 0.0;
        let valid = match self {
            Self::Constant(mu) => ok(*mu),
            Self::Schedule(v) => !v.is_empty() && v.iter().all(|&mu| ok(mu)),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "step sizes must be finite and > 0: {self:?}"
            )))
        }
    }
}

/// Recursive detector selection.
#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Rls,
    Sgd { step: StepSize },
    Asgd { step: StepSize, n0: usize },
}

impl Detector {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Rls => Ok(()),
            Self::Sgd { step } => step.validate(),
            Self::Asgd { step, n0 } => {
                step.validate()?;
                if *n0 == 0 {
                    return Err(Error::InvalidParameter("ASGD n0 must be >= 1".into()));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rls => "rls",
            Self::Sgd { .. } => "sgd",
            Self::Asgd { .. } => "asgd",
        }
    }

    pub fn needs_precomp(&self) -> bool {
        matches!(self, Self::Rls)
    }

    pub fn start(&self, s0: EstimateVector) -> Result<ChainEstimate> {
        Ok(match self {
            Self::Asgd { n0, .. } => ChainEstimate::Averaged(AsgdState::new(s0, *n0)?),
            _ => ChainEstimate::Plain(s0),
        })
    }

    /// Applies antenna `h`, `y` to the travelling estimate. `coeff` must be
    /// the antenna's RLS coefficients when the detector is RLS.
    pub fn absorb(
        &self,
        state: &mut ChainEstimate,
        h: &[C64],
        y: C64,
        coeff: Option<&RlsCoeff>,
    ) -> Result<C64> {
        match (self, state) {
            (Self::Rls, ChainEstimate::Plain(s)) => {
                let coeff = coeff.ok_or_else(|| {
                    Error::InvalidParameter("RLS update without preprocessing".into())
                })?;
                Ok(rls_update(s, h, y, coeff))
            }
            (Self::Sgd { step }, ChainEstimate::Plain(s)) => {
                let mu = step.at(s.antenna_index + 1);
                let eps = sgd_update(&mut s.values, h, y, mu);
                s.antenna_index += 1;
                Ok(eps)
            }
            (Self::Asgd { step, .. }, ChainEstimate::Averaged(st)) => {
                let mu = step.at(st.n + 1);
                Ok(st.advance(h, y, mu))
            }
            _ => Err(Error::InvalidParameter(
                "estimate state does not match detector".into(),
            )),
        }
    }
}

/// Estimate travelling along the array. ASGD carries its raw iterate as well.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainEstimate {
    Plain(EstimateVector),
    Averaged(AsgdState),
}

impl ChainEstimate {
    pub fn estimate(&self) -> &EstimateVector {
        match self {
            Self::Plain(s) => s,
            Self::Averaged(st) => &st.s_avg,
        }
    }

    pub fn into_estimate(self) -> EstimateVector {
        match self {
            Self::Plain(s) => s,
            Self::Averaged(st) => st.s_avg,
        }
    }

    /// The vector the prediction error is computed against.
    pub fn predictor(&self) -> &[C64] {
        match self {
            Self::Plain(s) => &s.values,
            Self::Averaged(st) => &st.x,
        }
    }

    pub fn raw_iterate(&self) -> Option<&[C64]> {
        match self {
            Self::Plain(_) => None,
            Self::Averaged(st) => Some(&st.x),
        }
    }

    pub fn antenna_index(&self) -> usize {
        self.estimate().antenna_index
    }
}

/// Detector bound to one channel realization; RLS preprocessing runs once
/// and is reused for every resource element of the coherence block.
#[derive(Debug, Clone)]
pub struct PreparedChain<'a> {
    detector: &'a Detector,
    h: &'a ChannelMatrix,
    precomp: Option<RlsPrecomp>,
}

impl<'a> PreparedChain<'a> {
    pub fn new(detector: &'a Detector, h: &'a ChannelMatrix) -> Result<Self> {
        detector.validate()?;
        let precomp = if detector.needs_precomp() {
            Some(rls_preprocess(h.rows(), h.k_users())?)
        } else {
            None
        };
        Ok(Self {
            detector,
            h,
            precomp,
        })
    }

    pub fn precomp(&self) -> Option<&RlsPrecomp> {
        self.precomp.as_ref()
    }

    fn walk(
        &self,
        y: &[C64],
        s0: EstimateVector,
        mut visit: impl FnMut(&ChainEstimate),
    ) -> Result<ChainEstimate> {
        if y.len() != self.h.m_antennas() {
            return Err(Error::Dimension(format!(
                "received vector has {} samples, channel has {} antennas",
                y.len(),
                self.h.m_antennas()
            )));
        }
        if s0.k() != self.h.k_users() {
            return Err(Error::UserCountMismatch {
                expected: self.h.k_users(),
                got: s0.k(),
            });
        }
        let mut state = self.detector.start(s0)?;
        for (n, (h, &yn)) in self.h.rows().zip(y).enumerate() {
            let coeff = self.precomp.as_ref().map(|p| &p.coeffs[n]);
            self.detector.absorb(&mut state, h, yn, coeff)?;
            visit(&state);
        }
        if !linalg::all_finite(&state.estimate().values) {
            return Err(Error::NonFinite("detector estimate"));
        }
        Ok(state)
    }

    /// All `M` intermediate estimates in antenna order.
    pub fn trajectory(&self, y: &[C64], s0: EstimateVector) -> Result<Vec<EstimateVector>> {
        let mut out = Vec::with_capacity(self.h.m_antennas());
        self.walk(y, s0, |st| out.push(st.estimate().clone()))?;
        Ok(out)
    }

    /// Estimate after the last antenna.
    pub fn detect(&self, y: &[C64], s0: EstimateVector) -> Result<EstimateVector> {
        Ok(self.walk(y, s0, |_| {})?.into_estimate())
    }

    /// Squared error `‖ŝ_n − s‖²` after every antenna, without storing the
    /// trajectory.
    pub fn error_profile(&self, y: &[C64], s0: EstimateVector, s: &[C64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.h.m_antennas());
        self.walk(y, s0, |st| {
            out.push(linalg::dist_sqr(&st.estimate().values, s))
        })?;
        Ok(out)
    }
}

/// Runs a recursive detector over the whole array and returns the estimate
/// after every antenna; the last element is the detector output.
pub fn run_chain(
    detector: &Detector,
    h: &ChannelMatrix,
    y: &[C64],
    s0: EstimateVector,
) -> Result<Vec<EstimateVector>> {
    PreparedChain::new(detector, h)?.trajectory(y, s0)
}

/// Zero-forcing `(HᴴH)⁻¹ Hᴴ y`, solved through an SVD of `H` rather than by
/// forming the Gramian inverse.
pub fn zf_detect(h: &ChannelMatrix, y: &[C64]) -> Result<EstimateVector> {
    let (m, k) = (h.m_antennas(), h.k_users());
    if y.len() != m {
        return Err(Error::Dimension(format!(
            "received vector has {} samples, channel has {m} antennas",
            y.len()
        )));
    }
    let hm = DMatrix::from_row_slice(m, k, h.as_slice());
    let svd = hm.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 {
        (smax / smin).powi(2)
    } else {
        f64::INFINITY
    };
    if condition.is_nan() || condition > ZF_CONDITION_LIMIT {
        return Err(Error::IllConditioned { condition });
    }
    let b = DVector::from_column_slice(y);
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(EstimateVector {
        values: x.iter().copied().collect(),
        antenna_index: m,
    })
}
