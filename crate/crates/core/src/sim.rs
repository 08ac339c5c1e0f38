//! The GNAF two-hop channel.
//!
//! Phase 1 (`T1` uses): the source broadcasts `s`. Relay `i` hears
//! `r_i = sqrt(pi1 P) f_i s + v_i`; the destination hears
//! `y1 = sqrt(pi1 P) g0 s + w1` when the variant has a direct link.
//! Phase 2 (`T2` uses): relay `i` sends `sqrt(pi3 P / (pi1 P + 1)) M_i r_i`
//! (`r_i*` for conjugating relays) and, in GNAF-I only, the source also sends
//! `sqrt(pi2 P) A0 s`. The destination receives the superposition plus `w2`.
//!
//! The compact form stacks both phases into `y = scale * S H + W`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::designs::{relay_matrix_set, Design, RelayMatrixSet};
use crate::error::{Error, Result};
use crate::matkernel::{c, conj_vec, inv_sqrt_pd, is_zero, off_diagonal_max, CMatrix, CVector};
use crate::receivers::LinearModel;
use crate::rng::complex_normal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Direct link in both phases; the source keeps transmitting `A0 s`.
    #[serde(rename = "gnaf-i")]
    GnafI,
    /// Direct link in the broadcast phase only.
    #[serde(rename = "gnaf-ii")]
    GnafII,
    /// No direct link.
    #[serde(rename = "gnaf-iii")]
    GnafIII,
    /// Relays only, as in the Jing-Hassibi scheme. Same signal model as GNAF-III.
    #[serde(rename = "jh")]
    Jh,
    /// No relays: the broadcast phase alone, a no-cooperation baseline.
    #[serde(rename = "direct")]
    Direct,
}

impl Variant {
    pub const ALL_RELAYING: [Variant; 4] = [Variant::GnafI, Variant::GnafII, Variant::GnafIII, Variant::Jh];

    /// Whether the destination observes the broadcast phase.
    pub fn hears_broadcast(self) -> bool {
        matches!(self, Variant::GnafI | Variant::GnafII | Variant::Direct)
    }

    pub fn source_cooperates(self) -> bool {
        self == Variant::GnafI
    }

    pub fn uses_relays(self) -> bool {
        self != Variant::Direct
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::GnafI => "gnaf-i",
            Variant::GnafII => "gnaf-ii",
            Variant::GnafIII => "gnaf-iii",
            Variant::Jh => "jh",
            Variant::Direct => "direct",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gnaf-i" => Ok(Variant::GnafI),
            "gnaf-ii" => Ok(Variant::GnafII),
            "gnaf-iii" => Ok(Variant::GnafIII),
            "jh" => Ok(Variant::Jh),
            "direct" => Ok(Variant::Direct),
            _ => Err(Error::Config(format!("unknown variant {s:?} (gnaf-i|gnaf-ii|gnaf-iii|jh|direct)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Total power, linear. Noise variances are 1, so this is the SNR.
    pub p: f64,
    pub pi1: f64,
    pub pi2: f64,
    pub pi3: f64,
    pub t1: usize,
    pub t2: usize,
    pub r: usize,
    /// Number of plain (non-conjugating) relays.
    pub q: usize,
    pub variant: Variant,
}

impl ProtocolParams {
    /// Unit power fractions, dimensions taken from the relay set.
    pub fn new(rs: &RelayMatrixSet, variant: Variant, p: f64) -> Result<Self> {
        let params = ProtocolParams {
            p,
            pi1: 1.0,
            pi2: 1.0,
            pi3: 1.0,
            t1: rs.t1,
            t2: rs.t2,
            r: rs.relays.len(),
            q: rs.q(),
            variant,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_fractions(mut self, pi1: f64, pi2: f64, pi3: f64) -> Result<Self> {
        self.pi1 = pi1;
        self.pi2 = pi2;
        self.pi3 = pi3;
        self.validate()?;
        Ok(self)
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Result<Self> {
        self.p = 10f64.powf(snr_db / 10.0);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.p) || !ok(self.pi1) || !ok(self.pi2) || !ok(self.pi3) {
            return Err(Error::InvalidArgument("P and the power fractions must be positive and finite".into()));
        }
        if self.q > self.r {
            return Err(Error::InvalidArgument(format!("Q = {} exceeds R = {}", self.q, self.r)));
        }
        Ok(())
    }

    /// `sqrt(pi3 pi1 P^2 / (pi1 P + 1))`.
    pub fn scale(&self) -> f64 {
        (self.pi3 * self.pi1 * self.p * self.p / (self.pi1 * self.p + 1.0)).sqrt()
    }

    /// Weight of `s` in the top block, so that `scale * top = sqrt(pi1 P)`.
    pub fn top_factor(&self) -> f64 {
        ((self.pi1 * self.p + 1.0) / (self.pi3 * self.p)).sqrt()
    }

    /// Weight of `A0 s`, so that `scale * a0 = sqrt(pi2 P)`.
    pub fn a0_factor(&self) -> f64 {
        (self.pi2 * (self.pi1 * self.p + 1.0) / (self.pi3 * self.pi1 * self.p)).sqrt()
    }

    /// Relay amplification `sqrt(pi3 P / (pi1 P + 1))`.
    pub fn relay_amplitude(&self) -> f64 {
        self.gamma_prefactor().sqrt()
    }

    /// `pi3 P / (pi1 P + 1)`.
    pub fn gamma_prefactor(&self) -> f64 {
        self.pi3 * self.p / (self.pi1 * self.p + 1.0)
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.p.log10()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub g0: Complex64,
    pub f: Vec<Complex64>,
    pub g: Vec<Complex64>,
}

/// Draws `g0`, then `f_1..f_R`, then `g_1..g_R`, all CN(0, 1).
pub fn sample_channel<R: Rng + ?Sized>(r: usize, rng: &mut R) -> ChannelRealization {
    let g0 = complex_normal(rng);
    let f = (0..r).map(|_| complex_normal(rng)).collect();
    let g = (0..r).map(|_| complex_normal(rng)).collect();
    ChannelRealization { g0, f, g }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSample {
    pub w1: CVector,
    pub v: Vec<CVector>,
    pub w2: CVector,
}

impl NoiseSample {
    /// Draws `w1`, then each `v_i`, then `w2`. All are drawn regardless of
    /// variant so random streams stay aligned.
    pub fn draw<R: Rng + ?Sized>(t1: usize, t2: usize, r: usize, rng: &mut R) -> Self {
        let mut vec = |n: usize| CVector::from_fn(n, |_, _| complex_normal(rng));
        let w1 = vec(t1);
        let v = (0..r).map(|_| vec(t1)).collect();
        let w2 = vec(t2);
        NoiseSample { w1, v, w2 }
    }

    pub fn zeros(t1: usize, t2: usize, r: usize) -> Self {
        NoiseSample { w1: CVector::zeros(t1), v: vec![CVector::zeros(t1); r], w2: CVector::zeros(t2) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialMode {
    Compact,
    TwoPhase,
}

/// `y = scale * S H + W`, split into its factors.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveModel {
    pub s: CMatrix,
    pub h: CVector,
    pub scale: f64,
}

/// Whitened real-linear model for one channel draw.
#[derive(Clone, Debug, PartialEq)]
pub struct WhitenedLink {
    pub model: LinearModel,
    pub whitener: CMatrix,
}

impl WhitenedLink {
    pub fn whiten(&self, y: &CVector) -> CVector {
        &self.whitener * y
    }
}

/// A design deployed over the relay channel.
#[derive(Clone, Debug, PartialEq)]
pub struct GnafLink {
    pub design: Design,
    pub relays: RelayMatrixSet,
    /// Source matrix for the cooperation phase (GNAF-I).
    pub a0: CMatrix,
    pub params: ProtocolParams,
}

impl GnafLink {
    /// Unit power fractions, `A0` the `T2 x T1` rectangular identity.
    pub fn new(design: Design, variant: Variant, p: f64) -> Result<Self> {
        let relays = relay_matrix_set(&design)?;
        let params = ProtocolParams::new(&relays, variant, p)?;
        let a0 = CMatrix::identity(relays.t2, relays.t1);
        Ok(GnafLink { design, relays, a0, params })
    }

    pub fn with_params(mut self, params: ProtocolParams) -> Result<Self> {
        params.validate()?;
        if (params.t1, params.t2, params.r) != (self.relays.t1, self.relays.t2, self.relays.relays.len()) {
            return Err(Error::Dimension("protocol dimensions do not match the design".into()));
        }
        self.params = params;
        Ok(self)
    }

    pub fn with_a0(mut self, a0: CMatrix) -> Result<Self> {
        if a0.shape() != (self.relays.t2, self.relays.t1) {
            return Err(Error::Dimension(format!(
                "A0 must be {}x{}",
                self.relays.t2, self.relays.t1
            )));
        }
        self.a0 = a0;
        Ok(self)
    }

    fn top_rows(&self) -> usize {
        if self.params.variant.hears_broadcast() {
            self.params.t1
        } else {
            0
        }
    }

    fn bottom_rows(&self) -> usize {
        if self.params.variant.uses_relays() {
            self.params.t2
        } else {
            0
        }
    }

    /// Length of the destination's observation.
    pub fn rows(&self) -> usize {
        self.top_rows() + self.bottom_rows()
    }

    /// `H = [g0, g_i f_i (plain), g_i f_i* (conjugating)]`, relays in design order.
    pub fn channel_vector(&self, ch: &ChannelRealization) -> CVector {
        let mut h = CVector::zeros(self.params.r + 1);
        h[0] = ch.g0;
        for (i, relay) in self.relays.relays.iter().enumerate() {
            let f = if relay.conjugated { ch.f[i].conj() } else { ch.f[i] };
            h[i + 1] = ch.g[i] * f;
        }
        h
    }

    pub fn build_effective(&self, ch: &ChannelRealization, s: &CVector) -> Result<EffectiveModel> {
        let p = &self.params;
        if s.len() != p.t1 || ch.f.len() != p.r || ch.g.len() != p.r {
            return Err(Error::Dimension("source vector or channel does not match the link".into()));
        }
        let top = self.top_rows();
        let mut m = CMatrix::zeros(self.rows(), p.r + 1);
        if top > 0 {
            m.view_mut((0, 0), (top, 1)).copy_from(&(s * c(p.top_factor(), 0.0)));
        }
        if self.bottom_rows() > 0 {
            if p.variant.source_cooperates() {
                let col = &self.a0 * s * c(p.a0_factor(), 0.0);
                m.view_mut((top, 0), (p.t2, 1)).copy_from(&col);
            }
            for i in 0..p.r {
                m.view_mut((top, i + 1), (p.t2, 1)).copy_from(&self.relays.apply(i, s));
            }
        }
        Ok(EffectiveModel { s: m, h: self.channel_vector(ch), scale: p.scale() })
    }

    /// Covariance of `W`: identity on the broadcast rows, `I + prefactor *
    /// sum |g_i|^2 M_i M_i^H` on the cooperation rows.
    pub fn noise_cov(&self, ch: &ChannelRealization) -> CMatrix {
        let top = self.top_rows();
        let mut omega = CMatrix::identity(self.rows(), self.rows());
        if self.bottom_rows() > 0 {
            let mut lower = CMatrix::zeros(self.params.t2, self.params.t2);
            for (relay, g) in self.relays.relays.iter().zip(&ch.g) {
                lower += (&relay.matrix * relay.matrix.adjoint()) * c(g.norm_sqr(), 0.0);
            }
            let mut block = omega.view_mut((top, top), (self.params.t2, self.params.t2));
            block += lower * c(self.params.gamma_prefactor(), 0.0);
        }
        omega
    }

    /// `W` for a given set of physical noises.
    pub fn effective_noise(&self, ch: &ChannelRealization, noise: &NoiseSample) -> CVector {
        let top = self.top_rows();
        let mut w = CVector::zeros(self.rows());
        if top > 0 {
            w.rows_mut(0, top).copy_from(&noise.w1);
        }
        if self.bottom_rows() > 0 {
            let amp = c(self.params.relay_amplitude(), 0.0);
            let mut lower = noise.w2.clone();
            for i in 0..self.params.r {
                lower += self.relays.apply(i, &noise.v[i]) * (ch.g[i] * amp);
            }
            w.rows_mut(top, self.params.t2).copy_from(&lower);
        }
        w
    }

    /// Receive vector for one codeword with explicit noises.
    pub fn receive(&self, ch: &ChannelRealization, s: &CVector, noise: &NoiseSample, mode: TrialMode) -> Result<CVector> {
        match mode {
            TrialMode::Compact => {
                let eff = self.build_effective(ch, s)?;
                Ok(&eff.s * &eff.h * c(eff.scale, 0.0) + self.effective_noise(ch, noise))
            }
            TrialMode::TwoPhase => self.two_phase(ch, s, noise),
        }
    }

    /// Draws the noises from `rng` and returns the receive vector.
    pub fn simulate_trial<R: Rng + ?Sized>(
        &self,
        ch: &ChannelRealization,
        s: &CVector,
        rng: &mut R,
        mode: TrialMode,
    ) -> Result<CVector> {
        let noise = NoiseSample::draw(self.params.t1, self.params.t2, self.params.r, rng);
        self.receive(ch, s, &noise, mode)
    }

    fn two_phase(&self, ch: &ChannelRealization, s: &CVector, noise: &NoiseSample) -> Result<CVector> {
        let p = &self.params;
        if s.len() != p.t1 {
            return Err(Error::Dimension("source vector does not match T1".into()));
        }
        let broadcast = c((p.pi1 * p.p).sqrt(), 0.0);
        let top = self.top_rows();
        let mut y = CVector::zeros(self.rows());
        if top > 0 {
            y.rows_mut(0, top).copy_from(&(s * (ch.g0 * broadcast) + &noise.w1));
        }
        if self.bottom_rows() > 0 {
            let amp = c(p.relay_amplitude(), 0.0);
            let mut y2 = noise.w2.clone();
            for (i, relay) in self.relays.relays.iter().enumerate() {
                let heard = s * (ch.f[i] * broadcast) + &noise.v[i];
                let input = if relay.conjugated { conj_vec(&heard) } else { heard };
                y2 += &relay.matrix * input * (amp * ch.g[i]);
            }
            if p.variant.source_cooperates() {
                y2 += &self.a0 * s * (ch.g0 * c((p.pi2 * p.p).sqrt(), 0.0));
            }
            y.rows_mut(top, p.t2).copy_from(&y2);
        }
        Ok(y)
    }

    /// Real-linear whitened model: column `k` is `Omega^{-1/2} scale S(e_k) H`.
    pub fn whitened_model(&self, ch: &ChannelRealization) -> Result<WhitenedLink> {
        let whitener = whitening_matrix(&self.noise_cov(ch))?;
        let mut basis = CMatrix::zeros(self.rows(), self.design.k);
        let mut e = vec![0.0; self.design.k];
        for k in 0..self.design.k {
            e[k] = 1.0;
            let eff = self.build_effective(ch, &self.design.source_vector(&e))?;
            basis.set_column(k, &(&eff.s * &eff.h * c(eff.scale, 0.0)));
            e[k] = 0.0;
        }
        Ok(WhitenedLink { model: LinearModel::new(&whitener * basis), whitener })
    }
}

/// `Omega^{-1/2}`, with a shortcut for diagonal `Omega`.
pub fn whitening_matrix(omega: &CMatrix) -> Result<CMatrix> {
    let scale = omega.diagonal().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if omega.is_square() && is_zero(off_diagonal_max(omega), scale) {
        if let Some(bad) = omega.diagonal().iter().find(|z| z.re <= 0.0 || !is_zero(z.im, scale)) {
            return Err(Error::NotPositiveDefinite(bad.re));
        }
        return Ok(CMatrix::from_diagonal(&omega.diagonal().map(|z| c(1.0 / z.re.sqrt(), 0.0))));
    }
    inv_sqrt_pd(omega)
}

/// `Omega^{-1/2} y`.
pub fn whiten(y: &CVector, omega: &CMatrix) -> Result<CVector> {
    if omega.nrows() != y.len() {
        return Err(Error::Dimension("covariance and observation sizes differ".into()));
    }
    Ok(whitening_matrix(omega)? * y)
}
