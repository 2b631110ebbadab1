//! Multi-scale analysis at a single scale: the decay rate `γ(m, L, n)`, the
//! mass `m` and energy threshold `E*`, the `(E, m)`-nonsingularity test,
//! Monte Carlo estimators for the probability bounds, and qualitative
//! localization measurements.

mod ldp;
mod localization;
mod montecarlo;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::RegionSelector;
use crate::hamiltonian::AssembledHamiltonian;
use crate::spectral::{block_norm, spectral_bottom, ShiftedResolvent, SpectralData, COLLISION_TOL};

pub use ldp::{ldp_experiment, LdpReport, LdpVolume};
pub use localization::{
    default_time_grid, dynamical_moment, eigenfunction_decay_fit, DecayFit, DynamicalMomentSpec, MomentOperator,
    MomentTrace,
};
pub use montecarlo::{
    energy_grid, mc_edge_probability, mc_singularity_probability, CubeConfig, EdgeEstimate, Event,
    ProbabilityEstimate, SingularTrial, SingularityEstimate, MIN_TRIALS,
};

/// Default scale-growth exponent, `L_{k+1} = ⌈L_k^α⌉`.
pub const DEFAULT_ALPHA: f64 = 1.5;

/// `γ(m, L, n) = m (1 + L^(-1/8))^(N - n + 1)`.
///
/// # Panics
/// If `n` is outside `1..=big_n`.
pub fn gamma_rate(m: f64, l: f64, n: usize, big_n: usize) -> f64 {
    assert!(n >= 1 && n <= big_n, "particle count {n} outside 1..={big_n}");
    m * (1.0 + l.powf(-0.125)).powi((big_n - n + 1) as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleParameters {
    /// Total number of particles `N`.
    pub big_n: usize,
    pub n: usize,
    pub d: usize,
    /// Current scale.
    pub l: f64,
    /// Initial scale, at which `m` and `E*` are fixed.
    pub l0: f64,
    pub p: f64,
    pub gamma_ct: f64,
    pub m: f64,
    pub e_star: f64,
    pub alpha: f64,
    /// Whether `γ(m, L0, n) < 2^N m` holds.
    pub side_condition: bool,
}

impl ScaleParameters {
    pub fn gamma(&self) -> f64 {
        gamma_rate(self.m, self.l, self.n, self.big_n)
    }

    /// `e^(-γ(m, L, n) L)`
    pub fn threshold(&self) -> f64 {
        (-self.gamma() * self.l).exp()
    }

    /// `L^(-2p 4^(N-n))`
    pub fn paper_bound(&self) -> f64 {
        self.l.powf(-2.0 * self.p * 4f64.powi((self.big_n - self.n) as i32))
    }

    /// `L^(-1/2)`, the spectral-edge threshold.
    pub fn edge_threshold(&self) -> f64 {
        self.l.powf(-0.5)
    }

    /// Same parameters at another scale; `m` and `E*` stay those of `L0`.
    pub fn at_scale(&self, l: f64) -> Self {
        ScaleParameters { l, ..self.clone() }
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::config(format!("scale-growth exponent alpha must exceed 1, got {alpha}")));
        }
        Ok(ScaleParameters { alpha, ..self.clone() })
    }

    pub fn with_particles(&self, n: usize) -> Result<Self> {
        if n < 1 || n > self.big_n {
            return Err(Error::config(format!("particle count n = {n} outside 1..={}", self.big_n)));
        }
        Ok(ScaleParameters { n, ..self.clone() })
    }
}

/// Fixes `m = 2^(-N) γ_ct L0^(-1/4) / (3√2)` and `E* = ½ L0^(-1/2)`.
pub fn derive_parameters(big_n: usize, n: usize, d: usize, l0: f64, p: f64, gamma_ct: f64) -> Result<ScaleParameters> {
    if big_n < 1 || n < 1 || n > big_n {
        return Err(Error::config(format!("particle counts need 1 <= n <= N, got n = {n}, N = {big_n}")));
    }
    if d < 1 {
        return Err(Error::config("dimension d must be at least 1"));
    }
    if !(l0 >= 8.0 && l0.is_finite()) {
        return Err(Error::config(format!("initial scale L0 must be at least 8, got {l0}")));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::config(format!("exponent p must be positive, got {p}")));
    }
    if !(gamma_ct > 0.0 && gamma_ct < 1.0) {
        return Err(Error::config(format!("gamma_ct must lie in (0, 1), got {gamma_ct}")));
    }
    let two_n = 2f64.powi(big_n as i32);
    let m = gamma_ct * l0.powf(-0.25) / (two_n * 3.0 * 2f64.sqrt());
    let e_star = 0.5 * l0.powf(-0.5);
    let gamma = gamma_rate(m, l0, n, big_n);
    if !(gamma < two_n * m) {
        return Err(Error::config(format!(
            "side condition violated: gamma(m, L0, n) = {gamma} is not below 2^N m = {}",
            two_n * m
        )));
    }
    Ok(ScaleParameters {
        big_n,
        n,
        d,
        l: l0,
        l0,
        p,
        gamma_ct,
        m,
        e_star,
        alpha: DEFAULT_ALPHA,
        side_condition: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "NS")]
    Ns,
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NsReason {
    NormOk,
    NormExceeded,
    SpectralCollision,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NsVerdict {
    pub energy: f64,
    pub verdict: Verdict,
    /// `‖1_out G(E) 1_int‖`; absent on a spectral collision.
    pub block_norm: Option<f64>,
    pub threshold: f64,
    pub reason: NsReason,
}

impl NsVerdict {
    pub fn is_ns(&self) -> bool {
        self.verdict == Verdict::Ns
    }
}

/// Decides whether the Hamiltonian's cube is `(E, m)`-nonsingular.
pub fn ns_test(h: &AssembledHamiltonian, scale: &ScaleParameters, energy: f64) -> Result<NsVerdict> {
    let bottom = spectral_bottom(h, 1)?;
    ns_test_with(h, &bottom, scale, energy)
}

/// [`ns_test`] with a precomputed spectral bottom of `h`.
pub fn ns_test_with(h: &AssembledHamiltonian, bottom: &SpectralData, scale: &ScaleParameters, energy: f64) -> Result<NsVerdict> {
    if (h.cube.half_side() - scale.l).abs() > 1e-12 * scale.l {
        return Err(Error::domain(format!(
            "cube half-side {} does not match the scale L = {}",
            h.cube.half_side(),
            scale.l
        )));
    }
    if h.cube.n() != scale.n {
        return Err(Error::domain(format!(
            "cube has {} particles, scale parameters {}",
            h.cube.n(),
            scale.n
        )));
    }
    let threshold = scale.threshold();
    let collision = NsVerdict {
        energy,
        verdict: Verdict::S,
        block_norm: None,
        threshold,
        reason: NsReason::SpectralCollision,
    };
    if (bottom.e0 - energy).abs() <= COLLISION_TOL {
        return Ok(collision);
    }
    let int = h.cube.mask_indices(&RegionSelector::Interior)?;
    let out = h.cube.mask_indices(&RegionSelector::Outer)?;
    let norm = match ShiftedResolvent::new(&h.matrix, energy, bottom).and_then(|r| block_norm(&r, &int, &out)) {
        Ok(b) => b.norm,
        Err(Error::SpectralCollision { .. }) => return Ok(collision),
        Err(e) => return Err(e),
    };
    let ok = norm <= threshold;
    Ok(NsVerdict {
        energy,
        verdict: if ok { Verdict::Ns } else { Verdict::S },
        block_norm: Some(norm),
        threshold,
        reason: if ok { NsReason::NormOk } else { NsReason::NormExceeded },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleSequence {
    pub scales: Vec<f64>,
    /// True when the budget cut the sequence short.
    pub truncated: bool,
}

/// `L_0, L_1 = ⌈L_0^α⌉, …` with `count` entries, stopping early (with a
/// warning) once a scale would exceed `max_scale`.
pub fn scale_sequence(l0: f64, alpha: f64, count: usize, max_scale: f64) -> Result<ScaleSequence> {
    if !(alpha > 1.0) {
        return Err(Error::config(format!("scale-growth exponent alpha must exceed 1, got {alpha}")));
    }
    if !(l0 >= 8.0 && l0.is_finite()) || l0.fract() != 0.0 {
        return Err(Error::config(format!("initial scale L0 must be an integer of at least 8, got {l0}")));
    }
    if count == 0 {
        return Err(Error::config("scale count must be at least 1"));
    }
    if l0 > max_scale {
        return Err(Error::resource(format!("initial scale {l0} already exceeds the budget {max_scale}")));
    }
    let mut scales = vec![l0];
    let mut truncated = false;
    while scales.len() < count {
        let next = ceil_tolerant(scales.last().unwrap().powf(alpha));
        if next > max_scale {
            log::warn!(
                "scale sequence truncated after {} entries: next scale {next} exceeds budget {max_scale}",
                scales.len()
            );
            truncated = true;
            break;
        }
        scales.push(next);
    }
    Ok(ScaleSequence { scales, truncated })
}

/// Ceiling that treats values within rounding of an integer as that integer.
fn ceil_tolerant(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v.abs().max(1.0) {
        r
    } else {
        v.ceil()
    }
}
