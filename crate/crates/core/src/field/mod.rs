//! Non-negative correlated random fields on `Z^d`.
//!
//! Fields are built from i.i.d. innovations on a box enlarged by the window
//! radius, so every kind here has an exactly finite dependence range: values
//! at sites more than `2R` apart (max-norm) are independent.

mod diagnostics;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diagnostics::{
    chi_square_independence, estimate_log_holder, estimate_mixing, ChiSquareResult,
    LogHolderEstimate, MixingDiagnostics,
};

/// Inclusive box `lo..=hi` in `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box corners must share a dimension");
        LatticeBox { lo, hi }
    }

    /// The box `{x : |x - center|_∞ ≤ radius}`.
    pub fn centered(center: &[i64], radius: i64) -> Self {
        LatticeBox {
            lo: center.iter().map(|c| c - radius).collect(),
            hi: center.iter().map(|c| c + radius).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty() || self.lo.iter().zip(&self.hi).any(|(l, h)| h < l)
    }

    /// Side lengths in sites.
    pub fn extents(&self) -> Vec<usize> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| if h < l { 0 } else { (h - l + 1) as usize })
            .collect()
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            self.extents().iter().product()
        }
    }

    pub fn contains(&self, site: &[i64]) -> bool {
        site.len() == self.dim()
            && site
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| l <= x && x <= h)
    }

    /// Row-major index (last axis fastest).
    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let mut idx = 0usize;
        for (a, ext) in self.extents().into_iter().enumerate() {
            idx = idx * ext + (site[a] - self.lo[a]) as usize;
        }
        Some(idx)
    }

    pub fn site_of(&self, mut idx: usize) -> Vec<i64> {
        let ext = self.extents();
        let mut site = vec![0; ext.len()];
        for a in (0..ext.len()).rev() {
            site[a] = self.lo[a] + (idx % ext[a]) as i64;
            idx /= ext[a];
        }
        site
    }

    pub fn sites(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(move |i| self.site_of(i))
    }

    pub fn expanded(&self, r: i64) -> Self {
        LatticeBox {
            lo: self.lo.iter().map(|l| l - r).collect(),
            hi: self.hi.iter().map(|h| h + r).collect(),
        }
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim());
        LatticeBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| *a.min(b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| *a.max(b)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldKind {
    /// Independent `offset + amplitude·U[0,1]` at every site.
    IidUniform,
    /// `offset + amplitude·mean of U[0,1] innovations over |y-x|_∞ ≤ window`.
    MovingAverage { window: u32 },
    /// `offset + amplitude·Z(x)²` with `Z(x)` the normalised sum of standard
    /// Gaussian innovations over the window; `Z(x) ~ N(0,1)` exactly.
    SquaredGaussianMa { window: u32 },
}

impl FieldKind {
    pub fn window(&self) -> u32 {
        match *self {
            FieldKind::IidUniform => 0,
            FieldKind::MovingAverage { window } | FieldKind::SquaredGaussianMa { window } => window,
        }
    }
}

/// Affine parameters of the single-site law. Both must be non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteLaw {
    pub offset: f64,
    pub amplitude: f64,
}

impl Default for SiteLaw {
    fn default() -> Self {
        SiteLaw {
            offset: 0.0,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub law: SiteLaw,
    pub seed: u64,
    pub region: LatticeBox,
}

impl FieldSpec {
    /// Moving average of uniform innovations with window 1.
    pub fn default_on(region: LatticeBox, seed: u64) -> Self {
        FieldSpec {
            kind: FieldKind::MovingAverage { window: 1 },
            law: SiteLaw::default(),
            seed,
            region,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        FieldSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn with_region(&self, region: LatticeBox) -> Self {
        FieldSpec {
            region,
            ..self.clone()
        }
    }

    /// Number of innovations averaged at each site, `(2R+1)^d`.
    pub fn window_volume(&self) -> usize {
        (2 * self.kind.window() as usize + 1).pow(self.region.dim() as u32)
    }

    /// Sites at max-norm distance strictly greater than this are independent.
    pub fn dependence_range(&self) -> u32 {
        2 * self.kind.window()
    }

    /// `E[exp(-V(x))]`, identical at every site.
    pub fn laplace_transform_at_one(&self) -> f64 {
        let SiteLaw { offset, amplitude } = self.law;
        let shift = (-offset).exp();
        match self.kind {
            FieldKind::IidUniform => shift * uniform_laplace(amplitude),
            FieldKind::MovingAverage { .. } => {
                let w = self.window_volume() as f64;
                shift * uniform_laplace(amplitude / w).powf(w)
            }
            FieldKind::SquaredGaussianMa { .. } => shift / (1.0 + 2.0 * amplitude).sqrt(),
        }
    }

    /// Mean of the single-site law.
    pub fn site_mean(&self) -> f64 {
        let SiteLaw { offset, amplitude } = self.law;
        match self.kind {
            FieldKind::IidUniform | FieldKind::MovingAverage { .. } => offset + 0.5 * amplitude,
            FieldKind::SquaredGaussianMa { .. } => offset + amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.region.is_empty() {
            return Err(Error::domain("field region is empty"));
        }
        let SiteLaw { offset, amplitude } = self.law;
        if !(offset >= 0.0 && offset.is_finite()) {
            return Err(Error::domain(format!(
                "site law offset must be finite and non-negative, got {offset}"
            )));
        }
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::domain(format!(
                "site law amplitude must be finite and non-negative, got {amplitude}"
            )));
        }
        Ok(())
    }
}

/// `E[exp(-a U)]` for `U ~ U[0,1]`.
fn uniform_laplace(a: f64) -> f64 {
    if a < 1e-8 {
        1.0 - a / 2.0 + a * a / 6.0
    } else {
        -(-a).exp_m1() / a
    }
}

/// One realisation of the field on `spec.region`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub spec: FieldSpec,
    values: Vec<f64>,
}

impl FieldSample {
    /// Wraps explicit values; used for hand-built potentials in tests and
    /// oracles. Values must be non-negative and cover the region.
    pub fn from_values(spec: FieldSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.region.len() {
            return Err(Error::domain(format!(
                "expected {} values for the region, got {}",
                spec.region.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::domain(format!("field value {v} is negative")));
        }
        Ok(FieldSample { spec, values })
    }

    pub fn region(&self) -> &LatticeBox {
        &self.spec.region
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, site: &[i64]) -> Option<f64> {
        self.spec.region.index_of(site).map(|i| self.values[i])
    }

    /// CSV with columns `x1..xd,value`.
    pub fn to_csv(&self) -> String {
        let d = self.spec.region.dim();
        let mut out = String::from("# schema: field-sample v1\n");
        let header: Vec<String> = (1..=d).map(|a| format!("x{a}")).collect();
        let _ = writeln!(out, "{},value", header.join(","));
        for (i, v) in self.values.iter().enumerate() {
            let site = self.spec.region.site_of(i);
            let coords: Vec<String> = site.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{},{}", coords.join(","), v);
        }
        out
    }
}

/// Draws one realisation. Pure function of the spec (including its seed).
pub fn generate_field(spec: &FieldSpec) -> Result<FieldSample> {
    spec.validate()?;
    let r = spec.kind.window() as i64;
    let support = spec.region.expanded(r);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let SiteLaw { offset, amplitude } = spec.law;

    let values = match spec.kind {
        FieldKind::IidUniform => (0..spec.region.len())
            .map(|_| offset + amplitude * rng.random::<f64>())
            .collect(),
        FieldKind::MovingAverage { .. } => {
            let innovations: Vec<f64> = (0..support.len()).map(|_| rng.random::<f64>()).collect();
            let sums = window_sums(&support, &innovations, r);
            let w = spec.window_volume() as f64;
            sums.into_iter()
                .map(|s| offset + amplitude * (s / w))
                .collect()
        }
        FieldKind::SquaredGaussianMa { .. } => {
            let innovations: Vec<f64> = (0..support.len())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let sums = window_sums(&support, &innovations, r);
            let norm = (spec.window_volume() as f64).sqrt();
            sums.into_iter()
                .map(|s| offset + amplitude * (s / norm).powi(2))
                .collect()
        }
    };
    Ok(FieldSample {
        spec: spec.clone(),
        values,
    })
}

/// Sums of `data` (laid out on `support`) over max-norm windows of radius
/// `r`, evaluated on the box `support` shrunk by `r`. Separable: one running
/// box sum per axis.
fn window_sums(support: &LatticeBox, data: &[f64], r: i64) -> Vec<f64> {
    let mut ext = support.extents();
    let mut cur = data.to_vec();
    let w = (2 * r + 1) as usize;
    for axis in 0..ext.len() {
        let inner: usize = ext[axis + 1..].iter().product();
        let outer: usize = ext[..axis].iter().product();
        let n_in = ext[axis];
        let n_out = n_in - 2 * r as usize;
        let mut next = vec![0.0; outer * n_out * inner];
        for o in 0..outer {
            for i in 0..inner {
                for k in 0..n_out {
                    let mut s = 0.0;
                    for j in k..k + w {
                        s += cur[(o * n_in + j) * inner + i];
                    }
                    next[(o * n_out + k) * inner + i] = s;
                }
            }
        }
        ext[axis] = n_out;
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean_var, trial_seed};
    use rand::Rng;
    use proptest::prelude::*;

    fn line(lo: i64, hi: i64) -> LatticeBox {
        LatticeBox::new(vec![lo], vec![hi])
    }

    #[test]
    fn single_site_uniform_in_unit_interval() {
        for seed in 0..50 {
            let spec = FieldSpec {
                kind: FieldKind::IidUniform,
                law: SiteLaw::default(),
                seed,
                region: line(0, 0),
            };
            let s = generate_field(&spec).unwrap();
            assert_eq!(s.values().len(), 1);
            assert!((0.0..=1.0).contains(&s.values()[0]));
        }
    }

    #[test]
    fn empty_region_is_domain_error() {
        let spec = FieldSpec::default_on(line(3, 2), 0);
        assert!(matches!(generate_field(&spec), Err(Error::Domain(_))));
    }

    #[test]
    fn negative_law_rejected() {
        let mut spec = FieldSpec::default_on(line(0, 3), 0);
        spec.law.offset = -0.5;
        assert!(matches!(generate_field(&spec), Err(Error::Domain(_))));
    }

    #[test]
    fn window_sums_match_brute_force_2d() {
        let support = LatticeBox::new(vec![0, 0], vec![5, 6]);
        let data: Vec<f64> = (0..support.len()).map(|i| (i * 7 % 11) as f64).collect();
        let sums = window_sums(&support, &data, 1);
        let inner = LatticeBox::new(vec![1, 1], vec![4, 5]);
        assert_eq!(sums.len(), inner.len());
        for (k, site) in inner.sites().enumerate() {
            let mut s = 0.0;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    s += data[support.index_of(&[site[0] + dx, site[1] + dy]).unwrap()];
                }
            }
            assert_eq!(sums[k], s);
        }
    }

    #[test]
    fn moving_average_value_is_window_mean_of_innovations() {
        // Reproduce the innovations stream directly and compare.
        let region = line(-2, 2);
        let spec = FieldSpec {
            kind: FieldKind::MovingAverage { window: 1 },
            law: SiteLaw {
                offset: 0.25,
                amplitude: 2.0,
            },
            seed: 99,
            region,
        };
        let sample = generate_field(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let xi: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
        for k in 0..5 {
            let expected = 0.25 + 2.0 * (xi[k] + xi[k + 1] + xi[k + 2]) / 3.0;
            assert!((sample.values()[k] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn laplace_transform_closed_forms() {
        let iid = FieldSpec {
            kind: FieldKind::IidUniform,
            law: SiteLaw::default(),
            seed: 0,
            region: line(0, 0),
        };
        assert!((iid.laplace_transform_at_one() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let c = FieldSpec {
            law: SiteLaw {
                offset: 0.7,
                amplitude: 0.0,
            },
            ..iid.clone()
        };
        assert!((c.laplace_transform_at_one() - (-0.7f64).exp()).abs() < 1e-15);

        // Monte Carlo oracle for the moving-average and squared-Gaussian forms.
        for kind in [
            FieldKind::MovingAverage { window: 1 },
            FieldKind::SquaredGaussianMa { window: 1 },
        ] {
            let spec = FieldSpec {
                kind,
                law: SiteLaw {
                    offset: 0.1,
                    amplitude: 0.8,
                },
                seed: 0,
                region: line(0, 0),
            };
            let draws: Vec<f64> = (0..40_000)
                .map(|t| {
                    let s = generate_field(&spec.with_seed(trial_seed(5, t))).unwrap();
                    (-s.values()[0]).exp()
                })
                .collect();
            let (m, v) = mean_var(&draws);
            let se = (v / draws.len() as f64).sqrt();
            assert!(
                (m - spec.laplace_transform_at_one()).abs() < 4.0 * se,
                "{kind:?}: mc {m} vs closed form {}",
                spec.laplace_transform_at_one()
            );
        }
    }

    #[test]
    fn csv_export_has_columns() {
        let spec = FieldSpec::default_on(LatticeBox::new(vec![0, 0], vec![1, 0]), 3);
        let csv = generate_field(&spec).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "x1,x2,value");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("0,0,"));
        assert!(lines[3].starts_with("1,0,"));
    }

    #[test]
    fn marginal_stationarity() {
        // Mean and variance at two sites agree within 3 combined standard errors.
        let spec = FieldSpec::default_on(line(0, 9), 11);
        let n = 10_000;
        let (a, b): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|t| {
                let s = generate_field(&spec.with_seed(trial_seed(11, t))).unwrap();
                (s.values()[0], s.values()[7])
            })
            .unzip();
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        let se_mean = ((va + vb) / n as f64).sqrt();
        assert!((ma - mb).abs() < 3.0 * se_mean);
        // Var of the sample variance ≈ (μ4 - σ⁴)/n.
        let m4 = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
        let se_var = ((m4(&a, ma) - va * va + m4(&b, mb) - vb * vb) / n as f64).sqrt();
        assert!((va - vb).abs() < 3.0 * se_var);
    }

    proptest! {
        #[test]
        fn samples_are_nonnegative_and_reproducible(
            seed in any::<u64>(),
            window in 0u32..3,
            kind_sel in 0usize..3,
            d in 1usize..3,
            offset in 0.0f64..2.0,
            amplitude in 0.0f64..5.0,
        ) {
            let kind = match kind_sel {
                0 => FieldKind::IidUniform,
                1 => FieldKind::MovingAverage { window },
                _ => FieldKind::SquaredGaussianMa { window },
            };
            let spec = FieldSpec {
                kind,
                law: SiteLaw { offset, amplitude },
                seed,
                region: LatticeBox::centered(&vec![0; d], 3),
            };
            let a = generate_field(&spec).unwrap();
            let b = generate_field(&spec).unwrap();
            prop_assert_eq!(a.values().len(), spec.region.len());
            prop_assert!(a.values().iter().all(|v| *v >= offset));
            let bits_a: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits_a, bits_b);
        }
    }
}
