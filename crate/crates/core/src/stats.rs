//! Exact photon-number statistics for the write/read pair source.
//!
//! Everything here works on a truncated joint probability mass function
//! over the photon numbers `(n1, n2)` of fields 1 and 2. The chain
//! source -> read transfer -> detection thinning -> background is the
//! analytic counterpart of the Monte Carlo in [`crate::engine`] and is the
//! oracle the simulation is checked against.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default largest photon number kept per mode.
pub const DEFAULT_CUTOFF: usize = 20;
/// Default upper bound on the probability mass discarded by the cutoff.
pub const DEFAULT_TRUNCATION_THRESHOLD: f64 = 1e-10;
const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("cutoff must be at least 1")]
    InvalidCutoff,
    #[error("truncation mass {mass:e} exceeds threshold {threshold:e} at cutoff {cutoff}")]
    TruncationExceeded {
        mass: f64,
        threshold: f64,
        cutoff: usize,
    },
    #[error("pmf has {got} entries, expected {expected}")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("negative or non-finite mass {mass} at ({n1}, {n2})")]
    InvalidMass { n1: usize, n2: usize, mass: f64 },
    #[error("pmf plus truncation mass sums to {total}, not 1")]
    NotNormalized { total: f64 },
    #[error("correlation inputs must be positive (got {name} = {value})")]
    NonPositive { name: &'static str, value: f64 },
}

fn check_unit(name: &'static str, value: f64) -> Result<(), StatsError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(StatsError::OutOfRange {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

fn check_nonneg(name: &'static str, value: f64) -> Result<(), StatsError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(StatsError::OutOfRange {
            name,
            value,
            range: "[0, inf)",
        })
    }
}

fn check_excitation(p: f64) -> Result<(), StatsError> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(StatsError::OutOfRange {
            name: "p",
            value: p,
            range: "[0, 1)",
        })
    }
}

/// Truncated joint distribution of photon numbers in fields 1 and 2.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    cutoff: usize,
    pmf: Vec<f64>,
    truncation_mass: f64,
    threshold: f64,
}

impl PhotonDistribution {
    /// Builds a distribution from a row-major `(cutoff + 1)^2` table indexed
    /// by `n1 * (cutoff + 1) + n2`, validating every invariant.
    pub fn from_pmf(
        cutoff: usize,
        pmf: Vec<f64>,
        truncation_mass: f64,
        threshold: f64,
    ) -> Result<Self, StatsError> {
        if cutoff < 1 {
            return Err(StatsError::InvalidCutoff);
        }
        let side = cutoff + 1;
        if pmf.len() != side * side {
            return Err(StatsError::ShapeMismatch {
                got: pmf.len(),
                expected: side * side,
            });
        }
        for (i, &mass) in pmf.iter().enumerate() {
            if !(mass >= 0.0 && mass.is_finite()) {
                return Err(StatsError::InvalidMass {
                    n1: i / side,
                    n2: i % side,
                    mass,
                });
            }
        }
        if !(truncation_mass >= 0.0 && truncation_mass.is_finite()) {
            return Err(StatsError::InvalidMass {
                n1: side,
                n2: side,
                mass: truncation_mass,
            });
        }
        if truncation_mass > threshold {
            return Err(StatsError::TruncationExceeded {
                mass: truncation_mass,
                threshold,
                cutoff,
            });
        }
        let total = pmf.iter().sum::<f64>() + truncation_mass;
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(StatsError::NotNormalized { total });
        }
        Ok(Self {
            cutoff,
            pmf,
            truncation_mass,
            threshold,
        })
    }

    /// Both modes in vacuum.
    pub fn vacuum(cutoff: usize) -> Result<Self, StatsError> {
        if cutoff < 1 {
            return Err(StatsError::InvalidCutoff);
        }
        let side = cutoff + 1;
        let mut pmf = vec![0.0; side * side];
        pmf[0] = 1.0;
        Self::from_pmf(cutoff, pmf, 0.0, DEFAULT_TRUNCATION_THRESHOLD)
    }

    /// Independent Poisson modes with means `lam1` and `lam2`.
    pub fn poisson_product(lam1: f64, lam2: f64, cutoff: usize) -> Result<Self, StatsError> {
        Self::vacuum(cutoff)?.convolved_poisson(lam1, lam2)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn truncation_mass(&self) -> f64 {
        self.truncation_mass
    }

    pub fn truncation_threshold(&self) -> f64 {
        self.threshold
    }

    /// Row-major table, see [`PhotonDistribution::from_pmf`].
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn get(&self, n1: usize, n2: usize) -> f64 {
        if n1 > self.cutoff || n2 > self.cutoff {
            return 0.0;
        }
        self.pmf[n1 * (self.cutoff + 1) + n2]
    }

    pub fn marginal1(&self) -> Vec<f64> {
        let side = self.cutoff + 1;
        (0..side)
            .map(|n1| self.pmf[n1 * side..(n1 + 1) * side].iter().sum())
            .collect()
    }

    pub fn marginal2(&self) -> Vec<f64> {
        let side = self.cutoff + 1;
        (0..side)
            .map(|n2| (0..side).map(|n1| self.pmf[n1 * side + n2]).sum())
            .collect()
    }

    /// Applies `kernel[n][k]` (mass moved from `n` to `k`) independently
    /// along each axis. A `None` kernel leaves that axis unchanged.
    fn transformed(&self, k1: Option<&[Vec<f64>]>, k2: Option<&[Vec<f64>]>) -> Vec<f64> {
        let side = self.cutoff + 1;
        let mut cur = self.pmf.clone();
        if let Some(k1) = k1 {
            let mut out = vec![0.0; side * side];
            for (n1, row) in k1.iter().enumerate() {
                let src = &cur[n1 * side..(n1 + 1) * side];
                for (j1, &w) in row.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let dst = &mut out[j1 * side..(j1 + 1) * side];
                    for (d, &m) in dst.iter_mut().zip(src) {
                        *d += w * m;
                    }
                }
            }
            cur = out;
        }
        if let Some(k2) = k2 {
            let mut out = vec![0.0; side * side];
            for n1 in 0..side {
                let src = &cur[n1 * side..(n1 + 1) * side];
                let dst = &mut out[n1 * side..(n1 + 1) * side];
                for (n2, &m) in src.iter().enumerate() {
                    if m == 0.0 {
                        continue;
                    }
                    for (j2, &w) in k2[n2].iter().enumerate() {
                        dst[j2] += w * m;
                    }
                }
            }
            cur = out;
        }
        cur
    }

    fn thinned(&self, eff1: f64, eff2: f64) -> Self {
        let k1 = (eff1 != 1.0).then(|| binomial_kernel(self.cutoff, eff1));
        let k2 = (eff2 != 1.0).then(|| binomial_kernel(self.cutoff, eff2));
        Self {
            cutoff: self.cutoff,
            pmf: self.transformed(k1.as_deref(), k2.as_deref()),
            truncation_mass: self.truncation_mass,
            threshold: self.threshold,
        }
    }

    fn convolved_poisson(&self, lam1: f64, lam2: f64) -> Result<Self, StatsError> {
        check_nonneg("lam1", lam1)?;
        check_nonneg("lam2", lam2)?;
        let k1 = (lam1 > 0.0).then(|| shift_kernel(&poisson_pmf(lam1, self.cutoff)));
        let k2 = (lam2 > 0.0).then(|| shift_kernel(&poisson_pmf(lam2, self.cutoff)));
        let pmf = self.transformed(k1.as_deref(), k2.as_deref());
        // mass shifted past the cutoff
        let lost = (self.pmf.iter().sum::<f64>() - pmf.iter().sum::<f64>()).max(0.0);
        let truncation_mass = self.truncation_mass + lost;
        Self::from_pmf(self.cutoff, pmf, truncation_mass, self.threshold)
    }
}

/// `kernel[n][n + k] = addend[k]`, clipped at the cutoff.
fn shift_kernel(addend: &[f64]) -> Vec<Vec<f64>> {
    let side = addend.len();
    (0..side)
        .map(|n| {
            let mut row = vec![0.0; side];
            row[n..].copy_from_slice(&addend[..side - n]);
            row
        })
        .collect()
}

/// `kernel[n][k]` is the probability that `k` of `n` photons survive.
fn binomial_kernel(cutoff: usize, eff: f64) -> Vec<Vec<f64>> {
    let pascal = pascal_triangle(cutoff);
    (0..=cutoff)
        .map(|n| {
            (0..=n)
                .map(|k| {
                    pascal[n][k] * eff.powi(k as i32) * (1.0 - eff).powi((n - k) as i32)
                })
                .collect()
        })
        .collect()
}

fn pascal_triangle(n_max: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut row = vec![1.0; n + 1];
        for k in 1..n {
            row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
        }
        rows.push(row);
    }
    rows
}

fn poisson_pmf(lam: f64, k_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max + 1);
    let mut term = (-lam).exp();
    out.push(term);
    for k in 1..=k_max {
        term *= lam / k as f64;
        out.push(term);
    }
    out
}

/// Mass the pair source leaves above `cutoff`: `(p / (1 + p))^(cutoff + 1)`.
pub fn pair_tail_mass(p: f64, cutoff: usize) -> f64 {
    (p / (1.0 + p)).powi(cutoff as i32 + 1)
}

/// Smallest cutoff (never below [`DEFAULT_CUTOFF`]) that keeps the pair
/// source tail under `threshold`, plus headroom for background convolution.
pub fn auto_cutoff(p: f64, threshold: f64) -> usize {
    const HEADROOM: usize = 8;
    let mut cutoff = 1;
    while pair_tail_mass(p, cutoff) > threshold && cutoff < 4096 {
        cutoff += 1;
    }
    (cutoff + HEADROOM).max(DEFAULT_CUTOFF)
}

/// Diagonal pair law `P(n, n) = p^n / (1 + p)^(n + 1)`: both fields carry
/// the same photon number and each marginal is thermal with mean `p`.
pub fn pair_distribution(p: f64, cutoff: usize) -> Result<PhotonDistribution, StatsError> {
    pair_distribution_with_threshold(p, cutoff, DEFAULT_TRUNCATION_THRESHOLD)
}

pub fn pair_distribution_with_threshold(
    p: f64,
    cutoff: usize,
    threshold: f64,
) -> Result<PhotonDistribution, StatsError> {
    check_excitation(p)?;
    if cutoff < 1 {
        return Err(StatsError::InvalidCutoff);
    }
    let side = cutoff + 1;
    let mut pmf = vec![0.0; side * side];
    let ratio = p / (1.0 + p);
    let mut mass = 1.0 / (1.0 + p);
    for n in 0..side {
        pmf[n * side + n] = mass;
        mass *= ratio;
    }
    PhotonDistribution::from_pmf(cutoff, pmf, pair_tail_mass(p, cutoff), threshold)
}

/// Classical twin beams: one thermal intensity `I` with mean `p` per trial,
/// and both fields independently Poisson with mean `I`.
///
/// `P(a, b) = C(a + b, a) p^(a+b) / (1 + 2p)^(a+b+1)`.
pub fn classical_twin_distribution(
    p: f64,
    cutoff: usize,
) -> Result<PhotonDistribution, StatsError> {
    check_excitation(p)?;
    if cutoff < 1 {
        return Err(StatsError::InvalidCutoff);
    }
    let side = cutoff + 1;
    let pascal = pascal_triangle(2 * cutoff);
    let base = 1.0 / (1.0 + 2.0 * p);
    let step = p * base;
    let mut pmf = vec![0.0; side * side];
    for a in 0..side {
        for b in 0..side {
            pmf[a * side + b] = pascal[a + b][a] * step.powi((a + b) as i32) * base;
        }
    }
    let truncation_mass = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    PhotonDistribution::from_pmf(cutoff, pmf, truncation_mass, DEFAULT_TRUNCATION_THRESHOLD)
}

/// Read transfer: field 2 is binomially thinned with success `zeta`.
pub fn apply_read_efficiency(
    d: &PhotonDistribution,
    zeta: f64,
) -> Result<PhotonDistribution, StatsError> {
    check_unit("zeta", zeta)?;
    Ok(d.thinned(1.0, zeta))
}

/// Independent binomial loss on each mode.
pub fn thin(d: &PhotonDistribution, eta1: f64, eta2: f64) -> Result<PhotonDistribution, StatsError> {
    check_unit("eta1", eta1)?;
    check_unit("eta2", eta2)?;
    Ok(d.thinned(eta1, eta2))
}

/// Adds independent Poisson counts of mean `lam1` and `lam2` to the modes.
pub fn add_background(
    d: &PhotonDistribution,
    lam1: f64,
    lam2: f64,
) -> Result<PhotonDistribution, StatsError> {
    d.convolved_poisson(lam1, lam2)
}

/// Means and normalized second-order correlations. A normalized value whose
/// denominator vanishes is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mean1: f64,
    pub mean2: f64,
    pub g2_11: Option<f64>,
    pub g2_22: Option<f64>,
    pub g2_12: Option<f64>,
}

impl MomentSet {
    /// `g2_12^2 / (g2_11 g2_22)` when all three are defined and positive.
    pub fn cs_ratio(&self) -> Option<f64> {
        match (self.g2_11, self.g2_22, self.g2_12) {
            (Some(a), Some(b), Some(c)) if a > 0.0 && b > 0.0 => Some(c * c / (a * b)),
            _ => None,
        }
    }
}

pub fn moments(d: &PhotonDistribution) -> MomentSet {
    let side = d.cutoff + 1;
    let (mut m1, mut m2, mut f11, mut f22, mut x12) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for n1 in 0..side {
        for n2 in 0..side {
            let w = d.pmf[n1 * side + n2];
            let (a, b) = (n1 as f64, n2 as f64);
            m1 += w * a;
            m2 += w * b;
            f11 += w * a * (a - 1.0);
            f22 += w * b * (b - 1.0);
            x12 += w * a * b;
        }
    }
    let normalized = |num: f64, den: f64| (den > 0.0).then(|| num / den);
    MomentSet {
        mean1: m1,
        mean2: m2,
        g2_11: normalized(f11, m1 * m1),
        g2_22: normalized(f22, m2 * m2),
        g2_12: normalized(x12, m1 * m2),
    }
}

/// The ideal violation ratio `[(1 + p) / (2p)]^2` quoted for the protocol.
pub fn ideal_cs_ratio_paper(p: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(StatsError::OutOfRange {
            name: "p",
            value: p,
            range: "(0, inf)",
        });
    }
    let r = (1.0 + p) / (2.0 * p);
    Ok(r * r)
}

/// Closed form of the ideal ratio for the diagonal pair law:
/// `g2_12 = 2 + 1/p` with thermal autocorrelations gives `[(1 + 2p) / (2p)]^2`.
pub fn ideal_cs_ratio_model(p: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(StatsError::OutOfRange {
            name: "p",
            value: p,
            range: "(0, inf)",
        });
    }
    let r = (1.0 + 2.0 * p) / (2.0 * p);
    Ok(r * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Satisfied,
    Violated,
}

impl Verdict {
    pub fn from_ratio(ratio: f64) -> Self {
        if ratio > 1.0 {
            Verdict::Violated
        } else {
            Verdict::Satisfied
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalCheck {
    pub ratio: f64,
    pub verdict: Verdict,
}

/// Classical fields obey `g12^2 <= g11 g22`.
pub fn cs_holds_classical(g11: f64, g22: f64, g12: f64) -> Result<ClassicalCheck, StatsError> {
    for (name, value) in [("g11", g11), ("g22", g22), ("g12", g12)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(StatsError::NonPositive { name, value });
        }
    }
    let ratio = g12 * g12 / (g11 * g22);
    Ok(ClassicalCheck {
        ratio,
        verdict: Verdict::from_ratio(ratio),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Correlated pairs with thermal marginals (the write/read process).
    #[default]
    Pair,
    /// Classical twin beams sharing one thermal intensity per trial.
    ClassicalTwin,
}

/// Per-trial source and noise parameters. Backgrounds and leakage are mean
/// counts per gate on the optical path of the given field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    #[serde(default)]
    pub kind: SourceKind,
    pub p: f64,
    pub zeta: f64,
    pub eta1: f64,
    pub eta2: f64,
    #[serde(default)]
    pub bg1: f64,
    #[serde(default)]
    pub bg2: f64,
    #[serde(default)]
    pub leak2: f64,
}

impl SourceParams {
    /// Lossless, noiseless pair source.
    pub fn ideal(p: f64) -> Self {
        Self {
            kind: SourceKind::Pair,
            p,
            zeta: 1.0,
            eta1: 1.0,
            eta2: 1.0,
            bg1: 0.0,
            bg2: 0.0,
            leak2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        check_excitation(self.p)?;
        check_unit("zeta", self.zeta)?;
        check_unit("eta1", self.eta1)?;
        check_unit("eta2", self.eta2)?;
        check_nonneg("bg1", self.bg1)?;
        check_nonneg("bg2", self.bg2)?;
        check_nonneg("leak2", self.leak2)?;
        Ok(())
    }

    pub fn source_distribution(&self, cutoff: usize) -> Result<PhotonDistribution, StatsError> {
        match self.kind {
            SourceKind::Pair => pair_distribution(self.p, cutoff),
            SourceKind::ClassicalTwin => classical_twin_distribution(self.p, cutoff),
        }
    }

    /// Full noisy joint distribution of per-gate counts.
    pub fn detected_distribution(&self, cutoff: usize) -> Result<PhotonDistribution, StatsError> {
        self.validate()?;
        let d = self.source_distribution(cutoff)?;
        let d = apply_read_efficiency(&d, self.zeta)?;
        let d = thin(&d, self.eta1, self.eta2)?;
        add_background(&d, self.bg1, self.bg2 + self.leak2)
    }
}

/// Analytic per-gate moments of the full noisy source.
pub fn predict_report(sp: &SourceParams, cutoff: usize) -> Result<MomentSet, StatsError> {
    Ok(moments(&sp.detected_distribution(cutoff)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(d: &PhotonDistribution) -> f64 {
        d.pmf().iter().sum::<f64>() + d.truncation_mass()
    }

    #[test]
    fn vacuum_source() {
        let d = pair_distribution(0.0, 4).unwrap();
        assert_eq!(d.get(0, 0), 1.0);
        assert_eq!(d.pmf().iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn pair_low_orders() {
        let d = pair_distribution(0.01, 20).unwrap();
        assert!((d.get(0, 0) - 1.0 / 1.01).abs() < 1e-15);
        assert!((d.get(1, 1) - 0.01 / (1.01 * 1.01)).abs() < 1e-15);
        assert_eq!(d.get(1, 0), 0.0);
        let mean: f64 = d
            .marginal1()
            .iter()
            .enumerate()
            .map(|(n, w)| n as f64 * w)
            .sum();
        assert!((mean - 0.01).abs() < 1e-9);
    }

    #[test]
    fn pair_rejects_bad_inputs() {
        assert!(matches!(
            pair_distribution(1.0, 20),
            Err(StatsError::OutOfRange { name: "p", .. })
        ));
        assert!(matches!(
            pair_distribution(-0.1, 20),
            Err(StatsError::OutOfRange { .. })
        ));
        assert!(matches!(
            pair_distribution(0.5, 5),
            Err(StatsError::TruncationExceeded { .. })
        ));
        assert_eq!(pair_distribution(0.01, 0), Err(StatsError::InvalidCutoff));
    }

    #[test]
    fn read_efficiency_cases() {
        let d = pair_distribution(0.1, 20).unwrap();
        assert_eq!(apply_read_efficiency(&d, 1.0).unwrap(), d);
        let lost = apply_read_efficiency(&d, 0.0).unwrap();
        let m2 = lost.marginal2();
        assert!((m2[0] - (1.0 - lost.truncation_mass())).abs() < 1e-14);
        let q = d.get(1, 1);
        let r = apply_read_efficiency(&d, 0.6).unwrap();
        // (1,1) only receives mass from the (1,1) input
        assert!((r.get(1, 1) - 0.6 * q).abs() < 1e-16);
        assert!((r.get(1, 0) - 0.4 * q).abs() < 1e-16);
        assert!((total(&r) - 1.0).abs() < 1e-12);
        assert!(apply_read_efficiency(&d, 1.2).is_err());
    }

    #[test]
    fn thinning_cases() {
        let d = pair_distribution(0.05, 20).unwrap();
        assert_eq!(thin(&d, 1.0, 1.0).unwrap(), d);
        let m = moments(&thin(&pair_distribution(0.01, 20).unwrap(), 0.15, 1.0).unwrap());
        assert!((m.mean1 - 0.0015).abs() < 1e-9);
        assert!(thin(&d, -0.1, 1.0).is_err());
    }

    #[test]
    fn background_cases() {
        let d = pair_distribution(0.05, 20).unwrap();
        let same = add_background(&d, 0.0, 0.0).unwrap();
        for (a, b) in same.pmf().iter().zip(d.pmf()) {
            assert!((a - b).abs() < 1e-16);
        }
        let v = add_background(&PhotonDistribution::vacuum(20).unwrap(), 0.1, 0.0).unwrap();
        let m1 = v.marginal1();
        let mut expected = (-0.1f64).exp();
        for (k, w) in m1.iter().enumerate().take(8) {
            assert!((w - expected).abs() < 1e-15, "k={k}");
            expected *= 0.1 / (k + 1) as f64;
        }
        let before = moments(&d).g2_12.unwrap();
        let after = moments(&add_background(&d, 0.01, 0.02).unwrap()).g2_12.unwrap();
        assert!((after - 1.0).abs() < (before - 1.0).abs());
        assert!(add_background(&d, -1.0, 0.0).is_err());
    }

    #[test]
    fn background_can_overflow_cutoff() {
        let d = PhotonDistribution::vacuum(3).unwrap();
        assert!(matches!(
            add_background(&d, 2.0, 0.0),
            Err(StatsError::TruncationExceeded { .. })
        ));
    }

    #[test]
    fn ideal_moments() {
        let m = moments(&pair_distribution(0.01, 20).unwrap());
        assert!((m.g2_11.unwrap() - 2.0).abs() < 1e-9);
        assert!((m.g2_22.unwrap() - 2.0).abs() < 1e-9);
        assert!((m.g2_12.unwrap() - 102.0).abs() < 1e-7);
    }

    #[test]
    fn coherent_moments() {
        let m = moments(&PhotonDistribution::poisson_product(0.3, 0.2, 20).unwrap());
        for g in [m.g2_11, m.g2_22, m.g2_12] {
            assert!((g.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mean_is_absent() {
        let m = moments(&PhotonDistribution::vacuum(4).unwrap());
        assert_eq!(m.g2_11, None);
        assert_eq!(m.g2_12, None);
        assert_eq!(m.cs_ratio(), None);
    }

    #[test]
    fn quoted_ideal_ratio() {
        assert!((ideal_cs_ratio_paper(0.01).unwrap() - 2550.25).abs() < 1e-9);
        assert_eq!(ideal_cs_ratio_paper(1.0).unwrap(), 1.0);
        assert_eq!(ideal_cs_ratio_paper(0.5).unwrap(), 2.25);
        assert!(ideal_cs_ratio_paper(0.0).is_err());
    }

    #[test]
    fn classical_check() {
        let c = cs_holds_classical(1.739, 1.710, 2.335).unwrap();
        assert_eq!(c.verdict, Verdict::Violated);
        assert!((c.ratio - 5.452225 / (1.739 * 1.710)).abs() < 1e-12);
        assert!((c.ratio - 1.8335).abs() < 1e-3);
        let b = cs_holds_classical(2.0, 2.0, 2.0).unwrap();
        assert_eq!(b.ratio, 1.0);
        assert_eq!(b.verdict, Verdict::Satisfied);
        let t = cs_holds_classical(1.72, 1.52, 2.45).unwrap();
        assert_eq!(t.verdict, Verdict::Violated);
        assert!((t.ratio - 2.30).abs() < 0.01);
        assert!(cs_holds_classical(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn classical_twin_is_boundary() {
        let m = moments(&classical_twin_distribution(0.05, 40).unwrap());
        assert!((m.g2_11.unwrap() - 2.0).abs() < 1e-9);
        assert!((m.g2_12.unwrap() - 2.0).abs() < 1e-9);
        assert!((m.cs_ratio().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn predict_ideal_and_noise_only() {
        let m = predict_report(&SourceParams::ideal(0.01), 20).unwrap();
        assert!((m.g2_12.unwrap() - 102.0).abs() < 1e-7);
        let noise = SourceParams {
            p: 0.0,
            bg1: 0.05,
            bg2: 0.03,
            leak2: 0.01,
            ..SourceParams::ideal(0.0)
        };
        let m = predict_report(&noise, 20).unwrap();
        for g in [m.g2_11, m.g2_22, m.g2_12] {
            assert!((g.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn auto_cutoff_grows_with_p() {
        assert_eq!(auto_cutoff(0.01, DEFAULT_TRUNCATION_THRESHOLD), DEFAULT_CUTOFF);
        let c = auto_cutoff(0.999, DEFAULT_TRUNCATION_THRESHOLD);
        assert!(pair_distribution(0.999, c).is_ok());
        assert!(pair_distribution(0.999, DEFAULT_CUTOFF).is_err());
    }
}
