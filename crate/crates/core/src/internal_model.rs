//! Internal models of the time variation: monic denominators, their roots, the distributed
//! common-denominator routine, and the companion-form realization.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Roots closer than this are the same root.
pub const ROOT_TOL: f64 = 1e-6;

/// Distance from the unit circle below which a computed root is snapped onto it.
const UNIT_CIRCLE_SNAP: f64 = 1e-9;

/// Imaginary residue allowed when expanding conjugate-closed root sets.
const IMAG_RESIDUE_TOL: f64 = 1e-9;

/// A repeated root of multiplicity `k` splits by roughly `ε^{1/k}` in the eigenvalue solve;
/// clusters this close are merged when the polynomial confirms the multiplicity.
const MULTIPLE_ROOT_SPREAD: f64 = 1e-4;

/// Relative size of the Taylor coefficients `p^{(j)}(c)/j!` accepted as zero.
const MULTIPLICITY_TOL: f64 = 1e-10;

/// `z^m + p_{m-1} z^{m-1} + … + p_0`, stored as `[p_0, …, p_{m-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonicPolynomial {
    coeffs: Vec<f64>,
}

impl MonicPolynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Argument("polynomial coefficients must be finite".into()));
        }
        Ok(Self { coeffs })
    }

    /// The constant polynomial 1.
    pub fn one() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// Lower coefficients `p_0..p_{m-1}`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// All coefficients from `z^0` to `z^m`, leading 1 included.
    pub fn full_coeffs(&self) -> Vec<f64> {
        let mut c = self.coeffs.clone();
        c.push(1.0);
        c
    }

    fn from_full(full: &[f64]) -> Self {
        debug_assert!((full.last().copied().unwrap_or(1.0) - 1.0).abs() < 1e-12);
        Self {
            coeffs: full[..full.len() - 1].to_vec(),
        }
    }

    pub fn mul(&self, other: &MonicPolynomial) -> MonicPolynomial {
        let a = self.full_coeffs();
        let b = other.full_coeffs();
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        MonicPolynomial::from_full(&out)
    }

    /// `z - 1`.
    pub fn integrator() -> Self {
        Self { coeffs: vec![-1.0] }
    }

    /// `z² - 2cos(θ) z + 1`, the annihilator of a sinusoid of frequency `θ`.
    pub fn oscillator(theta: f64) -> Self {
        Self {
            coeffs: vec![1.0, -2.0 * theta.cos()],
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.full_coeffs()
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Residue of the recurrence `Σ_ℓ p_ℓ s_{k+ℓ} + s_{k+m}` over a sampled sequence.
    pub fn annihilation_residue(&self, samples: &[f64]) -> f64 {
        let full = self.full_coeffs();
        let m = self.degree();
        samples
            .windows(m + 1)
            .map(|w| w.iter().zip(&full).map(|(s, c)| s * c).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for MonicPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "z^{}", self.degree())?;
        for (l, c) in self.coeffs.iter().enumerate().rev() {
            if *c == 0.0 {
                continue;
            }
            let sign = if *c < 0.0 { '-' } else { '+' };
            match l {
                0 => write!(f, " {sign} {}", c.abs())?,
                1 => write!(f, " {sign} {}·z", c.abs())?,
                _ => write!(f, " {sign} {}·z^{l}", c.abs())?,
            }
        }
        Ok(())
    }
}

/// Which internal model to use for a signal family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelKind {
    Constant,
    Ramp,
    Sine,
    SineSquared,
    /// `(z-1)·Π_{ℓ=1..L}(z² - 2cos(ℓν)z + 1)`.
    Approx { harmonics: usize },
}

pub fn model_for_signal(kind: ModelKind, nu: f64) -> MonicPolynomial {
    match kind {
        ModelKind::Constant => MonicPolynomial::integrator(),
        ModelKind::Ramp => MonicPolynomial::integrator().mul(&MonicPolynomial::integrator()),
        ModelKind::Sine => MonicPolynomial::oscillator(nu),
        ModelKind::SineSquared => MonicPolynomial::integrator().mul(&MonicPolynomial::oscillator(2.0 * nu)),
        ModelKind::Approx { harmonics } => (1..=harmonics).fold(MonicPolynomial::integrator(), |p, l| {
            p.mul(&MonicPolynomial::oscillator(l as f64 * nu))
        }),
    }
}

/// Sine model with its linear coefficient perturbed: `z² - (2cos(ν) + e) z + 1`.
pub fn perturbed_sine_model(nu: f64, e: f64) -> MonicPolynomial {
    MonicPolynomial {
        coeffs: vec![1.0, -(2.0 * nu.cos() + e)],
    }
}

/// Distinct roots with multiplicities; non-real roots come in conjugate pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RootMultiset {
    roots: Vec<(Complex64, usize)>,
}

fn canonical_order(a: &(Complex64, usize), b: &(Complex64, usize)) -> std::cmp::Ordering {
    a.0.re
        .partial_cmp(&b.0.re)
        .unwrap()
        .then(a.0.im.partial_cmp(&b.0.im).unwrap())
}

impl RootMultiset {
    pub fn new(mut roots: Vec<(Complex64, usize)>) -> Self {
        roots.retain(|(_, m)| *m > 0);
        roots.sort_by(canonical_order);
        Self { roots }
    }

    pub fn roots(&self) -> &[(Complex64, usize)] {
        &self.roots
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Sum of multiplicities.
    pub fn degree(&self) -> usize {
        self.roots.iter().map(|(_, m)| m).sum()
    }

    pub fn multiplicity_of(&self, z: Complex64, tol: f64) -> usize {
        self.roots
            .iter()
            .find(|(r, _)| (r - z).norm() <= tol)
            .map_or(0, |(_, m)| *m)
    }

    pub fn is_conjugate_closed(&self, tol: f64) -> bool {
        self.roots
            .iter()
            .all(|(r, m)| r.im.abs() <= tol || self.multiplicity_of(r.conj(), tol) == *m)
    }

    /// Same roots (within `tol`) with the same multiplicities.
    pub fn approx_eq(&self, other: &RootMultiset, tol: f64) -> bool {
        self.roots.len() == other.roots.len()
            && self.roots.iter().all(|(r, m)| other.multiplicity_of(*r, tol) == *m)
    }

    /// Message form: `(re, im, multiplicity)` triples, conjugates listed explicitly.
    pub fn to_wire(&self) -> Vec<(f64, f64, usize)> {
        self.roots.iter().map(|(r, m)| (r.re, r.im, *m)).collect()
    }

    pub fn from_wire(wire: &[(f64, f64, usize)]) -> Self {
        Self::new(wire.iter().map(|&(re, im, m)| (Complex64::new(re, im), m)).collect())
    }
}

/// Taylor coefficients of `p` about `c`, lowest order first, by repeated synthetic division.
fn taylor_at(p: &MonicPolynomial, c: Complex64) -> Vec<Complex64> {
    let mut work: Vec<Complex64> = p.full_coeffs().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut out = Vec::with_capacity(work.len());
    while !work.is_empty() {
        for i in (0..work.len() - 1).rev() {
            let carry = work[i + 1] * c;
            work[i] += carry;
        }
        out.push(work.remove(0));
    }
    out
}

/// Whether `c` is a root of `p` of multiplicity at least `k`, relative to the coefficient scale.
fn has_multiplicity(p: &MonicPolynomial, c: Complex64, k: usize) -> bool {
    let scale = p.full_coeffs().iter().map(|x| x.abs()).sum::<f64>() * c.norm().max(1.0).powi(p.degree() as i32);
    taylor_at(p, c).iter().take(k).all(|t| t.norm() <= MULTIPLICITY_TOL * scale)
}

/// Groups nearby eigenvalues of `p` into roots with multiplicity and enforces conjugate symmetry.
fn cluster_roots(p: &MonicPolynomial, values: &[Complex64], tol: f64) -> RootMultiset {
    let mut clusters: Vec<(Complex64, Vec<Complex64>)> = Vec::new();
    for &v in values {
        match clusters.iter_mut().find(|(c, _)| (c - v).norm() <= tol) {
            Some((centre, members)) => {
                members.push(v);
                *centre = members.iter().sum::<Complex64>() / members.len() as f64;
            }
            None => clusters.push((v, vec![v])),
        }
    }
    // Ill-conditioned repeated roots scatter further than `tol`; merge them when confirmed.
    'merge: loop {
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                if (clusters[i].0 - clusters[j].0).norm() > MULTIPLE_ROOT_SPREAD {
                    continue;
                }
                let members: Vec<Complex64> = clusters[i].1.iter().chain(&clusters[j].1).copied().collect();
                let centre = members.iter().sum::<Complex64>() / members.len() as f64;
                if has_multiplicity(p, centre, members.len()) {
                    clusters[i] = (centre, members);
                    clusters.remove(j);
                    continue 'merge;
                }
            }
        }
        break;
    }
    // Roots this close to the unit circle are persistent modes; put them exactly on it.
    for (centre, _) in clusters.iter_mut() {
        let r = centre.norm();
        if (r - 1.0).abs() <= UNIT_CIRCLE_SNAP {
            *centre /= r;
        }
    }
    let mut roots: Vec<(Complex64, usize)> = Vec::new();
    for (centre, members) in &clusters {
        if centre.im.abs() <= tol {
            roots.push((Complex64::new(centre.re, 0.0), members.len()));
        } else if centre.im > 0.0 {
            // Pair with the conjugate cluster and snap both to an exact pair.
            let partner = clusters
                .iter()
                .find(|(c, _)| (c - centre.conj()).norm() <= tol)
                .map(|(c, m)| (*c, m.len()));
            let (z, m) = match partner {
                Some((c, pm)) => ((centre + c.conj()) * 0.5, members.len().max(pm)),
                None => (*centre, members.len()),
            };
            roots.push((z, m));
            roots.push((z.conj(), m));
        } else if !clusters.iter().any(|(c, _)| (c - centre.conj()).norm() <= tol) {
            roots.push((*centre, members.len()));
            roots.push((centre.conj(), members.len()));
        }
    }
    RootMultiset::new(roots)
}

/// Roots of `p` as eigenvalues of its companion matrix, clustered at [`ROOT_TOL`].
pub fn roots_of(p: &MonicPolynomial) -> RootMultiset {
    if p.degree() == 0 {
        return RootMultiset::default();
    }
    let f = companion_realization(p).f;
    let ev = crate::spectrum::eigenvalues(&f);
    cluster_roots(p, &ev, ROOT_TOL)
}

/// Expands `Π (z - r)^m` into a real monic polynomial.
pub fn poly_from_roots(r: &RootMultiset) -> Result<MonicPolynomial> {
    if !r.is_conjugate_closed(ROOT_TOL) {
        return Err(Error::Argument("root set is not closed under conjugation".into()));
    }
    let mut full = vec![Complex64::new(1.0, 0.0)];
    for (z, m) in &r.roots {
        for _ in 0..*m {
            let mut next = vec![Complex64::new(0.0, 0.0); full.len() + 1];
            for (i, c) in full.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * z;
            }
            full = next;
        }
    }
    let scale = full.iter().fold(1.0_f64, |a, c| a.max(c.norm()));
    if full.iter().any(|c| c.im.abs() > IMAG_RESIDUE_TOL * scale) {
        return Err(Error::Argument("expanded polynomial has non-real coefficients".into()));
    }
    let real: Vec<f64> = full.iter().map(|c| c.re).collect();
    Ok(MonicPolynomial::from_full(&real))
}

/// Root-level least common multiple: each distinct root keeps its larger multiplicity.
pub fn union_roots(a: &RootMultiset, b: &RootMultiset) -> RootMultiset {
    let mut roots = a.roots.clone();
    for &(z, m) in &b.roots {
        match roots.iter_mut().find(|(r, _)| (*r - z).norm() <= ROOT_TOL) {
            Some(entry) => entry.1 = entry.1.max(m),
            None => roots.push((z, m)),
        }
    }
    RootMultiset::new(roots)
}

/// One synchronous round: every agent merges its closed neighbourhood's root sets.
pub fn common_denominator_round(g: &Graph, current: &[RootMultiset]) -> Vec<RootMultiset> {
    (0..g.node_count())
        .map(|i| {
            g.neighbors(i)
                .iter()
                .fold(current[i].clone(), |acc, &j| union_roots(&acc, &current[j]))
        })
        .collect()
}

/// Runs `rounds` rounds of neighbour exchange starting from each agent's local roots.
pub fn distributed_common_denominator(
    g: &Graph,
    locals: &[MonicPolynomial],
    rounds: usize,
) -> Result<Vec<RootMultiset>> {
    if locals.len() != g.node_count() {
        return Err(Error::Argument("one local model per agent required".into()));
    }
    let mut sets: Vec<RootMultiset> = locals.iter().map(roots_of).collect();
    for _ in 0..rounds {
        sets = common_denominator_round(g, &sets);
    }
    Ok(sets)
}

/// Controllable canonical pair `(F, G)` of a monic denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl Realization {
    pub fn order(&self) -> usize {
        self.f.nrows()
    }

    /// Characteristic polynomial of `F` by the Faddeev–LeVerrier recursion.
    pub fn characteristic_polynomial(&self) -> MonicPolynomial {
        let m = self.order();
        let id = DMatrix::<f64>::identity(m, m);
        let mut full = vec![0.0; m + 1];
        full[m] = 1.0;
        let mut mk = DMatrix::<f64>::zeros(m, m);
        for k in 1..=m {
            mk = &self.f * &mk + &id * full[m - k + 1];
            full[m - k] = -(&self.f * &mk).trace() / k as f64;
        }
        MonicPolynomial::from_full(&full)
    }
}

/// Companion matrix with superdiagonal ones and last row `(-p_0, …, -p_{m-1})`; `G = e_m`.
pub fn companion_realization(p: &MonicPolynomial) -> Realization {
    let m = p.degree();
    let mut f = DMatrix::zeros(m, m);
    for i in 0..m.saturating_sub(1) {
        f[(i, i + 1)] = 1.0;
    }
    for (l, c) in p.coeffs().iter().enumerate() {
        f[(m - 1, l)] = -c;
    }
    let mut g = DVector::zeros(m);
    if m > 0 {
        g[m - 1] = 1.0;
    }
    Realization { f, g }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_graph, GraphKind};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn crowded_double_root_keeps_its_multiplicity() {
        // Neighbouring roots on the circle spread the double root at 1 past ROOT_TOL.
        let p = MonicPolynomial::integrator()
            .mul(&MonicPolynomial::integrator())
            .mul(&MonicPolynomial::oscillator(0.1))
            .mul(&MonicPolynomial::oscillator(0.2));
        let r = roots_of(&p);
        assert_eq!(r.degree(), 6);
        assert_eq!(r.multiplicity_of(c(1.0, 0.0), 1e-9), 2);
        // Distinct close roots stay distinct.
        let q = MonicPolynomial::oscillator(1e-3).mul(&MonicPolynomial::integrator());
        assert_eq!(roots_of(&q).roots().len(), 3);
    }

    #[test]
    fn model_coefficients() {
        assert_eq!(model_for_signal(ModelKind::Ramp, 0.0).coeffs(), &[1.0, -2.0]);
        assert_eq!(model_for_signal(ModelKind::Constant, 0.0).coeffs(), &[-1.0]);
        let s = model_for_signal(ModelKind::Sine, 0.3);
        assert_eq!(s.coeffs(), &[1.0, -2.0 * 0.3_f64.cos()]);
        assert_eq!(model_for_signal(ModelKind::Approx { harmonics: 1 }, 5.0).degree(), 3);
        assert_eq!(model_for_signal(ModelKind::Approx { harmonics: 3 }, 5.0).degree(), 7);
    }

    #[test]
    fn sine_model_annihilates_sine() {
        let nu = 0.1;
        let samples: Vec<f64> = (0..1000).map(|k| (nu * k as f64).sin()).collect();
        assert!(model_for_signal(ModelKind::Sine, nu).annihilation_residue(&samples) < 1e-10);
    }

    #[test]
    fn roots_of_examples() {
        let r = roots_of(&model_for_signal(ModelKind::Ramp, 0.0));
        assert_eq!(r.roots().len(), 1);
        assert_eq!(r.multiplicity_of(c(1.0, 0.0), 1e-9), 2);

        let nu = 0.7;
        let r = roots_of(&model_for_signal(ModelKind::Sine, nu));
        assert_eq!(r.multiplicity_of(Complex64::from_polar(1.0, nu), 1e-12), 1);
        assert_eq!(r.multiplicity_of(Complex64::from_polar(1.0, -nu), 1e-12), 1);

        let r = roots_of(&model_for_signal(ModelKind::SineSquared, nu));
        assert_eq!(r.degree(), 3);
        assert_eq!(r.multiplicity_of(c(1.0, 0.0), 1e-9), 1);
        assert_eq!(r.multiplicity_of(Complex64::from_polar(1.0, 2.0 * nu), 1e-9), 1);

        let r = roots_of(&model_for_signal(ModelKind::Approx { harmonics: 1 }, 5.0));
        assert_eq!(r.degree(), 3);
        assert_eq!(r.multiplicity_of(Complex64::from_polar(1.0, 5.0), 1e-9), 1);
        assert!(roots_of(&MonicPolynomial::one()).is_empty());
    }

    #[test]
    fn poly_from_roots_examples() {
        let nu = 0.4;
        let pair = RootMultiset::new(vec![(Complex64::from_polar(1.0, nu), 1), (Complex64::from_polar(1.0, -nu), 1)]);
        let p = poly_from_roots(&pair).unwrap();
        assert!((p.coeffs()[0] - 1.0).abs() < 1e-15 && (p.coeffs()[1] + 2.0 * nu.cos()).abs() < 1e-15);
        let double = RootMultiset::new(vec![(c(1.0, 0.0), 2)]);
        assert_eq!(poly_from_roots(&double).unwrap().coeffs(), &[1.0, -2.0]);
        let lonely = RootMultiset::new(vec![(c(0.0, 1.0), 1)]);
        assert!(poly_from_roots(&lonely).is_err());
    }

    #[test]
    fn union_examples() {
        let nu = 0.9;
        let one = RootMultiset::new(vec![(c(1.0, 0.0), 1)]);
        let pair = roots_of(&MonicPolynomial::oscillator(nu));
        let u = union_roots(&one, &pair);
        assert_eq!(u.degree(), 3);
        assert!(u.approx_eq(&union_roots(&pair, &one), 1e-12));
        let two = RootMultiset::new(vec![(c(1.0, 0.0), 2)]);
        assert_eq!(union_roots(&one, &two), two);
        assert_eq!(union_roots(&pair, &pair), pair);
    }

    #[test]
    fn path_graph_propagation() {
        let g = make_graph(GraphKind::Path, 3).unwrap();
        let nu = 0.25;
        let locals = vec![MonicPolynomial::integrator(), MonicPolynomial::oscillator(nu), MonicPolynomial::integrator()];
        let sets = distributed_common_denominator(&g, &locals, 2).unwrap();
        let expected = union_roots(&roots_of(&locals[0]), &roots_of(&locals[1]));
        assert!(sets.iter().all(|s| s.approx_eq(&expected, 1e-9)));
        let zero = distributed_common_denominator(&g, &locals, 0).unwrap();
        for (s, p) in zero.iter().zip(&locals) {
            assert_eq!(*s, roots_of(p));
        }
    }

    #[test]
    fn cycle_needs_diameter_rounds() {
        let g = make_graph(GraphKind::Cycle, 10).unwrap();
        let locals: Vec<_> = (0..10).map(|i| MonicPolynomial::oscillator(0.1 + 0.25 * i as f64)).collect();
        let global = locals.iter().map(roots_of).fold(RootMultiset::default(), |a, r| union_roots(&a, &r));
        let full = distributed_common_denominator(&g, &locals, 5).unwrap();
        assert!(full.iter().all(|s| s.approx_eq(&global, 1e-9)));
        let short = distributed_common_denominator(&g, &locals, 4).unwrap();
        assert!(short.iter().any(|s| !s.approx_eq(&global, 1e-9)));
    }

    #[test]
    fn companion_examples() {
        let r = companion_realization(&model_for_signal(ModelKind::Ramp, 0.0));
        assert_eq!(r.f, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 2.0]));
        assert_eq!(r.g, DVector::from_vec(vec![0.0, 1.0]));
        let r = companion_realization(&MonicPolynomial::integrator());
        assert_eq!(r.f, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(r.g, DVector::from_element(1, 1.0));

        let nu = PI / 7.0;
        let r = companion_realization(&MonicPolynomial::oscillator(nu));
        for ev in crate::spectrum::eigenvalues(&r.f).iter() {
            assert!((ev.norm() - 1.0).abs() < 1e-9 && (ev.arg().abs() - nu).abs() < 1e-9);
        }
    }

    #[test]
    fn characteristic_polynomial_matches_model() {
        for kind in [ModelKind::Constant, ModelKind::Ramp, ModelKind::Sine, ModelKind::SineSquared, ModelKind::Approx { harmonics: 3 }] {
            let p = model_for_signal(kind, 0.8);
            let chi = companion_realization(&p).characteristic_polynomial();
            for (a, b) in chi.coeffs().iter().zip(p.coeffs()) {
                assert!((a - b).abs() < 1e-9, "{kind:?}");
            }
        }
    }

    #[test]
    fn wire_round_trip() {
        let r = roots_of(&model_for_signal(ModelKind::SineSquared, 0.3));
        assert_eq!(RootMultiset::from_wire(&r.to_wire()), r);
    }

    #[test]
    fn display_reads_like_a_polynomial() {
        assert_eq!(model_for_signal(ModelKind::Ramp, 0.0).to_string(), "z^2 - 2·z + 1");
    }
}
