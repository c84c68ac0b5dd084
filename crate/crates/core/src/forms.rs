//! Constant-coefficient k-forms on R^n and their evaluation on oriented planes.
//!
//! A [`ConstantKForm`] stores one coefficient per increasing multi-index, in
//! lexicographic order. Evaluating on an ordered frame `(v_1, …, v_k)` sums
//! `coeff_I · det(v_b[i_a])` over multi-indices `I`, so evaluation is
//! multilinear and alternating in the frame.
//!
//! Complex coordinates on `C^m = R^{2m}` are interleaved:
//! `(x_1, y_1, x_2, y_2, …)`, i.e. 0-based axis `2j` is `x_{j+1}` and `2j + 1`
//! is `y_{j+1}`.
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, binomial, det, dot, gram_schmidt};
use crate::par;
use crate::prelude::*;
use alloc::sync::Arc;
use core::fmt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Strictly increasing 0-based coordinate indices `i_1 < … < i_k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "multi-index {indices:?} is not strictly increasing"
            )));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::InvalidParameter(format!(
                    "multi-index {indices:?} out of range for n = {n}"
                )));
            }
        }
        Ok(MultiIndex(indices))
    }

    /// Builds from 1-based indices as written in `e^{i_1 … i_k}`.
    pub fn from_one_based(indices: &[usize], n: usize) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::InvalidParameter("1-based index 0".into()));
        }
        Self::new(indices.iter().map(|i| i - 1).collect(), n)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    /// All increasing k-subsets of `0..n` in lexicographic order.
    pub fn all(n: usize, k: usize) -> Vec<MultiIndex> {
        let mut out = Vec::with_capacity(binomial(n, k));
        if k > n {
            return out;
        }
        let mut cur: Vec<usize> = (0..k).collect();
        loop {
            out.push(MultiIndex(cur.clone()));
            // advance to the next combination
            let mut i = k;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if cur[i] < n - k + i {
                    cur[i] += 1;
                    for j in i + 1..k {
                        cur[j] = cur[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    /// Position of this index in [`MultiIndex::all`]`(n, k)`.
    pub fn rank(&self, n: usize) -> usize {
        let k = self.0.len();
        let mut rank = 0;
        let mut start = 0;
        for (pos, &c) in self.0.iter().enumerate() {
            for skipped in start..c {
                rank += binomial(n - 1 - skipped, k - 1 - pos);
            }
            start = c + 1;
        }
        rank
    }
}

/// Sorts `indices` in place and returns the parity of the permutation
/// (`+1.0` / `-1.0`), or `None` if an index repeats.
pub fn sort_with_sign(indices: &mut [usize]) -> Option<f64> {
    let mut sign = 1.0;
    for i in 1..indices.len() {
        let mut j = i;
        while j > 0 && indices[j - 1] > indices[j] {
            indices.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if indices.windows(2).any(|w| w[0] == w[1]) {
        None
    } else {
        Some(sign)
    }
}

/// A k-form on R^n with constant coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FormDocument", into = "FormDocument")]
pub struct ConstantKForm {
    n: usize,
    k: usize,
    coeffs: Vec<f64>,
}

/// JSON shape of a form: `{n, k, terms: [{indices, coeff}]}` with 1-based
/// increasing indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormDocument {
    pub n: usize,
    pub k: usize,
    pub terms: Vec<FormTerm>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormTerm {
    pub indices: Vec<usize>,
    pub coeff: f64,
}

impl TryFrom<FormDocument> for ConstantKForm {
    type Error = Error;

    fn try_from(doc: FormDocument) -> Result<Self> {
        let mut form = ConstantKForm::zero(doc.n, doc.k)?;
        for term in doc.terms {
            let idx = MultiIndex::from_one_based(&term.indices, doc.n)?;
            check_dim(doc.k, idx.degree(), "form term degree")?;
            let r = idx.rank(doc.n);
            form.coeffs[r] += term.coeff;
        }
        Ok(form)
    }
}

impl From<ConstantKForm> for FormDocument {
    fn from(form: ConstantKForm) -> Self {
        let terms = form
            .terms()
            .map(|(idx, coeff)| FormTerm {
                indices: idx.one_based(),
                coeff,
            })
            .collect();
        FormDocument {
            n: form.n,
            k: form.k,
            terms,
        }
    }
}

impl fmt::Display for ConstantKForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (idx, c) in self.terms() {
            let sign = if c < 0.0 { "-" } else if first { "" } else { "+" };
            let mag = c.abs();
            write!(f, "{}", if first { "" } else { " " })?;
            write!(f, "{sign}")?;
            if (mag - 1.0).abs() > 0.0 {
                write!(f, "{mag}")?;
            }
            write!(f, "e^")?;
            for i in idx.one_based() {
                write!(f, "{i}")?;
            }
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl ConstantKForm {
    pub fn zero(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::InvalidParameter(format!(
                "form degree {k} invalid for ambient dimension {n}"
            )));
        }
        Ok(ConstantKForm {
            n,
            k,
            coeffs: vec![0.0; binomial(n, k)],
        })
    }

    /// Builds a form from signed monomials written with 1-based indices in
    /// any order, e.g. `(-1.0, &[4, 5, 2, 3])` for `-e^{4523}`. Each monomial
    /// is sorted and its coefficient multiplied by the permutation parity.
    pub fn from_monomials(n: usize, k: usize, monomials: &[(f64, &[usize])]) -> Result<Self> {
        let mut form = Self::zero(n, k)?;
        for &(c, idx) in monomials {
            check_dim(k, idx.len(), "monomial degree")?;
            if idx.iter().any(|&i| i == 0 || i > n) {
                return Err(Error::InvalidParameter(format!(
                    "monomial {idx:?} out of range for n = {n}"
                )));
            }
            let mut sorted: Vec<usize> = idx.iter().map(|i| i - 1).collect();
            let Some(sign) = sort_with_sign(&mut sorted) else {
                continue;
            };
            let r = MultiIndex(sorted).rank(n);
            form.coeffs[r] += sign * c;
        }
        Ok(form)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, idx: &MultiIndex) -> f64 {
        self.coeffs[idx.rank(self.n)]
    }

    pub fn set_coeff(&mut self, idx: &MultiIndex, value: f64) {
        let r = idx.rank(self.n);
        self.coeffs[r] = value;
    }

    /// Nonzero terms in lexicographic order.
    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        MultiIndex::all(self.n, self.k)
            .into_iter()
            .zip(self.coeffs.iter().copied())
            .filter(|(_, c)| *c != 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// Sum of absolute coefficients. Bounds `|Ω[L]|` on every orthonormal
    /// frame since each k×k minor of an orthonormal frame has `|det| ≤ 1`.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        ConstantKForm {
            n: self.n,
            k: self.k,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &ConstantKForm) -> Result<Self> {
        check_dim(self.n, other.n, "form ambient dimension")?;
        check_dim(self.k, other.k, "form degree")?;
        Ok(ConstantKForm {
            n: self.n,
            k: self.k,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Exterior product `self ∧ other`.
    pub fn wedge(&self, other: &ConstantKForm) -> Result<Self> {
        check_dim(self.n, other.n, "form ambient dimension")?;
        let mut out = Self::zero(self.n, self.k + other.k)?;
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                let mut joined: Vec<usize> = a.as_slice().iter().chain(b.as_slice()).copied().collect();
                if let Some(sign) = sort_with_sign(&mut joined) {
                    let r = MultiIndex(joined).rank(self.n);
                    out.coeffs[r] += sign * ca * cb;
                }
            }
        }
        Ok(out)
    }

    /// Evaluates on an arbitrary (not necessarily orthonormal) ordered frame,
    /// stored vector-major.
    pub fn evaluate_frame(&self, frame: &[f64]) -> Result<f64> {
        check_dim(self.k * self.n, frame.len(), "frame length (k * n)")?;
        Ok(self.evaluate_frame_unchecked(frame))
    }

    pub(crate) fn evaluate_frame_unchecked(&self, frame: &[f64]) -> f64 {
        let (n, k) = (self.n, self.k);
        let mut minor = [0.0f64; 64];
        let mut heap_minor;
        let minor: &mut [f64] = if k * k <= 64 {
            &mut minor[..k * k]
        } else {
            heap_minor = vec![0.0; k * k];
            &mut heap_minor
        };
        let mut total = 0.0;
        let mut idx: Vec<usize> = (0..k).collect();
        let mut r = 0;
        loop {
            let c = self.coeffs[r];
            if c != 0.0 {
                for (a, &row) in idx.iter().enumerate() {
                    for b in 0..k {
                        minor[a * k + b] = frame[b * n + row];
                    }
                }
                total += c * det(minor, k);
            }
            r += 1;
            // next combination
            let mut i = k;
            loop {
                if i == 0 {
                    return total;
                }
                i -= 1;
                if idx[i] < n - k + i {
                    idx[i] += 1;
                    for j in i + 1..k {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    /// `Ω[L]` for an oriented plane: the value on its oriented orthonormal frame.
    pub fn evaluate(&self, plane: &OrientedPlane) -> Result<f64> {
        check_dim(self.n, plane.n(), "plane ambient dimension")?;
        check_dim(self.k, plane.k(), "plane dimension")?;
        Ok(self.evaluate_frame_unchecked(plane.frame()))
    }

    /// Gradient of `E ↦ Ω[E]` with respect to the frame entries, vector-major.
    pub(crate) fn frame_gradient(&self, frame: &[f64]) -> Vec<f64> {
        let (n, k) = (self.n, self.k);
        let mut grad = vec![0.0; n * k];
        let mut work = frame.to_vec();
        for i in 0..k {
            let saved: Vec<f64> = frame[i * n..(i + 1) * n].to_vec();
            for j in 0..n {
                for (t, x) in work[i * n..(i + 1) * n].iter_mut().enumerate() {
                    *x = if t == j { 1.0 } else { 0.0 };
                }
                grad[i * n + j] = self.evaluate_frame_unchecked(&work);
            }
            work[i * n..(i + 1) * n].copy_from_slice(&saved);
        }
        grad
    }

    /// The coordinate volume form `e^{1…k}` on R^n.
    pub fn coordinate_volume(n: usize, k: usize) -> Result<Self> {
        let mut form = Self::zero(n, k)?;
        form.coeffs[0] = 1.0;
        Ok(form)
    }
}

/// `ω₀^k / k!` on `C^m = R^{2m}`, where `ω₀ = Σ dx^j ∧ dy^j`.
///
/// The factorial normalisation makes the comass exactly 1 with equality on
/// complex k-planes.
pub fn kahler_power(n_complex: usize, k: usize) -> Result<ConstantKForm> {
    if k == 0 || k > n_complex {
        return Err(Error::InvalidParameter(format!(
            "Kähler power {k} out of range 1..={n_complex}"
        )));
    }
    let n = 2 * n_complex;
    let mut form = ConstantKForm::zero(n, 2 * k)?;
    for subset in MultiIndex::all(n_complex, k) {
        let idx: Vec<usize> = subset
            .as_slice()
            .iter()
            .flat_map(|&j| [2 * j, 2 * j + 1])
            .collect();
        form.set_coeff(&MultiIndex(idx), 1.0);
    }
    Ok(form)
}

/// The associative 3-form `ψ₀` on R^7.
pub fn g2_associative() -> ConstantKForm {
    ConstantKForm::from_monomials(
        7,
        3,
        &[
            (1.0, &[1, 2, 3]),
            (-1.0, &[1, 6, 7]),
            (-1.0, &[5, 2, 7]),
            (-1.0, &[5, 6, 3]),
            (-1.0, &[4, 1, 5]),
            (-1.0, &[4, 2, 6]),
            (-1.0, &[4, 3, 7]),
        ],
    )
    .expect("static monomials")
}

/// The coassociative 4-form on R^7.
pub fn g2_coassociative() -> ConstantKForm {
    ConstantKForm::from_monomials(
        7,
        4,
        &[
            (1.0, &[4, 5, 6, 7]),
            (-1.0, &[4, 5, 2, 3]),
            (-1.0, &[4, 1, 6, 3]),
            (-1.0, &[4, 1, 2, 7]),
            (-1.0, &[2, 6, 3, 7]),
            (-1.0, &[1, 5, 3, 7]),
            (-1.0, &[1, 5, 2, 6]),
        ],
    )
    .expect("static monomials")
}

/// The Spin(7) 4-form on R^8.
pub fn spin7_form() -> ConstantKForm {
    ConstantKForm::from_monomials(
        8,
        4,
        &[
            (1.0, &[1, 2, 5, 6]),
            (1.0, &[1, 2, 7, 8]),
            (1.0, &[3, 4, 5, 6]),
            (1.0, &[3, 4, 7, 8]),
            (1.0, &[1, 3, 5, 7]),
            (-1.0, &[1, 3, 6, 8]),
            (-1.0, &[2, 4, 5, 7]),
            (1.0, &[2, 4, 6, 8]),
            (-1.0, &[1, 4, 5, 8]),
            (-1.0, &[1, 4, 6, 7]),
            (-1.0, &[2, 3, 5, 8]),
            (-1.0, &[2, 3, 6, 7]),
            (1.0, &[1, 2, 3, 4]),
            (1.0, &[5, 6, 7, 8]),
        ],
    )
    .expect("static monomials")
}

/// `Re(e^{iφ} dz¹ ∧ ⋯ ∧ dzᵐ)` on `C^m`, with `dz^j = dx^j + i dy^j`.
pub fn special_lagrangian(n_complex: usize, phase: f64) -> Result<ConstantKForm> {
    if n_complex == 0 {
        return Err(Error::InvalidParameter("n_complex must be ≥ 1".into()));
    }
    let n = 2 * n_complex;
    let mut form = ConstantKForm::zero(n, n_complex)?;
    let (cos, sin) = if phase == 0.0 { (1.0, 0.0) } else { (phase.cos(), phase.sin()) };
    // choose dx or dy in every factor; picking dy contributes a factor i
    for mask in 0u32..(1u32 << n_complex) {
        let ys = mask.count_ones() as usize;
        let (re, im) = match ys % 4 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
        let value = re * cos - im * sin;
        if value == 0.0 {
            continue;
        }
        let idx: Vec<usize> = (0..n_complex)
            .map(|j| if mask & (1 << j) != 0 { 2 * j + 1 } else { 2 * j })
            .collect();
        form.set_coeff(&MultiIndex(idx), value);
    }
    Ok(form)
}

/// A named form from the standard catalogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum StandardForm {
    /// `ω^k / k!` on `C^m`.
    Kahler { n_complex: usize, k: usize },
    Associative,
    Coassociative,
    Spin7,
    SpecialLagrangian {
        n_complex: usize,
        #[serde(default)]
        phase: f64,
    },
    /// `e^{1…k}` on R^n.
    Volume { n: usize, k: usize },
}

impl StandardForm {
    pub fn build(&self) -> Result<ConstantKForm> {
        match *self {
            StandardForm::Kahler { n_complex, k } => kahler_power(n_complex, k),
            StandardForm::Associative => Ok(g2_associative()),
            StandardForm::Coassociative => Ok(g2_coassociative()),
            StandardForm::Spin7 => Ok(spin7_form()),
            StandardForm::SpecialLagrangian { n_complex, phase } => special_lagrangian(n_complex, phase),
            StandardForm::Volume { n, k } => ConstantKForm::coordinate_volume(n, k),
        }
    }
}

/// An affine k-plane with an ordered orthonormal frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedPlane {
    n: usize,
    k: usize,
    base: Vec<f64>,
    frame: Vec<f64>,
}

/// Orthonormality tolerance for frames handed to [`OrientedPlane::new`].
pub const FRAME_TOLERANCE: f64 = 1e-12;

impl OrientedPlane {
    /// Takes an already orthonormal frame (vector-major); rejects frames
    /// whose Gram matrix deviates from the identity by more than 1e-12.
    pub fn new(base: Vec<f64>, frame: Vec<f64>) -> Result<Self> {
        let n = base.len();
        if n == 0 || frame.is_empty() || !frame.len().is_multiple_of(n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: frame.len(),
                context: "frame length must be a multiple of n",
            });
        }
        let k = frame.len() / n;
        for i in 0..k {
            for j in 0..=i {
                let d = dot(&frame[i * n..(i + 1) * n], &frame[j * n..(j + 1) * n]);
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > FRAME_TOLERANCE {
                    return Err(Error::InvalidParameter(format!(
                        "frame not orthonormal: <e{i}, e{j}> = {d}"
                    )));
                }
            }
        }
        Ok(OrientedPlane { n, k, base, frame })
    }

    /// Orthonormalises the given spanning vectors, keeping their orientation.
    pub fn from_spanning(base: Vec<f64>, mut vectors: Vec<f64>) -> Result<Self> {
        let n = base.len();
        if n == 0 || vectors.is_empty() || !vectors.len().is_multiple_of(n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: vectors.len(),
                context: "frame length must be a multiple of n",
            });
        }
        if !gram_schmidt(&mut vectors, n) {
            return Err(Error::InvalidParameter("spanning vectors are dependent".into()));
        }
        Ok(OrientedPlane {
            n,
            k: vectors.len() / n,
            base,
            frame: vectors,
        })
    }

    /// Plane through `base` spanned by the given 0-based coordinate axes, in order.
    pub fn coordinate(n: usize, axes: &[usize], base: Vec<f64>) -> Result<Self> {
        check_dim(n, base.len(), "base point")?;
        let mut frame = vec![0.0; axes.len() * n];
        for (i, &a) in axes.iter().enumerate() {
            if a >= n {
                return Err(Error::InvalidParameter(format!("axis {a} out of range")));
            }
            frame[i * n + a] = 1.0;
        }
        Self::new(base, frame)
    }

    pub(crate) fn from_parts_unchecked(base: Vec<f64>, frame: Vec<f64>) -> Self {
        let n = base.len();
        let k = frame.len() / n;
        OrientedPlane { n, k, base, frame }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn frame(&self) -> &[f64] {
        &self.frame
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.frame[i * self.n..(i + 1) * self.n]
    }

    /// Same plane, opposite orientation (first frame vector negated).
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        for x in out.frame[..self.n].iter_mut() {
            *x = -*x;
        }
        out
    }

    pub fn with_vector_negated(&self, i: usize) -> Self {
        let mut out = self.clone();
        for x in out.frame[i * self.n..(i + 1) * self.n].iter_mut() {
            *x = -*x;
        }
        out
    }

    pub fn with_base(&self, base: Vec<f64>) -> Self {
        OrientedPlane {
            base,
            ..self.clone()
        }
    }

    /// Whether `other` spans the same linear space with the same
    /// orientation (sign of `det(E₁ᵀE₂)`).
    pub fn same_orientation(&self, other: &OrientedPlane) -> bool {
        let k = self.k;
        let mut g = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                g[i * k + j] = dot(self.vector(i), other.vector(j));
            }
        }
        det(&g, k) > 0.0
    }

    /// Coordinates of the projection of `x` in the frame, relative to the base.
    pub fn tangent_coords(&self, x: &[f64]) -> Vec<f64> {
        let d = linalg::sub(x, &self.base);
        (0..self.k).map(|i| dot(self.vector(i), &d)).collect()
    }

    pub fn point_at(&self, u: &[f64]) -> Vec<f64> {
        let mut p = self.base.clone();
        for (i, &ui) in u.iter().enumerate() {
            linalg::axpy(ui, self.vector(i), &mut p);
        }
        p
    }

    /// Orthogonal projection onto the affine plane.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, x.len(), "point dimension")?;
        Ok(self.point_at(&self.tangent_coords(x)))
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        let d = linalg::sub(x, &self.base);
        let mut r = d.clone();
        for i in 0..self.k {
            let c = dot(self.vector(i), &d);
            linalg::axpy(-c, self.vector(i), &mut r);
        }
        linalg::norm(&r)
    }
}

/// Spatially varying part of a calibration field.
pub trait FormPerturbation: Send + Sync {
    /// `Ω(x) − Ω₀` at the point `x`.
    fn delta(&self, x: &[f64]) -> ConstantKForm;
}

/// `amplitude · sin(wavenumber · Σx_i) · D / |D|₁` for a fixed direction form `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatingPerturbation {
    pub direction: ConstantKForm,
    pub amplitude: f64,
    pub wavenumber: f64,
}

impl FormPerturbation for OscillatingPerturbation {
    fn delta(&self, x: &[f64]) -> ConstantKForm {
        let l1 = self.direction.l1_norm();
        if l1 == 0.0 {
            return self.direction.clone();
        }
        let phase: f64 = x.iter().sum::<f64>() * self.wavenumber;
        self.direction.scaled(self.amplitude * phase.sin() / l1)
    }
}

/// `Ω = Ω₀ + perturbation`, with a recorded bound `ε ≥ |Ω − Ω₀|`.
///
/// The magnitude of a perturbation is the ℓ¹ norm of its coefficients,
/// which dominates the change of `Ω[L]` on any oriented plane.
#[derive(Clone)]
pub struct CalibrationField {
    constant: ConstantKForm,
    perturbation: Option<Arc<dyn FormPerturbation>>,
    epsilon: f64,
}

impl fmt::Debug for CalibrationField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CalibrationField")
            .field("constant", &self.constant)
            .field("perturbed", &self.perturbation.is_some())
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

impl CalibrationField {
    pub fn constant(form: ConstantKForm) -> Self {
        CalibrationField {
            constant: form,
            perturbation: None,
            epsilon: 0.0,
        }
    }

    /// Attaches a perturbation after measuring it on `samples`; fails if any
    /// sampled magnitude exceeds `epsilon`.
    pub fn with_perturbation(
        constant: ConstantKForm,
        perturbation: Arc<dyn FormPerturbation>,
        epsilon: f64,
        samples: &[Vec<f64>],
    ) -> Result<Self> {
        let field = CalibrationField {
            constant,
            perturbation: Some(perturbation),
            epsilon,
        };
        let measured = field.measure_sup(samples)?;
        if measured > epsilon {
            return Err(Error::PerturbationTooLarge { measured, epsilon });
        }
        Ok(field)
    }

    pub fn constant_part(&self) -> &ConstantKForm {
        &self.constant
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_constant(&self) -> bool {
        self.perturbation.is_none()
    }

    /// Largest perturbation magnitude over the sample points.
    pub fn measure_sup(&self, samples: &[Vec<f64>]) -> Result<f64> {
        let Some(p) = &self.perturbation else {
            return Ok(0.0);
        };
        let mut sup: f64 = 0.0;
        for x in samples {
            check_dim(self.constant.n(), x.len(), "sample point")?;
            let d = p.delta(x);
            check_dim(self.constant.k(), d.k(), "perturbation degree")?;
            sup = sup.max(d.l1_norm());
        }
        Ok(sup)
    }

    pub fn form_at(&self, x: &[f64]) -> ConstantKForm {
        match &self.perturbation {
            None => self.constant.clone(),
            Some(p) => self.constant.add(&p.delta(x)).expect("perturbation shape"),
        }
    }

    /// `Ω(x)[L]`.
    pub fn evaluate_at(&self, x: &[f64], plane: &OrientedPlane) -> Result<f64> {
        let base = self.constant.evaluate(plane)?;
        match &self.perturbation {
            None => Ok(base),
            Some(p) => {
                check_dim(self.constant.n(), x.len(), "evaluation point")?;
                Ok(base + p.delta(x).evaluate(plane)?)
            }
        }
    }
}

/// Regular sample grid on the cube `[-radius, radius]^n` with `per_axis`
/// points per axis.
pub fn grid_samples(n: usize, radius: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let per_axis = per_axis.max(1);
    let total = per_axis.pow(n as u32);
    let step = if per_axis > 1 { 2.0 * radius / (per_axis - 1) as f64 } else { 0.0 };
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|_| {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    if per_axis > 1 { -radius + step * i as f64 } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

/// Comass search settings: random Grassmannian samples followed by local ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComassConfig {
    pub samples: usize,
    pub ascent_iters: usize,
    pub seed: u64,
}

impl Default for ComassConfig {
    fn default() -> Self {
        ComassConfig {
            samples: 10_000,
            ascent_iters: 200,
            seed: 0,
        }
    }
}

/// Best oriented frame found by [`comass_search`].
#[derive(Debug, Clone)]
pub struct ComassEstimate {
    pub value: f64,
    pub frame: Vec<f64>,
}

/// Lower estimate of `sup_L Ω[L]` over oriented k-planes.
pub fn comass(form: &ConstantKForm, samples: usize, ascent_iters: usize, seed: u64) -> f64 {
    comass_search(
        form,
        ComassConfig {
            samples,
            ascent_iters,
            seed,
        },
    )
    .value
}

/// Sample `i` depends only on `(seed, i)`, and ascent starts from every
/// sample that improves on all earlier ones, so the estimate is
/// nondecreasing in both `samples` and `ascent_iters`.
pub fn comass_search(form: &ConstantKForm, config: ComassConfig) -> ComassEstimate {
    let (n, k) = (form.n(), form.k());
    let samples = config.samples.max(1);
    let values: Vec<(f64, Vec<f64>)> = par::map_range(samples, |i| {
        let frame = random_frame(n, k, config.seed, i as u64);
        (form.evaluate_frame_unchecked(&frame), frame)
    });

    let mut starts: Vec<usize> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for (i, (v, _)) in values.iter().enumerate() {
        if *v > best {
            best = *v;
            starts.push(i);
        }
    }

    let ascended: Vec<(f64, Vec<f64>)> = par::map(&starts, |&i| {
        let (v, f) = &values[i];
        ascend(form, f.clone(), *v, config.ascent_iters)
    });

    let mut out = ComassEstimate {
        value: best,
        frame: values[*starts.last().unwrap_or(&0)].1.clone(),
    };
    for (v, f) in ascended {
        if v > out.value {
            out.value = v;
            out.frame = f;
        }
    }
    out
}

fn random_frame(n: usize, k: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    loop {
        let mut frame: Vec<f64> = (0..n * k).map(|_| rng.sample(StandardNormal)).collect();
        if gram_schmidt(&mut frame, n) {
            return frame;
        }
    }
}

/// Projected gradient ascent on oriented frames; a step is kept only if it
/// increases the value, otherwise the step length halves.
fn ascend(form: &ConstantKForm, mut frame: Vec<f64>, mut value: f64, iters: usize) -> (f64, Vec<f64>) {
    let n = form.n();
    let k = form.k();
    let mut step = 0.5;
    for _ in 0..iters {
        let mut grad = form.frame_gradient(&frame);
        // remove the component inside the current span
        for i in 0..k {
            let g = &mut grad[i * n..(i + 1) * n];
            for j in 0..k {
                let e = &frame[j * n..(j + 1) * n];
                let c = dot(e, g);
                linalg::axpy(-c, e, g);
            }
        }
        let gnorm = linalg::norm(&grad);
        if !(gnorm > 1e-15) || step < 1e-14 {
            break;
        }
        let mut trial = frame.clone();
        linalg::axpy(step / gnorm, &grad, &mut trial);
        if !gram_schmidt(&mut trial, n) {
            step *= 0.5;
            continue;
        }
        let v = form.evaluate_frame_unchecked(&trial);
        if v > value {
            value = v;
            frame = trial;
        } else {
            step *= 0.5;
        }
    }
    (value, frame)
}
