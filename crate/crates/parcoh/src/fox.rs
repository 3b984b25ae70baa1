//! Words in free groups and groupoids, surface presentations, Fox
//! derivatives, and evaluation of group-ring elements through a
//! representation.
//!
//! A surface with genus `l` and `n` boundary circles carries two
//! presentations used throughout the crate: the group presentation with
//! generators x_j, y_j, z_j and relator
//! r = [x_1,y_1]...[x_l,y_l] z_1...z_n, and the groupoid presentation with
//! the z_j replaced by gamma_j a_j gamma_j^-1, where a_j is a loop at the
//! j-th boundary basepoint and gamma_j a connecting path. Fox derivatives
//! of the relators supply the differentials of every complex built in
//! `cohomology`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::lie::{Backend, GroupElement};

/// Errors from word evaluation and surface validation.
#[derive(Debug, Error)]
pub enum FoxError {
    /// A generator appearing in a word or ring element has no assigned
    /// group element.
    #[error("unbound generator {0}")]
    UnboundGenerator(GeneratorSymbol),
    /// The genus/boundary combination is not a supported surface.
    #[error("invalid surface data: {0}")]
    InvalidSurface(String),
    /// The groupoid presentation needs at least one boundary circle.
    #[error("the groupoid presentation requires at least one boundary circle")]
    ClosedSurface,
}

/// The kind of a presentation generator.
///
/// x and y are the handle generators, z the boundary generators of the
/// group presentation; a (boundary loops) and gamma (connecting paths)
/// belong to the groupoid presentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GeneratorKind {
    X,
    Y,
    Z,
    A,
    Gamma,
}

/// A presentation generator: kind plus 1-based index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GeneratorSymbol {
    pub kind: GeneratorKind,
    pub index: usize,
}

impl GeneratorSymbol {
    pub fn x(index: usize) -> Self {
        GeneratorSymbol { kind: GeneratorKind::X, index }
    }

    pub fn y(index: usize) -> Self {
        GeneratorSymbol { kind: GeneratorKind::Y, index }
    }

    pub fn z(index: usize) -> Self {
        GeneratorSymbol { kind: GeneratorKind::Z, index }
    }

    pub fn a(index: usize) -> Self {
        GeneratorSymbol { kind: GeneratorKind::A, index }
    }

    pub fn gamma(index: usize) -> Self {
        GeneratorSymbol { kind: GeneratorKind::Gamma, index }
    }
}

impl fmt::Display for GeneratorSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            GeneratorKind::X => "x",
            GeneratorKind::Y => "y",
            GeneratorKind::Z => "z",
            GeneratorKind::A => "a",
            GeneratorKind::Gamma => "gamma",
        };
        write!(f, "{}{}", kind, self.index)
    }
}

/// A freely reduced word: a sequence of (generator, exponent) letters with
/// exponents +1 or -1 and no adjacent cancelling pair. The empty word is
/// the identity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word {
    letters: Vec<(GeneratorSymbol, i32)>,
}

impl Word {
    /// The identity (empty) word.
    pub fn identity() -> Self {
        Word { letters: Vec::new() }
    }

    /// The single-letter word g.
    pub fn generator(sym: GeneratorSymbol) -> Self {
        Word { letters: vec![(sym, 1)] }
    }

    /// The single-letter word g^-1.
    pub fn generator_inv(sym: GeneratorSymbol) -> Self {
        Word { letters: vec![(sym, -1)] }
    }

    /// Builds a word from letters, freely reducing. Exponents may be any
    /// nonzero integer; they are expanded into +-1 runs.
    pub fn from_letters<I: IntoIterator<Item = (GeneratorSymbol, i32)>>(letters: I) -> Self {
        let mut reduced: Vec<(GeneratorSymbol, i32)> = Vec::new();
        for (sym, exp) in letters {
            let sign = if exp >= 0 { 1 } else { -1 };
            for _ in 0..exp.unsigned_abs() {
                match reduced.last() {
                    Some(&(last_sym, last_exp)) if last_sym == sym && last_exp == -sign => {
                        reduced.pop();
                    }
                    _ => reduced.push((sym, sign)),
                }
            }
        }
        Word { letters: reduced }
    }

    pub fn letters(&self) -> &[(GeneratorSymbol, i32)] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.is_empty()
    }

    /// Concatenation followed by free reduction.
    pub fn mul(&self, other: &Word) -> Word {
        Word::from_letters(
            self.letters
                .iter()
                .chain(other.letters.iter())
                .copied(),
        )
    }

    pub fn inverse(&self) -> Word {
        Word {
            letters: self
                .letters
                .iter()
                .rev()
                .map(|&(sym, exp)| (sym, -exp))
                .collect(),
        }
    }

    /// The commutator u v u^-1 v^-1.
    pub fn commutator(u: &Word, v: &Word) -> Word {
        u.mul(v).mul(&u.inverse()).mul(&v.inverse())
    }

    /// Replaces every generator by its image word (inverted for negative
    /// letters) and reduces.
    pub fn substitute<F: Fn(GeneratorSymbol) -> Word>(&self, image: F) -> Word {
        let mut out = Word::identity();
        for &(sym, exp) in &self.letters {
            let w = image(sym);
            out = if exp == 1 { out.mul(&w) } else { out.mul(&w.inverse()) };
        }
        out
    }

    /// The word formed by the first k letters.
    pub fn prefix(&self, k: usize) -> Word {
        Word {
            letters: self.letters[..k].to_vec(),
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .letters
            .iter()
            .map(|(sym, exp)| {
                if *exp == 1 {
                    sym.to_string()
                } else {
                    format!("{sym}^-1")
                }
            })
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

impl FromStr for Word {
    type Err = String;

    /// Parses the plain-text syntax `x1 y1 x1^-1 y1^-1 z1`; the token `1`
    /// denotes the identity.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut letters = Vec::new();
        for token in s.split_whitespace() {
            if token == "1" {
                continue;
            }
            let (base, exp) = match token.split_once('^') {
                Some((b, e)) => {
                    let exp: i32 = e
                        .parse()
                        .map_err(|_| format!("invalid exponent in token `{token}`"))?;
                    (b, exp)
                }
                None => (token, 1),
            };
            let kind_len = base
                .find(|c: char| c.is_ascii_digit())
                .ok_or_else(|| format!("token `{token}` is missing an index"))?;
            let (kind_str, index_str) = base.split_at(kind_len);
            let kind = match kind_str {
                "x" => GeneratorKind::X,
                "y" => GeneratorKind::Y,
                "z" => GeneratorKind::Z,
                "a" => GeneratorKind::A,
                "gamma" => GeneratorKind::Gamma,
                other => return Err(format!("unknown generator kind `{other}`")),
            };
            let index: usize = index_str
                .parse()
                .map_err(|_| format!("invalid index in token `{token}`"))?;
            if index == 0 {
                return Err(format!("generator indices are 1-based, got `{token}`"));
            }
            if exp == 0 {
                return Err(format!("zero exponent in token `{token}`"));
            }
            letters.push((GeneratorSymbol { kind, index }, exp));
        }
        Ok(Word::from_letters(letters))
    }
}

/// A finite real-linear combination of words. Zero coefficients are never
/// stored; keys are freely reduced by the `Word` constructors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct GroupRingElement {
    terms: BTreeMap<Word, f64>,
}

impl GroupRingElement {
    pub fn zero() -> Self {
        GroupRingElement { terms: BTreeMap::new() }
    }

    /// The multiplicative unit: the empty word with coefficient 1.
    pub fn one() -> Self {
        GroupRingElement::from_word(Word::identity(), 1.0)
    }

    pub fn from_word(w: Word, coeff: f64) -> Self {
        let mut terms = BTreeMap::new();
        if coeff != 0.0 {
            terms.insert(w, coeff);
        }
        GroupRingElement { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, f64)> {
        self.terms.iter().map(|(w, &c)| (w, c))
    }

    pub fn add_term(&mut self, w: Word, coeff: f64) {
        let entry = self.terms.entry(w).or_insert(0.0);
        *entry += coeff;
        if *entry == 0.0 {
            let key = self
                .terms
                .iter()
                .find(|(_, &c)| c == 0.0)
                .map(|(w, _)| w.clone());
            if let Some(key) = key {
                self.terms.remove(&key);
            }
        }
    }

    pub fn add(&self, other: &GroupRingElement) -> GroupRingElement {
        let mut out = self.clone();
        for (w, c) in other.terms() {
            out.add_term(w.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &GroupRingElement) -> GroupRingElement {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> GroupRingElement {
        GroupRingElement {
            terms: self.terms.iter().map(|(w, &c)| (w.clone(), -c)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> GroupRingElement {
        if s == 0.0 {
            return GroupRingElement::zero();
        }
        GroupRingElement {
            terms: self.terms.iter().map(|(w, &c)| (w.clone(), s * c)).collect(),
        }
    }

    /// Ring product: words concatenate (and reduce), coefficients multiply.
    pub fn mul(&self, other: &GroupRingElement) -> GroupRingElement {
        let mut out = GroupRingElement::zero();
        for (u, cu) in self.terms() {
            for (v, cv) in other.terms() {
                out.add_term(u.mul(v), cu * cv);
            }
        }
        out
    }

    /// The antipode: w maps to w^-1 with the same coefficient. An
    /// anti-homomorphism of the group ring; used to convert cochain
    /// differentials into chain boundaries.
    pub fn antipode(&self) -> GroupRingElement {
        GroupRingElement {
            terms: self.terms.iter().map(|(w, &c)| (w.inverse(), c)).collect(),
        }
    }

    /// g - 1 for a generator g.
    pub fn generator_minus_one(sym: GeneratorSymbol) -> GroupRingElement {
        GroupRingElement::from_word(Word::generator(sym), 1.0)
            .sub(&GroupRingElement::one())
    }

    /// Sum of the coefficients (the augmentation, sending every word to 1).
    pub fn augmentation(&self) -> f64 {
        self.terms.values().sum()
    }
}

/// Genus and boundary count of a compact orientable surface.
///
/// Validity: genus 0 needs at least 3 boundary circles; a closed surface
/// (no boundary) needs genus at least 1 and is supported only for the
/// complexes that make sense without boundary data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SurfaceData {
    pub genus: usize,
    pub boundary: usize,
}

impl SurfaceData {
    pub fn new(genus: usize, boundary: usize) -> Result<Self, FoxError> {
        if genus == 0 && boundary < 3 {
            return Err(FoxError::InvalidSurface(format!(
                "genus 0 requires at least 3 boundary circles, got {boundary}"
            )));
        }
        if boundary == 0 && genus == 0 {
            return Err(FoxError::InvalidSurface(
                "a surface needs positive genus or boundary".to_string(),
            ));
        }
        Ok(SurfaceData { genus, boundary })
    }

    /// Generators of the group presentation in slot order:
    /// x1, y1, ..., xl, yl, z1, ..., zn.
    pub fn group_generators(&self) -> Vec<GeneratorSymbol> {
        let mut gens = Vec::with_capacity(2 * self.genus + self.boundary);
        for j in 1..=self.genus {
            gens.push(GeneratorSymbol::x(j));
            gens.push(GeneratorSymbol::y(j));
        }
        for j in 1..=self.boundary {
            gens.push(GeneratorSymbol::z(j));
        }
        gens
    }

    /// The handle generators x1, y1, ..., xl, yl.
    pub fn xy_generators(&self) -> Vec<GeneratorSymbol> {
        let mut gens = Vec::with_capacity(2 * self.genus);
        for j in 1..=self.genus {
            gens.push(GeneratorSymbol::x(j));
            gens.push(GeneratorSymbol::y(j));
        }
        gens
    }

    pub fn z_generators(&self) -> Vec<GeneratorSymbol> {
        (1..=self.boundary).map(GeneratorSymbol::z).collect()
    }

    pub fn a_generators(&self) -> Vec<GeneratorSymbol> {
        (1..=self.boundary).map(GeneratorSymbol::a).collect()
    }

    pub fn gamma_generators(&self) -> Vec<GeneratorSymbol> {
        (1..=self.boundary).map(GeneratorSymbol::gamma).collect()
    }

    /// Generators of the groupoid presentation in slot order:
    /// x1, y1, ..., xl, yl, a1, ..., an, gamma1, ..., gamman.
    pub fn groupoid_generators(&self) -> Vec<GeneratorSymbol> {
        let mut gens = self.xy_generators();
        gens.extend(self.a_generators());
        gens.extend(self.gamma_generators());
        gens
    }
}

/// The group-presentation relator [x1,y1]...[xl,yl] z1...zn.
pub fn relator(s: &SurfaceData) -> Word {
    let mut r = Word::identity();
    for j in 1..=s.genus {
        let c = Word::commutator(
            &Word::generator(GeneratorSymbol::x(j)),
            &Word::generator(GeneratorSymbol::y(j)),
        );
        r = r.mul(&c);
    }
    for j in 1..=s.boundary {
        r = r.mul(&Word::generator(GeneratorSymbol::z(j)));
    }
    r
}

/// The groupoid-presentation relator
/// [x1,y1]...[xl,yl] (gamma1 a1 gamma1^-1)...(gamman an gamman^-1).
///
/// # Errors
///
/// `ClosedSurface` when the surface has no boundary circles.
pub fn groupoid_relator(s: &SurfaceData) -> Result<Word, FoxError> {
    if s.boundary == 0 {
        return Err(FoxError::ClosedSurface);
    }
    let mut r = Word::identity();
    for j in 1..=s.genus {
        let c = Word::commutator(
            &Word::generator(GeneratorSymbol::x(j)),
            &Word::generator(GeneratorSymbol::y(j)),
        );
        r = r.mul(&c);
    }
    for j in 1..=s.boundary {
        let gamma = Word::generator(GeneratorSymbol::gamma(j));
        let a = Word::generator(GeneratorSymbol::a(j));
        r = r.mul(&gamma).mul(&a).mul(&gamma.inverse());
    }
    Ok(r)
}

/// Fox derivative of a word with respect to a generator.
///
/// Determined by the rules d(uv) = du + u dv, dg/dg = 1 and
/// dg^-1/dg = -g^-1; for a reduced word it collects one term per
/// occurrence of the generator, with the prefix up to that occurrence.
pub fn fox_derivative(w: &Word, g: GeneratorSymbol) -> GroupRingElement {
    let mut out = GroupRingElement::zero();
    for (k, &(sym, exp)) in w.letters().iter().enumerate() {
        if sym != g {
            continue;
        }
        if exp == 1 {
            out.add_term(w.prefix(k), 1.0);
        } else {
            out.add_term(w.prefix(k + 1), -1.0);
        }
    }
    out
}

/// Assigns group elements to generator symbols. Implemented by
/// representation points in `moduli` as well as by plain maps; it is the
/// interface through which words and ring elements are evaluated.
pub trait GeneratorAssignment {
    fn backend(&self) -> Backend;

    /// The image of the generator, or None when unbound.
    fn value(&self, sym: GeneratorSymbol) -> Option<GroupElement>;
}

/// A plain map-backed assignment, for tests and for groupoid gauge work.
#[derive(Clone, Debug)]
pub struct GeneratorMap {
    backend: Backend,
    map: BTreeMap<GeneratorSymbol, GroupElement>,
}

impl GeneratorMap {
    pub fn new(backend: Backend) -> Self {
        GeneratorMap { backend, map: BTreeMap::new() }
    }

    pub fn insert(&mut self, sym: GeneratorSymbol, g: GroupElement) {
        self.map.insert(sym, g);
    }

    pub fn get(&self, sym: GeneratorSymbol) -> Option<&GroupElement> {
        self.map.get(&sym)
    }
}

impl GeneratorAssignment for GeneratorMap {
    fn backend(&self) -> Backend {
        self.backend
    }

    fn value(&self, sym: GeneratorSymbol) -> Option<GroupElement> {
        self.map.get(&sym).cloned()
    }
}

/// View of a group-generator assignment as a groupoid assignment through
/// the deformation retraction: a_j evaluates to the z_j image, gamma_j to
/// the identity, everything else passes through.
pub struct Corestricted<'a, A: GeneratorAssignment + ?Sized>(pub &'a A);

impl<A: GeneratorAssignment + ?Sized> GeneratorAssignment for Corestricted<'_, A> {
    fn backend(&self) -> Backend {
        self.0.backend()
    }

    fn value(&self, sym: GeneratorSymbol) -> Option<GroupElement> {
        match sym.kind {
            GeneratorKind::A => self.0.value(GeneratorSymbol::z(sym.index)),
            GeneratorKind::Gamma => Some(self.0.backend().identity()),
            _ => self.0.value(sym),
        }
    }
}

/// Evaluates a word to the ordered product of generator images.
///
/// # Errors
///
/// `UnboundGenerator` when a symbol has no assigned value.
pub fn word_eval<A: GeneratorAssignment + ?Sized>(
    w: &Word,
    phi: &A,
) -> Result<GroupElement, FoxError> {
    let mut g = phi.backend().identity();
    for &(sym, exp) in w.letters() {
        let image = phi
            .value(sym)
            .ok_or(FoxError::UnboundGenerator(sym))?;
        let factor = if exp == 1 { image } else { image.inverse() };
        g = g.mul(&factor);
    }
    Ok(g)
}

/// Evaluates a group-ring element to sum(coeff * Ad(phi(word))) as a
/// d x d real matrix in the backend's basis coordinates.
///
/// # Errors
///
/// `UnboundGenerator` when a symbol has no assigned value.
pub fn eval_ring<A: GeneratorAssignment + ?Sized>(
    e: &GroupRingElement,
    phi: &A,
) -> Result<DMatrix<f64>, FoxError> {
    let d = phi.backend().dim;
    let mut out = DMatrix::zeros(d, d);
    for (w, c) in e.terms() {
        let g = word_eval(w, phi)?;
        out += g.adjoint_matrix() * c;
    }
    Ok(out)
}
