//! Möbius isometries of the half-plane and the genus-2 octagon group.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::hyperbolic::{cosh_distance, HPoint, TangentVec};
use super::GeometryError;

/// An orientation-preserving isometry `z ↦ (az + b)/(cz + d)` with `ad − bc = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Isometry {
    pub const IDENTITY: Isometry = Isometry { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    /// Builds an isometry, rescaling to unit determinant.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self, GeometryError> {
        let det = a * d - b * c;
        if !(det > 0.0) || !det.is_finite() {
            return Err(GeometryError::NotAnIsometry { det });
        }
        let k = det.sqrt().recip();
        Ok(Self { a: a * k, b: b * k, c: c * k, d: d * k })
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    #[inline]
    pub fn apply(&self, p: HPoint) -> HPoint {
        let z = p.to_complex();
        let w = (z * self.a + self.b) / (z * self.c + self.d);
        // Imaginary part in closed form avoids cancellation: Im w = y/|cz+d|².
        let den = (z * self.c + self.d).norm_sqr();
        HPoint::raw(w.re, p.y / den)
    }

    /// Complex derivative at `p`, `1/(cz + d)²`.
    #[inline]
    pub fn derivative(&self, p: HPoint) -> Complex64 {
        let q = p.to_complex() * self.c + self.d;
        (q * q).inv()
    }

    /// Pushes a tangent vector forward.
    pub fn push(&self, v: TangentVec) -> TangentVec {
        let w = v.to_complex() * self.derivative(v.base);
        TangentVec { base: self.apply(v.base), vx: w.re, vy: w.im }
    }

    /// `self ∘ other`.
    pub fn compose(&self, o: &Isometry) -> Isometry {
        Isometry {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    pub fn inverse(&self) -> Isometry {
        Isometry { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    /// Frobenius distance to `±other` (both matrices act identically).
    pub fn projective_distance(&self, o: &Isometry) -> f64 {
        let plus = ((self.a - o.a).powi(2) + (self.b - o.b).powi(2) + (self.c - o.c).powi(2) + (self.d - o.d).powi(2)).sqrt();
        let minus = ((self.a + o.a).powi(2) + (self.b + o.b).powi(2) + (self.c + o.c).powi(2) + (self.d + o.d).powi(2)).sqrt();
        plus.min(minus)
    }

    pub fn pow(&self, n: u32) -> Isometry {
        (0..n).fold(Isometry::IDENTITY, |acc, _| acc.compose(self))
    }
}

/// A word in the side pairings; letter `j` is the pairing attached to side `j`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word(pub Vec<u8>);

impl Word {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Free reduction against the pairing `j ↔ j+4`.
    pub fn reduced(&self) -> Word {
        let mut out: Vec<u8> = Vec::with_capacity(self.0.len());
        for &l in &self.0 {
            if out.last().is_some_and(|&p| p == (l + 4) % 8) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|&l| (l + 4) % 8).collect())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "g{l}")?;
        }
        Ok(())
    }
}

/// The Fuchsian group of the regular hyperbolic octagon with vertex angle
/// π/4, centered at `i`. Side `j` faces the direction `jπ/4` of the disk
/// model; `side_pairings[j]` maps the octagon across side `j`, and
/// `side_pairings[j+4]` is its inverse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuchsianGenus2 {
    pub side_pairings: [Isometry; 8],
    /// Relator as a sequence of side indices; their product is `±1`.
    pub relator: [u8; 8],
    /// Images of the center `i` under the side pairings (centers of the
    /// neighboring octagons).
    neighbor_centers: [HPoint; 8],
    /// Vertices of the octagon, counterclockwise in the disk model.
    pub vertices: [HPoint; 8],
}

/// Tolerance on the relator residual accepted by [`octagon_group`].
pub const RELATOR_TOL: f64 = 1e-8;

const MAX_REDUCTION_STEPS: usize = 10_000;

fn mat_mul(x: [[Complex64; 2]; 2], y: [[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    [
        [x[0][0] * y[0][0] + x[0][1] * y[1][0], x[0][0] * y[0][1] + x[0][1] * y[1][1]],
        [x[1][0] * y[0][0] + x[1][1] * y[1][0], x[1][0] * y[0][1] + x[1][1] * y[1][1]],
    ]
}

/// Disk point to half-plane, `z = i(1+ζ)/(1−ζ)`.
pub fn disk_to_half_plane(zeta: Complex64) -> HPoint {
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    HPoint::from_complex(i * (one + zeta) / (one - zeta))
}

/// Half-plane point to disk, `ζ = (z − i)/(z + i)`.
pub fn half_plane_to_disk(p: HPoint) -> Complex64 {
    let z = p.to_complex();
    let i = Complex64::i();
    (z - i) / (z + i)
}

/// Builds the octagon group and validates it.
pub fn octagon_group() -> Result<FuchsianGenus2, GeometryError> {
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    // Translation along the real diameter of the disk by twice the inradius;
    // cosh(inradius) = cot(π/8) = 1 + √2.
    let ch = 1.0 + 2f64.sqrt();
    let sh = (ch * ch - 1.0).sqrt();
    let g0 = [[Complex64::new(ch, 0.0), Complex64::new(sh, 0.0)], [Complex64::new(sh, 0.0), Complex64::new(ch, 0.0)]];
    // Cayley H → D and back.
    let cay = [[one, -i], [one, i]];
    let cay_inv = [[i, i], [-one, one]];

    let mut side_pairings = [Isometry::IDENTITY; 8];
    for (j, slot) in side_pairings.iter_mut().enumerate() {
        let angle = j as f64 * PI / 4.0;
        let rot = [[Complex64::from_polar(1.0, angle / 2.0), Complex64::new(0.0, 0.0)], [Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, -angle / 2.0)]];
        let rot_inv = [[rot[0][0].conj(), rot[0][1]], [rot[1][0], rot[1][1].conj()]];
        let disk = mat_mul(mat_mul(rot, g0), rot_inv);
        let m = mat_mul(mat_mul(cay_inv, disk), cay);
        // m is a complex multiple of a real matrix; strip the phase.
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let scale = det.sqrt().inv();
        let r = |z: Complex64| (z * scale).re;
        *slot = Isometry::new(r(m[0][0]), r(m[0][1]), r(m[1][0]), r(m[1][1]))?;
    }

    let neighbor_centers = side_pairings.map(|g| g.apply(HPoint::I));
    // Vertices at hyperbolic circumradius R with cosh R = cot²(π/8), at
    // angles π/8 + jπ/4 in the disk.
    let cosh_r = ch * ch;
    let eucl = ((cosh_r - 1.0) / (cosh_r + 1.0)).sqrt(); // tanh(R/2)
    let vertices = std::array::from_fn(|j| disk_to_half_plane(Complex64::from_polar(eucl, PI / 8.0 + j as f64 * PI / 4.0)));

    let group = FuchsianGenus2 { side_pairings, relator: [0, 5, 2, 7, 4, 1, 6, 3], neighbor_centers, vertices };
    let residual = group.relator_residual();
    if residual > RELATOR_TOL {
        return Err(GeometryError::RelatorResidual { residual });
    }
    if let Some(tr) = group.side_pairings.iter().map(|g| g.trace().abs()).find(|t| *t <= 2.0) {
        return Err(GeometryError::NotHyperbolic { trace: tr });
    }
    Ok(group)
}

impl FuchsianGenus2 {
    /// Frobenius distance of the relator product to `±1`.
    pub fn relator_residual(&self) -> f64 {
        self.word_isometry(&Word(self.relator.to_vec())).projective_distance(&Isometry::IDENTITY)
    }

    /// The isometry of a word, applied right-to-left as a matrix product
    /// `g[w0]·g[w1]·…`.
    pub fn word_isometry(&self, w: &Word) -> Isometry {
        w.0.iter().fold(Isometry::IDENTITY, |acc, &l| acc.compose(&self.side_pairings[l as usize]))
    }

    /// Index of the side whose half-plane `p` violates most, if any.
    /// The octagon is the Dirichlet domain of its center, so `p` is outside
    /// side `j` iff it is closer to the neighbor center `g_j(i)`.
    fn worst_side(&self, p: HPoint, slack: f64) -> Option<usize> {
        let own = cosh_distance(p, HPoint::I);
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in self.neighbor_centers.iter().enumerate() {
            let other = cosh_distance(p, *c);
            if other < own * (1.0 - slack) && best.is_none_or(|(_, b)| other < b) {
                best = Some((j, other));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Whether `p` lies in the closed fundamental octagon.
    pub fn contains(&self, p: HPoint) -> bool {
        self.worst_side(p, 1e-13).is_none()
    }

    /// Signed slack of the tightest side constraint: positive inside.
    pub fn interior_margin(&self, p: HPoint) -> f64 {
        let own = hyperbolic_distance_from_center(p);
        self.neighbor_centers
            .iter()
            .map(|c| super::hyperbolic::hyperbolic_distance(p, *c) - own)
            .fold(f64::INFINITY, f64::min)
    }

    /// Moves `p` into the fundamental octagon. Returns the reduced point and
    /// the word of side pairings applied, in application order.
    pub fn reduce_to_domain(&self, p: HPoint) -> Result<(HPoint, Word), GeometryError> {
        let (q, w, _) = self.reduce_with_isometry(p)?;
        Ok((q, w))
    }

    /// As [`reduce_to_domain`](Self::reduce_to_domain), also returning the
    /// accumulated isometry `g` with `g(p) = reduced`.
    pub fn reduce_with_isometry(&self, p: HPoint) -> Result<(HPoint, Word, Isometry), GeometryError> {
        let mut q = p;
        let mut word = Vec::new();
        let mut acc = Isometry::IDENTITY;
        for _ in 0..MAX_REDUCTION_STEPS {
            match self.worst_side(q, 1e-13) {
                None => return Ok((q, Word(word), acc)),
                Some(j) => {
                    // Pull back across side j with the inverse pairing.
                    let letter = ((j + 4) % 8) as u8;
                    let g = &self.side_pairings[letter as usize];
                    q = g.apply(q);
                    acc = g.compose(&acc);
                    word.push(letter);
                }
            }
        }
        Err(GeometryError::ReductionCap { steps: MAX_REDUCTION_STEPS })
    }

    /// Group elements of word length at most `len`, identity first.
    pub fn ball(&self, len: usize) -> Vec<(Word, Isometry)> {
        let mut out = vec![(Word::default(), Isometry::IDENTITY)];
        let mut frontier = out.clone();
        for _ in 0..len {
            let mut next = Vec::new();
            for (w, g) in &frontier {
                for l in 0..8u8 {
                    let mut nw = w.0.clone();
                    nw.push(l);
                    let nw = Word(nw).reduced();
                    if nw.len() <= w.len() {
                        continue;
                    }
                    next.push((nw, g.compose(&self.side_pairings[l as usize])));
                }
            }
            // Drop elements already present (surface-group relations make
            // some distinct reduced words equal).
            for cand in next {
                let dup = out.iter().any(|(_, g)| g.projective_distance(&cand.1) < 1e-8);
                if !dup {
                    out.push(cand.clone());
                    frontier.push(cand);
                }
            }
        }
        out
    }

    /// Octagon generators as an 8×4 CSV of Möbius coefficients.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("side,a,b,c,d\n");
        for (j, g) in self.side_pairings.iter().enumerate() {
            s.push_str(&format!("{j},{:.16e},{:.16e},{:.16e},{:.16e}\n", g.a, g.b, g.c, g.d));
        }
        s
    }
}

fn hyperbolic_distance_from_center(p: HPoint) -> f64 {
    super::hyperbolic::hyperbolic_distance(p, HPoint::I)
}
