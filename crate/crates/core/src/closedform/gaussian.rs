//! Moments of polynomials in an isotropic circular complex Gaussian vector.
//!
//! For `x ~ CN(0, s I_N)` and fixed vectors `v_0, v_1, ...`, a monomial is a
//! product of the atoms `v^H x`, `x^H v` and `x^H x`. Its expectation follows
//! from Isserlis' theorem: every `x` factor pairs with an `x*` factor. Walking
//! a pairing from a `v_a^H x` factor through any number of `x^H x` factors to a
//! `x^H v_b` factor contributes `v_a^H v_b`; a closed loop of `x^H x` factors
//! contributes `N`; each pair contributes `s`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::mat::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    /// `v^H x`
    Lin(usize),
    /// `x^H v`
    ConjLin(usize),
    /// `x^H x`
    Norm,
}

impl Atom {
    fn conj(self) -> Atom {
        match self {
            Atom::Lin(v) => Atom::ConjLin(v),
            Atom::ConjLin(v) => Atom::Lin(v),
            Atom::Norm => Atom::Norm,
        }
    }
}

/// Polynomial with like terms merged; monomials are sorted atom lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly {
    terms: BTreeMap<Vec<Atom>, Complex64>,
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: impl Into<Complex64>) -> Self {
        let mut p = Self::zero();
        p.add_term(Vec::new(), c.into());
        p
    }

    pub fn atom(a: Atom, c: impl Into<Complex64>) -> Self {
        let mut p = Self::zero();
        p.add_term(vec![a], c.into());
        p
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, mut atoms: Vec<Atom>, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        atoms.sort_unstable();
        let entry = self.terms.entry(atoms).or_insert(Complex64::new(0.0, 0.0));
        *entry += c;
        if *entry == Complex64::new(0.0, 0.0) {
            self.terms.retain(|_, v| *v != Complex64::new(0.0, 0.0));
        }
    }

    pub fn add_scaled(&mut self, other: &Poly, c: impl Into<Complex64>) {
        let c = c.into();
        for (atoms, v) in &other.terms {
            self.add_term(atoms.clone(), v * c);
        }
    }

    pub fn scaled(&self, c: impl Into<Complex64>) -> Poly {
        let mut p = Poly::zero();
        p.add_scaled(self, c);
        p
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut p = Poly::zero();
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let mut atoms = Vec::with_capacity(a.len() + b.len());
                atoms.extend_from_slice(a);
                atoms.extend_from_slice(b);
                p.add_term(atoms, ca * cb);
            }
        }
        p
    }

    pub fn conj(&self) -> Poly {
        let mut p = Poly::zero();
        for (atoms, c) in &self.terms {
            p.add_term(atoms.iter().map(|a| a.conj()).collect(), c.conj());
        }
        p
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Vector(usize),
    Loop(usize),
}

/// Expectation operator for `x ~ CN(0, variance I_dim)`.
pub struct Gaussian<'a> {
    /// `gram[(a, b)] = v_a^H v_b`.
    pub gram: &'a Mat<Complex64>,
    pub dim: usize,
    pub variance: f64,
}

impl Gaussian<'_> {
    pub fn expect(&self, p: &Poly) -> Complex64 {
        p.terms
            .iter()
            .map(|(atoms, c)| c * self.moment(atoms))
            .sum()
    }

    /// Expectation of one monomial.
    pub fn moment(&self, atoms: &[Atom]) -> Complex64 {
        let mut xs = Vec::new();
        let mut cs = Vec::new();
        let mut loops = 0;
        for a in atoms {
            match *a {
                Atom::Lin(v) => xs.push(Slot::Vector(v)),
                Atom::ConjLin(v) => cs.push(Slot::Vector(v)),
                Atom::Norm => {
                    xs.push(Slot::Loop(loops));
                    cs.push(Slot::Loop(loops));
                    loops += 1;
                }
            }
        }
        if xs.len() != cs.len() {
            return Complex64::new(0.0, 0.0);
        }
        let n = xs.len();
        if n == 0 {
            return Complex64::new(1.0, 0.0);
        }
        // the x slot belonging to loop j
        let loop_x: Vec<usize> = (0..loops)
            .map(|j| {
                xs.iter()
                    .position(|s| matches!(s, Slot::Loop(i) if *i == j))
                    .unwrap()
            })
            .collect();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut total = Complex64::new(0.0, 0.0);
        permute(&mut perm, 0, &mut |sigma| {
            total += self.pairing(&xs, &cs, &loop_x, sigma)
        });
        total * self.variance.powi(n as i32)
    }

    fn pairing(&self, xs: &[Slot], cs: &[Slot], loop_x: &[usize], sigma: &[usize]) -> Complex64 {
        let mut value = Complex64::new(1.0, 0.0);
        let mut seen = 0u64;
        for (start, slot) in xs.iter().enumerate() {
            let Slot::Vector(v) = *slot else { continue };
            let mut cur = start;
            loop {
                match cs[sigma[cur]] {
                    Slot::Vector(w) => {
                        value *= self.gram[(v, w)];
                        break;
                    }
                    Slot::Loop(j) => {
                        seen |= 1 << j;
                        cur = loop_x[j];
                    }
                }
            }
        }
        let mut cycles = 0;
        for j in 0..loop_x.len() {
            if seen & (1 << j) != 0 {
                continue;
            }
            cycles += 1;
            let mut cur = j;
            while seen & (1 << cur) == 0 {
                seen |= 1 << cur;
                match cs[sigma[loop_x[cur]]] {
                    Slot::Loop(next) => cur = next,
                    Slot::Vector(_) => unreachable!("vector slots are consumed by chains"),
                }
            }
        }
        value * (self.dim as f64).powi(cycles)
    }
}

fn permute(perm: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        f(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, f);
        perm.swap(k, i);
    }
}
