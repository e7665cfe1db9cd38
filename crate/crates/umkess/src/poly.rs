//! Polynomials over GF(p): Lagrange interpolation, Horner evaluation, point
//! sampling, and dense Gaussian elimination.
//!
//! Coefficients are stored in ascending degree order and kept normalized
//! (no trailing zeros; the zero polynomial is the single coefficient `[0]`).
//! Interpolation runs in O(n^2) by deflating the master polynomial
//! prod (x - x_i) once per node instead of expanding each Lagrange basis
//! product from scratch.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use rand::RngCore;
use thiserror::Error;

use crate::field::{FieldElement, FieldParams};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolyError {
    #[error("duplicate abscissa {}", .0.value())]
    DuplicateAbscissa(FieldElement),
    #[error("at least one point is required")]
    EmptyInput,
    #[error("field too small to sample the requested number of distinct abscissae")]
    FieldExhausted,
    #[error("linear system is singular")]
    SingularSystem,
}

/// A point (x, y) with both coordinates in the same field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Point {
    pub x: FieldElement,
    pub y: FieldElement,
}

impl Point {
    pub fn new(x: FieldElement, y: FieldElement) -> Self {
        assert!(x.params() == y.params(), "point coordinates from mixed moduli");
        Point { x, y }
    }
}

/// Dense polynomial over GF(p), coefficients in ascending degree order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polynomial {
    coeffs: Vec<FieldElement>,
}

impl Polynomial {
    /// Normalizes by trimming trailing zero coefficients. The zero polynomial
    /// keeps one zero coefficient and reports degree 0.
    pub fn from_coeffs(mut coeffs: Vec<FieldElement>) -> Self {
        assert!(!coeffs.is_empty(), "a polynomial needs at least one coefficient");
        let params = coeffs[0].params().clone();
        assert!(
            coeffs.iter().all(|c| c.params() == &params),
            "coefficients from mixed moduli"
        );
        while coeffs.len() > 1 && coeffs.last().unwrap().is_zero() {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero(params: &FieldParams) -> Self {
        Polynomial {
            coeffs: vec![params.zero()],
        }
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_zero()
    }

    pub fn params(&self) -> &FieldParams {
        self.coeffs[0].params()
    }

    /// Horner evaluation, O(degree).
    pub fn evaluate(&self, x: &FieldElement) -> FieldElement {
        let mut acc = self.coeffs.last().expect("coeffs nonempty").clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = &(&acc * x) + c;
        }
        acc
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert!(
            self.params() == other.params(),
            "polynomials from mixed moduli"
        );
        let params = self.params().clone();
        let len = self.coeffs.len().max(other.coeffs.len());
        let zero = params.zero();
        let coeffs = (0..len)
            .map(|i| {
                let a = self.coeffs.get(i).unwrap_or(&zero);
                let b = other.coeffs.get(i).unwrap_or(&zero);
                a + b
            })
            .collect();
        Polynomial::from_coeffs(coeffs)
    }

    pub fn scale(&self, k: &FieldElement) -> Polynomial {
        Polynomial::from_coeffs(self.coeffs.iter().map(|c| c * k).collect())
    }

    /// Unique polynomial of degree < n through n points with distinct
    /// abscissae. Lagrange via the master polynomial M(x) = prod (x - x_i):
    /// each basis numerator is M deflated by one root (synthetic division),
    /// so the whole interpolation stays O(n^2).
    pub fn interpolate(points: &[Point]) -> Result<Polynomial, PolyError> {
        if points.is_empty() {
            return Err(PolyError::EmptyInput);
        }
        let params = points[0].x.params().clone();
        assert!(
            points.iter().all(|p| p.x.params() == &params),
            "points from mixed moduli"
        );

        let mut seen: BTreeSet<BigUint> = BTreeSet::new();
        for p in points {
            if !seen.insert(p.x.value().clone()) {
                return Err(PolyError::DuplicateAbscissa(p.x.clone()));
            }
        }

        // master[k] is the coefficient of x^k in prod_i (x - x_i).
        let n = points.len();
        let mut master = vec![params.zero(); n + 1];
        master[0] = params.one();
        for (len, p) in (1..).zip(points) {
            master[len] = master[len - 1].clone();
            for k in (1..len).rev() {
                master[k] = &master[k - 1] - &(&p.x * &master[k]);
            }
            master[0] = -&(&p.x * &master[0]);
        }

        let mut acc = vec![params.zero(); n];
        let mut quotient = vec![params.zero(); n];
        for p in points {
            // Deflate: quotient = master / (x - x_i); exact since x_i is a root.
            quotient[n - 1] = master[n].clone();
            for k in (0..n - 1).rev() {
                quotient[k] = &master[k + 1] + &(&p.x * &quotient[k + 1]);
            }
            // quotient(x_i) = prod_{j != i} (x_i - x_j), nonzero by distinctness.
            let mut denom = quotient[n - 1].clone();
            for k in (0..n - 1).rev() {
                denom = &(&denom * &p.x) + &quotient[k];
            }
            let weight = &p.y * &denom.inv().expect("distinct abscissae give nonzero denominator");
            for k in 0..n {
                acc[k] = &acc[k] + &(&weight * &quotient[k]);
            }
        }
        Ok(Polynomial::from_coeffs(acc))
    }

    /// Draws `count` points on the polynomial with distinct abscissae drawn
    /// uniformly from the field minus `excluded`. Fails up front if the field
    /// cannot supply that many distinct abscissae.
    pub fn sample_points(
        &self,
        count: usize,
        excluded: &[FieldElement],
        rng: &mut impl RngCore,
    ) -> Result<Vec<Point>, PolyError> {
        let params = self.params();
        let mut used: BTreeSet<BigUint> =
            excluded.iter().map(|e| e.value().clone()).collect();
        if BigUint::from(count) + BigUint::from(used.len()) > *params.modulus() {
            return Err(PolyError::FieldExhausted);
        }
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let x = params.random_element(rng);
            if !used.insert(x.value().clone()) {
                continue;
            }
            let y = self.evaluate(&x);
            out.push(Point::new(x, y));
        }
        Ok(out)
    }
}

/// Square system A c = b over GF(p).
#[derive(Clone, Debug)]
pub struct LinearSystem {
    rows: Vec<Vec<FieldElement>>,
    rhs: Vec<FieldElement>,
}

impl LinearSystem {
    pub fn new(rows: Vec<Vec<FieldElement>>, rhs: Vec<FieldElement>) -> Self {
        let n = rows.len();
        assert!(n > 0, "empty linear system");
        assert_eq!(rhs.len(), n, "rhs length must match row count");
        let params = rhs[0].params().clone();
        for row in &rows {
            assert_eq!(row.len(), n, "linear system must be square");
            assert!(
                row.iter().all(|e| e.params() == &params),
                "system entries from mixed moduli"
            );
        }
        assert!(rhs.iter().all(|e| e.params() == &params));
        LinearSystem { rows, rhs }
    }

    pub fn dimension(&self) -> usize {
        self.rows.len()
    }

    /// Gaussian elimination with first-nonzero pivoting. Every nonzero pivot
    /// is exact in GF(p), so no magnitude-based pivot choice is needed;
    /// failure to find any nonzero pivot in a column means the system is
    /// singular.
    // Index loops touch two rows of `a` at once; iterators would alias.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self) -> Result<Vec<FieldElement>, PolyError> {
        let n = self.rows.len();
        let mut a = self.rows.clone();
        let mut b = self.rhs.clone();

        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| !a[r][col].is_zero())
                .ok_or(PolyError::SingularSystem)?;
            a.swap(col, pivot);
            b.swap(col, pivot);
            let inv = a[col][col].inv().expect("pivot is nonzero");
            for r in col + 1..n {
                if a[r][col].is_zero() {
                    continue;
                }
                let factor = &a[r][col] * &inv;
                for c in col..n {
                    a[r][c] = &a[r][c] - &(&factor * &a[col][c]);
                }
                b[r] = &b[r] - &(&factor * &b[col]);
            }
        }

        let params = b[0].params().clone();
        let mut x = vec![params.zero(); n];
        for row in (0..n).rev() {
            let mut acc = b[row].clone();
            for c in row + 1..n {
                acc = &acc - &(&a[row][c] * &x[c]);
            }
            x[row] = &acc * &a[row][row].inv().expect("pivot is nonzero");
        }
        Ok(x)
    }
}

/// Row [1, z, z^2, ..., z^degree]; the building block of the coefficient
/// systems attackers assemble from observed points.
pub fn vandermonde_row(z: &FieldElement, degree: usize) -> Vec<FieldElement> {
    let mut row = Vec::with_capacity(degree + 1);
    let mut acc = z.params().one();
    for _ in 0..=degree {
        row.push(acc.clone());
        acc = &acc * z;
    }
    row
}
