//! Finite boxes of ℤ^d, the growing potential and the truncated Hamiltonian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymmetricOperator;

pub type Site = Vec<i64>;

/// A rectangular block of lattice sites `lo[a] <= n[a] <= hi[a]`, enumerated
/// lexicographically (first coordinate most significant).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl LatticeBox {
    /// The cube `{n : |n|_∞ <= radius}` with `(2 radius + 1)^d` sites.
    pub fn cube(dim: usize, radius: u64) -> Self {
        assert!(dim > 0, "lattice dimension must be positive");
        let r = radius as i64;
        LatticeBox {
            lo: vec![-r; dim],
            hi: vec![r; dim],
        }
    }

    pub fn from_bounds(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::NRange(format!(
                "bounds of mismatched dimension {} vs {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::NRange(format!("empty box {lo:?}..={hi:?}")));
        }
        Ok(LatticeBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lower(&self) -> &[i64] {
        &self.lo
    }

    pub fn upper(&self) -> &[i64] {
        &self.hi
    }

    /// Radius of a centred cube, `None` for any other box.
    pub fn radius(&self) -> Option<u64> {
        let r = self.hi[0];
        let centred = self.lo.iter().all(|&l| l == -r) && self.hi.iter().all(|&h| h == r);
        centred.then_some(r as u64)
    }

    fn extent(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis] + 1) as usize
    }

    pub fn len(&self) -> usize {
        (0..self.dim()).map(|a| self.extent(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, site: &[i64]) -> bool {
        site.len() == self.dim()
            && site
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(n, (l, h))| l <= n && n <= h)
    }

    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        self.dim() == other.dim() && self.contains(&other.lo) && self.contains(&other.hi)
    }

    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let mut idx = 0usize;
        for (a, n) in site.iter().enumerate() {
            idx = idx * self.extent(a) + (n - self.lo[a]) as usize;
        }
        Some(idx)
    }

    pub fn site(&self, mut index: usize) -> Site {
        let d = self.dim();
        let mut site = vec![0i64; d];
        for a in (0..d).rev() {
            let e = self.extent(a);
            site[a] = self.lo[a] + (index % e) as i64;
            index /= e;
        }
        site
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }

    /// Smallest number of lattice steps (per axis) from `site` to the outside.
    pub fn depth(&self, site: &[i64]) -> i64 {
        site.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(n, (l, h))| (n - l).min(h - n))
            .min()
            .unwrap_or(0)
    }

    /// Box grown by `margin` sites on every side.
    pub fn grow(&self, margin: u64) -> LatticeBox {
        let m = margin as i64;
        LatticeBox {
            lo: self.lo.iter().map(|l| l - m).collect(),
            hi: self.hi.iter().map(|h| h + m).collect(),
        }
    }

    /// Box shrunk by `margin` on every side.
    pub fn shrink(&self, margin: u64) -> Result<LatticeBox> {
        let m = margin as i64;
        LatticeBox::from_bounds(
            self.lo.iter().map(|l| l + m).collect(),
            self.hi.iter().map(|h| h - m).collect(),
        )
    }

    pub fn intersect(&self, other: &LatticeBox) -> Result<LatticeBox> {
        if self.dim() != other.dim() {
            return Err(Error::NRange("boxes of different dimension".into()));
        }
        LatticeBox::from_bounds(
            self.lo.iter().zip(&other.lo).map(|(a, b)| *a.max(b)).collect(),
            self.hi.iter().zip(&other.hi).map(|(a, b)| *a.min(b)).collect(),
        )
    }
}

pub fn sup_norm(site: &[i64]) -> u64 {
    site.iter().map(|n| n.unsigned_abs()).max().unwrap_or(0)
}

/// Japanese bracket ⟨n⟩ = (1 + |n|²)^{1/2} with the Euclidean norm.
pub fn japanese_bracket(site: &[i64]) -> f64 {
    let sq: f64 = site.iter().map(|&n| (n as f64) * (n as f64)).sum();
    (1.0 + sq).sqrt()
}

/// `V(n) = |n|_∞^k` away from the origin and `V(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    k: f64,
}

impl Potential {
    pub fn new(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::config("k", format!("growth exponent must be positive, got {k}")));
        }
        Ok(Potential { k })
    }

    pub fn exponent(&self) -> f64 {
        self.k
    }

    /// `r^k` for a shell radius `r >= 1`.
    pub fn shell_value(&self, r: u64) -> f64 {
        if r == 0 {
            return 1.0;
        }
        if self.k.fract() == 0.0 && self.k <= i32::MAX as f64 {
            (r as f64).powi(self.k as i32)
        } else {
            (r as f64).powf(self.k)
        }
    }

    pub fn value(&self, site: &[i64]) -> f64 {
        self.shell_value(sup_norm(site))
    }

    /// Largest shell radius `r` with `r^k <= lambda` (for `lambda >= 1`).
    pub fn shell_radius_below(&self, lambda: f64) -> u64 {
        if lambda < 1.0 {
            return 0;
        }
        let mut r = lambda.powf(1.0 / self.k).floor().max(0.0) as u64;
        while self.shell_value(r + 1) <= lambda {
            r += 1;
        }
        while r > 0 && self.shell_value(r) > lambda {
            r -= 1;
        }
        r
    }
}

/// Result of counting the sublevel set `{n : V(n) <= lambda}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SublevelCount {
    /// Direct enumeration.
    pub exact: u64,
    /// `(2 ⌊λ^{1/k}⌋ + 1)^d`.
    pub shell_formula: f64,
    /// `(2 ⌊λ⌋^{1/k} + 1)^d`, the closed form with the floor taken before the root.
    pub floor_first_formula: f64,
}

pub fn count_below(pot: &Potential, dim: usize, lambda: f64) -> Result<SublevelCount> {
    if lambda < 0.0 {
        return Err(Error::EmptyThreshold(lambda));
    }
    if !lambda.is_finite() {
        return Err(Error::config("lambda", "threshold must be finite"));
    }
    let radius = lambda.powf(1.0 / pot.exponent()).ceil() as u64;
    let search = LatticeBox::cube(dim, radius);
    let exact = search.sites().filter(|n| pot.value(n) <= lambda).count() as u64;
    let r = pot.shell_radius_below(lambda) as f64;
    Ok(SublevelCount {
        exact,
        shell_formula: (2.0 * r + 1.0).powi(dim as i32),
        floor_first_formula: (2.0 * lambda.floor().powf(1.0 / pot.exponent()) + 1.0)
            .powi(dim as i32),
    })
}

/// Smallest `L` with `theta * L^k >= lambda_max`.
pub fn truncation_radius(lambda_max: f64, k: f64, theta: f64) -> Result<u64> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::config("lambda", "maximal threshold must be positive"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::config("theta", "safety fraction must lie in (0, 1)"));
    }
    let pot = Potential::new(k)?;
    let mut l = (lambda_max / theta).powf(1.0 / k).ceil().max(1.0) as u64;
    while l > 1 && theta * pot.shell_value(l - 1) >= lambda_max {
        l -= 1;
    }
    while theta * pot.shell_value(l) < lambda_max {
        l += 1;
    }
    Ok(l)
}

/// Largest threshold that may be queried on a box of radius `radius`.
pub fn trust_limit(radius: u64, k: f64, theta: f64) -> f64 {
    theta * (radius as f64).powf(k)
}

fn neighbour_triplets(lattice: &LatticeBox) -> Vec<(usize, usize, f64)> {
    let d = lattice.dim();
    let mut out = Vec::with_capacity(lattice.len() * 2 * d);
    for (i, site) in lattice.sites().enumerate() {
        let mut nb = site.clone();
        for a in 0..d {
            for step in [-1i64, 1] {
                nb[a] = site[a] + step;
                if let Some(j) = lattice.index_of(&nb) {
                    out.push((i, j, 1.0));
                }
            }
            nb[a] = site[a];
        }
    }
    out
}

/// `Δ` restricted to the box with out-of-box links dropped: `2d` on the
/// diagonal, `+1` between nearest neighbours.
pub fn assemble_laplacian(lattice: &LatticeBox) -> SymmetricOperator {
    let diag = 2.0 * lattice.dim() as f64;
    let mut t = neighbour_triplets(lattice);
    t.extend((0..lattice.len()).map(|i| (i, i, diag)));
    SymmetricOperator::from_triplets(lattice.clone(), t)
}

pub fn potential_operator(lattice: &LatticeBox, pot: &Potential) -> SymmetricOperator {
    let t = lattice
        .sites()
        .enumerate()
        .map(|(i, n)| (i, i, pot.value(&n)))
        .collect();
    SymmetricOperator::from_triplets(lattice.clone(), t)
}

/// `H = Δ + V` on the box (Dirichlet truncation).
pub fn assemble_hamiltonian(lattice: &LatticeBox, pot: &Potential) -> SymmetricOperator {
    let diag = 2.0 * lattice.dim() as f64;
    let mut t = neighbour_triplets(lattice);
    t.extend(
        lattice
            .sites()
            .enumerate()
            .map(|(i, n)| (i, i, diag + pot.value(&n))),
    );
    SymmetricOperator::from_triplets(lattice.clone(), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn potential_values() {
        let p2 = Potential::new(2.0).unwrap();
        assert_eq!(p2.value(&[0]), 1.0);
        assert_eq!(p2.value(&[3]), 9.0);
        assert_eq!(p2.value(&[-1]), 1.0);
        let p3 = Potential::new(3.0).unwrap();
        assert_eq!(p3.value(&[1, -2]), 8.0);
        assert!(Potential::new(0.0).is_err());
    }

    #[test]
    fn sublevel_counts() {
        let p = Potential::new(2.0).unwrap();
        let c = count_below(&p, 1, 4.0).unwrap();
        assert_eq!(c.exact, 5);
        assert_eq!(c.shell_formula, 5.0);
        assert_eq!(count_below(&p, 1, 10.0).unwrap().exact, 7);
        assert_eq!(count_below(&p, 2, 1.0).unwrap().exact, 9);
        assert_eq!(count_below(&p, 1, 0.5).unwrap().exact, 0);
        let five = count_below(&p, 1, 5.0).unwrap();
        assert_eq!(five.exact, 5);
        assert!((five.floor_first_formula - (2.0 * 5f64.sqrt() + 1.0)).abs() < 1e-12);
        assert!(matches!(count_below(&p, 1, -1.0), Err(Error::EmptyThreshold(_))));
    }

    #[test]
    fn cube_root_shells_are_exact() {
        let p = Potential::new(3.0).unwrap();
        assert_eq!(p.shell_radius_below(8.0), 2);
        assert_eq!(p.shell_radius_below(26.999), 2);
        assert_eq!(p.shell_radius_below(27.0), 3);
    }

    #[test]
    fn truncation_radii() {
        assert_eq!(truncation_radius(200.0, 2.0, 0.5).unwrap(), 20);
        assert_eq!(truncation_radius(2000.0, 2.0, 0.5).unwrap(), 64);
        assert_eq!(truncation_radius(1.0, 1.0, 0.5).unwrap(), 2);
        assert!(truncation_radius(-1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn small_hamiltonian_matrix() {
        let b = LatticeBox::cube(1, 1);
        let h = assemble_hamiltonian(&b, &Potential::new(2.0).unwrap()).to_dense();
        let want = [[3.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 3.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(h[(i, j)], want[i][j]);
            }
        }
    }

    #[test]
    fn laplacian_bandwidth_and_symmetry() {
        let b = LatticeBox::cube(2, 3);
        let lap = assemble_laplacian(&b);
        assert_eq!(lap.bandwidth(), 1);
        assert!(lap.is_exactly_hermitian());
        assert_eq!(lap.get(0, 0), 4.0);
    }

    proptest! {
        #[test]
        fn index_site_bijection(d in 1usize..4, r in 0u64..4) {
            let b = LatticeBox::cube(d, r);
            prop_assert_eq!(b.len(), (2 * r as usize + 1).pow(d as u32));
            for (i, s) in b.sites().enumerate() {
                prop_assert_eq!(b.index_of(&s), Some(i));
            }
        }

        #[test]
        fn shell_formula_matches_enumeration(d in 1usize..3, k in 1u32..4, lam in 1.0f64..400.0) {
            let p = Potential::new(k as f64).unwrap();
            let c = count_below(&p, d, lam).unwrap();
            prop_assert_eq!(c.exact as f64, c.shell_formula);
        }

        #[test]
        fn hamiltonian_exactly_symmetric(d in 1usize..3, r in 1u64..5, k in 0.5f64..3.0) {
            let b = LatticeBox::cube(d, r);
            let h = assemble_hamiltonian(&b, &Potential::new(k).unwrap());
            prop_assert!(h.is_exactly_hermitian());
            prop_assert_eq!(h.dim(), b.len());
        }
    }
}
