//! Truncated character basis (x, A) for the fibered augmented space
//! ℓ²(Zᵈ) ⊗ L²(Ω): x is the relative particle coordinate and A a finite set
//! of sites defining the spin character e_A(ω) = ∏_{y∈A} ω(y). Characters
//! are orthonormal under the uniform product measure, so the basis carries
//! the plain ℓ² inner product.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Site vector in Zᵈ.
pub type Site = Vec<i64>;

/// Truncation parameters: |x|_∞ ≤ pos_radius, |A| ≤ set_size, every a ∈ A
/// within ℓ∞ distance set_radius of {0, x}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub pos_radius: i64,
    pub set_size: usize,
    pub set_radius: i64,
}

/// One basis element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasisElement {
    pub x: Site,
    /// sorted, duplicate-free
    pub a: Vec<Site>,
}

#[derive(Debug, Clone)]
pub struct CharacterBasis {
    pub dim_space: usize,
    pub trunc: Truncation,
    pub elements: Vec<BasisElement>,
    index: HashMap<(Site, Vec<Site>), usize>,
}

impl CharacterBasis {
    /// Enumerate the truncated basis in dimension `d`.
    pub fn build(d: usize, trunc: Truncation) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if trunc.pos_radius < 0 || trunc.set_radius < 0 {
            return Err(Error::invalid("truncation radii must be nonnegative"));
        }
        let mut elements = Vec::new();
        let mut index = HashMap::new();
        for x in ball(d, trunc.pos_radius) {
            let nb = neighborhood(&x, d, trunc.set_radius);
            for a in subsets_up_to(&nb, trunc.set_size) {
                index.insert((x.clone(), a.clone()), elements.len());
                elements.push(BasisElement { x: x.clone(), a });
            }
        }
        Ok(CharacterBasis { dim_space: d, trunc, elements, index })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn index_of(&self, x: &[i64], a: &[Site]) -> Option<usize> {
        self.index.get(&(x.to_vec(), a.to_vec())).copied()
    }

    /// Index of the ground-state element (0, ∅).
    pub fn origin_index(&self) -> usize {
        self.index_of(&vec![0; self.dim_space], &[])
            .expect("(0, ∅) is always inside the truncation")
    }

    /// Indices of all elements with A = ∅ (the e_∅ sector, image of P₀).
    pub fn empty_sector(&self) -> Vec<usize> {
        self.elements
            .iter()
            .enumerate()
            .filter(|(_, e)| e.a.is_empty())
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of all elements with A ≠ ∅ (the mean-zero sector).
    pub fn mean_zero_sector(&self) -> Vec<usize> {
        self.elements
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.a.is_empty())
            .map(|(i, _)| i)
            .collect()
    }
}

/// All sites with ℓ∞ norm ≤ radius, in lexicographic order.
pub fn ball(d: usize, radius: i64) -> Vec<Site> {
    let mut out = Vec::new();
    let mut cur = vec![-radius; d];
    loop {
        out.push(cur.clone());
        let mut axis = d;
        while axis > 0 {
            axis -= 1;
            cur[axis] += 1;
            if cur[axis] <= radius {
                break;
            }
            cur[axis] = -radius;
            if axis == 0 {
                return out;
            }
        }
        if d == 0 {
            return out;
        }
    }
}

/// Union of ℓ∞ balls of radius `r_a` around 0 and around x, sorted.
fn neighborhood(x: &[i64], d: usize, r_a: i64) -> Vec<Site> {
    let mut set = std::collections::BTreeSet::new();
    for center in [vec![0i64; d], x.to_vec()] {
        for off in ball(d, r_a) {
            let site: Site = center.iter().zip(&off).map(|(c, o)| c + o).collect();
            set.insert(site);
        }
    }
    set.into_iter().collect()
}

/// All subsets of `items` with size ≤ max_size, smallest sizes first,
/// combinations in lexicographic order (matching index order of `items`).
fn subsets_up_to(items: &[Site], max_size: usize) -> Vec<Vec<Site>> {
    let mut out = vec![vec![]];
    for size in 1..=max_size.min(items.len()) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&i| items[i].clone()).collect());
            // advance combination
            let mut pos = size;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] <= items.len() - (size - pos) {
                    for p in pos + 1..size {
                        idx[p] = idx[p - 1] + 1;
                    }
                    break;
                }
            }
            if pos == 0 && idx[0] > items.len() - size {
                break;
            }
        }
    }
    out
}

/// Symmetric difference A Δ {y}, keeping the sorted representation.
pub fn symdiff(a: &[Site], y: &[i64]) -> Vec<Site> {
    let mut out: Vec<Site> = a.iter().filter(|s| s.as_slice() != y).cloned().collect();
    if out.len() == a.len() {
        out.push(y.to_vec());
        out.sort();
    }
    out
}

/// Translated set A + ζ (sorted representation preserved by uniform shift).
pub fn translate(a: &[Site], zeta: &[i64]) -> Vec<Site> {
    let mut out: Vec<Site> = a
        .iter()
        .map(|s| s.iter().zip(zeta).map(|(c, z)| c + z).collect())
        .collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_dimension() {
        // d=1, R_x=12, A_max=2, R_A=2
        let b = CharacterBasis::build(
            1,
            Truncation { pos_radius: 12, set_size: 2, set_radius: 2 },
        )
        .unwrap();
        assert_eq!(b.len(), 1180);
    }

    #[test]
    fn counting_small_case() {
        // d=1, R_x=1, A_max=1, R_A=1: x ∈ {−1,0,1};
        // x=0: nb {−1,0,1} → 1+3 elements; x=±1: nb of 4 sites → 1+4
        let b = CharacterBasis::build(
            1,
            Truncation { pos_radius: 1, set_size: 1, set_radius: 1 },
        )
        .unwrap();
        assert_eq!(b.len(), 5 + 4 + 5);
    }

    #[test]
    fn nesting() {
        let small = CharacterBasis::build(
            1,
            Truncation { pos_radius: 3, set_size: 1, set_radius: 1 },
        )
        .unwrap();
        for grow in [
            Truncation { pos_radius: 5, set_size: 1, set_radius: 1 },
            Truncation { pos_radius: 3, set_size: 2, set_radius: 1 },
            Truncation { pos_radius: 3, set_size: 1, set_radius: 2 },
        ] {
            let big = CharacterBasis::build(1, grow).unwrap();
            for e in &small.elements {
                assert!(big.index_of(&e.x, &e.a).is_some(), "{e:?} lost when enlarging");
            }
        }
    }

    #[test]
    fn index_roundtrip_and_sorted_sets() {
        let b = CharacterBasis::build(
            2,
            Truncation { pos_radius: 2, set_size: 2, set_radius: 1 },
        )
        .unwrap();
        for (i, e) in b.elements.iter().enumerate() {
            assert_eq!(b.index_of(&e.x, &e.a), Some(i));
            let mut sorted = e.a.clone();
            sorted.sort();
            assert_eq!(sorted, e.a);
            sorted.dedup();
            assert_eq!(sorted.len(), e.a.len());
        }
    }

    #[test]
    fn symdiff_is_involution() {
        let a = vec![vec![0i64], vec![2]];
        let y = vec![1i64];
        let once = symdiff(&a, &y);
        assert_eq!(once, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(symdiff(&once, &y), a);
        // removing an existing element
        assert_eq!(symdiff(&a, &[0]), vec![vec![2]]);
    }

    #[test]
    fn translation_shifts() {
        let a = vec![vec![0i64, 1], vec![2, -1]];
        assert_eq!(translate(&a, &[1, 1]), vec![vec![1, 2], vec![3, 0]]);
    }

    #[test]
    fn ball_lexicographic() {
        let b = ball(2, 1);
        assert_eq!(b.len(), 9);
        assert_eq!(b[0], vec![-1, -1]);
        assert_eq!(b[8], vec![1, 1]);
    }

    #[test]
    fn characters_orthonormal_small_dense() {
        // explicit check on 3 sites: <e_A, e_B> = δ_AB under uniform measure
        let n = 3usize;
        let sites: Vec<Site> = (0..n as i64).map(|i| vec![i]).collect();
        let subs = subsets_up_to(&sites, n);
        for (ai, a) in subs.iter().enumerate() {
            for (bi, b) in subs.iter().enumerate() {
                let mut acc = 0.0f64;
                for c in 0..1usize << n {
                    let ea: f64 = a
                        .iter()
                        .map(|s| if (c >> s[0]) & 1 == 1 { 1.0 } else { -1.0 })
                        .product();
                    let eb: f64 = b
                        .iter()
                        .map(|s| if (c >> s[0]) & 1 == 1 { 1.0 } else { -1.0 })
                        .product();
                    acc += ea * eb;
                }
                acc /= (1usize << n) as f64;
                let want = if ai == bi { 1.0 } else { 0.0 };
                assert!((acc - want).abs() < 1e-14);
            }
        }
    }
}
