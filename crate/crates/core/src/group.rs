//! Finite cyclic rotation groups `C_n ⊂ SO(2)` and their action on images.
//!
//! `C_360` (1° resolution) stands in for the continuous rotation group.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GridImage;

/// The cyclic group of `order` planar rotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct CyclicGroup {
    order: u32,
}

/// An element of a [`CyclicGroup`], i.e. a rotation by `2π·index/order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement {
    index: u32,
    order: u32,
}

impl CyclicGroup {
    pub const C4: CyclicGroup = CyclicGroup { order: 4 };
    pub const C8: CyclicGroup = CyclicGroup { order: 8 };
    pub const C360: CyclicGroup = CyclicGroup { order: 360 };

    pub fn new(order: u32) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("group order must be at least 1"));
        }
        Ok(Self { order })
    }

    pub fn order(self) -> u32 {
        self.order
    }

    pub fn len(self) -> usize {
        self.order as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn identity(self) -> GroupElement {
        GroupElement {
            index: 0,
            order: self.order,
        }
    }

    pub fn element(self, index: u32) -> Result<GroupElement> {
        if index >= self.order {
            return Err(Error::invalid(format!(
                "element index {index} out of range for C{}",
                self.order
            )));
        }
        Ok(GroupElement {
            index,
            order: self.order,
        })
    }

    /// Element with index reduced modulo the order (negative values wrap).
    pub fn element_wrapping(self, index: i64) -> GroupElement {
        GroupElement {
            index: index.rem_euclid(self.order as i64) as u32,
            order: self.order,
        }
    }

    pub fn elements(self) -> impl Iterator<Item = GroupElement> {
        (0..self.order).map(move |index| GroupElement {
            index,
            order: self.order,
        })
    }

    pub fn contains(self, g: GroupElement) -> bool {
        g.order == self.order
    }
}

impl TryFrom<u32> for CyclicGroup {
    type Error = Error;

    fn try_from(order: u32) -> Result<Self> {
        CyclicGroup::new(order)
    }
}

impl From<CyclicGroup> for u32 {
    fn from(g: CyclicGroup) -> u32 {
        g.order
    }
}

impl fmt::Display for CyclicGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.order)
    }
}

impl GroupElement {
    pub fn index(self) -> u32 {
        self.index
    }

    pub fn group(self) -> CyclicGroup {
        CyclicGroup { order: self.order }
    }

    /// Rotation angle in radians, in `[0, 2π)`.
    pub fn angle(self) -> f64 {
        TAU * self.index as f64 / self.order as f64
    }

    pub fn is_identity(self) -> bool {
        self.index == 0
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/C{}", self.index, self.order)
    }
}

/// Group product `a · b`.
pub fn compose(a: GroupElement, b: GroupElement) -> Result<GroupElement> {
    if a.order != b.order {
        return Err(Error::invalid(format!(
            "cannot compose elements of C{} and C{}",
            a.order, b.order
        )));
    }
    Ok(GroupElement {
        index: ((a.index as u64 + b.index as u64) % a.order as u64) as u32,
        order: a.order,
    })
}

pub fn inverse(a: GroupElement) -> GroupElement {
    GroupElement {
        index: (a.order - a.index) % a.order,
        order: a.order,
    }
}

/// Apply the rotation `g` to an image.
///
/// Quarter-turn multiples are lossless permutations; other angles go through
/// one bilinear resampling of the sub-quarter residual, then the permutation.
pub fn act(g: GroupElement, x: &GridImage) -> GridImage {
    let n = g.order as u64;
    let scaled = 4 * g.index as u64;
    let quarters = (scaled / n) as u32;
    if scaled.is_multiple_of(n) {
        return x.rotate_quarters(quarters);
    }
    let residual = g.angle() - quarters as f64 * std::f64::consts::FRAC_PI_2;
    x.rotate_bilinear(residual).rotate_quarters(quarters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_examples() {
        let c4 = CyclicGroup::C4;
        let c8 = CyclicGroup::C8;
        let e = |g: CyclicGroup, i| g.element(i).unwrap();
        assert_eq!(compose(e(c4, 1), e(c4, 1)).unwrap().index(), 2);
        assert_eq!(compose(e(c4, 3), e(c4, 1)).unwrap().index(), 0);
        assert_eq!(compose(e(c8, 5), e(c8, 6)).unwrap().index(), 3);
    }

    #[test]
    fn compose_rejects_mixed_orders() {
        let a = CyclicGroup::C4.element(1).unwrap();
        let b = CyclicGroup::C8.element(1).unwrap();
        assert!(matches!(compose(a, b), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn inverse_examples() {
        let e = |g: CyclicGroup, i| g.element(i).unwrap();
        assert_eq!(inverse(e(CyclicGroup::C4, 0)).index(), 0);
        assert_eq!(inverse(e(CyclicGroup::C4, 1)).index(), 3);
        assert_eq!(inverse(e(CyclicGroup::C8, 5)).index(), 3);
    }

    #[test]
    fn element_bounds() {
        assert!(CyclicGroup::C4.element(4).is_err());
        assert!(CyclicGroup::new(0).is_err());
        assert_eq!(CyclicGroup::C8.element_wrapping(-1).index(), 7);
        assert_eq!(CyclicGroup::C8.element_wrapping(17).index(), 1);
    }

    #[test]
    fn angles_in_range() {
        for g in CyclicGroup::C360.elements() {
            let a = g.angle();
            assert!((0.0..TAU).contains(&a));
        }
        let quarter = CyclicGroup::C8.element(2).unwrap().angle();
        assert!((quarter - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn group_axioms_exhaustive() {
        for group in [CyclicGroup::C4, CyclicGroup::C8, CyclicGroup::C360] {
            let e = group.identity();
            for a in group.elements() {
                assert_eq!(compose(e, a).unwrap(), a);
                assert_eq!(compose(a, e).unwrap(), a);
                assert_eq!(compose(inverse(a), a).unwrap(), e);
                assert_eq!(compose(a, inverse(a)).unwrap(), e);
                for b in group.elements() {
                    let ab = compose(a, b).unwrap();
                    assert!(group.contains(ab));
                    assert!(ab.index() < group.order());
                }
            }
            // Associativity on a stride through the triples for C360.
            let step = if group.order() > 8 { 37 } else { 1 };
            for a in group.elements().step_by(step) {
                for b in group.elements().step_by(step) {
                    for c in group.elements().step_by(step) {
                        let left = compose(compose(a, b).unwrap(), c).unwrap();
                        let right = compose(a, compose(b, c).unwrap()).unwrap();
                        assert_eq!(left, right);
                    }
                }
            }
        }
    }

    #[test]
    fn serde_roundtrip_through_order() {
        let json = serde_json::to_string(&CyclicGroup::C8).unwrap();
        assert_eq!(json, "8");
        let back: CyclicGroup = serde_json::from_str(&json).unwrap();
        assert_eq!(back, CyclicGroup::C8);
        assert!(serde_json::from_str::<CyclicGroup>("0").is_err());
    }
}
