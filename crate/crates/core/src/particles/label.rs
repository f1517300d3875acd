use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Genealogy label `(k, i_1, ..., i_n)` with `k >= 1` and `i_j` in `{1, 2}`.
///
/// The child path is packed left-aligned into a `u128`: bit `127 - j` is set
/// when `i_{j+1} = 2`. Ordering is lexicographic with a parent before its
/// children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Label {
    root: u32,
    depth: u8,
    path: u128,
}

impl Label {
    pub const MAX_DEPTH: usize = 128;

    pub fn root(k: u32) -> Self {
        assert!(k >= 1, "root indices start at 1");
        Self {
            root: k,
            depth: 0,
            path: 0,
        }
    }

    pub fn root_index(&self) -> u32 {
        self.root
    }

    pub fn depth(&self) -> usize {
        self.depth as usize
    }

    /// Child `i` in `{1, 2}`.
    pub fn child(&self, i: u8) -> Result<Self> {
        assert!(i == 1 || i == 2, "child index must be 1 or 2");
        if self.depth() >= Self::MAX_DEPTH {
            return Err(Error::LabelOverflow {
                max: Self::MAX_DEPTH,
            });
        }
        let bit = if i == 2 {
            1u128 << (127 - self.depth as u32)
        } else {
            0
        };
        Ok(Self {
            root: self.root,
            depth: self.depth + 1,
            path: self.path | bit,
        })
    }

    pub fn parent(&self) -> Option<Self> {
        if self.depth == 0 {
            return None;
        }
        let d = self.depth - 1;
        let mask = if d == 0 {
            0
        } else {
            !0u128 << (128 - d as u32)
        };
        Some(Self {
            root: self.root,
            depth: d,
            path: self.path & mask,
        })
    }

    /// Entries `i_1, ..., i_n` of the child path.
    pub fn path(&self) -> Vec<u8> {
        (0..self.depth as u32)
            .map(|j| {
                if self.path >> (127 - j) & 1 == 1 {
                    2
                } else {
                    1
                }
            })
            .collect()
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.root, self.path, self.depth).cmp(&(other.root, other.path, other.depth))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)?;
        for i in self.path() {
            write!(f, ".{i}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn build(root: u32, path: &[u8]) -> Label {
        path.iter()
            .fold(Label::root(root), |l, &i| l.child(i).unwrap())
    }

    #[test]
    fn display_and_parent() {
        let l = build(3, &[1, 2, 2]);
        assert_eq!(l.to_string(), "3.1.2.2");
        assert_eq!(l.parent().unwrap().to_string(), "3.1.2");
        assert_eq!(Label::root(5).parent(), None);
        assert_eq!(Label::root(5).to_string(), "5");
    }

    #[test]
    fn ordering_is_depth_first() {
        let mut v = [
            build(1, &[2]),
            build(1, &[1, 2]),
            build(2, &[]),
            build(1, &[]),
            build(1, &[1]),
            build(1, &[1, 1]),
        ];
        v.sort();
        let names: Vec<String> = v.iter().map(|l| l.to_string()).collect();
        assert_eq!(names, ["1", "1.1", "1.1.1", "1.1.2", "1.2", "2"]);
    }

    #[test]
    fn depth_limit() {
        let deep = build(1, &[2; 128]);
        assert!(matches!(
            deep.child(1),
            Err(Error::LabelOverflow { max: 128 })
        ));
        assert_eq!(deep.parent().unwrap().depth(), 127);
    }

    proptest! {
        #[test]
        fn parent_of_child_is_self(root in 1u32..1000, path in prop::collection::vec(1u8..=2, 0..127), i in 1u8..=2) {
            let l = build(root, &path);
            let c = l.child(i).unwrap();
            prop_assert_eq!(c.parent().unwrap(), l);
            prop_assert_eq!(c.path().last().copied(), Some(i));
            prop_assert_eq!(&c.path()[..path.len()], &path[..]);
            prop_assert!(l < c);
        }
    }
}
