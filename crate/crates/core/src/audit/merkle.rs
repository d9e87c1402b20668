//! Binary Merkle tree over log entries.
//!
//! Leaves are `H(0x00 || bytes)`, interior nodes `H(0x01 || left || right)`.
//! An odd node at the end of a level is promoted unchanged. The empty tree
//! has root `H(0x02)`.

use sha2::{Digest as _, Sha256};

pub type Digest = [u8; 32];

const LEAF_TAG: u8 = 0x00;
const NODE_TAG: u8 = 0x01;
const EMPTY_TAG: u8 = 0x02;

pub fn leaf_hash(bytes: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update([LEAF_TAG]);
    h.update(bytes);
    h.finalize().into()
}

pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([NODE_TAG]);
    h.update(left);
    h.update(right);
    h.finalize().into()
}

pub fn empty_root() -> Digest {
    Sha256::digest([EMPTY_TAG]).into()
}

/// Root over already-hashed leaves.
pub fn root_from_leaves(leaves: &[Digest]) -> Digest {
    if leaves.is_empty() {
        return empty_root();
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => node_hash(l, r),
                [single] => *single,
                _ => unreachable!(),
            })
            .collect();
    }
    level[0]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// One sibling on the path from a leaf to the root.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProofStep {
    pub sibling: Digest,
    /// Which side the sibling sits on.
    pub side: Side,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InclusionProof {
    pub leaf_index: usize,
    pub steps: Vec<ProofStep>,
}

impl InclusionProof {
    pub fn verify(&self, leaf: &Digest, root: &Digest) -> bool {
        let acc = self.steps.iter().fold(*leaf, |acc, step| match step.side {
            Side::Left => node_hash(&step.sibling, &acc),
            Side::Right => node_hash(&acc, &step.sibling),
        });
        &acc == root
    }
}

/// Committed leaves and their root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MerkleCommitment {
    leaves: Vec<Digest>,
    /// Roots of the perfect subtrees covering `leaves`, left to right, with heights.
    peaks: Vec<(u32, Digest)>,
    root: Digest,
}

impl MerkleCommitment {
    pub fn from_leaves(leaves: Vec<Digest>) -> Self {
        let mut c = MerkleCommitment {
            leaves: Vec::with_capacity(leaves.len()),
            peaks: Vec::new(),
            root: empty_root(),
        };
        for leaf in leaves {
            c.push_peak(leaf);
            c.leaves.push(leaf);
        }
        c.root = c.bag_peaks();
        c
    }

    fn push_peak(&mut self, leaf: Digest) {
        let mut cur = (0u32, leaf);
        while let Some(&(h, left)) = self.peaks.last() {
            if h != cur.0 {
                break;
            }
            self.peaks.pop();
            cur = (h + 1, node_hash(&left, &cur.1));
        }
        self.peaks.push(cur);
    }

    // Promoting odd nodes makes the root a right fold over the peaks.
    fn bag_peaks(&self) -> Digest {
        let mut iter = self.peaks.iter().rev();
        let Some(&(_, last)) = iter.next() else {
            return empty_root();
        };
        iter.fold(last, |acc, (_, peak)| node_hash(peak, &acc))
    }

    pub fn root(&self) -> Digest {
        self.root
    }

    pub fn root_hex(&self) -> String {
        hex::encode(self.root)
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.leaves
    }

    /// Appends a leaf in O(log n).
    pub fn push_leaf(&mut self, leaf: Digest) {
        self.push_peak(leaf);
        self.leaves.push(leaf);
        self.root = self.bag_peaks();
    }

    fn levels(&self) -> Vec<Vec<Digest>> {
        let mut levels = vec![self.leaves.clone()];
        while levels.last().is_some_and(|l| l.len() > 1) {
            let next = levels
                .last()
                .unwrap()
                .chunks(2)
                .map(|pair| match pair {
                    [l, r] => node_hash(l, r),
                    [single] => *single,
                    _ => unreachable!(),
                })
                .collect();
            levels.push(next);
        }
        levels
    }

    /// Proofs for every leaf, sharing one pass over the tree.
    pub fn prove_all(&self) -> Vec<InclusionProof> {
        let levels = self.levels();
        (0..self.leaves.len())
            .map(|index| {
                let mut steps = Vec::new();
                let mut pos = index;
                for level in &levels[..levels.len() - 1] {
                    let sibling = pos ^ 1;
                    if sibling < level.len() {
                        steps.push(ProofStep {
                            sibling: level[sibling],
                            side: if sibling < pos { Side::Left } else { Side::Right },
                        });
                    }
                    pos /= 2;
                }
                InclusionProof {
                    leaf_index: index,
                    steps,
                }
            })
            .collect()
    }

    pub fn prove(&self, index: usize) -> Option<InclusionProof> {
        if index >= self.leaves.len() {
            return None;
        }
        let mut steps = Vec::new();
        let mut level = self.leaves.clone();
        let mut pos = index;
        while level.len() > 1 {
            let sibling = pos ^ 1;
            if sibling < level.len() {
                steps.push(ProofStep {
                    sibling: level[sibling],
                    side: if sibling < pos { Side::Left } else { Side::Right },
                });
            }
            level = level
                .chunks(2)
                .map(|pair| match pair {
                    [l, r] => node_hash(l, r),
                    [single] => *single,
                    _ => unreachable!(),
                })
                .collect();
            pos /= 2;
        }
        Some(InclusionProof {
            leaf_index: index,
            steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves(n: usize) -> Vec<Digest> {
        (0..n).map(|i| leaf_hash(&(i as u64).to_be_bytes())).collect()
    }

    #[test]
    fn small_trees_by_hand() {
        assert_eq!(root_from_leaves(&[]), empty_root());
        let l = leaves(3);
        assert_eq!(root_from_leaves(&l[..1]), l[0]);
        assert_eq!(root_from_leaves(&l[..2]), node_hash(&l[0], &l[1]));
        // third leaf promoted, then joined
        assert_eq!(root_from_leaves(&l), node_hash(&node_hash(&l[0], &l[1]), &l[2]));
    }

    #[test]
    fn every_proof_verifies() {
        for n in 1..40 {
            let c = MerkleCommitment::from_leaves(leaves(n));
            for i in 0..n {
                let p = c.prove(i).unwrap();
                assert!(p.verify(&c.leaves()[i], &c.root()), "n={n} i={i}");
                let other = leaf_hash(b"not in tree");
                assert!(!p.verify(&other, &c.root()));
            }
            assert!(c.prove(n).is_none());
            let all = c.prove_all();
            assert_eq!(all, (0..n).map(|i| c.prove(i).unwrap()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn incremental_root_matches_batch() {
        let l = leaves(70);
        let mut c = MerkleCommitment::from_leaves(Vec::new());
        for (i, leaf) in l.iter().enumerate() {
            c.push_leaf(*leaf);
            assert_eq!(c.root(), root_from_leaves(&l[..=i]), "after {} leaves", i + 1);
        }
    }

    #[test]
    fn order_matters() {
        let l = leaves(2);
        assert_ne!(root_from_leaves(&[l[0], l[1]]), root_from_leaves(&[l[1], l[0]]));
    }

    #[test]
    fn leaf_and_node_domains_differ() {
        let l = leaves(2);
        let mut concat = Vec::new();
        concat.extend_from_slice(&l[0]);
        concat.extend_from_slice(&l[1]);
        assert_ne!(leaf_hash(&concat), node_hash(&l[0], &l[1]));
    }

    proptest::proptest! {
        #[test]
        fn pushed_root_matches_batch(n in 0usize..70) {
            let l = leaves(n);
            let mut inc = MerkleCommitment::from_leaves(Vec::new());
            for leaf in &l {
                inc.push_leaf(*leaf);
            }
            proptest::prop_assert_eq!(inc.root(), root_from_leaves(&l));
        }

        #[test]
        fn every_proof_verifies_only_its_leaf(n in 1usize..40, i in 0usize..40, j in 0usize..40) {
            let l = leaves(n);
            let tree = MerkleCommitment::from_leaves(l.clone());
            let (i, j) = (i % n, j % n);
            let proof = tree.prove(i).unwrap();
            proptest::prop_assert!(proof.verify(&l[i], &tree.root()));
            proptest::prop_assert_eq!(proof.verify(&l[j], &tree.root()), i == j);
        }
    }
}
