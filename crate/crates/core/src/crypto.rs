//! Pairwise keys, the keyed PRF, pseudonym chains and the trapdoor index.
//!
//! Every keyed primitive here is HMAC-SHA-256. Node identifiers enter the PRF
//! as 8-byte big-endian integers; pseudonyms are fed back in raw.

use std::collections::BTreeMap;
use std::fmt;

use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::Sha256;

type HmacSha256 = Hmac<Sha256>;

/// Length in bytes of keys, pseudonyms and tags.
pub const DIGEST_LEN: usize = 32;

/// Default number of precomputed pseudonyms held per chain.
pub const DEFAULT_TRAPDOOR_WINDOW: usize = 16;

/// Identifier of a node, unique within a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u64);

impl NodeId {
    /// Canonical wire encoding: 8 bytes, big-endian.
    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A node's 32-byte master key, handed out by the setup phase.
#[derive(Clone, PartialEq, Eq)]
pub struct MasterKey([u8; DIGEST_LEN]);

impl MasterKey {
    pub fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        MasterKey(bytes)
    }

    /// Draws a fresh uniformly random key.
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; DIGEST_LEN];
        rng.fill_bytes(&mut bytes);
        MasterKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }
}

impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MasterKey(..)")
    }
}

/// Key shared by an ordered (sender, receiver) pair.
#[derive(Clone, PartialEq, Eq)]
pub struct PairwiseKey {
    bytes: [u8; DIGEST_LEN],
    sender: NodeId,
    receiver: NodeId,
}

impl PairwiseKey {
    /// Wraps raw key material. Mostly useful for test vectors.
    pub fn from_raw(bytes: [u8; DIGEST_LEN], sender: NodeId, receiver: NodeId) -> Self {
        PairwiseKey {
            bytes,
            sender,
            receiver,
        }
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.bytes
    }

    pub fn owner_pair(&self) -> (NodeId, NodeId) {
        (self.sender, self.receiver)
    }
}

impl fmt::Debug for PairwiseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PairwiseKey({} -> {})", self.sender, self.receiver)
    }
}

/// A 32-byte PRF output standing in for a real address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pseudonym(pub [u8; DIGEST_LEN]);

impl Pseudonym {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    /// 64-char lowercase hex, the form used in traces.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Pseudonym(out))
    }
}

impl fmt::Debug for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pseudonym({}..)", &self.to_hex()[..12])
    }
}

impl fmt::Display for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

fn mac_bytes(key: &[u8], message: &[u8]) -> [u8; DIGEST_LEN] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts keys of any length");
    mac.update(message);
    mac.finalize().into_bytes().into()
}

/// HMAC-SHA-256 over arbitrary key bytes. Exposed for conformance checks.
pub fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; DIGEST_LEN] {
    mac_bytes(key, message)
}

/// Derives the key for `sender -> receiver` from the receiver's master key.
pub fn derive_pairwise_key(receiver_master: &MasterKey, receiver: NodeId, sender: NodeId) -> PairwiseKey {
    PairwiseKey {
        bytes: mac_bytes(receiver_master.as_bytes(), &sender.to_be_bytes()),
        sender,
        receiver,
    }
}

/// The keyed pseudo-random function used to build pseudonyms.
pub fn prf(key: &PairwiseKey, input: &[u8]) -> Pseudonym {
    Pseudonym(mac_bytes(key.as_bytes(), input))
}

pub fn hmac_tag(key: &PairwiseKey, message: &[u8]) -> [u8; DIGEST_LEN] {
    mac_bytes(key.as_bytes(), message)
}

/// Constant-time tag comparison.
pub fn verify_hmac(key: &PairwiseKey, message: &[u8], tag: &[u8; DIGEST_LEN]) -> bool {
    let mut mac = HmacSha256::new_from_slice(key.as_bytes()).expect("HMAC accepts keys of any length");
    mac.update(message);
    mac.verify_slice(tag).is_ok()
}

/// Which end of a flow a chain names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChainDirection {
    /// `PS_i`, seeded with the source identity.
    ForwardOfSource,
    /// `PD_i`, seeded with the destination identity.
    ForwardOfDestination,
}

/// A hash chain of pseudonyms: `P_1 = prf(K, id)`, `P_{i+1} = prf(K, P_i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudonymChain {
    key: PairwiseKey,
    seed_identity: NodeId,
    direction: ChainDirection,
    index: u64,
    current: Pseudonym,
}

impl PseudonymChain {
    /// Starts a chain at index 1.
    pub fn new(key: PairwiseKey, seed_identity: NodeId, direction: ChainDirection) -> Self {
        let current = prf(&key, &seed_identity.to_be_bytes());
        PseudonymChain {
            key,
            seed_identity,
            direction,
            index: 1,
            current,
        }
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn current(&self) -> Pseudonym {
        self.current
    }

    pub fn direction(&self) -> ChainDirection {
        self.direction
    }

    pub fn seed_identity(&self) -> NodeId {
        self.seed_identity
    }

    pub fn key(&self) -> &PairwiseKey {
        &self.key
    }

    /// Moves one step along the chain.
    pub fn advance(&self) -> PseudonymChain {
        PseudonymChain {
            key: self.key.clone(),
            seed_identity: self.seed_identity,
            direction: self.direction,
            index: self.index + 1,
            current: prf(&self.key, self.current.as_bytes()),
        }
    }

    pub fn advance_in_place(&mut self) {
        self.current = prf(&self.key, self.current.as_bytes());
        self.index += 1;
    }

    /// The pseudonym at `index` (>= 1), computed from the seed.
    pub fn pseudonym_at(key: &PairwiseKey, seed_identity: NodeId, index: u64) -> Pseudonym {
        assert!(index >= 1, "chain indices start at 1");
        let mut p = prf(key, &seed_identity.to_be_bytes());
        for _ in 1..index {
            p = prf(key, p.as_bytes());
        }
        p
    }
}

/// Identifies one precomputed pseudonym: which chain, and where on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TrapdoorMatch {
    pub peer: NodeId,
    pub direction: ChainDirection,
    pub index: u64,
}

#[derive(Clone, Debug)]
struct TrackedChain {
    chain: PseudonymChain,
    peer: NodeId,
    /// Highest index that has been matched (consumed) so far.
    consumed: u64,
    /// Highest index currently present in the index.
    precomputed_to: u64,
}

/// Ordered lookup of future pseudonyms for the chains a node can be addressed by.
///
/// Each tracked chain keeps exactly `window` consecutive not-yet-consumed
/// pseudonyms. When half of the window has been consumed, it is refilled.
#[derive(Clone, Debug)]
pub struct TrapdoorIndex {
    entries: BTreeMap<Pseudonym, TrapdoorMatch>,
    chains: Vec<TrackedChain>,
    window: usize,
}

impl TrapdoorIndex {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "trapdoor window must be at least 1");
        TrapdoorIndex {
            entries: BTreeMap::new(),
            chains: Vec::new(),
            window,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Starts tracking a chain at its index 1. `peer` is the other end of the flow.
    pub fn track(&mut self, peer: NodeId, chain: PseudonymChain) {
        let mut tracked = TrackedChain {
            chain,
            peer,
            consumed: 0,
            precomputed_to: 0,
        };
        let mut cursor = tracked.chain.clone();
        for _ in 0..self.window {
            self.entries.insert(
                cursor.current(),
                TrapdoorMatch {
                    peer,
                    direction: cursor.direction(),
                    index: cursor.index(),
                },
            );
            tracked.precomputed_to = cursor.index();
            cursor.advance_in_place();
        }
        tracked.chain = cursor;
        self.chains.push(tracked);
    }

    /// Exact-match lookup. Does not change the index.
    pub fn check(&self, candidate: &Pseudonym) -> Option<TrapdoorMatch> {
        self.entries.get(candidate).copied()
    }

    /// Marks a match as used: entries at or below its index are evicted and the
    /// window is refilled once half of it has been consumed.
    pub fn consume(&mut self, hit: &TrapdoorMatch) {
        let window = self.window as u64;
        let Some(pos) = self
            .chains
            .iter()
            .position(|c| c.peer == hit.peer && c.chain.direction() == hit.direction)
        else {
            return;
        };
        if hit.index <= self.chains[pos].consumed {
            return;
        }
        self.chains[pos].consumed = hit.index;
        let (peer, direction) = (hit.peer, hit.direction);
        let cutoff = hit.index;
        self.entries
            .retain(|_, m| !(m.peer == peer && m.direction == direction && m.index <= cutoff));

        let tracked = &mut self.chains[pos];
        let remaining = tracked.precomputed_to - tracked.consumed;
        if remaining <= window / 2 {
            while tracked.precomputed_to < tracked.consumed + window {
                let p = tracked.chain.current();
                let idx = tracked.chain.index();
                self.entries.insert(
                    p,
                    TrapdoorMatch {
                        peer,
                        direction,
                        index: idx,
                    },
                );
                tracked.precomputed_to = idx;
                tracked.chain.advance_in_place();
            }
        }
    }

    /// Number of precomputed entries currently held for one chain.
    pub fn pending_for(&self, peer: NodeId, direction: ChainDirection) -> usize {
        self.entries
            .values()
            .filter(|m| m.peer == peer && m.direction == direction)
            .count()
    }
}

/// Setup-phase key material for a whole scenario: one master key per node.
#[derive(Clone, Debug)]
pub struct KeyRing {
    masters: Vec<MasterKey>,
}

impl KeyRing {
    pub fn generate<R: RngCore + ?Sized>(node_count: usize, rng: &mut R) -> Self {
        KeyRing {
            masters: (0..node_count).map(|_| MasterKey::generate(rng)).collect(),
        }
    }

    pub fn master(&self, node: NodeId) -> &MasterKey {
        &self.masters[node.0 as usize]
    }

    /// `K_{S,D}`: what the setup server pre-distributes to `sender`, and what
    /// `receiver` can recompute from its own master key.
    pub fn pairwise(&self, sender: NodeId, receiver: NodeId) -> PairwiseKey {
        derive_pairwise_key(self.master(receiver), receiver, sender)
    }

    /// A node's static alias, used to label its forwarding log.
    pub fn log_alias(&self, node: NodeId) -> Pseudonym {
        let key = derive_pairwise_key(self.master(node), node, node);
        prf(&key, b"log-alias")
    }

    pub fn len(&self) -> usize {
        self.masters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masters.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn key(seed: u8) -> PairwiseKey {
        let master = MasterKey::from_bytes([seed; 32]);
        derive_pairwise_key(&master, NodeId(99), NodeId(7))
    }

    #[test]
    fn pairwise_key_is_deterministic() {
        let m = MasterKey::from_bytes([3; 32]);
        assert_eq!(
            derive_pairwise_key(&m, NodeId(1), NodeId(7)),
            derive_pairwise_key(&m, NodeId(1), NodeId(7))
        );
    }

    #[test]
    fn pairwise_key_depends_on_sender_and_master() {
        let m1 = MasterKey::from_bytes([3; 32]);
        let m2 = MasterKey::from_bytes([4; 32]);
        let a = derive_pairwise_key(&m1, NodeId(1), NodeId(7));
        let b = derive_pairwise_key(&m1, NodeId(1), NodeId(8));
        let c = derive_pairwise_key(&m2, NodeId(1), NodeId(7));
        assert_ne!(a.as_bytes(), b.as_bytes());
        assert_ne!(a.as_bytes(), c.as_bytes());
    }

    #[test]
    fn prf_matches_rfc4231_case_1() {
        let k = PairwiseKey::from_raw(
            {
                let mut b = [0u8; 32];
                b[..20].copy_from_slice(&[0x0b; 20]);
                b
            },
            NodeId(0),
            NodeId(0),
        );
        // A 32-byte key zero-padded is HMAC-equivalent to the 20-byte key.
        assert_eq!(
            prf(&k, b"Hi There").to_hex(),
            "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"
        );
    }

    #[test]
    fn prf_input_extension_changes_output() {
        let k = key(1);
        assert_ne!(prf(&k, b"abc"), prf(&k, b"abc\0"));
        assert_eq!(prf(&k, b"abc"), prf(&k, b"abc"));
    }

    #[test]
    fn rfc4231_case_2() {
        assert_eq!(
            hex::encode(hmac_sha256(b"Jefe", b"what do ya want for nothing?")),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"
        );
    }

    #[test]
    fn advance_is_prf_of_previous() {
        let k = key(2);
        let c1 = PseudonymChain::new(k.clone(), NodeId(5), ChainDirection::ForwardOfSource);
        let c2 = c1.advance();
        assert_eq!(c2.index(), 2);
        assert_eq!(c2.current(), prf(&k, c1.current().as_bytes()));
        let c3 = c2.advance();
        assert_eq!(
            c3.current(),
            prf(&k, prf(&k, c1.current().as_bytes()).as_bytes())
        );
        assert_eq!(c3.current(), PseudonymChain::pseudonym_at(&k, NodeId(5), 3));
    }

    #[test]
    fn hundred_advances_are_distinct() {
        let mut c = PseudonymChain::new(key(3), NodeId(5), ChainDirection::ForwardOfDestination);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..100 {
            assert!(seen.insert(c.current()));
            c.advance_in_place();
        }
    }

    #[test]
    fn trapdoor_finds_own_pseudonym() {
        let k = key(4);
        let chain = PseudonymChain::new(k.clone(), NodeId(9), ChainDirection::ForwardOfDestination);
        let mut idx = TrapdoorIndex::new(DEFAULT_TRAPDOOR_WINDOW);
        idx.track(NodeId(7), chain);
        let pd3 = PseudonymChain::pseudonym_at(&k, NodeId(9), 3);
        let hit = idx.check(&pd3).expect("PD_3 is inside the window");
        assert_eq!(hit.index, 3);
        assert_eq!(hit.direction, ChainDirection::ForwardOfDestination);
    }

    #[test]
    fn trapdoor_rejects_foreign_key() {
        let mut idx = TrapdoorIndex::new(16);
        idx.track(
            NodeId(7),
            PseudonymChain::new(key(4), NodeId(9), ChainDirection::ForwardOfDestination),
        );
        let foreign = PseudonymChain::pseudonym_at(&key(5), NodeId(9), 3);
        assert!(idx.check(&foreign).is_none());
    }

    #[test]
    fn trapdoor_rejects_random_values() {
        let mut idx = TrapdoorIndex::new(16);
        idx.track(
            NodeId(7),
            PseudonymChain::new(key(4), NodeId(9), ChainDirection::ForwardOfDestination),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100_000 {
            let mut b = [0u8; 32];
            rng.fill(&mut b);
            assert!(idx.check(&Pseudonym(b)).is_none());
        }
    }

    #[test]
    fn trapdoor_refills_after_half_window() {
        let k = key(6);
        let mut idx = TrapdoorIndex::new(16);
        idx.track(
            NodeId(7),
            PseudonymChain::new(k.clone(), NodeId(9), ChainDirection::ForwardOfDestination),
        );
        for i in 1..=40u64 {
            let p = PseudonymChain::pseudonym_at(&k, NodeId(9), i);
            let hit = idx.check(&p).unwrap_or_else(|| panic!("index {i} should be precomputed"));
            idx.consume(&hit);
            let pending = idx.pending_for(NodeId(7), ChainDirection::ForwardOfDestination);
            assert!((8..=16).contains(&pending), "pending {pending} at {i}");
        }
        // Consumed pseudonyms are no longer accepted.
        assert!(idx.check(&PseudonymChain::pseudonym_at(&k, NodeId(9), 40)).is_none());
    }

    #[test]
    fn hmac_roundtrip_and_tamper() {
        let k = key(7);
        let msg = b"route reply".to_vec();
        let tag = hmac_tag(&k, &msg);
        assert!(verify_hmac(&k, &msg, &tag));
        let mut bad = msg.clone();
        bad[0] ^= 1;
        assert!(!verify_hmac(&k, &bad, &tag));
        let mut bad_tag = tag;
        bad_tag[31] ^= 0x80;
        assert!(!verify_hmac(&k, &msg, &bad_tag));
    }

    #[test]
    fn pseudonym_hex_roundtrip() {
        let p = prf(&key(8), b"x");
        let h = p.to_hex();
        assert_eq!(h.len(), 64);
        assert_eq!(h, h.to_lowercase());
        assert_eq!(Pseudonym::from_hex(&h).unwrap(), p);
    }
}
