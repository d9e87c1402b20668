use std::fmt;

use crate::crypto::{hmac_tag, verify_hmac, NodeId, PairwiseKey, Pseudonym, DIGEST_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PacketKind {
    Rreq,
    Rrep,
    RrepAck,
    Data,
    /// Route error, sent back toward a source when a hop loses its next hop.
    Rerr,
}

impl PacketKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::Rreq => "RREQ",
            PacketKind::Rrep => "RREP",
            PacketKind::RrepAck => "RREP_ACK",
            PacketKind::Data => "DATA",
            PacketKind::Rerr => "RERR",
        }
    }

    pub fn parse(s: &str) -> Option<PacketKind> {
        Some(match s {
            "RREQ" => PacketKind::Rreq,
            "RREP" => PacketKind::Rrep,
            "RREP_ACK" => PacketKind::RrepAck,
            "DATA" => PacketKind::Data,
            "RERR" => PacketKind::Rerr,
            _ => return None,
        })
    }

    pub fn is_control(self) -> bool {
        self != PacketKind::Data
    }

    fn code(self) -> u8 {
        match self {
            PacketKind::Rreq => 1,
            PacketKind::Rrep => 2,
            PacketKind::RrepAck => 3,
            PacketKind::Data => 4,
            PacketKind::Rerr => 5,
        }
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// End-point address carried in a header: a pseudonym, or a plain node id
/// for the MPRF baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Address {
    Alias(Pseudonym),
    Plain(NodeId),
}

impl Address {
    /// 32-byte wire form. Plain ids are left-padded with zeros.
    pub fn to_bytes(self) -> [u8; DIGEST_LEN] {
        match self {
            Address::Alias(p) => p.0,
            Address::Plain(id) => {
                let mut out = [0u8; DIGEST_LEN];
                out[DIGEST_LEN - 8..].copy_from_slice(&id.to_be_bytes());
                out
            }
        }
    }
}

/// Simulation bookkeeping that travels with a packet but is not on the wire.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PacketMeta {
    pub created_at: f64,
    pub flow: Option<usize>,
    /// Set when an attacker altered or fabricated the packet.
    pub tampered: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    pub kind: PacketKind,
    pub packet_id: u64,
    /// PD_i in a request, PS_i in a reply.
    pub forward: Address,
    pub reverse: Address,
    pub sseq: u64,
    pub oseq: u64,
    pub dseq: u64,
    pub hop_count: u8,
    pub tag: [u8; DIGEST_LEN],
    /// Intermediaries a request has crossed, in order. End points never appear.
    pub route: Vec<NodeId>,
    pub path_id: u8,
    pub payload_size: u32,
    pub meta: PacketMeta,
}

pub const DATA_PAYLOAD_BYTES: u32 = 256;

impl Packet {
    pub fn new(kind: PacketKind, packet_id: u64, forward: Address, reverse: Address) -> Packet {
        Packet {
            kind,
            packet_id,
            forward,
            reverse,
            sseq: 0,
            oseq: 0,
            dseq: 0,
            hop_count: 0,
            tag: [0; DIGEST_LEN],
            route: Vec::new(),
            path_id: 0,
            payload_size: 0,
            meta: PacketMeta::default(),
        }
    }

    /// Header bytes as transmitted.
    pub fn header_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(160);
        out.push(self.kind.code());
        match self.kind {
            PacketKind::RrepAck => {
                out.extend_from_slice(&(self.packet_id as u32).to_be_bytes());
                out.extend_from_slice(&self.reverse.to_bytes());
                out.extend_from_slice(&self.tag);
            }
            PacketKind::Rerr => {
                out.extend_from_slice(&(self.packet_id as u32).to_be_bytes());
                out.extend_from_slice(&self.forward.to_bytes());
                out.extend_from_slice(&self.reverse.to_bytes());
                out.push(self.path_id);
            }
            _ => {
                out.push(self.hop_count);
                out.extend_from_slice(&(self.payload_size as u16).to_be_bytes());
                out.extend_from_slice(&(self.packet_id as u32).to_be_bytes());
                out.extend_from_slice(&self.forward.to_bytes());
                out.extend_from_slice(&(self.sseq as u32).to_be_bytes());
                out.extend_from_slice(&self.reverse.to_bytes());
                out.extend_from_slice(&(self.oseq as u32).to_be_bytes());
                out.extend_from_slice(&self.tag);
                out.extend_from_slice(&(self.dseq as u32).to_be_bytes());
                out.push(self.path_id);
                out.push(self.route.len() as u8);
                for id in &self.route {
                    out.extend_from_slice(&id.to_be_bytes());
                }
            }
        }
        out
    }

    /// Bytes on the air: header plus payload.
    pub fn wire_size(&self) -> usize {
        self.header_bytes().len() + self.payload_size as usize
    }
}

/// The authenticated part of a request or reply: the packet id and both
/// aliases. Sequence fields and hop count change in flight and are left out.
pub fn tag_message(packet_id: u64, forward: Address, reverse: Address) -> Vec<u8> {
    let mut m = Vec::with_capacity(8 + 2 * DIGEST_LEN);
    m.extend_from_slice(&packet_id.to_be_bytes());
    m.extend_from_slice(&forward.to_bytes());
    m.extend_from_slice(&reverse.to_bytes());
    m
}

pub fn sign(packet: &mut Packet, key: &PairwiseKey) {
    packet.tag = hmac_tag(key, &tag_message(packet.packet_id, packet.forward, packet.reverse));
}

pub fn verify(packet: &Packet, key: &PairwiseKey) -> bool {
    verify_hmac(key, &tag_message(packet.packet_id, packet.forward, packet.reverse), &packet.tag)
}

/// True when the 8-byte big-endian encoding of `id` occurs anywhere in `bytes`.
pub fn contains_node_id(bytes: &[u8], id: NodeId) -> bool {
    let needle = id.to_be_bytes();
    bytes.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyRing;
    use rand::SeedableRng;

    #[test]
    fn data_packet_size() {
        let mut p = Packet::new(PacketKind::Data, 1, Address::Plain(NodeId(1)), Address::Plain(NodeId(2)));
        p.payload_size = DATA_PAYLOAD_BYTES;
        assert_eq!(p.wire_size(), p.header_bytes().len() + 256);
    }

    #[test]
    fn plain_address_embeds_id() {
        let p = Packet::new(PacketKind::Rreq, 1, Address::Plain(NodeId(7)), Address::Plain(NodeId(9)));
        let h = p.header_bytes();
        assert!(contains_node_id(&h, NodeId(7)));
        assert!(contains_node_id(&h, NodeId(9)));
    }

    #[test]
    fn tags_cover_aliases_only() {
        let keys = KeyRing::generate(3, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        let k = keys.pairwise(NodeId(0), NodeId(2));
        let mut p = Packet::new(
            PacketKind::Rrep,
            4,
            Address::Alias(Pseudonym([1; 32])),
            Address::Alias(Pseudonym([2; 32])),
        );
        sign(&mut p, &k);
        assert!(verify(&p, &k));
        p.dseq += 500;
        p.hop_count += 1;
        assert!(verify(&p, &k));
        p.packet_id += 1;
        assert!(!verify(&p, &k));
        assert!(!verify(&p, &keys.pairwise(NodeId(1), NodeId(2))));
    }

    #[test]
    fn kinds_roundtrip() {
        for k in [PacketKind::Rreq, PacketKind::Rrep, PacketKind::RrepAck, PacketKind::Data, PacketKind::Rerr] {
            assert_eq!(PacketKind::parse(k.as_str()), Some(k));
        }
    }
}
