use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;
pub const NONCE_LEN: usize = 8;
pub const ID_LEN: usize = 16;
pub const COUNT_LEN: usize = 2;
/// Bytes before the digest list on the wire.
pub const HEADER_LEN: usize = NONCE_LEN + ID_LEN + COUNT_LEN;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MessageError {
    #[error("malformed message: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid hex: {0}")]
pub struct HexError(String);

macro_rules! byte_newtype {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name([u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn new(bytes: [u8; $len]) -> Self {
                $name(bytes)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            fn from_slice(bytes: &[u8]) -> Self {
                let mut out = [0u8; $len];
                out.copy_from_slice(bytes);
                $name(out)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), &self.to_hex()[..8.min(2 * $len)])
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl FromStr for $name {
            type Err = HexError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let bytes = hex::decode(s).map_err(|e| HexError(e.to_string()))?;
                if bytes.len() != $len {
                    return Err(HexError(format!("expected {} bytes, got {}", $len, bytes.len())));
                }
                Ok($name::from_slice(&bytes))
            }
        }
    };
}

byte_newtype!(Digest, DIGEST_LEN);
byte_newtype!(VirtualId, ID_LEN);
byte_newtype!(Nonce, NONCE_LEN);

impl VirtualId {
    /// Id whose trailing bytes hold `n` big-endian; handy for simulations.
    pub fn from_index(n: u64) -> Self {
        let mut bytes = [0u8; ID_LEN];
        bytes[ID_LEN - 8..].copy_from_slice(&n.to_be_bytes());
        VirtualId(bytes)
    }
}

impl Nonce {
    pub fn from_u64(n: u64) -> Self {
        Nonce(n.to_be_bytes())
    }
}

impl Digest {
    pub fn least_significant_bit(&self) -> bool {
        self.0[DIGEST_LEN - 1] & 1 == 1
    }
}

pub fn hash(bytes: &[u8]) -> Digest {
    let out = Sha256::digest(bytes);
    Digest::from_slice(out.as_slice())
}

/// The wire unit. Immutable; its digest is computed once at construction.
#[derive(Clone)]
pub struct Message {
    nonce: Nonce,
    id: VirtualId,
    digests: Vec<Digest>,
    payload: Vec<u8>,
    digest: Digest,
}

impl Message {
    pub fn new(
        nonce: Nonce,
        id: VirtualId,
        digests: Vec<Digest>,
        payload: Vec<u8>,
    ) -> Result<Self, MessageError> {
        if digests.len() > u16::MAX as usize {
            return Err(MessageError::Malformed(format!(
                "{} digests exceed the count field",
                digests.len()
            )));
        }
        let distinct: BTreeSet<&Digest> = digests.iter().collect();
        if distinct.len() != digests.len() {
            return Err(MessageError::Malformed("duplicate digest".into()));
        }
        let mut message = Message {
            nonce,
            id,
            digests,
            payload,
            digest: Digest::default(),
        };
        message.digest = hash(&message.to_bytes());
        Ok(message)
    }

    pub fn nonce(&self) -> &Nonce {
        &self.nonce
    }

    pub fn id(&self) -> &VirtualId {
        &self.id
    }

    pub fn digests(&self) -> &[Digest] {
        &self.digests
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// `hash(to_bytes())`.
    pub fn digest(&self) -> &Digest {
        &self.digest
    }

    pub fn wire_len(&self) -> usize {
        HEADER_LEN + DIGEST_LEN * self.digests.len() + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(self.nonce.as_bytes());
        out.extend_from_slice(self.id.as_bytes());
        out.extend_from_slice(&(self.digests.len() as u16).to_be_bytes());
        for d in &self.digests {
            out.extend_from_slice(d.as_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MessageError> {
        if bytes.len() < HEADER_LEN {
            return Err(MessageError::Malformed(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        let nonce = Nonce::from_slice(&bytes[..NONCE_LEN]);
        let id = VirtualId::from_slice(&bytes[NONCE_LEN..NONCE_LEN + ID_LEN]);
        let count = u16::from_be_bytes([bytes[NONCE_LEN + ID_LEN], bytes[NONCE_LEN + ID_LEN + 1]]) as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() < count * DIGEST_LEN {
            return Err(MessageError::Malformed(format!(
                "declared {count} digests but only {} bytes follow",
                body.len()
            )));
        }
        let digests = body[..count * DIGEST_LEN]
            .chunks_exact(DIGEST_LEN)
            .map(Digest::from_slice)
            .collect();
        let payload = body[count * DIGEST_LEN..].to_vec();
        Message::new(nonce, id, digests, payload)
    }
}

impl PartialEq for Message {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
    }
}

impl Eq for Message {}

impl std::hash::Hash for Message {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.digest.hash(state);
    }
}

impl fmt::Debug for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Message")
            .field("digest", &self.digest)
            .field("id", &self.id)
            .field("digests", &self.digests.len())
            .field("payload", &self.payload.len())
            .finish()
    }
}

/// A message or the non-message `Nil`. Orders by digest with `Nil` last.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LeaderValue {
    Message(Arc<Message>),
    Nil,
}

impl LeaderValue {
    pub fn digest(&self) -> Option<&Digest> {
        match self {
            LeaderValue::Message(m) => Some(m.digest()),
            LeaderValue::Nil => None,
        }
    }

    pub fn is_nil(&self) -> bool {
        matches!(self, LeaderValue::Nil)
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            LeaderValue::Nil => vec![0x00],
            LeaderValue::Message(m) => {
                let mut out = vec![0x01];
                out.extend(m.to_bytes());
                out
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, MessageError> {
        match bytes.split_first() {
            Some((0x00, [])) => Ok(LeaderValue::Nil),
            Some((0x01, rest)) => Ok(LeaderValue::Message(Arc::new(Message::from_bytes(rest)?))),
            _ => Err(MessageError::Malformed("unknown leader value tag".into())),
        }
    }
}

impl Ord for LeaderValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.digest(), other.digest()) {
            (Some(a), Some(b)) => a.cmp(b),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        }
    }
}

impl PartialOrd for LeaderValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for LeaderValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeaderValue::Message(m) => write!(f, "{}", m.digest()),
            LeaderValue::Nil => f.write_str("NONE"),
        }
    }
}

/// Binary part of a vote; `Undecided` is the bottom value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bit {
    Undecided,
    Zero,
    One,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Vote {
    pub leader: LeaderValue,
    pub bit: Bit,
}

impl Vote {
    pub fn new(leader: LeaderValue, bit: Bit) -> Self {
        Vote { leader, bit }
    }
}
