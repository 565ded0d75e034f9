//! Message envelope:
//!
//! ```text
//! kind: u8 | round: u64 BE | sender_len: u32 BE | sender (UTF-8) | payload
//! ```
//!
//! The payload is one record in the tagged binary layout of [`crate::wire`].

use crate::wire::WireError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MessageKind {
    ProtectedUpdate = 1,
    DkRequest = 2,
    DkGrant = 3,
    Partial = 4,
    Abort = 5,
}

impl MessageKind {
    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            1 => Self::ProtectedUpdate,
            2 => Self::DkRequest,
            3 => Self::DkGrant,
            4 => Self::Partial,
            5 => Self::Abort,
            other => {
                return Err(WireError::Malformed(format!(
                    "unknown message kind {other}"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub kind: MessageKind,
    pub round: u64,
    pub sender: String,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn new(kind: MessageKind, round: u64, sender: impl Into<String>, payload: Vec<u8>) -> Self {
        Self {
            kind,
            round,
            sender: sender.into(),
            payload,
        }
    }

    /// Bytes the envelope adds around its payload.
    pub fn overhead(&self) -> usize {
        1 + 8 + 4 + self.sender.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.overhead() + self.payload.len());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.round.to_be_bytes());
        out.extend_from_slice(&(self.sender.len() as u32).to_be_bytes());
        out.extend_from_slice(self.sender.as_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, WireError> {
        let kind = MessageKind::from_byte(*data.first().ok_or(WireError::Truncated)?)?;
        let round = u64::from_be_bytes(
            data.get(1..9)
                .ok_or(WireError::Truncated)?
                .try_into()
                .expect("8 bytes"),
        );
        let len = u32::from_be_bytes(
            data.get(9..13)
                .ok_or(WireError::Truncated)?
                .try_into()
                .expect("4 bytes"),
        ) as usize;
        let sender = data.get(13..13 + len).ok_or(WireError::Truncated)?;
        let sender = String::from_utf8(sender.to_vec())
            .map_err(|_| WireError::Malformed("sender is not UTF-8".into()))?;
        Ok(Self {
            kind,
            round,
            sender,
            payload: data[13 + len..].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_abort_envelope() {
        let env = Envelope::new(MessageKind::Abort, 3, "p1", b"x".to_vec());
        assert_eq!(
            hex::encode(env.to_bytes()),
            "05000000000000000300000002703178"
        );
        assert_eq!(env.overhead(), 15);
        assert_eq!(Envelope::from_bytes(&env.to_bytes()).unwrap(), env);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Envelope::from_bytes(&[]).is_err());
        assert!(Envelope::from_bytes(&[9, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0]).is_err());
        assert_eq!(
            Envelope::from_bytes(&[1, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 5, b'a']),
            Err(WireError::Truncated)
        );
    }
}
