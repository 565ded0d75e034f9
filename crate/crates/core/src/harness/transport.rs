//! Deterministic in-process message transport with per-edge byte counts.
//!
//! Inboxes are FIFO and iterated in entity order, so a run's message order
//! depends only on the order of `send` calls. There is no route between two
//! aggregators.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::tdsa::{Envelope, MessageKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Entity {
    Party(u32),
    Aggregator(u32),
    Infrastructure,
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Party(i) => write!(f, "p{i}"),
            Entity::Aggregator(j) => write!(f, "a{j}"),
            Entity::Infrastructure => f.write_str("infra"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("no channel from {from} to {to}: aggregators never talk to each other")]
    PeerChannel { from: Entity, to: Entity },
}

#[derive(Debug, Default)]
pub struct Transport {
    inboxes: BTreeMap<Entity, VecDeque<Envelope>>,
    round_bytes: BTreeMap<(Entity, Entity), u64>,
    total_bytes: BTreeMap<(Entity, Entity), u64>,
    transcripts: BTreeMap<Entity, Vec<Envelope>>,
    rejected_sends: u64,
}

impl Transport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues one envelope; returns its size on the wire.
    pub fn send(
        &mut self,
        from: Entity,
        to: Entity,
        kind: MessageKind,
        round: u64,
        payload: Vec<u8>,
    ) -> Result<usize, TransportError> {
        if matches!((from, to), (Entity::Aggregator(_), Entity::Aggregator(_))) {
            self.rejected_sends += 1;
            return Err(TransportError::PeerChannel { from, to });
        }
        let env = Envelope::new(kind, round, from.to_string(), payload);
        let size = env.overhead() + env.payload.len();
        *self.round_bytes.entry((from, to)).or_default() += size as u64;
        *self.total_bytes.entry((from, to)).or_default() += size as u64;
        self.inboxes.entry(to).or_default().push_back(env);
        Ok(size)
    }

    /// Delivers everything queued for `to`, oldest first, and appends it to
    /// `to`'s transcript.
    pub fn receive(&mut self, to: Entity) -> Vec<Envelope> {
        let msgs: Vec<Envelope> = self
            .inboxes
            .get_mut(&to)
            .map(|q| q.drain(..).collect())
            .unwrap_or_default();
        self.transcripts
            .entry(to)
            .or_default()
            .extend(msgs.iter().cloned());
        msgs
    }

    /// Drops undelivered messages, as for an entity that went offline.
    pub fn discard(&mut self, to: Entity) -> usize {
        self.inboxes.get_mut(&to).map_or(0, |q| q.drain(..).count())
    }

    /// Per-edge byte counts since the last call.
    pub fn take_round_bytes(&mut self) -> BTreeMap<(Entity, Entity), u64> {
        std::mem::take(&mut self.round_bytes)
    }

    pub fn total_bytes(&self) -> &BTreeMap<(Entity, Entity), u64> {
        &self.total_bytes
    }

    /// Every message `entity` has received so far.
    pub fn transcript(&self, entity: Entity) -> &[Envelope] {
        self.transcripts.get(&entity).map_or(&[], Vec::as_slice)
    }

    pub fn rejected_sends(&self) -> u64 {
        self.rejected_sends
    }
}
