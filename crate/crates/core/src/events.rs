//! Append-only event trace. Every cross-store operation the simulator
//! performs is recorded here, so tests can assert ordering properties such
//! as "no payload delivery without a prior verification success".

use serde::{Deserialize, Serialize};

use crate::trust::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub at: SimTime,
    pub actor: String,
    pub event: String,
    pub outcome: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    pub(crate) events: Vec<EventRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, at: SimTime, actor: &str, event: &str, outcome: &str) {
        self.events.push(EventRecord {
            at,
            actor: actor.to_string(),
            event: event.to_string(),
            outcome: outcome.to_string(),
        });
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events recorded at or after an index captured earlier with [`len`].
    pub fn since(&self, mark: usize) -> &[EventRecord] {
        &self.events[mark.min(self.events.len())..]
    }
}
