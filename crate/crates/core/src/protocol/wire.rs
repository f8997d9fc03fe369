//! Ordered, authenticated in-process channel with a logical clock.
//!
//! Messages are delivered in send order, each `latency` ticks after it was
//! sent. Actors run to completion on one message at a time. A
//! [`ChannelTap`] sees every message before it is queued and may inject
//! extra traffic once the network goes quiet; this is the only hook
//! adversaries get on the wire.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::crypto::Tick;

use super::message::{ActorId, ProtocolMessage};
use super::{Actor, Context, World};

pub const DEFAULT_TICK_BUDGET: Tick = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("tick budget {budget} exhausted at tick {now}")]
    TickBudgetExceeded { budget: Tick, now: Tick },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Send,
    Receive,
    Inject,
    Drop,
    Note,
}

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: Tick,
    pub actor: ActorId,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<ProtocolMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Event {
    fn message(tick: Tick, actor: &ActorId, direction: Direction, msg: &ProtocolMessage) -> Self {
        Event { tick, actor: actor.clone(), direction, message: Some(msg.clone()), note: None }
    }

    pub fn note(tick: Tick, actor: &ActorId, text: impl Into<String>) -> Self {
        Event { tick, actor: actor.clone(), direction: Direction::Note, message: None, note: Some(text.into()) }
    }
}

pub trait ChannelTap {
    fn observe(&mut self, _tick: Tick, _msg: &ProtocolMessage) {}

    /// Called when the queue drains. Returned messages are delivered as if
    /// sent now.
    fn on_idle(&mut self, _tick: Tick) -> Vec<ProtocolMessage> {
        Vec::new()
    }
}

/// A tap that does nothing.
pub struct Passive;

impl ChannelTap for Passive {}

#[derive(Debug)]
pub struct Wire {
    now: Tick,
    latency: Tick,
    tick_budget: Tick,
    queue: VecDeque<(Tick, ProtocolMessage)>,
    events: Vec<Event>,
}

impl Default for Wire {
    fn default() -> Self {
        Wire::new(1, DEFAULT_TICK_BUDGET)
    }
}

impl Wire {
    pub fn new(latency: Tick, tick_budget: Tick) -> Self {
        Wire { now: 0, latency: latency.max(1), tick_budget, queue: VecDeque::new(), events: Vec::new() }
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    /// Moves the clock forward with no traffic.
    pub fn advance(&mut self, ticks: Tick) {
        self.now += ticks;
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    pub fn note(&mut self, actor: &ActorId, text: impl Into<String>) {
        self.events.push(Event::note(self.now, actor, text));
    }

    /// Runs until no message is in flight and the tap has nothing more to
    /// inject.
    pub fn run(
        &mut self,
        actors: &mut [&mut dyn Actor],
        world: &mut World,
        initial: Vec<ProtocolMessage>,
        tap: &mut dyn ChannelTap,
    ) -> Result<(), WireError> {
        for msg in initial {
            self.send(msg, Direction::Send, tap);
        }
        loop {
            let Some((at, msg)) = self.queue.pop_front() else {
                let injected = tap.on_idle(self.now);
                if injected.is_empty() {
                    return Ok(());
                }
                for msg in injected {
                    self.send(msg, Direction::Inject, tap);
                }
                continue;
            };
            self.now = self.now.max(at);
            if self.now > self.tick_budget {
                return Err(WireError::TickBudgetExceeded { budget: self.tick_budget, now: self.now });
            }
            let Some(actor) = actors.iter_mut().find(|a| *a.id() == msg.recipient) else {
                self.events.push(Event::message(self.now, &msg.recipient, Direction::Drop, &msg));
                continue;
            };
            self.events.push(Event::message(self.now, &msg.recipient, Direction::Receive, &msg));
            let mut ctx = Context { now: self.now, world: &mut *world, notes: Vec::new() };
            let outputs = actor.handle(msg, &mut ctx);
            let actor_id = actor.id().clone();
            for text in ctx.notes {
                self.events.push(Event::note(self.now, &actor_id, text));
            }
            for out in outputs {
                self.send(out, Direction::Send, tap);
            }
        }
    }

    fn send(&mut self, msg: ProtocolMessage, direction: Direction, tap: &mut dyn ChannelTap) {
        tap.observe(self.now, &msg);
        self.events.push(Event::message(self.now, &msg.sender, direction, &msg));
        self.queue.push_back((self.now + self.latency, msg));
    }
}
