//! Clock-free frame scheduling: a depth-1 latest-wins queue in front of a
//! single worker, throttled to a minimum interval between dispatches.

use std::time::Duration;

use crate::ServerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offer {
    Queued,
    /// The previously pending frame was discarded.
    Replaced { dropped_frame: u64 },
}

#[derive(Debug, PartialEq)]
pub enum Next<T> {
    Dispatch(u64, T),
    /// A frame is pending but the throttle holds it until this time.
    WaitUntil(Duration),
    /// Nothing pending, or the worker is busy.
    Idle,
}

/// Times are durations since an arbitrary session epoch, so the same
/// logic runs against a real or a virtual clock.
#[derive(Debug)]
pub struct FrameScheduler<T> {
    min_interval: Duration,
    pending: Option<(u64, T)>,
    in_flight: Option<u64>,
    last_dispatch: Option<Duration>,
    dropped: u64,
}

impl<T> FrameScheduler<T> {
    pub fn new(max_fps: f64) -> Result<Self, ServerError> {
        if !(max_fps.is_finite() && max_fps > 0.0) {
            return Err(ServerError::Config(format!("max_fps must be positive, got {max_fps}")));
        }
        Ok(Self {
            min_interval: Duration::from_secs_f64(1.0 / max_fps),
            pending: None,
            in_flight: None,
            last_dispatch: None,
            dropped: 0,
        })
    }

    pub fn min_interval(&self) -> Duration {
        self.min_interval
    }

    pub fn offer(&mut self, frame_id: u64, frame: T) -> Offer {
        match self.pending.replace((frame_id, frame)) {
            Some((old, _)) => {
                self.dropped += 1;
                Offer::Replaced { dropped_frame: old }
            }
            None => Offer::Queued,
        }
    }

    pub fn next(&mut self, now: Duration) -> Next<T> {
        if self.in_flight.is_some() || self.pending.is_none() {
            return Next::Idle;
        }
        if let Some(last) = self.last_dispatch {
            let ready = last + self.min_interval;
            if now < ready {
                return Next::WaitUntil(ready);
            }
        }
        let (id, frame) = self.pending.take().expect("checked above");
        self.in_flight = Some(id);
        self.last_dispatch = Some(now);
        Next::Dispatch(id, frame)
    }

    /// Marks the in-flight frame finished.
    pub fn complete(&mut self) -> Option<u64> {
        self.in_flight.take()
    }

    /// Discards the pending frame, if any.
    pub fn clear_pending(&mut self) -> Option<u64> {
        let id = self.pending.take().map(|(id, _)| id);
        if id.is_some() {
            self.dropped += 1;
        }
        id
    }

    pub fn pending_id(&self) -> Option<u64> {
        self.pending.as_ref().map(|(id, _)| *id)
    }

    pub fn in_flight(&self) -> Option<u64> {
        self.in_flight
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}
