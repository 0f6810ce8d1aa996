use std::thread;
use std::time::{Duration, Instant};

use super::{ExpressionFrame, GazeFrame, SessionLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// Emit each frame when the wall clock reaches its timestamp.
    Realtime,
    AsFastAsPossible,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaggedFrame<'a> {
    Gaze(&'a GazeFrame),
    Expression(&'a ExpressionFrame),
}

impl TaggedFrame<'_> {
    pub fn timestamp(&self) -> f64 {
        match self {
            TaggedFrame::Gaze(g) => g.timestamp,
            TaggedFrame::Expression(e) => e.timestamp,
        }
    }
}

/// Ordered merge of a session's two streams. Equal timestamps emit the gaze
/// frame first.
pub struct Replay<'a> {
    gaze: &'a [GazeFrame],
    expr: &'a [ExpressionFrame],
    gi: usize,
    ei: usize,
    pacing: Pacing,
    started: Option<Instant>,
}

pub fn replay(session: &SessionLog, pacing: Pacing) -> Replay<'_> {
    Replay {
        gaze: &session.gaze_stream,
        expr: &session.expression_stream,
        gi: 0,
        ei: 0,
        pacing,
        started: None,
    }
}

impl<'a> Iterator for Replay<'a> {
    type Item = TaggedFrame<'a>;

    fn next(&mut self) -> Option<Self::Item> {
        let frame = match (self.gaze.get(self.gi), self.expr.get(self.ei)) {
            (None, None) => return None,
            (Some(g), Some(e)) if g.timestamp <= e.timestamp => {
                self.gi += 1;
                TaggedFrame::Gaze(g)
            }
            (Some(g), None) => {
                self.gi += 1;
                TaggedFrame::Gaze(g)
            }
            (_, Some(e)) => {
                self.ei += 1;
                TaggedFrame::Expression(e)
            }
        };
        if self.pacing == Pacing::Realtime {
            let start = *self.started.get_or_insert_with(Instant::now);
            let due = start + Duration::from_secs_f64(frame.timestamp());
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
        Some(frame)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.gaze.len() - self.gi + self.expr.len() - self.ei;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Replay<'_> {}
