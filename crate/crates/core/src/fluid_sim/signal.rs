use std::collections::VecDeque;

/// Number of whole steps covering `lag` seconds.
pub fn lag_steps(lag: f64, dt: f64) -> u64 {
    (lag / dt - 1e-9).ceil().max(0.0) as u64
}

/// Carries maxQD samples from the forward path back to a sender.
///
/// Samples are emitted every step and become visible `lag` steps later.
/// Feedback is FIFO: a sample never arrives before one emitted earlier.
/// The sender holds the newest arrived value until the next one lands.
#[derive(Debug, Clone, Default)]
pub struct FeedbackChannel {
    in_flight: VecDeque<(u64, f64)>,
    last_arrival: u64,
    current: Option<f64>,
}

impl FeedbackChannel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn emit(&mut self, step: u64, lag_steps: u64, value: f64) {
        let arrival = (step + lag_steps).max(self.last_arrival);
        self.last_arrival = arrival;
        self.in_flight.push_back((arrival, value));
    }

    /// Signal visible to the sender at `step`; zero until the first
    /// sample has arrived.
    pub fn signal_at(&mut self, step: u64) -> f64 {
        while let Some(&(arrival, value)) = self.in_flight.front() {
            if arrival > step {
                break;
            }
            self.current = Some(value);
            self.in_flight.pop_front();
        }
        self.current.unwrap_or(0.0)
    }

    pub fn has_signal(&self) -> bool {
        self.current.is_some()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}
