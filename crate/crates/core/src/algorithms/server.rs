//! Server side of a round. Works on messages only; it has no access to
//! client data.

use super::ShiftStore;

/// What one client uploads in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub client: usize,
    pub payload: Vec<f64>,
    /// Shift slots the payload refers to (DIANA-RR); empty otherwise.
    pub slots: Vec<usize>,
}

/// How the server turns messages into an update direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    /// Direction is the mean payload.
    Plain,
    /// Adds the mean of the mirrored per-sample shifts, then learns them with `alpha`.
    PerSampleShifts { alpha: f64 },
    /// Adds the running mean shift `h̄`, then `h̄ += alpha · mean payload`.
    MeanShift { alpha: f64 },
}

/// `(1/M) Σ_m payload_m`, summed in ascending client order.
pub fn aggregate_mean(messages: &[Message], out: &mut [f64]) {
    debug_assert!(messages.windows(2).all(|w| w[0].client < w[1].client));
    out.iter_mut().for_each(|o| *o = 0.0);
    for msg in messages {
        for (o, p) in out.iter_mut().zip(&msg.payload) {
            *o += p;
        }
    }
    let m = messages.len() as f64;
    out.iter_mut().for_each(|o| *o /= m);
}

/// Applies `x ← x − lr · direction` under `rule` and updates the server's
/// shift copy.
pub fn apply(x: &mut [f64], server_shifts: &mut ShiftStore, messages: &[Message], lr: f64, rule: Rule) {
    let d = x.len();
    let mut dir = vec![0.0; d];
    aggregate_mean(messages, &mut dir);
    match rule {
        Rule::Plain => {}
        Rule::PerSampleShifts { alpha } => {
            let mut mean_h = vec![0.0; d];
            let mut h = vec![0.0; d];
            for msg in messages {
                server_shifts.batch_shift(msg.client, &msg.slots, &mut h);
                for (a, b) in mean_h.iter_mut().zip(&h) {
                    *a += b;
                }
            }
            let m = messages.len() as f64;
            for (g, hm) in dir.iter_mut().zip(&mean_h) {
                *g = hm / m + *g;
            }
            for msg in messages {
                server_shifts.absorb(msg.client, &msg.slots, alpha, &msg.payload);
            }
        }
        Rule::MeanShift { alpha } => {
            let mean_q = dir.clone();
            let mut h_bar = vec![0.0; d];
            server_shifts.batch_shift(0, &[], &mut h_bar);
            for (g, hb) in dir.iter_mut().zip(&h_bar) {
                *g = hb + *g;
            }
            server_shifts.absorb(0, &[], alpha, &mean_q);
        }
    }
    for (xi, g) in x.iter_mut().zip(&dir) {
        *xi -= lr * g;
    }
}

/// Model averaging: `x ← (1/M) Σ_m payload_m`.
pub fn average_models(x: &mut [f64], messages: &[Message]) {
    aggregate_mean(messages, x);
}
