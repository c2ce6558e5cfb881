//! Plain CSV emission shared by paths, trajectories and experiment reports.

/// Formats with 17 significant digits so every `f64` round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
