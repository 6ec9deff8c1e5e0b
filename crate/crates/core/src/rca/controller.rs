//! Sliding-window bit allocation and route selection.

use crate::{Error, Result};

/// Default sliding-window length in frames.
pub const DEFAULT_WINDOW: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    /// Target rate in bits per pixel.
    pub r_tar: f64,
    /// Sliding-window length `SW` in frames.
    pub window: usize,
    pub n_coded: u64,
    /// Sum of the per-frame bpp of all coded frames.
    pub r_coded: f64,
}

impl ControllerState {
    pub fn new(r_tar: f64, window: usize) -> Result<Self> {
        if !(r_tar > 0.0) || !r_tar.is_finite() {
            return Err(Error::invalid(format!("target rate must be positive, got {r_tar}")));
        }
        if window == 0 {
            return Err(Error::invalid("sliding window must hold at least one frame"));
        }
        Ok(ControllerState {
            r_tar,
            window,
            n_coded: 0,
            r_coded: 0.0,
        })
    }

    /// `R_tar·N_coded − R_coded`: positive when under budget.
    pub fn balance(&self) -> f64 {
        self.r_tar * self.n_coded as f64 - self.r_coded
    }
}

/// Per-route bpp estimates `R_est^0 .. R_est^{K-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateEstimate(pub Vec<f64>);

impl RateEstimate {
    pub fn routes(&self) -> usize {
        self.0.len()
    }
}

/// Target for the next frame:
/// `T_tar = (R_tar·(N_coded + SW) − R_coded) / SW`. Not clamped.
pub fn allocate_bits(state: &ControllerState) -> f64 {
    let sw = state.window as f64;
    (state.r_tar * (state.n_coded as f64 + sw) - state.r_coded) / sw
}

/// Route choice for one P-frame.
///
/// Under budget (or exactly on it): the route minimizing `R_est − t_tar` among
/// estimates strictly above `t_tar`, else the top route. Over budget: the
/// route minimizing `t_tar − R_est` among estimates strictly below `t_tar`,
/// else route 0. Equal gaps resolve to the lower route index.
pub fn select_route(est: &RateEstimate, t_tar: f64, state: &ControllerState) -> usize {
    let k = est.routes();
    assert!(k > 0, "empty rate estimate");
    let surplus = state.r_tar * state.n_coded as f64 >= state.r_coded;
    let mut best: Option<(usize, f64)> = None;
    for (i, &r) in est.0.iter().enumerate() {
        let (qualifies, gap) = if surplus { (r > t_tar, r - t_tar) } else { (r < t_tar, t_tar - r) };
        if qualifies && best.is_none_or(|(_, g)| gap < g) {
            best = Some((i, gap));
        }
    }
    best.map_or(if surplus { k - 1 } else { 0 }, |(i, _)| i)
}

/// Record one coded frame. Intra frames are tallied like any other, so the
/// flag only documents the call site.
pub fn update_state(state: &mut ControllerState, actual_bpp: f64, _frame_was_i: bool) -> Result<()> {
    if !(actual_bpp >= 0.0) || !actual_bpp.is_finite() {
        return Err(Error::invalid(format!("coded rate must be a non-negative number, got {actual_bpp}")));
    }
    state.n_coded += 1;
    state.r_coded += actual_bpp;
    Ok(())
}
