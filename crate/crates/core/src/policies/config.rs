//! Per-protocol hyper-parameter configuration.
//!
//! Given the user's base set (local batch B, learning rate eta, momentum mu)
//! and a cluster of n workers: BSP trains with a global batch nB and the
//! linearly scaled rate n*eta; ASP returns to the local batch B and scales
//! the rate down, by default by 1/sqrt(n). Momentum keeps the same value for
//! both protocols by default; the alternative variants ramp or shrink it
//! after the switch.

use serde::{Deserialize, Serialize};

use super::Protocol;
use crate::kernel::Hyperparams;

/// How the ASP learning rate is derived from the base rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrScaling {
    /// eta / sqrt(n).
    #[default]
    SqrtDown,
    /// eta / n.
    LinearDown,
    /// eta unchanged.
    None,
}

/// Momentum handling after switching to ASP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumVariant {
    /// Same value for both protocols.
    #[default]
    Same,
    /// Momentum 0 after the switch.
    Zero,
    /// Momentum mu/n after the switch.
    OverN,
    /// Ramp from mu * 2^i / n over post-switch epochs i, capped at mu.
    RampPow2,
    /// Ramp from mu * i / n over post-switch epochs i, capped at mu.
    RampLinear,
}

/// Momentum value `i` whole epochs after the switch to ASP.
pub fn momentum_at(variant: MomentumVariant, base: f64, n: u32, epochs_after_switch: u64) -> f64 {
    let n = n as f64;
    match variant {
        MomentumVariant::Same => base,
        MomentumVariant::Zero => 0.0,
        MomentumVariant::OverN => base / n,
        MomentumVariant::RampPow2 => {
            let scale = 2f64.powi(epochs_after_switch.min(62) as i32) / n;
            (base * scale).min(base)
        }
        MomentumVariant::RampLinear => (base * epochs_after_switch as f64 / n).min(base),
    }
}

/// Derives the hyper-parameters a protocol phase trains with from the
/// user-provided base set. Pure in its inputs and the identity at n = 1.
pub fn config_policy(
    user: &Hyperparams,
    n: u32,
    protocol: Protocol,
    lr_scaling: LrScaling,
    momentum_variant: MomentumVariant,
) -> Hyperparams {
    let mut out = user.clone();
    match protocol {
        Protocol::Bsp => {
            out.batch_size = user.batch_size * n as u64;
            out.learning_rate = user.learning_rate * n as f64;
            // schedule base scales with the phase rate so lr_at() yields the
            // phase-effective learning rate directly
            out.lr_schedule.base_lr = user.lr_schedule.base_lr * n as f64;
        }
        Protocol::Asp => {
            let scale = match lr_scaling {
                LrScaling::SqrtDown => 1.0 / (n as f64).sqrt(),
                LrScaling::LinearDown => 1.0 / n as f64,
                LrScaling::None => 1.0,
            };
            out.batch_size = user.batch_size;
            out.learning_rate = user.learning_rate * scale;
            out.lr_schedule.base_lr = user.lr_schedule.base_lr * scale;
            out.momentum = momentum_at(momentum_variant, user.momentum, n, 0);
        }
    }
    out
}
