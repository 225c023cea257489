//! Learning-rate schedule remapping across the BSP/ASP split.
//!
//! BSP counts steps in global batches of B*N samples while ASP counts local
//! batches of B, so a fixed step schedule would decay at a different amount
//! of processed workload depending on the switch fraction. The remap keeps
//! decay at the same workload position: boundaries inside the BSP phase land
//! at W_i / (B*N); boundaries after the switch land at
//! W_i/B - W*s/B + W*s/(B*N), both in total-step coordinates.

use serde::{Deserialize, Serialize};

use super::PolicyError;

/// Step-coordinate view of a remapped schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemappedSchedule {
    pub bsp_steps: u64,
    pub asp_steps: u64,
    pub boundaries: Vec<u64>,
}

impl RemappedSchedule {
    pub fn total_steps(&self) -> u64 {
        self.bsp_steps + self.asp_steps
    }
}

/// Remaps decay boundaries given the total workload `w` (in samples), the
/// boundary positions (in samples), the local batch size, the cluster size,
/// and the BSP workload share. All divisions must be exact.
pub fn remap_lr_schedule(
    w: u64,
    boundaries: &[u64],
    batch: u64,
    n: u32,
    s_bsp: f64,
) -> Result<RemappedSchedule, PolicyError> {
    if batch == 0 || n == 0 {
        return Err(PolicyError::InvalidConfig("batch and cluster size must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&s_bsp) {
        return Err(PolicyError::InvalidConfig(format!("s_bsp {s_bsp} outside [0, 1]")));
    }
    let bsp_samples = exact_share(w, s_bsp)?;
    let global = batch * n as u64;
    if bsp_samples % global != 0 {
        return Err(PolicyError::Workload(format!(
            "BSP share {bsp_samples} samples is not a whole number of global batches ({global})"
        )));
    }
    if w % batch != 0 {
        return Err(PolicyError::Workload(format!(
            "workload {w} is not a whole number of local batches ({batch})"
        )));
    }

    let bsp_steps = bsp_samples / global;
    let asp_steps = w / batch - bsp_samples / batch;

    let remapped = boundaries
        .iter()
        .map(|&wi| {
            if wi % batch != 0 {
                return Err(PolicyError::Workload(format!(
                    "boundary {wi} is not a whole number of local batches ({batch})"
                )));
            }
            if wi <= bsp_samples {
                if wi % global != 0 {
                    return Err(PolicyError::Workload(format!(
                        "boundary {wi} falls in the BSP phase but is not a whole number of \
                         global batches ({global})"
                    )));
                }
                Ok(wi / global)
            } else {
                Ok(wi / batch - bsp_samples / batch + bsp_steps)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(RemappedSchedule { bsp_steps, asp_steps, boundaries: remapped })
}

/// `w * share` as an exact sample count; rejects shares that do not land on
/// a whole sample.
fn exact_share(w: u64, share: f64) -> Result<u64, PolicyError> {
    let raw = w as f64 * share;
    let rounded = raw.round();
    if (raw - rounded).abs() > 1e-6 * raw.abs().max(1.0) {
        return Err(PolicyError::Workload(format!(
            "share {share} of workload {w} is not a whole number of samples"
        )));
    }
    Ok(rounded as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: u64 = 128;
    const N: u32 = 8;
    const W: u64 = 64_000 * 128;
    const BOUNDS: [u64; 2] = [32_000 * 128, 48_000 * 128];

    /// Every row of the schedule-scaling table: BSP split percentage to
    /// (bsp_steps, asp_steps, [boundary1, boundary2]).
    const TABLE: [(f64, u64, u64, [u64; 2]); 11] = [
        (0.00, 0, 64_000, [32_000, 48_000]),
        (0.02, 160, 62_720, [30_880, 46_880]),
        (0.04, 320, 61_440, [29_760, 45_760]),
        (0.05, 400, 60_800, [29_200, 45_200]),
        (0.10, 800, 57_600, [26_400, 42_400]),
        (0.15, 1_200, 54_400, [23_600, 39_600]),
        (0.20, 1_600, 51_200, [20_800, 36_800]),
        (0.25, 2_000, 48_000, [18_000, 34_000]),
        (0.50, 4_000, 32_000, [4_000, 20_000]),
        (0.75, 6_000, 16_000, [4_000, 6_000]),
        (1.00, 8_000, 0, [4_000, 6_000]),
    ];

    #[test]
    fn reproduces_every_schedule_table_row() {
        for (s, bsp, asp, bounds) in TABLE {
            let r = remap_lr_schedule(W, &BOUNDS, B, N, s).unwrap();
            assert_eq!(r.bsp_steps, bsp, "bsp_steps at s={s}");
            assert_eq!(r.asp_steps, asp, "asp_steps at s={s}");
            assert_eq!(r.boundaries, bounds.to_vec(), "boundaries at s={s}");
            assert_eq!(r.total_steps(), bsp + asp);
        }
    }

    #[test]
    fn conserves_workload() {
        for (s, ..) in TABLE {
            let r = remap_lr_schedule(W, &BOUNDS, B, N, s).unwrap();
            assert_eq!(
                r.bsp_steps * B * N as u64 + r.asp_steps * B,
                W,
                "workload conservation at s={s}"
            );
        }
    }

    #[test]
    fn rejects_non_divisible_inputs() {
        // Share is not a whole number of samples.
        assert!(remap_lr_schedule(W, &BOUNDS, B, N, 0.0003).is_err());
        // Share is whole (512 samples) but not a whole global batch.
        assert!(remap_lr_schedule(W, &BOUNDS, B, N, 6.25e-5).is_err());
        // Workload not a multiple of the local batch.
        assert!(remap_lr_schedule(W + 1, &BOUNDS, B, N, 0.5).is_err());
        // Boundary not on a local batch.
        assert!(remap_lr_schedule(W, &[B + 1], B, N, 0.5).is_err());
    }

    #[test]
    fn boundary_exactly_at_switch_uses_bsp_branch() {
        // s = 0.5 puts the first boundary exactly at the switch point; the
        // table's 50-50 row shows it mapping through the BSP branch.
        let r = remap_lr_schedule(W, &BOUNDS, B, N, 0.5).unwrap();
        assert_eq!(r.boundaries[0], 4_000);
    }
}
