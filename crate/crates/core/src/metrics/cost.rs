//! Search-cost arithmetic: amortization, effective training, speedups.

use super::MetricsError;

/// Number of job recurrences after which the search cost is repaid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amortization {
    Recurrences(f64),
    /// The switched run is no faster than BSP; the search never amortizes.
    Never,
}

/// Amortization of a search priced at `search_cost` multiples of one BSP
/// training, when each switched run costs `relative_cost` (< 1) of a BSP
/// run: search_cost / (1 - relative_cost).
pub fn amortization(search_cost: f64, relative_cost: f64) -> Result<Amortization, MetricsError> {
    if search_cost < 0.0 {
        return Err(MetricsError::InvalidInput("search_cost must be >= 0".into()));
    }
    if relative_cost < 0.0 {
        return Err(MetricsError::InvalidInput("relative_cost must be >= 0".into()));
    }
    if relative_cost >= 1.0 {
        return Ok(Amortization::Never);
    }
    Ok(Amortization::Recurrences(search_cost / (1.0 - relative_cost)))
}

/// Valid training sessions produced per unit of search cost, both in
/// multiples of one BSP training.
pub fn effective_training_ratio(
    sessions_produced: u64,
    search_cost: f64,
) -> Result<f64, MetricsError> {
    if !(search_cost > 0.0) {
        return Err(MetricsError::InvalidInput("search_cost must be > 0".into()));
    }
    Ok(sessions_produced as f64 / search_cost)
}

/// A single speedup ratio; the comparator may have diverged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Speedup {
    Ratio(f64),
    /// The comparator run diverged; no ratio exists.
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speedups {
    pub throughput: Speedup,
    pub tta: Speedup,
}

/// Completed-run view needed for speedup ratios.
#[derive(Debug, Clone, Copy)]
pub struct RunTimes {
    pub total_time_s: f64,
    pub tta_s: Option<f64>,
    pub diverged: bool,
}

/// Speedups of run `a` over comparator `b`: total-time ratio and TTA ratio.
/// A diverged comparator reports `Failed` instead of a ratio.
pub fn speedups(a: &RunTimes, b: &RunTimes) -> Speedups {
    if a.diverged || b.diverged {
        return Speedups { throughput: Speedup::Failed, tta: Speedup::Failed };
    }
    let throughput = Speedup::Ratio(b.total_time_s / a.total_time_s);
    let tta = match (a.tta_s, b.tta_s) {
        (Some(ta), Some(tb)) => Speedup::Ratio(tb / ta),
        _ => Speedup::Failed,
    };
    Speedups { throughput, tta }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amortization_matches_recorded_search_costs() {
        // 12.71 BSP-equivalents of search at 19.5% relative cost amortizes
        // over 15.79 recurrences; 4.63 over 5.75.
        match amortization(12.71, 0.195).unwrap() {
            Amortization::Recurrences(r) => assert!((r - 15.79).abs() < 0.01, "got {r}"),
            Amortization::Never => panic!("should amortize"),
        }
        match amortization(4.63, 0.195).unwrap() {
            Amortization::Recurrences(r) => assert!((r - 5.75).abs() < 0.01, "got {r}"),
            Amortization::Never => panic!("should amortize"),
        }
        match amortization(1.0, 0.5).unwrap() {
            Amortization::Recurrences(r) => assert_eq!(r, 2.0),
            Amortization::Never => panic!("should amortize"),
        }
    }

    #[test]
    fn relative_cost_at_or_above_one_never_amortizes() {
        assert_eq!(amortization(3.0, 1.0).unwrap(), Amortization::Never);
        assert_eq!(amortization(3.0, 1.5).unwrap(), Amortization::Never);
    }

    #[test]
    fn amortization_increases_in_both_arguments() {
        let r = |c, rc| match amortization(c, rc).unwrap() {
            Amortization::Recurrences(r) => r,
            Amortization::Never => f64::INFINITY,
        };
        assert!(r(2.0, 0.2) > r(1.0, 0.2));
        assert!(r(1.0, 0.4) > r(1.0, 0.2));
    }

    #[test]
    fn effective_training_matches_recorded_ratios() {
        // 25 sessions at cost 12.71 -> 1.97X; 20 sessions at 7.71 -> 2.59X.
        assert!((effective_training_ratio(25, 12.71).unwrap() - 1.97).abs() < 0.01);
        assert!((effective_training_ratio(20, 7.71).unwrap() - 2.59).abs() < 0.01);
        assert_eq!(effective_training_ratio(1, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn speedup_ratios() {
        let a = RunTimes { total_time_s: 100.0, tta_s: Some(50.0), diverged: false };
        let same = speedups(&a, &a);
        assert_eq!(same.throughput, Speedup::Ratio(1.0));
        assert_eq!(same.tta, Speedup::Ratio(1.0));

        let b = RunTimes { total_time_s: 400.0, tta_s: Some(200.0), diverged: false };
        let su = speedups(&a, &b);
        assert_eq!(su.throughput, Speedup::Ratio(4.0));
        assert_eq!(su.tta, Speedup::Ratio(4.0));

        let failed = RunTimes { total_time_s: 10.0, tta_s: None, diverged: true };
        let su = speedups(&a, &failed);
        assert_eq!(su.throughput, Speedup::Failed);
        assert_eq!(su.tta, Speedup::Failed);
    }
}
