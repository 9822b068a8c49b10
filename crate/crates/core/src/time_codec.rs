//! Quantization of timestamps onto the time-token grid.
//!
//! Relative grids place `N` points at `k * T / (N - 1)`, so both `0` and `T`
//! are representable; times round half-up to the nearest point. Absolute
//! grids floor to whole seconds. Out-of-range times clamp in both modes.

use crate::domain::{TimeGrid, TimeMode};
use crate::error::{Error, Result};

fn check_duration(duration: f64) -> Result<()> {
    if duration.is_finite() && duration > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "duration must be positive and finite, got {duration}"
        )))
    }
}

/// Maps a timestamp in seconds to a grid index in `[0, N)`.
pub fn encode_time(t: f64, duration: f64, grid: TimeGrid) -> Result<u32> {
    check_duration(duration)?;
    if !t.is_finite() {
        return Err(Error::invalid(format!("timestamp must be finite, got {t}")));
    }
    let last = f64::from(grid.n - 1);
    let k = match grid.mode {
        TimeMode::Relative => {
            let t = t.clamp(0.0, duration);
            (t / duration * last + 0.5).floor()
        }
        TimeMode::Absolute => t.floor(),
    };
    Ok(k.clamp(0.0, last) as u32)
}

/// Maps a grid index back to seconds.
pub fn decode_time(k: u32, duration: f64, grid: TimeGrid) -> Result<f64> {
    check_duration(duration)?;
    if k >= grid.n {
        return Err(Error::invalid(format!(
            "grid index {k} out of range for {} time tokens",
            grid.n
        )));
    }
    Ok(match grid.mode {
        TimeMode::Relative => f64::from(k) * duration / f64::from(grid.n - 1),
        TimeMode::Absolute => f64::from(k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(n: u32) -> TimeGrid {
        TimeGrid::relative(n).unwrap()
    }

    #[test]
    fn relative_boundaries() {
        assert_eq!(encode_time(0.0, 320.0, rel(100)).unwrap(), 0);
        assert_eq!(encode_time(320.0, 320.0, rel(100)).unwrap(), 99);
        assert_eq!(encode_time(7.25, 7.25, rel(100)).unwrap(), 99);
    }

    #[test]
    fn relative_rounds_to_nearest() {
        // 37.2 / 120 * 99 = 30.69
        assert_eq!(encode_time(37.2, 120.0, rel(100)).unwrap(), 31);
        // exact half: 60 / 120 * 99 = 49.5 rounds up
        assert_eq!(encode_time(60.0, 120.0, rel(100)).unwrap(), 50);
    }

    #[test]
    fn absolute_floors_to_seconds() {
        let g = TimeGrid::absolute(500).unwrap();
        assert_eq!(encode_time(37.2, 120.0, g).unwrap(), 37);
        assert_eq!(encode_time(900.0, 1000.0, g).unwrap(), 499);
        assert_eq!(encode_time(-3.0, 10.0, g).unwrap(), 0);
    }

    #[test]
    fn out_of_range_times_clamp() {
        assert_eq!(encode_time(-5.0, 10.0, rel(11)).unwrap(), 0);
        assert_eq!(encode_time(15.0, 10.0, rel(11)).unwrap(), 10);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_time(99, 120.0, rel(100)).unwrap(), 120.0);
        assert_eq!(decode_time(0, 120.0, rel(100)).unwrap(), 0.0);
        let t = decode_time(31, 120.0, rel(100)).unwrap();
        assert!((t - 31.0 * 120.0 / 99.0).abs() < 1e-12);
        assert!((t - 37.575_757_575_757_58).abs() < 1e-9);
        assert_eq!(
            decode_time(42, 10.0, TimeGrid::absolute(100).unwrap()).unwrap(),
            42.0
        );
    }

    #[test]
    fn invalid_inputs() {
        assert!(encode_time(f64::NAN, 10.0, rel(10)).is_err());
        assert!(encode_time(1.0, 0.0, rel(10)).is_err());
        assert!(encode_time(1.0, -2.0, rel(10)).is_err());
        assert!(decode_time(10, 10.0, rel(10)).is_err());
        assert!(decode_time(0, f64::INFINITY, rel(10)).is_err());
    }

    fn any_grid() -> impl Strategy<Value = TimeGrid> {
        prop_oneof![
            (2u32..2000).prop_map(rel),
            (1u32..2000).prop_map(|n| TimeGrid::absolute(n).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn grid_points_are_fixed_points(grid in any_grid(), frac in 0.0f64..1.0, duration in 0.5f64..5000.0) {
            let k = ((frac * f64::from(grid.n)) as u32).min(grid.n - 1);
            let t = decode_time(k, duration, grid).unwrap();
            prop_assert_eq!(encode_time(t, duration, grid).unwrap(), k);
        }

        #[test]
        fn relative_error_is_half_a_step(n in 2u32..2000, frac in 0.0f64..=1.0, duration in 0.5f64..5000.0) {
            let g = rel(n);
            let t = frac * duration;
            let back = decode_time(encode_time(t, duration, g).unwrap(), duration, g).unwrap();
            let bound = duration / (2.0 * f64::from(n - 1));
            prop_assert!((back - t).abs() <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn encoding_is_monotone(grid in any_grid(), a in -10.0f64..700.0, b in -10.0f64..700.0, duration in 0.5f64..600.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(encode_time(lo, duration, grid).unwrap() <= encode_time(hi, duration, grid).unwrap());
        }
    }
}
