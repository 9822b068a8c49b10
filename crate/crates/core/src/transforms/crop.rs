use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{validate_event_set, Event, EventSet};
use crate::error::{Error, Result};

/// How the crop window is chosen before any narration limit applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WindowPolicy {
    /// The whole video.
    Full,
    /// A caller-chosen window, clamped to the video.
    Fixed { start: f64, end: f64 },
    /// Uniform length in `[min_fraction * T, T]`, then a uniform start.
    Random { min_fraction: f64 },
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy::Random { min_fraction: 0.1 }
    }
}

fn overlap(e: &Event, a: f64, b: f64) -> f64 {
    e.end.min(b) - e.start.max(a)
}

fn pick_window(duration: f64, policy: WindowPolicy, seed: u64) -> Result<(f64, f64)> {
    match policy {
        WindowPolicy::Full => Ok((0.0, duration)),
        WindowPolicy::Fixed { start, end } => {
            let (a, b) = (start.clamp(0.0, duration), end.clamp(0.0, duration));
            if b > a {
                Ok((a, b))
            } else {
                Err(Error::invalid(format!("crop window [{start}, {end}] is empty")))
            }
        }
        WindowPolicy::Random { min_fraction } => {
            if !(min_fraction > 0.0 && min_fraction <= 1.0) {
                return Err(Error::Config(format!(
                    "minimum crop fraction {min_fraction} outside (0, 1]"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let min_len = min_fraction * duration;
            let len = if duration > min_len {
                rng.gen_range(min_len..=duration)
            } else {
                duration
            };
            let slack = duration - len;
            let a = if slack > 0.0 {
                rng.gen_range(0.0..=slack)
            } else {
                0.0
            };
            Ok((a, (a + len).min(duration)))
        }
    }
}

/// Shrinks `[a, b]` until it overlaps at most `limit` events. The start moves
/// forward past event ends only when every window beginning at the current
/// start would already overlap too many.
fn limit_narrations(events: &[Event], a: f64, b: f64, limit: usize) -> Option<(f64, f64)> {
    let mut starts = vec![a];
    starts.extend(events.iter().map(|e| e.end).filter(|&t| t > a && t < b));
    starts.sort_by(f64::total_cmp);
    starts.dedup();
    for a in starts {
        let inside: Vec<&Event> = events.iter().filter(|e| overlap(e, a, b) > 0.0).collect();
        if inside.len() <= limit {
            return Some((a, b));
        }
        // events are in start order, so everything before `cut` starts earlier
        let cut = inside[limit].start;
        if cut > a {
            return Some((a, cut));
        }
    }
    None
}

/// Crops a video to a sub-window and re-anchors its events at the window
/// start. Events with positive overlap are kept and clipped; the new
/// duration is the window length.
pub fn temporal_crop(
    es: &EventSet,
    policy: WindowPolicy,
    seed: u64,
    max_narrations: Option<usize>,
) -> Result<EventSet> {
    if let Some(v) = validate_event_set(es).first() {
        return Err(Error::invalid(format!("cannot crop invalid event set: {v}")));
    }
    let (mut a, mut b) = pick_window(es.duration, policy, seed)?;
    if let Some(limit) = max_narrations {
        (a, b) = limit_narrations(&es.events, a, b, limit).ok_or_else(|| {
            Error::invalid(format!(
                "no window inside [{a}, {b}] overlaps at most {limit} events"
            ))
        })?;
    }
    let events = es
        .events
        .iter()
        .filter(|e| overlap(e, a, b) > 0.0)
        .map(|e| Event::new(e.start.max(a) - a, e.end.min(b) - a, e.caption.clone()))
        .collect();
    let mut out = EventSet {
        duration: b - a,
        events,
    };
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Ingest;
    use proptest::prelude::*;

    fn set(duration: f64, spans: &[(f64, f64)]) -> EventSet {
        let events = spans
            .iter()
            .enumerate()
            .map(|(i, &(s, e))| Event::new(s, e, format!("e{i}")))
            .collect();
        EventSet::from_events(duration, events, Ingest::Strict).unwrap()
    }

    #[test]
    fn full_window_is_identity() {
        let es = set(10.0, &[(0.0, 5.0), (6.0, 9.0)]);
        assert_eq!(temporal_crop(&es, WindowPolicy::Full, 0, None).unwrap(), es);
    }

    #[test]
    fn fixed_window_clips_and_reanchors() {
        let es = set(10.0, &[(0.0, 5.0), (6.0, 9.0)]);
        let w = WindowPolicy::Fixed {
            start: 5.5,
            end: 10.0,
        };
        let out = temporal_crop(&es, w, 0, None).unwrap();
        assert_eq!(out.duration, 4.5);
        assert_eq!(out.events, vec![Event::new(0.5, 3.5, "e1")]);
    }

    #[test]
    fn partial_overlap_is_clipped() {
        let es = set(10.0, &[(2.0, 8.0)]);
        let w = WindowPolicy::Fixed { start: 5.0, end: 9.0 };
        let out = temporal_crop(&es, w, 0, None).unwrap();
        assert_eq!(out.events, vec![Event::new(0.0, 3.0, "e0")]);
    }

    #[test]
    fn narration_limit() {
        let es = set(10.0, &[(0.0, 3.0), (3.5, 6.0), (7.0, 9.5)]);
        let out = temporal_crop(&es, WindowPolicy::Full, 0, Some(1)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.duration, 3.5);
        for seed in 0..50 {
            let out = temporal_crop(&es, WindowPolicy::default(), seed, Some(1)).unwrap();
            assert!(out.len() <= 1);
        }
    }

    #[test]
    fn narration_limit_moves_start_past_straddling_events() {
        // both long events straddle t=0, so the window must start after one ends
        let es = set(10.0, &[(0.0, 4.0), (0.0, 6.0), (7.0, 9.0)]);
        let out = temporal_crop(&es, WindowPolicy::Full, 0, Some(1)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.events[0].caption, "e1");
        assert_eq!(out.duration, 3.0);
    }

    #[test]
    fn unsatisfiable_limit_is_an_error() {
        let es = set(10.0, &[(0.0, 10.0), (0.0, 10.0)]);
        assert!(temporal_crop(&es, WindowPolicy::Full, 0, Some(1)).is_err());
    }

    #[test]
    fn random_window_is_seeded() {
        let es = set(100.0, &[(0.0, 30.0), (20.0, 60.0), (70.0, 90.0)]);
        let a = temporal_crop(&es, WindowPolicy::default(), 9, None).unwrap();
        let b = temporal_crop(&es, WindowPolicy::default(), 9, None).unwrap();
        assert_eq!(a, b);
        assert!(a.duration >= 10.0 - 1e-9);
    }

    proptest! {
        #[test]
        fn crops_are_valid_and_come_from_overlapping_events(
            spans in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..10),
            seed in any::<u64>(),
            limit in prop::option::of(1usize..4),
        ) {
            let d = 50.0;
            let raw: Vec<(f64, f64)> = spans.iter().map(|&(x, y)| (x.min(y) * d, x.max(y) * d)).collect();
            let es = set(d, &raw);
            let Ok(out) = temporal_crop(&es, WindowPolicy::default(), seed, limit) else {
                return Ok(());
            };
            prop_assert!(validate_event_set(&out).is_empty());
            prop_assert!(out.duration > 0.0 && out.duration <= d);
            if let Some(k) = limit {
                prop_assert!(out.len() <= k);
            }
            for e in &out.events {
                prop_assert!(e.end > e.start);
                let src = es.events.iter().find(|s| s.caption == e.caption).unwrap();
                prop_assert!(src.end > src.start);
            }
        }
    }
}
