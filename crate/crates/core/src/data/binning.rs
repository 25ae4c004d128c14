use super::{BinnedWindow, Episode, Mask, Mat, Standardizer};
use crate::error::{Error, Result};

/// Window geometry shared by every window in a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    pub input_len: usize,
    pub horizon: usize,
    pub stride: usize,
    /// Largest admissible observation-window start, in hours.
    pub max_start: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { input_len: 24, horizon: 24, stride: 4, max_start: 96 }
    }
}

/// Window starts `0, stride, 2*stride, ...` not beyond `max_start` whose
/// observation and forecast hours fit inside the stay.
pub fn sliding_windows(ep: &Episode, spec: &WindowSpec) -> Vec<usize> {
    if spec.stride == 0 {
        return Vec::new();
    }
    let span = (spec.input_len + spec.horizon) as f64;
    (0..=spec.max_start)
        .step_by(spec.stride)
        .take_while(|&s| s as f64 + span <= ep.length_hours())
        .collect()
}

/// Bin one window of `ep` into hourly buckets, keeping the first observation
/// per hour and variable.
pub fn bin_episode(
    ep: &Episode,
    window_start: usize,
    input_len: usize,
    horizon: usize,
    std: &Standardizer,
) -> Result<BinnedWindow> {
    let n_vars = std.n_vars();
    let end = window_start + input_len + horizon;
    if input_len == 0 || horizon == 0 || n_vars == 0 {
        return Err(Error::Config("window lengths and variable count must be positive".into()));
    }
    if end as f64 > ep.length_hours() {
        return Err(Error::Config(format!(
            "window [{window_start}, {end}) exceeds episode {} length {}",
            ep.id,
            ep.length_hours()
        )));
    }

    let mut values = Mat::zeros(input_len, n_vars);
    let mut mask_in = Mask::zeros(input_len, n_vars);
    let mut target = Mat::zeros(horizon, n_vars);
    let mut mask_out = Mask::zeros(horizon, n_vars);

    let triplets = ep.triplets();
    let ws = window_start as f64;
    let first = triplets.partition_point(|tr| tr.t < ws);
    for tr in &triplets[first..] {
        let offset = tr.t - ws;
        if offset >= (input_len + horizon) as f64 {
            break;
        }
        if tr.var >= n_vars {
            return Err(Error::Config(format!(
                "episode {}: variable {} >= {n_vars}",
                ep.id, tr.var
            )));
        }
        let hour = offset.floor() as usize;
        let z = std.standardize(tr.var, tr.value);
        let (vals, mask, h) = if hour < input_len {
            (&mut values, &mut mask_in, hour)
        } else {
            (&mut target, &mut mask_out, hour - input_len)
        };
        // sorted by t, so the first hit is the earliest
        if !mask.get(h, tr.var) {
            mask.set(h, tr.var, true);
            vals.set(h, tr.var, z);
        }
    }

    Ok(BinnedWindow { episode_id: ep.id, window_start, values, mask_in, target, mask_out })
}

/// Every admissible window of every episode, skipping windows whose target
/// mask is empty.
pub fn build_windows<'a>(
    episodes: impl IntoIterator<Item = &'a Episode>,
    spec: &WindowSpec,
    std: &Standardizer,
) -> Result<Vec<BinnedWindow>> {
    let mut out = Vec::new();
    for ep in episodes {
        for start in sliding_windows(ep, spec) {
            let w = bin_episode(ep, start, spec.input_len, spec.horizon, std)?;
            if w.mask_out.count() > 0 {
                out.push(w);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Triplet;
    use proptest::prelude::*;

    fn ep(length: f64, trips: &[(f64, usize, f64)]) -> Episode {
        Episode::new(
            1,
            trips.iter().map(|&(t, var, value)| Triplet { t, var, value }).collect(),
            length,
        )
        .unwrap()
    }

    #[test]
    fn first_value_per_hour_wins() {
        let e = ep(48.0, &[(0.7, 0, 90.0), (0.2, 0, 80.0)]);
        let w = bin_episode(&e, 0, 24, 24, &Standardizer::identity(2)).unwrap();
        assert_eq!(w.values.get(0, 0), 80.0);
        assert!(w.mask_in.get(0, 0));
        // untouched variable: all-zero column and mask
        assert!((0..24).all(|h| w.values.get(h, 1) == 0.0 && !w.mask_in.get(h, 1)));
    }

    #[test]
    fn values_are_standardized() {
        let e = ep(48.0, &[(3.5, 0, 80.0), (30.0, 0, 60.0)]);
        let s = Standardizer { mean: vec![70.0], std: vec![10.0] };
        let w = bin_episode(&e, 0, 24, 24, &s).unwrap();
        assert_eq!(w.values.get(3, 0), 1.0);
        assert_eq!(w.target.get(6, 0), -1.0);
        assert!(w.mask_out.get(6, 0));
        assert_eq!(w.mask_out.count(), 1);
    }

    #[test]
    fn window_offset_shifts_buckets() {
        let e = ep(60.0, &[(4.0, 0, 1.0), (9.5, 0, 2.0), (51.2, 0, 3.0)]);
        let w = bin_episode(&e, 4, 24, 24, &Standardizer::identity(1)).unwrap();
        assert_eq!(w.values.get(0, 0), 1.0);
        assert_eq!(w.values.get(5, 0), 2.0);
        assert_eq!(w.target.get(0, 0), 0.0);
        assert_eq!(w.target.get(51 - 4 - 24, 0), 3.0);
    }

    #[test]
    fn window_past_end_is_rejected() {
        let e = ep(47.0, &[]);
        assert!(matches!(
            bin_episode(&e, 0, 24, 24, &Standardizer::identity(1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn unknown_variable_is_config_error() {
        let e = ep(48.0, &[(1.0, 5, 1.0)]);
        assert!(bin_episode(&e, 0, 24, 24, &Standardizer::identity(2)).is_err());
    }

    #[test]
    fn sliding_window_enumeration() {
        let spec = WindowSpec::default();
        let starts = sliding_windows(&ep(96.0, &[]), &spec);
        assert_eq!(starts, (0..=48).step_by(4).collect::<Vec<_>>());
        assert_eq!(starts.len(), 13);
        assert!(sliding_windows(&ep(47.0, &[]), &spec).is_empty());
        let long = sliding_windows(&ep(1000.0, &[]), &spec);
        assert_eq!(long.len(), 25);
        assert_eq!(*long.last().unwrap(), 96);
    }

    #[test]
    fn empty_target_windows_are_dropped() {
        // observations only in the first 24h: the start-0 window has a target
        // only if something lands in [24, 48)
        let e = ep(52.0, &[(1.0, 0, 1.0), (30.0, 0, 1.0)]);
        let ws = build_windows([&e], &WindowSpec::default(), &Standardizer::identity(1)).unwrap();
        // starts 0 and 4; both contain hour 30 in the target
        assert_eq!(ws.len(), 2);
        let e2 = ep(52.0, &[(1.0, 0, 1.0)]);
        let ws2 = build_windows([&e2], &WindowSpec::default(), &Standardizer::identity(1)).unwrap();
        assert!(ws2.is_empty());
    }

    #[test]
    fn densification_loss_counts_discards() {
        // full-stay binning: one window covering the whole 4h stay
        let e = ep(
            4.0,
            &[(0.1, 0, 1.0), (0.2, 0, 2.0), (0.9, 0, 3.0), (1.5, 1, 1.0), (3.1, 0, 1.0), (3.2, 1, 1.0)],
        );
        let w = bin_episode(&e, 0, 2, 2, &Standardizer::identity(2)).unwrap();
        let set_bits = w.mask_in.count() + w.mask_out.count();
        assert_eq!(e.triplets().len() - set_bits, 2);
    }

    proptest! {
        #[test]
        fn hour_aligned_binning_is_exact(vals in proptest::collection::vec(proptest::option::of(-5.0f64..5.0), 12)) {
            // 6 hours x 2 vars, one triplet per observed cell at the hour mark
            let mut trips = Vec::new();
            for (i, v) in vals.iter().enumerate() {
                if let Some(v) = v {
                    trips.push(Triplet { t: (i / 2) as f64, var: i % 2, value: *v });
                }
            }
            let e = Episode::new(9, trips, 6.0).unwrap();
            let w = bin_episode(&e, 0, 3, 3, &Standardizer::identity(2)).unwrap();
            for (i, v) in vals.iter().enumerate() {
                let (h, f) = (i / 2, i % 2);
                let (got, bit) = if h < 3 {
                    (w.values.get(h, f), w.mask_in.get(h, f))
                } else {
                    (w.target.get(h - 3, f), w.mask_out.get(h - 3, f))
                };
                prop_assert_eq!(got, v.unwrap_or(0.0));
                prop_assert_eq!(bit, v.is_some());
            }
        }

        #[test]
        fn mask_value_consistency(trips in proptest::collection::vec((0.0f64..48.0, 0usize..3, -10.0f64..10.0), 0..80)) {
            let e = Episode::new(2, trips.into_iter().map(|(t, var, value)| Triplet { t, var, value }).collect(), 48.0).unwrap();
            let w = bin_episode(&e, 0, 24, 24, &Standardizer::identity(3)).unwrap();
            for h in 0..24 {
                for f in 0..3 {
                    prop_assert!(w.values.get(h, f) == 0.0 || w.mask_in.get(h, f));
                    prop_assert!(w.target.get(h, f) == 0.0 || w.mask_out.get(h, f));
                }
            }
        }
    }
}
