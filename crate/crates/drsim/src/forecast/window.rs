//! Sliding-window supervised dataset construction and chronological splits.

use super::ForecastError;

/// Supervised samples built from a series: `x[i]` holds `lookback`
/// consecutive values starting at slot `i`, `y[i]` the following
/// `horizon` values.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub lookback: usize,
    pub horizon: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl WindowDataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Scalar target of sample `i`; only defined for horizon 1.
    pub fn target(&self, i: usize) -> f64 {
        debug_assert_eq!(self.horizon, 1);
        self.y[i][0]
    }
}

/// Slides a `(lookback, horizon)` window over the series. A series of
/// length `n` yields `n - lookback - horizon + 1` samples.
pub fn make_windows(
    values: &[f64],
    lookback: usize,
    horizon: usize,
) -> Result<WindowDataset, ForecastError> {
    assert!(lookback >= 1, "lookback must be >= 1");
    assert!(horizon >= 1, "horizon must be >= 1");
    let needed = lookback + horizon;
    if values.len() < needed {
        return Err(ForecastError::InsufficientData {
            needed,
            got: values.len(),
        });
    }
    let count = values.len() - needed + 1;
    let mut x = Vec::with_capacity(count);
    let mut y = Vec::with_capacity(count);
    for i in 0..count {
        x.push(values[i..i + lookback].to_vec());
        y.push(values[i + lookback..i + lookback + horizon].to_vec());
    }
    Ok(WindowDataset {
        lookback,
        horizon,
        x,
        y,
    })
}

/// Splits samples chronologically: the last `floor(n * test_ratio)`
/// samples become the test set, the prefix stays for training. No
/// shuffling takes place.
pub fn chrono_split(
    dataset: &WindowDataset,
    test_ratio: f64,
) -> Result<(WindowDataset, WindowDataset), ForecastError> {
    let n = dataset.len();
    let test = ((n as f64) * test_ratio).floor() as usize;
    if test == 0 || test >= n {
        return Err(ForecastError::EmptySplit { samples: n, test });
    }
    let cut = n - test;
    let part = |range: std::ops::Range<usize>| WindowDataset {
        lookback: dataset.lookback,
        horizon: dataset.horizon,
        x: dataset.x[range.clone()].to_vec(),
        y: dataset.y[range].to_vec(),
    };
    Ok((part(0..cut), part(cut..n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn windows_enumerate_consecutive_slices() {
        let ds = make_windows(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, 1).unwrap();
        assert_eq!(
            ds.x,
            vec![
                vec![1.0, 2.0, 3.0],
                vec![2.0, 3.0, 4.0],
                vec![3.0, 4.0, 5.0]
            ]
        );
        assert_eq!(ds.y, vec![vec![4.0], vec![5.0], vec![6.0]]);
    }

    #[test]
    fn too_short_series_is_rejected() {
        let err = make_windows(&[1.0, 2.0, 3.0], 3, 1).unwrap_err();
        assert!(matches!(
            err,
            ForecastError::InsufficientData { needed: 4, got: 3 }
        ));
    }

    #[test]
    fn sample_count_matches_formula() {
        let values: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(make_windows(&values, 3, 1).unwrap().len(), 7);
    }

    #[test]
    fn split_takes_final_samples_as_test() {
        let values: Vec<f64> = (0..13).map(f64::from).collect();
        let ds = make_windows(&values, 3, 1).unwrap(); // 10 samples
        let (train, test) = chrono_split(&ds, 0.2).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
        assert_eq!(test.x, ds.x[8..].to_vec());
        assert_eq!(test.y, ds.y[8..].to_vec());
    }

    #[test]
    fn split_floors_the_test_count() {
        let values: Vec<f64> = (0..8).map(f64::from).collect();
        let ds = make_windows(&values, 3, 1).unwrap(); // 5 samples
        let (train, test) = chrono_split(&ds, 0.2).unwrap();
        assert_eq!((train.len(), test.len()), (4, 1));
    }

    #[test]
    fn split_rejects_empty_test_side() {
        let values: Vec<f64> = (0..7).map(f64::from).collect();
        let ds = make_windows(&values, 3, 1).unwrap(); // 4 samples
        let err = chrono_split(&ds, 0.2).unwrap_err();
        assert!(matches!(
            err,
            ForecastError::EmptySplit { samples: 4, test: 0 }
        ));
    }

    proptest! {
        #[test]
        fn count_formula_holds(n in 2usize..300, lookback in 1usize..20, horizon in 1usize..5) {
            let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
            match make_windows(&values, lookback, horizon) {
                Ok(ds) => {
                    prop_assert!(n >= lookback + horizon);
                    prop_assert_eq!(ds.len(), n - lookback - horizon + 1);
                    // Each window is the consecutive slice it claims to be.
                    for (i, w) in ds.x.iter().enumerate() {
                        prop_assert_eq!(w[0] as usize, i);
                    }
                }
                Err(ForecastError::InsufficientData { .. }) => {
                    prop_assert!(n < lookback + horizon);
                }
                Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
            }
        }

        #[test]
        fn split_is_chronological(n in 6usize..200, ratio in 0.05f64..0.95) {
            let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let ds = make_windows(&values, 2, 1).unwrap();
            match chrono_split(&ds, ratio) {
                Ok((train, test)) => {
                    prop_assert_eq!(train.len() + test.len(), ds.len());
                    prop_assert_eq!(test.len(), ((ds.len() as f64) * ratio).floor() as usize);
                    // Test samples are exactly the final ones, in order.
                    prop_assert_eq!(&test.x[..], &ds.x[train.len()..]);
                }
                Err(ForecastError::EmptySplit { .. }) => {
                    let test = ((ds.len() as f64) * ratio).floor() as usize;
                    prop_assert!(test == 0 || test >= ds.len());
                }
                Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
            }
        }
    }
}
