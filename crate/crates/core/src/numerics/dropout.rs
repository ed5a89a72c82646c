use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NumericsError, Tensor};

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

/// Inverted-dropout mask: entries are `0` with probability `rate`, else `1 / (1 - rate)`.
/// In [`Mode::Infer`] the mask is all ones.
pub fn dropout_mask<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Tensor, NumericsError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NumericsError::InvalidRate(rate));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(Tensor::ones(rows, cols));
    }
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Tensor::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rate_zero_is_identity_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = dropout_mask(3, 4, 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(m, Tensor::ones(3, 4));
    }

    #[test]
    fn inference_ignores_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = dropout_mask(2, 2, 0.9, Mode::Infer, &mut rng).unwrap();
        assert_eq!(m, Tensor::ones(2, 2));
    }

    #[test]
    fn rate_one_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(dropout_mask(1, 1, 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn empirical_drop_fraction() {
        // binomial sd at n = 1e6, p = 0.7 is ~4.6e-4, so ±0.002 is > 4 sd
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let m = dropout_mask(1000, 1000, 0.7, Mode::Train, &mut rng).unwrap();
        let zeros = m.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((0.698..=0.702).contains(&zeros), "{zeros}");
        let kept = m.data().iter().find(|&&v| v != 0.0).unwrap();
        assert!((kept - 1.0 / 0.3).abs() < 1e-12);
    }
}
