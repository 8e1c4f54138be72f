use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Angular frequency of feature pair `i` for width `d`: `1 / 10000^(2i/d)`.
pub fn pair_frequency(i: usize, d: usize) -> f64 {
    1.0 / 10000f64.powf(2.0 * i as f64 / d as f64)
}

/// Sinusoidal position table `[length×d]` with 0-based positions:
/// `out[pos, 2i] = sin(pos·ω_i)`, `out[pos, 2i+1] = cos(pos·ω_i)`.
pub fn positional_encoding<T: Real>(length: usize, d: usize) -> Result<Tensor<T>> {
    if !d.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "position encoding width must be even, got {d}"
        )));
    }
    if length == 0 {
        return Err(Error::Config(
            "position encoding length must be >= 1".into(),
        ));
    }
    let mut data = Vec::with_capacity(length * d);
    for pos in 0..length {
        for i in 0..d / 2 {
            let angle = pos as f64 * pair_frequency(i, d);
            data.push(T::of(angle.sin()));
            data.push(T::of(angle.cos()));
        }
    }
    Tensor::new(vec![length, d], data)
}
