use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::DEFAULT_MAX_SIZE;

/// Architecture hyperparameters of the SIRM network.
///
/// Defaults follow the reference settings: 16 filters per skim window,
/// windows 1 to 4, a near-neighbor half-window of 1, every other width 64
/// and an adversarial factor of 1e-6.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SirmConfig {
    /// Word embedding width.
    pub d_e: usize,
    /// Filters per skim window size.
    pub d_c: usize,
    /// Skim window sizes, strictly ascending.
    pub src_windows: Vec<usize>,
    /// Near-neighbor half-window; the neighbor convolution spans `2k+1`.
    pub k: usize,
    pub d_ns: usize,
    pub d_np: usize,
    pub d_as: usize,
    pub d_ap: usize,
    /// Gradient-reversal scale of the adversarial head.
    pub lambda: f64,
    /// Sentences per paragraph.
    pub m: usize,
    /// Words per sentence.
    pub n: usize,
    pub vocab_size: usize,
    /// Divide intensive-reading pools by the number of valid rows instead
    /// of the padded width.
    pub mask_aware_pooling: bool,
}

impl Default for SirmConfig {
    fn default() -> Self {
        SirmConfig {
            d_e: 64,
            d_c: 16,
            src_windows: vec![1, 2, 3, 4],
            k: 1,
            d_ns: 64,
            d_np: 64,
            d_as: 64,
            d_ap: 64,
            lambda: 1e-6,
            m: 8,
            n: 32,
            vocab_size: DEFAULT_MAX_SIZE,
            mask_aware_pooling: false,
        }
    }
}

impl SirmConfig {
    /// Width of the skim vector `g`.
    pub fn g_width(&self) -> usize {
        self.src_windows.len() * self.d_c
    }

    pub fn neighbor_window(&self) -> usize {
        2 * self.k + 1
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_e", self.d_e),
            ("d_c", self.d_c),
            ("d_ns", self.d_ns),
            ("d_np", self.d_np),
            ("d_as", self.d_as),
            ("d_ap", self.d_ap),
            ("m", self.m),
            ("n", self.n),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be >= 1")));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be >= 2".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.src_windows.is_empty() || self.src_windows.contains(&0) {
            return Err(Error::Config(
                "src_windows must be non-empty and >= 1".into(),
            ));
        }
        if self.src_windows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "src_windows must be strictly ascending".into(),
            ));
        }
        let longest = *self.src_windows.last().expect("non-empty");
        if longest > self.m * self.n {
            return Err(Error::Config(format!(
                "largest skim window {longest} exceeds m*n = {}",
                self.m * self.n
            )));
        }
        for (name, d) in [("d_e", self.d_e), ("d_as", self.d_as)] {
            if d % 2 != 0 {
                return Err(Error::Config(format!(
                    "{name} = {d} must be even for sinusoidal position encoding"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = SirmConfig::default();
        c.validate().unwrap();
        assert_eq!(c.g_width(), 64);
        assert_eq!(c.neighbor_window(), 3);
    }

    #[test]
    fn rejects_bad_configs() {
        let odd = SirmConfig {
            d_e: 63,
            ..SirmConfig::default()
        };
        assert!(odd.validate().unwrap_err().to_string().contains("even"));
        let neg = SirmConfig {
            lambda: -1.0,
            ..SirmConfig::default()
        };
        assert!(neg.validate().is_err());
        let unsorted = SirmConfig {
            src_windows: vec![2, 1],
            ..SirmConfig::default()
        };
        assert!(unsorted.validate().is_err());
        let long = SirmConfig {
            m: 1,
            n: 3,
            ..SirmConfig::default()
        };
        assert!(long.validate().is_err());
    }

    #[test]
    fn json_uses_field_names() {
        let c: SirmConfig = serde_json::from_str(r#"{"d_e": 8, "lambda": 0.0}"#).unwrap();
        assert_eq!(c.d_e, 8);
        assert_eq!(c.lambda, 0.0);
        assert_eq!(c.d_c, 16);
    }
}
