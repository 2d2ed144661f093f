use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)] // inherent on f64 only in recent `core`
use num_traits::Float;

use crate::Error;

/// Analysis/synthesis window.
///
/// The same window is applied before the forward transform and after the
/// inverse one, so perfect reconstruction needs the *squared* window to
/// overlap-add to a constant at the chosen hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// Square root of the periodic Hann window. Its square is the Hann
    /// window, which overlap-adds to exactly 1 at 50% overlap.
    #[default]
    SqrtHann,
    /// Periodic Hann window. Its square overlap-adds to a constant at hop
    /// `fft_size / 4` or smaller divisors.
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        (0..len)
            .map(|n| {
                let hann = 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos();
                match self {
                    Window::SqrtHann => hann.sqrt(),
                    Window::Hann => hann,
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::SqrtHann => "sqrt-hann",
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sqrt-hann" => Ok(Window::SqrtHann),
            "hann" => Ok(Window::Hann),
            "rectangular" | "rect" => Ok(Window::Rectangular),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown window {other:?}"
            ))),
        }
    }
}

/// Sum of squared windows shifted by multiples of `hop`, one value per
/// phase `0..hop`. Constant output means the squared window is COLA.
pub(crate) fn squared_overlap_sums(window: &[f64], hop: usize) -> Vec<f64> {
    (0..hop)
        .map(|phase| window.iter().skip(phase).step_by(hop).map(|w| w * w).sum())
        .collect()
}
