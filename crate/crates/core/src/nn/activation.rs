//! Pointwise nonlinearities.

/// Scale of the "standard sigmoid": `1.7159 * tanh(2x/3)`.
pub const STDSIG_SCALE: f64 = 1.7159;
/// Inner slope of the standard sigmoid.
pub const STDSIG_SLOPE: f64 = 2.0 / 3.0;

/// The nonlinearity applied by every activation layer of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    /// Hyperbolic tangent.
    Tanh,
    /// Scaled tanh `1.7159 * tanh(2x/3)`.
    StdSig,
    /// Absolute value.
    Abs,
    /// Half-wave rectifier `max(0, x)`.
    Relu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::Tanh,
        ActivationKind::StdSig,
        ActivationKind::Abs,
        ActivationKind::Relu,
    ];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Tanh => libm::tanh(x),
            ActivationKind::StdSig => STDSIG_SCALE * libm::tanh(STDSIG_SLOPE * x),
            ActivationKind::Abs => {
                if x < 0.0 {
                    -x
                } else {
                    x
                }
            }
            ActivationKind::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    /// Pointwise derivative at pre-activation `x`.
    ///
    /// At the non-differentiable points the convention is `abs'(0) = 0` and
    /// `relu'(0) = 0`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Tanh => {
                let t = libm::tanh(x);
                1.0 - t * t
            }
            ActivationKind::StdSig => {
                let t = libm::tanh(STDSIG_SLOPE * x);
                STDSIG_SCALE * STDSIG_SLOPE * (1.0 - t * t)
            }
            ActivationKind::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative computed from the pre-activation `x` and the already
    /// computed output `y = apply(x)`. Avoids re-evaluating tanh on the
    /// backward pass; saturating kinds use `y`, kinked kinds use the sign
    /// of `x`.
    pub(crate) fn derivative_from_io(self, x: f64, y: f64) -> f64 {
        match self {
            ActivationKind::Tanh => 1.0 - y * y,
            ActivationKind::StdSig => {
                let t = y / STDSIG_SCALE;
                STDSIG_SCALE * STDSIG_SLOPE * (1.0 - t * t)
            }
            ActivationKind::Abs | ActivationKind::Relu => self.derivative(x),
        }
    }

    /// True for kinds with a kink (non-differentiable point) at zero.
    pub fn has_kink(self) -> bool {
        matches!(self, ActivationKind::Abs | ActivationKind::Relu)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::StdSig => "stdsig",
            ActivationKind::Abs => "abs",
            ActivationKind::Relu => "relu",
        }
    }

    /// Inverse of [`name`](Self::name); `None` for unknown spellings.
    pub fn from_name(name: &str) -> Option<ActivationKind> {
        match name {
            "tanh" => Some(ActivationKind::Tanh),
            "stdsig" => Some(ActivationKind::StdSig),
            "abs" => Some(ActivationKind::Abs),
            "relu" => Some(ActivationKind::Relu),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_kinds_are_zero_at_zero() {
        for kind in ActivationKind::ALL {
            assert_eq!(kind.apply(0.0), 0.0, "{}", kind.name());
        }
    }

    #[test]
    fn relu_matches_max_definition() {
        assert_eq!(ActivationKind::Relu.apply(-3.0), 0.0);
        assert_eq!(ActivationKind::Relu.apply(2.0), 2.0);
    }

    #[test]
    fn kink_derivatives_are_zero_by_convention() {
        assert_eq!(ActivationKind::Abs.derivative(0.0), 0.0);
        assert_eq!(ActivationKind::Relu.derivative(0.0), 0.0);
        assert_eq!(ActivationKind::Abs.derivative(-2.0), -1.0);
        assert_eq!(ActivationKind::Abs.derivative(2.0), 1.0);
    }

    #[test]
    fn stdsig_gradient_matches_finite_differences() {
        // Central differences at a spread of points; rel. error < 1e-7.
        let h = 1e-6;
        for &x in &[-3.0, -1.2, -0.4, 0.0, 0.3, 0.9, 2.5] {
            let fd = (ActivationKind::StdSig.apply(x + h) - ActivationKind::StdSig.apply(x - h))
                / (2.0 * h);
            let an = ActivationKind::StdSig.derivative(x);
            let denom = an.abs().max(fd.abs()).max(1e-12);
            assert!(
                ((an - fd) / denom).abs() < 1e-7,
                "x={x}: analytic {an} vs fd {fd}"
            );
        }
    }

    #[test]
    fn tanh_gradient_matches_finite_differences() {
        let h = 1e-6;
        for &x in &[-2.0, -0.5, 0.1, 1.7] {
            let fd =
                (ActivationKind::Tanh.apply(x + h) - ActivationKind::Tanh.apply(x - h)) / (2.0 * h);
            let an = ActivationKind::Tanh.derivative(x);
            assert!(((an - fd) / an.abs().max(1e-12)).abs() < 1e-7);
        }
    }

    #[test]
    fn io_derivative_agrees_with_direct_form() {
        for kind in ActivationKind::ALL {
            for &x in &[-1.3, -0.2, 0.0, 0.4, 2.1] {
                let y = kind.apply(x);
                let direct = kind.derivative(x);
                let via_io = kind.derivative_from_io(x, y);
                assert!(
                    (direct - via_io).abs() < 1e-14,
                    "{} at {x}: {direct} vs {via_io}",
                    kind.name()
                );
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for kind in ActivationKind::ALL {
            assert_eq!(ActivationKind::from_name(kind.name()), Some(kind));
        }
        assert_eq!(ActivationKind::from_name("sigmoid"), None);
    }
}
