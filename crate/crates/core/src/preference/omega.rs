//! Comparison-probability maps `ω(a, b)`: the probability that the response
//! with reward `a` beats the one with reward `b`.

use crate::error::{domain, Error, Result};
use crate::scalar::{sigmoid, Real};

/// Functional form of `ω`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OmegaVariant<S> {
    /// `σ(η(a − b))`, the (generalized) Bradley–Terry model.
    Bt,
    /// `ηa / (ηa + ηb)` for positive rewards.
    Ratio,
    /// `½ + ½ tanh(a − b)`.
    Tanh,
    /// `½ + ½ sin(a − b)`.
    Sin,
    /// `𝕀(a − b)`, with value ½ on ties.
    Indicator,
    /// `max{0, 1 − η(a − b)}`, clamped to 1.
    Hinge,
    /// `σ(η(a − ref))`. `None` means the mean reward of the prompt row.
    KtoRef(Option<S>),
    /// `σ(η(a − b))²`.
    SquaredSigmoid,
    /// `exp(η(a − b))`, clamped to 1.
    Exponential,
}

/// An `ω` variant together with its scale `η`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OmegaModel<S> {
    pub variant: OmegaVariant<S>,
    pub eta: S,
}

/// A comparison probability. `clamped` is set when the raw formula left
/// `[0, 1]` and was clipped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison<S> {
    pub p: S,
    pub clamped: bool,
}

impl<S: Real> Default for OmegaModel<S> {
    fn default() -> Self {
        OmegaModel::bt()
    }
}

impl<S: Real> OmegaModel<S> {
    pub fn new(variant: OmegaVariant<S>, eta: S) -> Result<Self> {
        if !(eta > S::zero()) || !eta.is_finite() {
            return domain(format!("omega scale must be positive, got {eta}"));
        }
        Ok(OmegaModel { variant, eta })
    }

    /// Bradley–Terry with `η = 1`.
    pub fn bt() -> Self {
        OmegaModel {
            variant: OmegaVariant::Bt,
            eta: S::one(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            OmegaVariant::Bt => "bt",
            OmegaVariant::Ratio => "ratio",
            OmegaVariant::Tanh => "tanh",
            OmegaVariant::Sin => "sin",
            OmegaVariant::Indicator => "indicator",
            OmegaVariant::Hinge => "hinge",
            OmegaVariant::KtoRef(_) => "kto_ref",
            OmegaVariant::SquaredSigmoid => "squared_sigmoid",
            OmegaVariant::Exponential => "exponential",
        }
    }

    /// `ω(a, b) + ω(b, a) = 1` holds identically.
    pub fn is_symmetric(&self) -> bool {
        matches!(
            self.variant,
            OmegaVariant::Bt | OmegaVariant::Tanh | OmegaVariant::Sin | OmegaVariant::Indicator
        )
    }

    /// Symmetric and differentiable, so usable inside the preference losses.
    pub fn is_complementary(&self) -> bool {
        matches!(
            self.variant,
            OmegaVariant::Bt | OmegaVariant::Tanh | OmegaVariant::Sin
        )
    }

    pub fn is_bt_unit(&self) -> bool {
        self.variant == OmegaVariant::Bt && self.eta == S::one()
    }

    pub(crate) fn require_complementary(&self) -> Result<()> {
        if !self.is_complementary() {
            return domain(format!(
                "omega '{}' is not a differentiable complementary map",
                self.name()
            ));
        }
        Ok(())
    }

    /// `ω(a, b)` with an explicit KTO reference point.
    pub fn eval_with_ref(&self, a: S, b: S, kto_ref: S) -> Result<Comparison<S>> {
        let one = S::one();
        let half = S::lit(0.5);
        let eta = self.eta;
        let exact = |p: S| Ok(Comparison { p, clamped: false });
        match self.variant {
            OmegaVariant::Bt => exact(sigmoid(eta * (a - b))),
            OmegaVariant::Ratio => {
                if a <= S::zero() || b <= S::zero() {
                    return domain(format!("ratio omega needs positive rewards, got ({a}, {b})"));
                }
                exact(eta * a / (eta * a + eta * b))
            }
            OmegaVariant::Tanh => exact(half + half * (a - b).tanh()),
            OmegaVariant::Sin => exact(half + half * (a - b).sin()),
            OmegaVariant::Indicator => {
                let p = if a > b {
                    one
                } else if a < b {
                    S::zero()
                } else {
                    half
                };
                exact(p)
            }
            OmegaVariant::Hinge => Ok(clamp(S::zero().max(one - eta * (a - b)))),
            OmegaVariant::KtoRef(_) => exact(sigmoid(eta * (a - kto_ref))),
            OmegaVariant::SquaredSigmoid => {
                let s = sigmoid(eta * (a - b));
                exact(s * s)
            }
            OmegaVariant::Exponential => Ok(clamp((eta * (a - b)).exp())),
        }
    }

    /// `ω(a, b)`. A KTO model without a fixed reference point needs the
    /// prompt row; use [`OmegaModel::eval_in_row`].
    pub fn eval(&self, a: S, b: S) -> Result<Comparison<S>> {
        match self.variant {
            OmegaVariant::KtoRef(None) => Err(Error::Config(
                "kto_ref without a fixed reference needs the full reward row".into(),
            )),
            OmegaVariant::KtoRef(Some(r)) => self.eval_with_ref(a, b, r),
            _ => self.eval_with_ref(a, b, S::zero()),
        }
    }

    /// `ω(row[y1], row[y2])`, resolving an unset KTO reference to the row mean.
    pub fn eval_in_row(&self, row: &[S], y1: usize, y2: usize) -> Result<Comparison<S>> {
        let kto_ref = match self.variant {
            OmegaVariant::KtoRef(Some(r)) => r,
            OmegaVariant::KtoRef(None) => {
                row.iter().copied().sum::<S>() / S::lit(row.len() as f64)
            }
            _ => S::zero(),
        };
        self.eval_with_ref(row[y1], row[y2], kto_ref)
    }

    /// Probability as a function of the difference `Δ = a − b` for the
    /// complementary variants.
    pub(crate) fn phi(&self, delta: S) -> S {
        let half = S::lit(0.5);
        match self.variant {
            OmegaVariant::Tanh => sigmoid(S::lit(2.0) * delta),
            OmegaVariant::Sin => half + half * delta.sin(),
            _ => sigmoid(self.eta * delta),
        }
    }

    /// `ln φ(Δ)`, stable for the sigmoid forms.
    pub(crate) fn log_phi(&self, delta: S) -> S {
        match self.variant {
            OmegaVariant::Tanh => crate::scalar::log_sigmoid(S::lit(2.0) * delta),
            OmegaVariant::Sin => self.phi(delta).ln(),
            _ => crate::scalar::log_sigmoid(self.eta * delta),
        }
    }

    /// `d ln φ(Δ) / dΔ`.
    pub(crate) fn dlog_phi(&self, delta: S) -> S {
        match self.variant {
            OmegaVariant::Tanh => S::lit(2.0) * sigmoid(S::lit(-2.0) * delta),
            OmegaVariant::Sin => delta.cos() / (S::one() + delta.sin()),
            _ => self.eta * sigmoid(-self.eta * delta),
        }
    }

    /// Reward difference `r(x,y1) − r(x,y2)` that produces `p`.
    ///
    /// The KTO row needs both comparison probabilities; see
    /// [`OmegaModel::inverse_kto`].
    pub fn inverse(&self, p: S) -> Result<S> {
        let one = S::one();
        let eta = self.eta;
        let open = |p: S| {
            if p > S::zero() && p < one {
                Ok(())
            } else {
                domain(format!("probability {p} outside (0, 1)"))
            }
        };
        match self.variant {
            OmegaVariant::Bt => {
                open(p)?;
                Ok((p / (one - p)).ln() / eta)
            }
            OmegaVariant::Tanh => {
                open(p)?;
                Ok(S::lit(0.5) * (p / (one - p)).ln())
            }
            OmegaVariant::Sin => {
                if !(p >= S::zero() && p <= one) {
                    return domain(format!("probability {p} outside [0, 1]"));
                }
                Ok((S::lit(2.0) * p - one).asin())
            }
            OmegaVariant::Indicator => Ok(one),
            OmegaVariant::SquaredSigmoid => {
                open(p)?;
                let s = p.sqrt();
                Ok((s / (one - s)).ln() / eta)
            }
            OmegaVariant::Exponential => {
                if !(p > S::zero() && p <= one) {
                    return domain(format!("probability {p} outside (0, 1]"));
                }
                Ok(p.ln() / eta)
            }
            OmegaVariant::KtoRef(_) => Err(Error::Unsupported(
                "kto_ref inverse needs both p*(1) and p*(0)".into(),
            )),
            OmegaVariant::Ratio | OmegaVariant::Hinge => Err(Error::Unsupported(format!(
                "omega '{}' has no inverse",
                self.name()
            ))),
        }
    }

    /// KTO inverse from `p1 = p*(1|y1,y2,x)` and `p0 = p*(0|y1,y2,x)`.
    pub fn inverse_kto(&self, p1: S, p0: S) -> Result<S> {
        if !matches!(self.variant, OmegaVariant::KtoRef(_)) {
            return Err(Error::Unsupported(format!(
                "inverse_kto called on omega '{}'",
                self.name()
            )));
        }
        let one = S::one();
        for p in [p1, p0] {
            if !(p > S::zero() && p < one) {
                return domain(format!("probability {p} outside (0, 1)"));
            }
        }
        Ok((p1 * (one - p0) / (p0 * (one - p1))).ln() / self.eta)
    }
}

fn clamp<S: Real>(raw: S) -> Comparison<S> {
    let p = raw.max(S::zero()).min(S::one());
    Comparison {
        p,
        clamped: p != raw,
    }
}

/// `ω^{-1}(p)`. Free-function form of [`OmegaModel::inverse`].
pub fn omega_inverse<S: Real>(omega: &OmegaModel<S>, p: S) -> Result<S> {
    omega.inverse(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(v: OmegaVariant<f64>) -> OmegaModel<f64> {
        OmegaModel::<f64>::new(v, 1.0).unwrap()
    }

    #[test]
    fn bt_examples() {
        let bt = OmegaModel::<f64>::bt();
        assert_eq!(bt.eval(0.4, 0.4).unwrap().p, 0.5);
        assert!((bt.eval(3.0_f64.ln(), 0.0).unwrap().p - 0.75).abs() < 1e-15);
        assert_eq!(bt.inverse(0.5).unwrap(), 0.0);
        assert!((bt.inverse(0.75).unwrap() - 3.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn indicator_examples() {
        let ind = model(OmegaVariant::Indicator);
        assert_eq!(ind.eval(1.0, 0.2).unwrap().p, 1.0);
        assert_eq!(ind.eval(0.0, 0.2).unwrap().p, 0.0);
        assert_eq!(ind.eval(0.2, 0.2).unwrap().p, 0.5);
        assert_eq!(ind.inverse(0.3).unwrap(), 1.0);
    }

    #[test]
    fn sin_round_trip() {
        let sin = model(OmegaVariant::Sin);
        let p = 0.5 + 0.5 * 0.3_f64.sin();
        assert!((sin.inverse(p).unwrap() - 0.3).abs() < 1e-10);
    }

    #[test]
    fn tanh_is_bt_with_eta_two() {
        let tanh = model(OmegaVariant::Tanh);
        let bt2 = OmegaModel::<f64>::new(OmegaVariant::Bt, 2.0).unwrap();
        for d in [-1.3, 0.0, 0.4, 2.5] {
            let a = tanh.eval(d, 0.0).unwrap().p;
            let b = bt2.eval(d, 0.0).unwrap().p;
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn squared_sigmoid_round_trip() {
        let m = OmegaModel::<f64>::new(OmegaVariant::SquaredSigmoid, 1.5).unwrap();
        for d in [-2.0, -0.1, 0.0, 0.7, 3.0] {
            let p = m.eval(d, 0.0).unwrap().p;
            assert!((m.inverse(p).unwrap() - d).abs() < 1e-10);
        }
    }

    #[test]
    fn exponential_and_hinge_are_clamped() {
        let e = model(OmegaVariant::Exponential);
        let c = e.eval(1.0, 0.0).unwrap();
        assert_eq!(c.p, 1.0);
        assert!(c.clamped);
        let c = e.eval(-1.0, 0.0).unwrap();
        assert!(!c.clamped);
        assert!((e.inverse(c.p).unwrap() + 1.0).abs() < 1e-12);
        let h = model(OmegaVariant::Hinge);
        assert!(h.eval(-2.0, 0.0).unwrap().clamped);
        assert_eq!(h.eval(2.0, 0.0).unwrap().p, 0.0);
        assert!(matches!(h.inverse(0.3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn ratio_requires_positive_rewards() {
        let r = model(OmegaVariant::Ratio);
        assert!((r.eval(3.0, 1.0).unwrap().p - 0.75).abs() < 1e-15);
        assert!(matches!(r.eval(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(r.eval(1.0, -2.0), Err(Error::Domain(_))));
        assert!(matches!(r.inverse(0.5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn kto_uses_row_mean_and_pair_inverse() {
        let k = OmegaModel::<f64>::new(OmegaVariant::KtoRef(None), 2.0).unwrap();
        let row = [0.0, 1.0, 2.0];
        let p1 = k.eval_in_row(&row, 2, 0).unwrap().p;
        assert!((p1 - sigmoid(2.0)).abs() < 1e-15);
        let p0 = k.eval_in_row(&row, 0, 2).unwrap().p;
        assert!((k.inverse_kto(p1, p0).unwrap() - 2.0).abs() < 1e-10);
        assert!(k.eval(1.0, 0.0).is_err());
        assert!(k.inverse(0.4).is_err());
        let fixed = OmegaModel::<f64>::new(OmegaVariant::KtoRef(Some(0.5)), 1.0).unwrap();
        assert!((fixed.eval(0.5, 9.0).unwrap().p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inverse_domain_errors() {
        let bt = OmegaModel::<f64>::bt();
        assert!(bt.inverse(0.0).is_err());
        assert!(bt.inverse(1.0).is_err());
        assert!(OmegaModel::<f64>::new(OmegaVariant::Bt, 0.0).is_err());
    }

    #[test]
    fn log_phi_derivative_matches_finite_difference() {
        for v in [OmegaVariant::Bt, OmegaVariant::Tanh, OmegaVariant::Sin] {
            let m = OmegaModel::<f64>::new(v, 1.3).unwrap();
            for d in [-0.9, 0.0, 0.5, 1.2] {
                let h = 1e-6;
                let fd = (m.log_phi(d + h) - m.log_phi(d - h)) / (2.0 * h);
                assert!((fd - m.dlog_phi(d)).abs() < 1e-7, "{v:?} {d}");
                assert!((m.phi(d) - m.eval(d, 0.0).unwrap().p).abs() < 1e-15);
            }
        }
    }
}
