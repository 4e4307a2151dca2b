//! The loss family over tabular softmax policies.

mod context;
mod decomposition;
mod exact;
mod stochastic;

pub use context::{DpoMode, LossContext, LossContextBuilder, PraGradient, ReverseSampling};
pub use decomposition::{dpo_decomposition, Decomposition};
pub use exact::{evaluate_loss, loss_gradient, loss_value_and_gradient};
pub use stochastic::{
    enumerated_gradient, sample_gradient, stochastic_gradient, stochastic_gradient_with, Sample,
};

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossKind {
    ForwardBda,
    ReverseBda,
    Ra,
    RaP,
    Rda,
    RdaP,
    Pra,
    PraP,
    Dpo,
    KlRegularized,
}

impl LossKind {
    pub const ALL: [LossKind; 10] = [
        LossKind::ForwardBda,
        LossKind::ReverseBda,
        LossKind::Ra,
        LossKind::RaP,
        LossKind::Rda,
        LossKind::RdaP,
        LossKind::Pra,
        LossKind::PraP,
        LossKind::Dpo,
        LossKind::KlRegularized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::ForwardBda => "forward_bda",
            LossKind::ReverseBda => "reverse_bda",
            LossKind::Ra => "ra",
            LossKind::RaP => "ra_p",
            LossKind::Rda => "rda",
            LossKind::RdaP => "rda_p",
            LossKind::Pra => "pra",
            LossKind::PraP => "pra_p",
            LossKind::Dpo => "dpo",
            LossKind::KlRegularized => "kl_regularized",
        }
    }

    /// Whether the loss is built on `π_ref` and targets `π̄^τ`.
    pub fn is_posterior(self) -> bool {
        matches!(
            self,
            LossKind::RaP | LossKind::RdaP | LossKind::PraP | LossKind::Dpo | LossKind::KlRegularized
        )
    }

    /// Whether the loss evaluates `ω`.
    pub fn uses_omega(self) -> bool {
        matches!(self, LossKind::Pra | LossKind::PraP | LossKind::Dpo)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown loss kind '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert!("ppo".parse::<LossKind>().is_err());
        assert_eq!(LossKind::ALL.iter().filter(|k| k.is_posterior()).count(), 5);
    }
}
