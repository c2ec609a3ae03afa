use pfconv_core::cox::{CoxModel, GammaProposal};
use pfconv_core::{Bootstrap, Proposal, Result, RngStream};

/// The importance densities selectable from the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum ProposalChoice {
    Gamma(GammaProposal),
    Bootstrap,
}

impl ProposalChoice {
    pub fn label(&self) -> String {
        match self {
            ProposalChoice::Gamma(g) => format!("gamma(alpha={}, beta={})", g.alpha(), g.beta()),
            ProposalChoice::Bootstrap => "bootstrap".into(),
        }
    }
}

impl Proposal<CoxModel> for ProposalChoice {
    fn propose(&self, model: &CoxModel, x_prev: f64, y: u32, rng: &mut RngStream) -> f64 {
        match self {
            ProposalChoice::Gamma(g) => g.propose(model, x_prev, y, rng),
            ProposalChoice::Bootstrap => Bootstrap.propose(model, x_prev, y, rng),
        }
    }

    fn logdensity(&self, model: &CoxModel, x: f64, x_prev: f64, y: u32) -> f64 {
        match self {
            ProposalChoice::Gamma(g) => Proposal::logdensity(g, model, x, x_prev, y),
            ProposalChoice::Bootstrap => Proposal::<CoxModel>::logdensity(&Bootstrap, model, x, x_prev, y),
        }
    }

    fn log_weight(&self, model: &CoxModel, x: f64, x_prev: f64, y: u32) -> Result<f64> {
        match self {
            ProposalChoice::Gamma(g) => g.log_weight(model, x, x_prev, y),
            ProposalChoice::Bootstrap => Bootstrap.log_weight(model, x, x_prev, y),
        }
    }
}
