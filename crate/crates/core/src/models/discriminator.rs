use rand::Rng;

use super::network::{discriminator_network, Network};
use crate::tensor::{AdamConfig, AdamState, Graph, Tensor};
use crate::{Error, Result};

/// Classifier between latent samples (class 0) and dimension-wise permuted
/// ones (class 1), with its own optimizer state.
#[derive(Clone, Debug)]
pub struct Discriminator {
    net: Network,
    adam: AdamState,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(n: usize, width: usize, lr: f64, rng: &mut R) -> Self {
        Self::from_network(discriminator_network(n, width, rng), lr)
    }

    /// Wraps an existing network with fresh optimizer state.
    pub fn from_network(net: Network, lr: f64) -> Self {
        let adam = AdamState::new(AdamConfig { lr, beta1: 0.5, beta2: 0.9, eps: 1e-8 }, net.params());
        Discriminator { net, adam }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// Logits `[B, 2]`.
    pub fn logits(&self, z: &Tensor) -> Result<Tensor> {
        self.net.apply(z)
    }

    /// Mean two-class cross entropy; with `update`, also takes one Adam step.
    fn cross_entropy(&mut self, real: &Tensor, permuted: &Tensor, update: bool) -> Result<f64> {
        if real.shape() != permuted.shape() || real.rank() != 2 {
            return Err(Error::shape(
                "discriminator_step",
                format!("real {:?} vs permuted {:?}", real.shape(), permuted.shape()),
            ));
        }
        let b = real.shape()[0];
        let mut g = Graph::new();
        let vars = self.net.bind(&mut g, true);
        let r = g.input(real.clone());
        let p = g.input(permuted.clone());
        let x = g.concat(&[r, p], 0)?;
        let logits = self.net.forward(&mut g, &vars, x)?;
        let logp = g.log_softmax(logits);
        let mut targets = Tensor::zeros(&[2 * b, 2]);
        for i in 0..2 * b {
            targets.data_mut()[i * 2 + usize::from(i >= b)] = 1.0;
        }
        let t = g.input(targets);
        let picked = g.mul(logp, t)?;
        let total = g.sum(picked);
        let loss = g.scale(total, -1.0 / (2 * b) as f64);
        let value = g.value(loss).item()?;
        if update {
            let mut grads = g.backward(loss)?;
            let gs: Vec<Tensor> =
                vars.iter().zip(self.net.params()).map(|(v, p)| grads.take_or_zeros(*v, p.shape())).collect();
            self.adam.update(self.net.params_mut(), &gs)?;
        }
        Ok(value)
    }

    pub fn loss(&mut self, real: &Tensor, permuted: &Tensor) -> Result<f64> {
        self.cross_entropy(real, permuted, false)
    }
}

/// One Adam update of the discriminator; returns the cross entropy before
/// the update.
pub fn discriminator_step(disc: &mut Discriminator, real: &Tensor, permuted: &Tensor) -> Result<f64> {
    disc.cross_entropy(real, permuted, true)
}
