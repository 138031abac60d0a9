//! Tensors, a differentiable tape, and the generator and discriminator networks.

pub mod discriminator;
pub mod generator;
pub mod graph;
mod layers;
pub mod params;
pub mod tensor;

pub use discriminator::{Discriminator, DiscriminatorSpec};
pub use generator::{Generator, GeneratorSpec};
pub use graph::{Graph, Var};
pub use params::{spec_hash, ParamSet};
pub use tensor::{ConvGeom, Shape, Tensor};

/// A network owning a [`ParamSet`] whose tensors are bound to a graph in order.
pub trait Network {
    fn params(&self) -> &ParamSet;

    fn params_mut(&mut self) -> &mut ParamSet;

    /// Records every parameter as a leaf of `g`, in forward order.
    fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params().tensors().iter().map(|t| g.leaf(t.clone())).collect()
    }

    fn save(&self, path: &std::path::Path) -> crate::Result<()> {
        self.params().save(path)
    }
}
