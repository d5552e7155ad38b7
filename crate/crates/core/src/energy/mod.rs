//! Elastic deformation energies: placeholder.
use crate::scalar::Real;
#[derive(Debug, Clone)]
pub struct EnergyBackend<R: Real> {
    _marker: std::marker::PhantomData<R>,
}
