//! Newton solvers: placeholder.
use crate::scalar::Real;
#[derive(Debug, Clone)]
pub struct SolverConfig<R: Real> {
    _marker: std::marker::PhantomData<R>,
}
