//! Cooperative grid agent that checks instructions against conversational
//! norms before acting.

pub mod agent;
pub mod corpus;
pub mod evalharness;
pub mod grid;
pub mod instruction;
pub mod norms;
pub mod planner;
pub mod prompting;

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order always matches input order.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
