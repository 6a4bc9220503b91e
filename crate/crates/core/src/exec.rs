//! Data-parallel loop helpers: rayon with the default `parallel` feature,
//! plain iterators otherwise. Callers only hand over independent per-item
//! work; reductions stay sequential so both paths produce identical bits.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(&mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    items.par_iter_mut().for_each(f);
    #[cfg(not(feature = "parallel"))]
    items.iter_mut().for_each(f);
}

/// Per-item work that needs thread-local scratch (FFT buffers and the like).
pub fn for_each_mut_with<T, S, I, F>(items: &mut [T], init: I, f: F)
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    items.par_iter_mut().for_each_init(&init, |s, t| f(s, t));
    #[cfg(not(feature = "parallel"))]
    {
        let mut s = init();
        items.iter_mut().for_each(|t| f(&mut s, t));
    }
}

pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
