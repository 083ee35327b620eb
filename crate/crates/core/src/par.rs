//! Data-parallel map with a sequential fallback.
//!
//! Without the `parallel` feature, or with `parallel == false`, items are
//! processed in order on the calling thread. Results keep input order either
//! way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map_collect<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = parallel;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Whether the crate was built with rayon support.
pub const fn available() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..100).collect();
        let seq = map_collect(&items, false, |i, v| v * v + i as u64);
        let par = map_collect(&items, true, |i, v| v * v + i as u64);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 56);
    }
}
