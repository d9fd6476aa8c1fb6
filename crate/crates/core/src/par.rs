//! Order-preserving parallel map over scoped threads.

/// Applies `f` to every item using up to `workers` threads. Items are dealt
/// round-robin, and results come back in input order, so the output does not
/// depend on the worker count.
pub fn parallel_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.into_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let n = items.len();
    let mut lanes: Vec<Vec<(usize, T)>> = (0..workers).map(|_| Vec::new()).collect();
    for (i, t) in items.into_iter().enumerate() {
        lanes[i % workers].push((i, t));
    }
    let f = &f;
    let mut slots: Vec<Option<R>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = lanes
            .into_iter()
            .map(|lane| s.spawn(move || lane.into_iter().map(|(i, t)| (i, f(i, t))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every item mapped")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_worker_count() {
        let items: Vec<u64> = (0..37).collect();
        let one = parallel_map(items.clone(), 1, |i, x| x * x + i as u64);
        for w in [2, 3, 8, 64] {
            assert_eq!(parallel_map(items.clone(), w, |i, x| x * x + i as u64), one);
        }
    }
}
