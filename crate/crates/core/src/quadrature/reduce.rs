//! Order-fixed pairwise reductions, so sums do not depend on how work was
//! split across threads.

/// Combines neighbours level by level: `((a0+a1)+(a2+a3))+…`.
pub fn pairwise<T>(mut items: Vec<T>, combine: impl Fn(T, T) -> T) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Pairwise sum of a slice in fixed blocks of `BLOCK`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    let blocks: Vec<f64> = values.chunks(BLOCK).map(|c| c.iter().sum()).collect();
    pairwise(blocks, |a, b| a + b).unwrap_or(0.0)
}

/// Elementwise sum of two equally sized vectors.
pub fn add_vec(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_order() {
        let s = pairwise(vec!["a", "b", "c", "d", "e"].into_iter().map(String::from).collect(), |a, b| {
            format!("({a}{b})")
        });
        assert_eq!(s.unwrap(), "(((ab)(cd))e)");
        assert_eq!(pairwise(Vec::<f64>::new(), |a, b| a + b), None);
    }

    #[test]
    fn sums() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500500.0);
        assert_eq!(add_vec(vec![1.0, 2.0], vec![3.0, 4.0]), vec![4.0, 6.0]);
    }
}
