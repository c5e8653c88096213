//! Route delimitation over an (incomplete) giant tour.

use super::context::{Node, SearchContext};

impl SearchContext {
    /// Splits `tour` into consecutive routes minimizing total penalized cost.
    /// Routes are capped at twice the vehicle capacity so the dynamic
    /// program stays close to linear in practice.
    pub(crate) fn split(&self, tour: &[Node]) -> Vec<Vec<Node>> {
        let n = tour.len();
        if n == 0 {
            return Vec::new();
        }
        let mut best = vec![f64::INFINITY; n + 1];
        let mut pred = vec![0usize; n + 1];
        best[0] = 0.0;
        for i in 0..n {
            if !best[i].is_finite() {
                continue;
            }
            let mut load = 0;
            for j in i + 1..=n {
                load += self.demand[tour[j - 1]];
                if j > i + 1 && load > 2 * self.capacity {
                    break;
                }
                let cost = best[i] + self.penalized(&self.eval(&tour[i..j]));
                if cost < best[j] - 1e-12 {
                    best[j] = cost;
                    pred[j] = i;
                }
            }
        }
        let mut routes = Vec::new();
        let mut j = n;
        while j > 0 {
            let i = pred[j];
            routes.push(tour[i..j].to_vec());
            j = i;
        }
        routes.reverse();
        routes
    }
}
