//! Chains shared by the benchmarks.

use qwalk_core::chains::{Family, MarkovChain};

/// Lazified family members, keyed by a short name for the benchmark ids.
pub fn fixtures() -> Vec<(String, MarkovChain)> {
    [
        Family::Cycle { n: 8 },
        Family::Complete { n: 12 },
        Family::Torus2d { side: 3 },
        Family::Hypercube { dim: 3 },
        Family::Random { n: 12, seed: 7 },
    ]
    .iter()
    .map(|f| {
        let c = MarkovChain::family(f)
            .expect("valid family")
            .lazify(0.0)
            .expect("lazify");
        (c.label().to_string(), c)
    })
    .collect()
}
