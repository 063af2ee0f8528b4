//! Guarded message passing on a single subchain.
//!
//! Builds a small set of global counts by hand, then infers the same five
//! tokens under three different left-guard beliefs to show how the guard
//! pulls on the first positions and fades further in.

use ndarray::array;
use scvi_hmm::{infer_subchain, GlobalStats, ModelConfig, Subchain};

fn main() -> scvi_hmm::Result<()> {
    let config = ModelConfig::new(2, 3, 0.1, 0.1)?;
    // state 0 is sticky and emits word 0; state 1 prefers words 1 and 2
    let stats = GlobalStats::from_parts(
        array![[80.0, 20.0], [25.0, 75.0]],
        array![[90.0, 5.0, 5.0], [10.0, 45.0, 45.0]],
    )?;
    let tokens = [0u32, 0, 1, 2, 0];
    let uniform = [0.5, 0.5];

    for (label, left) in [("uniform", [0.5, 0.5]), ("sure of 0", [1.0, 0.0]), ("sure of 1", [0.0, 1.0])] {
        let sub = Subchain {
            index: 0,
            tokens: &tokens,
            left_guard: &left,
            right_guard: &uniform,
        };
        let (post, local) = infer_subchain(&sub, &stats, &config)?;
        println!("left guard {label:<10} log evidence {:.4}", post.log_evidence);
        for (l, row) in post.unary.rows().into_iter().enumerate() {
            println!("  q(z_{}) = [{:.3}, {:.3}]  x = {}", l + 1, row[0], row[1], tokens[l]);
        }
        println!(
            "  expected inner transitions {:.3} (L - 1 = {}), emissions {:.3}",
            local.trans_mass(),
            tokens.len() - 1,
            local.emit_mass()
        );
    }

    // the pairwise marginal of the first edge under the default guards
    let sub = Subchain {
        index: 0,
        tokens: &tokens,
        left_guard: &uniform,
        right_guard: &uniform,
    };
    let (post, _) = infer_subchain(&sub, &stats, &config)?;
    println!("q(z_1, z_2) =\n{:.4}", post.pairwise[0]);
    Ok(())
}
