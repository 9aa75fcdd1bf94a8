//! Three coupled Poisson processes on a thin annulus, `X ⊆ Y ⊆ X_up`.

use pvcell::cli::run_coupling;
use pvcell::sampler::coupled_triple;
use pvcell::RngStream;

fn main() {
    let tri = coupled_triple(200.0, 0.1, &mut RngStream::new(1).rng()).unwrap();
    println!(
        "one draw: |X| = {}, |Y| = {}, |X_up| = {}, inclusions hold: {}",
        tri.x.len(),
        tri.y.len(),
        tri.x_up.len(),
        tri.inclusions_hold()
    );

    for (t, eps) in [(1e3, 0.1), (1e4, 0.05)] {
        let c = run_coupling(t, eps, 500, 1, 0).unwrap();
        println!(
            "t = {t}, eps = {eps}: mean gap {:.2} ± {:.2}, closed form {:.2}",
            c.mean_gap, c.se_gap, c.expected_gap
        );
    }
}
