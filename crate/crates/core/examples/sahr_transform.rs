//! Compares the exact power transform with its Taylor form across a few
//! heat values and scale factors.

use swahr::codec::taylor_value;

fn main() {
    println!("{:>6} {:>6} {:>12} {:>12} {:>10}", "b", "s", "exact", "taylor", "abs err");
    for s in [0.8, 0.95, 1.0, 1.05, 1.25] {
        let alpha = 1.0 / s - 1.0;
        for b in [0.9, 0.5, 0.1, 0.01] {
            let exact = f64::powf(b, 1.0 / s);
            let taylor = taylor_value(b, alpha);
            println!("{b:>6} {s:>6} {exact:>12.6} {taylor:>12.6} {:>10.2e}", (exact - taylor).abs());
        }
    }
}
