//! Reverse-mode gradients of every primitive against central differences in f64.

use vrfam::tensor::gradcheck::{check, standard_suite, MAX_REL_ERROR};
use vrfam::tensor::Tensor;

fn main() -> vrfam::Result<()> {
    for r in standard_suite(0)? {
        println!("{:<20} {:<28} {:.2e} {}", r.primitive, r.shapes, r.max_rel_error, if r.passed() { "ok" } else { "FAIL" });
    }

    // A custom composite: mean(relu(x W)) checked the same way.
    let x = Tensor::new(vec![2, 3], vec![0.3, -1.2, 0.8, 1.5, 0.1, -0.4])?;
    let w = Tensor::new(vec![3, 2], vec![0.5, -0.7, 0.2, 0.9, -1.1, 0.4])?;
    let (err, n) = check(&[x, w], |g, v| {
        let h = g.matmul(v[0], v[1])?;
        let r = g.relu(h);
        Ok(g.reduce_mean(r))
    })?;
    println!("custom relu(xW): {n} elements, max rel err {err:.2e} (limit {MAX_REL_ERROR:e})");
    Ok(())
}
