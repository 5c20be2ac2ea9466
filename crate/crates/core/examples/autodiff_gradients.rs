//! Differentiates a small attention-style expression on the tape and checks
//! each input gradient against central finite differences.

use std::sync::Arc;

use gsp::autodiff::{Axis, Tape, Tensor, Var};
use gsp::Result;

fn build(tape: &mut Tape, x: &Tensor, w: &Tensor, cap: &Tensor) -> Result<(Var, Var, Var, Var)> {
    let xv = tape.leaf(x.clone());
    let wv = tape.leaf(w.clone());
    let cv = tape.leaf(cap.clone());
    let h = tape.matmul(xv, wv)?;
    let h = tape.leaky_relu(h, 0.2);
    let scores = tape.segment_softmax(h, Arc::new(vec![0, 0, 1]), 2)?;
    let gated = tape.sigmoid(scores);
    let flow = tape.sum(gated);
    let flow = tape.scale(flow, 1.0);
    let flows = tape.concat_rows(&[flow, flow])?;
    let ratio = tape.capacity_ratio(cv, flows)?;
    let out = tape.softmax(ratio, Axis::Rows);
    let target = tape.constant(Tensor::matrix(2, 1, vec![0.3, 0.7])?);
    let loss = tape.squared_error(out, target)?;
    Ok((loss, xv, wv, cv))
}

fn main() -> Result<()> {
    let x = Tensor::matrix(3, 2, vec![0.5, -1.0, 1.5, 0.25, -0.75, 2.0])?;
    let w = Tensor::matrix(2, 1, vec![0.8, -0.3])?;
    let cap = Tensor::matrix(2, 1, vec![1.2, 0.9])?;
    let mut tape = Tape::new();
    let (loss, xv, wv, cv) = build(&mut tape, &x, &w, &cap)?;
    let grads = tape.backward(loss)?;
    println!("loss {:.6}, tape of {} nodes", tape.value(loss).item(), tape.len());

    let inputs = [("x", xv, &x), ("w", wv, &w), ("capacity", cv, &cap)];
    for (k, (name, var, value)) in inputs.iter().enumerate() {
        let analytic = grads.wrt(*var);
        let mut worst = 0.0f64;
        for i in 0..value.len() {
            let eval = |step: f64| -> Result<f64> {
                let mut args = [x.clone(), w.clone(), cap.clone()];
                args[k].data_mut()[i] += step;
                let mut t = Tape::new();
                let (l, ..) = build(&mut t, &args[0], &args[1], &args[2])?;
                Ok(t.value(l).item())
            };
            let numeric = (eval(1e-6)? - eval(-1e-6)?) / 2e-6;
            worst = worst.max((analytic.data()[i] - numeric).abs() / numeric.abs().max(1e-8));
        }
        println!(
            "{name:<9} gradient {:?}  worst relative error {worst:.1e}",
            analytic.data()
        );
    }
    Ok(())
}
