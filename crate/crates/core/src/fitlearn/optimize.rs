use std::io::Write;

use rayon::prelude::*;

use super::{Monotone, StatFn};
use crate::envlib::EnvSpec;
use crate::error::{Error, Result};
use crate::hjbcore::shjb_weak;
use crate::imputation::{MollifiedQuantile, TestFunctionFamily};

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    /// Initial step length; halved whenever a step fails to decrease the loss.
    pub step: f64,
    pub iters: usize,
    pub probe_states: Vec<Vec<f64>>,
    pub imputation: MollifiedQuantile,
    /// Central-difference step in parameter space.
    pub fd_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub loss: f64,
    pub best_loss: f64,
}

/// Mean weak loss over the probe states, with monotone projection applied to
/// the statistics.
pub fn mean_weak_loss(env: &EnvSpec, sf: &StatFn, fam: &TestFunctionFamily, opt: &MinimizeOptions) -> Result<f64> {
    let losses = opt
        .probe_states
        .par_iter()
        .map(|x| shjb_weak(env, &Monotone(sf), &opt.imputation, x, fam))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Gradient descent on the mean weak loss with finite-difference gradients.
/// A step is only taken if it lowers the loss, so the returned statistics
/// function is the best iterate seen.
pub fn minimize_shjb(
    env: &EnvSpec,
    sf0: &StatFn,
    fam: &TestFunctionFamily,
    opt: &MinimizeOptions,
) -> Result<(StatFn, Vec<TraceRow>)> {
    if opt.probe_states.is_empty() {
        return Err(Error::InvalidConfig("minimisation needs probe states".into()));
    }
    if !(opt.step >= 0.0) || !(opt.fd_step > 0.0) {
        return Err(Error::InvalidConfig("step must be nonnegative and fd_step positive".into()));
    }
    let eval = |sf: &StatFn, iter: usize| -> Result<f64> {
        let l = mean_weak_loss(env, sf, fam, opt)?;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::NonFiniteLoss {
                iter,
                detail: format!("mean weak loss {l}"),
            })
        }
    };

    let mut best = sf0.clone();
    let mut best_loss = eval(&best, 0)?;
    let mut trace = vec![TraceRow {
        iter: 0,
        loss: best_loss,
        best_loss,
    }];
    let mut step = opt.step;
    for iter in 1..=opt.iters {
        let p = best.params();
        let mut grad = vec![0.0; p.len()];
        let mut probe = best.clone();
        for (k, g) in grad.iter_mut().enumerate() {
            let mut q = p.clone();
            q[k] = p[k] + opt.fd_step;
            probe.set_params(&q);
            let lp = eval(&probe, iter)?;
            q[k] = p[k] - opt.fd_step;
            probe.set_params(&q);
            let lm = eval(&probe, iter)?;
            *g = (lp - lm) / (2.0 * opt.fd_step);
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let mut loss = best_loss;
        if gnorm > 0.0 && step > 0.0 {
            let q: Vec<f64> = p.iter().zip(&grad).map(|(a, g)| a - step * g / gnorm).collect();
            probe.set_params(&q);
            loss = eval(&probe, iter)?;
            if loss < best_loss {
                best = probe;
                best_loss = loss;
            } else {
                step *= 0.5;
            }
        }
        trace.push(TraceRow { iter, loss, best_loss });
    }
    Ok((best, trace))
}

pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceRow]) -> Result<()> {
    writeln!(w, "iter,loss,best_loss")?;
    for r in trace {
        writeln!(w, "{},{},{}", r.iter, r.loss, r.best_loss)?;
    }
    Ok(())
}
