//! CSV serialization for traces and the run summary.
//!
//! Floats are written as `{:.16e}` (17 significant digits), so equal inputs
//! produce byte-identical files. Missing observations (t = 0) serialize as
//! `NaN`.

use std::fmt::Write;

use actinf_core::model::MatrixDims;
use actinf_core::simulation::SimulationTrace;

use crate::config::RunPlan;

pub const SUMMARY_HEADER: &str = "controller,lambda,seed,final_cum_cost,final_fe_total,max_abs_u";

fn push_float(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("write to string");
}

pub fn trace_csv(trace: &SimulationTrace, dims: MatrixDims) -> String {
    let mut out = String::from("t");
    for i in 1..=dims.n_x {
        write!(out, ",x{i}").expect("write to string");
    }
    for i in 1..=dims.n_y {
        write!(out, ",y{i}").expect("write to string");
    }
    for i in 1..=dims.n_u {
        write!(out, ",u{i}").expect("write to string");
    }
    out.push_str(",inst_cost,cum_cost,fe_past,fe_future,fe_total\n");

    for record in &trace.records {
        write!(out, "{}", record.t).expect("write to string");
        for v in record.x_true.iter() {
            out.push(',');
            push_float(&mut out, *v);
        }
        for i in 0..dims.n_y {
            out.push(',');
            push_float(&mut out, record.y.as_ref().map_or(f64::NAN, |y| y[i]));
        }
        for v in record.u.iter() {
            out.push(',');
            push_float(&mut out, *v);
        }
        for v in [record.inst_cost, record.cum_cost, record.fe.past_part, record.fe.future_part, record.fe.total] {
            out.push(',');
            push_float(&mut out, v);
        }
        out.push('\n');
    }
    out
}

pub fn summary_row(plan: &RunPlan, trace: &SimulationTrace) -> String {
    let mut out = format!("{},{},{}", plan.controller_label, plan.lambda_label, plan.seed);
    for v in [trace.final_cum_cost(), trace.final_fe_total(), trace.max_abs_u()] {
        out.push(',');
        push_float(&mut out, v);
    }
    out.push('\n');
    out
}
