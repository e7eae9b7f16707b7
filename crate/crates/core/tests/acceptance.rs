//! Acceptance checks for the whole crate: eight numbered criteria, each
//! printing a single `ACCEPTANCE n (...): PASS|FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`). A ninth criterion,
//! byte-identical rerun output, lives with the command-line crate.
//!
//! Every tolerance is pinned here as a named constant.

use actinf_core::control::{actinf_gain, actinf_schedule, limit_check_lambda, lqg_gain, lqg_schedule};
use actinf_core::estimation::FilterState;
use actinf_core::ffg::SliceSpec;
use actinf_core::freenergy::future_free_energy;
use actinf_core::gaussian::Gaussian;
use actinf_core::linalg::{check_psd, check_symmetric};
use actinf_core::model::{GoalPrior, LinearGaussianModel};
use actinf_core::simulation::{simulate, Controller, SimSettings, SimulationTrace};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Closed form vs message passing on the benchmark (absolute).
const TOL_AGREEMENT_BENCHMARK: f64 = 1e-9;
/// Closed form vs message passing on random systems (relative).
const TOL_AGREEMENT_RANDOM: f64 = 1e-8;
/// Number of random systems for the agreement sweep.
const RANDOM_SYSTEMS: usize = 200;
/// Gain gap to LQG required at the smallest lambda.
const TOL_LAMBDA_LIMIT: f64 = 1e-3;
/// Gain gap to LQG in the high-precision (deterministic) limit.
const TOL_DETERMINISTIC_LIMIT: f64 = 1e-3;
/// LQG gain must be invariant to joint (Q, R) scaling to this accuracy.
const TOL_LQG_SCALING: f64 = 1e-12;
/// Filter vs textbook Kalman recursion (relative).
const TOL_KALMAN: f64 = 1e-9;
/// Number of random filtering instances.
const KALMAN_INSTANCES: usize = 100;
/// Cumulative cost of the near-LQG controller relative to LQG, noise-free.
const TOL_LQG_PROXIMITY: f64 = 0.01;
/// Same proximity under noise, per seed.
const TOL_LQG_PROXIMITY_NOISY: f64 = 0.05;
/// Noisy seeds (out of 10) that must reproduce the orderings.
const NOISY_MAJORITY: usize = 8;
/// Sequential elimination vs dense joint integral (relative).
const TOL_FE_DENSE: f64 = 1e-8;
/// Sequential elimination vs scalar quadrature (absolute, nats).
const TOL_FE_QUADRATURE: f64 = 1e-6;

const LN_2PI: f64 = 1.8378770664093453;

fn report(n: usize, name: &str, result: Result<(), String>) {
    match &result {
        Ok(()) => println!("ACCEPTANCE {n} ({name}): PASS"),
        Err(reason) => println!("ACCEPTANCE {n} ({name}): FAIL - {reason}"),
    }
    if let Err(reason) = result {
        panic!("criterion {n} failed: {reason}");
    }
}

fn eye(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

fn benchmark_model() -> LinearGaussianModel {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 2, &[0.1, 0.5, 0.05, 0.5]);
    let prior = Gaussian::from_mean_precision(DVector::zeros(2), eye(2) * 1e-8).unwrap();
    LinearGaussianModel::new(a, b, eye(2), eye(2), eye(2), prior).unwrap()
}

fn unit_goal(lambda: f64) -> GoalPrior {
    GoalPrior::new(eye(2), eye(2), lambda).unwrap()
}

fn rel_gap_mat(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).amax() / (1.0 + want.amax())
}

fn rel_gap_vec(got: &DVector<f64>, want: &DVector<f64>) -> f64 {
    (got - want).amax() / (1.0 + want.amax())
}

fn random_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

fn random_spd(rng: &mut ChaCha12Rng, n: usize, ridge: f64) -> DMatrix<f64> {
    let g = random_matrix(rng, n, n, 1.0);
    &g * g.transpose() + eye(n) * ridge
}

// ---------------------------------------------------------------------------
// 1. closed-form recursions vs message passing

/// Feedback gain recovered purely from message passing: with a zero-mean
/// goal the control mode is linear in the estimate mean, so running the
/// control slice over basis means (at fixed belief precision) yields the
/// columns of `K`.
fn gain_via_messages(
    spec: &SliceSpec,
    w_hat: &DMatrix<f64>,
    p_next: &DMatrix<f64>,
) -> Result<DMatrix<f64>, String> {
    let n_x = w_hat.nrows();
    let mut columns = Vec::with_capacity(n_x);
    for i in 0..n_x {
        let mut mean = DVector::zeros(n_x);
        mean[i] = 1.0;
        let estimate = Gaussian::from_mean_precision(mean, w_hat.clone()).map_err(|e| e.to_string())?;
        let slice = spec.control_slice(&estimate, p_next).map_err(|e| e.to_string())?;
        columns.push(-slice.u_mode);
    }
    Ok(DMatrix::from_columns(&columns))
}

fn check_agreement() -> Result<(), String> {
    // benchmark system, full backward sweep and one-step gains
    let model = benchmark_model();
    let horizon = 10;
    for lambda in [0.01, 0.1, 1.0] {
        let goal = unit_goal(lambda);
        let schedule = actinf_schedule(&model, &goal, horizon).map_err(|e| e.to_string())?;
        let spec = SliceSpec::new(&model, &goal).map_err(|e| e.to_string())?;

        let mut messages = vec![goal.lambda_q()];
        for _ in 1..horizon {
            let slice = spec.backward_slice(&messages[0]).map_err(|e| e.to_string())?;
            messages.insert(0, slice.p_prev);
        }
        for (k, (closed, message)) in schedule.p_seq().iter().zip(&messages).enumerate() {
            let gap = (closed - message).amax();
            if gap > TOL_AGREEMENT_BENCHMARK {
                return Err(format!("lambda {lambda}: schedule entry {k} differs by {gap:.3e}"));
            }
        }

        for w_hat in [eye(2), DMatrix::from_row_slice(2, 2, &[4.0, 0.8, 0.8, 2.0])] {
            let estimate =
                Gaussian::from_mean_precision(DVector::from_column_slice(&[25.0, 25.0]), w_hat.clone())
                    .map_err(|e| e.to_string())?;
            let (k_closed, u_closed) = actinf_gain(&schedule, &estimate, &model, &goal).map_err(|e| e.to_string())?;
            let k_messages = gain_via_messages(&spec, &w_hat, schedule.p_next())?;
            let gap = (&k_closed - &k_messages).amax();
            if gap > TOL_AGREEMENT_BENCHMARK {
                return Err(format!("lambda {lambda}: gain differs by {gap:.3e}"));
            }
            let slice = spec.control_slice(&estimate, schedule.p_next()).map_err(|e| e.to_string())?;
            let gap = (&u_closed - &slice.u_mode).amax();
            if gap > TOL_AGREEMENT_BENCHMARK {
                return Err(format!("lambda {lambda}: control mode differs by {gap:.3e}"));
            }
        }
    }

    // random systems of every small shape; dynamics scaled to spectral norm
    // 1.1 so five backward steps keep the precision-to-go well conditioned
    // (comparing two f64 routes under a deliberately exploding recursion
    // tests rounding, not algebra)
    let mut rng = ChaCha12Rng::seed_from_u64(20240915);
    for case in 0..RANDOM_SYSTEMS {
        let n_x = rng.random_range(1..=4);
        let n_u = rng.random_range(1..=4);
        let raw = random_matrix(&mut rng, n_x, n_x, 1.0);
        let spectral = raw.clone().svd(false, false).singular_values.max();
        let a = raw * (1.1 / spectral.max(1e-6));
        let b = random_matrix(&mut rng, n_x, n_u, 1.0);
        let w_w = random_spd(&mut rng, n_x, 0.5);
        let prior = Gaussian::from_mean_precision(DVector::zeros(n_x), eye(n_x) * 1e-8)
            .map_err(|e| e.to_string())?;
        let model = LinearGaussianModel::new(a, b, eye(n_x), w_w, eye(n_x), prior).map_err(|e| e.to_string())?;
        let q = random_spd(&mut rng, n_x, 0.3);
        let r = random_spd(&mut rng, n_u, 0.3);
        let lambda = 10f64.powf(rng.random_range(-2.0..0.0));
        let goal = GoalPrior::new(q, r, lambda).map_err(|e| e.to_string())?;

        let schedule = actinf_schedule(&model, &goal, 5).map_err(|e| e.to_string())?;
        let spec = SliceSpec::new(&model, &goal).map_err(|e| e.to_string())?;
        let mut p = goal.lambda_q();
        for _ in 1..5 {
            p = spec.backward_slice(&p).map_err(|e| e.to_string())?.p_prev;
        }
        let gap = rel_gap_mat(schedule.p_next(), &p);
        if gap > TOL_AGREEMENT_RANDOM {
            return Err(format!("random system {case}: precision-to-go differs by {gap:.3e} (relative)"));
        }

        let w_hat = random_spd(&mut rng, n_x, 0.4);
        let x_hat = random_matrix(&mut rng, n_x, 1, 10.0).column(0).into_owned();
        let estimate = Gaussian::from_mean_precision(x_hat, w_hat.clone()).map_err(|e| e.to_string())?;
        let (k_closed, u_closed) = actinf_gain(&schedule, &estimate, &model, &goal).map_err(|e| e.to_string())?;
        let k_messages = gain_via_messages(&spec, &w_hat, schedule.p_next())?;
        let gap = rel_gap_mat(&k_messages, &k_closed);
        if gap > TOL_AGREEMENT_RANDOM {
            return Err(format!(
                "random system {case} (n_x {n_x}, n_u {n_u}, lambda {lambda:.3e}): gain differs by {gap:.3e} (relative)"
            ));
        }
        let slice = spec.control_slice(&estimate, schedule.p_next()).map_err(|e| e.to_string())?;
        let gap = rel_gap_vec(&slice.u_mode, &u_closed);
        if gap > TOL_AGREEMENT_RANDOM {
            return Err(format!("random system {case}: control mode differs by {gap:.3e} (relative)"));
        }
    }
    Ok(())
}

#[test]
fn criterion_1_closed_form_matches_message_passing() {
    report(1, "closed form matches message passing", check_agreement());
}

// ---------------------------------------------------------------------------
// 2. the gain approaches LQG as lambda shrinks

fn check_lambda_limit() -> Result<(), String> {
    let model = benchmark_model();
    let goal = unit_goal(1.0);
    let lambdas = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let gaps = limit_check_lambda(&model, &goal, 10, &lambdas, &eye(2)).map_err(|e| e.to_string())?;
    for (pair, lambda) in gaps.windows(2).zip(&lambdas[1..]) {
        if pair[1] > pair[0] + 1e-12 {
            return Err(format!("gap grew when lambda dropped to {lambda}: {:?}", gaps));
        }
    }
    let last = *gaps.last().unwrap();
    if last > TOL_LAMBDA_LIMIT {
        return Err(format!("gap at lambda=1e-6 is {last:.3e}, needs {TOL_LAMBDA_LIMIT:.0e}"));
    }
    Ok(())
}

#[test]
fn criterion_2_gain_approaches_lqg_for_small_lambda() {
    report(2, "gain approaches LQG as lambda shrinks", check_lambda_limit());
}

// ---------------------------------------------------------------------------
// 3. the gain approaches LQG when belief and process noise become sharp

fn check_deterministic_limit() -> Result<(), String> {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 2, &[0.1, 0.5, 0.05, 0.5]);
    let prior = Gaussian::from_mean_precision(DVector::zeros(2), eye(2) * 1e-8).unwrap();
    let sharp = 1e8;
    let model =
        LinearGaussianModel::new(a, b, eye(2), eye(2) * sharp, eye(2), prior).map_err(|e| e.to_string())?;
    let goal = unit_goal(1.0);

    let schedule = actinf_schedule(&model, &goal, 10).map_err(|e| e.to_string())?;
    let estimate = Gaussian::from_mean_precision(DVector::zeros(2), eye(2) * sharp).map_err(|e| e.to_string())?;
    let (k_act, _) = actinf_gain(&schedule, &estimate, &model, &goal).map_err(|e| e.to_string())?;

    let lqg = lqg_schedule(&model, &goal, 10).map_err(|e| e.to_string())?;
    let (k_lqg, _) = lqg_gain(&lqg, &DVector::zeros(2), &model, &goal).map_err(|e| e.to_string())?;

    let gap = (&k_act - &k_lqg).amax();
    if gap > TOL_DETERMINISTIC_LIMIT {
        return Err(format!("gain gap {gap:.3e} in the sharp limit, needs {TOL_DETERMINISTIC_LIMIT:.0e}"));
    }
    Ok(())
}

#[test]
fn criterion_3_gain_matches_lqg_in_the_deterministic_limit() {
    report(3, "gain matches LQG in the deterministic limit", check_deterministic_limit());
}

// ---------------------------------------------------------------------------
// 4. LQG feedback is invariant to joint scaling of (Q, R)

fn check_lqg_scaling() -> Result<(), String> {
    let model = benchmark_model();
    let gain_at = |lambda: f64| -> Result<DMatrix<f64>, String> {
        let cost = unit_goal(lambda);
        let schedule = lqg_schedule(&model, &cost, 10).map_err(|e| e.to_string())?;
        Ok(lqg_gain(&schedule, &DVector::zeros(2), &model, &cost).map_err(|e| e.to_string())?.0)
    };
    let reference = gain_at(1.0)?;
    for lambda in [0.1, 10.0] {
        let gap = (&gain_at(lambda)? - &reference).amax();
        if gap > TOL_LQG_SCALING {
            return Err(format!("gain moved by {gap:.3e} when scaling (Q, R) by {lambda}"));
        }
    }
    Ok(())
}

#[test]
fn criterion_4_lqg_gain_invariant_to_joint_cost_scaling() {
    report(4, "LQG gain invariant to joint cost scaling", check_lqg_scaling());
}

// ---------------------------------------------------------------------------
// 5. the filter reproduces the textbook Kalman recursion and its evidence

fn check_kalman() -> Result<(), String> {
    let mut rng = ChaCha12Rng::seed_from_u64(7071);
    for case in 0..KALMAN_INSTANCES {
        let n_x = rng.random_range(1..=3);
        let n_u = rng.random_range(1..=3);
        let n_y = rng.random_range(1..=3);
        let a = random_matrix(&mut rng, n_x, n_x, 1.0);
        let b = random_matrix(&mut rng, n_x, n_u, 1.0);
        let c = random_matrix(&mut rng, n_y, n_x, 1.0);
        let w_w = random_spd(&mut rng, n_x, 0.5);
        let w_v = random_spd(&mut rng, n_y, 0.5);
        let prior_mean = random_matrix(&mut rng, n_x, 1, 3.0).column(0).into_owned();
        let prior_cov = random_spd(&mut rng, n_x, 0.4);
        let prior = Gaussian::from_mean_cov(prior_mean.clone(), prior_cov.clone()).map_err(|e| e.to_string())?;
        let model = LinearGaussianModel::new(a.clone(), b.clone(), c.clone(), w_w.clone(), w_v.clone(), prior.clone())
            .map_err(|e| e.to_string())?;

        // textbook covariance-form recursion with Joseph stabilization
        let q_cov = w_w.try_inverse().ok_or("w_w inverse")?;
        let r_cov = w_v.try_inverse().ok_or("w_v inverse")?;
        let mut x_ref = prior_mean;
        let mut p_ref = prior_cov;
        let mut log_ev_ref = 0.0;

        let mut filter = FilterState::init(&model, &prior).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let u = random_matrix(&mut rng, n_u, 1, 2.0).column(0).into_owned();
            let y = random_matrix(&mut rng, n_y, 1, 5.0).column(0).into_owned();

            let x_pred = &a * &x_ref + &b * &u;
            let p_pred = &a * &p_ref * a.transpose() + &q_cov;
            let s = &c * &p_pred * c.transpose() + &r_cov;
            let s_inv = s.clone().try_inverse().ok_or("innovation inverse")?;
            let gain = &p_pred * c.transpose() * &s_inv;
            let innovation = &y - &c * &x_pred;
            x_ref = &x_pred + &gain * &innovation;
            let i_kc = eye(n_x) - &gain * &c;
            p_ref = &i_kc * &p_pred * i_kc.transpose() + &gain * &r_cov * gain.transpose();
            log_ev_ref += -0.5
                * ((innovation.transpose() * &s_inv * &innovation)[(0, 0)]
                    + s.determinant().ln()
                    + n_y as f64 * LN_2PI);

            filter = filter.step(&model, &u, &y).map_err(|e| e.to_string())?;
            let mean_gap = rel_gap_vec(filter.estimate().mean(), &x_ref);
            let cov_gap = rel_gap_mat(filter.estimate().covariance().map_err(|e| e.to_string())?, &p_ref);
            let ev_gap = (filter.log_evidence() - log_ev_ref).abs() / (1.0 + log_ev_ref.abs());
            if mean_gap > TOL_KALMAN || cov_gap > TOL_KALMAN || ev_gap > TOL_KALMAN {
                return Err(format!(
                    "instance {case} step {}: mean {mean_gap:.3e}, cov {cov_gap:.3e}, evidence {ev_gap:.3e}",
                    filter.t()
                ));
            }
        }
    }
    Ok(())
}

#[test]
fn criterion_5_filter_matches_textbook_kalman_recursion() {
    report(5, "filter matches textbook Kalman recursion", check_kalman());
}

// ---------------------------------------------------------------------------
// 6. benchmark behavior: cost orderings, control magnitudes, free energy

struct BenchmarkRuns {
    lqg: SimulationTrace,
    eager: SimulationTrace,   // lambda = 1e-4
    middle: SimulationTrace,  // lambda = 0.1
    cautious: SimulationTrace, // lambda = 1
}

fn run_benchmark(seed: u64, noise_on: bool) -> Result<BenchmarkRuns, String> {
    let model = benchmark_model();
    let settings = SimSettings {
        horizon: 10,
        steps: 100,
        seed,
        noise_on,
        x0: DVector::from_column_slice(&[25.0, 25.0]),
    };
    let run = |controller: Controller, fe_goal: GoalPrior| -> Result<SimulationTrace, String> {
        simulate(&model, &controller, &fe_goal, &settings).map_err(|e| e.to_string())
    };
    Ok(BenchmarkRuns {
        lqg: run(Controller::Lqg(unit_goal(1.0)), unit_goal(1.0))?,
        eager: run(Controller::ActInf(unit_goal(1e-4)), unit_goal(1e-4))?,
        middle: run(Controller::ActInf(unit_goal(0.1)), unit_goal(0.1))?,
        cautious: run(Controller::ActInf(unit_goal(1.0)), unit_goal(1.0))?,
    })
}

fn orderings_hold(runs: &BenchmarkRuns, proximity: f64) -> Result<(), String> {
    let (c_lqg, c_eager, c_middle, c_cautious) = (
        runs.lqg.final_cum_cost(),
        runs.eager.final_cum_cost(),
        runs.middle.final_cum_cost(),
        runs.cautious.final_cum_cost(),
    );
    if !(c_eager <= c_middle && c_middle <= c_cautious) {
        return Err(format!("cost ordering violated: 1e-4 {c_eager:.4}, 0.1 {c_middle:.4}, 1 {c_cautious:.4}"));
    }
    let proximity_gap = (c_eager - c_lqg).abs() / c_lqg;
    if proximity_gap > proximity {
        return Err(format!("lambda=1e-4 cost {c_eager:.4} not within {proximity} of LQG {c_lqg:.4}"));
    }
    let fe_cautious = runs.cautious.final_fe_total();
    let fe_middle = runs.middle.final_fe_total();
    if fe_cautious >= fe_middle {
        return Err(format!("terminal free energy: lambda=1 {fe_cautious:.4} not below lambda=0.1 {fe_middle:.4}"));
    }
    Ok(())
}

fn check_benchmark_behavior() -> Result<(), String> {
    let runs = run_benchmark(0, false)?;
    orderings_hold(&runs, TOL_LQG_PROXIMITY)?;
    if runs.lqg.final_cum_cost() > runs.eager.final_cum_cost() + 1e-6 {
        return Err(format!(
            "noise-free LQG cost {:.6} above lambda=1e-4 cost {:.6}",
            runs.lqg.final_cum_cost(),
            runs.eager.final_cum_cost()
        ));
    }
    let u1_lqg = runs.lqg.records[1].u.amax();
    let u1_cautious = runs.cautious.records[1].u.amax();
    if u1_lqg <= u1_cautious {
        return Err(format!("first control: LQG {u1_lqg:.4} not above lambda=1 {u1_cautious:.4}"));
    }

    let mut good_seeds = 0;
    for seed in 0..10 {
        let runs = run_benchmark(seed, true)?;
        if orderings_hold(&runs, TOL_LQG_PROXIMITY_NOISY).is_ok() {
            good_seeds += 1;
        }
    }
    if good_seeds < NOISY_MAJORITY {
        return Err(format!("orderings held on {good_seeds}/10 noisy seeds, need {NOISY_MAJORITY}"));
    }
    Ok(())
}

#[test]
fn criterion_6_benchmark_cost_and_free_energy_orderings() {
    report(6, "benchmark cost and free-energy orderings", check_benchmark_behavior());
}

// ---------------------------------------------------------------------------
// 7. sequential free-energy elimination vs a dense joint integral

fn dense_joint_free_energy(
    estimate: &Gaussian,
    model: &LinearGaussianModel,
    goal: &GoalPrior,
    horizon: usize,
) -> Result<f64, String> {
    let n = model.dims().n_x;
    let dim = n * (horizon + 1);
    let a = model.a();
    let spread = model.b() * goal.lambda_r().try_inverse().ok_or("lambda R inverse")? * model.b().transpose()
        + model.process_noise_cov();
    let s_inv = spread.clone().try_inverse().ok_or("spread inverse")?;
    let lambda_q = goal.lambda_q();

    let mut j = DMatrix::<f64>::zeros(dim, dim);
    let mut h = DVector::<f64>::zeros(dim);
    let mut log_const = 0.0;

    let w_e = estimate.precision().map_err(|e| e.to_string())?;
    let m_e = estimate.mean();
    j.view_mut((0, 0), (n, n)).copy_from(w_e);
    h.rows_mut(0, n).copy_from(&(w_e * m_e));
    log_const += 0.5 * w_e.determinant().ln() - 0.5 * n as f64 * LN_2PI - 0.5 * (m_e.transpose() * w_e * m_e)[(0, 0)];

    for k in 0..horizon {
        let (r0, r1) = (k * n, (k + 1) * n);
        let ata = a.transpose() * &s_inv * a;
        let cross = a.transpose() * &s_inv;
        add_block(&mut j, r0, r0, &ata, 1.0);
        add_block(&mut j, r1, r1, &s_inv, 1.0);
        add_block(&mut j, r0, r1, &cross, -1.0);
        add_block(&mut j, r1, r0, &cross.transpose(), -1.0);
        log_const += -0.5 * spread.determinant().ln() - 0.5 * n as f64 * LN_2PI;
    }
    for k in 0..=horizon {
        add_block(&mut j, k * n, k * n, &lambda_q, 1.0);
        log_const += 0.5 * lambda_q.determinant().ln() - 0.5 * n as f64 * LN_2PI;
    }

    let j_inv = j.clone().try_inverse().ok_or("joint precision inverse")?;
    let log_integral =
        log_const + 0.5 * (h.transpose() * &j_inv * &h)[(0, 0)] + 0.5 * dim as f64 * LN_2PI - 0.5 * j.determinant().ln();
    Ok(-log_integral)
}

fn add_block(target: &mut DMatrix<f64>, row: usize, col: usize, block: &DMatrix<f64>, sign: f64) {
    let n = block.nrows();
    let m = block.ncols();
    target
        .view_mut((row, col), (n, m))
        .iter_mut()
        .zip(block.iter())
        .for_each(|(t, s)| *t += sign * s);
}

fn check_free_energy_oracle() -> Result<(), String> {
    let model = benchmark_model();
    for lambda in [0.1, 1.0] {
        let goal = unit_goal(lambda);
        for (mean, cov_scale) in [([25.0, 25.0], 0.5), ([3.0, -4.0], 1.5)] {
            let estimate = Gaussian::from_mean_cov(DVector::from_column_slice(&mean), eye(2) * cov_scale)
                .map_err(|e| e.to_string())?;
            for horizon in 1..=3 {
                let got = future_free_energy(&estimate, &model, &goal, horizon).map_err(|e| e.to_string())?;
                let want = dense_joint_free_energy(&estimate, &model, &goal, horizon)?;
                let gap = (got - want).abs() / (1.0 + want.abs());
                if gap > TOL_FE_DENSE {
                    return Err(format!(
                        "lambda {lambda}, horizon {horizon}: sequential {got:.10} vs dense {want:.10} (relative {gap:.3e})"
                    ));
                }
            }
        }
    }

    // scalar system against plain midpoint quadrature
    let a = DMatrix::from_element(1, 1, 0.9);
    let b = DMatrix::from_element(1, 1, 0.5);
    let prior = Gaussian::from_mean_precision(DVector::zeros(1), eye(1)).unwrap();
    let model = LinearGaussianModel::new(a, b, eye(1), eye(1), eye(1), prior).map_err(|e| e.to_string())?;
    let goal = GoalPrior::new(eye(1), eye(1), 0.5).map_err(|e| e.to_string())?;
    let estimate = Gaussian::from_mean_cov(DVector::from_element(1, 3.0), eye(1) * 0.4).map_err(|e| e.to_string())?;
    let lq = 0.5;
    let s = 0.5 * 0.5 / 0.5 + 1.0;
    let density = |x: f64, y: f64| {
        let p_e = (-0.5 * (x - 3.0) * (x - 3.0) / 0.4).exp() / (2.0 * std::f64::consts::PI * 0.4).sqrt();
        let g = |z: f64| (lq / (2.0 * std::f64::consts::PI)).sqrt() * (-0.5 * lq * z * z).exp();
        let trans = (-(y - 0.9 * x) * (y - 0.9 * x) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s).sqrt();
        p_e * g(x) * trans * g(y)
    };
    let (lo, hi, steps) = (-12.0f64, 12.0f64, 1600usize);
    let dx = (hi - lo) / steps as f64;
    let mut total = 0.0;
    for i in 0..steps {
        let x = lo + (i as f64 + 0.5) * dx;
        for k in 0..steps {
            let y = lo + (k as f64 + 0.5) * dx;
            total += density(x, y);
        }
    }
    let quadrature = -(total * dx * dx).ln();
    let got = future_free_energy(&estimate, &model, &goal, 1).map_err(|e| e.to_string())?;
    if (got - quadrature).abs() > TOL_FE_QUADRATURE {
        return Err(format!("scalar case: sequential {got:.8} vs quadrature {quadrature:.8}"));
    }
    Ok(())
}

#[test]
fn criterion_7_free_energy_matches_dense_joint_integral() {
    report(7, "free energy matches dense joint integral", check_free_energy_oracle());
}

// ---------------------------------------------------------------------------
// 8. everything the library hands out is symmetric and PSD where it should be

fn hygiene(m: &DMatrix<f64>, what: &str) -> Result<(), String> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(format!("{what}: non-finite entries"));
    }
    check_symmetric(m, "acceptance").map_err(|_| format!("{what}: not symmetric"))?;
    check_psd(m, "acceptance").map_err(|_| format!("{what}: not positive semidefinite"))?;
    Ok(())
}

fn check_hygiene() -> Result<(), String> {
    let model = benchmark_model();
    for lambda in [1e-4, 1.0] {
        let goal = unit_goal(lambda);
        let schedule = actinf_schedule(&model, &goal, 10).map_err(|e| e.to_string())?;
        for (k, p) in schedule.p_seq().iter().enumerate() {
            hygiene(p, &format!("goal-conditioned schedule entry {k} (lambda {lambda})"))?;
        }
        let lqg = lqg_schedule(&model, &goal, 10).map_err(|e| e.to_string())?;
        for (k, p) in lqg.p_seq().iter().enumerate() {
            hygiene(p, &format!("LQG schedule entry {k} (lambda {lambda})"))?;
        }
        let spec = SliceSpec::new(&model, &goal).map_err(|e| e.to_string())?;
        let slice = spec.backward_slice(schedule.p_next()).map_err(|e| e.to_string())?;
        hygiene(&slice.p_prev, "message-passing precision-to-go")?;
        for index in slice.messages.indices() {
            let message = slice.messages.get(index).unwrap();
            if let Ok(w) = message.precision() {
                hygiene(w, &format!("backward message {index} precision"))?;
            }
            if let Ok(v) = message.covariance() {
                hygiene(v, &format!("backward message {index} covariance"))?;
            }
        }
    }

    // a noisy closed-loop run: filter moments stay symmetric PSD throughout
    let goal = unit_goal(1.0);
    let settings = SimSettings {
        horizon: 10,
        steps: 20,
        seed: 3,
        noise_on: true,
        x0: DVector::from_column_slice(&[25.0, 25.0]),
    };
    let trace = simulate(&model, &Controller::ActInf(goal.clone()), &goal, &settings).map_err(|e| e.to_string())?;
    let mut filter = FilterState::init(&model, model.prior()).map_err(|e| e.to_string())?;
    for t in 1..trace.records.len() {
        let y = trace.records[t].y.as_ref().unwrap();
        let u_prev = &trace.records[t - 1].u;
        filter = filter.step(&model, u_prev, y).map_err(|e| e.to_string())?;
        hygiene(
            filter.estimate().covariance().map_err(|e| e.to_string())?,
            &format!("filter covariance at t={t}"),
        )?;
        hygiene(
            filter.estimate().precision().map_err(|e| e.to_string())?,
            &format!("filter precision at t={t}"),
        )?;
        let spec = SliceSpec::new(&model, &goal).map_err(|e| e.to_string())?;
        let schedule = actinf_schedule(&model, &goal, 10).map_err(|e| e.to_string())?;
        let slice = spec.control_slice(filter.estimate(), schedule.p_next()).map_err(|e| e.to_string())?;
        hygiene(
            slice.q_u.precision().map_err(|e| e.to_string())?,
            &format!("control posterior precision at t={t}"),
        )?;
    }
    Ok(())
}

#[test]
fn criterion_8_matrix_hygiene() {
    report(8, "matrix hygiene", check_hygiene());
}
