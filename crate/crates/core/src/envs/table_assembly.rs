//! Table-assembly task: the robot holds a table whose peg must meet a hole.
//! Only viewers in the front half-plane of the table see the peg-hole
//! offset; the robot grips the table from behind. The scripted human
//! announces the offset quantized to a 5x5 grid whenever they can see it,
//! and a cannot-see token otherwise.

use rand::Rng;

use crate::distributions::DiagGaussian;
use crate::envs::{
    apply_noise, argmax, one_hot, Agent, Domain, Episode, GroundTruthBelief, Regime, StateTrace,
    OBS_NOISE_STD,
};
use crate::error::{Error, Result};
use crate::worldmodel::{ModalitySpec, ObsSchema, Trajectory};

pub const ACTIONS: usize = 5;
pub const ACTION_PLUS_X: usize = 0;
pub const ACTION_MINUS_X: usize = 1;
pub const ACTION_PLUS_Y: usize = 2;
pub const ACTION_MINUS_Y: usize = 3;
pub const ACTION_NOOP: usize = 4;

/// Table move per action.
pub const MOVE_STEP: f64 = 0.1;

/// Grid cells per axis for the communicated offset.
pub const GRID: usize = 5;
/// Message channel count: 25 cells plus a cannot-see token.
pub const MSG_DIM: usize = GRID * GRID + 1;
pub const MSG_CANNOT_SEE: usize = GRID * GRID;

/// Initial offset is uniform on this centered square.
pub const OFFSET_INIT_HALF_WIDTH: f64 = 0.5;

const HUMAN_SPOTS: [[f64; 2]; 4] = [
    [-0.4, 0.7],
    [0.4, 0.7],
    [-0.4, -0.7],
    [0.4, -0.7],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    /// Hole position in the world frame (hidden, fixed per episode).
    pub hole: [f64; 2],
    /// Table position as lattice counts of `MOVE_STEP`.
    pub table_kx: i32,
    pub table_ky: i32,
    pub occluded_for_human: bool,
    /// Latest human message: a grid cell or the cannot-see token.
    pub message: usize,
    pub step: usize,
    pub robot_pose: [f64; 3],
    pub human_pose: [f64; 3],
}

impl State {
    pub fn table_pos(&self) -> [f64; 2] {
        [MOVE_STEP * self.table_kx as f64, MOVE_STEP * self.table_ky as f64]
    }

    /// Current peg-hole offset: hole minus table position.
    pub fn offset(&self) -> [f64; 2] {
        let t = self.table_pos();
        [self.hole[0] - t[0], self.hole[1] - t[1]]
    }
}

pub fn schema() -> ObsSchema {
    ObsSchema {
        domain: Domain::TableAssembly.name().to_string(),
        ego: vec![
            ModalitySpec::new("sight", 3, &[true, true, false]),
            ModalitySpec::discrete("comms", MSG_DIM),
            ModalitySpec::new("spatial", 8, &[true; 8]),
        ],
        task: vec![
            ModalitySpec::new("offset", 2, &[true, true]),
            ModalitySpec::discrete("comms_state", MSG_DIM),
            ModalitySpec::new(
                "agents",
                9,
                &[false, true, true, true, true, true, true, true, true],
            ),
        ],
        action_dim: ACTIONS,
        pose_dim: 3,
        horizon: 10,
    }
}

/// Quantize an offset to its announcement cell (values beyond the grid
/// collapse into the border cells).
pub fn quantize_cell(off: [f64; 2]) -> usize {
    let ix = (((off[0] + 1.0) / 0.4).floor() as i64).clamp(0, GRID as i64 - 1) as usize;
    let iy = (((off[1] + 1.0) / 0.4).floor() as i64).clamp(0, GRID as i64 - 1) as usize;
    ix * GRID + iy
}

/// Axis interval a border-extended grid cell covers, before intersection
/// with the prior.
fn cell_interval(index: usize) -> (f64, f64) {
    let lo = if index == 0 { f64::NEG_INFINITY } else { -1.0 + 0.4 * index as f64 };
    let hi = if index == GRID - 1 { f64::INFINITY } else { -1.0 + 0.4 * (index + 1) as f64 };
    (lo, hi)
}

fn heading_towards(p: [f64; 2], target: [f64; 2]) -> f64 {
    (target[1] - p[1]).atan2(target[0] - p[0]) / std::f64::consts::PI
}

/// A pose sees the offset iff it is in front of the table.
pub fn sees_offset(pose: [f64; 2], table: [f64; 2]) -> bool {
    pose[1] > table[1]
}

fn robot_pose(table: [f64; 2], regime: Regime, rng: &mut impl Rng) -> [f64; 3] {
    let local = match regime {
        Regime::Train => {
            let u: f64 = rng.gen();
            if u < 0.5 {
                [0.0, -0.4]
            } else if u < 0.75 {
                [-0.3, 0.4]
            } else {
                [0.3, 0.4]
            }
        }
        Regime::Eval | Regime::EvalSilent => [0.0, -0.4],
    };
    let p = [table[0] + local[0], table[1] + local[1]];
    [p[0], p[1], heading_towards(p, table)]
}

fn human_pose(table: [f64; 2], regime: Regime, rng: &mut impl Rng) -> [f64; 3] {
    let spot = match regime {
        Regime::Train | Regime::Eval => {
            let u: f64 = rng.gen();
            if u < 0.3 {
                HUMAN_SPOTS[0]
            } else if u < 0.6 {
                HUMAN_SPOTS[1]
            } else if u < 0.8 {
                HUMAN_SPOTS[2]
            } else {
                HUMAN_SPOTS[3]
            }
        }
        // Probe regime: the human never reaches a viewpoint, so every
        // message is the cannot-see token.
        Regime::EvalSilent => {
            if rng.gen::<f64>() < 0.5 {
                HUMAN_SPOTS[2]
            } else {
                HUMAN_SPOTS[3]
            }
        }
    };
    [spot[0], spot[1], heading_towards(spot, table)]
}

fn refresh_communication(state: &mut State) {
    let table = state.table_pos();
    state.occluded_for_human = !sees_offset([state.human_pose[0], state.human_pose[1]], table);
    state.message = if state.occluded_for_human {
        MSG_CANNOT_SEE
    } else {
        quantize_cell(state.offset())
    };
}

pub fn initial(regime: Regime, rng: &mut impl Rng) -> State {
    let hole = [
        rng.gen_range(-OFFSET_INIT_HALF_WIDTH..OFFSET_INIT_HALF_WIDTH),
        rng.gen_range(-OFFSET_INIT_HALF_WIDTH..OFFSET_INIT_HALF_WIDTH),
    ];
    let mut s = State {
        hole,
        table_kx: 0,
        table_ky: 0,
        occluded_for_human: false,
        message: MSG_CANNOT_SEE,
        step: 1,
        robot_pose: [0.0; 3],
        human_pose: [0.0; 3],
    };
    s.robot_pose = robot_pose(s.table_pos(), regime, rng);
    s.human_pose = human_pose(s.table_pos(), regime, rng);
    refresh_communication(&mut s);
    s
}

/// Deterministic kinematics: a move shifts the table one lattice step,
/// which changes the offset by exactly the opposite amount.
pub fn step(state: &State, action: usize, regime: Regime, rng: &mut impl Rng) -> State {
    assert!(action < ACTIONS, "invalid action id {action}");
    let mut next = *state;
    match action {
        ACTION_PLUS_X => next.table_kx += 1,
        ACTION_MINUS_X => next.table_kx -= 1,
        ACTION_PLUS_Y => next.table_ky += 1,
        ACTION_MINUS_Y => next.table_ky -= 1,
        _ => {}
    }
    next.step += 1;
    next.robot_pose = robot_pose(next.table_pos(), regime, rng);
    next.human_pose = human_pose(next.table_pos(), regime, rng);
    refresh_communication(&mut next);
    next
}

pub fn render_ego(state: &State, pose: [f64; 3], agent: Agent) -> Vec<Vec<f64>> {
    let table = state.table_pos();
    let visible = sees_offset([pose[0], pose[1]], table);
    let off = state.offset();
    let sight = if visible {
        vec![off[0], off[1], 0.0]
    } else {
        vec![0.0, 0.0, 1.0]
    };
    let comms = one_hot(MSG_DIM, state.message);
    let other = match agent {
        Agent::Robot => state.human_pose,
        Agent::Human => state.robot_pose,
    };
    let spatial = vec![
        pose[0], pose[1], pose[2], other[0], other[1], other[2], table[0], table[1],
    ];
    vec![sight, comms, spatial]
}

pub fn render_task(state: &State) -> Vec<Vec<f64>> {
    let off = state.offset();
    let table = state.table_pos();
    let comms = one_hot(MSG_DIM, state.message);
    let agents = vec![
        if state.occluded_for_human { 1.0 } else { 0.0 },
        state.robot_pose[0],
        state.robot_pose[1],
        state.robot_pose[2],
        state.human_pose[0],
        state.human_pose[1],
        state.human_pose[2],
        table[0],
        table[1],
    ];
    vec![vec![off[0], off[1]], comms, agents]
}

pub fn generate_episode(horizon: usize, regime: Regime, rng: &mut impl Rng) -> Episode {
    assert!(horizon >= 1);
    let sch = schema();
    let ego_masks = sch.ego_masks();
    let task_masks = sch.task_masks();

    let mut state = initial(regime, rng);
    let mut states = Vec::with_capacity(horizon);
    let mut ego = Vec::with_capacity(horizon);
    let mut task = Vec::with_capacity(horizon);
    let mut human_obs = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon.saturating_sub(1));
    let mut robot_pose = Vec::with_capacity(horizon);
    let mut human_pose = Vec::with_capacity(horizon);

    for t in 1..=horizon {
        let mut x = render_ego(&state, state.robot_pose, Agent::Robot);
        apply_noise(&mut x, &ego_masks, rng);
        let mut y = render_task(&state);
        apply_noise(&mut y, &task_masks, rng);
        let mut xh = render_ego(&state, state.human_pose, Agent::Human);
        apply_noise(&mut xh, &ego_masks, rng);

        ego.push(x);
        task.push(y);
        human_obs.push(xh);
        robot_pose.push(state.robot_pose.to_vec());
        human_pose.push(state.human_pose.to_vec());
        states.push(state);

        if t < horizon {
            let action = rng.gen_range(0..ACTIONS);
            actions.push(one_hot(ACTIONS, action));
            state = step(&state, action, regime, rng);
        }
    }

    Episode {
        domain: Domain::TableAssembly,
        traj: Trajectory {
            ego,
            task,
            actions,
            robot_pose,
            human_pose,
        },
        human_obs,
        states: StateTrace::TableAssembly(states),
    }
}

/// Offset label from a task-complete observation.
pub fn offset_from_task(task: &[Vec<f64>]) -> [f64; 2] {
    [task[0][0], task[0][1]]
}

/// Offset reading from an ego observation, when in view.
pub fn offset_from_ego(ego: &[Vec<f64>]) -> Option<[f64; 2]> {
    if ego[0][2] < 0.5 {
        Some([ego[0][0], ego[0][1]])
    } else {
        None
    }
}

/// Table position read from the spatial channels, rounded back onto the
/// move lattice so observation noise cancels exactly.
fn table_from_spatial(spatial: &[f64]) -> [f64; 2] {
    [
        (spatial[6] / MOVE_STEP).round() * MOVE_STEP,
        (spatial[7] / MOVE_STEP).round() * MOVE_STEP,
    ]
}

fn message_from_comms(comms: &[f64]) -> usize {
    argmax(comms)
}

struct AxisBelief {
    lo: f64,
    hi: f64,
    /// Precision-weighted direct measurements (sum, count).
    meas_sum: f64,
    meas_count: usize,
}

/// Shared exact filter over the offset, in initial-offset coordinates.
///
/// `use_messages` distinguishes the two agents: the robot learns from the
/// announced cells; the human announced them and learns nothing new.
fn offset_filter(
    obs: &[Vec<Vec<f64>>],
    use_messages: bool,
) -> Result<GroundTruthBelief> {
    let t = obs.len();
    let table0 = table_from_spatial(&obs[0][2]);
    let mut axes = [
        AxisBelief { lo: -OFFSET_INIT_HALF_WIDTH, hi: OFFSET_INIT_HALF_WIDTH, meas_sum: 0.0, meas_count: 0 },
        AxisBelief { lo: -OFFSET_INIT_HALF_WIDTH, hi: OFFSET_INIT_HALF_WIDTH, meas_sum: 0.0, meas_count: 0 },
    ];

    let mut shift_last = [0.0; 2];
    for (tau, o) in obs.iter().enumerate() {
        let table = table_from_spatial(&o[2]);
        // Cumulative table shift since the first step: offset_tau =
        // offset_1 - shift.
        let shift = [table[0] - table0[0], table[1] - table0[1]];
        if tau == t - 1 {
            shift_last = shift;
        }

        if let Some(meas) = offset_from_ego(o) {
            for a in 0..2 {
                axes[a].meas_sum += meas[a] + shift[a];
                axes[a].meas_count += 1;
            }
        }

        if use_messages {
            let msg = message_from_comms(&o[1]);
            if msg != MSG_CANNOT_SEE {
                let (cx, cy) = (msg / GRID, msg % GRID);
                for (a, cell) in [(0usize, cx), (1usize, cy)] {
                    let (lo, hi) = cell_interval(cell);
                    axes[a].lo = axes[a].lo.max(lo + shift[a]);
                    axes[a].hi = axes[a].hi.min(hi + shift[a]);
                }
            }
        }
    }

    let mut mean = [0.0; 2];
    let mut var = [0.0; 2];
    for a in 0..2 {
        let ax = &axes[a];
        if ax.meas_count > 0 {
            // Direct sightings dominate: Gaussian measurement average.
            mean[a] = ax.meas_sum / ax.meas_count as f64;
            var[a] = OBS_NOISE_STD * OBS_NOISE_STD / ax.meas_count as f64;
        } else {
            if ax.lo > ax.hi {
                return Err(Error::config(
                    "inconsistent history: announced cells have empty intersection",
                ));
            }
            // Uniform over the interval, moment-matched.
            mean[a] = 0.5 * (ax.lo + ax.hi);
            var[a] = ((ax.hi - ax.lo).powi(2) / 12.0).max(1e-6);
        }
        mean[a] -= shift_last[a];
    }

    Ok(GroundTruthBelief::Gaussian(DiagGaussian::new(
        mean.to_vec(),
        vec![var[0].ln(), var[1].ln()],
    )))
}

/// Exact robot posterior: prior box, announced cells and any direct
/// sightings, all shifted by the observed table motion.
pub fn oracle_robot_belief(ego_obs: &[Vec<Vec<f64>>]) -> Result<GroundTruthBelief> {
    offset_filter(ego_obs, true)
}

/// Exact human posterior: direct sightings when unoccluded, otherwise the
/// prior; the human's own announcements carry no information for them.
pub fn oracle_human_belief(human_obs: &[Vec<Vec<f64>>]) -> Result<GroundTruthBelief> {
    offset_filter(human_obs, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn move_changes_offset_by_exactly_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = initial(Regime::Eval, &mut rng);
        let before = s.offset();
        let s2 = step(&s, ACTION_PLUS_X, Regime::Eval, &mut rng);
        let after = s2.offset();
        assert!((before[0] - after[0] - MOVE_STEP).abs() < 1e-12);
        assert!((before[1] - after[1]).abs() < 1e-12);
    }

    #[test]
    fn offset_recovery_from_clean_task_render() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let s = initial(Regime::Train, &mut rng);
            let y = render_task(&s);
            let got = offset_from_task(&y);
            let want = s.offset();
            assert!((got[0] - want[0]).abs() < 1e-9);
            assert!((got[1] - want[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn occlusion_is_a_function_of_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = initial(Regime::Eval, &mut rng);
        let table = s.table_pos();
        assert_eq!(
            s.occluded_for_human,
            s.human_pose[1] <= table[1],
            "front half-plane rule"
        );
    }

    #[test]
    fn occluded_human_view_has_zeroed_offset_and_indicator() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = initial(Regime::Eval, &mut rng);
        s.human_pose = [0.0, -0.7, 0.5];
        refresh_communication(&mut s);
        let xh = render_ego(&s, s.human_pose, Agent::Human);
        assert_eq!(xh[0], vec![0.0, 0.0, 1.0]);
        assert_eq!(s.message, MSG_CANNOT_SEE);
    }

    #[test]
    fn robot_never_sees_offset_in_eval_regime() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = initial(Regime::Eval, &mut rng);
        for _ in 0..9 {
            let x = render_ego(&s, s.robot_pose, Agent::Robot);
            assert_eq!(x[0][2], 1.0, "occluded indicator set");
            s = step(&s, rng.gen_range(0..ACTIONS), Regime::Eval, &mut rng);
        }
    }

    #[test]
    fn quantizer_covers_the_plane() {
        assert_eq!(quantize_cell([-2.0, -2.0]), 0);
        assert_eq!(quantize_cell([2.0, 2.0]), GRID * GRID - 1);
        assert_eq!(quantize_cell([0.0, 0.0]), 2 * GRID + 2);
    }

    #[test]
    fn human_oracle_is_prior_when_occluded_throughout() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ep = crate::envs::generate_episodes(
            Domain::TableAssembly,
            1,
            10,
            99,
            Regime::EvalSilent,
        );
        let _ = rng.gen::<f64>();
        let b = oracle_human_belief(&ep[0].human_obs).unwrap();
        let g = b.as_gaussian().unwrap();
        // Prior variance of U(-0.5, 0.5) is 1/12.
        for lv in &g.log_var {
            assert!((lv.exp() - 1.0 / 12.0).abs() < 1e-9);
        }
    }

    #[test]
    fn human_oracle_tracks_a_sighting_through_table_moves() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Step 1: human in front (sees offset). Steps 2..: occluded.
        let mut s = initial(Regime::Eval, &mut rng);
        s.human_pose = [0.4, 0.7, 0.0];
        refresh_communication(&mut s);
        let mut human = vec![render_ego(&s, s.human_pose, Agent::Human)];
        let off1 = s.offset();

        let mut s2 = step(&s, ACTION_PLUS_X, Regime::Eval, &mut rng);
        s2.human_pose = [0.0, -0.7, 0.0];
        refresh_communication(&mut s2);
        human.push(render_ego(&s2, s2.human_pose, Agent::Human));

        let b = oracle_human_belief(&human).unwrap();
        let g = b.as_gaussian().unwrap();
        // The human saw offset at step 1 and watched the table move +x.
        assert!((g.mean[0] - (off1[0] - MOVE_STEP)).abs() < 1e-9);
        assert!((g.mean[1] - off1[1]).abs() < 1e-9);
        assert!(g.log_var[0].exp() <= OBS_NOISE_STD * OBS_NOISE_STD + 1e-12);
    }

    #[test]
    fn robot_oracle_narrows_with_messages() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // Build an eval episode by hand where the human announces a cell.
        let mut s = initial(Regime::Eval, &mut rng);
        s.human_pose = [0.4, 0.7, 0.0];
        refresh_communication(&mut s);
        assert!(!s.occluded_for_human);
        let x = render_ego(&s, s.robot_pose, Agent::Robot);

        let b0 = oracle_robot_belief(&x_slice(&x)[..]).unwrap();
        let g0 = b0.as_gaussian().unwrap();
        // With one message the variance must be below the prior's 1/12.
        assert!(g0.log_var[0].exp() < 1.0 / 12.0 + 1e-12);

        // And the truth lies inside two standard deviations.
        let off = s.offset();
        for a in 0..2 {
            let sd = (0.5 * g0.log_var[a]).exp();
            assert!((off[a] - g0.mean[a]).abs() <= 2.0 * sd + 0.2);
        }
    }

    fn x_slice(x: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
        vec![x.to_vec()]
    }
}
