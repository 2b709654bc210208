//! False-belief test: a drill sits in one of two boxes. The human watches
//! the boxes at the first two steps while they are open, then walks away;
//! the robot may switch the boxes afterwards, unobserved.
//!
//! Only the box-front viewpoint with the boxes open reveals the drill;
//! the swap marks are readable from the robot's station only. The human
//! therefore keeps believing whatever they last saw.

use rand::Rng;

use crate::distributions::BernoulliDist;
use crate::envs::{
    apply_noise, argmax, nearest_spot, one_hot, Agent, Domain, Episode, GroundTruthBelief, Regime,
    StateTrace,
};
use crate::error::Result;
use crate::worldmodel::{ModalitySpec, ObsSchema, Trajectory};

pub const ACTIONS: usize = 2;
pub const ACTION_SWITCH: usize = 0;
pub const ACTION_NOOP: usize = 1;

/// Scripted locations: robot station, box front, away room.
pub const STATION: [f64; 2] = [0.0, -1.0];
pub const BOX_FRONT: [f64; 2] = [0.0, 1.0];
pub const AWAY: [f64; 2] = [1.0, 0.0];
const SPOTS: [[f64; 2]; 3] = [STATION, BOX_FRONT, AWAY];

/// Steps (1-based) during which the human stands at the boxes and the
/// boxes are open.
const HUMAN_WATCH_STEPS: usize = 2;

// Channel layout of the `scene` ego modality.
pub const SCENE_DRILL_LEFT: usize = 0;
pub const SCENE_DRILL_RIGHT: usize = 1;
pub const SCENE_DRILL_VIS: usize = 2;
pub const SCENE_SWITCH_FLAG: usize = 3;
pub const SCENE_SWITCH_VIS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    /// 0 = left, 1 = right (current, after any switches).
    pub drill_side: usize,
    /// Parity of switches applied so far.
    pub switched: bool,
    pub human_at_boxes: bool,
    pub box_open: bool,
    /// 1-based step index.
    pub step: usize,
    pub robot_pose: [f64; 2],
    pub human_pose: [f64; 2],
}

pub fn schema() -> ObsSchema {
    ObsSchema {
        domain: Domain::FalseBelief.name().to_string(),
        ego: vec![
            ModalitySpec::discrete("scene", 5),
            ModalitySpec::new("poses", 4, &[true; 4]),
        ],
        task: vec![
            ModalitySpec::discrete("drill", 2),
            ModalitySpec::new(
                "scene_state",
                6,
                &[false, false, true, true, true, true],
            ),
        ],
        action_dim: ACTIONS,
        pose_dim: 2,
        horizon: 5,
    }
}

fn human_spot(step: usize) -> [f64; 2] {
    if step <= HUMAN_WATCH_STEPS {
        BOX_FRONT
    } else {
        AWAY
    }
}

fn robot_spot(regime: Regime, rng: &mut impl Rng) -> [f64; 2] {
    match regime {
        Regime::Train => {
            let u: f64 = rng.gen();
            if u < 0.5 {
                STATION
            } else if u < 0.8 {
                BOX_FRONT
            } else {
                AWAY
            }
        }
        Regime::Eval | Regime::EvalSilent => STATION,
    }
}

pub fn initial(regime: Regime, rng: &mut impl Rng) -> State {
    State {
        drill_side: usize::from(rng.gen::<bool>()),
        switched: false,
        human_at_boxes: true,
        box_open: true,
        step: 1,
        robot_pose: robot_spot(regime, rng),
        human_pose: human_spot(1),
    }
}

/// Deterministic task transition; the switch is refused while the human is
/// at the boxes. Poses advance by script (human) and regime (robot).
pub fn step(state: &State, action: usize, regime: Regime, rng: &mut impl Rng) -> State {
    assert!(action < ACTIONS, "invalid action id {action}");
    let mut next = *state;
    if action == ACTION_SWITCH && !state.human_at_boxes {
        next.drill_side = 1 - next.drill_side;
        next.switched = !next.switched;
    }
    next.step += 1;
    next.human_at_boxes = next.step <= HUMAN_WATCH_STEPS;
    next.box_open = next.human_at_boxes;
    next.human_pose = human_spot(next.step);
    next.robot_pose = robot_spot(regime, rng);
    next
}

fn pose_at(pose: [f64; 2], spot: [f64; 2]) -> bool {
    nearest_spot(pose, &SPOTS) == nearest_spot(spot, &SPOTS)
}

/// Render ego observations from a pose. Visibility rules: the drill is
/// seen from the box front while the boxes are open; the swap marks are
/// seen from the station.
pub fn render_ego(state: &State, pose: [f64; 2], agent: Agent) -> Vec<Vec<f64>> {
    let sees_drill = pose_at(pose, BOX_FRONT) && state.box_open;
    let sees_marks = pose_at(pose, STATION);
    let mut scene = vec![0.0; 5];
    if sees_drill {
        scene[SCENE_DRILL_LEFT + state.drill_side] = 1.0;
        scene[SCENE_DRILL_VIS] = 1.0;
    }
    if sees_marks {
        scene[SCENE_SWITCH_FLAG] = if state.switched { 1.0 } else { 0.0 };
        scene[SCENE_SWITCH_VIS] = 1.0;
    }
    let other = match agent {
        Agent::Robot => state.human_pose,
        Agent::Human => state.robot_pose,
    };
    let poses = vec![pose[0], pose[1], other[0], other[1]];
    vec![scene, poses]
}

pub fn render_task(state: &State) -> Vec<Vec<f64>> {
    let mut drill = vec![0.0; 2];
    drill[state.drill_side] = 1.0;
    let scene_state = vec![
        if state.switched { 1.0 } else { 0.0 },
        if state.box_open { 1.0 } else { 0.0 },
        state.robot_pose[0],
        state.robot_pose[1],
        state.human_pose[0],
        state.human_pose[1],
    ];
    vec![drill, scene_state]
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
        domain: Domain::FalseBelief,
        traj: Trajectory {
            ego,
            task,
            actions,
            robot_pose,
            human_pose,
        },
        human_obs,
        states: StateTrace::FalseBelief(states),
    }
}

/// Parse a (possibly noisy or decoded) scene vector into a drill sighting.
pub fn sighting_from_scene(scene: &[f64]) -> Option<usize> {
    if scene[SCENE_DRILL_VIS] > 0.5 {
        Some(argmax(&scene[SCENE_DRILL_LEFT..=SCENE_DRILL_RIGHT]))
    } else {
        None
    }
}

/// Drill side label from a task-complete observation.
pub fn side_from_task(task: &[Vec<f64>]) -> usize {
    argmax(&task[0][0..2])
}

/// Drill side label from an ego observation, when the drill is in view.
pub fn side_from_ego(ego: &[Vec<f64>]) -> Option<usize> {
    sighting_from_scene(&ego[0])
}

/// Exact filter over the drill side given the robot's observations and its
/// own actions. A switch the robot commands while the human is away takes
/// effect; sightings pin the side at that moment.
pub fn oracle_robot_belief(
    ego_obs: &[Vec<Vec<f64>>],
    actions: &[Vec<f64>],
) -> Result<GroundTruthBelief> {
    let t = ego_obs.len();
    // Effective switches between step tau and tau+1 (0-based slots).
    let effective: Vec<bool> = (0..t.saturating_sub(1))
        .map(|slot| {
            let attempted = actions
                .get(slot)
                .map(|a| argmax(a) == ACTION_SWITCH)
                .unwrap_or(false);
            // Human watches steps 1..=HUMAN_WATCH_STEPS (1-based = slot+1).
            attempted && (slot + 1) > HUMAN_WATCH_STEPS
        })
        .collect();

    let mut last_sight: Option<(usize, usize)> = None; // (0-based step, side)
    for (tau, obs) in ego_obs.iter().enumerate() {
        if let Some(side) = sighting_from_scene(&obs[0]) {
            last_sight = Some((tau, side));
        }
    }

    match last_sight {
        None => Ok(GroundTruthBelief::Bernoulli(BernoulliDist::new(0.5)?)),
        Some((tau, side)) => {
            let flips = effective[tau..t - 1].iter().filter(|&&e| e).count();
            let current = if flips % 2 == 0 { side } else { 1 - side };
            let p_left = if current == 0 { 1.0 } else { 0.0 };
            Ok(GroundTruthBelief::Bernoulli(BernoulliDist::new(p_left)?))
        }
    }
}

/// Exact filter for the human: switches happen out of sight, so the belief
/// stays at the side last seen.
pub fn oracle_human_belief(human_obs: &[Vec<Vec<f64>>]) -> Result<GroundTruthBelief> {
    let mut last: Option<usize> = None;
    for obs in human_obs {
        if let Some(side) = sighting_from_scene(&obs[0]) {
            last = Some(side);
        }
    }
    let p_left = match last {
        None => 0.5,
        Some(0) => 1.0,
        Some(_) => 0.0,
    };
    Ok(GroundTruthBelief::Bernoulli(BernoulliDist::new(p_left)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::generate_episodes;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_states() -> Vec<State> {
        let mut out = Vec::new();
        for side in 0..2 {
            for switched in [false, true] {
                for at_boxes in [false, true] {
                    out.push(State {
                        drill_side: side,
                        switched,
                        human_at_boxes: at_boxes,
                        box_open: at_boxes,
                        step: if at_boxes { 1 } else { 3 },
                        robot_pose: STATION,
                        human_pose: if at_boxes { BOX_FRONT } else { AWAY },
                    });
                }
            }
        }
        out
    }

    #[test]
    fn noop_sequence_keeps_drill_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = initial(Regime::Eval, &mut rng);
        let side = s.drill_side;
        for _ in 0..4 {
            s = step(&s, ACTION_NOOP, Regime::Eval, &mut rng);
            assert_eq!(s.drill_side, side);
            assert!(!s.switched);
        }
    }

    #[test]
    fn switch_refused_while_human_watches() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = initial(Regime::Eval, &mut rng);
        assert!(s.human_at_boxes);
        let s2 = step(&s, ACTION_SWITCH, Regime::Eval, &mut rng);
        assert_eq!(s2.drill_side, s.drill_side);
        assert!(!s2.switched);
        // Step 2: still watching, still refused.
        let s3 = step(&s2, ACTION_SWITCH, Regime::Eval, &mut rng);
        assert_eq!(s3.drill_side, s.drill_side);
        assert!(!s3.switched);
        // Step 3: human away, the switch lands.
        let s4 = step(&s3, ACTION_SWITCH, Regime::Eval, &mut rng);
        assert_eq!(s4.drill_side, 1 - s.drill_side);
        assert!(s4.switched);
    }

    #[test]
    fn robot_station_view_never_shows_drill() {
        for s in all_states() {
            let x = render_ego(&s, STATION, Agent::Robot);
            assert_eq!(x[0][SCENE_DRILL_LEFT], 0.0);
            assert_eq!(x[0][SCENE_DRILL_RIGHT], 0.0);
            assert_eq!(x[0][SCENE_DRILL_VIS], 0.0);
            // Swap marks are visible from the station.
            assert_eq!(x[0][SCENE_SWITCH_VIS], 1.0);
        }
    }

    #[test]
    fn human_sees_drill_only_at_open_boxes() {
        for s in all_states() {
            let x = render_ego(&s, s.human_pose, Agent::Human);
            let expect = s.human_at_boxes;
            assert_eq!(x[0][SCENE_DRILL_VIS] > 0.5, expect);
            if expect {
                assert_eq!(side_from_ego(&x), Some(s.drill_side));
            }
            // The human never reads the swap marks.
            assert_eq!(x[0][SCENE_SWITCH_VIS], 0.0);
        }
    }

    #[test]
    fn task_render_labels_all_eight_states() {
        for s in all_states() {
            let y = render_task(&s);
            assert_eq!(side_from_task(&y), s.drill_side);
        }
    }

    #[test]
    fn robot_oracle_is_half_without_sighting() {
        // Eval-regime episode: robot at the station throughout.
        let ep = &generate_episodes(Domain::FalseBelief, 1, 5, 9, Regime::Eval)[0];
        for t in 1..=5 {
            let b = oracle_robot_belief(&ep.traj.ego[..t], &ep.traj.actions[..t.saturating_sub(1)])
                .unwrap();
            match b {
                GroundTruthBelief::Bernoulli(p) => assert_eq!(p.p_left, 0.5),
                _ => panic!("expected Bernoulli"),
            }
        }
    }

    #[test]
    fn robot_oracle_tracks_sighting_through_own_switches() {
        // Hand-built history: sighting of "left" at step 1, then an
        // effective switch between steps 3 and 4.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = initial(Regime::Eval, &mut rng);
        s.drill_side = 0;
        let mut ego = vec![render_ego(&s, BOX_FRONT, Agent::Robot)];
        let mut actions = Vec::new();
        let plan = [ACTION_NOOP, ACTION_NOOP, ACTION_SWITCH, ACTION_NOOP];
        for &a in &plan {
            actions.push(one_hot(ACTIONS, a));
            s = step(&s, a, Regime::Eval, &mut rng);
            ego.push(render_ego(&s, STATION, Agent::Robot));
        }
        let b = oracle_robot_belief(&ego, &actions).unwrap();
        match b {
            // Saw left, one later switch: drill now right.
            GroundTruthBelief::Bernoulli(p) => assert_eq!(p.p_left, 0.0),
            _ => panic!("expected Bernoulli"),
        }
    }

    #[test]
    fn human_oracle_keeps_false_belief() {
        // Human saw the drill left, walked away, robot switched.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = initial(Regime::Eval, &mut rng);
        s.drill_side = 0;
        let mut human = vec![render_ego(&s, s.human_pose, Agent::Human)];
        for &a in &[ACTION_NOOP, ACTION_NOOP, ACTION_SWITCH, ACTION_NOOP] {
            s = step(&s, a, Regime::Eval, &mut rng);
            human.push(render_ego(&s, s.human_pose, Agent::Human));
        }
        assert_eq!(s.drill_side, 1, "switch landed");
        let b = oracle_human_belief(&human).unwrap();
        match b {
            GroundTruthBelief::Bernoulli(p) => assert_eq!(p.p_left, 1.0),
            _ => panic!("expected Bernoulli"),
        }
    }

    #[test]
    fn oracle_unchanged_by_uninformative_steps() {
        let ep = &generate_episodes(Domain::FalseBelief, 1, 5, 11, Regime::Eval)[0];
        let b3 = oracle_robot_belief(&ep.traj.ego[..3], &ep.traj.actions[..2]).unwrap();
        // Append a no-op step: posterior unchanged.
        let mut ego = ep.traj.ego[..3].to_vec();
        ego.push(ego[2].clone());
        let mut actions = ep.traj.actions[..2].to_vec();
        actions.push(one_hot(ACTIONS, ACTION_NOOP));
        let b4 = oracle_robot_belief(&ego, &actions).unwrap();
        match (b3, b4) {
            (GroundTruthBelief::Bernoulli(a), GroundTruthBelief::Bernoulli(b)) => {
                assert_eq!(a.p_left, b.p_left)
            }
            _ => panic!("expected Bernoulli"),
        }
    }
}
