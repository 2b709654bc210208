//! Fetch-tool task: a randomly chosen object (3 colors x 2 types) shows on
//! the human's screen. The robot cannot see the screen from its side of the
//! workstation and queries the human, whose truthful replies carry one of
//! three ambiguity levels: color only, type only, or both.

use rand::Rng;

use crate::distributions::CategoricalDist;
use crate::envs::{
    apply_noise, argmax, nearest_spot, one_hot, Agent, Domain, Episode, GroundTruthBelief, Regime,
    StateTrace,
};
use crate::error::{Error, Result};
use crate::worldmodel::{ModalitySpec, ObsSchema, Trajectory};

pub const ACTIONS: usize = 4;
pub const ACTION_QUERY_COLOR: usize = 0;
pub const ACTION_QUERY_TYPE: usize = 1;
pub const ACTION_QUERY_BOTH: usize = 2;
pub const ACTION_NOOP: usize = 3;

pub const NUM_OBJECTS: usize = 6;
pub const NUM_COLORS: usize = 3;
pub const NUM_TYPES: usize = 2;
pub const COLOR_NAMES: [&str; 3] = ["brown", "white", "gray"];
pub const TYPE_NAMES: [&str; 2] = ["table", "cabinet"];

pub const ROBOT_SIDE: [f64; 2] = [-1.0, 0.0];
pub const SCREEN_SIDE: [f64; 2] = [1.0, 0.0];
const SPOTS: [[f64; 2]; 2] = [ROBOT_SIDE, SCREEN_SIDE];

/// Kind slot layout inside the comms channels.
pub const MSG_NONE: usize = 0;
pub const MSG_COLOR: usize = 1;
pub const MSG_TYPE: usize = 2;
pub const MSG_BOTH: usize = 3;

pub fn color_of(object: usize) -> usize {
    object / NUM_TYPES
}

pub fn type_of(object: usize) -> usize {
    object % NUM_TYPES
}

/// One communicated message at a given ambiguity level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Message {
    None,
    Color(usize),
    Type(usize),
    Both(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub object: usize,
    /// Latest message (persists in the observation channels).
    pub message: Message,
    /// Everything communicated so far.
    pub messages_so_far: Vec<Message>,
    pub step: usize,
    pub robot_pose: [f64; 2],
    pub human_pose: [f64; 2],
}

pub fn schema() -> ObsSchema {
    let mut comms_mask = vec![false; 13];
    for m in comms_mask.iter_mut().skip(9) {
        *m = true; // own/other pose channels
    }
    ObsSchema {
        domain: Domain::FetchTool.name().to_string(),
        ego: vec![
            ModalitySpec::discrete("screen", 7),
            ModalitySpec::new("comms", 13, &comms_mask),
        ],
        task: vec![
            ModalitySpec::discrete("object", 6),
            ModalitySpec::new("comms_state", 13, &comms_mask),
        ],
        action_dim: ACTIONS,
        pose_dim: 2,
        horizon: 5,
    }
}

fn robot_spot(regime: Regime, rng: &mut impl Rng) -> [f64; 2] {
    match regime {
        Regime::Train => {
            if rng.gen::<f64>() < 0.7 {
                ROBOT_SIDE
            } else {
                SCREEN_SIDE
            }
        }
        Regime::Eval | Regime::EvalSilent => ROBOT_SIDE,
    }
}

pub fn initial(regime: Regime, rng: &mut impl Rng) -> State {
    State {
        object: rng.gen_range(0..NUM_OBJECTS),
        message: Message::None,
        messages_so_far: Vec::new(),
        step: 1,
        robot_pose: robot_spot(regime, rng),
        human_pose: SCREEN_SIDE,
    }
}

/// The scripted human answers the robot's query truthfully at the queried
/// ambiguity level; the reply lands in the next step's observations.
pub fn step(state: &State, action: usize, regime: Regime, rng: &mut impl Rng) -> State {
    assert!(action < ACTIONS, "invalid action id {action}");
    let mut next = state.clone();
    let reply = match action {
        ACTION_QUERY_COLOR => Some(Message::Color(color_of(state.object))),
        ACTION_QUERY_TYPE => Some(Message::Type(type_of(state.object))),
        ACTION_QUERY_BOTH => Some(Message::Both(color_of(state.object), type_of(state.object))),
        _ => None,
    };
    if let Some(msg) = reply {
        next.message = msg;
        next.messages_so_far.push(msg);
    }
    next.step += 1;
    next.robot_pose = robot_spot(regime, rng);
    next
}

fn message_channels(msg: Message) -> Vec<f64> {
    let mut v = vec![0.0; 9];
    match msg {
        Message::None => v[MSG_NONE] = 1.0,
        Message::Color(c) => {
            v[MSG_COLOR] = 1.0;
            v[4 + c] = 1.0;
        }
        Message::Type(t) => {
            v[MSG_TYPE] = 1.0;
            v[7 + t] = 1.0;
        }
        Message::Both(c, t) => {
            v[MSG_BOTH] = 1.0;
            v[4 + c] = 1.0;
            v[7 + t] = 1.0;
        }
    }
    v
}

/// Render ego observations: the screen contents are visible from the
/// screen side only; messages are heard by everyone.
pub fn render_ego(state: &State, pose: [f64; 2], agent: Agent) -> Vec<Vec<f64>> {
    let sees_screen = nearest_spot(pose, &SPOTS) == 1;
    let mut screen = vec![0.0; 7];
    if sees_screen {
        screen[state.object] = 1.0;
        screen[6] = 1.0;
    }
    let mut comms = message_channels(state.message);
    let other = match agent {
        Agent::Robot => state.human_pose,
        Agent::Human => state.robot_pose,
    };
    comms.extend_from_slice(&[pose[0], pose[1], other[0], other[1]]);
    vec![screen, comms]
}

pub fn render_task(state: &State) -> Vec<Vec<f64>> {
    let object = one_hot(NUM_OBJECTS, state.object);
    let mut comms = message_channels(state.message);
    comms.extend_from_slice(&[
        state.robot_pose[0],
        state.robot_pose[1],
        state.human_pose[0],
        state.human_pose[1],
    ]);
    vec![object, comms]
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
        states.push(state.clone());

        if t < horizon {
            let action = if regime == Regime::EvalSilent {
                ACTION_NOOP
            } else {
                rng.gen_range(0..ACTIONS)
            };
            actions.push(one_hot(ACTIONS, action));
            state = step(&state, action, regime, rng);
        }
    }

    Episode {
        domain: Domain::FetchTool,
        traj: Trajectory {
            ego,
            task,
            actions,
            robot_pose,
            human_pose,
        },
        human_obs,
        states: StateTrace::FetchTool(states),
    }
}

/// Parse the message in a (possibly decoded) comms vector.
pub fn message_from_comms(comms: &[f64]) -> Message {
    match argmax(&comms[0..4]) {
        MSG_COLOR => Message::Color(argmax(&comms[4..7])),
        MSG_TYPE => Message::Type(argmax(&comms[7..9])),
        MSG_BOTH => Message::Both(argmax(&comms[4..7]), argmax(&comms[7..9])),
        _ => Message::None,
    }
}

/// Object sighting from an ego observation (screen in view).
pub fn object_from_ego(ego: &[Vec<f64>]) -> Option<usize> {
    if ego[0][6] > 0.5 {
        Some(argmax(&ego[0][0..6]))
    } else {
        None
    }
}

/// Object label from an ego observation regardless of the visibility bit.
pub fn object_label_from_ego(ego: &[Vec<f64>]) -> usize {
    argmax(&ego[0][0..6])
}

/// Object label from a task-complete observation.
pub fn object_from_task(task: &[Vec<f64>]) -> usize {
    argmax(&task[0][0..NUM_OBJECTS])
}

fn consistent(object: usize, msg: Message) -> bool {
    match msg {
        Message::None => true,
        Message::Color(c) => color_of(object) == c,
        Message::Type(t) => type_of(object) == t,
        Message::Both(c, t) => color_of(object) == c && type_of(object) == t,
    }
}

/// Exact posterior over the object given the robot's history: uniform over
/// the objects consistent with every message heard, collapsed by a direct
/// sighting if one occurred.
pub fn oracle_robot_belief(ego_obs: &[Vec<Vec<f64>>]) -> Result<GroundTruthBelief> {
    let mut sighted: Option<usize> = None;
    let mut allowed = [true; NUM_OBJECTS];
    for obs in ego_obs {
        if let Some(o) = object_from_ego(obs) {
            sighted = Some(o);
        }
        let msg = message_from_comms(&obs[1]);
        for (o, ok) in allowed.iter_mut().enumerate() {
            if !consistent(o, msg) {
                *ok = false;
            }
        }
    }
    if let Some(o) = sighted {
        return Ok(GroundTruthBelief::Categorical(CategoricalDist::delta(NUM_OBJECTS, o)));
    }
    let n = allowed.iter().filter(|&&a| a).count();
    if n == 0 {
        return Err(Error::config("inconsistent history: messages rule out every object"));
    }
    let probs = allowed
        .iter()
        .map(|&a| if a { 1.0 / n as f64 } else { 0.0 })
        .collect();
    Ok(GroundTruthBelief::Categorical(CategoricalDist::new(probs)?))
}

/// The human watches the screen, so their belief is a point mass on the
/// last object they saw; messages constrain the rest (for synthesized
/// histories without a sighting).
pub fn oracle_human_belief(human_obs: &[Vec<Vec<f64>>]) -> Result<GroundTruthBelief> {
    let mut sighted: Option<usize> = None;
    let mut allowed = [true; NUM_OBJECTS];
    for obs in human_obs {
        if let Some(o) = object_from_ego(obs) {
            sighted = Some(o);
        }
        let msg = message_from_comms(&obs[1]);
        for (o, ok) in allowed.iter_mut().enumerate() {
            if !consistent(o, msg) {
                *ok = false;
            }
        }
    }
    if let Some(o) = sighted {
        return Ok(GroundTruthBelief::Categorical(CategoricalDist::delta(NUM_OBJECTS, o)));
    }
    let n = allowed.iter().filter(|&&a| a).count();
    if n == 0 {
        return Err(Error::config("inconsistent history: messages rule out every object"));
    }
    let probs = allowed
        .iter()
        .map(|&a| if a { 1.0 / n as f64 } else { 0.0 })
        .collect();
    Ok(GroundTruthBelief::Categorical(CategoricalDist::new(probs)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn truthful_reply_arrives_next_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = initial(Regime::Eval, &mut rng);
        s.object = 0; // brown table
        let s2 = step(&s, ACTION_QUERY_COLOR, Regime::Eval, &mut rng);
        assert_eq!(s2.message, Message::Color(0));
        let x = render_ego(&s2, s2.robot_pose, Agent::Robot);
        assert_eq!(message_from_comms(&x[1]), Message::Color(0));
    }

    #[test]
    fn human_one_hot_round_trips_all_objects() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for o in 0..NUM_OBJECTS {
            let mut s = initial(Regime::Eval, &mut rng);
            s.object = o;
            let xh = render_ego(&s, s.human_pose, Agent::Human);
            assert_eq!(object_from_ego(&xh), Some(o));
            let y = render_task(&s);
            assert_eq!(object_from_task(&y), o);
        }
    }

    #[test]
    fn robot_side_screen_channels_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = initial(Regime::Eval, &mut rng);
        let x = render_ego(&s, ROBOT_SIDE, Agent::Robot);
        assert!(x[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_uniform_then_shrinks_on_color() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = initial(Regime::Eval, &mut rng);
        s.object = 1; // brown cabinet
        let x1 = render_ego(&s, ROBOT_SIDE, Agent::Robot);
        let b = oracle_robot_belief(&[x1.clone()]).unwrap();
        let c = b.as_categorical().unwrap();
        assert_eq!(c.probs, vec![1.0 / 6.0; 6]);

        let s2 = step(&s, ACTION_QUERY_COLOR, Regime::Eval, &mut rng);
        let x2 = render_ego(&s2, ROBOT_SIDE, Agent::Robot);
        let b2 = oracle_robot_belief(&[x1, x2]).unwrap();
        let c2 = b2.as_categorical().unwrap();
        // Brown objects are ids 0 and 1.
        assert_eq!(c2.probs[0], 0.5);
        assert_eq!(c2.probs[1], 0.5);
        assert!(c2.probs[2..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn oracle_delta_after_both_message() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = initial(Regime::Eval, &mut rng);
        s.object = 4; // gray table
        let s2 = step(&s, ACTION_QUERY_BOTH, Regime::Eval, &mut rng);
        let hist = vec![
            render_ego(&s, ROBOT_SIDE, Agent::Robot),
            render_ego(&s2, ROBOT_SIDE, Agent::Robot),
        ];
        let b = oracle_robot_belief(&hist).unwrap().as_categorical().unwrap();
        assert_eq!(b.probs[4], 1.0);
    }

    #[test]
    fn human_oracle_is_always_delta_on_true_object() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for o in 0..NUM_OBJECTS {
            let mut s = initial(Regime::Eval, &mut rng);
            s.object = o;
            let xh = render_ego(&s, s.human_pose, Agent::Human);
            let b = oracle_human_belief(&[xh]).unwrap().as_categorical().unwrap();
            assert_eq!(b.probs[o], 1.0);
        }
    }

    #[test]
    fn inconsistent_messages_error() {
        // color(brown) followed by color(white) can never happen truthfully.
        let mut c1 = message_channels(Message::Color(0));
        c1.extend_from_slice(&[0.0; 4]);
        let mut c2 = message_channels(Message::Color(1));
        c2.extend_from_slice(&[0.0; 4]);
        let h1 = vec![vec![0.0; 7], c1];
        let h2 = vec![vec![0.0; 7], c2];
        assert!(oracle_robot_belief(&[h1, h2]).is_err());
    }
}
