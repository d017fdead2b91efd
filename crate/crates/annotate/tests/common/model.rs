//! Reference model of the annotation game, written independently of the
//! crate, plus a generator of random operation sequences.

use std::collections::{BTreeMap, BTreeSet};

use grex_annotate::{AnnotateError, Project, TaskState};
use grex_core::dataset::Split;
use proptest::prelude::*;

pub const PLAYERS: [&str; 5] = ["", "ann", "v1", "v2", "v3"];
pub const EXPRESSIONS: [&str; 4] = ["", "   ", "the left square", "two squares"];
pub const UNKNOWN_IMAGE: u64 = 99;
pub const BOGUS_INSTANCE: u64 = 77;

#[derive(Debug, Clone)]
pub enum Op {
    Create { images: Vec<u64>, split: Split },
    Annotate { task: u64, player: usize, pick: Vec<u8>, bogus: bool, expression: usize },
    /// `pick: None` copies the annotator's selection.
    Validate { task: u64, player: usize, pick: Option<Vec<u8>>, bogus: bool },
    Reject { task: u64, player: usize },
    Requeue { task: u64 },
}

pub fn op() -> impl Strategy<Value = Op> {
    // mostly the first few tasks, so sequences go deep
    let task = prop_oneof![3 => 1u64..4, 1 => 0u64..12];
    let player = proptest::sample::select(vec![0usize, 1, 1, 2, 2, 3, 3, 4, 4]);
    let pick = proptest::collection::vec(any::<u8>(), 0..4);
    let bogus = proptest::bool::weighted(0.05);
    prop_oneof![
        2 => (
            proptest::collection::vec(proptest::sample::select(vec![1u64, 2, 3, 4, 4, 3, UNKNOWN_IMAGE]), 0..4),
            proptest::sample::select(Split::ALL.to_vec()),
        )
            .prop_map(|(images, split)| Op::Create { images, split }),
        4 => (task.clone(), player.clone(), pick.clone(), bogus.clone(), proptest::sample::select(vec![0usize, 1, 2, 2, 2, 3, 3, 3])).prop_map(
            |(task, player, pick, bogus, expression)| Op::Annotate { task, player, pick, bogus, expression }
        ),
        5 => (task.clone(), player.clone(), proptest::option::weighted(0.6, pick), bogus)
            .prop_map(|(task, player, pick, bogus)| Op::Validate { task, player, pick, bogus }),
        1 => (task.clone(), player).prop_map(|(task, player)| Op::Reject { task, player }),
        2 => task.prop_map(|task| Op::Requeue { task }),
    ]
}

pub fn ops(max_len: usize) -> impl Strategy<Value = Vec<Op>> {
    proptest::collection::vec(op(), 1..max_len)
}

/// Fixture image `i` has instances `10 i + k` for `k < i - 1`.
pub fn candidates(image: u64) -> Option<Vec<u64>> {
    (1..=4).contains(&image).then(|| (0..image - 1).map(|k| 10 * image + k).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MTask {
    pub image: u64,
    pub split: Split,
    pub state: TaskState,
    pub annotator: Option<String>,
    pub selection: BTreeSet<u64>,
    pub expression: String,
    pub tried: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Out {
    Created(Vec<u64>),
    State(TaskState),
}

#[derive(Debug, Default, Clone)]
pub struct Model {
    pub tasks: BTreeMap<u64, MTask>,
    pub next: u64,
}

/// An operation with every choice made concrete.
#[derive(Debug, Clone)]
pub enum Concrete {
    Create(Vec<u64>, Split),
    Annotate(u64, String, BTreeSet<u64>, String),
    Validate(u64, String, BTreeSet<u64>),
    Reject(u64, String),
    Requeue(u64),
}

impl Model {
    fn selection(&self, task: u64, pick: &[u8], bogus: bool) -> BTreeSet<u64> {
        let cands = self.tasks.get(&task).and_then(|t| candidates(t.image)).unwrap_or_default();
        let mut s: BTreeSet<u64> = if cands.is_empty() {
            BTreeSet::new()
        } else {
            pick.iter().map(|&p| cands[p as usize % cands.len()]).collect()
        };
        if bogus {
            s.insert(BOGUS_INSTANCE);
        }
        s
    }

    pub fn concretize(&self, op: &Op) -> Concrete {
        match op {
            Op::Create { images, split } => Concrete::Create(images.clone(), *split),
            Op::Annotate { task, player, pick, bogus, expression } => Concrete::Annotate(
                *task,
                PLAYERS[*player].to_string(),
                self.selection(*task, pick, *bogus),
                EXPRESSIONS[*expression].to_string(),
            ),
            Op::Validate { task, player, pick, bogus } => {
                let mut sel = match pick {
                    Some(p) => self.selection(*task, p, false),
                    None => self.tasks.get(task).map(|t| t.selection.clone()).unwrap_or_default(),
                };
                if *bogus {
                    sel.insert(BOGUS_INSTANCE);
                }
                Concrete::Validate(*task, PLAYERS[*player].to_string(), sel)
            }
            Op::Reject { task, player } => Concrete::Reject(*task, PLAYERS[*player].to_string()),
            Op::Requeue { task } => Concrete::Requeue(*task),
        }
    }

    fn new_task(&mut self, image: u64, split: Split) -> u64 {
        self.next += 1;
        self.tasks.insert(
            self.next,
            MTask {
                image,
                split,
                state: TaskState::PendingAnnotation,
                annotator: None,
                selection: BTreeSet::new(),
                expression: String::new(),
                tried: Vec::new(),
            },
        );
        self.next
    }

    fn may_judge(t: &MTask, player: &str) -> Result<(), &'static str> {
        if player.trim().is_empty() {
            return Err("empty_player");
        }
        if t.annotator.as_deref() == Some(player) || t.tried.iter().any(|p| p == player) {
            return Err("not_eligible");
        }
        Ok(())
    }

    fn known(t: &MTask, sel: &BTreeSet<u64>) -> Result<(), &'static str> {
        let cands = candidates(t.image).unwrap_or_default();
        if sel.iter().all(|s| cands.contains(s)) {
            Ok(())
        } else {
            Err("unknown_instance")
        }
    }

    pub fn step(&mut self, op: &Concrete) -> Result<Out, &'static str> {
        let mut next = self.clone();
        let out = next.step_inner(op)?;
        *self = next;
        Ok(out)
    }

    fn step_inner(&mut self, op: &Concrete) -> Result<Out, &'static str> {
        match op {
            Concrete::Create(images, split) => {
                if images.iter().any(|i| candidates(*i).is_none()) {
                    return Err("unknown_image");
                }
                Ok(Out::Created(images.iter().map(|i| self.new_task(*i, *split)).collect()))
            }
            Concrete::Annotate(id, player, sel, expr) => {
                let t = self.tasks.get_mut(id).ok_or("unknown_task")?;
                if t.state != TaskState::PendingAnnotation {
                    return Err("wrong_state");
                }
                if expr.trim().is_empty() {
                    return Err("empty_expression");
                }
                if player.trim().is_empty() {
                    return Err("empty_player");
                }
                Self::known(t, sel)?;
                t.annotator = Some(player.clone());
                t.selection = sel.clone();
                t.expression = expr.trim().to_string();
                t.state = TaskState::PendingValidation;
                Ok(Out::State(t.state))
            }
            Concrete::Validate(id, player, sel) => {
                let t = self.tasks.get_mut(id).ok_or("unknown_task")?;
                let second = match t.state {
                    TaskState::PendingValidation => false,
                    TaskState::SecondCheck => true,
                    _ => return Err("wrong_state"),
                };
                Self::may_judge(t, player)?;
                Self::known(t, sel)?;
                t.tried.push(player.clone());
                t.state = if *sel == t.selection {
                    TaskState::Valid
                } else if second {
                    TaskState::Discarded
                } else {
                    TaskState::SecondCheck
                };
                Ok(Out::State(t.state))
            }
            Concrete::Reject(id, player) => {
                let t = self.tasks.get_mut(id).ok_or("unknown_task")?;
                if !matches!(t.state, TaskState::PendingValidation | TaskState::SecondCheck) {
                    return Err("wrong_state");
                }
                Self::may_judge(t, player)?;
                t.state = TaskState::Rejected;
                Ok(Out::State(t.state))
            }
            Concrete::Requeue(id) => {
                let t = self.tasks.get(id).ok_or("unknown_task")?;
                if t.state != TaskState::Discarded {
                    return Err("wrong_state");
                }
                let (image, split) = (t.image, t.split);
                Ok(Out::Created(vec![self.new_task(image, split)]))
            }
        }
    }
}

pub fn run(project: &mut Project, op: &Concrete) -> Result<Out, AnnotateError> {
    match op {
        Concrete::Create(images, split) => project.create_tasks(images, *split).map(Out::Created),
        Concrete::Annotate(id, p, sel, e) => project.submit_annotation(*id, p, sel.clone(), e).map(Out::State),
        Concrete::Validate(id, p, sel) => project.submit_validation(*id, p, sel.clone()).map(Out::State),
        Concrete::Reject(id, p) => project.reject(*id, p, "not a real expression").map(Out::State),
        Concrete::Requeue(id) => project.requeue(*id).map(|t| Out::Created(vec![t])),
    }
}

/// Drive `project` and the model in lockstep, checking every step.
pub fn check_sequence(project: &mut Project, ops: &[Op]) -> Result<Model, String> {
    let mut model = Model::default();
    for (i, op) in ops.iter().enumerate() {
        let concrete = model.concretize(op);
        let before = project.board().clone();
        let want = model.step(&concrete);
        let got = run(project, &concrete);
        match (&want, &got) {
            (Ok(w), Ok(g)) if w == g => {}
            (Err(w), Err(g)) if *w == g.code() => {}
            _ => return Err(format!("step {i} {concrete:?}: model {want:?}, service {got:?}")),
        }
        let after = project.board();
        for (id, old) in &before.tasks {
            let new = &after.tasks[id];
            if old.state != new.state && !old.state.can_move_to(new.state) {
                return Err(format!("step {i}: illegal transition {} -> {} on task {id}", old.state, new.state));
            }
            if old.state.is_terminal() && old != new {
                return Err(format!("step {i}: terminal task {id} changed"));
            }
        }
        for (id, t) in &after.tasks {
            let m = model.tasks.get(id).ok_or(format!("step {i}: task {id} unknown to the model"))?;
            if t.state != m.state || t.expression != m.expression || t.annotator_selection != m.selection {
                return Err(format!("step {i}: task {id} diverged: {t:?} vs {m:?}"));
            }
            if t.validation_attempts.len() > 2 {
                return Err(format!("step {i}: task {id} has {} attempts", t.validation_attempts.len()));
            }
        }
        if after.tasks.len() != model.tasks.len() {
            return Err(format!("step {i}: task count {} vs {}", after.tasks.len(), model.tasks.len()));
        }
        for player in PLAYERS {
            if let Some(view) = project.next_validation(player) {
                let json = serde_json::to_value(&view).unwrap();
                let keys: BTreeSet<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
                let allowed: BTreeSet<&str> =
                    ["task_id", "image_id", "image_size", "expression", "second_check", "instances"].into();
                if keys != allowed {
                    return Err(format!("step {i}: validation view leaks fields {keys:?}"));
                }
                let t = &model.tasks[&view.task_id];
                if Model::may_judge(t, player).is_err() {
                    return Err(format!("step {i}: {player:?} was offered task {} it may not judge", view.task_id));
                }
            }
        }
    }
    Ok(model)
}
