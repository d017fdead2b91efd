use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use grex_core::dataset::io::{
    image_path, refs_file_name, AnnotationEntry, ImageInfo, InstanceFile, InstanceIndex, RefEntry, INSTANCES_FILE,
};
use grex_core::dataset::{write_dataset, AnnId, DatasetFiles, ImageId, InstanceRecord, Split};
use grex_core::geometry::RleMask;
use grex_core::DatasetError;
use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::AnnotateError;
use crate::store::EventLog;
use crate::task::{AnnotationTask, TaskId, TaskState};

/// Images and pre-segmented instances the game draws from, plus existing
/// expressions usable as no-target suggestions.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub images: BTreeMap<ImageId, ImageInfo>,
    pub instances: BTreeMap<AnnId, InstanceRecord>,
    pub by_image: BTreeMap<ImageId, Vec<AnnId>>,
    pub expressions: Vec<PoolEntry>,
    /// Directory holding `images/<id>.png`, when the catalog came from disk.
    pub root: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PoolEntry {
    pub split: Split,
    pub image_id: ImageId,
    pub expression: String,
}

impl Catalog {
    pub fn from_instances(file: &InstanceFile) -> Result<Self, AnnotateError> {
        let index = InstanceIndex::from_file(file, "catalog")?;
        let mut cat = Catalog {
            images: index.images.into_iter().collect(),
            ..Default::default()
        };
        for id in cat.images.keys() {
            cat.by_image.insert(*id, Vec::new());
        }
        for (ann_id, (record, _)) in index.instances {
            cat.by_image.entry(record.image_id).or_default().push(ann_id);
            cat.instances.insert(ann_id, record);
        }
        for ids in cat.by_image.values_mut() {
            ids.sort_unstable();
        }
        Ok(cat)
    }

    /// `instances.json` under `root`, plus every `refs_<split>.json` present
    /// as the suggestion pool.
    pub fn load(root: &Path) -> Result<Self, AnnotateError> {
        let path = root.join(INSTANCES_FILE);
        let text = fs::read_to_string(&path).map_err(|e| AnnotateError::io(&path, e))?;
        let file: InstanceFile = serde_json::from_str(&text)
            .map_err(|e| DatasetError::Schema { location: path.display().to_string(), message: e.to_string() })?;
        let mut cat = Self::from_instances(&file)?;
        for split in Split::ALL {
            let refs_path = root.join(refs_file_name(split));
            if !refs_path.exists() {
                continue;
            }
            let text = fs::read_to_string(&refs_path).map_err(|e| AnnotateError::io(&refs_path, e))?;
            let refs: Vec<RefEntry> = serde_json::from_str(&text)
                .map_err(|e| DatasetError::Schema { location: refs_path.display().to_string(), message: e.to_string() })?;
            cat.expressions.extend(refs.into_iter().map(|r| PoolEntry {
                split: r.split,
                image_id: r.image_id,
                expression: r.sentence,
            }));
        }
        cat.root = Some(root.to_path_buf());
        Ok(cat)
    }

    pub fn instance_view(&self, ann_id: AnnId) -> InstanceView {
        let r = &self.instances[&ann_id];
        InstanceView {
            ann_id,
            category: r.category.clone(),
            bbox: r.bbox.to_xywh(),
            segmentation: r.mask.clone(),
        }
    }
}

/// One accepted mutation. The log is a sequence of these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Event {
    CreateTasks {
        image_ids: Vec<ImageId>,
        split: Split,
    },
    SubmitAnnotation {
        task_id: TaskId,
        annotator: String,
        selection: BTreeSet<AnnId>,
        expression: String,
    },
    SubmitValidation {
        task_id: TaskId,
        validator: String,
        selection: BTreeSet<AnnId>,
    },
    Reject {
        task_id: TaskId,
        validator: String,
        reason: String,
    },
    /// Fresh task on the image of a discarded one.
    Requeue { task_id: TaskId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Created(Vec<TaskId>),
    State(TaskState),
}

/// All tasks. Pure state: every change goes through [`Board::apply`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Board {
    pub tasks: BTreeMap<TaskId, AnnotationTask>,
    pub next_task_id: TaskId,
}

impl Board {
    fn task_mut(&mut self, task_id: TaskId) -> Result<&mut AnnotationTask, AnnotateError> {
        self.tasks.get_mut(&task_id).ok_or(AnnotateError::UnknownTask(task_id))
    }

    fn push_task(&mut self, catalog: &Catalog, image_id: ImageId, split: Split) -> TaskId {
        let id = self.next_task_id.max(1);
        self.next_task_id = id + 1;
        let candidates = catalog.by_image.get(&image_id).cloned().unwrap_or_default();
        self.tasks.insert(id, AnnotationTask::new(id, image_id, split, candidates));
        id
    }

    /// Validate and apply; on error nothing changes.
    pub fn apply(&mut self, catalog: &Catalog, event: &Event) -> Result<Outcome, AnnotateError> {
        match event {
            Event::CreateTasks { image_ids, split } => {
                if let Some(&bad) = image_ids.iter().find(|id| !catalog.images.contains_key(id)) {
                    return Err(AnnotateError::UnknownImage(bad));
                }
                let ids = image_ids.iter().map(|&img| self.push_task(catalog, img, *split)).collect();
                Ok(Outcome::Created(ids))
            }
            Event::SubmitAnnotation {
                task_id,
                annotator,
                selection,
                expression,
            } => self
                .task_mut(*task_id)?
                .submit_annotation(annotator, selection.clone(), expression)
                .map(Outcome::State),
            Event::SubmitValidation {
                task_id,
                validator,
                selection,
            } => self
                .task_mut(*task_id)?
                .submit_validation(validator, selection.clone())
                .map(Outcome::State),
            Event::Reject {
                task_id,
                validator,
                reason,
            } => self.task_mut(*task_id)?.reject(validator, reason).map(Outcome::State),
            Event::Requeue { task_id } => {
                let old = self.tasks.get(task_id).ok_or(AnnotateError::UnknownTask(*task_id))?;
                if old.state != TaskState::Discarded {
                    return Err(AnnotateError::WrongState {
                        task_id: *task_id,
                        state: old.state,
                        operation: "requeue",
                    });
                }
                let (image_id, split) = (old.image_id, old.split);
                let id = self.push_task(catalog, image_id, split);
                self.tasks.get_mut(&id).expect("just inserted").replaces = Some(*task_id);
                Ok(Outcome::Created(vec![id]))
            }
        }
    }

    pub fn count_by_state(&self) -> BTreeMap<TaskState, usize> {
        let mut m: BTreeMap<TaskState, usize> = TaskState::ALL.iter().map(|s| (*s, 0)).collect();
        for t in self.tasks.values() {
            *m.get_mut(&t.state).expect("all states listed") += 1;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceView {
    pub ann_id: AnnId,
    pub category: String,
    /// `[x, y, w, h]`
    pub bbox: [f64; 4],
    pub segmentation: RleMask,
}

/// What the annotator sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationView {
    pub task_id: TaskId,
    pub image_id: ImageId,
    pub split: Split,
    /// `[height, width]`
    pub image_size: [usize; 2],
    pub state: TaskState,
    pub instances: Vec<InstanceView>,
}

/// What a validator sees. Has no field for the annotator's selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationView {
    pub task_id: TaskId,
    pub image_id: ImageId,
    pub image_size: [usize; 2],
    pub expression: String,
    pub second_check: bool,
    pub instances: Vec<InstanceView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoTargetSuggestion {
    pub expression: String,
    pub source_image_id: ImageId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub records: usize,
    pub images: usize,
    pub per_split: BTreeMap<Split, usize>,
}

/// Catalog + board, optionally backed by an on-disk log.
pub struct Project {
    pub catalog: Catalog,
    board: Board,
    log: Option<EventLog>,
}

pub const LOG_DIR: &str = "annotation";

impl Project {
    pub fn in_memory(catalog: Catalog) -> Self {
        Self {
            catalog,
            board: Board::default(),
            log: None,
        }
    }

    /// Open a project directory holding `instances.json` (and optionally
    /// `images/` and `refs_<split>.json`). State is recovered from
    /// `annotation/`.
    pub fn open(dir: &Path) -> Result<Self, AnnotateError> {
        let catalog = Catalog::load(dir)?;
        let (log, board) = EventLog::open(&dir.join(LOG_DIR), &catalog)?;
        Ok(Self {
            catalog,
            board,
            log: Some(log),
        })
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn task(&self, task_id: TaskId) -> Result<&AnnotationTask, AnnotateError> {
        self.board.tasks.get(&task_id).ok_or(AnnotateError::UnknownTask(task_id))
    }

    fn commit(&mut self, event: Event) -> Result<Outcome, AnnotateError> {
        let touched = match &event {
            Event::SubmitAnnotation { task_id, .. }
            | Event::SubmitValidation { task_id, .. }
            | Event::Reject { task_id, .. } => self.board.tasks.get(task_id).cloned(),
            Event::CreateTasks { .. } | Event::Requeue { .. } => None,
        };
        let next_id = self.board.next_task_id;
        let out = self.board.apply(&self.catalog, &event)?;
        if let Some(log) = &mut self.log {
            if let Err(e) = log.append(&event, &self.board) {
                // not durable, so not applied
                self.board.tasks.retain(|id, _| *id < next_id.max(1));
                self.board.next_task_id = next_id;
                if let Some(t) = touched {
                    self.board.tasks.insert(t.task_id, t);
                }
                return Err(e);
            }
        }
        Ok(out)
    }

    fn state_of(out: Outcome) -> TaskState {
        match out {
            Outcome::State(s) => s,
            Outcome::Created(_) => unreachable!("task operations report a state"),
        }
    }

    fn created(out: Outcome) -> Vec<TaskId> {
        match out {
            Outcome::Created(ids) => ids,
            Outcome::State(_) => unreachable!("creation reports ids"),
        }
    }

    pub fn create_tasks(&mut self, image_ids: &[ImageId], split: Split) -> Result<Vec<TaskId>, AnnotateError> {
        self.commit(Event::CreateTasks {
            image_ids: image_ids.to_vec(),
            split,
        })
        .map(Self::created)
    }

    pub fn submit_annotation(
        &mut self,
        task_id: TaskId,
        annotator: &str,
        selection: BTreeSet<AnnId>,
        expression: &str,
    ) -> Result<TaskState, AnnotateError> {
        self.commit(Event::SubmitAnnotation {
            task_id,
            annotator: annotator.to_string(),
            selection,
            expression: expression.trim().to_string(),
        })
        .map(Self::state_of)
    }

    pub fn submit_validation(
        &mut self,
        task_id: TaskId,
        validator: &str,
        selection: BTreeSet<AnnId>,
    ) -> Result<TaskState, AnnotateError> {
        self.commit(Event::SubmitValidation {
            task_id,
            validator: validator.to_string(),
            selection,
        })
        .map(Self::state_of)
    }

    pub fn reject(&mut self, task_id: TaskId, validator: &str, reason: &str) -> Result<TaskState, AnnotateError> {
        self.commit(Event::Reject {
            task_id,
            validator: validator.to_string(),
            reason: reason.trim().to_string(),
        })
        .map(Self::state_of)
    }

    /// New PENDING_ANNOTATION task for the image of a DISCARDED one.
    pub fn requeue(&mut self, task_id: TaskId) -> Result<TaskId, AnnotateError> {
        self.commit(Event::Requeue { task_id }).map(|o| Self::created(o)[0])
    }

    fn instances_of(&self, task: &AnnotationTask) -> Vec<InstanceView> {
        task.candidate_instances.iter().map(|&id| self.catalog.instance_view(id)).collect()
    }

    fn image_size(&self, image_id: ImageId) -> [usize; 2] {
        let info = &self.catalog.images[&image_id];
        [info.height, info.width]
    }

    pub fn annotation_view(&self, task_id: TaskId) -> Result<AnnotationView, AnnotateError> {
        let t = self.task(task_id)?;
        Ok(AnnotationView {
            task_id,
            image_id: t.image_id,
            split: t.split,
            image_size: self.image_size(t.image_id),
            state: t.state,
            instances: self.instances_of(t),
        })
    }

    /// Oldest task waiting for an annotator.
    pub fn next_annotation(&self) -> Option<AnnotationView> {
        let t = self.board.tasks.values().find(|t| t.state == TaskState::PendingAnnotation)?;
        self.annotation_view(t.task_id).ok()
    }

    /// Oldest task `validator` may still judge, served blind.
    pub fn next_validation(&self, validator: &str) -> Option<ValidationView> {
        if validator.trim().is_empty() {
            return None;
        }
        let t = self
            .board
            .tasks
            .values()
            .find(|t| t.state.is_validation() && t.eligible_validator(validator))?;
        Some(ValidationView {
            task_id: t.task_id,
            image_id: t.image_id,
            image_size: self.image_size(t.image_id),
            expression: t.expression.clone(),
            second_check: t.state == TaskState::SecondCheck,
            instances: self.instances_of(t),
        })
    }

    /// Up to `k` expressions written for other images of the task's split,
    /// drawn without replacement; deterministic in `seed`.
    pub fn suggest_no_target(&self, task_id: TaskId, k: usize, seed: u64) -> Result<Vec<NoTargetSuggestion>, AnnotateError> {
        let task = self.task(task_id)?;
        let annotated = self.board.tasks.values().filter(|t| {
            !t.expression.is_empty() && t.state != TaskState::Rejected && t.state != TaskState::Discarded
        });
        let pool: BTreeSet<(String, ImageId)> = self
            .catalog
            .expressions
            .iter()
            .map(|e| (e.split, e.image_id, e.expression.clone()))
            .chain(annotated.map(|t| (t.split, t.image_id, t.expression.clone())))
            .filter(|(split, img, _)| *split == task.split && *img != task.image_id)
            .map(|(_, img, e)| (e, img))
            .collect();
        if pool.is_empty() {
            return Err(AnnotateError::EmptyPool {
                split: task.split.to_string(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = pool.into_iter().choose_multiple(&mut rng, k);
        picked.sort();
        Ok(picked
            .into_iter()
            .map(|(expression, source_image_id)| NoTargetSuggestion {
                expression,
                source_image_id,
            })
            .collect())
    }

    /// gRefCOCO-style files for the VALID tasks, one reference per task
    /// (`ref_id` = task id). Images are copied when the catalog has them.
    pub fn export_files(&self) -> DatasetFiles {
        let valid: Vec<&AnnotationTask> = self.board.tasks.values().filter(|t| t.state == TaskState::Valid).collect();
        let image_ids: BTreeSet<ImageId> = valid.iter().map(|t| t.image_id).collect();
        let mut files = DatasetFiles::default();
        for id in &image_ids {
            files.instances.images.push(self.catalog.images[id].clone());
            let anns: Vec<AnnotationEntry> = self.catalog.by_image[id]
                .iter()
                .map(|a| self.catalog.instances[a].to_entry())
                .collect();
            files.instances.annotations.extend(anns);
        }
        for t in valid {
            files.refs.entry(t.split).or_default().push(RefEntry {
                ref_id: t.task_id,
                image_id: t.image_id,
                split: t.split,
                sentence: t.expression.clone(),
                ann_ids: t.annotator_selection.iter().copied().collect(),
                mask: None,
            });
        }
        files
    }

    pub fn export(&self, dir: &Path) -> Result<ExportSummary, AnnotateError> {
        let files = self.export_files();
        write_dataset(dir, &files)?;
        if let Some(root) = &self.catalog.root {
            for img in &files.instances.images {
                let src = image_path(root, img.id);
                if src.exists() {
                    let dst = image_path(dir, img.id);
                    let parent = dst.parent().expect("image path has a parent");
                    fs::create_dir_all(parent).map_err(|e| AnnotateError::io(parent, e))?;
                    fs::copy(&src, &dst).map_err(|e| AnnotateError::io(&dst, e))?;
                }
            }
        }
        Ok(ExportSummary {
            records: files.refs.values().map(Vec::len).sum(),
            images: files.instances.images.len(),
            per_split: files.refs.iter().map(|(s, r)| (*s, r.len())).collect(),
        })
    }
}
