//! The two-player annotation game, driven directly: an annotator picks
//! instances and writes an expression, a validator repeats the pick blind,
//! and agreed tasks are exported as a dataset.
//!
//!     cargo run -p grex --example annotation_game

use std::collections::BTreeSet;

use grex::annotate::Project;
use grex::core::dataset::{generate_synthetic, load_dataset, Split, SyntheticConfig};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic(&SyntheticConfig::default().with_quota(Split::Train, 4, 3, 2), 1)
        .unwrap()
        .write(dir.path())
        .unwrap();
    let mut project = Project::open(dir.path()).unwrap();
    let images: Vec<u64> = project.catalog.images.keys().copied().take(3).collect();
    let tasks = project.create_tasks(&images, Split::Train).unwrap();

    for (i, &task) in tasks.iter().enumerate() {
        let view = project.annotation_view(task).unwrap();
        let ids: Vec<u64> = view.instances.iter().map(|inst| inst.ann_id).collect();
        // task 0: one object, task 1: two objects, task 2: a no-target expression
        let (pick, text): (BTreeSet<u64>, &str) = match i {
            0 => (ids.iter().take(1).copied().collect(), "the first shape"),
            1 => (ids.iter().take(2).copied().collect(), "the two shapes on the top"),
            _ => (BTreeSet::new(), "the purple star"),
        };
        println!("task {task}: {} candidates, annotator picks {pick:?}: {text:?}", ids.len());
        project.submit_annotation(task, "alice", pick.clone(), text).unwrap();

        let blind = project.next_validation("bob").unwrap();
        println!("  bob sees {:?} with {} instances", blind.expression, blind.instances.len());
        // bob disagrees once, forcing a second check by a third player
        let guess = if i == 1 { pick.iter().take(1).copied().collect() } else { pick.clone() };
        let state = project.submit_validation(task, "bob", guess).unwrap();
        println!("  after bob: {state:?}");
        if project.next_validation("carol").is_some_and(|v| v.task_id == task) {
            let state = project.submit_validation(task, "carol", pick).unwrap();
            println!("  after carol: {state:?}");
        }
    }

    println!("board: {:?}", project.board().count_by_state());
    let out = dir.path().join("export");
    let summary = project.export(&out).unwrap();
    println!("exported {summary:?}");
    for s in load_dataset(&out, Split::Train).unwrap() {
        println!("  ref {} {:?} -> {:?}", s.ref_id, s.expression, s.target_ids);
    }
}
