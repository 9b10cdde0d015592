use relwalk::desk::{Ba2MotifDesk, InfectionDesk, Recipe};

#[test]
fn ba2motif_desk_reaches_accuracy_floor() {
    let desk = Ba2MotifDesk::train(0).unwrap();
    let acc = desk.report.test_accuracy.unwrap();
    assert!(acc >= Recipe::ba2motif().min_accuracy, "test accuracy {acc}");
    assert!(!desk.correct_test().unwrap().is_empty());
    assert!(desk.model().readout().head.is_none());
}

#[test]
fn infection_desk_reaches_accuracy_floor() {
    let desk = InfectionDesk::train(0).unwrap();
    let acc = desk.report.test_accuracy.unwrap();
    assert!(acc >= Recipe::infection().min_accuracy, "test accuracy {acc}");
    let targets = desk.explained_targets().unwrap();
    assert!(targets.iter().all(|&(s, _)| s >= desk.n_train));
    assert!(!targets.is_empty());
}
