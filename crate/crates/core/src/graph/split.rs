use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{Graph, SplitMasks};
use crate::error::{Error, Result};
use crate::rng;

/// Partition of the class ids into folds that rotate through the roles of
/// test-new and validation-new classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassFoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub num_classes: usize,
}

impl ClassFoldPlan {
    /// Seeded shuffle of the classes dealt into `num_folds` groups whose
    /// sizes differ by at most one. Every group must get two classes.
    pub fn new(num_classes: usize, num_folds: usize, seed: u64) -> Result<Self> {
        if num_folds < 2 {
            return Err(Error::contract("need at least two class folds"));
        }
        if num_classes < 2 * num_folds {
            return Err(Error::contract(format!(
                "{num_classes} classes cannot fill {num_folds} folds with two classes each"
            )));
        }
        let mut classes: Vec<usize> = (0..num_classes).collect();
        classes.shuffle(&mut rng::seeded(seed));
        let base = num_classes / num_folds;
        let extra = num_classes % num_folds;
        let mut folds = Vec::with_capacity(num_folds);
        let mut it = classes.into_iter();
        // the larger folds go last, matching e.g. sizes 2, 2, 3
        for f in 0..num_folds {
            let size = base + usize::from(f >= num_folds - extra);
            let mut fold: Vec<usize> = it.by_ref().take(size).collect();
            fold.sort_unstable();
            folds.push(fold);
        }
        Ok(Self { folds, num_classes })
    }

    pub fn num_folds(&self) -> usize {
        self.folds.len()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        self.folds.iter().map(Vec::len).collect()
    }
}

/// `round(1 / r)` folds; infeasible when a fold would get fewer than two
/// classes.
pub fn make_class_folds(num_classes: usize, r: f64, seed: u64) -> Result<ClassFoldPlan> {
    if !(r > 0.0 && r <= 0.5) {
        return Err(Error::contract(format!("new-class ratio {r} outside (0, 0.5]")));
    }
    let folds = libm::round(1.0 / r) as usize;
    ClassFoldPlan::new(num_classes, folds, seed)
}

/// Largest usable fold count for ratio `r`: `round(1/r)` capped so that each
/// fold keeps two classes (7 classes at r = 0.2 give 3 folds).
pub fn max_feasible_folds(num_classes: usize, r: f64) -> usize {
    let wanted = libm::round(1.0 / r.max(1e-9)) as usize;
    wanted.min(num_classes / 2)
}

/// Class roles and the labeled/unlabeled node partition for one fold pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenWorldSplit {
    pub num_classes: usize,
    pub known_classes: Vec<usize>,
    pub validation_new_classes: Vec<usize>,
    pub test_new_classes: Vec<usize>,
    /// Train-mask nodes whose class is known.
    pub labeled: Vec<usize>,
    /// Every other node.
    pub unlabeled: Vec<usize>,
    pub validation_nodes: Vec<usize>,
    pub test_nodes: Vec<usize>,
    role: Vec<ClassRole>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClassRole {
    Known,
    ValidationNew,
    TestNew,
}

pub fn open_world_split(
    graph: &Graph,
    masks: &SplitMasks,
    plan: &ClassFoldPlan,
    test_fold: usize,
    val_fold: usize,
) -> Result<OpenWorldSplit> {
    let k = plan.num_folds();
    if test_fold >= k || val_fold >= k {
        return Err(Error::contract(format!(
            "fold index out of range ({test_fold}, {val_fold}) for {k} folds"
        )));
    }
    if test_fold == val_fold {
        return Err(Error::contract("test and validation folds must differ"));
    }
    if plan.num_classes != graph.num_classes() {
        return Err(Error::contract("fold plan and graph disagree on the class count"));
    }
    let mut role = vec![ClassRole::Known; graph.num_classes()];
    for &c in &plan.folds[test_fold] {
        role[c] = ClassRole::TestNew;
    }
    for &c in &plan.folds[val_fold] {
        role[c] = ClassRole::ValidationNew;
    }
    OpenWorldSplit::from_roles(graph, masks, role)
}

impl OpenWorldSplit {
    fn from_roles(graph: &Graph, masks: &SplitMasks, role: Vec<ClassRole>) -> Result<Self> {
        if masks.len() != graph.num_nodes() {
            return Err(Error::contract("masks and graph disagree on the node count"));
        }
        let pick = |r: ClassRole| -> Vec<usize> {
            (0..role.len()).filter(|&c| role[c] == r).collect()
        };
        let labels = graph.labels();
        let (labeled, unlabeled): (Vec<usize>, Vec<usize>) = (0..graph.num_nodes())
            .partition(|&v| masks.train[v] && role[labels[v]] == ClassRole::Known);
        Ok(Self {
            num_classes: graph.num_classes(),
            known_classes: pick(ClassRole::Known),
            validation_new_classes: pick(ClassRole::ValidationNew),
            test_new_classes: pick(ClassRole::TestNew),
            labeled,
            unlabeled,
            validation_nodes: masks.validation_nodes(),
            test_nodes: masks.test_nodes(),
            role,
        })
    }

    /// Explicit roles: `known` and `validation_new` classes, every other
    /// class test-new.
    pub fn with_roles(graph: &Graph, masks: &SplitMasks, known: &[usize], validation_new: &[usize]) -> Result<Self> {
        let mut role = vec![ClassRole::TestNew; graph.num_classes()];
        let tagged = known
            .iter()
            .map(|&c| (c, ClassRole::Known))
            .chain(validation_new.iter().map(|&c| (c, ClassRole::ValidationNew)));
        for (c, r) in tagged {
            if c >= role.len() {
                return Err(Error::contract(format!("class {c} out of range")));
            }
            role[c] = r;
        }
        Self::from_roles(graph, masks, role)
    }

    /// Every class known: plain semi-supervised node classification.
    pub fn all_known(graph: &Graph, masks: &SplitMasks) -> Result<Self> {
        Self::from_roles(graph, masks, vec![ClassRole::Known; graph.num_classes()])
    }

    pub fn is_known(&self, class: usize) -> bool {
        self.role[class] == ClassRole::Known
    }

    pub fn is_test_new(&self, class: usize) -> bool {
        self.role[class] == ClassRole::TestNew
    }

    pub fn is_validation_new(&self, class: usize) -> bool {
        self.role[class] == ClassRole::ValidationNew
    }

    /// Number of classes without labels (validation-new, test-new and any
    /// class outside both role sets is impossible by construction).
    pub fn num_new_classes(&self) -> usize {
        self.num_classes - self.known_classes.len()
    }

    /// Test nodes of known and test-new classes.
    pub fn test_eval_nodes(&self, labels: &[usize]) -> Vec<usize> {
        self.test_nodes
            .iter()
            .copied()
            .filter(|&v| !self.is_validation_new(labels[v]))
            .collect()
    }

    pub fn test_known_nodes(&self, labels: &[usize]) -> Vec<usize> {
        self.test_nodes.iter().copied().filter(|&v| self.is_known(labels[v])).collect()
    }

    pub fn test_new_nodes(&self, labels: &[usize]) -> Vec<usize> {
        self.test_nodes.iter().copied().filter(|&v| self.is_test_new(labels[v])).collect()
    }

    /// Validation nodes of known and validation-new classes; test classes
    /// stay untouched during model selection.
    pub fn validation_eval_nodes(&self, labels: &[usize]) -> Vec<usize> {
        self.validation_nodes
            .iter()
            .copied()
            .filter(|&v| !self.is_test_new(labels[v]))
            .collect()
    }

    pub fn validation_known_nodes(&self, labels: &[usize]) -> Vec<usize> {
        self.validation_nodes
            .iter()
            .copied()
            .filter(|&v| self.is_known(labels[v]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseMatrix;

    #[test]
    fn seven_classes_three_folds() {
        assert!(make_class_folds(7, 0.2, 1).is_err());
        assert_eq!(max_feasible_folds(7, 0.2), 3);
        let plan = ClassFoldPlan::new(7, 3, 1).unwrap();
        assert_eq!(plan.fold_sizes(), [2, 2, 3]);
    }

    #[test]
    fn ten_classes_five_folds() {
        let plan = make_class_folds(10, 0.2, 3).unwrap();
        assert_eq!(plan.fold_sizes(), [2; 5]);
        let mut all: Vec<usize> = plan.folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn plans_are_deterministic() {
        assert_eq!(ClassFoldPlan::new(9, 3, 42).unwrap(), ClassFoldPlan::new(9, 3, 42).unwrap());
    }

    #[test]
    fn roles_and_partition() {
        // 6 nodes, classes 0..6 one node each; nodes 0..3 are train
        let g = Graph::new(DenseMatrix::zeros(6, 1), &[], (0..6).collect(), 6).unwrap();
        let masks = SplitMasks::from_indices(6, &[0, 1, 2], &[3], &[4, 5]).unwrap();
        let plan = ClassFoldPlan {
            folds: vec![vec![0, 1], vec![2, 3], vec![4, 5]],
            num_classes: 6,
        };
        let s = open_world_split(&g, &masks, &plan, 1, 2).unwrap();
        assert_eq!(s.known_classes, [0, 1]);
        assert_eq!(s.test_new_classes, [2, 3]);
        assert_eq!(s.validation_new_classes, [4, 5]);
        // node 2 is a train node of a test-new class: unlabeled
        assert_eq!(s.labeled, [0, 1]);
        assert_eq!(s.unlabeled, [2, 3, 4, 5]);
        assert!(open_world_split(&g, &masks, &plan, 1, 1).is_err());
        assert!(open_world_split(&g, &masks, &plan, 3, 1).is_err());
    }
}
