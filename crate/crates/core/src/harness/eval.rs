use super::{Category, DeskSetup, SceneSpec, OBJECT_NAMES};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::kdtree::KdTree;
use crate::scenegraph::SceneGraph;
use crate::shapes::surface_cloud;
use std::collections::BTreeMap;
use std::fmt::Write;

/// Average closest-point distance: for each model point placed at `truth`,
/// the distance to the nearest model point placed at `est`.
pub fn add_s(est: &Pose, truth: &Pose, model: &PointCloud) -> Result<f64> {
    if model.is_empty() {
        return Err(Error::EmptyModel);
    }
    let placed: Vec<_> = model.points.iter().map(|p| est.transform_point(p)).collect();
    let tree = KdTree::build(&placed);
    let total: f64 = model.points.iter().map(|p| tree.nearest(&truth.transform_point(p)).expect("nonempty").1.sqrt()).sum();
    Ok(total / model.len() as f64)
}

/// Quartiles by linear interpolation between order statistics.
pub fn quartiles(values: &[f64]) -> [f64; 3] {
    if values.is_empty() {
        return [f64::NAN; 3];
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    [q(0.25), q(0.5), q(0.75)]
}

/// Fraction of errors at or below each threshold.
pub fn accuracy_curve(errors: &[f64], thresholds: &[f64]) -> Vec<f64> {
    thresholds
        .iter()
        .map(|t| if errors.is_empty() { 0.0 } else { errors.iter().filter(|e| **e <= *t).count() as f64 / errors.len() as f64 })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub scene_id: String,
    pub category: Category,
    pub object_type: usize,
    pub method: String,
    pub add_s_cm: f64,
}

/// One method's estimate for one scene. The estimate is indexed like the
/// ground truth, table first.
#[derive(Debug, Clone)]
pub struct SceneResult<'a> {
    pub scene: &'a SceneSpec,
    pub estimate: &'a SceneGraph,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub thresholds: Vec<f64>,
    /// Accuracy at each threshold, per method.
    pub accuracy: BTreeMap<String, Vec<f64>>,
    /// ADD-S quartiles keyed by `method/category/object_type`.
    pub quartiles: BTreeMap<String, [f64; 3]>,
}

impl EvalReport {
    pub fn errors(&self, method: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.method == method).map(|r| r.add_s_cm).collect()
    }

    pub fn median(&self, method: &str) -> f64 {
        quartiles(&self.errors(method))[1]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("scene_id,category,object_type,method,add_s_cm\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.scene_id, r.category, OBJECT_NAMES[r.object_type], r.method, r.add_s_cm);
        }
        s
    }

    /// Threshold-vs-accuracy curves, one column per method.
    pub fn curve_csv(&self, thresholds: &[f64]) -> String {
        let methods: Vec<&String> = self.accuracy.keys().collect();
        let mut s = String::from("threshold_cm");
        for m in &methods {
            let _ = write!(s, ",{m}");
        }
        s.push('\n');
        let curves: Vec<Vec<f64>> = methods.iter().map(|m| accuracy_curve(&self.errors(m), thresholds)).collect();
        for (i, t) in thresholds.iter().enumerate() {
            let _ = write!(s, "{t}");
            for c in &curves {
                let _ = write!(s, ",{}", c[i]);
            }
            s.push('\n');
        }
        s
    }
}

/// Per-object ADD-S for every result, with accuracies at `thresholds` and
/// quartiles per method, category and object type.
pub fn evaluate_suite(results: &[SceneResult], setup: &DeskSetup, thresholds: &[f64]) -> Result<EvalReport> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no results to evaluate".into()));
    }
    let models: Vec<PointCloud> = setup.library.iter().map(|s| surface_cloud(s, &Pose::identity())).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for r in results {
        let truth = r.scene.truth.world_poses(&setup.planes)?;
        let est = r.estimate.world_poses(&setup.planes)?;
        if est.len() != truth.len() {
            return Err(Error::InvalidGraph(format!(
                "estimate for {} has {} objects, truth has {}",
                r.scene.id,
                est.len(),
                truth.len()
            )));
        }
        for (k, &ty) in r.scene.types.iter().enumerate() {
            rows.push(EvalRow {
                scene_id: r.scene.id.clone(),
                category: r.scene.category,
                object_type: ty,
                method: r.method.clone(),
                add_s_cm: add_s(&est[k + 1], &truth[k + 1], &models[ty])?,
            });
        }
    }
    let mut by_method: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut by_key: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &rows {
        by_method.entry(r.method.clone()).or_default().push(r.add_s_cm);
        by_key.entry(format!("{}/{}/{}", r.method, r.category, OBJECT_NAMES[r.object_type])).or_default().push(r.add_s_cm);
    }
    Ok(EvalReport {
        accuracy: by_method.iter().map(|(m, e)| (m.clone(), accuracy_curve(e, thresholds))).collect(),
        quartiles: by_key.iter().map(|(k, e)| (k.clone(), quartiles(e))).collect(),
        thresholds: thresholds.to_vec(),
        rows,
    })
}
