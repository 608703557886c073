//! Evaluation reports, maximizer reports and training history output.

use std::io::Write;

use serde::Serialize;

use crate::boost::{EnsembleModel, IterationRecord};
use crate::data::{Label, Origin};
use crate::dataset::Data;
use crate::error::{Error, Result};
use crate::experiment::{model_bags, predict_data};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BagOutcome {
    pub index: usize,
    pub truth: Label,
    pub predicted: Label,
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub predict_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    /// `fixed_split` or `cross_validation`.
    pub mode: String,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub confusion: Confusion,
    pub bags: Vec<BagOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Predict every labeled item and tally the results. No timing is recorded,
/// so equal inputs give equal reports.
pub fn evaluate(model: &EnsembleModel, data: &Data) -> Result<EvalReport> {
    let truth = data.labels()?;
    let preds = predict_data(model, data)?;
    let mut confusion = Confusion::default();
    let bags: Vec<BagOutcome> = preds
        .iter()
        .zip(&truth)
        .enumerate()
        .map(|(index, (p, &y))| {
            let slot = match (y, p.label) {
                (Label::Positive, Label::Positive) => &mut confusion.true_positive,
                (Label::Negative, Label::Negative) => &mut confusion.true_negative,
                (Label::Negative, Label::Positive) => &mut confusion.false_positive,
                (Label::Positive, Label::Negative) => &mut confusion.false_negative,
            };
            *slot += 1;
            BagOutcome {
                index,
                truth: y,
                predicted: p.label,
                margin: p.margin,
            }
        })
        .collect();
    let correct = confusion.true_positive + confusion.true_negative;
    Ok(EvalReport {
        mode: "fixed_split".into(),
        accuracy: correct as f64 / bags.len() as f64,
        correct,
        total: bags.len(),
        confusion,
        bags,
        timing: None,
    })
}

/// Write `index,predicted,margin` rows, plus `truth` when labels are known.
pub fn write_predictions<W: Write>(model: &EnsembleModel, data: &Data, out: W) -> Result<()> {
    let preds = predict_data(model, data)?;
    let truth = data.labels().ok();
    let mut w = csv::Writer::from_writer(out);
    match &truth {
        Some(_) => w.write_record(["index", "truth", "predicted", "margin"])?,
        None => w.write_record(["index", "predicted", "margin"])?,
    }
    for (i, p) in preds.iter().enumerate() {
        let mut row = vec![i.to_string()];
        if let Some(t) = &truth {
            row.push(t[i].to_string());
        }
        row.push(p.label.to_string());
        row.push(p.margin.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One shapelet's contribution to one bag.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapeletRow {
    pub shapelet: usize,
    pub weight: f64,
    /// `w_j · max_x score_j(x)`
    pub value: f64,
    pub score: f64,
    /// Offset of the maximizing window (its index within the bag).
    pub maximizer: usize,
    pub raw: Vec<f64>,
}

/// A nonzero coefficient of a shapelet, placed against the input.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatternRow {
    pub shapelet: usize,
    pub pool_index: usize,
    pub alpha: f64,
    /// `w_j · α_jz`
    pub product: f64,
    /// Training bag and offset the pool instance came from.
    pub origin: Origin,
    /// Offset in the input minimizing Euclidean distance to the pool instance.
    pub alignment: usize,
    pub distance: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaximizerReport {
    pub margin: f64,
    pub predicted: Label,
    pub shapelets: Vec<ShapeletRow>,
    pub patterns: Vec<PatternRow>,
}

fn joined(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

impl MaximizerReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Raw values are `;`-separated within one field.
    pub fn write_shapelets_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["shapelet", "weight", "value", "score", "maximizer", "raw"])?;
        for r in &self.shapelets {
            w.write_record([
                r.shapelet.to_string(),
                r.weight.to_string(),
                r.value.to_string(),
                r.score.to_string(),
                r.maximizer.to_string(),
                joined(&r.raw),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_patterns_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "shapelet",
            "pool_index",
            "alpha",
            "product",
            "origin_bag",
            "origin_offset",
            "alignment",
            "distance",
            "values",
        ])?;
        for r in &self.patterns {
            w.write_record([
                r.shapelet.to_string(),
                r.pool_index.to_string(),
                r.alpha.to_string(),
                r.product.to_string(),
                r.origin.bag.to_string(),
                r.origin.offset.to_string(),
                r.alignment.to_string(),
                r.distance.to_string(),
                joined(&r.values),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-shapelet maximizers and aligned pattern rows for item `index` of `data`.
/// For series the raw values are the unnormalized window.
pub fn report_maximizers(model: &EnsembleModel, data: &Data, index: usize) -> Result<MaximizerReport> {
    if index >= data.len() {
        return Err(Error::Validation(format!(
            "item {index} out of range for {} inputs",
            data.len()
        )));
    }
    let item = data.subset(&[index])?;
    let bag = model_bags(model, &item)?.remove(0);
    let pred = model.predict(&bag)?;
    let raw_of = |x: usize| -> Vec<f64> {
        match &item {
            Data::Series(s) => {
                let l = model.window.map_or(1, |w| w.length);
                s[0].values[x..x + l].to_vec()
            }
            Data::Bags(_) => bag.instances[x].values().to_vec(),
        }
    };

    let shapelets = model
        .shapelets
        .iter()
        .zip(&pred.per_shapelet)
        .enumerate()
        .map(|(j, (s, hit))| ShapeletRow {
            shapelet: j,
            weight: s.weight,
            value: hit.value,
            score: hit.score,
            maximizer: hit.maximizer,
            raw: raw_of(hit.maximizer),
        })
        .collect();

    let mut patterns = Vec::new();
    for (j, s) in model.shapelets.iter().enumerate() {
        for (z, a) in s.coeffs.nonzeros() {
            let values = model.pool.get(z).values();
            let (alignment, distance) = bag
                .instances
                .iter()
                .enumerate()
                .map(|(x, inst)| {
                    let d2: f64 = inst.values().iter().zip(values).map(|(p, q)| (p - q) * (p - q)).sum();
                    (x, d2.sqrt())
                })
                .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
            patterns.push(PatternRow {
                shapelet: j,
                pool_index: z,
                alpha: a,
                product: s.weight * a,
                origin: model.pool.origin()[z],
                alignment,
                distance,
                values: values.to_vec(),
            });
        }
    }
    Ok(MaximizerReport {
        margin: pred.margin,
        predicted: pred.label,
        shapelets,
        patterns,
    })
}

/// Per-iteration log. Includes wall time, so it is not byte-reproducible.
pub fn write_history<W: Write>(history: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "iteration",
        "accepted",
        "gamma",
        "edge",
        "weak_objective",
        "weak_iterations",
        "master_gap",
        "simplex_violation",
        "wall_seconds",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in history {
        w.write_record([
            r.iteration.to_string(),
            r.accepted.to_string(),
            r.gamma.to_string(),
            r.edge.to_string(),
            r.weak_objective.to_string(),
            r.weak_iterations.to_string(),
            opt(r.master_gap),
            opt(r.simplex_violation),
            r.wall_seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boost::{lpboost_train, BoostConfig, StopReason, TrainingMeta, WeightedShapelet};
    use crate::data::{Bag, Instance, InstancePool, LabeledBag, Sample};
    use crate::kernel::KernelSpec;
    use crate::timeseries::{TimeSeries, Window};
    use crate::weak::{NormKind, ShapeletCoeffs};

    fn pool() -> InstancePool {
        InstancePool::from_parts(
            vec![
                Instance::new(vec![1.0, 0.0]),
                Instance::new(vec![0.0, 1.0]),
                Instance::new(vec![2.0, 2.0]),
            ],
            vec![
                Origin { bag: 0, offset: 0 },
                Origin { bag: 0, offset: 1 },
                Origin { bag: 1, offset: 0 },
            ],
        )
        .unwrap()
    }

    fn model(shapelets: Vec<WeightedShapelet>) -> EnsembleModel {
        EnsembleModel {
            shapelets,
            kernel: KernelSpec::Linear,
            pool: pool(),
            norm: NormKind::L1,
            nu: 1.0,
            window: None,
            classes: None,
            meta: TrainingMeta {
                iterations: 1,
                final_gamma: 0.0,
                stop: StopReason::EdgeBelowGamma,
                pruned: vec![],
            },
        }
    }

    fn bags(rows: Vec<(Vec<Vec<f64>>, Label)>) -> Data {
        Data::Bags(
            Sample::new(
                rows.into_iter()
                    .map(|(r, y)| LabeledBag::new(Bag::from_rows(r), y))
                    .collect(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn single_shapelet_row_equals_margin() {
        let m = model(vec![WeightedShapelet {
            weight: 1.0,
            coeffs: ShapeletCoeffs::new(vec![0.5, 0.0, 0.0], NormKind::L1),
        }]);
        let data = bags(vec![(vec![vec![0.0, 3.0], vec![4.0, 0.0]], Label::Positive)]);
        let r = report_maximizers(&m, &data, 0).unwrap();
        assert_eq!(r.shapelets.len(), 1);
        assert_eq!(r.shapelets[0].value, r.margin);
        assert_eq!(r.shapelets[0].maximizer, 1);
        assert_eq!(r.shapelets[0].raw, vec![4.0, 0.0]);
    }

    #[test]
    fn two_nonzeros_give_two_pattern_rows() {
        let m = model(vec![
            WeightedShapelet {
                weight: 0.6,
                coeffs: ShapeletCoeffs::new(vec![0.5, -0.5, 0.0], NormKind::L1),
            },
            WeightedShapelet {
                weight: 0.4,
                coeffs: ShapeletCoeffs::new(vec![0.0, 0.0, 1.0], NormKind::L1),
            },
        ]);
        let data = bags(vec![(vec![vec![0.0, 1.1], vec![1.9, 2.0]], Label::Negative)]);
        let r = report_maximizers(&m, &data, 0).unwrap();
        let first: Vec<&PatternRow> = r.patterns.iter().filter(|p| p.shapelet == 0).collect();
        assert_eq!(first.len(), 2);
        assert_eq!(first[0].product, 0.3);
        assert_eq!(first[1].product, -0.3);
        assert_eq!(first[1].alignment, 0);
        assert_eq!(r.patterns[2].alignment, 1);
        assert_eq!(r.patterns[2].origin, Origin { bag: 1, offset: 0 });
        let sum: f64 = r.shapelets.iter().map(|s| s.value).sum();
        assert_eq!(sum, r.margin);

        let mut buf = Vec::new();
        r.write_patterns_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
        assert!(report_maximizers(&m, &data, 1).is_err());
        let wrong = bags(vec![(vec![vec![1.0]], Label::Negative)]);
        assert!(report_maximizers(&m, &wrong, 0).is_err());
    }

    #[test]
    fn series_raw_values_are_unnormalized() {
        let mut m = model(vec![WeightedShapelet {
            weight: 1.0,
            coeffs: ShapeletCoeffs::new(vec![1.0, 0.0, 0.0], NormKind::L1),
        }]);
        m.window = Some(Window::new(2, true));
        let data = Data::Series(vec![
            TimeSeries::new(vec![5.0, 1.0, 7.0], Some(Label::Positive)).unwrap()
        ]);
        let r = report_maximizers(&m, &data, 0).unwrap();
        // z-normalized windows are (1,-1) and (-1,1); the first scores higher.
        assert_eq!(r.shapelets[0].maximizer, 0);
        assert_eq!(r.shapelets[0].raw, vec![5.0, 1.0]);
    }

    #[test]
    fn eval_counts() {
        // 10 bags on a line, the shapelet gets 9 right.
        let m = model(vec![WeightedShapelet {
            weight: 1.0,
            coeffs: ShapeletCoeffs::new(vec![1.0, 0.0, 0.0], NormKind::L1),
        }]);
        let mut rows = Vec::new();
        for i in 0..10 {
            let x = if i < 5 { 1.0 } else { -1.0 };
            let y = if i < 5 || i == 9 {
                Label::Positive
            } else {
                Label::Negative
            };
            rows.push((vec![vec![x, 0.0]], y));
        }
        let r = evaluate(&m, &bags(rows)).unwrap();
        assert_eq!(r.accuracy, 0.9);
        assert_eq!(
            r.confusion,
            Confusion {
                true_positive: 5,
                true_negative: 4,
                false_positive: 0,
                false_negative: 1
            }
        );
        assert!(r.to_json().unwrap().contains("\"accuracy\": 0.9"));
    }

    #[test]
    fn accuracy_matches_margin_loss() {
        let data = bags(vec![
            (vec![vec![1.0, 0.2], vec![0.0, 0.0]], Label::Positive),
            (vec![vec![0.9, 0.1]], Label::Positive),
            (vec![vec![-1.0, 0.3]], Label::Negative),
            (vec![vec![-0.8, -0.5], vec![0.1, -1.0]], Label::Negative),
        ]);
        let Data::Bags(sample) = &data else { unreachable!() };
        let out = lpboost_train(sample, &KernelSpec::gaussian(1.0).unwrap(), &BoostConfig::default()).unwrap();
        let r = evaluate(&out.model, &data).unwrap();
        let loss = crate::boost::empirical_margin_loss(&out.model, sample, 0.0).unwrap();
        if r.bags.iter().all(|b| b.margin != 0.0) {
            assert_eq!(r.accuracy, 1.0 - loss);
        }
        let mut buf = Vec::new();
        write_history(&out.history, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), out.history.len() + 1);
        let mut buf = Vec::new();
        write_predictions(&out.model, &data, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("index,truth,predicted,margin"));
    }
}
