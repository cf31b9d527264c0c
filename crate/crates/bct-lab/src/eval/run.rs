//! Full evaluation pass: scores a frozen protocol with an old and a new
//! backbone, producing self-test (new/new) and cross-test (old gallery or
//! first template vs new probe) operating points plus their average.

use ndarray::{Array2, Axis};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::eval::audit::ConstraintRates;
use crate::eval::metrics::{identification_operating_point, make_template, similarity, tar_at_far};
use crate::eval::protocol::EvalProtocol;
use crate::model::{extract_features, Backbone};

/// One operating point of a metric curve. `supported` is false when the
/// requested rate is below the resolution of the counter set (fewer counter
/// scores than 1/requested), meaning the value is an extrapolation artifact
/// rather than a measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPoint {
    pub requested: f64,
    pub value: f64,
    pub threshold: f64,
    pub achieved: f64,
    pub supported: bool,
}

/// Verification and identification curves for one pairing of models.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SideReport {
    /// TAR at each requested FAR, in request order.
    pub verification: Vec<MetricPoint>,
    /// TPIR at each requested FPIR, in request order.
    pub identification: Vec<MetricPoint>,
}

/// Everything a single evaluation produces. `avg` is the arithmetic mean of
/// the four headline numbers: self/cross × verification/identification at
/// the first requested operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub self_test: SideReport,
    pub cross_test: SideReport,
    pub avg: f64,
    /// Triplet-audit rates, attached by the caller when an audit ran.
    pub constraints: Option<ConstraintRates>,
}

fn check_index(i: usize, n: usize, what: &str) -> Result<()> {
    if i >= n {
        return Err(Error::InvalidArgument(format!(
            "{what} index {i} out of range for {n} evaluation samples"
        )));
    }
    Ok(())
}

fn verification_curve(genuine: &[f64], impostor: &[f64], far_list: &[f64]) -> Result<Vec<MetricPoint>> {
    let mut points = Vec::with_capacity(far_list.len());
    for &far in far_list {
        let (tar, threshold, achieved) = tar_at_far(genuine, impostor, far)?;
        points.push(MetricPoint {
            requested: far,
            value: tar,
            threshold,
            achieved,
            supported: far * impostor.len() as f64 >= 1.0,
        });
    }
    Ok(points)
}

struct IdentificationSetup {
    gallery_labels: Vec<u32>,
    query_labels: Vec<u32>,
    in_gallery: Vec<bool>,
    query_rows: Vec<usize>,
}

fn identification_curve(
    gallery_feats: &Array2<f64>,
    setup: &IdentificationSetup,
    queries: &Array2<f64>,
    fpir_list: &[f64],
) -> Result<Vec<MetricPoint>> {
    let oog = setup.in_gallery.iter().filter(|&&m| !m).count();
    let mut points = Vec::with_capacity(fpir_list.len());
    for &fpir in fpir_list {
        let point = identification_operating_point(
            &gallery_feats.view(),
            &setup.gallery_labels,
            &queries.view(),
            &setup.query_labels,
            &setup.in_gallery,
            fpir,
        )?;
        points.push(MetricPoint {
            requested: fpir,
            value: point.tpir,
            threshold: point.threshold,
            achieved: point.achieved_fpir,
            supported: fpir * oog as f64 >= 1.0,
        });
    }
    Ok(points)
}

/// Builds one gallery template per entry from `feats` rows.
fn gallery_templates(protocol: &EvalProtocol, feats: &Array2<f64>) -> Result<Array2<f64>> {
    let dim = feats.ncols();
    let mut out = Array2::<f64>::zeros((protocol.gallery.len(), dim));
    for (g, entry) in protocol.gallery.iter().enumerate() {
        let members = feats.select(Axis(0), &entry.member_indices);
        let template = make_template(&members.view())?;
        out.row_mut(g).assign(&template);
    }
    Ok(out)
}

/// Scores `protocol` with both models.
///
/// Self-test embeds both sides of every comparison with `new_bb`. Cross-test
/// embeds the first verification template and the identification gallery
/// with `old_bb` while probes stay with `new_bb`. Passing the same backbone
/// twice makes the two sides coincide, which is how the old model's own
/// baseline is measured.
pub fn run_eval(
    old_bb: &Backbone,
    new_bb: &Backbone,
    protocol: &EvalProtocol,
    eval_ds: &LabeledDataset,
    far_list: &[f64],
    fpir_list: &[f64],
) -> Result<EvalReport> {
    if old_bb.embed_dim() != new_bb.embed_dim() {
        return Err(Error::InvalidArgument(format!(
            "embedding widths differ: old {} vs new {}",
            old_bb.embed_dim(),
            new_bb.embed_dim()
        )));
    }
    if far_list.is_empty() || fpir_list.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one verification and one identification operating point".into(),
        ));
    }
    let n = eval_ds.len();
    for pair in &protocol.pairs {
        check_index(pair.a, n, "pair")?;
        check_index(pair.b, n, "pair")?;
    }
    for entry in &protocol.gallery {
        for &i in &entry.member_indices {
            check_index(i, n, "gallery member")?;
        }
    }
    for q in &protocol.queries {
        check_index(q.index, n, "query")?;
    }

    let all: Vec<usize> = (0..n).collect();
    let old_feats = extract_features(old_bb, eval_ds, &all)?;
    let new_feats = extract_features(new_bb, eval_ds, &all)?;

    // 1:1 verification. Cross-test scores pair the old side-A template with
    // the new side-B template.
    let mut self_genuine = Vec::new();
    let mut self_impostor = Vec::new();
    let mut cross_genuine = Vec::new();
    let mut cross_impostor = Vec::new();
    for pair in &protocol.pairs {
        let self_score = similarity(&new_feats.row(pair.a), &new_feats.row(pair.b))?;
        let cross_score = similarity(&old_feats.row(pair.a), &new_feats.row(pair.b))?;
        if pair.genuine {
            self_genuine.push(self_score);
            cross_genuine.push(cross_score);
        } else {
            self_impostor.push(self_score);
            cross_impostor.push(cross_score);
        }
    }

    // 1:N identification. Cross-test builds the gallery with the old model
    // and probes with the new one.
    let setup = IdentificationSetup {
        gallery_labels: protocol.gallery_class_ids(),
        query_labels: protocol.queries.iter().map(|q| q.label).collect(),
        in_gallery: protocol.queries.iter().map(|q| q.in_gallery).collect(),
        query_rows: protocol.queries.iter().map(|q| q.index).collect(),
    };
    let query_feats = new_feats.select(Axis(0), &setup.query_rows);
    let new_gallery = gallery_templates(protocol, &new_feats)?;
    let old_gallery = gallery_templates(protocol, &old_feats)?;

    let self_test = SideReport {
        verification: verification_curve(&self_genuine, &self_impostor, far_list)?,
        identification: identification_curve(&new_gallery, &setup, &query_feats, fpir_list)?,
    };
    let cross_test = SideReport {
        verification: verification_curve(&cross_genuine, &cross_impostor, far_list)?,
        identification: identification_curve(&old_gallery, &setup, &query_feats, fpir_list)?,
    };

    let avg = (self_test.verification[0].value
        + cross_test.verification[0].value
        + self_test.identification[0].value
        + cross_test.identification[0].value)
        / 4.0;

    Ok(EvalReport { self_test, cross_test, avg, constraints: None })
}

fn lookup_metric(side: &SideReport, metric_key: &str) -> Result<f64> {
    let (metric, op) = metric_key.split_once('@').ok_or_else(|| {
        Error::InvalidArgument(format!(
            "metric key '{metric_key}' must look like tar@0.01 or tpir@0.01"
        ))
    })?;
    let requested: f64 = op
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad operating point in '{metric_key}'")))?;
    let list = match metric {
        "tar" => &side.verification,
        "tpir" => &side.identification,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown metric '{other}'; expected tar or tpir"
            )))
        }
    };
    list.iter()
        .find(|p| (p.requested - requested).abs() <= 1e-12 * requested.abs().max(1.0))
        .map(|p| p.value)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("report holds no operating point '{metric_key}'"))
        })
}

/// The compatibility criterion: the upgraded system beats the old system on
/// its own terms, i.e. cross-test strictly exceeds the old model's self-test
/// at the same operating point.
pub fn compatibility_holds(
    cross_report: &EvalReport,
    old_self_report: &EvalReport,
    metric_key: &str,
) -> Result<bool> {
    let cross = lookup_metric(&cross_report.cross_test, metric_key)?;
    let old_self = lookup_metric(&old_self_report.self_test, metric_key)?;
    Ok(cross > old_self)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::LazyLock;

    use crate::bct::{prepare_cache, train_compatible_with_cache, MethodConfig};
    use crate::data::{generate_synthetic, split_scenario, Scenario};
    use crate::eval::protocol::build_eval_protocol;
    use crate::model::{train_classifier, Classifier, ClassifierKind, TrainConfig};
    use crate::rng::{stream, tag};

    const FARS: [f64; 2] = [0.1, 0.01];
    const FPIRS: [f64; 2] = [0.1, 0.01];

    struct Fixture {
        ds: LabeledDataset,
        protocol: EvalProtocol,
        backbone: Backbone,
    }

    /// One trained backbone shared across tests: 5 well-separated classes,
    /// enough holdout for pairs and queries.
    static FIXTURE: LazyLock<Fixture> = LazyLock::new(|| {
        let ds = generate_synthetic(5, 24, 6, 4.0, 0.35, 61).expect("dataset");
        let split = split_scenario(&ds, Scenario::ExtendedData, 0.5).expect("split");
        let mut rng = stream(61, &[tag::OLD_INIT]);
        let bb = Backbone::init(&[6, 24, 5], &mut rng).expect("backbone");
        let cls = Classifier::init(5, 5, ClassifierKind::PlainSoftmax, &mut rng).expect("classifier");
        let cfg = TrainConfig {
            lr0: 0.05,
            epochs: 12,
            batch_size: 32,
            seed: 61,
            ..TrainConfig::default()
        };
        let (bb, _, _) =
            train_classifier(&split.new_train, &ds, bb, cls, &cfg).expect("training");
        let protocol = build_eval_protocol(&ds, 0.5, 0.2, 8, 61).expect("protocol");
        Fixture { ds, protocol, backbone: bb }
    });

    /// Composes an orthogonal rotation into the final affine layer, leaving
    /// within-model geometry intact while scrambling the embedding basis.
    fn rotated(bb: &Backbone) -> Backbone {
        let d = bb.embed_dim();
        let mut rng = stream(7, &[tag::NEW_INIT]);
        use rand::Rng;
        use rand_distr::StandardNormal;
        let raw = nalgebra::DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        let q = raw.qr().q();
        let mut layers = bb.layers().to_vec();
        let last = layers.last_mut().unwrap();
        let mut w = Array2::<f64>::zeros((d, last.weight.ncols()));
        let mut b = ndarray::Array1::<f64>::zeros(d);
        for r in 0..d {
            for c in 0..last.weight.ncols() {
                for k in 0..d {
                    w[[r, c]] += q[(r, k)] * last.weight[[k, c]];
                }
            }
            for k in 0..d {
                b[r] += q[(r, k)] * last.bias[k];
            }
        }
        last.weight = w;
        last.bias = b;
        Backbone::from_layers(layers).expect("rotated backbone")
    }

    #[test]
    fn identical_backbones_make_cross_equal_self() {
        let f = &*FIXTURE;
        let report =
            run_eval(&f.backbone, &f.backbone, &f.protocol, &f.ds, &FARS, &FPIRS).unwrap();
        assert_eq!(report.self_test, report.cross_test);
        assert!(report.avg >= 0.0 && report.avg <= 1.0);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let f = &*FIXTURE;
        let a = run_eval(&f.backbone, &f.backbone, &f.protocol, &f.ds, &FARS, &FPIRS).unwrap();
        let b = run_eval(&f.backbone, &f.backbone, &f.protocol, &f.ds, &FARS, &FPIRS).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rotation_preserves_self_test_but_breaks_cross_test() {
        let f = &*FIXTURE;
        let spun = rotated(&f.backbone);
        let base =
            run_eval(&f.backbone, &f.backbone, &f.protocol, &f.ds, &FARS, &FPIRS).unwrap();
        let report = run_eval(&f.backbone, &spun, &f.protocol, &f.ds, &FARS, &FPIRS).unwrap();
        for (a, b) in base
            .self_test
            .verification
            .iter()
            .zip(report.self_test.verification.iter())
        {
            assert!(
                (a.value - b.value).abs() < 1e-9,
                "cosine scores are rotation-invariant within a model: {} vs {}",
                a.value,
                b.value
            );
        }
        let self_tar = report.self_test.verification[0].value;
        let cross_tar = report.cross_test.verification[0].value;
        assert!(self_tar > 0.8, "trained model should verify well, got {self_tar}");
        assert!(
            cross_tar < self_tar - 0.3,
            "rotated embeddings must not align across models: self {self_tar}, cross {cross_tar}"
        );
    }

    #[test]
    fn trained_compatible_upgrade_beats_the_old_baseline() {
        // End-to-end sanity: old model trained on half the data, new model
        // trained with batch replacement against the old cache; the
        // cross-test should comfortably beat the chance line (TAR ~= FAR for
        // unrelated embedding spaces) without wrecking the new self-test.
        let f = &*FIXTURE;
        let split = split_scenario(&f.ds, Scenario::ExtendedData, 0.5).unwrap();
        let mut rng = stream(62, &[tag::NEW_INIT]);
        let new_bb = Backbone::init(&[6, 32, 5], &mut rng).unwrap();
        let new_cls = Classifier::init(5, 5, ClassifierKind::PlainSoftmax, &mut rng).unwrap();
        let method = MethodConfig::MixBCT { alpha: 0.3, denoise: false, exclusion_fraction: 0.1 };
        let cache = prepare_cache(&f.backbone, &f.ds, &split, method).unwrap();
        let cfg = TrainConfig {
            lr0: 0.05,
            epochs: 12,
            batch_size: 32,
            seed: 62,
            ..TrainConfig::default()
        };
        let (new_bb, _, _) = train_compatible_with_cache(
            &split,
            &f.ds,
            cache.as_ref(),
            new_bb,
            new_cls,
            method,
            &cfg,
        )
        .unwrap();
        let report = run_eval(&f.backbone, &new_bb, &f.protocol, &f.ds, &FARS, &FPIRS).unwrap();
        let lower = run_eval(&f.backbone, &f.backbone, &f.protocol, &f.ds, &FARS, &FPIRS).unwrap();
        assert!(
            report.cross_test.verification[0].value > 0.25,
            "cross-test TAR@0.1 should clear the 0.1 chance line by a wide margin, got {}",
            report.cross_test.verification[0].value
        );
        assert!(report.self_test.verification[0].value >= lower.self_test.verification[0].value - 0.05);
    }

    #[test]
    fn unsupported_operating_points_are_flagged() {
        let f = &*FIXTURE;
        let report = run_eval(
            &f.backbone,
            &f.backbone,
            &f.protocol,
            &f.ds,
            &[0.1, 1e-4],
            &[0.5, 1e-4],
        )
        .unwrap();
        let fine = &report.self_test.verification[0];
        let coarse = &report.self_test.verification[1];
        assert!(fine.supported, "0.1 of {} impostor pairs is measurable", 40);
        assert!(!coarse.supported, "1e-4 needs ten thousand impostor pairs");
        assert_eq!(coarse.achieved, 0.0, "the conservative threshold rejects all impostors");
        let headline_mean = (report.self_test.verification[0].value
            + report.cross_test.verification[0].value
            + report.self_test.identification[0].value
            + report.cross_test.identification[0].value)
            / 4.0;
        assert_eq!(report.avg, headline_mean);
    }

    #[test]
    fn mismatched_widths_are_rejected() {
        let f = &*FIXTURE;
        let mut rng = stream(9, &[tag::NEW_INIT]);
        let narrow = Backbone::init(&[6, 16, 3], &mut rng).unwrap();
        let err =
            run_eval(&f.backbone, &narrow, &f.protocol, &f.ds, &FARS, &FPIRS).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn compatibility_criterion_is_strict() {
        let f = &*FIXTURE;
        let report =
            run_eval(&f.backbone, &f.backbone, &f.protocol, &f.ds, &FARS, &FPIRS).unwrap();
        // Identical models: cross equals self, so strict inequality fails.
        assert!(!compatibility_holds(&report, &report, "tar@0.1").unwrap());
        let mut better = report.clone();
        better.cross_test.verification[0].value =
            (report.self_test.verification[0].value + 1.0) / 2.0 + 0.01;
        if better.cross_test.verification[0].value > report.self_test.verification[0].value {
            assert!(compatibility_holds(&better, &report, "tar@0.1").unwrap());
        }
        let err = compatibility_holds(&report, &report, "tar@0.5").unwrap_err();
        assert_eq!(err.exit_code(), 2, "missing operating point is a caller error");
        let err = compatibility_holds(&report, &report, "accuracy").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
