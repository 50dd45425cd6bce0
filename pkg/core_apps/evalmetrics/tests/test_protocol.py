"""
Tests for the m@k protocol and the detection diagnostics.
"""
import random

from django.test import SimpleTestCase

from core_apps.evalmetrics.captions import CiderScorer
from core_apps.evalmetrics.protocol import (
    AnnotatedObject,
    Proposal,
    SceneResult,
    average_recall,
    evaluate,
    m_at_k,
    matched_proposals,
    mean_average_precision,
)
from core_apps.geom.structures import Box3D


def constant(value):
    return lambda candidate, references: value


CAPTION_A = tuple("the red small box is in the northwest".split())
CAPTION_B = tuple("the blue large box is far from the wall".split())


def two_object_scene():
    objects = [
        AnnotatedObject(Box3D((0, 0, 0), (1, 1, 1), 1), (CAPTION_A,)),
        AnnotatedObject(Box3D((10, 0, 0), (1, 1, 1), 5), (CAPTION_B,)),
    ]
    proposals = [
        Proposal(Box3D((0.25, 0, 0), (1, 1, 1), 1), 0.9, CAPTION_A),
        Proposal(Box3D((10.5, 0, 0), (1, 1, 1), 5), 0.8, CAPTION_B),
    ]
    return SceneResult(proposals, objects)


class MAtKTests(SimpleTestCase):
    def test_two_object_fixture(self):
        """Test IoUs of 0.6 and 1/3 give 0.5 at k = 0.5 and 1.0 at k = 0.25."""
        scene = two_object_scene()
        ious = [iou for _, iou in scene.assignments()]
        self.assertAlmostEqual(ious[0], 0.6)
        self.assertAlmostEqual(ious[1], 1 / 3)
        self.assertEqual(m_at_k([scene], constant(1.0), 0.5), 0.5)
        self.assertEqual(m_at_k([scene], constant(1.0), 0.25), 1.0)

    def test_zero_predictions(self):
        """Test a scene without proposals scores 0."""
        scene = two_object_scene()
        scene.proposals = []
        self.assertEqual(m_at_k([scene], constant(1.0), 0.25), 0.0)

    def test_monotone_in_k(self):
        """Test m@0.5 never exceeds m@0.25."""
        rng = random.Random(0)
        for _ in range(20):
            objects = [
                AnnotatedObject(Box3D((rng.uniform(0, 5), 0, 0), (1, 1, 1)), (CAPTION_A,))
                for _ in range(3)
            ]
            proposals = [
                Proposal(Box3D((rng.uniform(0, 5), 0, 0), (1, 1, 1)), rng.random(), CAPTION_A)
                for _ in range(3)
            ]
            scene = SceneResult(proposals, objects)
            self.assertLessEqual(m_at_k([scene], constant(1.0), 0.5), m_at_k([scene], constant(1.0), 0.25))

    def test_matched_proposals(self):
        """Test only the object with IoU >= 0.5 counts as matched."""
        self.assertEqual(matched_proposals([two_object_scene()]), 1)


class DetectionTests(SimpleTestCase):
    def test_perfect_detections(self):
        """Test exact same-class proposals give AR and mAP of 1."""
        scene = two_object_scene()
        scene.proposals = [Proposal(o.box, 0.9, ()) for o in scene.objects]
        self.assertEqual(average_recall([scene]), 1.0)
        self.assertAlmostEqual(mean_average_precision([scene]), 1.0)

    def test_wrong_class_is_not_recalled(self):
        """Test recall is class-aware."""
        obj = AnnotatedObject(Box3D((0, 0, 0), (1, 1, 1), 2), (CAPTION_A,))
        scene = SceneResult([Proposal(Box3D((0, 0, 0), (1, 1, 1), 3), 0.9, ())], [obj])
        self.assertEqual(average_recall([scene]), 0.0)

    def test_false_positive_ranked_first(self):
        """Test a higher-scored false positive halves the average precision."""
        obj = AnnotatedObject(Box3D((0, 0, 0), (1, 1, 1), 2), (CAPTION_A,))
        proposals = [
            Proposal(Box3D((5, 5, 0), (1, 1, 1), 2), 0.9, ()),
            Proposal(Box3D((0, 0, 0), (1, 1, 1), 2), 0.5, ()),
        ]
        self.assertAlmostEqual(mean_average_precision([SceneResult(proposals, [obj])]), 0.5)


class ReportTests(SimpleTestCase):
    def setUp(self):
        scene = two_object_scene()
        self.scorer = CiderScorer([o.references for o in scene.objects])

    def test_ground_truth_as_predictions(self):
        """Test evaluating the annotations themselves reaches every metric's maximum."""
        scene = two_object_scene()
        scene.proposals = [Proposal(o.box, 1.0, o.references[0]) for o in scene.objects]
        report = evaluate([scene], self.scorer).as_dict()
        self.assertAlmostEqual(report["captions"]["cider"]["0.5"], 10.0, places=6)
        self.assertAlmostEqual(report["captions"]["bleu4"]["0.5"], 1.0)
        self.assertAlmostEqual(report["captions"]["rouge_l"]["0.5"], 1.0)
        self.assertEqual(report["n_objects"], 2)
        self.assertEqual(report["matched_proposals"], 2)

    def test_report_has_both_thresholds(self):
        """Test every caption metric is reported at 0.25 and 0.5."""
        report = evaluate([two_object_scene()], self.scorer).as_dict()
        for values in report["captions"].values():
            self.assertEqual(list(values), ["0.25", "0.5"])

    def test_order_invariance(self):
        """Test shuffling proposals leaves the report unchanged."""
        scene = two_object_scene()
        scene.proposals.append(Proposal(Box3D((0.1, 0, 0), (1, 1, 1), 1), 0.9, CAPTION_B))
        expected = evaluate([scene], self.scorer).as_dict()
        rng = random.Random(3)
        for _ in range(5):
            rng.shuffle(scene.proposals)
            self.assertEqual(evaluate([scene], self.scorer).as_dict(), expected)
