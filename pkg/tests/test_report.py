import json

import pytest

from wildreid.evaluate import McNemarResult
from wildreid.keyframes import KeyFrameSet, SelectionKind, SelectionMethod
from wildreid.report import (EvaluationReport, MethodReport, plot_motion_scores,
                             render_figures, report_csv, write_report)


@pytest.fixture
def report():
    per_method = {
        "kmeans": MethodReport("kmeans", 0.962,
                               {"t60": 0.984, "t80": 0.945, "vote": 0.984}, 816),
        "random5": MethodReport("random5", 0.945,
                                {"t60": 0.984, "t80": 0.945, "vote": 0.984}, 640),
    }
    mcnemar = (McNemarResult("kmeans", "random5", 3, 2, 1.0, 0.05, False),)
    return EvaluationReport("A", per_method, mcnemar)


class TestReportFiles:
    def test_json_round_trip(self, report):
        back = EvaluationReport.from_json(report.to_json())
        assert back.dataset_id == "A"
        assert back.per_method["kmeans"].image_accuracy == 0.962
        assert back.per_method["random5"].keyframe_count == 640
        assert back.mcnemar[0].p_value == 1.0
        assert back.mcnemar[0].n_discordant_ab is None

    def test_json_schema_fields(self, report):
        data = json.loads(report.to_json())
        assert set(data) == {"dataset_id", "per_method", "mcnemar"}
        method = data["per_method"]["kmeans"]
        assert set(method) == {"image_accuracy", "video_accuracy", "keyframe_count"}
        assert set(data["mcnemar"][0]) == {"a", "b", "p", "alpha_adj", "significant"}

    def test_csv_shape(self, report):
        lines = report_csv(report).splitlines()
        assert lines[0] == ("dataset_id,method,image_accuracy,video_accuracy_t60,"
                            "video_accuracy_t80,video_accuracy_vote,keyframe_count")
        assert len(lines) == 3
        assert lines[1].startswith("A,kmeans,0.962,")

    def test_write_report_files(self, report, tmp_path):
        paths = write_report(report, tmp_path)
        assert [p.name for p in paths] == ["report.json", "report.csv"]
        assert all(p.stat().st_size > 0 for p in paths)

    def test_writes_are_stable(self, report, tmp_path):
        write_report(report, tmp_path)
        first = (tmp_path / "report.json").read_bytes()
        write_report(report, tmp_path)
        assert (tmp_path / "report.json").read_bytes() == first


class TestFigures:
    def test_render_figures_writes_pngs(self, report, tmp_path):
        method = SelectionMethod(SelectionKind.KMEANS, 0)
        sets = {"kmeans": [KeyFrameSet("v1", method, (1, 5, 9), 3, 0.42),
                           KeyFrameSet("v2", method, (0, 2, 4), 3, 0.61)],
                "random5": [KeyFrameSet("v1", SelectionMethod(SelectionKind.RANDOM5, 0),
                                        (1, 2, 3, 4, 5))]}
        scores = {"v1": {0: 0.0, 1: 1.5, 2: 4.0}, "v2": {0: 0.0, 1: 0.2}}
        discarded = {"v1": {2}}
        written = render_figures(report, sets, scores, discarded, tmp_path)
        assert {p.name for p in written} == {"accuracy_by_method.png",
                                             "silhouette_by_method.png",
                                             "motion_scores.png"}
        for p in written:
            assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_motion_plot_without_discards(self, tmp_path):
        path = plot_motion_scores({"v1": {0: 0.0, 1: 2.0}}, {}, tmp_path / "m.png")
        assert path.exists()
