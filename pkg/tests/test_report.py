import pytest

from arsent.lime import Explanation, LimeConfig
from arsent.report import COOL, WARM, ExplanationReport, render_html, render_text


def make_explanation(weights, probs=(0.3, 0.7), review_id=None):
    return Explanation(token_weights=tuple(weights), intercept=0.2, local_fidelity=0.81,
                       predicted_probabilities=probs, num_features=len(weights),
                       review_id=review_id, config=LimeConfig())


def scaled(exp, c):
    return make_explanation([(t, c * w) for t, w in exp.token_weights], exp.predicted_probabilities, exp.review_id)


REVIEW = "الفندق جيد لكن الحمام سيء"


def marks_by_token(report):
    return {m.token: m for m in report.marks}


class TestNormalization:
    def test_two_weights(self):
        rep = ExplanationReport.build("جيد سيء", make_explanation([("جيد", 0.4), ("سيء", -0.2)]))
        m = marks_by_token(rep)
        assert m["جيد"].color == WARM and m["جيد"].intensity == 1.0
        assert m["سيء"].color == COOL and m["سيء"].intensity == 0.5

    def test_all_zero_weights(self):
        rep = ExplanationReport.build("جيد سيء", make_explanation([("جيد", 0.0), ("سيء", 0.0)]))
        assert all(m.color is None and m.intensity == 0 for m in rep.marks)
        assert "rgba" not in render_html(rep).split("<h2>Review</h2>")[1].split("<h2>")[0]
        assert "[" not in render_text(rep).splitlines()[4]

    def test_unselected_tokens_plain(self):
        rep = ExplanationReport.build(REVIEW, make_explanation([("جيد", 0.3)]))
        m = marks_by_token(rep)
        assert m["الفندق"].color is None and m["جيد"].intensity == 1.0

    def test_repeated_token_shaded_everywhere(self):
        rep = ExplanationReport.build("جيد الفندق جيد", make_explanation([("جيد", 0.3), ("الفندق", -0.1)]))
        assert [m.intensity for m in rep.marks] == [1.0, pytest.approx(0.333), 1.0]

    def test_ranked_order_and_values(self):
        rep = ExplanationReport.build(REVIEW, make_explanation([("سيء", -0.5), ("جيد", 0.25), ("لكن", 0.05)]))
        assert rep.ranked == (("سيء", -1.0), ("جيد", 0.5), ("لكن", 0.1))

    def test_predicted_class(self):
        assert ExplanationReport.build("جيد", make_explanation([("جيد", 1)], (0.7, 0.3))).predicted_class == 0
        assert ExplanationReport.build("جيد", make_explanation([("جيد", 1)], (0.3, 0.7))).predicted_class == 1


class TestScaleInvariance:
    @pytest.mark.parametrize("c", [1e-6, 0.37, 3.0, 1e4])
    def test_rendered_views_unchanged(self, c):
        exp = make_explanation([("سيء", -0.31), ("جيد", 0.27), ("الحمام", 0.013)], review_id="5")
        a = ExplanationReport.build(REVIEW, exp)
        b = ExplanationReport.build(REVIEW, scaled(exp, c))
        assert render_html(a) == render_html(b)
        assert render_text(a) == render_text(b)
        assert render_text(a, ansi=True) == render_text(b, ansi=True)


class TestRendering:
    def test_html_structure(self):
        rep = ExplanationReport.build(REVIEW, make_explanation([("جيد", 0.4), ("سيء", -0.2)], review_id="9"))
        page = render_html(rep)
        assert page.startswith("<!DOCTYPE html>") and 'charset="utf-8"' in page
        assert "direction: rtl" in page
        assert f"rgba({WARM[0]}, {WARM[1]}, {WARM[2]}, 1.000)" in page
        assert f"rgba({COOL[0]}, {COOL[1]}, {COOL[2]}, 0.500)" in page
        assert "review 9" in page and "0.700" in page and "0.810" in page
        assert page.index(">جيد</td>") < page.index(">سيء</td>")

    def test_html_escapes(self):
        rep = ExplanationReport(marks=(), ranked=(("<b>", 1.0),), probabilities=(0.5, 0.5),
                                local_fidelity=1.0, review_id="<script>")
        page = render_html(rep)
        assert "<script>" not in page and "&lt;script&gt;" in page and "&lt;b&gt;" in page

    def test_text_plain(self):
        rep = ExplanationReport.build("جيد سيء الفندق", make_explanation([("جيد", 0.4), ("سيء", -0.2)]))
        text = render_text(rep)
        assert "[جيد+1.00] [سيء-0.50] الفندق" in text
        assert "\x1b" not in text
        assert "prediction: positive" in text

    def test_text_ansi(self):
        rep = ExplanationReport.build("جيد سيء", make_explanation([("جيد", 0.4), ("سيء", -0.2)]))
        text = render_text(rep, ansi=True)
        assert f"\x1b[48;2;{WARM[0]};{WARM[1]};{WARM[2]}m" in text
        assert "\x1b[0m" in text
