"""Render an explanation as highlighted text: static HTML or a terminal view.

Each token is shaded by |w| / max|w| over the explanation's weights, warm
for tokens pushing towards positive and cool for tokens pushing towards
negative. Tokens outside the selected feature set are left plain. The
rendered views show weights relative to the largest |w| only, so scaling
every weight by a positive constant leaves them unchanged; raw weights live
in the serialized explanation record.
"""
from __future__ import annotations

import html
from dataclasses import dataclass

from arsent.lime import Explanation
from arsent.text import preprocess

WARM = (255, 127, 14)
COOL = (31, 119, 180)
CLASS_NAMES = ("negative", "positive")


@dataclass(frozen=True)
class TokenMark:
    token: str
    weight: float  # relative: w / max|w|
    intensity: float  # |weight|, in [0, 1]

    @property
    def color(self) -> tuple[int, int, int] | None:
        if self.intensity == 0:
            return None
        return WARM if self.weight > 0 else COOL


@dataclass(frozen=True)
class ExplanationReport:
    marks: tuple[TokenMark, ...]
    ranked: tuple[tuple[str, float], ...]  # (token, signed w / max|w|), 3 decimals
    probabilities: tuple[float, float]
    local_fidelity: float
    review_id: str | None = None

    @classmethod
    def build(cls, review: str, explanation: Explanation) -> "ExplanationReport":
        weights = dict(explanation.token_weights)
        top = max((abs(w) for w in weights.values()), default=0.0)
        rel = {t: round(w / top, 3) if top > 0 else 0.0 for t, w in weights.items()}
        marks = tuple(TokenMark(t, rel.get(t, 0.0), abs(rel.get(t, 0.0))) for t in preprocess(review))
        ranked = tuple((t, rel[t]) for t, _ in explanation.token_weights)
        return cls(marks, ranked, explanation.predicted_probabilities,
                   explanation.local_fidelity, explanation.review_id)

    @property
    def predicted_class(self) -> int:
        return int(self.probabilities[1] >= 0.5)


def _rgba(color: tuple[int, int, int], alpha: float) -> str:
    return f"rgba({color[0]}, {color[1]}, {color[2]}, {alpha:.3f})"


_CSS = """
body { font-family: sans-serif; margin: 2em; max-width: 60em; }
.review { direction: rtl; font-size: 1.4em; line-height: 2em; }
.tok { padding: 0.1em 0.2em; border-radius: 0.2em; }
.bar { height: 1.2em; display: inline-block; vertical-align: middle; }
.track { width: 20em; background: #eee; display: inline-block; }
table { border-collapse: collapse; }
td, th { padding: 0.2em 0.8em; text-align: left; }
td.tok-cell { direction: rtl; }
"""


def render_html(report: ExplanationReport) -> str:
    esc = html.escape
    title = "Explanation" + (f" for review {esc(str(report.review_id))}" if report.review_id is not None else "")
    rows = []
    for cls, p in enumerate(report.probabilities):
        color = WARM if cls == 1 else COOL
        rows.append(
            f'<div>{CLASS_NAMES[cls]:<8} <span class="track"><span class="bar" '
            f'style="width: {100 * p:.1f}%; background: {_rgba(color, 1.0)}"></span></span> {p:.3f}</div>'
        )
    spans = []
    for m in report.marks:
        if m.color is None:
            spans.append(f'<span class="tok">{esc(m.token)}</span>')
        else:
            spans.append(
                f'<span class="tok" style="background: {_rgba(m.color, m.intensity)}" '
                f'title="{m.weight:+.3f}">{esc(m.token)}</span>'
            )
    ranked = "\n".join(
        f'<tr><td>{i}</td><td class="tok-cell">{esc(t)}</td><td>{w:+.3f}</td>'
        f'<td>{CLASS_NAMES[int(w > 0)] if w else "-"}</td></tr>'
        for i, (t, w) in enumerate(report.ranked, 1)
    )
    return f"""<!DOCTYPE html>
<html lang="ar">
<head>
<meta charset="utf-8">
<title>{title}</title>
<style>{_CSS}</style>
</head>
<body>
<h1>{title}</h1>
<h2>Prediction: {CLASS_NAMES[report.predicted_class]}</h2>
{chr(10).join(rows)}
<h2>Review</h2>
<p class="review">{" ".join(spans)}</p>
<h2>Token weights</h2>
<table>
<tr><th>#</th><th>token</th><th>relative weight</th><th>towards</th></tr>
{ranked}
</table>
<p>Local fidelity (weighted R&sup2;): {report.local_fidelity:.3f}</p>
</body>
</html>
"""


def _ansi_bg(color: tuple[int, int, int], intensity: float) -> str:
    # blend towards white so faint weights stay readable
    r, g, b = (round(255 - (255 - c) * intensity) for c in color)
    return f"\x1b[48;2;{r};{g};{b}m\x1b[30m"


def render_text(report: ExplanationReport, ansi: bool = False) -> str:
    """Plain listing; with ``ansi`` the review line carries 24-bit colour."""
    lines = []
    if report.review_id is not None:
        lines.append(f"review: {report.review_id}")
    lines.append(f"prediction: {CLASS_NAMES[report.predicted_class]}")
    for cls, p in enumerate(report.probabilities):
        lines.append(f"  P({CLASS_NAMES[cls]}) = {p:.3f}  {'#' * round(30 * p)}")
    words = []
    for m in report.marks:
        if m.color is None:
            words.append(m.token)
        elif ansi:
            words.append(f"{_ansi_bg(m.color, m.intensity)}{m.token}\x1b[0m")
        else:
            words.append(f"[{m.token}{'+' if m.weight > 0 else '-'}{m.intensity:.2f}]")
    lines.append("review: " + " ".join(words))
    lines.append("token weights (relative to largest):")
    width = max((len(t) for t, _ in report.ranked), default=0)
    for i, (t, w) in enumerate(report.ranked, 1):
        lines.append(f"  {i:>2}. {t:<{width}}  {w:+.3f}")
    lines.append(f"local fidelity: {report.local_fidelity:.3f}")
    return "\n".join(lines) + "\n"
