"""CSV, JSON and SVG writers.  Floats are written with repr, which round-trips exactly."""

import csv
import dataclasses
import io
import json
import math

import numpy as np


def to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        return out
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _num(obj.real), "im": _num(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def _num(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def dumps_json(obj):
    return json.dumps(to_jsonable(obj), indent=2)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return str(v)


def dumps_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def read_csv(text):
    """Header and rows with numeric fields converted to float."""
    rd = csv.reader(io.StringIO(text))
    header = next(rd)
    rows = []
    for r in rd:
        out = []
        for v in r:
            try:
                out.append(float(v))
            except ValueError:
                out.append(v)
        rows.append(out)
    return header, rows


def curve_csv(curve):
    extra = curve.meta.get("deriv_residual")
    header = curve.plane.split(",") + ["residual"] + (["deriv_residual"] if extra is not None else [])
    rows = []
    for i in range(len(curve)):
        row = [curve.x[i], curve.y[i], curve.residual[i]]
        if extra is not None:
            row.append(extra[i])
        rows.append(row)
    return dumps_csv(header, rows)


def _colour(rho, locked, lo, hi):
    # locked cells: saturated hue cycling by integer; others: grey ramp
    if locked:
        hues = [(31, 119, 180), (214, 39, 40), (44, 160, 44), (148, 103, 189),
                (255, 127, 14), (23, 190, 207), (227, 119, 194)]
        r, g, b = hues[int(round(rho)) % len(hues)]
        return f"rgb({r},{g},{b})"
    t = 0.5 if hi == lo else (rho - lo) / (hi - lo)
    v = int(90 + 140 * t)
    return f"rgb({v},{v},{v})"


def portrait_svg(B_values, A_values, rho, locked, overlay=(), cell=6, title=""):
    """Heat map of rho on the (B, A) grid; rows are A (top = largest A)."""
    nx, ny = len(B_values), len(A_values)
    margin, legend = 60, 60
    width, height = margin + nx * cell + legend, margin + ny * cell + 40
    lo, hi = float(np.nanmin(rho)), float(np.nanmax(rho))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<text x="{margin}" y="20" font-size="14">{title}</text>']
    for j in range(ny):
        y = margin + (ny - 1 - j) * cell - 20
        for i in range(nx):
            x = margin + i * cell
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                       f'fill="{_colour(rho[j, i], locked[j, i], lo, hi)}"/>')
    x0, x1 = margin, margin + nx * cell
    y0, y1 = margin - 20, margin - 20 + ny * cell
    out.append(f'<text x="{x0}" y="{y1 + 16}" font-size="11">B={B_values[0]:.3g}</text>')
    out.append(f'<text x="{x1 - 50}" y="{y1 + 16}" font-size="11">B={B_values[-1]:.3g}</text>')
    out.append(f'<text x="2" y="{y1}" font-size="11">A={A_values[0]:.3g}</text>')
    out.append(f'<text x="2" y="{y0 + 10}" font-size="11">A={A_values[-1]:.3g}</text>')
    db = (B_values[-1] - B_values[0]) / max(nx - 1, 1)
    da = (A_values[-1] - A_values[0]) / max(ny - 1, 1)
    for (B, A) in overlay:
        cx = x0 + (B - B_values[0]) / db * cell + cell / 2 if db else x0
        cy = y1 - ((A - A_values[0]) / da * cell + cell / 2) if da else y1
        out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="none" stroke="black"/>')
    lx = x1 + 15
    for k, r in enumerate(range(math.floor(lo), math.ceil(hi) + 1)):
        out.append(f'<rect x="{lx}" y="{y0 + 14 * k}" width="10" height="10" '
                   f'fill="{_colour(r, True, lo, hi)}"/>')
        out.append(f'<text x="{lx + 14}" y="{y0 + 14 * k + 9}" font-size="10">rho={r}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
