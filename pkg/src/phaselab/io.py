"""File outputs: field snapshots, connection profiles, label rasters,
interface figures and canonical JSON.

JSON is written with sorted keys and repr-roundtrip floats so that a run
with the same config and seed produces byte-identical reports.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def _plain(obj):
    """Recursively convert numpy scalars/arrays for json.dumps."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    text = json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def write_field_csv(path, field) -> None:
    """Field snapshot: header (nx, ny, h, m, eps) then row-major node rows."""
    dom = field.domain
    m = field.u.shape[-1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nx={dom.nx} ny={dom.ny} h={float(dom.h)!r} m={m} "
                 f"eps={float(field.eps)!r}\n")
        flat = field.u.reshape(-1, m)
        for row in flat:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_field_csv(path):
    """Inverse of write_field_csv: returns (u, h, eps)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().lstrip("#").split()
        meta = dict(kv.split("=") for kv in header)
        rows = [list(map(float, line.split(","))) for line in fh if line.strip()]
    nx, ny, m = int(meta["nx"]), int(meta["ny"]), int(meta["m"])
    u = np.asarray(rows).reshape(ny, nx, m)
    return u, float(meta["h"]), float(meta["eps"])


def write_connection_csv(path, profile) -> None:
    """Connection profile: columns t, U_1..U_m."""
    t = profile.times
    m = profile.samples.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t," + ",".join(f"U_{d + 1}" for d in range(m)) + "\n")
        for tk, row in zip(t, profile.samples):
            fh.write(repr(float(tk)) + ","
                     + ",".join(repr(float(v)) for v in row) + "\n")


def write_labels_pgm(path, labels) -> None:
    """ASCII PGM of the cell labels; outside cells are 0, phases 1..N."""
    img = np.asarray(labels, dtype=int) + 1
    ny, nx = img.shape
    lines = [f"P2\n{nx} {ny}\n{int(img.max() if img.size else 1)}\n"]
    for row in img[::-1]:        # top row first
        lines.append(" ".join(str(int(v)) for v in row) + "\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


_PHASE_FILLS = ("#d8e6f4", "#f4ddd8", "#def4d8", "#f4f0d8", "#ecd8f4")
_PAIR_STROKES = ("#1f4e79", "#79341f", "#2e791f", "#79651f", "#5e1f79")


def write_interfaces_svg(path, pm, junctions, size: int = 720) -> None:
    """Static figure: phase cells, interface polylines, junction markers."""
    dom = pm.domain
    x0, x1 = float(dom.xs[0]), float(dom.xs[-1])
    y0, y1 = float(dom.ys[0]), float(dom.ys[-1])
    span = max(x1 - x0, y1 - y0)
    sc = size / span

    def tx(x):
        return (x - x0) * sc

    def ty(y):
        return (y1 - y) * sc     # svg y grows downward

    out = ['<?xml version="1.0" encoding="UTF-8"?>\n'
           f'<svg xmlns="http://www.w3.org/2000/svg" '
           f'width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">\n'
           f'<rect width="{size}" height="{size}" fill="white"/>\n']

    # phase regions: run-length rectangles per cell row
    cl = pm.labels
    h = dom.h
    for cy in range(cl.shape[0]):
        row = cl[cy]
        cx = 0
        while cx < row.size:
            lab = row[cx]
            if lab < 0:
                cx += 1
                continue
            run = cx
            while run < row.size and row[run] == lab:
                run += 1
            fill = _PHASE_FILLS[int(lab) % len(_PHASE_FILLS)]
            x = tx(dom.xs[cx])
            y = ty(dom.ys[cy + 1])
            out.append(f'<rect x="{x:.2f}" y="{y:.2f}" '
                       f'width="{(run - cx) * h * sc:.2f}" '
                       f'height="{h * sc:.2f}" fill="{fill}"/>\n')
            cx = run

    # domain outline
    if dom.shape == "disk":
        r = dom.params["radius"] * sc
        out.append(f'<circle cx="{tx(0):.2f}" cy="{ty(0):.2f}" r="{r:.2f}" '
                   f'fill="none" stroke="#555" stroke-width="1.5"/>\n')
    else:
        out.append(f'<rect x="{tx(x0):.2f}" y="{ty(y1):.2f}" '
                   f'width="{(x1 - x0) * sc:.2f}" '
                   f'height="{(y1 - y0) * sc:.2f}" '
                   f'fill="none" stroke="#555" stroke-width="1.5"/>\n')

    for idx, pair in enumerate(pm.pairs):
        stroke = _PAIR_STROKES[idx % len(_PAIR_STROKES)]
        for seg in pm.interface_segments[pair]:
            out.append(f'<line x1="{tx(seg[0, 0]):.2f}" '
                       f'y1="{ty(seg[0, 1]):.2f}" '
                       f'x2="{tx(seg[1, 0]):.2f}" '
                       f'y2="{ty(seg[1, 1]):.2f}" '
                       f'stroke="{stroke}" stroke-width="1.6"/>\n')

    for jr in junctions:
        out.append(f'<circle cx="{tx(jr.location[0]):.2f}" '
                   f'cy="{ty(jr.location[1]):.2f}" r="5" fill="none" '
                   f'stroke="#c2181b" stroke-width="2"/>\n')
    out.append("</svg>\n")
    Path(path).write_text("".join(out), encoding="utf-8")
