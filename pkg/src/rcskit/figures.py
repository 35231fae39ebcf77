"""Self-contained SVG figures. Output is a pure function of the inputs (fixed
number formatting, no timestamps) so reruns are byte-identical."""

from __future__ import annotations

import math

import numpy as np

from .analysis import GaussianFit, RangeAzimuthImage, RcsGrid, histogram_bins

# viridis anchor colours, interpolated linearly
_CMAP = np.array(
    [
        [68, 1, 84],
        [72, 40, 120],
        [62, 74, 137],
        [49, 104, 142],
        [38, 130, 142],
        [31, 158, 137],
        [53, 183, 121],
        [109, 205, 89],
        [180, 222, 44],
        [253, 231, 37],
    ],
    dtype=float,
)
_NAN_FILL = "#d0d0d0"
_FONT = 'font-family="sans-serif" font-size="11"'


def _color(u: float) -> str:
    if not math.isfinite(u):
        return _NAN_FILL
    u = min(1.0, max(0.0, u)) * (len(_CMAP) - 1)
    i = min(int(u), len(_CMAP) - 2)
    c = _CMAP[i] + (u - i) * (_CMAP[i + 1] - _CMAP[i])
    return "#%02x%02x%02x" % tuple(int(round(v)) for v in c)


def _f(x: float) -> str:
    return f"{x:.2f}"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _doc(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n<rect width="{width}" height="{height}" fill="white"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _colorbar(x: float, y: float, h: float, lo: float, hi: float, unit: str) -> list[str]:
    out = []
    steps = 40
    for k in range(steps):
        u = 1.0 - (k + 0.5) / steps
        out.append(
            f'<rect x="{_f(x)}" y="{_f(y + k * h / steps)}" width="14" height="{_f(h / steps + 0.5)}" fill="{_color(u)}"/>'
        )
    out.append(f'<text x="{_f(x + 18)}" y="{_f(y + 8)}" {_FONT}>{hi:.1f}</text>')
    out.append(f'<text x="{_f(x + 18)}" y="{_f(y + h)}" {_FONT}>{lo:.1f}</text>')
    out.append(f'<text x="{_f(x)}" y="{_f(y - 6)}" {_FONT}>{_esc(unit)}</text>')
    return out


def _limits(vals: np.ndarray) -> tuple[float, float]:
    fin = vals[np.isfinite(vals)]
    if fin.size == 0:
        return 0.0, 1.0
    lo, hi = float(fin.min()), float(fin.max())
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def heatmap_svg(grid: RcsGrid, title: str | None = None) -> str:
    """Elevation (rows) by azimuth (columns) in dBsm; mirrored cells are hatched."""
    nt, npf = grid.shape
    cw, ch = max(8.0, 640.0 / npf), max(14.0, 220.0 / nt)
    left, top = 60.0, 40.0
    w = int(left + npf * cw + 90)
    h = int(top + nt * ch + 50)
    lo, hi = _limits(grid.rcs_dbsm)
    body = [
        '<defs><pattern id="mir" width="6" height="6" patternUnits="userSpaceOnUse">'
        '<path d="M0,6 L6,0" stroke="white" stroke-width="1" opacity="0.6"/></pattern></defs>',
        f'<text x="{_f(left)}" y="20" {_FONT} font-weight="bold">{_esc(title or f"RCS {grid.band_label} (dBsm)")}</text>',
    ]
    for i in range(nt):
        row = nt - 1 - i  # highest elevation at the top
        y = top + row * ch
        for j in range(npf):
            v = grid.rcs_dbsm[i, j]
            u = (v - lo) / (hi - lo) if math.isfinite(v) else float("nan")
            x = left + j * cw
            body.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cw)}" height="{_f(ch)}" fill="{_color(u)}"/>')
            if grid.mirrored[i, j]:
                body.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cw)}" height="{_f(ch)}" fill="url(#mir)"/>')
        body.append(f'<text x="{_f(left - 6)}" y="{_f(y + ch / 2 + 4)}" {_FONT} text-anchor="end">{grid.theta_values[i]:g}</text>')
    stride = max(1, int(math.ceil(npf / 18)))
    for j in range(0, npf, stride):
        x = left + (j + 0.5) * cw
        body.append(f'<text x="{_f(x)}" y="{_f(top + nt * ch + 14)}" {_FONT} text-anchor="middle">{grid.phi_values[j]:g}</text>')
    body.append(f'<text x="{_f(left + npf * cw / 2)}" y="{_f(top + nt * ch + 34)}" {_FONT} text-anchor="middle">azimuth phi (deg)</text>')
    body.append(
        f'<text x="16" y="{_f(top + nt * ch / 2)}" {_FONT} text-anchor="middle" '
        f'transform="rotate(-90 16 {_f(top + nt * ch / 2)})">elevation theta (deg)</text>'
    )
    body += _colorbar(left + npf * cw + 20, top, nt * ch, lo, hi, "dBsm")
    return _doc(w, h, body)


def histogram_svg(values, fit: GaussianFit, title: str = "Delta RCS") -> str:
    """Density histogram (Freedman-Diaconis bins) with the analytic fitted normal overlaid."""
    x = np.asarray(values, dtype=float)
    edges = histogram_bins(x)
    counts, _ = np.histogram(x, bins=edges)
    widths = np.diff(edges)
    dens = counts / (x.size * widths)
    span = max(3.0 * fit.sigma_db, 0.5)
    xlo = min(edges[0], fit.mu_db - span)
    xhi = max(edges[-1], fit.mu_db + span)
    xs = np.linspace(xlo, xhi, 200)
    pdf = fit.pdf(xs) if fit.sigma_db > 0 else np.zeros_like(xs)
    ymax = float(max(dens.max(initial=0.0), pdf.max(initial=0.0), 1e-12)) * 1.1
    left, top, pw, ph = 60.0, 40.0, 480.0, 260.0

    def px(v):
        return left + (v - xlo) / (xhi - xlo) * pw

    def py(v):
        return top + ph - v / ymax * ph

    body = [f'<text x="{_f(left)}" y="20" {_FONT} font-weight="bold">{_esc(title)}</text>']
    for e0, e1, d in zip(edges[:-1], edges[1:], dens):
        body.append(
            f'<rect x="{_f(px(e0))}" y="{_f(py(d))}" width="{_f(px(e1) - px(e0))}" height="{_f(top + ph - py(d))}" '
            'fill="#6baed6" stroke="white" stroke-width="0.5"/>'
        )
    if fit.sigma_db > 0:
        pts = " ".join(f"{_f(px(a))},{_f(py(b))}" for a, b in zip(xs, pdf))
        body.append(f'<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="2"/>')
    else:
        body.append(f'<line x1="{_f(px(fit.mu_db))}" y1="{_f(top)}" x2="{_f(px(fit.mu_db))}" y2="{_f(top + ph)}" stroke="#d62728" stroke-width="2"/>')
    body.append(f'<line x1="{_f(left)}" y1="{_f(top + ph)}" x2="{_f(left + pw)}" y2="{_f(top + ph)}" stroke="black"/>')
    body.append(f'<line x1="{_f(left)}" y1="{_f(top)}" x2="{_f(left)}" y2="{_f(top + ph)}" stroke="black"/>')
    for v in np.linspace(xlo, xhi, 6):
        body.append(f'<text x="{_f(px(v))}" y="{_f(top + ph + 14)}" {_FONT} text-anchor="middle">{v:.1f}</text>')
    body.append(f'<text x="{_f(left + pw / 2)}" y="{_f(top + ph + 32)}" {_FONT} text-anchor="middle">Delta RCS (dB)</text>')
    body.append(
        f'<text x="{_f(left + pw - 4)}" y="{_f(top + 14)}" {_FONT} text-anchor="end">'
        f"mu = {fit.mu_db:.2f} dB, sigma = {fit.sigma_db:.2f} dB, n = {fit.n_samples}</text>"
    )
    return _doc(int(left + pw + 30), int(top + ph + 50), body)


def _crop(image: RangeAzimuthImage, max_range_m: float, max_rows: int) -> tuple[np.ndarray, np.ndarray]:
    sel = np.abs(image.range_axis_m) <= max_range_m
    r = image.range_axis_m[sel]
    m = image.magnitude[sel]
    if r.size > max_rows:
        k = int(math.ceil(r.size / max_rows))
        n = (r.size // k) * k
        r = r[:n].reshape(-1, k).mean(axis=1)
        m = m[:n].reshape(-1, k, m.shape[1]).max(axis=1)
    return r, m


def _db_rel(m: np.ndarray, floor_db: float) -> np.ndarray:
    peak = float(m.max()) if m.size else 0.0
    if peak <= 0:
        return np.zeros_like(m)
    with np.errstate(divide="ignore"):
        d = 20.0 * np.log10(m / peak)
    return np.clip((d - floor_db) / -floor_db, 0.0, 1.0)


def range_azimuth_svg(image: RangeAzimuthImage, max_range_m: float = 2.0, floor_db: float = -40.0) -> str:
    """Azimuth (x) against centred range (y), magnitude in dB relative to the peak."""
    r, m = _crop(image, max_range_m, 120)
    u = _db_rel(m, floor_db)
    phi = image.phi_axis_deg
    left, top, pw, ph = 60.0, 40.0, 560.0, 320.0
    cw, ch = pw / phi.size, ph / max(r.size, 1)
    body = [f'<text x="{_f(left)}" y="20" {_FONT} font-weight="bold">range response |sqrt(sigma)| (dB rel. peak)</text>']
    for i in range(r.size):
        y = top + (r.size - 1 - i) * ch
        for j in range(phi.size):
            body.append(f'<rect x="{_f(left + j * cw)}" y="{_f(y)}" width="{_f(cw + 0.3)}" height="{_f(ch + 0.3)}" fill="{_color(u[i, j])}"/>')
    for v in np.linspace(phi[0], phi[-1], 7):
        x = left + (v - phi[0]) / max(phi[-1] - phi[0], 1e-9) * (pw - cw) + cw / 2
        body.append(f'<text x="{_f(x)}" y="{_f(top + ph + 14)}" {_FONT} text-anchor="middle">{v:.0f}</text>')
    for v in np.linspace(-max_range_m, max_range_m, 5):
        y = top + ph / 2 - v / max_range_m * ph / 2
        body.append(f'<text x="{_f(left - 6)}" y="{_f(y + 4)}" {_FONT} text-anchor="end">{v:.1f}</text>')
    body.append(f'<text x="{_f(left + pw / 2)}" y="{_f(top + ph + 32)}" {_FONT} text-anchor="middle">azimuth phi (deg)</text>')
    body.append(
        f'<text x="16" y="{_f(top + ph / 2)}" {_FONT} text-anchor="middle" '
        f'transform="rotate(-90 16 {_f(top + ph / 2)})">range from target centre (m)</text>'
    )
    body += _colorbar(left + pw + 20, top, ph, floor_db, 0.0, "dB")
    return _doc(int(left + pw + 90), int(top + ph + 50), body)


def polar_range_svg(image: RangeAzimuthImage, max_range_m: float = 2.0, floor_db: float = -40.0) -> str:
    """Polar image: angle is azimuth, radius is centred range offset by ``max_range_m``."""
    r, m = _crop(image, max_range_m, 48)
    u = _db_rel(m, floor_db)
    phi = image.phi_axis_deg
    if phi.size > 180:
        k = int(math.ceil(phi.size / 180))
        idx = np.arange(0, phi.size, k)
        phi, u = phi[idx], u[:, idx]
    size, cx, cy, rmax = 460, 230.0, 240.0, 190.0
    dr = rmax / max(r.size, 1)
    steps = np.diff(phi)
    dphi = float(np.median(steps)) if steps.size else 360.0
    body = [f'<text x="20" y="20" {_FONT} font-weight="bold">polar range response (dB rel. peak)</text>']
    for j, p in enumerate(phi):
        a0, a1 = math.radians(p - dphi / 2), math.radians(p + dphi / 2)
        for i in range(r.size):
            r0, r1 = i * dr, (i + 1) * dr
            pts = [
                (cx + r0 * math.cos(a0), cy - r0 * math.sin(a0)),
                (cx + r1 * math.cos(a0), cy - r1 * math.sin(a0)),
                (cx + r1 * math.cos(a1), cy - r1 * math.sin(a1)),
                (cx + r0 * math.cos(a1), cy - r0 * math.sin(a1)),
            ]
            d = "M" + " L".join(f"{_f(x)},{_f(y)}" for x, y in pts) + " Z"
            body.append(f'<path d="{d}" fill="{_color(u[i, j])}"/>')
    for frac, lab in ((0.5, "0 m"), (1.0, f"+{max_range_m:g} m")):
        body.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(rmax * frac)}" fill="none" stroke="white" stroke-width="0.6"/>')
        body.append(f'<text x="{_f(cx + rmax * frac + 2)}" y="{_f(cy - 2)}" {_FONT}>{lab}</text>')
    for a in range(0, 360, 30):
        x = cx + (rmax + 14) * math.cos(math.radians(a))
        y = cy - (rmax + 14) * math.sin(math.radians(a))
        body.append(f'<text x="{_f(x)}" y="{_f(y + 4)}" {_FONT} text-anchor="middle">{a}</text>')
    return _doc(size, size + 20, body)
