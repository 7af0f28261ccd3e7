"""Independent reference implementations used as test oracles.

These deliberately avoid calling into the package's own geometry and
tokenizer code.
"""

from __future__ import annotations

import math
import unicodedata


def ref_tokenize(text: str) -> list[str]:
    """Character-at-a-time tokenizer: separators are whitespace and commas."""
    tokens, cur = [], []
    for ch in text + " ":
        if ch == "," or ch.isspace():
            if cur:
                tokens.append("".join(cur))
                cur = []
        else:
            cur.append(ch)
    out = []
    for tok in tokens:
        chars = list(tok)
        while chars and unicodedata.category(chars[0])[0] == "P":
            chars.pop(0)
        while chars and unicodedata.category(chars[-1])[0] == "P":
            chars.pop()
        if chars:
            out.append("".join(c.lower() if c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ" else c for c in chars))
    return out


def ref_inside_ellipse(lon, lat, center, a, b, theta) -> bool:
    """Quadratic form in local meters; theta clockwise from north."""
    x = (lon - center[0]) * 111_320.0 * math.cos(math.radians(center[1]))
    y = (lat - center[1]) * 111_320.0
    # major axis direction (east, north) = (sin theta, cos theta)
    u = x * math.sin(theta) + y * math.cos(theta)
    v = x * math.cos(theta) - y * math.sin(theta)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def ref_in_convex(p, ring) -> bool:
    """Point in (or on) a convex CCW ring by half-plane tests."""
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) < -1e-12:
            return False
    return True
