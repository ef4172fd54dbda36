"""Quadrature rules on the reference triangle and reference edge.

The reference triangle is (0,0), (1,0), (0,1); weights sum to its area 1/2.
All triangle rules have strictly positive weights (symmetric Gauss rules),
so degree 3 is served by the 6-point degree-4 rule.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss


def _orbit3(a):
    """Barycentric permutation orbit of (1-2a, a, a)."""
    return [(1 - 2 * a, a, a), (a, 1 - 2 * a, a), (a, a, 1 - 2 * a)]


def _orbit6(a, b):
    c = 1 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


# barycentric points and weights (weights sum to 1), per exactness degree
_RULES = {
    1: ([(1 / 3, 1 / 3, 1 / 3)], [1.0]),
    2: (_orbit3(1 / 6), [1 / 3] * 3),
    4: (
        _orbit3(0.445948490915965) + _orbit3(0.091576213509771),
        [0.223381589678011] * 3 + [0.109951743655322] * 3,
    ),
    5: (
        [(1 / 3, 1 / 3, 1 / 3)]
        + _orbit3(0.470142064105115)
        + _orbit3(0.101286507323456),
        [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3,
    ),
    6: (
        _orbit3(0.063089014491502)
        + _orbit3(0.249286745170910)
        + _orbit6(0.310352451033785, 0.053145049844816),
        [0.050844906370207] * 3
        + [0.116786275726379] * 3
        + [0.082851075618374] * 6,
    ),
}
_DEGREE_TO_RULE = {1: 1, 2: 2, 3: 4, 4: 4, 5: 5, 6: 6}


def triangle_rule(degree):
    """Return points (n, 2) and weights (n,) exact up to `degree` on the
    reference triangle. Weights sum to 1/2 and are all positive.

    Raises ValueError for degree outside {1, ..., 6}.
    """
    if degree not in _DEGREE_TO_RULE:
        raise ValueError(f"unsupported quadrature degree {degree}; need 1..6")
    bary, w = _RULES[_DEGREE_TO_RULE[degree]]
    bary = np.asarray(bary, dtype=float)
    pts = bary[:, 1:].copy()  # x = lambda_1, y = lambda_2
    wts = 0.5 * np.asarray(w, dtype=float)
    return pts, wts


def triangle_barycentric(degree):
    """Barycentric coordinates (n, 3) and weights (n,) of the rule."""
    pts, wts = triangle_rule(degree)
    lam0 = 1.0 - pts[:, 0] - pts[:, 1]
    return np.column_stack([lam0, pts]), wts


def edge_rule(npoints=3):
    """Gauss-Legendre points/weights on [0, 1]; exact to degree 2n-1."""
    x, w = leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w


def map_to_triangle(verts, pts):
    """Map reference points (n, 2) into the physical triangle verts (3, 2)."""
    verts = np.asarray(verts, dtype=float)
    return (
        verts[0]
        + np.outer(pts[:, 0], verts[1] - verts[0])
        + np.outer(pts[:, 1], verts[2] - verts[0])
    )
