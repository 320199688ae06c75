"""Independent reference computations, written without calling the package."""

from fractions import Fraction


def charge_sum(caps_volts):
    """Exact common voltage of capacitors shorted together."""
    q = sum(Fraction(c) * Fraction(v) for c, v in caps_volts)
    c = sum(Fraction(c) for c, _ in caps_volts)
    return q / c


def dac_capacitors(x):
    """16 unit caps: bit k of x discharges 2**k caps, one cap never discharges."""
    volts = []
    for bit in (3, 2, 1, 0):
        volts += [0 if (x >> bit) & 1 else 1] * (1 << bit)
    volts.append(1)
    return [(1, v) for v in volts]


def abl_voltage(products, rho):
    """Exact ABL voltage (VDD = 1) for 16 CBLs holding the given 4-bit products."""
    nodes = [(1, Fraction(16 - p, 16)) for p in products]
    nodes += [(Fraction(rho), 1)] if rho else []
    return charge_sum(nodes)


def products_for_pmac(p):
    """A 16-entry product list (each 0..15) summing to p."""
    out = []
    for _ in range(16):
        take = min(15, p)
        out.append(take)
        p -= take
    assert p == 0
    return out


def flash_code(v, levels, offsets=None):
    offsets = offsets or [0.0] * len(levels)
    return sum(1 for ref, off in zip(levels, offsets) if v <= ref + off)


def int_matmul(X, W):
    X = [[int(v) for v in row] for row in X]
    W = [[int(v) for v in row] for row in W]
    return [[sum(X[i][k] * W[k][j] for k in range(len(W))) for j in range(len(W[0]))] for i in range(len(X))]


def conv2d_direct(x, w, stride=1, padding=0):
    """x: (B, C, H, W) nested lists/arrays; w: (Co, Ci, kh, kw). Plain loops."""
    B, C, H, Wd = len(x), len(x[0]), len(x[0][0]), len(x[0][0][0])
    Co, Ci, kh, kw = len(w), len(w[0]), len(w[0][0]), len(w[0][0][0])
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (Wd + 2 * padding - kw) // stride + 1
    out = [[[[0] * Wo for _ in range(Ho)] for _ in range(Co)] for _ in range(B)]
    for b in range(B):
        for o in range(Co):
            for i in range(Ho):
                for j in range(Wo):
                    s = 0
                    for c in range(Ci):
                        for di in range(kh):
                            for dj in range(kw):
                                yi = i * stride + di - padding
                                xj = j * stride + dj - padding
                                if 0 <= yi < H and 0 <= xj < Wd:
                                    s += int(x[b][c][yi][xj]) * int(w[o][c][di][dj])
                    out[b][o][i][j] = s
    return out
